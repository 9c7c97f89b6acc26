//! File-based pipeline: synthetic scenes, heatmaps, tracing, dual graphs,
//! training, pruning and evaluation, each stage leaving a manifest of the
//! hashes it read and wrote.

mod manifest;
mod stages;
mod sweep;
pub mod text;

pub use manifest::{derive_seed, sha256_file, sha256_hex, splitmix64, FileHash, Manifest, Root};
pub use stages::{
    load_eval_summary, load_prune_summary, scenes, EvalSummary, Layout, PruneSummary, Runner, Scene, ScenePruneStats,
    SceneReports, Split, Stage, DUAL_JSON, DUAL_SCORED_JSON, GT_SWC, HEATMAP_CVOL, MODEL_CKPT, PRUNED_SWC,
    PRUNE_SUMMARY, REPORT_BASELINE, REPORT_PRUNED, SUMMARY_TXT, TRACED_SWC, TRACE_REPORT, TRAIN_HISTORY,
};
pub use sweep::{run_sweep, SweepRow, SweepTable};
