use crate::pruneval::MetricReport;

/// Fixed-point rendering with `digits` significant digits.
pub fn sig(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return x.to_string();
    }
    if x == 0.0 {
        return format!("{:.*}", digits - 1, 0.0);
    }
    let mag = x.abs().log10().floor() as i64;
    let decimals = (digits as i64 - 1 - mag).max(0) as usize;
    format!("{x:.decimals$}")
}

pub const SIG_DIGITS: usize = 9;

fn opt(x: Option<f64>) -> String {
    x.map(|v| sig(v, SIG_DIGITS)).unwrap_or_else(|| "n/a".into())
}

pub fn metric_cells(r: &MetricReport) -> [String; 6] {
    [
        sig(r.precision, SIG_DIGITS),
        sig(r.recall, SIG_DIGITS),
        sig(r.f1, SIG_DIGITS),
        opt(r.sd_mm),
        opt(r.ssd_mm),
        opt(r.pssd),
    ]
}

pub const METRIC_NAMES: [&str; 6] = ["precision", "recall", "f1", "sd_mm", "ssd_mm", "pssd"];

/// Left-aligned columns separated by two spaces.
pub fn table(header: &[String], rows: &[Vec<String>]) -> String {
    let cols = header.len();
    let mut width = vec![0; cols];
    for row in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        for (w, c) in width.iter_mut().zip(row) {
            *w = (*w).max(c.len());
        }
    }
    let mut out = String::new();
    for row in std::iter::once(header).chain(rows.iter().map(|r| r.as_slice())) {
        let line: Vec<String> = row.iter().zip(&width).map(|(c, w)| format!("{c:<w$}")).collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Baseline versus pruned, one metric per row.
pub fn summary(baseline: &MetricReport, pruned: &MetricReport) -> String {
    let b = metric_cells(baseline);
    let p = metric_cells(pruned);
    let rows: Vec<Vec<String>> =
        METRIC_NAMES.iter().enumerate().map(|(k, m)| vec![m.to_string(), b[k].clone(), p[k].clone()]).collect();
    let mut out = table(&["metric".into(), "baseline".into(), "pruned".into()], &rows);
    out.push_str(&format!(
        "nodes  baseline {}/{} caught, gt {}/{} caught; pruned {}/{} caught, gt {}/{} caught\n",
        baseline.pred_caught,
        baseline.pred_nodes,
        baseline.gt_caught,
        baseline.gt_nodes,
        pruned.pred_caught,
        pruned.pred_nodes,
        pruned.gt_caught,
        pruned.gt_nodes
    ));
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(sig(0.123456789123, 9), "0.123456789");
        assert_eq!(sig(12.3456789123, 9), "12.3456789");
        assert_eq!(sig(1.0, 9), "1.00000000");
        assert_eq!(sig(0.0, 9), "0.00000000");
        assert_eq!(sig(0.00123456789123, 9), "0.00123456789");
        assert_eq!(sig(123456789012.0, 9), "123456789012");
    }
}
