//! Multi-head graph attention network scoring dual-graph nodes.
//!
//! Hidden layers compute `h'_i = concat_k ReLU(sum_j alpha^k_ij W^k h_j)`
//! with `alpha^k_ij = softmax_j LeakyReLU(a^k . [W^k h_i ; W^k h_j])` over
//! the neighbourhood of `i` including `i`. The output layer averages its
//! heads and applies a sigmoid. Gradients are computed by hand.

mod graph;
mod layer;
mod loss;
mod model;
mod optim;
mod train;

pub use graph::GatGraph;
pub use layer::{AttentionRow, GatLayer, LayerCache, LayerGrads, LayerKind};
pub use loss::{bce_loss, SCORE_CLAMP};
pub use model::{GatConfig, GatModel, ModelCache};
pub use optim::{adam_step, AdamState};
pub use train::{train, TrainHistory, TrainSample};

#[cfg(test)]
mod tests {
    use super::*;

    fn path3(x: Vec<f64>, dim: usize) -> GatGraph {
        GatGraph::new(dim, x, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn singleton_neighbourhood_has_unit_attention() {
        let mut l = GatLayer::zeros(2, 3, 2, LayerKind::Hidden, 0.2);
        l.w[0] = vec![0.3, -0.1, 0.2, 0.5, 1.0, -0.7];
        l.a[0] = vec![0.4, 0.1, -0.9, 0.2, 0.3, 0.8];
        let g = GatGraph::new(2, vec![1.0, -2.0], &[]).unwrap();
        let att = l.attention_coefficients(&g, g.features()).unwrap();
        assert_eq!(att[0][0], vec![(0, 1.0)]);
    }

    #[test]
    fn identical_neighbours_split_evenly() {
        let mut l = GatLayer::zeros(1, 1, 1, LayerKind::Hidden, 0.2);
        l.w[0] = vec![0.7];
        l.a[0] = vec![0.3, -1.1];
        let g = GatGraph::new(1, vec![0.5, 2.0, 2.0], &[(0, 1), (0, 2)]).unwrap();
        let att = l.attention_coefficients(&g, g.features()).unwrap();
        let row = &att[0][0];
        let a1 = row.iter().find(|(j, _)| *j == 1).unwrap().1;
        let a2 = row.iter().find(|(j, _)| *j == 2).unwrap().1;
        assert_eq!(a1, a2);
    }

    #[test]
    fn hand_softmax_quarter_three_quarters() {
        // z = h; logits a_dst * z_j with a_src = 0 give e = 0 and ln 3
        let mut l = GatLayer::zeros(1, 1, 1, LayerKind::Hidden, 0.2);
        l.w[0] = vec![1.0];
        l.a[0] = vec![0.0, 1.0];
        let g = GatGraph::new(1, vec![0.0, 3f64.ln()], &[(0, 1)]).unwrap();
        let att = l.attention_coefficients(&g, g.features()).unwrap();
        let row = &att[0][0];
        let get = |j: usize| row.iter().find(|(k, _)| *k == j).unwrap().1;
        assert!((get(0) - 0.25).abs() < 1e-15);
        assert!((get(1) - 0.75).abs() < 1e-15);
    }

    #[test]
    fn zero_weights_give_zero_hidden_and_half_scores() {
        let g = path3(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2);
        let hidden = GatLayer::zeros(2, 4, 3, LayerKind::Hidden, 0.2);
        assert!(hidden.forward(&g, g.features()).unwrap().output().iter().all(|v| *v == 0.0));
        let model = GatModel::zeros(&GatConfig::default(), 2).unwrap();
        assert_eq!(model.predict(&g).unwrap(), vec![0.5; 3]);
    }

    #[test]
    fn single_node_layer_is_relu_of_linear_map() {
        let mut l = GatLayer::zeros(2, 2, 1, LayerKind::Hidden, 0.2);
        l.w[0] = vec![1.0, 2.0, -3.0, 0.5];
        l.a[0] = vec![0.1, 0.2, 0.3, 0.4];
        let g = GatGraph::new(2, vec![1.5, -1.0], &[]).unwrap();
        let out = l.forward(&g, g.features()).unwrap();
        assert_eq!(out.output(), &[0.0f64.max(1.5 - 2.0), 0.0f64.max(-4.5 - 0.5)]);
    }

    #[test]
    fn three_node_path_two_heads_by_hand() {
        let mut l = GatLayer::zeros(1, 1, 2, LayerKind::Output, 0.2);
        l.w = vec![vec![0.5], vec![-1.0]];
        l.a = vec![vec![1.0, -1.0], vec![0.3, 0.7]];
        let h = [1.0, 2.0, -1.0];
        let g = path3(h.to_vec(), 1);
        let nbrs: [&[usize]; 3] = [&[0, 1], &[0, 1, 2], &[1, 2]];
        let lrelu = |x: f64| if x > 0.0 { x } else { 0.2 * x };
        let head = |w: f64, asrc: f64, adst: f64, i: usize| -> f64 {
            let e: Vec<f64> = nbrs[i].iter().map(|&j| lrelu(asrc * w * h[i] + adst * w * h[j])).collect();
            let z: f64 = e.iter().map(|v| v.exp()).sum();
            nbrs[i].iter().zip(&e).map(|(&j, ej)| ej.exp() / z * w * h[j]).sum()
        };
        let out = l.forward(&g, g.features()).unwrap();
        for i in 0..3 {
            let mean = 0.5 * (head(0.5, 1.0, -1.0, i) + head(-1.0, 0.3, 0.7, i));
            let expect = 1.0 / (1.0 + (-mean).exp());
            assert!((out.output()[i] - expect).abs() < 1e-12);
        }
    }

    #[test]
    fn bce_examples() {
        let (l, _) = bce_loss(&[0.5], &[0.5]).unwrap();
        assert!((l - 2f64.ln()).abs() < 1e-15);
        let (l, _) = bce_loss(&[0.9], &[1.0]).unwrap();
        assert!((l + 0.9f64.ln()).abs() < 1e-15);
        let (l, _) = bce_loss(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]).unwrap();
        assert!(l <= -(1.0 - 1e-7f64).ln() + 1e-18);
        assert!(bce_loss(&[0.5], &[0.5, 0.5]).is_err());
    }

    #[test]
    fn adam_examples() {
        let mut p = vec![1.0, -2.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[0.0, 0.0], &mut st, 0.1, 0.0).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);

        let mut p = vec![0.0, 0.0];
        let mut st = AdamState::new(2);
        adam_step(&mut p, &[3.0, -0.2], &mut st, 1e-3, 0.0).unwrap();
        // first step: m_hat = g, v_hat = g^2
        assert!((p[0] + 1e-3 * 3.0 / (3.0 + 1e-8)).abs() < 1e-15);
        assert!((p[1] - 1e-3 * 0.2 / (0.2 + 1e-8)).abs() < 1e-15);

        let mut p = vec![2.0];
        let mut st = AdamState::new(1);
        adam_step(&mut p, &[0.0], &mut st, 0.01, 0.5).unwrap();
        assert!((p[0] - 2.0 * (1.0 - 0.005)).abs() < 1e-15);
        assert!(adam_step(&mut p, &[0.0, 1.0], &mut st, 0.01, 0.5).is_err());
    }

    #[test]
    fn checkpoint_round_trip_is_exact_after_quantizing() {
        let mut m = GatModel::new(&GatConfig::default(), 4, 11).unwrap();
        m.quantize_f32();
        let bytes = m.to_checkpoint_bytes().unwrap();
        let back = GatModel::from_checkpoint_bytes(&bytes).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_checkpoint_bytes().unwrap(), bytes);
        assert!(GatModel::from_checkpoint_bytes(&bytes[..bytes.len() - 1]).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = GatModel::new(&GatConfig::default(), 4, 1).unwrap();
        let g = path3(vec![1.0, 2.0, 3.0], 1);
        assert!(m.predict(&g).is_err());
    }
}
