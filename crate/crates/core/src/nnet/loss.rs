//! Scalar loss entry points.

use super::graph::{norm, Graph, ParamStore};
use super::model::PAD;
use super::tensor::Tensor;

pub const DEFAULT_LAMBDA: f64 = 0.1;

/// Mean negative log-likelihood of `gt` under `logits` (`[.., V]`, one row
/// per target), skipping PAD targets.
pub fn ce_loss(logits: &Tensor, gt: &[usize]) -> f64 {
    let store = ParamStore::new();
    let mut g = Graph::new(&store);
    let l = g.input(logits.clone());
    let loss = g.cross_entropy(l, gt, PAD);
    g.value(loss).item()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimLossValue {
    pub value: f64,
    pub zero_vector: bool,
}

/// `1 - cos(fs, fr)`; a zero vector on either side yields 1 and is flagged.
pub fn sim_loss(fs: &[f64], fr: &[f64]) -> SimLossValue {
    assert_eq!(fs.len(), fr.len(), "feature widths differ");
    let (a, b) = (norm(fs), norm(fr));
    if a == 0.0 || b == 0.0 {
        return SimLossValue {
            value: 1.0,
            zero_vector: true,
        };
    }
    let cos = fs.iter().zip(fr).map(|(x, y)| x * y).sum::<f64>() / (a * b);
    SimLossValue {
        value: 1.0 - cos.clamp(-1.0, 1.0),
        zero_vector: false,
    }
}

pub fn total_loss(l_stroke: f64, l_radical: f64, l_sim: f64, lambda: f64) -> f64 {
    l_stroke + l_radical + lambda * l_sim
}
