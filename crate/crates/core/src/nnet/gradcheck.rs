//! Central finite-difference verification of analytic gradients.

use rand_distr::{Distribution, Normal};

use super::graph::{Graph, ParamStore};
use super::model::ModelState;
use super::tensor::Tensor;
use super::NnetError;

#[derive(Clone, Debug)]
pub struct MicroBatch {
    pub images: Tensor,
    pub strokes: Vec<Vec<usize>>,
    pub radicals: Option<Vec<Vec<usize>>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Max over parameter tensors of `‖a − cd‖ / max(‖a‖, ‖cd‖, 1e-8)`.
    pub max_rel_err: f64,
    pub worst_param: String,
    /// Same ratio taken per scalar element; dominated by round-off for
    /// elements whose gradient is near the finite-difference noise floor.
    pub max_elem_rel_err: f64,
    pub worst_elem: (String, usize),
    pub checked: usize,
    /// Elements whose ±eps probe changed a ReLU or max-pool decision and
    /// were re-probed with a smaller step.
    pub kink_retries: usize,
}

/// Adds `N(0, std)` noise to every rank-1 parameter (biases, layer-norm
/// gains and shifts) so no ReLU input or max-pool window sits exactly on a
/// kink. Zero-initialized biases otherwise produce exact zeros that finite
/// differences cannot probe.
pub fn jitter_biases(model: &mut ModelState, std: f64, seed: u64) {
    let dist = Normal::new(0.0, std).expect("positive std");
    let mut rng = crate::seeding::rng_for(seed, &[0x4a49_5454]);
    for id in model.params.ids().collect::<Vec<_>>() {
        if model.params.get(id).shape().len() == 1 {
            for v in model.params.get_mut(id).data_mut() {
                *v += dist.sample(&mut rng);
            }
        }
    }
}

fn rel_err(a: f64, cd: f64) -> f64 {
    (a - cd).abs() / a.abs().max(cd.abs()).max(1e-8)
}

fn eval(model: &ModelState, batch: &MicroBatch) -> Result<(f64, u64), NnetError> {
    let mut g = Graph::new(&model.params);
    let (_, parts) = model.loss(&mut g, &batch.images, &batch.strokes, batch.radicals.as_deref())?;
    Ok((parts.total, g.kink_signature()))
}

const MIN_EPS: f64 = 1e-8;

/// Compares backprop gradients with central differences for every parameter element.
pub fn grad_check(model: &ModelState, batch: &MicroBatch, eps: f64) -> Result<GradCheckReport, NnetError> {
    let (analytic, sig0) = {
        let mut g = Graph::new(&model.params);
        let (loss, _) = model.loss(&mut g, &batch.images, &batch.strokes, batch.radicals.as_deref())?;
        (g.backward(loss).into_params(), g.kink_signature())
    };
    let mut probe = model.clone();
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_param: String::new(),
        max_elem_rel_err: 0.0,
        worst_elem: (String::new(), 0),
        checked: 0,
        kink_retries: 0,
    };
    for id in model.params.ids() {
        let name = model.params.name(id).to_string();
        let n = model.params.get(id).len();
        let (mut diff2, mut a2, mut cd2) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let a = analytic[id.index()].as_ref().map_or(0.0, |g| g[i]);
            if !a.is_finite() {
                return Err(NnetError::NonFiniteGradient { param: name, index: i });
            }
            let orig = model.params.get(id).data()[i];
            let mut h = eps;
            let cd = loop {
                probe.params.get_mut(id).data_mut()[i] = orig + h;
                let (up, su) = eval(&probe, batch)?;
                probe.params.get_mut(id).data_mut()[i] = orig - h;
                let (down, sd) = eval(&probe, batch)?;
                probe.params.get_mut(id).data_mut()[i] = orig;
                if (su == sig0 && sd == sig0) || h / 10.0 < MIN_EPS {
                    break (up - down) / (2.0 * h);
                }
                report.kink_retries += 1;
                h /= 10.0;
            };
            report.checked += 1;
            let e = rel_err(a, cd);
            if e > report.max_elem_rel_err {
                report.max_elem_rel_err = e;
                report.worst_elem = (name.clone(), i);
            }
            diff2 += (a - cd) * (a - cd);
            a2 += a * a;
            cd2 += cd * cd;
        }
        let e = diff2.sqrt() / a2.sqrt().max(cd2.sqrt()).max(1e-8);
        if e > report.max_rel_err || report.worst_param.is_empty() {
            report.max_rel_err = e;
            report.worst_param = name;
        }
    }
    Ok(report)
}

/// Same check for the similarity loss alone, with respect to both feature batches `[N, d]`.
pub fn grad_check_sim(fs: &Tensor, fr: &Tensor, eps: f64) -> f64 {
    let store = ParamStore::new();
    let loss_of = |a: &Tensor, b: &Tensor| {
        let mut g = Graph::new(&store);
        let (va, vb) = (g.input(a.clone()), g.input(b.clone()));
        let l = g.sim_loss(va, vb);
        g.value(l).item()
    };
    let mut g = Graph::new(&store);
    let (va, vb) = (g.input(fs.clone()), g.input(fr.clone()));
    let l = g.sim_loss(va, vb);
    let grads = g.backward(l);
    let mut worst: f64 = 0.0;
    for (which, analytic) in [(0, grads.of(va)), (1, grads.of(vb))] {
        let analytic = analytic.expect("sim_loss touches both inputs");
        for i in 0..fs.len() {
            let (mut a, mut b) = (fs.clone(), fr.clone());
            let t = if which == 0 { &mut a } else { &mut b };
            let orig = t.data()[i];
            t.data_mut()[i] = orig + eps;
            let up = loss_of(&a, &b);
            let t = if which == 0 { &mut a } else { &mut b };
            t.data_mut()[i] = orig - eps;
            let down = loss_of(&a, &b);
            worst = worst.max(rel_err(analytic[i], (up - down) / (2.0 * eps)));
        }
    }
    worst
}
