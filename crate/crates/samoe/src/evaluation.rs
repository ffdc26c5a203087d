//! Analysis metrics: accuracy (overall and per subset), per-expert accuracy,
//! top-k management accuracy, and coverage-at-k across experts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::Subset;
use crate::error::Result;
use crate::model::{forward_eval, ModelConfig};
use crate::params::ParamSet;
use crate::tensor::{argmax, argmin, cross_entropy};
use crate::training::TrainExample;

/// Which attention vector combines the experts at inference.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionChoice {
    Manager,
    Supervisor,
}

/// Everything needed to recompute the aggregates for one example.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExampleRecord {
    pub example_id: String,
    pub label: u8,
    pub subset: Subset,
    pub prediction: u8,
    /// The attention vector used for combination.
    pub attention: Vec<f64>,
    pub expert_correct: Vec<bool>,
    pub expert_ce: Vec<f64>,
    pub p_final: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_examples: usize,
    pub attention: AttentionChoice,
    pub overall_accuracy: f64,
    pub simple_accuracy: Option<f64>,
    pub complex_accuracy: Option<f64>,
    pub per_expert_accuracy: Vec<f64>,
    /// (k, rate) for k in 1..=min(3, n_e).
    pub management_topk: Vec<(usize, f64)>,
    /// coverage_at_k for k in 1..=n_e.
    pub coverage_at_k: Vec<f64>,
    pub records: Vec<ExampleRecord>,
}

fn rate(hits: usize, total: usize) -> f64 {
    hits as f64 / total as f64
}

/// Fraction correct overall and per subset; empty subsets report as absent.
pub fn accuracy(
    preds: &[u8],
    labels: &[u8],
    subsets: &[Subset],
) -> (f64, Option<f64>, Option<f64>) {
    assert_eq!(preds.len(), labels.len());
    assert_eq!(preds.len(), subsets.len());
    let mut hits = 0;
    let mut simple = (0usize, 0usize);
    let mut complex = (0usize, 0usize);
    for ((p, l), s) in preds.iter().zip(labels).zip(subsets) {
        let hit = p == l;
        hits += usize::from(hit);
        match s {
            Subset::Simple => {
                simple.1 += 1;
                simple.0 += usize::from(hit);
            }
            Subset::Complex => {
                complex.1 += 1;
                complex.0 += usize::from(hit);
            }
            Subset::Unknown => {}
        }
    }
    let sub = |(h, t): (usize, usize)| (t > 0).then(|| rate(h, t));
    (rate(hits, preds.len()), sub(simple), sub(complex))
}

/// Indices of the k largest attention components, ties broken by lower index.
fn topk_indices(attention: &[f64], k: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..attention.len()).collect();
    order.sort_by(|&a, &b| {
        attention[b]
            .partial_cmp(&attention[a])
            .expect("finite attention")
            .then(a.cmp(&b))
    });
    order.truncate(k);
    order
}

/// Fraction of examples whose smallest-loss expert appears among the k
/// highest-attention experts. Ties in attention break toward the lower
/// expert index, as do ties in cross-entropy.
pub fn management_topk(attention: &[Vec<f64>], expert_ce: &[Vec<f64>], k: usize) -> f64 {
    assert_eq!(attention.len(), expert_ce.len());
    assert!(!attention.is_empty());
    assert!(k <= attention[0].len());
    let hits = attention
        .iter()
        .zip(expert_ce)
        .filter(|(a, ce)| topk_indices(a, k).contains(&argmin(ce)))
        .count();
    rate(hits, attention.len())
}

/// Fraction of examples at least k experts verify correctly.
pub fn coverage_at_k(expert_correct: &[Vec<bool>], k: usize) -> f64 {
    assert!(!expert_correct.is_empty());
    let hits = expert_correct
        .iter()
        .filter(|row| row.iter().filter(|&&c| c).count() >= k)
        .count();
    rate(hits, expert_correct.len())
}

/// p_final = sum_i a_i p_i in plain floats.
pub fn combine_probs(attention: &[f64], probs: &[Vec<f64>]) -> Vec<f64> {
    let k = probs[0].len();
    let mut out = vec![0.0; k];
    for (w, p) in attention.iter().zip(probs) {
        for c in 0..k {
            out[c] += w * p[c];
        }
    }
    out
}

/// Run the model over a split and aggregate every report metric.
pub fn evaluate(
    params: &ParamSet,
    cfg: &ModelConfig,
    examples: &[TrainExample],
    attention: AttentionChoice,
) -> Result<EvalReport> {
    let supervisor = attention == AttentionChoice::Supervisor;
    let records: Vec<ExampleRecord> = examples
        .par_iter()
        .map(|ex| -> Result<ExampleRecord> {
            let out = forward_eval(params, cfg, &ex.seq, supervisor)?;
            let a = match attention {
                AttentionChoice::Manager => out.a_m.clone(),
                AttentionChoice::Supervisor => out.a_s.clone().expect("supervisor scores"),
            };
            let p_final = combine_probs(&a, &out.p);
            let prediction = argmax(&p_final) as u8;
            let expert_correct: Vec<bool> = out
                .p
                .iter()
                .map(|p| argmax(p) as u8 == ex.label)
                .collect();
            let expert_ce: Vec<f64> = out
                .p
                .iter()
                .map(|p| cross_entropy(p, ex.label as usize))
                .collect();
            Ok(ExampleRecord {
                example_id: ex.example_id.clone(),
                label: ex.label,
                subset: ex.subset,
                prediction,
                attention: a,
                expert_correct,
                expert_ce,
                p_final,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(aggregate(records, attention))
}

/// Build the report from example-level records; the aggregates are pure
/// functions of the records, so reports can be recomputed from disk.
pub fn aggregate(records: Vec<ExampleRecord>, attention: AttentionChoice) -> EvalReport {
    assert!(!records.is_empty(), "cannot aggregate an empty evaluation");
    let n_e = records[0].expert_correct.len();
    let preds: Vec<u8> = records.iter().map(|r| r.prediction).collect();
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    let subsets: Vec<Subset> = records.iter().map(|r| r.subset).collect();
    let (overall, simple, complex) = accuracy(&preds, &labels, &subsets);

    let per_expert_accuracy: Vec<f64> = (0..n_e)
        .map(|i| {
            rate(
                records.iter().filter(|r| r.expert_correct[i]).count(),
                records.len(),
            )
        })
        .collect();

    let attn: Vec<Vec<f64>> = records.iter().map(|r| r.attention.clone()).collect();
    let ces: Vec<Vec<f64>> = records.iter().map(|r| r.expert_ce.clone()).collect();
    let management_topk_rates: Vec<(usize, f64)> = (1..=n_e.min(3))
        .map(|k| (k, management_topk(&attn, &ces, k)))
        .collect();

    let correct: Vec<Vec<bool>> = records.iter().map(|r| r.expert_correct.clone()).collect();
    let coverage: Vec<f64> = (1..=n_e).map(|k| coverage_at_k(&correct, k)).collect();

    EvalReport {
        n_examples: records.len(),
        attention,
        overall_accuracy: overall,
        simple_accuracy: simple,
        complex_accuracy: complex,
        per_expert_accuracy,
        management_topk: management_topk_rates,
        coverage_at_k: coverage,
        records,
    }
}

/// Plain-text summary table.
pub fn render_summary(report: &EvalReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "examples: {}  attention: {:?}\n",
        report.n_examples, report.attention
    ));
    out.push_str(&format!(
        "accuracy: overall {:.4}",
        report.overall_accuracy
    ));
    if let Some(s) = report.simple_accuracy {
        out.push_str(&format!("  simple {s:.4}"));
    }
    if let Some(c) = report.complex_accuracy {
        out.push_str(&format!("  complex {c:.4}"));
    }
    out.push('\n');
    out.push_str("per-expert accuracy:");
    for (i, a) in report.per_expert_accuracy.iter().enumerate() {
        out.push_str(&format!("  e{i} {a:.4}"));
    }
    out.push('\n');
    out.push_str("management top-k:");
    for (k, r) in &report.management_topk {
        out.push_str(&format!("  top-{k} {r:.4}"));
    }
    out.push('\n');
    out.push_str("coverage at k:");
    for (k, c) in report.coverage_at_k.iter().enumerate() {
        out.push_str(&format!("  k={} {c:.4}", k + 1));
    }
    out.push('\n');
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_examples() {
        let subsets = vec![Subset::Unknown; 4];
        let (overall, _, _) = accuracy(&[1, 0, 1, 1], &[1, 0, 1, 1], &subsets);
        assert_eq!(overall, 1.0);
        let (overall, _, _) = accuracy(&[0, 1, 0, 0], &[1, 0, 1, 1], &subsets);
        assert_eq!(overall, 0.0);
        let (overall, _, _) = accuracy(&[1, 0, 1, 0], &[1, 0, 1, 1], &subsets);
        assert_eq!(overall, 0.75);
    }

    #[test]
    fn empty_subset_absent_not_zero() {
        let (_, simple, complex) = accuracy(&[1], &[1], &[Subset::Simple]);
        assert_eq!(simple, Some(1.0));
        assert_eq!(complex, None);
    }

    #[test]
    fn topk_spec_case() {
        let a = vec![vec![0.4, 0.35, 0.25]];
        let m = vec![vec![0.9, 0.1, 0.5]];
        // argmin(m) = 1; top-1 of a picks 0 -> miss; top-2 -> hit.
        assert_eq!(management_topk(&a, &m, 1), 0.0);
        assert_eq!(management_topk(&a, &m, 2), 1.0);
        // k = n_e is always a hit.
        assert_eq!(management_topk(&a, &m, 3), 1.0);
    }

    #[test]
    fn topk_onehot_at_argmin() {
        let a = vec![vec![0.0, 1.0, 0.0], vec![1.0, 0.0, 0.0]];
        let m = vec![vec![0.5, 0.1, 0.9], vec![0.05, 0.4, 0.2]];
        assert_eq!(management_topk(&a, &m, 1), 1.0);
    }

    #[test]
    fn topk_ties_break_low_index() {
        // Uniform attention: top-1 is expert 0 by tie-break.
        let a = vec![vec![0.5, 0.5]];
        assert_eq!(management_topk(&a, &[vec![0.3, 0.1]], 1), 0.0);
        assert_eq!(management_topk(&a, &[vec![0.1, 0.3]], 1), 1.0);
        // Tied cross-entropy: best expert is index 0.
        let m = vec![vec![0.2, 0.2]];
        let sharp = vec![vec![0.9, 0.1]];
        assert_eq!(management_topk(&sharp, &m, 1), 1.0);
    }

    #[test]
    fn coverage_row_counts() {
        // Row sums 5, 3, 0 with n_e = 5.
        let rows = vec![
            vec![true; 5],
            vec![true, true, true, false, false],
            vec![false; 5],
        ];
        assert!((coverage_at_k(&rows, 1) - 2.0 / 3.0).abs() < 1e-12);
        assert!((coverage_at_k(&rows, 5) - 1.0 / 3.0).abs() < 1e-12);
        let all = vec![vec![true; 5]; 4];
        for k in 1..=5 {
            assert_eq!(coverage_at_k(&all, k), 1.0);
        }
    }

    #[test]
    fn coverage_monotone_nonincreasing() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<bool>> = (0..50)
            .map(|_| (0..5).map(|_| rng.gen::<bool>()).collect())
            .collect();
        let mut last = 1.0 + 1e-9;
        for k in 1..=5 {
            let c = coverage_at_k(&rows, k);
            assert!(c <= last);
            last = c;
        }
    }

    #[test]
    fn aggregates_recomputable_from_records() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let records: Vec<ExampleRecord> = (0..40)
            .map(|i| {
                let n_e = 3;
                let label = rng.gen_range(0..2u8);
                let attention: Vec<f64> =
                    crate::tensor::softmax(&(0..n_e).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
                ExampleRecord {
                    example_id: format!("e{i}"),
                    label,
                    subset: if i % 2 == 0 {
                        Subset::Simple
                    } else {
                        Subset::Complex
                    },
                    prediction: rng.gen_range(0..2u8),
                    attention,
                    expert_correct: (0..n_e).map(|_| rng.gen::<bool>()).collect(),
                    expert_ce: (0..n_e).map(|_| rng.gen_range(0.0..2.0)).collect(),
                    p_final: vec![0.5, 0.5],
                }
            })
            .collect();
        let report = aggregate(records.clone(), AttentionChoice::Manager);
        let again = aggregate(report.records.clone(), AttentionChoice::Manager);
        assert_eq!(report.overall_accuracy, again.overall_accuracy);
        assert_eq!(report.per_expert_accuracy, again.per_expert_accuracy);
        assert_eq!(report.management_topk, again.management_topk);
        assert_eq!(report.coverage_at_k, again.coverage_at_k);
        // Top-k accuracy nondecreasing in k.
        for w in report.management_topk.windows(2) {
            assert!(w[0].1 <= w[1].1);
        }
    }
}
