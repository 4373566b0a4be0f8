use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{detect_syllables, match_boundaries, syllabic_distance, BoundarySet, SnnParams};
use crate::error::{Error, Result};
use crate::frontend::N_CEPS;

/// Static cepstra of one utterance and its reference boundaries.
#[derive(Debug, Clone)]
pub struct LabeledUtterance {
    pub cepstra: Vec<Vec<f64>>,
    pub shift_ms: f64,
    pub reference: BoundarySet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnnTrainReport {
    pub initial_cost: f64,
    pub final_cost: f64,
    pub evaluations: usize,
}

/// Summed syllabic distance over a corpus.
pub fn corpus_cost(corpus: &[LabeledUtterance], params: &SnnParams) -> Result<f64> {
    let costs: Vec<f64> = corpus
        .par_iter()
        .map(|u| {
            let detected = detect_syllables(&u.cepstra, u.shift_ms, params)?;
            Ok(syllabic_distance(&detected, &u.reference))
        })
        .collect::<Result<_>>()?;
    Ok(costs.iter().sum())
}

/// Precision/recall F-score of detected boundaries pooled over a corpus.
pub fn boundary_f_score(pairs: &[(BoundarySet, BoundarySet)], tolerance_ms: f64) -> f64 {
    let (mut hits, mut n_det, mut n_ref) = (0usize, 0usize, 0usize);
    for (detected, reference) in pairs {
        hits += match_boundaries(detected, reference, tolerance_ms).len();
        n_det += detected.len();
        n_ref += reference.len();
    }
    if hits == 0 {
        return 0.0;
    }
    let precision = hits as f64 / n_det as f64;
    let recall = hits as f64 / n_ref as f64;
    2.0 * precision * recall / (precision + recall)
}

// Searched coordinates: channel weights, then kernel shape, gain and bias.
const N_KERNEL: usize = 6;

fn to_vector(p: &SnnParams) -> Vec<f64> {
    let mut v = p.channel_weights.clone();
    let k = &p.kernel;
    v.extend([
        k.sigma_center_ms,
        k.sigma_surround_ms,
        k.surround_weight,
        k.lead_ms,
        k.gain,
        k.bias,
    ]);
    v
}

fn from_vector(base: &SnnParams, v: &[f64]) -> SnnParams {
    let mut p = base.clone();
    p.channel_weights = v[..N_CEPS].to_vec();
    let k = &mut p.kernel;
    let rest = &v[N_CEPS..];
    k.sigma_center_ms = rest[0].clamp(2.0, 100.0);
    k.sigma_surround_ms = rest[1].clamp(k.sigma_center_ms + 1.0, 200.0);
    k.surround_weight = rest[2].clamp(0.0, 2.0);
    k.lead_ms = rest[3].clamp(-60.0, 60.0);
    k.gain = rest[4].clamp(0.05, 20.0);
    k.bias = rest[5].clamp(-5.0, 5.0);
    p
}

fn initial_steps() -> Vec<f64> {
    let mut s = vec![0.25; N_CEPS];
    s.extend([5.0, 10.0, 0.1, 5.0, 0.25, 0.1]);
    debug_assert_eq!(s.len(), N_CEPS + N_KERNEL);
    s
}

/// Derivative-free search over channel weights and kernel parameters:
/// seeded random restarts around the initial point, then coordinate
/// descent with step halving. `budget` counts cost evaluations; the
/// result never costs more than `init` on the training corpus.
pub fn train_snn(
    corpus: &[LabeledUtterance],
    init: &SnnParams,
    budget: usize,
    seed: u64,
) -> Result<(SnnParams, SnnTrainReport)> {
    init.validate()?;
    if corpus.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if budget == 0 {
        return Ok((
            init.clone(),
            SnnTrainReport {
                initial_cost: f64::NAN,
                final_cost: f64::NAN,
                evaluations: 0,
            },
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluations = 0;
    let mut eval = |v: &[f64]| -> Result<f64> {
        evaluations += 1;
        corpus_cost(corpus, &from_vector(init, v))
    };

    let mut best = to_vector(init);
    let initial_cost = eval(&best)?;
    let mut best_cost = initial_cost;
    let mut steps = initial_steps();

    let restarts = budget / 5;
    for _ in 0..restarts.min(budget - 1) {
        let candidate: Vec<f64> = best
            .iter()
            .zip(&steps)
            .map(|(x, s)| x + rng.random_range(-2.0..=2.0) * s)
            .collect();
        let cost = eval(&candidate)?;
        if cost < best_cost {
            best_cost = cost;
            best = to_vector(&from_vector(init, &candidate));
        }
    }

    let mut used = 1 + restarts.min(budget - 1);
    'search: while used < budget {
        let mut improved = false;
        for i in 0..best.len() {
            for dir in [1.0, -1.0] {
                if used >= budget {
                    break 'search;
                }
                let mut candidate = best.clone();
                candidate[i] += dir * steps[i];
                used += 1;
                let cost = eval(&candidate)?;
                if cost < best_cost {
                    best_cost = cost;
                    best = to_vector(&from_vector(init, &candidate));
                    improved = true;
                    break;
                }
            }
        }
        if !improved {
            steps.iter_mut().for_each(|s| *s *= 0.5);
            if steps[0] < 1e-3 {
                break;
            }
        }
    }

    Ok((
        from_vector(init, &best),
        SnnTrainReport {
            initial_cost,
            final_cost: best_cost,
            evaluations,
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_corpus() -> Vec<LabeledUtterance> {
        // c0 dips every 250 ms; boundaries sit at the dips
        (0..3)
            .map(|u| {
                let n = 150 + 10 * u;
                let cepstra = (0..n)
                    .map(|i| {
                        let t = i as f64 * 16.0 + 12.5;
                        let mut c = vec![0.0; N_CEPS];
                        c[0] = -(2.0 * std::f64::consts::PI * (t - 40.0 * u as f64) / 250.0).cos();
                        c[1] = 0.3 * (i as f64 * 0.7).sin();
                        c
                    })
                    .collect();
                let span = (n - 1) as f64 * 16.0 + 25.0;
                let reference = (0..)
                    .map(|j| 40.0 * u as f64 + 250.0 * j as f64)
                    .skip_while(|&t| t < 100.0)
                    .take_while(|&t| t < span - 100.0)
                    .collect();
                LabeledUtterance {
                    cepstra,
                    shift_ms: 16.0,
                    reference: BoundarySet::new(reference).unwrap(),
                }
            })
            .collect()
    }

    #[test]
    fn zero_budget_returns_init() {
        let init = SnnParams::default();
        let (p, report) = train_snn(&toy_corpus(), &init, 0, 1).unwrap();
        assert_eq!(p, init);
        assert_eq!(report.evaluations, 0);
    }

    #[test]
    fn training_never_worsens_and_is_reproducible() {
        let corpus = toy_corpus();
        let init = SnnParams::default();
        let (a, report) = train_snn(&corpus, &init, 30, 7).unwrap();
        assert!(report.final_cost <= report.initial_cost);
        assert!(report.evaluations <= 30);
        assert_eq!(corpus_cost(&corpus, &a).unwrap(), report.final_cost);
        let (b, _) = train_snn(&corpus, &init, 30, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn f_score_examples() {
        let r = BoundarySet::new(vec![100.0, 300.0]).unwrap();
        assert_eq!(boundary_f_score(&[(r.clone(), r.clone())], 50.0), 1.0);
        let d = BoundarySet::new(vec![120.0, 500.0]).unwrap();
        assert!((boundary_f_score(&[(d, r.clone())], 50.0) - 0.5).abs() < 1e-12);
        assert_eq!(boundary_f_score(&[(BoundarySet::default(), r)], 50.0), 0.0);
    }
}
