//! Exact and relaxed Gumbel top-K subset sampling.
//!
//! Perturbing unnormalized logits with i.i.d. Gumbel noise and keeping the K
//! largest entries draws a K-subset distributed as K-fold sampling without
//! replacement from `softmax(logits)`; with K = 1 this is the Gumbel-max
//! trick. [`relaxed_top_k`] is the differentiable surrogate used by the
//! actor update: K successive softmax rounds where already-claimed mass is
//! suppressed through an additive `log(1 - p)` term, producing a soft mask
//! that sums to exactly K. [`anneal_sigma`] is the geometric exploration
//! schedule for the noise scale.

use alloc::vec;
use alloc::vec::Vec;

use libm::{exp, log, log1p, pow};

use crate::mask::Mask;
use crate::rng::Rng;
use crate::Error;

/// Floor applied to the `log(1 - p)` suppression term.
const LOG_CLIP: f64 = -1e9;

/// Noise-scale annealing and relaxation temperature.
#[derive(Debug, Clone, PartialEq)]
pub struct GumbelConfig {
    pub sigma_start: f64,
    pub sigma_end: f64,
    pub anneal_steps: usize,
    pub relax_temperature: f64,
}

impl Default for GumbelConfig {
    fn default() -> Self {
        GumbelConfig {
            sigma_start: 2.0,
            sigma_end: 0.2,
            anneal_steps: 10_000,
            relax_temperature: 1.0,
        }
    }
}

impl GumbelConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.sigma_start >= self.sigma_end && self.sigma_end > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "need sigma_start >= sigma_end > 0, got {} and {}",
                self.sigma_start,
                self.sigma_end
            )));
        }
        if self.anneal_steps < 1 {
            return Err(Error::InvalidConfig("anneal_steps must be >= 1".into()));
        }
        if !(self.relax_temperature > 0.0) {
            return Err(Error::InvalidConfig(alloc::format!(
                "relax_temperature must be > 0, got {}",
                self.relax_temperature
            )));
        }
        Ok(())
    }
}

/// Gumbel(0, sigma) sample from a uniform draw: `-log(-log(u)) * sigma`.
pub fn gumbel_from_uniform(u: f64, sigma: f64) -> f64 {
    -log(-log(u)) * sigma
}

/// Vector of n i.i.d. Gumbel(0, sigma) samples. Uniform draws are clamped
/// away from {0, 1} so the transform stays finite.
pub fn sample_gumbel(n: usize, sigma: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| gumbel_from_uniform(rng.open_unit(), sigma)).collect()
}

/// Mask of the K largest entries; ties broken toward the lowest index.
pub fn top_k(scores: &[f64], k: usize) -> crate::Result<Mask> {
    let n = scores.len();
    if k == 0 || k > n {
        return Err(Error::Dimension {
            what: "top-k selection size",
            expected: n,
            got: k,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_unstable_by(|&a, &b| {
        scores[b].total_cmp(&scores[a]).then(a.cmp(&b))
    });
    order.truncate(k);
    Mask::new(n, order)
}

/// Differentiable top-K surrogate: result of [`relaxed_top_k`], holding the
/// soft mask and the per-round softmax distributions needed for the reverse
/// pass.
#[derive(Debug, Clone)]
pub struct RelaxedTopK {
    /// Soft mask in [0, 1]^N summing to K.
    pub soft: Vec<f64>,
    tau: f64,
    rounds: Vec<Vec<f64>>,
}

fn softmax_scaled(alpha: &[f64], tau: f64) -> Vec<f64> {
    let max = alpha.iter().fold(f64::NEG_INFINITY, |m, &v| m.max(v));
    let exps: Vec<f64> = alpha.iter().map(|&v| exp((v - max) / tau)).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|&e| e / sum).collect()
}

/// Runs K successive softmax rounds over `logits + noise`, suppressing mass
/// already claimed by earlier rounds via an additive `log(1 - p)` term
/// (clipped below at -1e9). The returned soft mask is the sum of the round
/// distributions and is differentiable with respect to the logits.
pub fn relaxed_top_k(
    logits: &[f64],
    noise: &[f64],
    k: usize,
    tau: f64,
) -> crate::Result<RelaxedTopK> {
    let n = logits.len();
    if noise.len() != n {
        return Err(Error::Dimension {
            what: "noise length",
            expected: n,
            got: noise.len(),
        });
    }
    if k == 0 || k > n {
        return Err(Error::Dimension {
            what: "relaxed top-k selection size",
            expected: n,
            got: k,
        });
    }
    if !(tau > 0.0) {
        return Err(Error::InvalidConfig(alloc::format!(
            "temperature must be > 0, got {tau}"
        )));
    }
    let mut alpha: Vec<f64> = logits.iter().zip(noise).map(|(&l, &e)| l + e).collect();
    let mut soft = vec![0.0; n];
    let mut rounds = Vec::with_capacity(k);
    for round in 0..k {
        let p = softmax_scaled(&alpha, tau);
        for (s, &pi) in soft.iter_mut().zip(&p) {
            *s += pi;
        }
        if round + 1 < k {
            for (a, &pi) in alpha.iter_mut().zip(&p) {
                let term = if pi >= 1.0 { LOG_CLIP } else { log1p(-pi).max(LOG_CLIP) };
                *a += term;
            }
        }
        rounds.push(p);
    }
    Ok(RelaxedTopK { soft, tau, rounds })
}

impl RelaxedTopK {
    /// Gradient of `sum_i grad_soft[i] * soft[i]` with respect to the logits.
    pub fn backward(&self, grad_soft: &[f64]) -> Vec<f64> {
        let n = self.soft.len();
        assert_eq!(grad_soft.len(), n, "gradient length mismatch");
        let k = self.rounds.len();
        // g_alpha holds the gradient with respect to alpha^{j+1}.
        let mut g_alpha = vec![0.0; n];
        for j in (0..k).rev() {
            let p = &self.rounds[j];
            // Gradient into this round's distribution: directly from the
            // soft-mask sum, plus the suppression term feeding later rounds.
            let mut g_p: Vec<f64> = grad_soft.to_vec();
            if j + 1 < k {
                for i in 0..n {
                    if p[i] < 1.0 {
                        g_p[i] += g_alpha[i] * (-1.0 / (1.0 - p[i]));
                    }
                }
            }
            // Softmax backward at alpha^j / tau.
            let dot: f64 = g_p.iter().zip(p).map(|(&g, &pi)| g * pi).sum();
            let mut g_alpha_j: Vec<f64> = (0..n)
                .map(|i| p[i] * (g_p[i] - dot) / self.tau)
                .collect();
            if j + 1 < k {
                for i in 0..n {
                    g_alpha_j[i] += g_alpha[i];
                }
            }
            g_alpha = g_alpha_j;
        }
        g_alpha
    }
}

/// Geometric interpolation from `sigma_start` to `sigma_end` over
/// `anneal_steps`, constant afterwards.
pub fn anneal_sigma(step: usize, cfg: &GumbelConfig) -> f64 {
    let frac = (step as f64 / cfg.anneal_steps as f64).min(1.0);
    cfg.sigma_start * pow(cfg.sigma_end / cfg.sigma_start, frac)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn gumbel_formula_fixed_points() {
        let e_inv = exp(-1.0);
        assert!(gumbel_from_uniform(e_inv, 3.7).abs() < 1e-12);
        assert!(gumbel_from_uniform(e_inv, 0.0).abs() < 1e-12);
        let u = exp(-exp(-1.0));
        for sigma in [0.5, 1.0, 2.0] {
            assert!((gumbel_from_uniform(u, sigma) - sigma).abs() < 1e-12);
        }
    }

    #[test]
    fn gumbel_mean_is_euler_mascheroni_times_sigma() {
        let mut rng = Rng::seed_from_u64(17);
        let sigma = 1.3;
        let n = 1_000_000;
        let mean: f64 = sample_gumbel(n, sigma, &mut rng).iter().sum::<f64>() / n as f64;
        assert!((mean - 0.5772156649 * sigma).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn top_k_examples() {
        let m = top_k(&[3.0, 1.0, 2.0], 2).unwrap();
        assert_eq!(m.indices(), &[0, 2]);
        let m = top_k(&[5.0, 5.0, 5.0], 2).unwrap();
        assert_eq!(m.indices(), &[0, 1]);
        let m = top_k(&[1.0, 2.0], 2).unwrap();
        assert_eq!(m.indices(), &[0, 1]);
        assert!(top_k(&[1.0], 2).is_err());
    }

    #[test]
    fn relaxed_sums_to_k() {
        let mut rng = Rng::seed_from_u64(23);
        for _ in 0..50 {
            let n = 2 + rng.below(10) as usize;
            let k = 1 + rng.below(n as u64) as usize;
            let logits: Vec<f64> = (0..n).map(|_| rng.range_f64(-3.0, 3.0)).collect();
            let noise = sample_gumbel(n, 1.0, &mut rng);
            let r = relaxed_top_k(&logits, &noise, k, 1.0).unwrap();
            let sum: f64 = r.soft.iter().sum();
            assert!((sum - k as f64).abs() < 1e-6, "sum {sum} vs k {k}");
            // Per-round probabilities stack, so entries can overshoot 1
            // slightly at moderate temperature; they stay in [0, K].
            assert!(r.soft.iter().all(|&v| v >= 0.0 && v <= k as f64 + 1e-9));
        }
    }

    #[test]
    fn low_temperature_recovers_hard_mask() {
        let logits = [4.0, 1.0, 3.0, 0.0, 2.0];
        let noise = [0.0; 5];
        let r = relaxed_top_k(&logits, &noise, 3, 0.01).unwrap();
        let hard = top_k(&logits, 3).unwrap().dense();
        for i in 0..5 {
            assert!((r.soft[i] - hard[i]).abs() < 1e-3, "i={i}: {} vs {}", r.soft[i], hard[i]);
        }
    }

    #[test]
    fn symmetric_logits_split_evenly() {
        let r = relaxed_top_k(&[0.7, 0.7], &[0.0, 0.0], 1, 1.0).unwrap();
        assert!((r.soft[0] - 0.5).abs() < 1e-12);
        assert!((r.soft[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn relaxed_gradient_matches_finite_differences() {
        let mut rng = Rng::seed_from_u64(31);
        for case in 0..20 {
            let n = 3 + rng.below(6) as usize;
            let k = 1 + rng.below((n - 1) as u64) as usize;
            let logits: Vec<f64> = (0..n).map(|_| rng.range_f64(-2.0, 2.0)).collect();
            let noise: Vec<f64> = sample_gumbel(n, 1.0, &mut rng);
            let w: Vec<f64> = (0..n).map(|_| rng.range_f64(-1.0, 1.0)).collect();
            let r = relaxed_top_k(&logits, &noise, k, 1.0).unwrap();
            let grad = r.backward(&w);
            let h = 1e-6;
            for i in 0..n {
                let mut lp = logits.clone();
                lp[i] += h;
                let mut lm = logits.clone();
                lm[i] -= h;
                let fp: f64 = relaxed_top_k(&lp, &noise, k, 1.0)
                    .unwrap()
                    .soft
                    .iter()
                    .zip(&w)
                    .map(|(&s, &wi)| s * wi)
                    .sum();
                let fm: f64 = relaxed_top_k(&lm, &noise, k, 1.0)
                    .unwrap()
                    .soft
                    .iter()
                    .zip(&w)
                    .map(|(&s, &wi)| s * wi)
                    .sum();
                let fd = (fp - fm) / (2.0 * h);
                let rel = (grad[i] - fd).abs() / (grad[i].abs() + fd.abs()).max(1e-3);
                assert!(rel < 1e-4, "case {case} i {i}: analytic {} fd {fd}", grad[i]);
            }
        }
    }

    #[test]
    fn anneal_endpoints_and_midpoint() {
        let cfg = GumbelConfig {
            anneal_steps: 1000,
            ..GumbelConfig::default()
        };
        assert!((anneal_sigma(0, &cfg) - 2.0).abs() < 1e-12);
        assert!((anneal_sigma(1000, &cfg) - 0.2).abs() < 1e-12);
        assert!((anneal_sigma(5000, &cfg) - 0.2).abs() < 1e-12);
        let mid = anneal_sigma(500, &cfg);
        assert!((mid - (2.0f64 * 0.2).sqrt()).abs() < 1e-12, "mid {mid}");
    }

    #[test]
    fn sigma_to_zero_converges_to_argmax_subset() {
        let logits = [3.0, 2.0, 1.0, 0.0];
        let want = top_k(&logits, 2).unwrap();
        let mut rng = Rng::seed_from_u64(37);
        for sigma in [1e-3, 1e-6] {
            let mut agree = 0;
            for _ in 0..1000 {
                let noise = sample_gumbel(4, sigma, &mut rng);
                let scores: Vec<f64> =
                    logits.iter().zip(&noise).map(|(&l, &e)| l + e).collect();
                if top_k(&scores, 2).unwrap() == want {
                    agree += 1;
                }
            }
            assert_eq!(agree, 1000, "sigma {sigma}");
        }
    }

    /// Brute-force probability of each K-subset under K-fold sampling
    /// without replacement from `probs` (sum over insertion orders).
    fn subset_probs(probs: &[f64], k: usize) -> HashMap<Vec<usize>, f64> {
        fn recurse(
            probs: &[f64],
            chosen: &mut Vec<usize>,
            remaining_mass: f64,
            p_acc: f64,
            k: usize,
            out: &mut HashMap<Vec<usize>, f64>,
        ) {
            if chosen.len() == k {
                let mut key = chosen.clone();
                key.sort_unstable();
                *out.entry(key).or_insert(0.0) += p_acc;
                return;
            }
            for i in 0..probs.len() {
                if chosen.contains(&i) {
                    continue;
                }
                chosen.push(i);
                recurse(
                    probs,
                    chosen,
                    remaining_mass - probs[i],
                    p_acc * probs[i] / remaining_mass,
                    k,
                    out,
                );
                chosen.pop();
            }
        }
        let mut out = HashMap::new();
        recurse(probs, &mut Vec::new(), 1.0, 1.0, k, &mut out);
        out
    }

    #[test]
    fn top_k_subsets_follow_sampling_without_replacement() {
        let logits = [0.9, -0.3, 0.1, 1.4, -1.0];
        let probs = softmax_scaled(&logits, 1.0);
        let expected = subset_probs(&probs, 2);
        let draws = 100_000;
        let mut rng = Rng::seed_from_u64(41);
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for _ in 0..draws {
            let noise = sample_gumbel(5, 1.0, &mut rng);
            let scores: Vec<f64> = logits.iter().zip(&noise).map(|(&l, &e)| l + e).collect();
            let m = top_k(&scores, 2).unwrap();
            *counts.entry(m.indices().to_vec()).or_insert(0) += 1;
        }
        let chi2: f64 = expected
            .iter()
            .map(|(subset, &p)| {
                let observed = *counts.get(subset).unwrap_or(&0) as f64;
                let want = p * draws as f64;
                (observed - want) * (observed - want) / want
            })
            .sum();
        // 10 subsets -> 9 degrees of freedom; 0.01 critical value.
        assert!(chi2 < 21.666, "chi2 {chi2}");
    }

    #[test]
    fn gumbel_max_recovers_categorical() {
        let logits = [0.4, -0.8, 1.1, 0.0, -0.2];
        let probs = softmax_scaled(&logits, 1.0);
        let draws = 100_000;
        let mut rng = Rng::seed_from_u64(43);
        let mut counts = [0usize; 5];
        for _ in 0..draws {
            let noise = sample_gumbel(5, 1.0, &mut rng);
            let scores: Vec<f64> = logits.iter().zip(&noise).map(|(&l, &e)| l + e).collect();
            counts[top_k(&scores, 1).unwrap().indices()[0]] += 1;
        }
        let chi2: f64 = (0..5)
            .map(|i| {
                let want = probs[i] * draws as f64;
                let d = counts[i] as f64 - want;
                d * d / want
            })
            .sum();
        // 4 degrees of freedom at the 0.01 level.
        assert!(chi2 < 13.277, "chi2 {chi2}");
    }
}
