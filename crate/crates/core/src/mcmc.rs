//! Gibbs-sampling augmentation of the deterministic candidate list.
//!
//! Several short chains start from the best deterministic candidates and
//! resample one block at a time from its conditional distribution
//! `P(x_k = s | x_{−k}, y) ∝ exp(−‖y − Hx‖²/(N0·T))`. Every distinct state
//! they visit joins the seeds in a pool that is truncated by metric.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateList, CandidateSet};
use crate::error::{Error, Result};
use crate::metric_engine::BlockSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GibbsConfig {
    /// Number of independent chains.
    pub n_samplers: usize,
    /// Full sweeps (one update per block) per chain.
    pub n_sweeps: usize,
    /// Temperature; 1 samples the true posterior.
    pub temperature: f64,
    /// Maximum size of the refined pool.
    pub pool_cap: usize,
}

impl Default for GibbsConfig {
    fn default() -> Self {
        Self {
            n_samplers: 4,
            n_sweeps: 3,
            temperature: 1.0,
            pool_cap: 256,
        }
    }
}

impl GibbsConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_samplers == 0 {
            return Err(Error::config("mcmc.n_samplers", "must be at least 1"));
        }
        if self.pool_cap < self.n_samplers {
            return Err(Error::config("mcmc.pool_cap", "must be at least n_samplers"));
        }
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::config("mcmc.temperature", "must be a positive finite value"));
        }
        Ok(())
    }
}

/// Conditional distribution of block `k` over the full block alphabet given
/// the other blocks of `state`.
pub fn conditional_probs(
    sys: &BlockSystem,
    set: &CandidateSet,
    state: &[usize],
    k: usize,
    n0: f64,
    temperature: f64,
) -> Vec<f64> {
    let values: Vec<[f64; 2]> = (0..set.alphabet_size()).map(|id| set.value(id)).collect();
    let mut p = Vec::with_capacity(values.len());
    conditional_into(sys, &values, state, k, n0 * temperature, &mut p);
    p
}

fn conditional_into(
    sys: &BlockSystem,
    values: &[[f64; 2]],
    state: &[usize],
    k: usize,
    scale: f64,
    out: &mut Vec<f64>,
) {
    // part of μ_rec that depends on block k: −sᵀz_k + ½sᵀG_kk s + sᵀ Σ_{l≠k} G_kl u_l
    let mut lin = sys.z(k);
    for (l, &id) in state.iter().enumerate() {
        if l == k {
            continue;
        }
        let g = sys.g(k, l);
        let u = values[id];
        lin[0] -= g[0][0] * u[0] + g[0][1] * u[1];
        lin[1] -= g[1][0] * u[0] + g[1][1] * u[1];
    }
    let g = sys.g(k, k);
    out.clear();
    out.extend(values.iter().map(|s| {
        let quad = s[0] * (g[0][0] * s[0] + g[0][1] * s[1]) + s[1] * (g[1][0] * s[0] + g[1][1] * s[1]);
        // ‖y − Hx‖² = 2μ_rec + const
        -2.0 * (0.5 * quad - s[0] * lin[0] - s[1] * lin[1]) / scale
    }));
    let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in out.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in out.iter_mut() {
        *v /= total;
    }
}

fn sample(rng: &mut impl Rng, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}

/// Runs the chains and returns the refined pool: seeds plus every distinct
/// visited vector, ordered by metric (ties lexicographic) and truncated to
/// `cfg.pool_cap`. The best seed is always kept.
///
/// Chain `i` starts from the `(i mod |seeds|)`-th best seed and draws from
/// its own ChaCha8 generator seeded from `rng`, so the pool depends only on
/// the inputs and `rng`'s state.
pub fn gibbs_refine(
    seeds: &CandidateList,
    sys: &BlockSystem,
    set: &CandidateSet,
    n0: f64,
    cfg: &GibbsConfig,
    rng: &mut impl Rng,
) -> Result<CandidateList> {
    cfg.validate()?;
    let n = set.n_layers();
    let values: Vec<[f64; 2]> = (0..set.alphabet_size()).map(|id| set.value(id)).collect();
    let metric = |v: &[usize]| {
        let u: Vec<[f64; 2]> = v.iter().map(|&id| values[id]).collect();
        sys.metric(&u)
    };

    let mut seen: HashSet<Vec<usize>> = HashSet::new();
    let mut pool: Vec<(f64, Vec<usize>)> = Vec::new();
    for v in seeds.iter() {
        if seen.insert(v.to_vec()) {
            pool.push((metric(v), v.to_vec()));
        }
    }
    let by_metric = |a: &(f64, Vec<usize>), b: &(f64, Vec<usize>)| {
        a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1))
    };
    pool.sort_by(by_metric);
    let n_seeds = pool.len();
    if n_seeds == 0 {
        return Ok(CandidateList::new(n));
    }
    let best_seed = pool[0].1.clone();

    let mut probs = Vec::with_capacity(values.len());
    let scale = n0 * cfg.temperature;
    for i in 0..cfg.n_samplers {
        let mut chain_rng = ChaCha8Rng::seed_from_u64(rng.random());
        let mut state = pool[i % n_seeds].1.clone();
        for _ in 0..cfg.n_sweeps {
            for k in 0..n {
                conditional_into(sys, &values, &state, k, scale, &mut probs);
                state[k] = sample(&mut chain_rng, &probs);
                if seen.insert(state.clone()) {
                    pool.push((metric(&state), state.clone()));
                }
            }
        }
    }
    pool.sort_by(by_metric);
    pool.truncate(cfg.pool_cap);
    if !pool.iter().any(|(_, v)| *v == best_seed) {
        let last = pool.len() - 1;
        pool[last] = (metric(&best_seed), best_seed);
        pool.sort_by(by_metric);
    }
    Ok(CandidateList::from_vectors(n, pool.into_iter().map(|(_, v)| v)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::candidates::enumerate_and_reduce;
    use crate::constellation::Constellation;
    use crate::numerics::test_util::{random_matrix, random_vec, rng};
    use crate::numerics::{self};
    use num_complex::Complex64;

    fn full_set(c: &Constellation, n: usize) -> CandidateSet {
        CandidateSet::complex(c.clone(), &(0..n).collect::<Vec<_>>(), vec![(0..c.len()).collect(); n])
            .unwrap()
    }

    #[test]
    fn conditionals_sum_to_one_and_match_brute_force() {
        let c = Constellation::qam16();
        let mut r = rng(61);
        let h = random_matrix(&mut r, 4, 3);
        let y = random_vec(&mut r, 4);
        let set = full_set(&c, 3);
        let sys = BlockSystem::complex(&h, &y, &set).unwrap();
        let n0 = 0.7;
        let state = vec![3, 9, 14];
        for k in 0..3 {
            let p = conditional_probs(&sys, &set, &state, k, n0, 1.0);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            // brute force over the full distance
            let w: Vec<f64> = (0..16)
                .map(|s| {
                    let mut st = state.clone();
                    st[k] = s;
                    let x: Vec<Complex64> = st.iter().map(|&l| c.point(l)).collect();
                    -numerics::distance_sqr(&y, &h.mul_vec(&x).unwrap()) / n0
                })
                .collect();
            let m = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = w.iter().map(|v| (v - m).exp()).sum();
            for s in 0..16 {
                assert!((p[s] - (w[s] - m).exp() / z).abs() < 1e-10);
            }
        }
    }

    fn setup(seed: u64) -> (BlockSystem, CandidateSet, CandidateList) {
        let c = Constellation::qam16();
        let mut r = rng(seed);
        let h = random_matrix(&mut r, 4, 4);
        let y = random_vec(&mut r, 4);
        let set = CandidateSet::complex(c, &[0, 1, 2, 3], vec![vec![0, 1, 2]; 4]).unwrap();
        let sys = BlockSystem::complex(&h, &y, &set).unwrap();
        let seeds = enumerate_and_reduce(&set, true);
        (sys, set, seeds)
    }

    #[test]
    fn pool_is_deterministic_sorted_and_keeps_best_seed() {
        let (sys, set, seeds) = setup(62);
        let metric = |v: &[usize]| sys.metric(&v.iter().map(|&id| set.value(id)).collect::<Vec<_>>());
        let best = seeds
            .iter()
            .min_by(|a, b| metric(a).total_cmp(&metric(b)))
            .unwrap()
            .to_vec();
        for cap in [4, 20, 200] {
            let cfg = GibbsConfig {
                pool_cap: cap,
                ..Default::default()
            };
            let a = gibbs_refine(&seeds, &sys, &set, 1.0, &cfg, &mut rng(5)).unwrap();
            let b = gibbs_refine(&seeds, &sys, &set, 1.0, &cfg, &mut rng(5)).unwrap();
            assert_eq!(a, b);
            assert!(a.len() <= cap);
            assert!(a.contains(&best));
            let m: Vec<f64> = a.iter().map(metric).collect();
            assert!(m.windows(2).all(|w| w[0] <= w[1]));
            let mut uniq: Vec<Vec<usize>> = a.iter().map(|e| e.to_vec()).collect();
            uniq.sort();
            uniq.dedup();
            assert_eq!(uniq.len(), a.len());
        }
    }

    #[test]
    fn zero_sweeps_returns_seeds() {
        let (sys, set, seeds) = setup(64);
        let cfg = GibbsConfig {
            n_sweeps: 0,
            pool_cap: 1000,
            ..Default::default()
        };
        let pool = gibbs_refine(&seeds, &sys, &set, 1.0, &cfg, &mut rng(1)).unwrap();
        assert_eq!(pool.len(), seeds.len());
        assert!(seeds.iter().all(|e| pool.contains(e)));
    }

    #[test]
    fn sampler_reaches_transmitted_vector() {
        let c = Constellation::qpsk();
        let mut r = rng(63);
        let h = random_matrix(&mut r, 4, 4);
        let labels = [0usize, 3, 1, 2];
        let x: Vec<Complex64> = labels.iter().map(|&l| c.point(l)).collect();
        let y = h.mul_vec(&x).unwrap();
        // a deliberately wrong seed
        let set = CandidateSet::complex(c.clone(), &[0, 1, 2, 3], vec![vec![2]; 4]).unwrap();
        let sys = BlockSystem::complex(&h, &y, &set).unwrap();
        let seeds = CandidateList::from_vectors(4, [vec![2, 2, 2, 2]]);
        let cfg = GibbsConfig {
            n_samplers: 4,
            n_sweeps: 20,
            temperature: 1.0,
            pool_cap: 100,
        };
        let out = gibbs_refine(&seeds, &sys, &set, 0.5, &cfg, &mut rng(7)).unwrap();
        assert_eq!(out.get(0), labels);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = GibbsConfig {
            temperature: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = GibbsConfig {
            n_samplers: 8,
            pool_cap: 4,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
    }
}
