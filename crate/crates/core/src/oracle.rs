//! Exhaustive reference detectors over the full hypothesis space `S^{N_L}`.
//!
//! These are deliberately written without the γ/δ machinery: hypotheses are
//! enumerated depth-first with the residual `y − Σ h_k·s_k` updated from
//! precomputed column products, and every leaf scores `‖y − Hx‖²` directly.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

/// Largest number of hypotheses an oracle will enumerate.
pub const MAX_HYPOTHESES: u128 = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    /// Exact log-sum-exp.
    Map,
    /// Max-log.
    Mlm,
}

/// Calls `visit(labels, ‖x‖², ‖y − Hx‖²)` for every hypothesis.
fn enumerate(
    y: &[Complex64],
    h: &ComplexMatrix,
    constellation: &Constellation,
    mut visit: impl FnMut(&[usize], f64, f64),
) -> Result<()> {
    let (nr, nl) = (h.rows(), h.cols());
    if y.len() != nr {
        return Err(Error::DimensionMismatch(format!(
            "observation of length {} against {nr} receive antennas",
            y.len()
        )));
    }
    let size = constellation.len();
    let hypotheses = (size as u128).checked_pow(nl as u32).unwrap_or(u128::MAX);
    if hypotheses > MAX_HYPOTHESES {
        return Err(Error::SearchSpaceTooLarge {
            hypotheses,
            limit: MAX_HYPOTHESES,
        });
    }
    // products[k][s] = h_k · s
    let products: Vec<Vec<Vec<Complex64>>> = (0..nl)
        .map(|k| {
            let col = h.column(k);
            constellation
                .points()
                .iter()
                .map(|s| col.iter().map(|v| v * s).collect())
                .collect()
        })
        .collect();
    let energies: Vec<f64> = constellation.points().iter().map(|p| p.norm_sqr()).collect();

    // residuals[d] is the residual after fixing layers 0..d
    let mut residuals = vec![y.to_vec(); nl + 1];
    let mut energy = vec![0.0; nl + 1];
    let mut labels = vec![0usize; nl];
    let mut depth = 0;
    let mut next = vec![0usize; nl];
    loop {
        if depth == nl {
            let mu = residuals[nl].iter().map(|v| v.norm_sqr()).sum();
            visit(&labels, energy[nl], mu);
            depth -= 1;
            continue;
        }
        if next[depth] == size {
            next[depth] = 0;
            if depth == 0 {
                return Ok(());
            }
            depth -= 1;
            continue;
        }
        let s = next[depth];
        next[depth] += 1;
        labels[depth] = s;
        let (head, tail) = residuals.split_at_mut(depth + 1);
        for ((dst, src), p) in tail[0].iter_mut().zip(&head[depth]).zip(&products[depth][s]) {
            *dst = src - p;
        }
        energy[depth + 1] = energy[depth] + energies[s];
        depth += 1;
    }
}

/// Accumulates hypothesis log-weights per `(layer, label)`. Both the max and
/// the log-sum-exp over "all hypotheses with bit i of layer k equal to b"
/// decompose over the labels of layer k, so per-bit results are formed only
/// once at the end.
struct LabelAccumulator {
    mode: OracleMode,
    size: usize,
    /// `[layer·|S| + label] = (max, Σ exp(w − max))`
    acc: Vec<(f64, f64)>,
}

impl LabelAccumulator {
    fn new(mode: OracleMode, n_layers: usize, size: usize) -> Self {
        Self {
            mode,
            size,
            acc: vec![(f64::NEG_INFINITY, 0.0); n_layers * size],
        }
    }

    #[inline]
    fn push(slot: &mut (f64, f64), mode: OracleMode, weight: f64) {
        match mode {
            OracleMode::Mlm => slot.0 = slot.0.max(weight),
            OracleMode::Map => {
                if weight > slot.0 {
                    slot.1 = slot.1 * (slot.0 - weight).exp() + 1.0;
                    slot.0 = weight;
                } else {
                    slot.1 += (weight - slot.0).exp();
                }
            }
        }
    }

    fn add(&mut self, labels: &[usize], weight: f64) {
        for (layer, &label) in labels.iter().enumerate() {
            Self::push(&mut self.acc[layer * self.size + label], self.mode, weight);
        }
    }

    fn llrs(self, constellation: &Constellation) -> Vec<f64> {
        let q = constellation.bits_per_symbol();
        let n_layers = self.acc.len() / self.size;
        let total = |(m, s): (f64, f64)| match self.mode {
            OracleMode::Mlm => m,
            OracleMode::Map => m + s.ln(),
        };
        let mut out = Vec::with_capacity(n_layers * q);
        for layer in 0..n_layers {
            for i in 0..q {
                let mut side = [(f64::NEG_INFINITY, 0.0); 2];
                for label in 0..self.size {
                    let (m, s) = self.acc[layer * self.size + label];
                    if m == f64::NEG_INFINITY {
                        continue;
                    }
                    let slot = &mut side[constellation.bit(label, i) as usize];
                    match self.mode {
                        OracleMode::Mlm => slot.0 = slot.0.max(m),
                        OracleMode::Map => {
                            // merge (m, s) into slot
                            if m > slot.0 {
                                slot.1 = slot.1 * (slot.0 - m).exp() + s;
                                slot.0 = m;
                            } else {
                                slot.1 += s * (m - slot.0).exp();
                            }
                        }
                    }
                }
                out.push(total(side[1]) - total(side[0]));
            }
        }
        out
    }
}

fn oracle(
    y: &[Complex64],
    h: &ComplexMatrix,
    constellation: &Constellation,
    mode: OracleMode,
    score: impl Fn(f64, f64) -> f64,
) -> Result<Vec<f64>> {
    let mut acc = LabelAccumulator::new(mode, h.cols(), constellation.len());
    enumerate(y, h, constellation, |labels, energy, mu| {
        acc.add(labels, score(energy, mu));
    })?;
    Ok(acc.llrs(constellation))
}

/// Max-log LLRs over the full hypothesis space with `μ(x) = ‖y − Hx‖²`.
pub fn mlm_llrs(
    y: &[Complex64],
    h: &ComplexMatrix,
    n0: f64,
    constellation: &Constellation,
) -> Result<Vec<f64>> {
    oracle(y, h, constellation, OracleMode::Mlm, |_, mu| -mu / n0)
}

/// Exact LLRs (uniform priors) by streaming log-sum-exp.
pub fn map_llrs(
    y: &[Complex64],
    h: &ComplexMatrix,
    n0: f64,
    constellation: &Constellation,
) -> Result<Vec<f64>> {
    oracle(y, h, constellation, OracleMode::Map, |_, mu| -mu / n0)
}

/// Exhaustive LLRs with each hypothesis scored by
/// `N_R·ln(N0 + ‖x‖²σ²) + μ(x)/(N0 + ‖x‖²σ²)` in place of `μ(x)/N0`.
pub fn ce_aware_oracle(
    y: &[Complex64],
    h: &ComplexMatrix,
    n0: f64,
    sigma_ce_sq: f64,
    constellation: &Constellation,
    mode: OracleMode,
) -> Result<Vec<f64>> {
    let nr = h.rows() as f64;
    oracle(y, h, constellation, mode, |energy, mu| {
        let d = n0 + energy * sigma_ce_sq;
        -(nr * d.ln() + mu / d)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::{random_matrix, random_vec, rng};
    use crate::numerics::distance_sqr;
    use rand::Rng;

    /// Independent flat enumeration by integer decomposition.
    fn flat_llrs(
        y: &[Complex64],
        h: &ComplexMatrix,
        n0: f64,
        sigma: f64,
        c: &Constellation,
        mode: OracleMode,
    ) -> Vec<f64> {
        let (nl, q, s) = (h.cols(), c.bits_per_symbol(), c.len());
        let mut w1 = vec![Vec::new(); nl * q];
        let mut w0 = vec![Vec::new(); nl * q];
        for idx in 0..s.pow(nl as u32) {
            let labels: Vec<usize> = (0..nl).map(|k| (idx / s.pow(k as u32)) % s).collect();
            let x: Vec<Complex64> = labels.iter().map(|&l| c.point(l)).collect();
            let mu = distance_sqr(y, &h.mul_vec(&x).unwrap());
            let e: f64 = x.iter().map(|v| v.norm_sqr()).sum();
            let d = n0 + e * sigma;
            let w = -(h.rows() as f64 * d.ln() + mu / d);
            for (k, &l) in labels.iter().enumerate() {
                for i in 0..q {
                    let side = if c.bit(l, i) == 1 { &mut w1 } else { &mut w0 };
                    side[k * q + i].push(w);
                }
            }
        }
        let reduce = |v: &Vec<f64>| {
            let m = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            match mode {
                OracleMode::Mlm => m,
                OracleMode::Map => m + v.iter().map(|x| (x - m).exp()).sum::<f64>().ln(),
            }
        };
        w1.iter().zip(&w0).map(|(a, b)| reduce(a) - reduce(b)).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol * (1.0 + y.abs()))
    }

    #[test]
    fn single_layer_matches_flat_enumeration() {
        let c = Constellation::qam64();
        let mut r = rng(81);
        for _ in 0..20 {
            let h = random_matrix(&mut r, 2, 1);
            let y = random_vec(&mut r, 2);
            let n0 = 0.2;
            let a = mlm_llrs(&y, &h, n0, &c).unwrap();
            assert!(close(&a, &flat_llrs(&y, &h, n0, 0.0, &c, OracleMode::Mlm), 1e-9));
            let a = map_llrs(&y, &h, n0, &c).unwrap();
            assert!(close(&a, &flat_llrs(&y, &h, n0, 0.0, &c, OracleMode::Map), 1e-9));
        }
    }

    #[test]
    fn multi_layer_matches_flat_enumeration() {
        let c = Constellation::qam16();
        let mut r = rng(82);
        for _ in 0..5 {
            let h = random_matrix(&mut r, 3, 2);
            let y = random_vec(&mut r, 3);
            let a = mlm_llrs(&y, &h, 0.5, &c).unwrap();
            assert!(close(&a, &flat_llrs(&y, &h, 0.5, 0.0, &c, OracleMode::Mlm), 1e-9));
        }
    }

    #[test]
    fn noiseless_signs_recover_bits() {
        let c = Constellation::qam16();
        let mut r = rng(83);
        let h = random_matrix(&mut r, 4, 3);
        let labels = [5usize, 12, 9];
        let x: Vec<Complex64> = labels.iter().map(|&l| c.point(l)).collect();
        let y = h.mul_vec(&x).unwrap();
        let l = mlm_llrs(&y, &h, 1e-3, &c).unwrap();
        for (k, &lab) in labels.iter().enumerate() {
            for i in 0..4 {
                assert_eq!(l[k * 4 + i] > 0.0, c.bit(lab, i) == 1);
            }
        }
    }

    #[test]
    fn map_converges_to_mlm_at_low_noise() {
        let c = Constellation::qpsk();
        let mut r = rng(84);
        for _ in 0..10 {
            let h = random_matrix(&mut r, 2, 2);
            let y = random_vec(&mut r, 2);
            let n0 = 1e-8;
            let a = map_llrs(&y, &h, n0, &c).unwrap();
            let b = mlm_llrs(&y, &h, n0, &c).unwrap();
            // both scale as 1/N0; compare the N0-normalised values
            for (x, z) in a.iter().zip(&b) {
                assert!((x - z).abs() * n0 < 1e-6);
            }
        }
    }

    #[test]
    fn zero_observation_gives_zero_llrs() {
        let c = Constellation::qpsk();
        let h = ComplexMatrix::new(1, 1, vec![Complex64::new(0.8, -0.3)]).unwrap();
        let l = map_llrs(&[Complex64::new(0.0, 0.0)], &h, 0.4, &c).unwrap();
        assert!(l.iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn map_within_log_space_bound_of_mlm() {
        let c = Constellation::qpsk();
        let mut r = rng(85);
        let bound = (16f64).ln();
        for _ in 0..200 {
            let h = random_matrix(&mut r, 2, 2);
            let y = random_vec(&mut r, 2);
            let a = map_llrs(&y, &h, 0.7, &c).unwrap();
            let b = mlm_llrs(&y, &h, 0.7, &c).unwrap();
            for (x, z) in a.iter().zip(&b) {
                assert!(x.abs() <= z.abs() + bound);
            }
        }
    }

    #[test]
    fn map_mlm_sign_agreement_at_high_snr() {
        let c = Constellation::qpsk();
        let mut r = rng(86);
        let (mut agree, mut total) = (0, 0);
        for _ in 0..500 {
            let h = random_matrix(&mut r, 2, 2);
            let labels = [r.random_range(0..4), r.random_range(0..4)];
            let x: Vec<Complex64> = labels.iter().map(|&l| c.point(l)).collect();
            let n0 = 0.01;
            let mut y = h.mul_vec(&x).unwrap();
            for v in y.iter_mut() {
                *v += crate::channel::complex_gaussian(&mut r, n0);
            }
            let a = map_llrs(&y, &h, n0, &c).unwrap();
            let b = mlm_llrs(&y, &h, n0, &c).unwrap();
            agree += a.iter().zip(&b).filter(|(x, z)| (**x > 0.0) == (**z > 0.0)).count();
            total += a.len();
        }
        assert!(agree as f64 >= 0.999 * total as f64);
    }

    #[test]
    fn ce_aware_cases() {
        let mut r = rng(87);
        let c = Constellation::qam16();
        for _ in 0..5 {
            let h = random_matrix(&mut r, 2, 2);
            let y = random_vec(&mut r, 2);
            for mode in [OracleMode::Map, OracleMode::Mlm] {
                let plain = if mode == OracleMode::Map {
                    map_llrs(&y, &h, 0.3, &c).unwrap()
                } else {
                    mlm_llrs(&y, &h, 0.3, &c).unwrap()
                };
                let zero = ce_aware_oracle(&y, &h, 0.3, 0.0, &c, mode).unwrap();
                assert!(close(&zero, &plain, 1e-12));
                let a = ce_aware_oracle(&y, &h, 0.3, 0.05, &c, mode).unwrap();
                assert!(close(&a, &flat_llrs(&y, &h, 0.3, 0.05, &c, mode), 1e-9));
            }
        }
        let c = Constellation::qpsk();
        for _ in 0..50 {
            let h = random_matrix(&mut r, 2, 2);
            let y = random_vec(&mut r, 2);
            let plain = mlm_llrs(&y, &h, 0.3, &c).unwrap();
            let a = ce_aware_oracle(&y, &h, 0.3, 0.2, &c, OracleMode::Mlm).unwrap();
            for (x, z) in a.iter().zip(&plain) {
                assert_eq!(*x > 0.0, *z > 0.0);
            }
        }
    }

    #[test]
    fn guard_rejects_large_spaces() {
        let c = Constellation::qam64();
        let mut r = rng(88);
        let h = random_matrix(&mut r, 4, 4);
        let y = random_vec(&mut r, 4);
        assert!(matches!(
            mlm_llrs(&y, &h, 1.0, &c),
            Err(Error::SearchSpaceTooLarge { .. })
        ));
    }
}
