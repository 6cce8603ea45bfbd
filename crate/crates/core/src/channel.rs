//! Block-fading Kronecker channel, transmission with noise and transmit EVM,
//! and imperfect channel knowledge at the receiver.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ImpairmentConfig {
    /// Transmit EVM as a fraction of RMS symbol amplitude (0.06 for 6 %).
    pub evm_fraction: f64,
    /// Per-entry variance of the channel estimation error.
    pub sigma_ce_sq: f64,
    /// Transmit-side correlation coefficient.
    pub alpha_tx: f64,
    /// Receive-side correlation coefficient.
    pub beta_rx: f64,
}

impl Default for ImpairmentConfig {
    fn default() -> Self {
        Self {
            evm_fraction: 0.0,
            sigma_ce_sq: 0.0,
            alpha_tx: 0.0,
            beta_rx: 0.0,
        }
    }
}

impl ImpairmentConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, v: f64, upper: Option<f64>| {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::config(name, format!("must be a finite value >= 0, got {v}")));
            }
            if let Some(u) = upper {
                if v > u {
                    return Err(Error::config(name, format!("must be <= {u}, got {v}")));
                }
            }
            Ok(())
        };
        check("impairments.evm_fraction", self.evm_fraction, None)?;
        check("impairments.sigma_ce_sq", self.sigma_ce_sq, None)?;
        check("impairments.alpha_tx", self.alpha_tx, Some(1.0))?;
        check("impairments.beta_rx", self.beta_rx, Some(1.0))
    }
}

/// One block-fading channel use as seen by the transmitter and the receiver.
#[derive(Debug, Clone)]
pub struct ChannelRealization {
    pub h_true: ComplexMatrix,
    pub h_est: ComplexMatrix,
    pub n0: f64,
    pub sigma_ce_sq: f64,
}

/// Per-trial generator: ChaCha8 keyed by the master seed, with the stream id
/// set to `(snr_index << 32) | trial_index`. Each trial therefore owns an
/// independent keystream regardless of which worker runs it.
pub fn trial_rng(master_seed: u64, snr_index: u32, trial_index: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream(((snr_index as u64) << 32) | trial_index as u64);
    rng
}

/// Sample of `CN(0, variance)`.
pub fn complex_gaussian(rng: &mut impl Rng, variance: f64) -> Complex64 {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(s * re, s * im)
}

/// Exponential antenna correlation matrix of the LTE conformance models:
/// entry `(i, j)` is `c^((|i − j| / (n − 1))²)`, giving exponents
/// `0, 1/9, 4/9, 1` for four antennas.
pub fn correlation_matrix(n: usize, coefficient: f64) -> Result<ComplexMatrix> {
    if !matches!(n, 1 | 2 | 4) {
        return Err(Error::UnsupportedAntennaCount(n));
    }
    if !(0.0..=1.0).contains(&coefficient) {
        return Err(Error::config(
            "correlation coefficient",
            format!("must lie in [0, 1], got {coefficient}"),
        ));
    }
    let span = (n.max(2) - 1) as f64;
    Ok(ComplexMatrix::from_fn(n, n, |i, j| {
        let e = (i.abs_diff(j) as f64 / span).powi(2);
        Complex64::new(coefficient.powf(e), 0.0)
    }))
}

/// Symmetric square root of a real symmetric positive semidefinite matrix
/// (imaginary parts are ignored). Negative eigenvalues from rounding are
/// clamped to zero.
pub fn psd_sqrt(r: &ComplexMatrix) -> ComplexMatrix {
    let n = r.rows();
    let mut a: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| r[(i, j)].re).collect()).collect();
    let mut v: Vec<Vec<f64>> = (0..n)
        .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();

    // cyclic Jacobi rotations
    for _sweep in 0..64 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = (t * t + 1.0).sqrt().recip();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
                for row in v.iter_mut() {
                    let (vp, vq) = (row[p], row[q]);
                    row[p] = c * vp - s * vq;
                    row[q] = s * vp + c * vq;
                }
            }
        }
    }
    let roots: Vec<f64> = (0..n).map(|i| a[i][i].max(0.0).sqrt()).collect();
    ComplexMatrix::from_fn(n, n, |i, j| {
        let s: f64 = (0..n).map(|k| v[i][k] * roots[k] * v[j][k]).sum();
        Complex64::new(s, 0.0)
    })
}

fn correlation_sqrt(n: usize, coefficient: f64) -> Result<Option<ComplexMatrix>> {
    if coefficient == 0.0 {
        return Ok(None);
    }
    Ok(Some(psd_sqrt(&correlation_matrix(n, coefficient)?)))
}

/// Draws `H_true = R_rx^{1/2}·H_w·R_tx^{1/2}` with `H_w` IID `CN(0, 1)` and
/// `H_est = H_true + E` with `E` IID `CN(0, σ_ce²)`.
pub fn generate_channel(
    rng: &mut impl Rng,
    n_rx: usize,
    n_layers: usize,
    impairments: &ImpairmentConfig,
    n0: f64,
) -> Result<ChannelRealization> {
    impairments.validate()?;
    let rx = correlation_sqrt(n_rx, impairments.beta_rx)?;
    let tx = correlation_sqrt(n_layers, impairments.alpha_tx)?;

    let mut h = ComplexMatrix::from_fn(n_rx, n_layers, |_, _| complex_gaussian(rng, 1.0));
    if let Some(rx) = rx {
        h = rx.matmul(&h)?;
    }
    if let Some(tx) = tx {
        h = h.matmul(&tx)?;
    }

    let sigma_ce_sq = impairments.sigma_ce_sq;
    let h_est = if sigma_ce_sq > 0.0 {
        ComplexMatrix::from_fn(n_rx, n_layers, |r, c| {
            h[(r, c)] + complex_gaussian(rng, sigma_ce_sq)
        })
    } else {
        h.clone()
    };
    Ok(ChannelRealization {
        h_true: h,
        h_est,
        n0,
        sigma_ce_sq,
    })
}

/// `y = H·(x + e) + w` with `w ~ CN(0, N0)` and transmit error
/// `e ~ CN(0, evm²)` per unit-energy symbol.
pub fn transmit(
    rng: &mut impl Rng,
    h: &ComplexMatrix,
    x: &[Complex64],
    n0: f64,
    evm_fraction: f64,
) -> Result<Vec<Complex64>> {
    let sent: Vec<Complex64> = if evm_fraction > 0.0 {
        let var = evm_fraction * evm_fraction;
        x.iter().map(|&s| s + complex_gaussian(rng, var)).collect()
    } else {
        x.to_vec()
    };
    let mut y = h.mul_vec(&sent)?;
    if n0 > 0.0 {
        for v in y.iter_mut() {
            *v += complex_gaussian(rng, n0);
        }
    }
    Ok(y)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::test_util::{max_abs_diff, naive_matmul};

    #[test]
    fn correlation_closed_form() {
        assert_eq!(correlation_matrix(4, 0.0).unwrap(), ComplexMatrix::identity(4));
        let ones = correlation_matrix(2, 1.0).unwrap();
        assert!(ones.data().iter().all(|v| (*v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let r = correlation_matrix(4, 0.9).unwrap();
        assert!((r[(0, 1)].re - 0.9f64.powf(1.0 / 9.0)).abs() < 1e-15);
        assert!((r[(0, 1)].re - 0.98836).abs() < 1e-5);
        assert!((r[(0, 2)].re - 0.9f64.powf(4.0 / 9.0)).abs() < 1e-15);
        assert!((r[(0, 3)].re - 0.9).abs() < 1e-15);
        assert!(matches!(
            correlation_matrix(3, 0.5),
            Err(Error::UnsupportedAntennaCount(3))
        ));
    }

    #[test]
    fn correlation_is_psd_and_sqrt_reconstructs() {
        for n in [1, 2, 4] {
            for k in 0..=10 {
                let c = k as f64 / 10.0;
                let r = correlation_matrix(n, c).unwrap();
                let s = psd_sqrt(&r);
                let back = naive_matmul(&s, &s.hermitian());
                assert!(max_abs_diff(&back, &r) < 1e-10, "n={n} c={c}");
                // smallest eigenvalue via the square root's Rayleigh quotients
                for i in 0..n {
                    assert!((r[(i, i)].re - 1.0).abs() < 1e-15);
                    for j in 0..n {
                        assert_eq!(r[(i, j)], r[(j, i)].conj());
                    }
                }
                let min_eig = min_eigenvalue_2x2_or_power(&r);
                assert!(min_eig >= -1e-10);
            }
        }
    }

    /// Smallest eigenvalue by inverse-free shifted power iteration.
    fn min_eigenvalue_2x2_or_power(r: &ComplexMatrix) -> f64 {
        let n = r.rows();
        let shift = n as f64 + 1.0;
        // power iteration on (shift·I − R) yields shift − λ_min
        let mut v = vec![1.0; n];
        let mut lambda = 0.0;
        for _ in 0..2000 {
            let w: Vec<f64> = (0..n)
                .map(|i| shift * v[i] - (0..n).map(|j| r[(i, j)].re * v[j]).sum::<f64>())
                .collect();
            let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
            lambda = norm;
            v = w.iter().map(|x| x / norm).collect();
        }
        shift - lambda
    }

    #[test]
    fn no_estimation_error_means_exact_knowledge() {
        let mut rng = trial_rng(1, 0, 0);
        let ch = generate_channel(&mut rng, 4, 4, &ImpairmentConfig::default(), 0.1).unwrap();
        assert_eq!(ch.h_true, ch.h_est);
    }

    #[test]
    fn uncorrelated_channel_has_identity_covariance() {
        let mut rng = trial_rng(2, 0, 0);
        let draws = 100_000;
        let n = 4;
        let mut cov = vec![vec![Complex64::new(0.0, 0.0); n * n]; n * n];
        for _ in 0..draws {
            let ch = generate_channel(&mut rng, 2, 2, &ImpairmentConfig::default(), 1.0).unwrap();
            let v = ch.h_true.data();
            for a in 0..n {
                for b in 0..n {
                    cov[a][b] += v[a] * v[b].conj();
                }
            }
        }
        for a in 0..n {
            for b in 0..n {
                let c = cov[a][b] / draws as f64;
                let target = if a == b { 1.0 } else { 0.0 };
                assert!((c - Complex64::new(target, 0.0)).norm() < 0.02, "({a},{b}) {c}");
            }
        }
    }

    #[test]
    fn transmit_correlation_matches_closed_form() {
        let mut rng = trial_rng(3, 0, 0);
        let imp = ImpairmentConfig {
            alpha_tx: 0.9,
            ..Default::default()
        };
        let draws = 100_000;
        let mut cross = Complex64::new(0.0, 0.0);
        let mut power = 0.0;
        for _ in 0..draws {
            let ch = generate_channel(&mut rng, 1, 4, &imp, 1.0).unwrap();
            let h = &ch.h_true;
            cross += h[(0, 0)].conj() * h[(0, 1)];
            power += h[(0, 0)].norm_sqr();
        }
        let rho = cross.re / draws as f64;
        let target = 0.9f64.powf(1.0 / 9.0);
        assert!((rho - target).abs() < 0.02 * target, "rho = {rho}");
        assert!((power / draws as f64 - 1.0).abs() < 0.02);
    }

    #[test]
    fn estimation_error_variance() {
        let mut rng = trial_rng(4, 0, 0);
        let imp = ImpairmentConfig {
            sigma_ce_sq: 0.05,
            ..Default::default()
        };
        let mut acc = 0.0;
        let draws = 20_000;
        for _ in 0..draws {
            let ch = generate_channel(&mut rng, 2, 2, &imp, 1.0).unwrap();
            for (a, b) in ch.h_est.data().iter().zip(ch.h_true.data()) {
                acc += (a - b).norm_sqr();
            }
        }
        let var = acc / (4 * draws) as f64;
        assert!((var - 0.05).abs() < 0.02 * 0.05);
    }

    #[test]
    fn noiseless_transmit_is_exact() {
        let mut rng = trial_rng(5, 0, 0);
        let ch = generate_channel(&mut rng, 4, 2, &ImpairmentConfig::default(), 0.0).unwrap();
        let x = vec![Complex64::new(0.5, -0.5), Complex64::new(-1.0, 0.25)];
        let y = transmit(&mut rng, &ch.h_true, &x, 0.0, 0.0).unwrap();
        assert_eq!(y, ch.h_true.mul_vec(&x).unwrap());
    }

    #[test]
    fn pure_noise_variance() {
        let mut rng = trial_rng(6, 0, 0);
        let h = ComplexMatrix::identity(2);
        let x = vec![Complex64::new(0.0, 0.0); 2];
        let n0 = 0.3;
        let draws = 100_000;
        let mut acc = 0.0;
        for _ in 0..draws {
            let y = transmit(&mut rng, &h, &x, n0, 0.0).unwrap();
            acc += y[0].norm_sqr();
        }
        assert!((acc / draws as f64 - n0).abs() < 0.02 * n0);
    }

    #[test]
    fn evm_excess_power() {
        let mut rng = trial_rng(7, 0, 0);
        let ch = generate_channel(&mut rng, 2, 2, &ImpairmentConfig::default(), 0.0).unwrap();
        let h = ch.h_true;
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let x = vec![Complex64::new(s, s), Complex64::new(-s, s)];
        let clean = h.mul_vec(&x).unwrap();
        let draws = 100_000;
        let mut acc = [0.0; 2];
        for _ in 0..draws {
            let y = transmit(&mut rng, &h, &x, 0.0, 0.06).unwrap();
            for r in 0..2 {
                acc[r] += (y[r] - clean[r]).norm_sqr();
            }
        }
        for r in 0..2 {
            let row_energy: f64 = h.row(r).iter().map(|v| v.norm_sqr()).sum();
            let expected = 0.0036 * row_energy;
            assert!((acc[r] / draws as f64 - expected).abs() < 0.02 * expected);
        }
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let imp = ImpairmentConfig {
            evm_fraction: 0.06,
            sigma_ce_sq: 0.01,
            alpha_tx: 0.3,
            beta_rx: 0.9,
        };
        let run = || {
            let mut rng = trial_rng(99, 3, 17);
            let ch = generate_channel(&mut rng, 4, 4, &imp, 0.2).unwrap();
            let x = vec![Complex64::new(1.0, 0.0); 4];
            let y = transmit(&mut rng, &ch.h_true, &x, 0.2, imp.evm_fraction).unwrap();
            (ch.h_est, y)
        };
        let (h1, y1) = run();
        let (h2, y2) = run();
        assert_eq!(h1, h2);
        assert_eq!(y1, y2);
        let mut other = trial_rng(99, 3, 18);
        let mut same = trial_rng(99, 3, 17);
        assert_ne!(other.random::<u64>(), same.random::<u64>());
    }

    #[test]
    fn impairment_validation() {
        let bad = ImpairmentConfig {
            alpha_tx: 1.5,
            ..Default::default()
        };
        let err = bad.validate().unwrap_err();
        assert!(err.to_string().contains("alpha_tx"));
    }
}
