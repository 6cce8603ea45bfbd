//! Real-valued system model with components grouped into pairs.
//!
//! The complex system `y = Hx + w` is stacked as
//! `[Re y; Im y] = [[Re H, −Im H], [Im H, Re H]]·[Re x; Im x] + w_r`.
//! Real components are then grouped into `N_L` pairs, each pair being
//! detected jointly over the `√|S| × √|S|` grid of PAM values.

use serde::{Deserialize, Serialize};

use super::{check_m_vector, order_layers, rank_by_distance, CandidateSet, SymbolKind};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::mmse_spic::VARIANCE_FLOOR;
use crate::numerics::{self, ComplexMatrix};

use num_complex::Complex64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairingMode {
    /// `(Re x_k, Im x_k)`; equivalent to the complex formulation.
    SameLayer,
    /// `(Re x_k, Im x_{k+1})`, cyclic in `k`.
    CrossLayer,
}

#[derive(Debug, Clone)]
pub struct RealPairedModel {
    /// `2N_R × 2N_L` real channel, stored with zero imaginary parts.
    h: ComplexMatrix,
    y: Vec<f64>,
    pairs: Vec<(usize, usize)>,
    n_layers: usize,
}

impl RealPairedModel {
    pub fn h(&self) -> &ComplexMatrix {
        &self.h
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    /// Component pairs; component `c` is `Re x_c` for `c < N_L`, else `Im x_{c−N_L}`.
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    /// `H_rᵀ·H_r` (real entries).
    pub fn gram(&self) -> ComplexMatrix {
        numerics::gram(&self.h)
    }

    /// `H_rᵀ·y_r`.
    pub fn matched(&self) -> Vec<f64> {
        let cols = self.h.cols();
        (0..cols)
            .map(|c| (0..self.h.rows()).map(|r| self.h[(r, c)].re * self.y[r]).sum())
            .collect()
    }

    /// `‖y_r − H_r·x_r‖²`.
    pub fn metric(&self, x: &[f64]) -> f64 {
        (0..self.h.rows())
            .map(|r| {
                let hx: f64 = (0..self.h.cols()).map(|c| self.h[(r, c)].re * x[c]).sum();
                (self.y[r] - hx).powi(2)
            })
            .sum()
    }

    fn col(&self, c: usize) -> Vec<f64> {
        (0..self.h.rows()).map(|r| self.h[(r, c)].re).collect()
    }
}

/// Stacks the complex system into real form and pairs its components.
pub fn real_decompose(
    h: &ComplexMatrix,
    y: &[Complex64],
    mode: PairingMode,
) -> Result<RealPairedModel> {
    let (nr, nl) = (h.rows(), h.cols());
    if y.len() != nr {
        return Err(Error::DimensionMismatch(format!(
            "observation of length {} against {nr} receive antennas",
            y.len()
        )));
    }
    let hr = ComplexMatrix::from_fn(2 * nr, 2 * nl, |r, c| {
        let v = h[(r % nr, c % nl)];
        let x = match (r < nr, c < nl) {
            (true, true) => v.re,
            (true, false) => -v.im,
            (false, true) => v.im,
            (false, false) => v.re,
        };
        Complex64::new(x, 0.0)
    });
    let yr = y.iter().map(|v| v.re).chain(y.iter().map(|v| v.im)).collect();
    let pairs = (0..nl)
        .map(|k| match mode {
            PairingMode::SameLayer => (k, nl + k),
            PairingMode::CrossLayer => (k, nl + (k + 1) % nl),
        })
        .collect();
    Ok(RealPairedModel {
        h: hr,
        y: yr,
        pairs,
        n_layers: nl,
    })
}

/// Gaussian model `x̂_p = B·x_p + e`, `e ~ N(0, Σ)` for one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairEstimate {
    pub x_hat: [f64; 2],
    pub gain: [[f64; 2]; 2],
    pub cov: [[f64; 2]; 2],
    pub sinr: f64,
    /// `½(x̂ − B·u)ᵀΣ⁻¹(x̂ − B·u)` for every grid point `u`, indexed `a·L + b`.
    pub grid_scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSpicState {
    pub pairs: Vec<PairEstimate>,
    /// `Q·N_L` LLRs in physical layer order.
    pub llrs: Vec<f64>,
    pub iteration: usize,
}

impl PairSpicState {
    pub fn sinrs(&self) -> Vec<f64> {
        self.pairs.iter().map(|p| p.sinr).collect()
    }
}

/// Symbol bit index carrying axis bit `j` of component `c`.
fn component_bit(c: usize, j: usize, n_layers: usize, q: usize) -> usize {
    let (layer, axis) = (c % n_layers, c / n_layers);
    layer * q + 2 * j + axis
}

fn inv2(m: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
    [[m[1][1] / det, -m[0][1] / det], [-m[1][0] / det, m[0][0] / det]]
}

/// MMSE-SPIC on the paired real model. Soft statistics are kept per real
/// component, the shared filter is `(H_rᵀH_r·R + N0/2·I)⁻¹H_rᵀ`, and each
/// pair is demodulated jointly with its exact post-filter covariance.
pub fn pair_spic(
    model: &RealPairedModel,
    n0: f64,
    constellation: &Constellation,
    n_iter: usize,
    llr_clip: f64,
) -> Result<PairSpicState> {
    if n_iter == 0 {
        return Err(Error::config("n_iter", "at least one iteration is required"));
    }
    if !(n0 > 0.0) {
        return Err(Error::DimensionMismatch(format!("N0 must be positive, got {n0}")));
    }
    let nl = model.n_layers;
    let q = constellation.bits_per_symbol();
    let m = constellation.axis_bits();
    let levels = constellation.axis_levels();
    let side = levels.len();
    let n_comp = 2 * nl;
    let half_n0 = n0 / 2.0;
    let cols: Vec<Vec<f64>> = (0..n_comp).map(|c| model.col(c)).collect();
    let rows = model.h.rows();
    let gram = model.gram();

    let mut llrs = vec![0.0; q * nl];
    let mut pairs = Vec::new();
    for iter in 0..n_iter {
        let (means, vars): (Vec<f64>, Vec<f64>) = if iter == 0 {
            (vec![0.0; n_comp], vec![0.5; n_comp])
        } else {
            (0..n_comp)
                .map(|c| {
                    let l: Vec<f64> = (0..m).map(|j| llrs[component_bit(c, j, nl, q)]).collect();
                    let s = constellation.axis_soft_stats(&l, llr_clip);
                    (s.mean, s.variance)
                })
                .unzip()
        };
        let a = gram.matmul(&ComplexMatrix::diagonal(&vars))?.add_identity(half_n0);
        let filter = numerics::solve(&a, &model.h.hermitian())?;
        let f = |c: usize, v: &[f64]| -> f64 {
            filter.row(c).iter().zip(v).map(|(g, x)| g.re * x).sum()
        };

        let mut next = vec![0.0; q * nl];
        pairs.clear();
        for &(ca, cb) in &model.pairs {
            let comps = [ca, cb];
            let mut y_tilde = model.y.clone();
            for c in (0..n_comp).filter(|c| !comps.contains(c)) {
                if means[c] != 0.0 {
                    for (r, v) in y_tilde.iter_mut().enumerate() {
                        *v -= cols[c][r] * means[c];
                    }
                }
            }
            let x_hat = [f(ca, &y_tilde), f(cb, &y_tilde)];
            let mut gain = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    gain[i][j] = f(comps[i], &cols[comps[j]]);
                }
            }
            // residual covariance: F_p (Σ_{c∉p} v_c h_c h_cᵀ + N0/2 I) F_pᵀ
            let frows: Vec<Vec<f64>> = comps
                .iter()
                .map(|&c| filter.row(c).iter().map(|g| g.re).collect())
                .collect();
            let mut cov = [[0.0; 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    let mut s = half_n0 * (0..rows).map(|r| frows[i][r] * frows[j][r]).sum::<f64>();
                    for c in (0..n_comp).filter(|c| !comps.contains(c)) {
                        s += vars[c] * f(comps[i], &cols[c]) * f(comps[j], &cols[c]);
                    }
                    cov[i][j] = s;
                }
            }
            cov[0][0] += VARIANCE_FLOOR;
            cov[1][1] += VARIANCE_FLOOR;
            let prec = inv2(cov);

            let mut grid_scores = Vec::with_capacity(side * side);
            let mut best = vec![[f64::NEG_INFINITY; 2]; 2 * m];
            for ia in 0..side {
                for ib in 0..side {
                    let u = [levels[ia], levels[ib]];
                    let e = [
                        x_hat[0] - gain[0][0] * u[0] - gain[0][1] * u[1],
                        x_hat[1] - gain[1][0] * u[0] - gain[1][1] * u[1],
                    ];
                    let d = 0.5
                        * (e[0] * (prec[0][0] * e[0] + prec[0][1] * e[1])
                            + e[1] * (prec[1][0] * e[0] + prec[1][1] * e[1]));
                    grid_scores.push(d);
                    for j in 0..m {
                        for (slot, label) in [(j, ia), (m + j, ib)] {
                            let b = constellation.axis_bit(label, j) as usize;
                            best[slot][b] = best[slot][b].max(-d);
                        }
                    }
                }
            }
            for j in 0..m {
                next[component_bit(ca, j, nl, q)] = best[j][1] - best[j][0];
                next[component_bit(cb, j, nl, q)] = best[m + j][1] - best[m + j][0];
            }
            let gain_energy: f64 = gain.iter().flatten().map(|v| v * v).sum();
            let sinr = gain_energy / (2.0 * (cov[0][0] + cov[1][1]));
            pairs.push(PairEstimate {
                x_hat,
                gain,
                cov,
                sinr,
                grid_scores,
            });
        }
        llrs = next;
    }
    Ok(PairSpicState {
        pairs,
        llrs,
        iteration: n_iter,
    })
}

/// Pair candidate sets: the `M_k` grid points with the smallest whitened
/// distance, pairs ordered weakest first by pair SINR.
pub fn build_pair_sets(
    state: &PairSpicState,
    model: &RealPairedModel,
    constellation: &Constellation,
    m_vector: &[usize],
) -> Result<CandidateSet> {
    check_m_vector(m_vector, state.pairs.len(), constellation.len())?;
    let order = order_layers(&state.sinrs(), m_vector);
    let sets = order
        .iter()
        .zip(m_vector)
        .map(|(&p, &m)| {
            let mut scores: Vec<(f64, usize)> = state.pairs[p]
                .grid_scores
                .iter()
                .copied()
                .enumerate()
                .map(|(id, d)| (d, id))
                .collect();
            rank_by_distance(&mut scores);
            scores.into_iter().take(m).map(|(_, id)| id).collect()
        })
        .collect();
    let components = order.iter().map(|&p| model.pairs[p]).collect();
    CandidateSet::from_parts(SymbolKind::PamPair, constellation.clone(), components, sets)
}
