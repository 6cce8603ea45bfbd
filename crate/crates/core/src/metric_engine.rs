//! Tree-structured evaluation of `μ(x) = ‖y − Hx‖²` over candidate lists.
//!
//! With `G = HᴴH` and `z = Hᴴy`,
//!
//! ```text
//! μ_rec(x) = −Re{xᴴz} + ½·xᴴGx
//!          = Σ_L [ γ_L(x_L) + Σ_{m<L} δ_{Lm}(x_L, x_m) ]
//! γ_k(x)      = −Re{x*·z_k} + |x|²·G[k,k]/2
//! δ_{mn}(x,y) = Re{x*·G[m,n]·y}
//! ```
//!
//! and `‖y − Hx‖² = 2·μ_rec(x) + ‖y‖²`. Once γ and δ are tabulated over
//! the candidate sets, every metric is a sum of table entries, and
//! consecutive candidates in lexicographic order share their partial sums.
//!
//! The engine works on 2-real-component blocks so that the complex and the
//! paired real formulations share one implementation. For a complex layer
//! `x = u_0 + j·u_1` the block quantities reduce exactly to the complex
//! ones above.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::candidates::{CandidateList, CandidateSet, RealPairedModel};
use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix};

/// Where the δ-table multiplications are booked.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AccountingMode {
    /// δ products are recomputed for every resource element.
    #[default]
    PerRe,
    /// δ products are reused over a coherence interval and booked at channel rate.
    ChannelRateDeltaExcluded,
}

/// Real-operation counters. Symbol-rate work is what is spent per received
/// vector; channel-rate work (pre-rotations `G[m,n]·y`, constants) is
/// amortised over the coherence interval and reported separately.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OpCounters {
    pub mults_symbol_rate: u64,
    pub mults_channel_rate: u64,
    pub adds: u64,
    #[serde(skip)]
    pub mode: AccountingMode,
}

impl OpCounters {
    pub fn new(mode: AccountingMode) -> Self {
        Self {
            mode,
            ..Self::default()
        }
    }

    /// Real multiplications per resource element.
    pub fn real_mults(&self) -> u64 {
        self.mults_symbol_rate
    }

    pub fn real_adds(&self) -> u64 {
        self.adds
    }

    pub fn merge(&mut self, other: &OpCounters) {
        self.mults_symbol_rate += other.mults_symbol_rate;
        self.mults_channel_rate += other.mults_channel_rate;
        self.adds += other.adds;
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.mode);
    }
}

type Block = [[f64; 2]; 2];

/// `G` and `z` regrouped into 2×2 blocks and 2-vectors per detector layer.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    n: usize,
    z: Vec<[f64; 2]>,
    g: Vec<Block>,
    y_norm_sqr: f64,
}

impl BlockSystem {
    /// From real `G_r = H_rᵀH_r`, `z_r = H_rᵀy_r` and the component pairs of
    /// each detector block.
    pub fn new(
        g_real: &ComplexMatrix,
        z_real: &[f64],
        components: &[(usize, usize)],
        y_norm_sqr: f64,
    ) -> Self {
        let n = components.len();
        let z = components.iter().map(|&(a, b)| [z_real[a], z_real[b]]).collect();
        let mut g = Vec::with_capacity(n * n);
        for &(a, b) in components {
            for &(c, d) in components {
                g.push([
                    [g_real[(a, c)].re, g_real[(a, d)].re],
                    [g_real[(b, c)].re, g_real[(b, d)].re],
                ]);
            }
        }
        Self {
            n,
            z,
            g,
            y_norm_sqr,
        }
    }

    /// From complex `G = HᴴH` and `z = Hᴴy`.
    pub fn from_complex(
        g: &ComplexMatrix,
        z: &[Complex64],
        components: &[(usize, usize)],
        y_norm_sqr: f64,
    ) -> Self {
        let nl = g.rows();
        let g_real = ComplexMatrix::from_fn(2 * nl, 2 * nl, |r, c| {
            let v = g[(r % nl, c % nl)];
            let x = match (r < nl, c < nl) {
                (true, true) | (false, false) => v.re,
                (true, false) => -v.im,
                (false, true) => v.im,
            };
            Complex64::new(x, 0.0)
        });
        let z_real: Vec<f64> = z.iter().map(|v| v.re).chain(z.iter().map(|v| v.im)).collect();
        Self::new(&g_real, &z_real, components, y_norm_sqr)
    }

    /// Complex system for the layers of `set`.
    pub fn complex(h: &ComplexMatrix, y: &[Complex64], set: &CandidateSet) -> Result<Self> {
        let g = numerics::gram(h);
        let z = numerics::matched_filter(h, y)?;
        Ok(Self::from_complex(&g, &z, set.components(), numerics::norm_sqr(y)))
    }

    /// Paired real system for the blocks of `set`.
    pub fn real(model: &RealPairedModel, set: &CandidateSet) -> Self {
        let y2 = model.y().iter().map(|v| v * v).sum();
        Self::new(&model.gram(), &model.matched(), set.components(), y2)
    }

    #[inline]
    pub fn n_layers(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn z(&self, k: usize) -> [f64; 2] {
        self.z[k]
    }

    #[inline]
    pub fn g(&self, k: usize, l: usize) -> &Block {
        &self.g[k * self.n + l]
    }

    pub fn y_norm_sqr(&self) -> f64 {
        self.y_norm_sqr
    }

    /// Diagonal block is a multiple of the identity (always so for complex layers).
    pub fn is_isotropic(&self, k: usize) -> bool {
        let b = self.g(k, k);
        b[0][1] == 0.0 && b[1][0] == 0.0 && b[0][0] == b[1][1]
    }

    /// `μ_rec` evaluated directly as a quadratic form.
    pub fn metric(&self, u: &[[f64; 2]]) -> f64 {
        let mut mu = 0.0;
        for k in 0..self.n {
            mu -= u[k][0] * self.z[k][0] + u[k][1] * self.z[k][1];
            for l in 0..self.n {
                mu += 0.5 * bilinear(&u[k], self.g(k, l), &u[l]);
            }
        }
        mu
    }

    /// `‖y − Hx‖²` from `μ_rec`.
    pub fn true_metric(&self, mu_rec: f64) -> f64 {
        2.0 * mu_rec + self.y_norm_sqr
    }
}

#[inline]
fn bilinear(u: &[f64; 2], g: &Block, v: &[f64; 2]) -> f64 {
    u[0] * (g[0][0] * v[0] + g[0][1] * v[1]) + u[1] * (g[1][0] * v[0] + g[1][1] * v[1])
}

/// γ and δ tabulated over the candidate sets.
#[derive(Debug, Clone)]
pub struct MetricTables {
    sizes: Vec<usize>,
    gamma: Vec<Vec<f64>>,
    /// `delta[l][m]` for `m < l`, indexed `pos_l · M_m + pos_m`.
    delta: Vec<Vec<Vec<f64>>>,
    /// `positions[k][id]`, `usize::MAX` when `id ∉ C_k`.
    positions: Vec<Vec<usize>>,
}

impl MetricTables {
    pub fn gamma(&self, k: usize, pos: usize) -> f64 {
        self.gamma[k][pos]
    }

    pub fn delta(&self, l: usize, m: usize, pos_l: usize, pos_m: usize) -> f64 {
        self.delta[l][m][pos_l * self.sizes[m] + pos_m]
    }

    pub fn gamma_len(&self) -> usize {
        self.gamma.iter().map(Vec::len).sum()
    }

    pub fn delta_len(&self) -> usize {
        self.delta.iter().flatten().map(Vec::len).sum()
    }
}

/// Tabulates γ and δ for the members of `set`.
///
/// Multiplications booked at symbol rate: 3 per γ entry of a complex layer
/// (two for `Re{x*z_k}`, one for `|x|²·G[k,k]/2` with `|x|²` and `G[k,k]/2`
/// tabulated) or 5 for a non-isotropic real pair, and 2 per δ entry against
/// pre-rotated `G[l,m]·x_m`. The pre-rotations themselves (4 per
/// `(l, m, x_m)`) are channel-rate work.
pub fn precompute_tables(
    sys: &BlockSystem,
    set: &CandidateSet,
    counters: &mut OpCounters,
) -> MetricTables {
    let values: Vec<Vec<[f64; 2]>> = set
        .sets()
        .iter()
        .map(|s| s.iter().map(|&id| set.value(id)).collect())
        .collect();
    let mut positions = vec![vec![usize::MAX; set.alphabet_size()]; set.n_layers()];
    for (k, s) in set.sets().iter().enumerate() {
        for (pos, &id) in s.iter().enumerate() {
            positions[k][id] = pos;
        }
    }
    let mut t = tabulate(sys, &values, counters);
    t.positions = positions;
    t
}

fn tabulate(sys: &BlockSystem, values: &[Vec<[f64; 2]>], counters: &mut OpCounters) -> MetricTables {
    let n = sys.n_layers();
    let sizes: Vec<usize> = values.iter().map(Vec::len).collect();

    let mut gamma = Vec::with_capacity(n);
    for (k, vals) in values.iter().enumerate() {
        let z = sys.z(k);
        let b = sys.g(k, k);
        let iso = sys.is_isotropic(k);
        let half = [0.5 * b[0][0], 0.5 * (b[0][1] + b[1][0]), 0.5 * b[1][1]];
        let mut row = Vec::with_capacity(vals.len());
        for u in vals {
            let lin = u[0] * z[0] + u[1] * z[1];
            let quad = if iso {
                (u[0] * u[0] + u[1] * u[1]) * half[0]
            } else {
                u[0] * u[0] * half[0] + u[0] * u[1] * half[1] + u[1] * u[1] * half[2]
            };
            row.push(quad - lin);
        }
        let (mults, adds) = if iso { (3, 2) } else { (5, 4) };
        counters.mults_symbol_rate += mults * vals.len() as u64;
        counters.adds += adds * vals.len() as u64;
        gamma.push(row);
    }

    let mut delta = Vec::with_capacity(n);
    for l in 0..n {
        let mut per_m = Vec::with_capacity(l);
        for m in 0..l {
            let b = sys.g(l, m);
            let rotated: Vec<[f64; 2]> = values[m]
                .iter()
                .map(|v| [b[0][0] * v[0] + b[0][1] * v[1], b[1][0] * v[0] + b[1][1] * v[1]])
                .collect();
            counters.mults_channel_rate += 4 * values[m].len() as u64;
            let mut table = Vec::with_capacity(values[l].len() * values[m].len());
            for u in &values[l] {
                for r in &rotated {
                    table.push(u[0] * r[0] + u[1] * r[1]);
                }
            }
            let entries = table.len() as u64;
            match counters.mode {
                AccountingMode::PerRe => counters.mults_symbol_rate += 2 * entries,
                AccountingMode::ChannelRateDeltaExcluded => {
                    counters.mults_channel_rate += 2 * entries
                }
            }
            counters.adds += entries;
            per_m.push(table);
        }
        delta.push(per_m);
    }
    MetricTables {
        sizes,
        gamma,
        delta,
        positions: Vec::new(),
    }
}

/// `μ_rec` for every entry of `list`, using table lookups and additions
/// only. Partial sums of the common prefix with the previous entry are
/// reused, which realises the tree traversal when `list` is in
/// lexicographic position order.
pub fn evaluate_all(
    tables: &MetricTables,
    list: &CandidateList,
    counters: &mut OpCounters,
) -> Result<Vec<f64>> {
    let n = tables.sizes.len();
    let mut out = Vec::with_capacity(list.len());
    let mut prev_pos = vec![usize::MAX; n];
    let mut pos = vec![0usize; n];
    let mut partial = vec![0.0f64; n];
    for entry in list.iter() {
        for (k, &id) in entry.iter().enumerate() {
            let p = tables.positions[k].get(id).copied().unwrap_or(usize::MAX);
            if p == usize::MAX {
                return Err(Error::CandidateOutsideTable {
                    layer: k,
                    symbol: id,
                });
            }
            pos[k] = p;
        }
        let start = (0..n).find(|&k| pos[k] != prev_pos[k]).unwrap_or(n);
        for l in start..n {
            let mut mu = tables.gamma[l][pos[l]];
            if l > 0 {
                mu += partial[l - 1];
                for m in 0..l {
                    mu += tables.delta[l][m][pos[l] * tables.sizes[m] + pos[m]];
                }
                counters.adds += l as u64 + 1;
            }
            partial[l] = mu;
        }
        prev_pos.copy_from_slice(&pos);
        out.push(partial[n - 1]);
    }
    Ok(out)
}

/// Closed-form operation counts for computing all metrics of the full
/// Cartesian product with M-vector `m`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PredictedCounts {
    pub mults: u64,
    pub adds: u64,
}

/// `mults = 3·ΣM_k + 2·Σ_{k≥2} M_k·Σ_{ℓ<k} M_ℓ` and
/// `adds = 2·ΣM_k + Σ_{k≥2} M_k·Σ_{ℓ<k} M_ℓ + Σ_{ℓ≥3} M_ℓ·Σ_{k≤ℓ−2} Π_{n≤k} M_n
///        + 2·Σ_{k≥2} Π_{ℓ≤k} M_ℓ`.
pub fn predict_counts(m: &[usize]) -> PredictedCounts {
    let m: Vec<u64> = m.iter().map(|&v| v as u64).collect();
    let prefix_prod: Vec<u64> = m
        .iter()
        .scan(1u64, |acc, &v| {
            *acc *= v;
            Some(*acc)
        })
        .collect();
    let sum: u64 = m.iter().sum();
    let cross: u64 = (1..m.len()).map(|k| m[k] * m[..k].iter().sum::<u64>()).sum();
    let third: u64 = (2..m.len())
        .map(|l| m[l] * prefix_prod[..l - 1].iter().sum::<u64>())
        .sum();
    let fourth: u64 = prefix_prod.iter().skip(1).sum();
    PredictedCounts {
        mults: 3 * sum + 2 * cross,
        adds: 2 * sum + cross + third + 2 * fourth,
    }
}

/// Score replacing `μ/N0` when the channel estimate has error variance
/// `σ_ce²` per entry: `N_R·ln(N0 + ‖x‖²σ_ce²) + μ/(N0 + ‖x‖²σ_ce²)`, where
/// `mu` is the true `‖y − Hx‖²`.
pub fn ce_aware_transform(mu: f64, x_energy: f64, n0: f64, sigma_ce_sq: f64, n_rx: usize) -> f64 {
    let density = n0 + x_energy * sigma_ce_sq;
    n_rx as f64 * density.ln() + mu / density
}
