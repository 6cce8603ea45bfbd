//! Iterative MMSE detection with soft parallel interference cancellation.
//!
//! Each iteration turns the previous bit LLRs into symbol means and
//! variances, cancels the soft estimates of all other layers, filters with a
//! shared MMSE matrix built from those variances, and recomputes per-layer
//! max-log LLRs under a Gaussian model `x̂_n = β_n·x_n + w̃_n`. The first
//! iteration starts from zero LLRs, i.e. plain linear MMSE.

use num_complex::Complex64;

use crate::constellation::{Constellation, DEFAULT_LLR_CLIP};
use crate::error::{Error, Result};
use crate::numerics::{self, ComplexMatrix};

/// Floor applied to the effective gain and the post-processing variance.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Post-filter statistics of one layer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LayerEstimate {
    pub x_hat: Complex64,
    /// Effective gain `β_n = Re{g_nᴴ h_n}`.
    pub beta: f64,
    /// Post-processing noise-plus-interference variance.
    pub noise_var: f64,
    pub sinr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpicState {
    pub layers: Vec<LayerEstimate>,
    /// `Q·N_L` LLRs, layer-major.
    pub llrs: Vec<f64>,
    /// Number of completed iterations.
    pub iteration: usize,
}

impl SpicState {
    pub fn sinrs(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.sinr).collect()
    }
}

fn check_inputs(y: &[Complex64], h: &ComplexMatrix, n0: f64) -> Result<()> {
    if y.len() != h.rows() {
        return Err(Error::DimensionMismatch(format!(
            "observation of length {} against {} receive antennas",
            y.len(),
            h.rows()
        )));
    }
    if !(n0 > 0.0) {
        return Err(Error::DimensionMismatch(format!("N0 must be positive, got {n0}")));
    }
    Ok(())
}

/// `Hᴴ(HHᴴ + N0·I)⁻¹` — the receive-side form of the linear MMSE filter.
fn oneshot_filter(h: &ComplexMatrix, n0: f64) -> Result<ComplexMatrix> {
    let hh = h.hermitian();
    let a = h.matmul(&hh)?.add_identity(n0);
    // (HHᴴ + N0 I)⁻ᴴ = (HHᴴ + N0 I)⁻¹, so Wᴴ = ((HHᴴ+N0 I)⁻¹ H)ᴴ
    let inv_h = numerics::hpd_solve(&a, h)?;
    Ok(inv_h.hermitian())
}

/// Linear MMSE estimate `x̂ = Hᴴ(HHᴴ + N0·I)⁻¹·y`.
pub fn mmse_oneshot(y: &[Complex64], h: &ComplexMatrix, n0: f64) -> Result<Vec<Complex64>> {
    check_inputs(y, h, n0)?;
    oneshot_filter(h, n0)?.mul_vec(y)
}

/// One-shot MMSE demodulator: `x̂` from [`mmse_oneshot`], `β_n` the diagonal of
/// `Hᴴ(HHᴴ + N0·I)⁻¹H`, and LLRs from the scalar Gaussian model.
pub fn mmse_oneshot_llrs(
    y: &[Complex64],
    h: &ComplexMatrix,
    n0: f64,
    constellation: &Constellation,
) -> Result<SpicState> {
    check_inputs(y, h, n0)?;
    let w = oneshot_filter(h, n0)?;
    let x_hat = w.mul_vec(y)?;
    let mut layers = Vec::with_capacity(h.cols());
    let mut llrs = Vec::with_capacity(h.cols() * constellation.bits_per_symbol());
    for (n, &x) in x_hat.iter().enumerate() {
        let est = post_stats(w.row(n), &h.column(n), 1.0, x);
        llrs.extend(constellation.scalar_llrs(est.x_hat, est.beta, est.noise_var)?);
        layers.push(est);
    }
    Ok(SpicState {
        layers,
        llrs,
        iteration: 1,
    })
}

/// Parallel interference cancellation for layer `n`:
/// `ỹ₍ₙ₎ = y − Σ_{m≠n} h_m·x̆_m`.
pub fn pic(y: &[Complex64], h: &ComplexMatrix, means: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut out = y.to_vec();
    for (m, &mean) in means.iter().enumerate() {
        if m == n || mean == Complex64::new(0.0, 0.0) {
            continue;
        }
        for (r, v) in out.iter_mut().enumerate() {
            *v -= h[(r, m)] * mean;
        }
    }
    out
}

/// Shared SPIC filter `Gᴴ = (HᴴH·R_xx + N0·I)⁻¹Hᴴ` with `R_xx = diag(variances)`.
pub fn spic_filter(h: &ComplexMatrix, variances: &[f64], n0: f64) -> Result<ComplexMatrix> {
    if variances.len() != h.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} prior variances for {} layers",
            variances.len(),
            h.cols()
        )));
    }
    let g = numerics::gram(h);
    let r = ComplexMatrix::diagonal(variances);
    let a = g.matmul(&r)?.add_identity(n0);
    numerics::solve(&a, &h.hermitian())
}

/// Effective gain, post-processing variance and SINR of one layer given its
/// filter row `g_nᴴ`, channel column `h_n` and prior variance. `x_hat` is
/// passed through unchanged.
///
/// Because the shared filter keeps the layer's own prior variance `σ²` in
/// `R_xx`, `β` lies in `(0, 1/σ²]` rather than `(0, 1]`: it reaches `1/N0`
/// for a perfectly known layer on an orthonormal channel. `β` is clamped to
/// that interval so that `σ̃² = β(1 − σ²β)` stays non-negative.
pub fn post_stats(
    filter_row: &[Complex64],
    channel_col: &[Complex64],
    prior_var: f64,
    x_hat: Complex64,
) -> LayerEstimate {
    let gh: Complex64 = filter_row.iter().zip(channel_col).map(|(g, h)| g * h).sum();
    let upper = if prior_var > 0.0 { 1.0 / prior_var } else { f64::INFINITY };
    let beta = gh.re.clamp(VARIANCE_FLOOR, upper.max(VARIANCE_FLOOR));
    let noise_var = (beta * (1.0 - prior_var * beta)).max(VARIANCE_FLOOR);
    LayerEstimate {
        x_hat,
        beta,
        noise_var,
        sinr: beta * beta / noise_var,
    }
}

/// Runs `n_iter` MMSE-SPIC iterations with the default prior clipping.
pub fn run(
    y: &[Complex64],
    h: &ComplexMatrix,
    n0: f64,
    constellation: &Constellation,
    n_iter: usize,
) -> Result<SpicState> {
    run_with_clip(y, h, n0, constellation, n_iter, DEFAULT_LLR_CLIP)
}

pub fn run_with_clip(
    y: &[Complex64],
    h: &ComplexMatrix,
    n0: f64,
    constellation: &Constellation,
    n_iter: usize,
    llr_clip: f64,
) -> Result<SpicState> {
    check_inputs(y, h, n0)?;
    if n_iter == 0 {
        return Err(Error::config("n_iter", "at least one iteration is required"));
    }
    let n_layers = h.cols();
    let q = constellation.bits_per_symbol();
    let mut llrs = vec![0.0; q * n_layers];
    let mut layers = Vec::new();

    for iter in 0..n_iter {
        let (means, vars): (Vec<Complex64>, Vec<f64>) = if iter == 0 {
            (vec![Complex64::new(0.0, 0.0); n_layers], vec![1.0; n_layers])
        } else {
            llrs.chunks(q)
                .map(|l| {
                    let s = constellation.soft_stats(l, llr_clip);
                    (s.mean, s.variance)
                })
                .unzip()
        };
        let filter = spic_filter(h, &vars, n0)?;
        let mut next = Vec::with_capacity(q * n_layers);
        layers.clear();
        for n in 0..n_layers {
            let y_n = pic(y, h, &means, n);
            let row = filter.row(n);
            let x_hat: Complex64 = row.iter().zip(&y_n).map(|(g, v)| g * v).sum();
            let est = post_stats(row, &h.column(n), vars[n], x_hat);
            next.extend(constellation.scalar_llrs(est.x_hat, est.beta, est.noise_var)?);
            layers.push(est);
        }
        llrs = next;
    }
    Ok(SpicState {
        layers,
        llrs,
        iteration: n_iter,
    })
}
