//! The reduced-set max-log detector: candidate LLRs, missing-bit handling,
//! linear combining with the SPIC LLRs, and the end-to-end pipeline.

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::candidates::{
    build_pair_sets, build_sets, enumerate_and_reduce, pair_spic, real_decompose, PairingMode,
};
use crate::constellation::{Constellation, DEFAULT_LLR_CLIP};
use crate::error::{Error, Result};
use crate::mcmc::{gibbs_refine, GibbsConfig};
use crate::metric_engine::{
    ce_aware_transform, evaluate_all, precompute_tables, AccountingMode, BlockSystem, OpCounters,
};
use crate::mmse_spic;
use crate::numerics::{self, ComplexMatrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorConfig {
    /// Candidates per detector layer, weakest layer first.
    pub m_vector: Vec<usize>,
    /// MMSE-SPIC iterations.
    pub n_iter: usize,
    /// Weight of the candidate LLRs in the output combination.
    pub alpha: f64,
    /// Drop vectors using two or more worst-ranked candidates.
    pub reduction: bool,
    /// Paired real formulation; `None` uses complex layers.
    pub pairing: Option<PairingMode>,
    /// Score candidates with the channel-estimation-error aware metric.
    pub ce_aware: bool,
    pub mcmc: Option<GibbsConfig>,
    pub llr_clip: f64,
    pub accounting: AccountingMode,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            m_vector: vec![5, 5, 3, 3],
            n_iter: 2,
            alpha: 0.5,
            reduction: true,
            pairing: None,
            ce_aware: false,
            mcmc: None,
            llr_clip: DEFAULT_LLR_CLIP,
            accounting: AccountingMode::PerRe,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_vector.is_empty() || self.m_vector.contains(&0) {
            return Err(Error::config("m_vector", "needs one positive entry per layer"));
        }
        if self.m_vector.windows(2).any(|w| w[0] < w[1]) {
            return Err(Error::config("m_vector", "must be non-increasing (weakest layer first)"));
        }
        if self.n_iter == 0 {
            return Err(Error::config("n_iter", "at least one iteration is required"));
        }
        if !(0.0..=1.0).contains(&self.alpha) {
            return Err(Error::config("alpha", format!("must lie in [0, 1], got {}", self.alpha)));
        }
        if !(self.llr_clip > 0.0) {
            return Err(Error::config("llr_clip", "must be positive"));
        }
        if let Some(m) = &self.mcmc {
            m.validate()?;
        }
        Ok(())
    }
}

/// One received vector with the receiver's channel knowledge.
#[derive(Debug, Clone)]
pub struct Observation<'a> {
    pub y: &'a [Complex64],
    /// Channel estimate.
    pub h: &'a ComplexMatrix,
    pub n0: f64,
    /// Per-entry variance of the channel-estimation error.
    pub sigma_ce_sq: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionResult {
    /// Combined output LLRs, `Q·N_L`, physical layer-major.
    pub llrs: Vec<f64>,
    /// Bits on which every evaluated candidate agrees.
    pub missing_bit_mask: Vec<bool>,
    pub candidates_evaluated: usize,
    pub counters: OpCounters,
    pub spic_llrs: Vec<f64>,
    pub rcsmld_llrs: Vec<f64>,
}

/// Best log-weight per bit and hypothesis, `[bit][value]`.
fn hypothesis_maxima(
    weights: &[f64],
    labels: &[usize],
    n_layers: usize,
    constellation: &Constellation,
) -> Vec<[f64; 2]> {
    let q = constellation.bits_per_symbol();
    let mut best = vec![[f64::NEG_INFINITY; 2]; q * n_layers];
    for (w, cand) in weights.iter().zip(labels.chunks(n_layers)) {
        for (layer, &label) in cand.iter().enumerate() {
            for i in 0..q {
                let slot = &mut best[layer * q + i][constellation.bit(label, i) as usize];
                if *w > *slot {
                    *slot = *w;
                }
            }
        }
    }
    best
}

fn llrs_from_weights(
    weights: &[f64],
    labels: &[usize],
    n_layers: usize,
    constellation: &Constellation,
    llr_clip: f64,
) -> (Vec<f64>, Vec<bool>) {
    hypothesis_maxima(weights, labels, n_layers, constellation)
        .into_iter()
        .map(|[zero, one]| match (zero.is_finite(), one.is_finite()) {
            (true, true) => ((one - zero).clamp(-llr_clip, llr_clip), false),
            (false, true) => (llr_clip, true),
            (true, false) => (-llr_clip, true),
            (false, false) => (0.0, true),
        })
        .unzip()
}

/// Max-log LLRs over an explicit candidate list with scores `−2μ_rec/N0`.
///
/// `labels[j]` holds the physical-layer constellation labels of candidate
/// `j`. A bit is flagged missing when all candidates agree on it; its LLR is
/// then `±llr_clip` with the sign of the agreed value.
pub fn candidate_llrs(
    mu_rec: &[f64],
    labels: &[Vec<usize>],
    constellation: &Constellation,
    n0: f64,
    llr_clip: f64,
) -> (Vec<f64>, Vec<bool>) {
    let n_layers = labels.first().map_or(0, Vec::len);
    let weights: Vec<f64> = mu_rec.iter().map(|m| -2.0 * m / n0).collect();
    let flat: Vec<usize> = labels.iter().flatten().copied().collect();
    llrs_from_weights(&weights, &flat, n_layers, constellation, llr_clip)
}

/// `α·L_cand + (1 − α)·L_spic`, with `α = 0` on missing bits, clipped.
pub fn combine(
    l_rcsmld: &[f64],
    l_spic: &[f64],
    alpha: f64,
    missing: &[bool],
    llr_clip: f64,
) -> Vec<f64> {
    l_rcsmld
        .iter()
        .zip(l_spic)
        .zip(missing)
        .map(|((&r, &s), &m)| {
            let v = if m { s } else { alpha * r + (1.0 - alpha) * s };
            v.clamp(-llr_clip, llr_clip)
        })
        .collect()
}

/// Runs the full detector on one observation.
///
/// SPIC (complex or paired real) → per-layer candidate sets in SINR order →
/// Cartesian enumeration with optional corner removal → optional Gibbs
/// refinement → table-based metrics → candidate LLRs → combination with the
/// SPIC LLRs. The result depends only on the inputs and `rng`'s state; `rng`
/// is only drawn from when MCMC is enabled.
pub fn detect(
    obs: &Observation<'_>,
    constellation: &Constellation,
    cfg: &DetectorConfig,
    rng: &mut impl Rng,
) -> Result<DetectionResult> {
    cfg.validate()?;
    let (y, h, n0) = (obs.y, obs.h, obs.n0);
    if !(n0 > 0.0) {
        return Err(Error::config("n0", "must be positive"));
    }
    let n_layers = h.cols();
    // the estimation error adds roughly σ²·‖x‖² ≈ σ²·N_L of noise per antenna
    let n0_front = if cfg.ce_aware {
        n0 + n_layers as f64 * obs.sigma_ce_sq
    } else {
        n0
    };

    let (mut set, sys, spic_llrs) = match cfg.pairing {
        None => {
            let spic =
                mmse_spic::run_with_clip(y, h, n0_front, constellation, cfg.n_iter, cfg.llr_clip)?;
            let set = build_sets(&spic, constellation, &cfg.m_vector)?;
            let sys = BlockSystem::complex(h, y, &set)?;
            (set, sys, spic.llrs)
        }
        Some(mode) => {
            let model = real_decompose(h, y, mode)?;
            let state = pair_spic(&model, n0_front, constellation, cfg.n_iter, cfg.llr_clip)?;
            let set = build_pair_sets(&state, &model, constellation, &cfg.m_vector)?;
            let sys = BlockSystem::real(&model, &set);
            (set, sys, state.llrs)
        }
    };

    let mut list = enumerate_and_reduce(&set, cfg.reduction);
    if let Some(mcmc) = &cfg.mcmc {
        list = gibbs_refine(&list, &sys, &set, n0, mcmc, rng)?;
        set.extend_with(&list);
        list.sort_by_positions(&set);
    }

    let mut counters = OpCounters::new(cfg.accounting);
    let tables = precompute_tables(&sys, &set, &mut counters);
    let mu = evaluate_all(&tables, &list, &mut counters)?;

    let y2 = numerics::norm_sqr(y);
    let mut labels = Vec::with_capacity(list.len() * n_layers);
    let mut weights = Vec::with_capacity(list.len());
    for (entry, &m) in list.iter().zip(&mu) {
        labels.extend(set.to_labels(entry));
        weights.push(if cfg.ce_aware {
            let dist = (2.0 * m + y2).max(0.0);
            -ce_aware_transform(dist, set.energy(entry), n0, obs.sigma_ce_sq, h.rows())
        } else {
            -2.0 * m / n0
        });
    }
    let (rcsmld_llrs, missing_bit_mask) =
        llrs_from_weights(&weights, &labels, n_layers, constellation, cfg.llr_clip);
    let llrs = combine(&rcsmld_llrs, &spic_llrs, cfg.alpha, &missing_bit_mask, cfg.llr_clip);
    Ok(DetectionResult {
        llrs,
        missing_bit_mask,
        candidates_evaluated: list.len(),
        counters,
        spic_llrs,
        rcsmld_llrs,
    })
}
