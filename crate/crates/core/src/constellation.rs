//! Gray-labelled QAM alphabets following the LTE downlink mapping tables.
//!
//! Bit `b0` of a label is its most significant bit. Even-indexed bits
//! (`b0, b2, b4`) select the in-phase level and odd-indexed bits select the
//! quadrature level, so every alphabet factors into two identical PAM axes.
//!
//! LLRs are `log P(b = 1) / P(b = 0)` everywhere in this crate.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default LLR clipping magnitude applied before exponentiation.
pub const DEFAULT_LLR_CLIP: f64 = 50.0;

/// Per-axis levels before normalization, indexed by the axis label.
const QPSK_LEVELS: [f64; 2] = [1.0, -1.0];
const QAM16_LEVELS: [f64; 4] = [1.0, 3.0, -1.0, -3.0];
const QAM64_LEVELS: [f64; 8] = [3.0, 1.0, 5.0, 7.0, -3.0, -1.0, -5.0, -7.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constellation {
    bits_per_symbol: usize,
    /// Normalized per-axis amplitudes indexed by axis label.
    axis_levels: Vec<f64>,
    /// Points indexed by their `bits_per_symbol`-bit label.
    points: Vec<Complex64>,
}

/// Mean and variance of a symbol under independent bit priors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SoftSymbolStats {
    pub mean: Complex64,
    pub variance: f64,
}

/// Mean and variance of one real axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AxisStats {
    pub mean: f64,
    pub variance: f64,
}

impl Constellation {
    /// Builds the LTE QPSK (`q = 2`), 16-QAM (`q = 4`) or 64-QAM (`q = 6`) alphabet.
    pub fn build(bits_per_symbol: usize) -> Result<Self> {
        let (raw, energy): (&[f64], f64) = match bits_per_symbol {
            2 => (&QPSK_LEVELS, 2.0),
            4 => (&QAM16_LEVELS, 10.0),
            6 => (&QAM64_LEVELS, 42.0),
            q => return Err(Error::UnsupportedModulation(q)),
        };
        let norm = energy.sqrt().recip();
        let axis_levels: Vec<f64> = raw.iter().map(|v| v * norm).collect();
        let mut c = Self {
            bits_per_symbol,
            axis_levels,
            points: Vec::new(),
        };
        c.points = (0..1usize << bits_per_symbol)
            .map(|label| {
                let (i, q) = c.split_label(label);
                Complex64::new(c.axis_levels[i], c.axis_levels[q])
            })
            .collect();
        Ok(c)
    }

    pub fn qpsk() -> Self {
        Self::build(2).expect("QPSK is supported")
    }

    pub fn qam16() -> Self {
        Self::build(4).expect("16-QAM is supported")
    }

    pub fn qam64() -> Self {
        Self::build(6).expect("64-QAM is supported")
    }

    #[inline]
    pub fn bits_per_symbol(&self) -> usize {
        self.bits_per_symbol
    }

    /// Number of points, `2^Q`.
    #[inline]
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    #[inline]
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    #[inline]
    pub fn point(&self, label: usize) -> Complex64 {
        self.points[label]
    }

    /// Bits carried per real axis.
    #[inline]
    pub fn axis_bits(&self) -> usize {
        self.bits_per_symbol / 2
    }

    #[inline]
    pub fn axis_levels(&self) -> &[f64] {
        &self.axis_levels
    }

    pub fn max_magnitude(&self) -> f64 {
        self.points.iter().map(|p| p.norm()).fold(0.0, f64::max)
    }

    /// Bit `b_i` of `label`, `i = 0` being the first mapped bit.
    #[inline]
    pub fn bit(&self, label: usize, i: usize) -> u8 {
        ((label >> (self.bits_per_symbol - 1 - i)) & 1) as u8
    }

    /// Bit `j` of an axis label; axis bit `j` is symbol bit `2j` (I) or `2j + 1` (Q).
    #[inline]
    pub fn axis_bit(&self, axis_label: usize, j: usize) -> u8 {
        ((axis_label >> (self.axis_bits() - 1 - j)) & 1) as u8
    }

    /// Splits a symbol label into `(in-phase, quadrature)` axis labels.
    pub fn split_label(&self, label: usize) -> (usize, usize) {
        let m = self.axis_bits();
        let (mut i, mut q) = (0, 0);
        for j in 0..m {
            i = (i << 1) | self.bit(label, 2 * j) as usize;
            q = (q << 1) | self.bit(label, 2 * j + 1) as usize;
        }
        (i, q)
    }

    pub fn join_label(&self, i_label: usize, q_label: usize) -> usize {
        let m = self.axis_bits();
        let mut label = 0;
        for j in 0..m {
            label = (label << 1) | self.axis_bit(i_label, j) as usize;
            label = (label << 1) | self.axis_bit(q_label, j) as usize;
        }
        label
    }

    pub fn label_of_bits(&self, bits: &[u8]) -> usize {
        bits.iter().fold(0, |acc, &b| (acc << 1) | (b & 1) as usize)
    }

    pub fn bits_of_label(&self, label: usize) -> impl Iterator<Item = u8> + '_ {
        (0..self.bits_per_symbol).map(move |i| self.bit(label, i))
    }

    /// Maps a `Q·N_L` bit string onto `N_L` symbols.
    pub fn map_bits(&self, bits: &[u8]) -> Result<Vec<Complex64>> {
        Ok(self
            .labels_of_bits(bits)?
            .into_iter()
            .map(|l| self.points[l])
            .collect())
    }

    pub fn labels_of_bits(&self, bits: &[u8]) -> Result<Vec<usize>> {
        if !bits.len().is_multiple_of(self.bits_per_symbol) {
            return Err(Error::DimensionMismatch(format!(
                "{} bits is not a multiple of {} bits per symbol",
                bits.len(),
                self.bits_per_symbol
            )));
        }
        Ok(bits
            .chunks(self.bits_per_symbol)
            .map(|c| self.label_of_bits(c))
            .collect())
    }

    /// Label of the nearest point; ties go to the lower label.
    pub fn hard_demap(&self, x: Complex64) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (label, p) in self.points.iter().enumerate() {
            let d = (x - p).norm_sqr();
            if d < best.0 {
                best = (d, label);
            }
        }
        best.1
    }

    /// Symbol mean and variance from `Q` bit LLRs, clipped at `±clip`.
    pub fn soft_stats(&self, llrs: &[f64], clip: f64) -> SoftSymbolStats {
        debug_assert_eq!(llrs.len(), self.bits_per_symbol);
        let logp = bit_log_probs(llrs, clip);
        let mut mean = Complex64::new(0.0, 0.0);
        let mut energy = 0.0;
        for (label, p) in self.points.iter().enumerate() {
            let w: f64 = (0..self.bits_per_symbol)
                .map(|i| logp[i][self.bit(label, i) as usize])
                .sum::<f64>()
                .exp();
            mean += p * w;
            energy += p.norm_sqr() * w;
        }
        SoftSymbolStats {
            mean,
            variance: (energy - mean.norm_sqr()).max(0.0),
        }
    }

    /// Mean and variance of one PAM axis from its `Q/2` bit LLRs.
    pub fn axis_soft_stats(&self, llrs: &[f64], clip: f64) -> AxisStats {
        debug_assert_eq!(llrs.len(), self.axis_bits());
        let logp = bit_log_probs(llrs, clip);
        let (mut mean, mut energy) = (0.0, 0.0);
        for (a, &level) in self.axis_levels.iter().enumerate() {
            let w: f64 = (0..self.axis_bits())
                .map(|j| logp[j][self.axis_bit(a, j) as usize])
                .sum::<f64>()
                .exp();
            mean += level * w;
            energy += level * level * w;
        }
        AxisStats {
            mean,
            variance: (energy - mean * mean).max(0.0),
        }
    }

    /// Max-log bit LLRs for the scalar model `x̂ = β·s + noise` with noise
    /// variance `σ̃²`.
    pub fn scalar_llrs(&self, x_hat: Complex64, beta: f64, noise_var: f64) -> Result<Vec<f64>> {
        if !(noise_var > 0.0) {
            return Err(Error::DimensionMismatch(format!(
                "post-processing variance must be positive, got {noise_var}"
            )));
        }
        let mut best = vec![[f64::NEG_INFINITY; 2]; self.bits_per_symbol];
        for (label, p) in self.points.iter().enumerate() {
            let score = -(x_hat - p * beta).norm_sqr() / noise_var;
            for (i, slot) in best.iter_mut().enumerate() {
                let b = self.bit(label, i) as usize;
                if score > slot[b] {
                    slot[b] = score;
                }
            }
        }
        Ok(best.into_iter().map(|[zero, one]| one - zero).collect())
    }
}

/// `[log P(b=0), log P(b=1)]` per bit.
fn bit_log_probs(llrs: &[f64], clip: f64) -> Vec<[f64; 2]> {
    llrs.iter()
        .map(|&l| {
            let l = l.clamp(-clip, clip);
            [-softplus(l), -softplus(-l)]
        })
        .collect()
}

/// `log(1 + e^t)` without overflow.
fn softplus(t: f64) -> f64 {
    if t > 0.0 {
        t + (-t).exp().ln_1p()
    } else {
        t.exp().ln_1p()
    }
}
