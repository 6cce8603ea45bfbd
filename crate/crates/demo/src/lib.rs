//! Browser front end for the detector library. Every export takes plain
//! numbers/strings and returns a JSON string for the page to draw.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::*;

use rcsmld::candidates::predict_survivors;
use rcsmld::channel::{generate_channel, transmit, ImpairmentConfig};
use rcsmld::harness::{self, noise_variance, DetectorKind, DetectorSpec, SimConfig};
use rcsmld::metric_engine::predict_counts;
use rcsmld::mmse_spic;
use rcsmld::{Constellation, DetectorConfig};

const MAX_TRIALS: u32 = 20_000;

#[derive(Serialize)]
struct Counts {
    m_vector: Vec<usize>,
    enumerated: u64,
    survivors: u64,
    mults: u64,
    adds: u64,
    /// Share of the exhaustive search space, in percent.
    search_fraction: f64,
}

#[derive(Serialize)]
struct Scatter {
    points: Vec<[f64; 2]>,
    /// Constellation labels of the transmitted symbols, one per point.
    sent: Vec<usize>,
    reference: Vec<[f64; 2]>,
}

fn parse_m(text: &str) -> Result<Vec<usize>, String> {
    let m = text
        .split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|e| format!("bad M entry `{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    if m.is_empty() || m.len() > 8 || m.iter().any(|&v| v == 0 || v > 64) {
        return Err("M-vector needs 1..8 entries in 1..=64".into());
    }
    Ok(m)
}

fn json<T: Serialize>(v: &T) -> Result<String, String> {
    serde_json::to_string(v).map_err(|e| e.to_string())
}

pub fn candidate_counts_json(m_vector: &str, bits_per_symbol: usize) -> Result<String, String> {
    let m = parse_m(m_vector)?;
    let size = Constellation::build(bits_per_symbol).map_err(|e| e.to_string())?.len();
    if m.iter().any(|&v| v > size) {
        return Err(format!("M entries cannot exceed {size}"));
    }
    let p = predict_counts(&m);
    let enumerated: u64 = m.iter().map(|&v| v as u64).product();
    json(&Counts {
        search_fraction: 100.0 * enumerated as f64 / (size as f64).powi(m.len() as i32),
        survivors: predict_survivors(&m),
        enumerated,
        mults: p.mults,
        adds: p.adds,
        m_vector: m,
    })
}

/// Gain-normalised SPIC estimates `x̂/β` over `trials` random 4×4 channels.
pub fn spic_scatter_json(
    bits_per_symbol: usize,
    snr_db: f64,
    n_iter: usize,
    trials: u32,
    seed: u64,
) -> Result<String, String> {
    let c = Constellation::build(bits_per_symbol).map_err(|e| e.to_string())?;
    if n_iter == 0 || n_iter > 8 {
        return Err("n_iter must be 1..=8".into());
    }
    let nl = 4;
    let n0 = noise_variance(snr_db, nl);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Scatter {
        points: Vec::new(),
        sent: Vec::new(),
        reference: c.points().iter().map(|p| [p.re, p.im]).collect(),
    };
    for _ in 0..trials.min(2000) {
        let ch = generate_channel(&mut rng, nl, nl, &ImpairmentConfig::default(), n0)
            .map_err(|e| e.to_string())?;
        let labels: Vec<usize> = (0..nl).map(|_| rng.random_range(0..c.len())).collect();
        let x: Vec<_> = labels.iter().map(|&l| c.point(l)).collect();
        let y = transmit(&mut rng, &ch.h_true, &x, n0, 0.0).map_err(|e| e.to_string())?;
        let st = mmse_spic::run(&y, &ch.h_est, n0, &c, n_iter).map_err(|e| e.to_string())?;
        for (est, l) in st.layers.iter().zip(labels) {
            let p = est.x_hat / est.beta;
            out.points.push([p.re, p.im]);
            out.sent.push(l);
        }
    }
    json(&out)
}

/// BER/VER of MMSE, SPIC and the reduced-set detector on 4×4 at one or more
/// SNR points (`snr_list` comma separated).
pub fn ber_sweep_json(
    bits_per_symbol: usize,
    snr_list: &str,
    trials: u32,
    seed: u64,
    m_vector: &str,
    alpha: f64,
) -> Result<String, String> {
    let snr_db = snr_list
        .split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("bad SNR `{t}`: {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    let rcs = DetectorConfig {
        m_vector: parse_m(m_vector)?,
        alpha,
        ..Default::default()
    };
    let cfg = SimConfig {
        n_tx: 4,
        n_rx: 4,
        n_layers: 4,
        bits_per_symbol,
        snr_db,
        trials: trials.min(MAX_TRIALS),
        seed,
        impairments: ImpairmentConfig::default(),
        detectors: vec![
            DetectorSpec::new("mmse", DetectorKind::Mmse, DetectorConfig::default()),
            DetectorSpec::new("spic", DetectorKind::Spic, DetectorConfig::default()),
            DetectorSpec::new("rcsmld", DetectorKind::Rcsmld, rcs),
        ],
        output: "unused.csv".into(),
        json_output: None,
        workers: 1,
        timing: false,
    };
    let res = harness::run(&cfg).map_err(|e| e.to_string())?;
    json(&res.rows)
}

#[wasm_bindgen]
pub fn candidate_counts(m_vector: &str, bits_per_symbol: usize) -> Result<String, JsValue> {
    candidate_counts_json(m_vector, bits_per_symbol).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn spic_scatter(
    bits_per_symbol: usize,
    snr_db: f64,
    n_iter: usize,
    trials: u32,
    seed: u64,
) -> Result<String, JsValue> {
    spic_scatter_json(bits_per_symbol, snr_db, n_iter, trials, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn ber_sweep(
    bits_per_symbol: usize,
    snr_list: &str,
    trials: u32,
    seed: u64,
    m_vector: &str,
    alpha: f64,
) -> Result<String, JsValue> {
    ber_sweep_json(bits_per_symbol, snr_list, trials, seed, m_vector, alpha)
        .map_err(|e| JsValue::from_str(&e))
}
