//! Monte Carlo link-level simulation: seeded trials over an SNR grid, a
//! roster of detectors run on identical realizations, and CSV/JSON output.

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channel::{generate_channel, transmit, trial_rng, ImpairmentConfig};
use crate::constellation::Constellation;
use crate::error::{Error, Result};
use crate::metric_engine::OpCounters;
use crate::oracle::{self, OracleMode, MAX_HYPOTHESES};
use crate::rcsmld::{combine, detect, DetectorConfig, Observation};
use crate::mmse_spic;

/// CSV header, in column order.
pub const CSV_HEADER: [&str; 12] = [
    "snr_db",
    "detector",
    "trials",
    "bits",
    "bit_errors",
    "ber",
    "vec_errors",
    "ver",
    "avg_candidates",
    "real_mults",
    "real_adds",
    "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    /// Linear MMSE with max-log demapping.
    Mmse,
    /// MMSE-SPIC after `config.n_iter` iterations.
    Spic,
    /// Reduced-set detector.
    Rcsmld,
    /// Exhaustive max-log.
    Mlm,
    /// Exhaustive log-MAP.
    Map,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectorSpec {
    pub name: String,
    pub kind: DetectorKind,
    #[serde(default)]
    pub config: DetectorConfig,
    /// `(snr_db, alpha)` steps: the last entry with `snr_db ≤ SNR` overrides
    /// `config.alpha`.
    #[serde(default)]
    pub alpha_schedule: Vec<(f64, f64)>,
    /// For the exhaustive detectors: combine with the SPIC LLRs using alpha.
    #[serde(default)]
    pub combine_with_spic: bool,
}

impl DetectorSpec {
    pub fn new(name: &str, kind: DetectorKind, config: DetectorConfig) -> Self {
        Self {
            name: name.to_string(),
            kind,
            config,
            alpha_schedule: Vec::new(),
            combine_with_spic: false,
        }
    }

    pub fn alpha_at(&self, snr_db: f64) -> f64 {
        self.alpha_schedule
            .iter()
            .filter(|(s, _)| *s <= snr_db)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map_or(self.config.alpha, |(_, a)| *a)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub n_tx: usize,
    pub n_rx: usize,
    pub n_layers: usize,
    /// Bits per symbol: 2, 4 or 6.
    pub bits_per_symbol: usize,
    /// Es/N0 per receive antenna in dB.
    pub snr_db: Vec<f64>,
    pub trials: u32,
    pub seed: u64,
    #[serde(default)]
    pub impairments: ImpairmentConfig,
    #[serde(rename = "detector", default)]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default = "default_output")]
    pub output: PathBuf,
    #[serde(default)]
    pub json_output: Option<PathBuf>,
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// Record wall-clock time; off by default so the CSV is reproducible.
    #[serde(default)]
    pub timing: bool,
}

fn default_output() -> PathBuf {
    PathBuf::from("results.csv")
}

fn default_workers() -> usize {
    1
}

impl SimConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    /// Desk-scale analogues of the four reference test cases: 4×4 rank 4 with
    /// 6 % transmit EVM and perfect channel knowledge.
    pub fn preset(name: &str) -> Result<Self> {
        let (q, corr, detectors) = match name {
            "test1" => (
                4,
                0.0,
                vec![
                    DetectorSpec::new("mmse", DetectorKind::Mmse, DetectorConfig::default()),
                    DetectorSpec::new("spic", DetectorKind::Spic, DetectorConfig::default()),
                    DetectorSpec::new("rcsmld", DetectorKind::Rcsmld, DetectorConfig::default()),
                    DetectorSpec::new("mlm", DetectorKind::Mlm, DetectorConfig::default()),
                ],
            ),
            "test2" => (
                6,
                0.0,
                vec![
                    DetectorSpec::new("mmse", DetectorKind::Mmse, DetectorConfig::default()),
                    DetectorSpec::new("spic", DetectorKind::Spic, DetectorConfig::default()),
                    DetectorSpec::new(
                        "rcsmld",
                        DetectorKind::Rcsmld,
                        DetectorConfig {
                            m_vector: vec![7, 7, 4, 4],
                            ..Default::default()
                        },
                    ),
                ],
            ),
            "test3" => (
                2,
                0.9,
                vec![
                    DetectorSpec::new("mmse", DetectorKind::Mmse, DetectorConfig::default()),
                    DetectorSpec::new("spic", DetectorKind::Spic, DetectorConfig::default()),
                    DetectorSpec::new(
                        "rcsmld",
                        DetectorKind::Rcsmld,
                        DetectorConfig {
                            m_vector: vec![3, 3, 2, 2],
                            ..Default::default()
                        },
                    ),
                    DetectorSpec::new("mlm", DetectorKind::Mlm, DetectorConfig::default()),
                    DetectorSpec::new("map", DetectorKind::Map, DetectorConfig::default()),
                    DetectorSpec {
                        combine_with_spic: true,
                        ..DetectorSpec::new("map+spic", DetectorKind::Map, DetectorConfig::default())
                    },
                ],
            ),
            "test4" => (
                4,
                0.1,
                vec![
                    DetectorSpec::new(
                        "rcsmld",
                        DetectorKind::Rcsmld,
                        DetectorConfig {
                            m_vector: vec![4, 4, 2, 2],
                            ..Default::default()
                        },
                    ),
                    DetectorSpec::new(
                        "rcsmld+mcmc",
                        DetectorKind::Rcsmld,
                        DetectorConfig {
                            m_vector: vec![3, 3, 2, 2],
                            mcmc: Some(crate::mcmc::GibbsConfig {
                                n_samplers: 4,
                                n_sweeps: 3,
                                temperature: 1.0,
                                pool_cap: 48,
                            }),
                            ..Default::default()
                        },
                    ),
                    DetectorSpec::new("map", DetectorKind::Map, DetectorConfig::default()),
                    DetectorSpec {
                        combine_with_spic: true,
                        ..DetectorSpec::new("map+spic", DetectorKind::Map, DetectorConfig::default())
                    },
                ],
            ),
            other => {
                return Err(Error::config(
                    "preset",
                    format!("unknown preset `{other}` (expected test1..test4)"),
                ))
            }
        };
        Ok(Self {
            n_tx: 4,
            n_rx: 4,
            n_layers: 4,
            bits_per_symbol: q,
            snr_db: vec![10.0, 14.0, 18.0, 22.0],
            trials: 1000,
            seed: 1,
            impairments: ImpairmentConfig {
                evm_fraction: 0.06,
                sigma_ce_sq: 0.0,
                alpha_tx: corr,
                beta_rx: corr,
            },
            detectors,
            output: default_output(),
            json_output: None,
            workers: 1,
            timing: false,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            return Err(Error::config("trials", "must be at least 1"));
        }
        if self.n_layers == 0 {
            return Err(Error::config("n_layers", "must be at least 1"));
        }
        let max = self.n_tx.min(self.n_rx);
        if max > 4 {
            return Err(Error::config("n_tx/n_rx", "at most 4 antennas are supported"));
        }
        if self.n_layers > max {
            return Err(Error::config(
                "n_layers",
                format!("{} layers exceed min(n_tx, n_rx) = {max}", self.n_layers),
            ));
        }
        if !matches!(self.bits_per_symbol, 2 | 4 | 6) {
            return Err(Error::config("bits_per_symbol", "must be 2, 4 or 6"));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return Err(Error::config("snr_db", "needs at least one finite value"));
        }
        if self.snr_db.len() > u32::MAX as usize {
            return Err(Error::config("snr_db", "too many points"));
        }
        if self.workers == 0 {
            return Err(Error::config("workers", "must be at least 1"));
        }
        self.impairments.validate()?;
        if self.detectors.is_empty() {
            return Err(Error::config("detector", "the roster is empty"));
        }
        let mut names = HashSet::new();
        let space = (1u128 << self.bits_per_symbol).pow(self.n_layers as u32);
        for d in &self.detectors {
            let field = |f: &str| format!("detector.{}.{f}", d.name);
            if !names.insert(d.name.as_str()) {
                return Err(Error::config("detector.name", format!("duplicate name `{}`", d.name)));
            }
            d.config.validate().map_err(|e| match e {
                Error::InvalidConfig { field: f, reason } => Error::InvalidConfig {
                    field: field(&f),
                    reason,
                },
                other => other,
            })?;
            if d.alpha_schedule.iter().any(|(_, a)| !(0.0..=1.0).contains(a)) {
                return Err(Error::config(field("alpha_schedule"), "alpha must lie in [0, 1]"));
            }
            match d.kind {
                DetectorKind::Rcsmld => {
                    if d.config.m_vector.len() != self.n_layers {
                        return Err(Error::config(
                            field("config.m_vector"),
                            format!("needs {} entries", self.n_layers),
                        ));
                    }
                    if d.config.m_vector[0] > 1 << self.bits_per_symbol {
                        return Err(Error::config(
                            field("config.m_vector"),
                            "entries exceed the constellation size",
                        ));
                    }
                }
                DetectorKind::Mlm | DetectorKind::Map if space > MAX_HYPOTHESES => {
                    return Err(Error::config(
                        field("kind"),
                        format!("exhaustive search over {space} hypotheses exceeds {MAX_HYPOTHESES}"),
                    ));
                }
                _ => {}
            }
        }
        Ok(())
    }
}

/// Aggregated statistics of one detector at one SNR.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Tally {
    pub trials: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub vec_errors: u64,
    pub candidates: u64,
    pub counters: OpCounters,
    pub wall_ns: u64,
}

impl Tally {
    pub fn merge(&mut self, other: &Tally) {
        self.trials += other.trials;
        self.bits += other.bits;
        self.bit_errors += other.bit_errors;
        self.vec_errors += other.vec_errors;
        self.candidates += other.candidates;
        self.counters.merge(&other.counters);
        self.wall_ns += other.wall_ns;
    }
}

/// Outcome of one detector on one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub snr_db: f64,
    pub detector: String,
    pub bits: u64,
    pub bit_errors: u64,
    pub vec_error: bool,
    pub candidates: u64,
    pub counters: OpCounters,
    pub wall_ns: u64,
    pub llrs: Vec<f64>,
}

/// One output row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub snr_db: f64,
    pub detector: String,
    pub trials: u64,
    pub bits: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub vec_errors: u64,
    pub ver: f64,
    pub avg_candidates: f64,
    pub real_mults: f64,
    pub real_adds: f64,
    pub wall_ms: f64,
    pub mults_symbol_rate: f64,
    pub mults_channel_rate: f64,
    pub adds: f64,
}

impl ResultRow {
    fn from_tally(snr_db: f64, detector: &str, t: &Tally) -> Self {
        let per = |v: u64| v as f64 / t.trials as f64;
        Self {
            snr_db,
            detector: detector.to_string(),
            trials: t.trials,
            bits: t.bits,
            bit_errors: t.bit_errors,
            ber: t.bit_errors as f64 / t.bits as f64,
            vec_errors: t.vec_errors,
            ver: per(t.vec_errors),
            avg_candidates: per(t.candidates),
            real_mults: per(t.counters.real_mults()),
            real_adds: per(t.counters.real_adds()),
            wall_ms: t.wall_ns as f64 / 1e6 / t.trials as f64,
            mults_symbol_rate: per(t.counters.mults_symbol_rate),
            mults_channel_rate: per(t.counters.mults_channel_rate),
            adds: per(t.counters.adds),
        }
    }
}

/// `N0 = N_L·10^(−SNR/10)` for unit-energy symbols and unit-gain entries.
pub fn noise_variance(snr_db: f64, n_layers: usize) -> f64 {
    n_layers as f64 * 10f64.powf(-snr_db / 10.0)
}

/// Runs every detector of the roster on trial `trial` at SNR index `snr_idx`.
pub fn run_trial(cfg: &SimConfig, snr_idx: u32, trial: u32) -> Result<Vec<TrialRecord>> {
    let constellation = Constellation::build(cfg.bits_per_symbol)?;
    run_trial_with(cfg, &constellation, snr_idx, trial)
}

fn run_trial_with(
    cfg: &SimConfig,
    constellation: &Constellation,
    snr_idx: u32,
    trial: u32,
) -> Result<Vec<TrialRecord>> {
    let snr_db = cfg.snr_db[snr_idx as usize];
    let n0 = noise_variance(snr_db, cfg.n_layers);
    let mut rng = trial_rng(cfg.seed, snr_idx, trial);
    let ch = generate_channel(&mut rng, cfg.n_rx, cfg.n_layers, &cfg.impairments, n0)?;
    let q = constellation.bits_per_symbol();
    let bits: Vec<u8> = (0..q * cfg.n_layers).map(|_| rng.random_range(0..2u8)).collect();
    let x = constellation.map_bits(&bits)?;
    let y = transmit(&mut rng, &ch.h_true, &x, n0, cfg.impairments.evm_fraction)?;
    // one independent generator per roster entry, drawn in roster order
    let seeds: Vec<u64> = cfg.detectors.iter().map(|_| rng.random()).collect();

    let obs = Observation {
        y: &y,
        h: &ch.h_est,
        n0,
        sigma_ce_sq: ch.sigma_ce_sq,
    };
    let mut out = Vec::with_capacity(cfg.detectors.len());
    for (spec, seed) in cfg.detectors.iter().zip(seeds) {
        let start = cfg.timing.then(Instant::now);
        let (llrs, candidates, counters) =
            run_detector(spec, &obs, constellation, snr_db, seed)?;
        let wall_ns = start.map_or(0, |s| s.elapsed().as_nanos() as u64);
        let bit_errors = llrs
            .iter()
            .zip(&bits)
            .filter(|(l, b)| (**l > 0.0) != (**b == 1))
            .count() as u64;
        out.push(TrialRecord {
            snr_db,
            detector: spec.name.clone(),
            bits: bits.len() as u64,
            bit_errors,
            vec_error: bit_errors > 0,
            candidates,
            counters,
            wall_ns,
            llrs,
        });
    }
    Ok(out)
}

fn run_detector(
    spec: &DetectorSpec,
    obs: &Observation<'_>,
    constellation: &Constellation,
    snr_db: f64,
    seed: u64,
) -> Result<(Vec<f64>, u64, OpCounters)> {
    let mut cfg = spec.config.clone();
    cfg.alpha = spec.alpha_at(snr_db);
    let counters = OpCounters::new(cfg.accounting);
    let (y, h, n0) = (obs.y, obs.h, obs.n0);
    let clip = |v: Vec<f64>| -> Vec<f64> {
        v.into_iter().map(|l| l.clamp(-cfg.llr_clip, cfg.llr_clip)).collect()
    };
    Ok(match spec.kind {
        DetectorKind::Mmse => {
            let s = mmse_spic::mmse_oneshot_llrs(y, h, n0, constellation)?;
            (clip(s.llrs), 0, counters)
        }
        DetectorKind::Spic => {
            let s = mmse_spic::run_with_clip(y, h, n0, constellation, cfg.n_iter, cfg.llr_clip)?;
            (clip(s.llrs), 0, counters)
        }
        DetectorKind::Rcsmld => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let r = detect(obs, constellation, &cfg, &mut rng)?;
            (r.llrs, r.candidates_evaluated as u64, r.counters)
        }
        DetectorKind::Mlm | DetectorKind::Map => {
            let mode = if spec.kind == DetectorKind::Mlm {
                OracleMode::Mlm
            } else {
                OracleMode::Map
            };
            let l = if cfg.ce_aware {
                oracle::ce_aware_oracle(y, h, n0, obs.sigma_ce_sq, constellation, mode)?
            } else if mode == OracleMode::Mlm {
                oracle::mlm_llrs(y, h, n0, constellation)?
            } else {
                oracle::map_llrs(y, h, n0, constellation)?
            };
            let hypotheses = (constellation.len() as u64).pow(h.cols() as u32);
            let l = if spec.combine_with_spic {
                let s = mmse_spic::run_with_clip(y, h, n0, constellation, cfg.n_iter, cfg.llr_clip)?;
                combine(&l, &s.llrs, cfg.alpha, &vec![false; l.len()], cfg.llr_clip)
            } else {
                clip(l)
            };
            (l, hypotheses, counters)
        }
    })
}

/// Aggregates for every `(snr, detector)` in SNR-major, roster order.
#[derive(Debug, Clone, PartialEq)]
pub struct SimResults {
    pub rows: Vec<ResultRow>,
    pub tallies: Vec<Vec<Tally>>,
}

fn tally_trial(records: &[TrialRecord]) -> Vec<Tally> {
    records
        .iter()
        .map(|r| Tally {
            trials: 1,
            bits: r.bits,
            bit_errors: r.bit_errors,
            vec_errors: u64::from(r.vec_error),
            candidates: r.candidates,
            counters: r.counters,
            wall_ns: r.wall_ns,
        })
        .collect()
}

fn merge_all(mut a: Vec<Tally>, b: Vec<Tally>) -> Vec<Tally> {
    for (x, y) in a.iter_mut().zip(&b) {
        x.merge(y);
    }
    a
}

fn run_snr(cfg: &SimConfig, constellation: &Constellation, snr_idx: u32) -> Result<Vec<Tally>> {
    let zero = vec![Tally::default(); cfg.detectors.len()];
    let one = |t: u32| run_trial_with(cfg, constellation, snr_idx, t).map(|r| tally_trial(&r));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..cfg.trials)
            .into_par_iter()
            .map(one)
            .try_reduce(|| zero.clone(), |a, b| Ok(merge_all(a, b)))
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..cfg.trials).try_fold(zero, |acc, t| Ok(merge_all(acc, one(t)?)))
    }
}

/// Runs the whole sweep. Results are independent of `cfg.workers` because
/// every trial owns its generator and aggregation is integer addition.
pub fn run(cfg: &SimConfig) -> Result<SimResults> {
    cfg.validate()?;
    let constellation = Constellation::build(cfg.bits_per_symbol)?;
    let sweep = || -> Result<Vec<Vec<Tally>>> {
        (0..cfg.snr_db.len() as u32)
            .map(|i| run_snr(cfg, &constellation, i))
            .collect()
    };
    #[cfg(feature = "parallel")]
    let tallies = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::config("workers", e.to_string()))?
        .install(sweep)?;
    #[cfg(not(feature = "parallel"))]
    let tallies = sweep()?;

    let rows = cfg
        .snr_db
        .iter()
        .zip(&tallies)
        .flat_map(|(&snr, per_det)| {
            cfg.detectors
                .iter()
                .zip(per_det)
                .map(move |(d, t)| ResultRow::from_tally(snr, &d.name, t))
        })
        .collect();
    Ok(SimResults { rows, tallies })
}

/// `printf("%.10g")` formatting.
pub fn format_g10(x: f64) -> String {
    if x == 0.0 {
        return "0".into();
    }
    if !x.is_finite() {
        return if x.is_nan() { "nan".into() } else if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let sci = format!("{x:.9e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if !(-4..10).contains(&exp) {
        let m = trim_zeros(mantissa);
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{m}e{sign}{:02}", exp.abs())
    } else {
        let decimals = (9 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

/// Writes the aggregate CSV. An empty row set is an error and writes nothing.
pub fn write_results(path: &Path, rows: &[ResultRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::config("detector", "no results to write"));
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            format_g10(r.snr_db),
            r.detector.clone(),
            r.trials.to_string(),
            r.bits.to_string(),
            r.bit_errors.to_string(),
            format_g10(r.ber),
            r.vec_errors.to_string(),
            format_g10(r.ver),
            format_g10(r.avg_candidates),
            format_g10(r.real_mults),
            format_g10(r.real_adds),
            format_g10(r.wall_ms),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// JSON mirror of the CSV rows, with the split operation counters.
pub fn write_json(path: &Path, rows: &[ResultRow]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    serde_json::to_writer_pretty(std::io::BufWriter::new(file), rows)?;
    Ok(())
}

/// Runs `cfg` and writes its outputs.
pub fn run_and_write(cfg: &SimConfig) -> Result<SimResults> {
    let results = run(cfg)?;
    write_results(&cfg.output, &results.rows)?;
    if let Some(json) = &cfg.json_output {
        write_json(json, &results.rows)?;
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(detectors: Vec<DetectorSpec>) -> SimConfig {
        SimConfig {
            n_tx: 2,
            n_rx: 2,
            n_layers: 2,
            bits_per_symbol: 2,
            snr_db: vec![6.0, 12.0],
            trials: 200,
            seed: 42,
            impairments: ImpairmentConfig::default(),
            detectors,
            output: default_output(),
            json_output: None,
            workers: 1,
            timing: false,
        }
    }

    fn roster() -> Vec<DetectorSpec> {
        vec![
            DetectorSpec::new("mmse", DetectorKind::Mmse, DetectorConfig::default()),
            DetectorSpec::new(
                "rcsmld",
                DetectorKind::Rcsmld,
                DetectorConfig {
                    m_vector: vec![3, 2],
                    ..Default::default()
                },
            ),
            DetectorSpec::new("mlm", DetectorKind::Mlm, DetectorConfig::default()),
        ]
    }

    #[test]
    fn format_matches_printf_g10() {
        let cases = [
            (0.0, "0"),
            (1.0, "1"),
            (0.5, "0.5"),
            (1.0 / 3.0, "0.3333333333"),
            (2.0 / 3.0 * 1e-5, "6.666666667e-06"),
            (123456.789, "123456.789"),
            (1e10, "1e+10"),
            (9999999999.5, "1e+10"),
            (0.0001234, "0.0001234"),
            (-2.5, "-2.5"),
            (18.0, "18"),
            (453.0, "453"),
        ];
        for (x, s) in cases {
            assert_eq!(format_g10(x), s, "{x}");
        }
    }

    #[test]
    fn noise_variance_definition() {
        assert!((noise_variance(0.0, 4) - 4.0).abs() < 1e-15);
        assert!((noise_variance(10.0, 2) - 0.2).abs() < 1e-15);
    }

    #[test]
    fn noiseless_single_trial_has_no_errors() {
        let mut cfg = small(roster());
        cfg.snr_db = vec![200.0];
        cfg.trials = 1;
        let r = run(&cfg).unwrap();
        assert!(r.rows.iter().all(|row| row.bit_errors == 0));
    }

    #[test]
    fn rows_are_snr_major_with_consistent_ratios() {
        let cfg = small(vec![DetectorSpec::new("mlm", DetectorKind::Mlm, DetectorConfig::default())]);
        let r = run(&cfg).unwrap();
        assert_eq!(r.rows.len(), 2);
        for row in &r.rows {
            assert_eq!(row.bits, 200 * 4);
            assert!(row.bit_errors <= row.bits && row.vec_errors <= row.trials);
            assert_eq!(format_g10(row.ber), format_g10(row.bit_errors as f64 / row.bits as f64));
        }
        assert_eq!(r.rows[0].snr_db, 6.0);
    }

    #[test]
    fn aggregates_equal_sum_of_trials() {
        let cfg = small(roster());
        let r = run(&cfg).unwrap();
        for (s, per_det) in r.tallies.iter().enumerate() {
            let mut sum = vec![Tally::default(); 3];
            for t in 0..cfg.trials {
                sum = merge_all(sum, tally_trial(&run_trial(&cfg, s as u32, t).unwrap()));
            }
            assert_eq!(&sum, per_det);
        }
    }

    #[test]
    fn paired_realisations_across_roster() {
        // the same detector listed twice sees the same data
        let mut det = roster();
        det.push(DetectorSpec::new("mlm2", DetectorKind::Mlm, DetectorConfig::default()));
        let cfg = small(det);
        for t in 0..20 {
            let recs = run_trial(&cfg, 0, t).unwrap();
            assert_eq!(recs[2].llrs, recs[3].llrs);
        }
    }

    #[test]
    fn worker_count_does_not_change_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(roster());
        let mut files = Vec::new();
        for workers in [1, 3] {
            cfg.workers = workers;
            cfg.output = dir.path().join(format!("w{workers}.csv"));
            run_and_write(&cfg).unwrap();
            files.push(std::fs::read(&cfg.output).unwrap());
        }
        assert_eq!(files[0], files[1]);
        let text = String::from_utf8(files.remove(0)).unwrap();
        assert_eq!(text.lines().next().unwrap(), CSV_HEADER.join(","));
        assert_eq!(text.lines().count(), 1 + 2 * 3);
    }

    #[test]
    fn empty_roster_is_rejected_without_output() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small(Vec::new());
        cfg.output = dir.path().join("out.csv");
        let err = run_and_write(&cfg).unwrap_err();
        assert!(err.to_string().contains("detector"));
        assert!(!cfg.output.exists());
        assert!(write_results(&cfg.output, &[]).is_err());
        assert!(!cfg.output.exists());
    }

    #[test]
    fn validation_names_fields() {
        let mut cfg = small(roster());
        cfg.n_layers = 3;
        assert!(cfg.validate().unwrap_err().to_string().contains("n_layers"));
        let mut cfg = small(roster());
        cfg.trials = 0;
        assert!(cfg.validate().unwrap_err().to_string().contains("trials"));
        let mut cfg = small(roster());
        cfg.detectors[1].config.alpha = 2.0;
        assert!(cfg.validate().unwrap_err().to_string().contains("detector.rcsmld.alpha"));
        let mut cfg = small(roster());
        cfg.bits_per_symbol = 6;
        cfg.n_tx = 4;
        cfg.n_rx = 4;
        cfg.n_layers = 4;
        cfg.detectors = vec![DetectorSpec::new("mlm", DetectorKind::Mlm, DetectorConfig::default())];
        assert!(cfg.validate().unwrap_err().to_string().contains("detector.mlm.kind"));
    }

    #[test]
    fn toml_round_trip_and_presets() {
        let text = r#"
            n_tx = 2
            n_rx = 2
            n_layers = 2
            bits_per_symbol = 4
            snr_db = [10.0, 20.0]
            trials = 5
            seed = 7

            [impairments]
            evm_fraction = 0.06

            [[detector]]
            name = "rcs"
            kind = "rcsmld"
            alpha_schedule = [[15.0, 0.0]]
            [detector.config]
            m_vector = [4, 3]
            n_iter = 3
        "#;
        let cfg = SimConfig::from_toml_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.detectors[0].config.m_vector, vec![4, 3]);
        assert_eq!(cfg.detectors[0].alpha_at(10.0), 0.5);
        assert_eq!(cfg.detectors[0].alpha_at(20.0), 0.0);
        assert!(SimConfig::from_toml_str("n_tx = 2\nbogus = 1").is_err());
        for p in ["test1", "test2", "test3", "test4"] {
            SimConfig::preset(p).unwrap().validate().unwrap();
        }
        assert!(SimConfig::preset("test5").is_err());
    }
}
