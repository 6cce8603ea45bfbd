use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use rcsmld::harness::{self, DetectorKind, DetectorSpec, SimConfig};
use rcsmld::{DetectorConfig, Error, Result};

/// Monte Carlo BER simulation of soft-output MIMO detectors.
#[derive(Debug, Parser)]
#[command(name = "rcsmld-sim", version)]
struct Args {
    /// TOML configuration file.
    #[arg(long, conflicts_with = "preset")]
    config: Option<PathBuf>,
    /// Built-in scenario: test1, test2, test3 or test4.
    #[arg(long)]
    preset: Option<String>,
    /// SNR points in dB (comma separated).
    #[arg(long, value_delimiter = ',')]
    snr: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    /// Restrict the roster to these detector names, or add a detector of
    /// this kind (mmse, spic, rcsmld, mlm, map) if no entry has that name.
    #[arg(long, value_delimiter = ',')]
    detector: Option<Vec<String>>,
    /// M-vector applied to every rcsmld detector (comma separated).
    #[arg(long, value_delimiter = ',')]
    m_vector: Option<Vec<usize>>,
    /// Combining weight applied to every detector.
    #[arg(long)]
    alpha: Option<f64>,
    /// SPIC iterations applied to every detector.
    #[arg(long)]
    niter: Option<usize>,
    /// Output CSV path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON mirror of the CSV rows.
    #[arg(long)]
    json: Option<PathBuf>,
    #[arg(long)]
    workers: Option<usize>,
    /// Record wall-clock time per detection (makes the CSV non-reproducible).
    #[arg(long)]
    timing: bool,
}

fn parse_kind(name: &str) -> Option<DetectorKind> {
    Some(match name {
        "mmse" => DetectorKind::Mmse,
        "spic" => DetectorKind::Spic,
        "rcsmld" => DetectorKind::Rcsmld,
        "mlm" => DetectorKind::Mlm,
        "map" => DetectorKind::Map,
        _ => return None,
    })
}

fn build_config(args: Args) -> Result<SimConfig> {
    let mut cfg = match (&args.config, &args.preset) {
        (Some(path), _) => SimConfig::from_file(path)?,
        (None, Some(p)) => SimConfig::preset(p)?,
        (None, None) => SimConfig::preset("test1")?,
    };
    if let Some(snr) = args.snr {
        cfg.snr_db = snr;
    }
    if let Some(t) = args.trials {
        cfg.trials = t;
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(names) = args.detector {
        let mut roster = Vec::new();
        for name in names {
            if let Some(d) = cfg.detectors.iter().find(|d| d.name == name) {
                roster.push(d.clone());
            } else if let Some(kind) = parse_kind(&name) {
                let size = 1usize << cfg.bits_per_symbol;
                let m_vector = match cfg.n_layers {
                    4 if size >= 16 => vec![5, 5, 3, 3],
                    n => vec![size.min(4); n],
                };
                let config = DetectorConfig {
                    m_vector,
                    ..Default::default()
                };
                roster.push(DetectorSpec::new(&name, kind, config));
            } else {
                return Err(Error::InvalidConfig {
                    field: "detector".into(),
                    reason: format!("unknown detector `{name}`"),
                });
            }
        }
        cfg.detectors = roster;
    }
    for d in &mut cfg.detectors {
        if let (Some(m), DetectorKind::Rcsmld) = (&args.m_vector, d.kind) {
            d.config.m_vector = m.clone();
        }
        if let Some(a) = args.alpha {
            d.config.alpha = a;
            d.alpha_schedule.clear();
        }
        if let Some(n) = args.niter {
            d.config.n_iter = n;
        }
    }
    if let Some(out) = args.out {
        cfg.output = out;
    }
    if args.json.is_some() {
        cfg.json_output = args.json;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    cfg.timing |= args.timing;
    Ok(cfg)
}

fn main() -> ExitCode {
    let args = Args::parse();
    let result = build_config(args).and_then(|cfg| {
        let results = harness::run_and_write(&cfg)?;
        for row in &results.rows {
            println!(
                "{:>7} dB  {:<16} BER {:<14} VER {:<14} cand {}",
                harness::format_g10(row.snr_db),
                row.detector,
                harness::format_g10(row.ber),
                harness::format_g10(row.ver),
                harness::format_g10(row.avg_candidates),
            );
        }
        eprintln!("wrote {}", cfg.output.display());
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
