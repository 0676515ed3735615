//! `bia` — feasibility, decomposition, counting tables, verification suites
//! and rate simulation for blind interference alignment on 3-user 2x1
//! broadcast channels.
//!
//! Exit codes: 0 success / feasible verdict, 1 negative verdict,
//! 2 usage error, 3 internal validation failure.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use bia_core::alignment::{
    beamformers_for_pattern, encode_block, noise_rng, simulate_rate_curve, verify_alignment,
    zf_decode,
};
use bia_core::channel::{classify_block, group_structure, sample_realization, ChannelConfig};
use bia_core::counting::{
    brute_force_feasible_pairs, brute_force_no_feasible_triple, feasible_pair_count,
    feasible_probability, find_feasible_triple, mc_selection_probability, no_feasible_triple_count,
    selection_probability, triple_feasible,
};
use bia_core::decomposition::{
    decompose, find_wrap_free_window, is_feasible, thread_table, validate_decomposition,
};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;
use serde_json::json;

const EXIT_NEGATIVE: u8 = 1;
const EXIT_USAGE: u8 = 2;
const EXIT_VALIDATION: u8 = 3;

#[derive(Parser)]
#[command(name = "bia", version, about = "Blind interference alignment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decide feasibility of a 3-user config and print its thread table
    Feasible(ConfigArgs),
    /// Construct and validate the supersymbol decomposition
    Decompose {
        #[command(flatten)]
        config: ConfigArgs,
        /// Write the decomposition JSON here (stdout otherwise)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV table of the 3-user feasibility probability over a range of N
    ProbN {
        #[arg(long)]
        n_min: u32,
        #[arg(long)]
        n_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// CSV table of the K-user selection probability over a range of K
    ProbK {
        #[arg(long = "N", visible_alias = "n")]
        n: u32,
        #[arg(long)]
        k_min: u32,
        #[arg(long)]
        k_max: u32,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a self-check suite against brute-force oracles
    Verify {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate the zero-forcing sum rate over an SNR grid
    Simulate {
        #[command(flatten)]
        config: ConfigArgs,
        /// Comma-separated SNR grid in dB
        #[arg(long, default_value = "0,10,20,30,40,50", value_delimiter = ',')]
        snr: Vec<f64>,
        #[arg(long, default_value_t = 100)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick three users of a K-user config that support the full scheme
    Select(ConfigArgs),
}

#[derive(Args)]
struct ConfigArgs {
    /// Coherence time in slots
    #[arg(long = "N", visible_alias = "n")]
    n: Option<u32>,
    /// Comma-separated block offsets, first one 0
    #[arg(long, value_delimiter = ',')]
    offsets: Option<Vec<u32>>,
    /// JSON config file {"N": ..., "offsets": [...]}; wins over flags
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Copy, Clone, ValueEnum)]
enum Suite {
    Counting,
    Alignment,
    Decomposition,
}

#[derive(Serialize)]
struct RunManifest {
    command: String,
    parameters: serde_json::Value,
    seed: Option<u64>,
    artifact_version: String,
    outputs: Vec<String>,
    duration_ms: u128,
}

struct UsageError(String);

impl<E: std::error::Error> From<E> for UsageError {
    fn from(e: E) -> Self {
        UsageError(e.to_string())
    }
}

impl ConfigArgs {
    fn load(&self) -> Result<ChannelConfig, UsageError> {
        if let Some(path) = &self.config {
            if self.n.is_some() || self.offsets.is_some() {
                eprintln!("warning: --config overrides --N/--offsets");
            }
            let text = fs::read_to_string(path)?;
            let cfg: ChannelConfig = serde_json::from_str(&text)?;
            return Ok(cfg.validated()?);
        }
        match (self.n, &self.offsets) {
            (Some(n), Some(offsets)) => Ok(ChannelConfig::new(n, offsets.clone())?),
            _ => Err(UsageError(
                "either --config or both --N and --offsets are required".into(),
            )),
        }
    }

    fn describe(&self) -> serde_json::Value {
        json!({
            "N": self.n,
            "offsets": self.offsets,
            "config": self.config.as_ref().map(|p| p.display().to_string()),
        })
    }
}

/// Writes `contents` to `out` (or stdout) and drops a manifest next to the
/// file so the run can be reproduced exactly.
fn emit(
    out: Option<&Path>,
    contents: &str,
    command: &str,
    parameters: serde_json::Value,
    seed: Option<u64>,
    started: Instant,
) -> Result<(), UsageError> {
    match out {
        Some(path) => {
            fs::write(path, contents)?;
            let manifest = RunManifest {
                command: command.into(),
                parameters,
                seed,
                artifact_version: env!("CARGO_PKG_VERSION").into(),
                outputs: vec![path.display().to_string()],
                duration_ms: started.elapsed().as_millis(),
            };
            let manifest_path = path.with_extension(format!(
                "{}manifest.json",
                path.extension()
                    .map(|e| format!("{}.", e.to_string_lossy()))
                    .unwrap_or_default()
            ));
            fs::write(&manifest_path, serde_json::to_string_pretty(&manifest)?)?;
            eprintln!("wrote {} and {}", path.display(), manifest_path.display());
        }
        None => print!("{contents}"),
    }
    Ok(())
}

fn cmd_feasible(args: &ConfigArgs) -> Result<u8, UsageError> {
    let cfg = args.load()?;
    let s = group_structure(&cfg)?;
    let feasible = is_feasible(&s) && s.sizes().iter().all(|&v| v > 0);
    let verdict = json!({
        "N": cfg.coherence_time(),
        "offsets": cfg.offsets(),
        "group_sizes": s.sizes(),
        "feasible": feasible,
        "thread_counts": feasible.then(|| thread_table(&s).unwrap().counts()),
    });
    println!("{}", serde_json::to_string_pretty(&verdict)?);
    Ok(if feasible { 0 } else { EXIT_NEGATIVE })
}

fn cmd_decompose(args: &ConfigArgs, out: Option<&Path>) -> Result<u8, UsageError> {
    let started = Instant::now();
    let cfg = args.load()?;
    let s = group_structure(&cfg)?;
    if !is_feasible(&s) || s.sizes().contains(&0) {
        eprintln!("config is not feasible; nothing to decompose");
        return Ok(EXIT_NEGATIVE);
    }
    let decomp = decompose(&cfg).map_err(|e| UsageError(e.to_string()))?;
    let report = validate_decomposition(&cfg, &decomp);
    if !report.passed() {
        eprintln!("validation failed: {:?}", report.first_violation());
        return Ok(EXIT_VALIDATION);
    }
    let doc = json!({
        "N": cfg.coherence_time(),
        "offsets": cfg.offsets(),
        "decomposition": decomp,
        "wrap_free_window": find_wrap_free_window(&decomp),
        "validated": true,
    });
    emit(
        out,
        &format!("{}\n", serde_json::to_string_pretty(&doc)?),
        "decompose",
        args.describe(),
        None,
        started,
    )?;
    Ok(0)
}

fn cmd_prob_n(n_min: u32, n_max: u32, out: Option<&Path>) -> Result<u8, UsageError> {
    let started = Instant::now();
    if n_min == 0 || n_min > n_max {
        return Err(UsageError("require 1 <= n-min <= n-max".into()));
    }
    let mut csv = String::from("N,f_exact,denominator,probability_float\n");
    for n in n_min..=n_max {
        let p = feasible_probability(n);
        csv.push_str(&format!(
            "{n},{},{},{}\n",
            p.numerator,
            p.denominator,
            p.as_f64()
        ));
    }
    emit(
        out,
        &csv,
        "prob-n",
        json!({"n_min": n_min, "n_max": n_max}),
        None,
        started,
    )?;
    Ok(0)
}

fn cmd_prob_k(n: u32, k_min: u32, k_max: u32, out: Option<&Path>) -> Result<u8, UsageError> {
    let started = Instant::now();
    if k_min < 3 || k_min > k_max {
        return Err(UsageError("require 3 <= k-min <= k-max".into()));
    }
    let mut csv = String::from("N,K,f_exact,denominator,probability_float\n");
    for k in k_min..=k_max {
        let p = selection_probability(n, k).map_err(|e| UsageError(e.to_string()))?;
        csv.push_str(&format!(
            "{n},{k},{},{},{}\n",
            p.numerator,
            p.denominator,
            p.as_f64()
        ));
    }
    emit(
        out,
        &csv,
        "prob-k",
        json!({"N": n, "k_min": k_min, "k_max": k_max}),
        None,
        started,
    )?;
    Ok(0)
}

fn cmd_verify(suite: Suite, seed: u64) -> u8 {
    let mut failures = 0u32;
    let mut check = |name: &str, ok: bool| {
        println!("{}: {name}", if ok { "pass" } else { "FAIL" });
        if !ok {
            failures += 1;
        }
    };
    match suite {
        Suite::Counting => {
            check(
                "pair count matches enumeration for N in 1..=120",
                (1..=120).all(|n| feasible_pair_count(n) == brute_force_feasible_pairs(n).unwrap()),
            );
            check(
                "K-user count matches enumeration on the small grid",
                [(4u32, 3u32), (4, 4), (4, 5), (8, 3), (8, 4), (8, 5), (12, 3), (12, 4)]
                    .into_iter()
                    .all(|(n, k)| {
                        no_feasible_triple_count(n, k).unwrap()
                            == brute_force_no_feasible_triple(n, k).unwrap()
                    }),
            );
            let mc = mc_selection_probability(30_000, 11, 50_000, seed).unwrap();
            let exact = selection_probability(30_000, 11).unwrap().as_f64();
            check(
                "Monte Carlo within 4 standard errors of the closed form",
                (mc.estimate - exact).abs() <= 4.0 * mc.stderr,
            );
        }
        Suite::Alignment => {
            let cfg = ChannelConfig::new(7, vec![0, 2, 4]).unwrap();
            let decomp = decompose(&cfg).unwrap();
            let mut rng = noise_rng(seed);
            let mut aligned = true;
            let mut recovered = true;
            for trial in 0..200u64 {
                let realization = sample_realization(&cfg, seed.wrapping_add(trial), 9);
                for quad in &decomp.quads {
                    let pattern = classify_block(&cfg, quad.slots).unwrap();
                    let bf = beamformers_for_pattern(&pattern).unwrap();
                    aligned &= verify_alignment(&realization, &cfg, quad.slots, &bf).unwrap();
                    let symbols: [[Complex64; 3]; 2] = std::array::from_fn(|_| {
                        std::array::from_fn(|_| Complex64::new(rng.gen(), rng.gen()))
                    });
                    let block =
                        encode_block(&realization, &cfg, quad.slots, &bf, &symbols, None, &mut rng)
                            .unwrap();
                    for receiver in 0..3 {
                        let (s1, s2) = zf_decode(&realization, &cfg, &block, &bf, receiver).unwrap();
                        recovered &= (s1 - symbols[0][receiver]).norm() <= 1e-8
                            && (s2 - symbols[1][receiver]).norm() <= 1e-8;
                    }
                }
            }
            check("interference aligns on every scheduled supersymbol", aligned);
            check("noiseless zero-forcing recovers all symbols", recovered);
        }
        Suite::Decomposition => {
            let mut ok = true;
            for n in 3..=40u32 {
                for b in 0..n {
                    for c in 0..n {
                        if !triple_feasible(n, [0, b, c]) {
                            continue;
                        }
                        let cfg = ChannelConfig::new(n, vec![0, b, c]).unwrap();
                        ok &= decompose(&cfg)
                            .map(|d| validate_decomposition(&cfg, &d).passed())
                            .unwrap_or(false);
                    }
                }
            }
            check("every feasible config with N <= 40 decomposes and validates", ok);
        }
    }
    if failures == 0 {
        0
    } else {
        EXIT_VALIDATION
    }
}

fn cmd_simulate(
    args: &ConfigArgs,
    snr: &[f64],
    trials: u64,
    seed: u64,
    out: Option<&Path>,
) -> Result<u8, UsageError> {
    let started = Instant::now();
    if trials == 0 {
        return Err(UsageError("at least one trial is required".into()));
    }
    let cfg = args.load()?;
    let mut grid: Vec<f64> = snr.to_vec();
    grid.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let curve =
        simulate_rate_curve(&cfg, &grid, trials, seed).map_err(|e| UsageError(e.to_string()))?;
    let mut csv = String::from("snr_db,sum_rate_bits_per_slot,stderr,trials\n");
    for point in &curve {
        csv.push_str(&format!(
            "{},{},{},{}\n",
            point.snr_db, point.sum_rate, point.stderr, point.trials
        ));
    }
    emit(
        out,
        &csv,
        "simulate",
        json!({
            "config": args.describe(),
            "snr": grid,
            "trials": trials,
        }),
        Some(seed),
        started,
    )?;
    Ok(0)
}

fn cmd_select(args: &ConfigArgs) -> Result<u8, UsageError> {
    let cfg = args.load()?;
    match find_feasible_triple(&cfg) {
        Some(sel) => {
            println!("{}", serde_json::to_string_pretty(&sel)?);
            Ok(0)
        }
        None => {
            println!("null");
            Ok(EXIT_NEGATIVE)
        }
    }
}

fn run() -> Result<u8, UsageError> {
    if let Ok(threads) = std::env::var("BIA_LAB_THREADS") {
        let threads: usize = threads
            .parse()
            .map_err(|_| UsageError("BIA_LAB_THREADS must be a positive integer".into()))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .ok();
    }
    let cli = Cli::parse();
    match &cli.command {
        Command::Feasible(args) => cmd_feasible(args),
        Command::Decompose { config, out } => cmd_decompose(config, out.as_deref()),
        Command::ProbN { n_min, n_max, out } => cmd_prob_n(*n_min, *n_max, out.as_deref()),
        Command::ProbK { n, k_min, k_max, out } => cmd_prob_k(*n, *k_min, *k_max, out.as_deref()),
        Command::Verify { suite, seed } => Ok(cmd_verify(*suite, *seed)),
        Command::Simulate { config, snr, trials, seed, out } => {
            cmd_simulate(config, snr, *trials, *seed, out.as_deref())
        }
        Command::Select(args) => cmd_select(args),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(UsageError(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(EXIT_USAGE)
        }
    }
}
