use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ladr::harness::{read_trace, replay_trace, run_experiment, write_ppm, ExperimentConfig, ExperimentOutput};
use ladr::verify::{mi_locality_check, run_margin_sweep, tau_grid, MiParams};
use ladr::LadrError;

const EXIT_CONFIG: u8 = 2;
const EXIT_IO: u8 = 3;
const EXIT_VERIFY: u8 = 4;

#[derive(Parser)]
#[command(name = "ladr", version, about = "Locality-aware rescue decoding on 2D token grids")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Decode every configured (strategy, repeat) and write traces plus a summary CSV.
    Decode {
        #[arg(long, conflicts_with = "demo", required_unless_present = "demo")]
        config: Option<PathBuf>,
        /// Use the built-in demo configuration.
        #[arg(long)]
        demo: bool,
        /// Override the configured output directory.
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Run the configured strategy grid and print per-strategy means.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
    /// Brute-force the margin error bound over a (K, tau) grid.
    VerifyMargin {
        #[arg(long, default_value_t = 2)]
        kmin: usize,
        #[arg(long, default_value_t = 4)]
        kmax: usize,
        #[arg(long, default_value_t = 0.05)]
        tau_step: f64,
        #[arg(long, default_value_t = 0.01)]
        grid_step: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare near and far information on Gibbs samples of a Potts lattice.
    VerifyMi {
        #[arg(long, default_value_t = 1.2)]
        beta: f64,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long, default_value_t = 16)]
        size: usize,
        #[arg(long, default_value_t = 50_000)]
        samples: usize,
        #[arg(long, default_value_t = 6)]
        dfar: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Gibbs sweeps per independent sample.
        #[arg(long, default_value_t = 32)]
        sweeps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Rebuild the final grid of a trace and write it as a PPM image.
    Render {
        #[arg(long)]
        trace: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

enum Failure {
    Ladr(LadrError),
    Verification(String),
}

impl From<LadrError> for Failure {
    fn from(e: LadrError) -> Self {
        Failure::Ladr(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Verification(msg)) => {
            eprintln!("verification failed: {msg}");
            ExitCode::from(EXIT_VERIFY)
        }
        Err(Failure::Ladr(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &LadrError) -> u8 {
    match e {
        LadrError::Io { .. } | LadrError::Format(_) | LadrError::ReplayExhausted(_) => EXIT_IO,
        LadrError::Config(_) | LadrError::InvalidInput(_) | LadrError::Resource(_) => EXIT_CONFIG,
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Decode { config, demo, out_dir } => {
            let cfg = load_config(config.as_deref(), demo, out_dir)?;
            let out = run_experiment(&cfg)?;
            print_rows(&out);
            Ok(())
        }
        Command::Bench { config, out_dir } => {
            let cfg = load_config(Some(&config), false, out_dir)?;
            let out = run_experiment(&cfg)?;
            print_bench(&out);
            Ok(())
        }
        Command::VerifyMargin {
            kmin,
            kmax,
            tau_step,
            grid_step,
            out,
        } => verify_margin(kmin, kmax, tau_step, grid_step, &out),
        Command::VerifyMi {
            beta,
            k,
            size,
            samples,
            dfar,
            seed,
            sweeps,
            out,
        } => {
            let params = MiParams {
                vocab_size: k,
                beta,
                height: size,
                width: size,
                samples,
                d_far: dfar,
                sweeps,
                seed,
                ..MiParams::default()
            };
            verify_mi(&params, &out)
        }
        Command::Render { trace, out } => {
            let (header, records) = read_trace(&trace)?;
            let result = replay_trace(&header, &records)?;
            write_ppm(&out, &result.tokens, header.config.height, header.config.width)?;
            println!("wrote {}", out.display());
            Ok(())
        }
    }
}

fn load_config(path: Option<&Path>, demo: bool, out_dir: Option<PathBuf>) -> Result<ExperimentConfig, Failure> {
    let mut cfg = match path {
        Some(p) if !demo => ExperimentConfig::load(p)?,
        _ => ExperimentConfig::demo(),
    };
    if let Some(dir) = out_dir {
        cfg.output_dir = dir;
    }
    Ok(cfg)
}

fn print_rows(out: &ExperimentOutput) {
    println!("strategy            seed   nfe  rescued  accuracy  trace");
    for (row, path) in out.rows.iter().zip(&out.trace_paths) {
        let acc = row
            .token_accuracy
            .map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        println!(
            "{:<18} {:>5} {:>5} {:>8} {:>9}  {}",
            row.strategy.name(),
            row.seed,
            row.nfe,
            row.rescued_total,
            acc,
            path.display()
        );
    }
    println!("summary: {}", out.summary_path.display());
}

fn print_bench(out: &ExperimentOutput) {
    let mut groups: BTreeMap<&str, Vec<&ladr::harness::SummaryRow>> = BTreeMap::new();
    for row in &out.rows {
        groups.entry(row.strategy.name()).or_default().push(row);
    }
    let mean = |xs: &mut dyn Iterator<Item = f64>| {
        let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
        if n == 0 { None } else { Some(s / n as f64) }
    };
    let std_nfe = groups
        .get("standard")
        .and_then(|rows| mean(&mut rows.iter().map(|r| f64::from(r.nfe))));
    println!("strategy            runs  mean_nfe  nfe_ratio  mean_accuracy  mean_wall_ms");
    for (name, rows) in &groups {
        let nfe = mean(&mut rows.iter().map(|r| f64::from(r.nfe))).unwrap_or(0.0);
        let acc = mean(&mut rows.iter().filter_map(|r| r.token_accuracy));
        let wall = mean(&mut rows.iter().map(|r| r.wall_ms)).unwrap_or(0.0);
        let ratio = std_nfe.map_or_else(|| "-".to_string(), |s| format!("{:.3}", nfe / s));
        let acc = acc.map_or_else(|| "-".to_string(), |a| format!("{a:.4}"));
        println!(
            "{name:<18} {:>5} {nfe:>9.2} {ratio:>10} {acc:>14} {wall:>13.2}",
            rows.len()
        );
    }
    println!("summary: {}", out.summary_path.display());
}

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>, Failure> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_path(path)
        .map_err(|e| io_failure(path, e))
}

fn io_failure(path: &Path, e: csv::Error) -> Failure {
    Failure::Ladr(LadrError::Io {
        path: path.display().to_string(),
        source: e.into(),
    })
}

fn verify_margin(kmin: usize, kmax: usize, tau_step: f64, grid_step: f64, out: &Path) -> Result<(), Failure> {
    if kmin < 2 || kmax < kmin {
        return Err(LadrError::Config(format!("need 2 <= kmin <= kmax, got {kmin}..{kmax}")).into());
    }
    if !(tau_step > 0.0 && tau_step < 1.0) || !(grid_step > 0.0 && grid_step < 1.0) {
        return Err(LadrError::Config("tau-step and grid-step must lie in (0, 1)".into()).into());
    }
    let ks: Vec<usize> = (kmin..=kmax).collect();
    let rows = run_margin_sweep(&ks, &tau_grid(tau_step), grid_step)?;
    let mut w = csv_writer(out)?;
    for row in &rows {
        w.serialize(row).map_err(|e| io_failure(out, e))?;
    }
    w.flush().map_err(|e| io_failure(out, e.into()))?;
    let broken = rows.iter().filter(|r| !r.holds).count();
    println!("{} cells, {broken} outside the bound; wrote {}", rows.len(), out.display());
    if broken > 0 {
        return Err(Failure::Verification(format!("{broken} of {} cells violate the bound", rows.len())));
    }
    Ok(())
}

fn verify_mi(params: &MiParams, out: &Path) -> Result<(), Failure> {
    let r = mi_locality_check(params)?;
    let control = params.beta == 0.0;
    let holds = if control { r.both_negligible() } else { r.near_dominates() };
    let mut w = csv_writer(out)?;
    let header = [
        "beta", "K", "size", "samples", "d_far", "seed", "i_near", "i_far", "bootstrap_std",
        "sparse_support", "holds",
    ];
    w.write_record(header).map_err(|e| io_failure(out, e))?;
    w.write_record([
        params.beta.to_string(),
        params.vocab_size.to_string(),
        params.height.to_string(),
        r.samples.to_string(),
        params.d_far.to_string(),
        params.seed.to_string(),
        r.i_near.to_string(),
        r.i_far.to_string(),
        r.bootstrap_std.to_string(),
        r.sparse_support.to_string(),
        holds.to_string(),
    ])
    .map_err(|e| io_failure(out, e))?;
    w.flush().map_err(|e| io_failure(out, e.into()))?;
    println!(
        "I_near={:.5} I_far={:.5} bootstrap_std={:.5}; wrote {}",
        r.i_near,
        r.i_far,
        r.bootstrap_std,
        out.display()
    );
    if !holds {
        let what = if control {
            "beta=0 control is not within 3 bootstrap std of zero"
        } else {
            "near information does not exceed far by 3 bootstrap std"
        };
        return Err(Failure::Verification(what.into()));
    }
    Ok(())
}
