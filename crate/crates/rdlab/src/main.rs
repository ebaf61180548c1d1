use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::Serialize;

use rdlab::binning::{run_ppe, write_compare_csv};
use rdlab::config::{
    self, parse_channel, parse_distortion, parse_joint, parse_phi, parse_pmf, BtConfig,
    CompareConfig, ExponentConfig, P2pConfig, PpeConfig, RdCurveConfig, SoftcoverConfig, WzConfig,
};
use rdlab::error::{Budget, RdError, Result};
use rdlab::prob::compose;
use rdlab::rd::{blahut_arimoto, exponent_report, theorem1_bound, GammaGrid};
use rdlab::softcover::sweep;
use rdlab::systems::{run_bt, run_p2p, run_wz};

#[derive(Parser)]
#[command(name = "rdlab", version, about = "Lossy-compression simulation lab")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,

    /// Path to the JSON experiment config
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the config's master seed
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Worker pool size (default: machine parallelism)
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Record that bit-exact sequential aggregation was requested
    #[arg(long, global = true)]
    deterministic: bool,

    /// Output path (overrides the config's `out`)
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Point-to-point likelihood-encoder simulation
    P2p,
    /// Side-information (binned) likelihood-encoder simulation
    Wz,
    /// Two-encoder distributed simulation
    Bt,
    /// Exact soft-covering TV sweep over (R, n)
    Softcover,
    /// Excess-distortion exponents and the achievability bound
    Exponent,
    /// Rate-distortion curve by alternating minimization
    Rdcurve,
    /// Proportional-probability (binning) encoder simulation
    Ppe,
    /// Likelihood encoder vs PPE at matched resources
    Compare,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            return match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => {
                    print!("{e}");
                    ExitCode::SUCCESS
                }
                ErrorKind::InvalidSubcommand | ErrorKind::MissingSubcommand => {
                    eprint!("{e}");
                    ExitCode::from(64)
                }
                _ => {
                    eprint!("{e}");
                    ExitCode::from(1)
                }
            };
        }
    };
    if let Some(t) = cli.threads {
        // ignore the error if a global pool already exists
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    match execute(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ (RdError::Budget(_) | RdError::SizeOverflow { .. })) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

#[derive(Serialize)]
struct Manifest<'a, C: Serialize> {
    version: &'static str,
    subcommand: &'static str,
    seed: Option<u64>,
    threads: Option<usize>,
    deterministic: bool,
    config: &'a C,
}

fn write_output<C: Serialize>(
    out: &Path,
    body: &[u8],
    subcommand: &'static str,
    cli: &Cli,
    seed: Option<u64>,
    config: &C,
) -> Result<()> {
    std::fs::write(out, body)?;
    let manifest = Manifest {
        version: env!("CARGO_PKG_VERSION"),
        subcommand,
        seed,
        threads: cli.threads,
        deterministic: cli.deterministic,
        config,
    };
    let manifest_path = PathBuf::from(format!("{}.manifest.json", out.display()));
    std::fs::write(&manifest_path, json_bytes(&manifest)?)?;
    eprintln!("wrote {} and {}", out.display(), manifest_path.display());
    Ok(())
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(value)
        .map_err(|e| RdError::Config(format!("serialization failed: {e}")))?;
    s.push('\n');
    Ok(s.into_bytes())
}

fn config_path(cli: &Cli) -> Result<&Path> {
    cli.config
        .as_deref()
        .ok_or_else(|| RdError::Config("--config PATH is required".into()))
}

fn out_path(cli: &Cli, cfg_out: Option<&PathBuf>, default: &str) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| cfg_out.cloned())
        .unwrap_or_else(|| PathBuf::from(default))
}

fn execute(cli: &Cli) -> Result<()> {
    let base_budget = Budget::from_env();
    match cli.cmd {
        Cmd::P2p => {
            let mut cfg: P2pConfig = config::load(config_path(cli)?)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let budget = cfg.budget.clone().unwrap_or_default().apply(&base_budget);
            let report = run_p2p(
                &parse_pmf(&cfg.source, "source")?,
                &parse_channel(&cfg.test_channel, "test_channel")?,
                &parse_distortion(&cfg.distortion, "distortion")?,
                cfg.rate,
                cfg.n,
                cfg.distortion_limit,
                cfg.trials,
                cfg.seed,
                &budget,
            )?;
            let out = out_path(cli, cfg.out.as_ref(), "p2p_report.json");
            write_output(&out, &json_bytes(&report)?, "p2p", cli, Some(cfg.seed), &cfg)
        }
        Cmd::Wz => {
            let mut cfg: WzConfig = config::load(config_path(cli)?)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let budget = cfg.budget.clone().unwrap_or_default().apply(&base_budget);
            let report = run_wz(
                &parse_joint(&cfg.joint, "joint")?,
                &parse_channel(&cfg.aux_channel, "aux_channel")?,
                &parse_phi(&cfg.phi, "phi")?,
                &parse_distortion(&cfg.distortion, "distortion")?,
                cfg.rate,
                cfg.rate2,
                cfg.n,
                cfg.distortion_limit,
                cfg.trials,
                cfg.seed,
                &budget,
            )?;
            let out = out_path(cli, cfg.out.as_ref(), "wz_report.json");
            write_output(&out, &json_bytes(&report)?, "wz", cli, Some(cfg.seed), &cfg)
        }
        Cmd::Bt => {
            let mut cfg: BtConfig = config::load(config_path(cli)?)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let budget = cfg.budget.clone().unwrap_or_default().apply(&base_budget);
            let report = run_bt(
                &parse_joint(&cfg.joint, "joint")?,
                &parse_channel(&cfg.channel1, "channel1")?,
                &parse_channel(&cfg.channel2, "channel2")?,
                &parse_phi(&cfg.phi1, "phi1")?,
                &parse_phi(&cfg.phi2, "phi2")?,
                &parse_distortion(&cfg.distortion1, "distortion1")?,
                &parse_distortion(&cfg.distortion2, "distortion2")?,
                cfg.rate1,
                cfg.rate2,
                cfg.rate2p,
                cfg.n,
                (cfg.distortion_limits[0], cfg.distortion_limits[1]),
                cfg.trials,
                cfg.seed,
                &budget,
            )?;
            let out = out_path(cli, cfg.out.as_ref(), "bt_report.json");
            write_output(&out, &json_bytes(&report)?, "bt", cli, Some(cfg.seed), &cfg)
        }
        Cmd::Softcover => {
            let mut cfg: SoftcoverConfig = config::load(config_path(cli)?)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let budget = cfg.budget.clone().unwrap_or_default().apply(&base_budget);
            let joint = compose(
                &parse_pmf(&cfg.source, "source")?,
                &parse_channel(&cfg.test_channel, "test_channel")?,
            )?;
            let report = sweep(
                &joint,
                &cfg.rates,
                &cfg.n_list,
                cfg.codebooks_per_cell,
                cfg.seed,
                &budget,
            )?;
            let mut body = Vec::new();
            if cfg.per_codebook {
                report.write_csv(&mut body)?;
            } else {
                report.write_aggregate_csv(&mut body)?;
            }
            let out = out_path(cli, cfg.out.as_ref(), "softcover.csv");
            write_output(&out, &body, "softcover", cli, Some(cfg.seed), &cfg)
        }
        Cmd::Exponent => {
            let cfg: ExponentConfig = config::load(config_path(cli)?)?;
            let source = parse_pmf(&cfg.source, "source")?;
            let d = parse_distortion(&cfg.distortion, "distortion")?;
            let grid: GammaGrid = cfg.grid.as_ref().map(|g| g.to_grid()).unwrap_or_default();
            match (&cfg.candidates, &cfg.test_channel) {
                (Some(cands), _) if !cands.is_empty() => {
                    let channels = cands
                        .iter()
                        .map(|rows| parse_channel(rows, "candidates"))
                        .collect::<Result<Vec<_>>>()?;
                    if cfg.n_list.is_empty() {
                        return Err(RdError::Config(
                            "candidates mode needs a non-empty n_list".into(),
                        ));
                    }
                    let table = theorem1_bound(
                        &source,
                        &channels,
                        &d,
                        cfg.distortion_limit,
                        cfg.rate,
                        &cfg.n_list,
                        &grid,
                    )?;
                    let mut body = Vec::new();
                    table.write_csv(&mut body)?;
                    let out = out_path(cli, cfg.out.as_ref(), "bounds.csv");
                    write_output(&out, &body, "exponent", cli, None, &cfg)
                }
                (_, Some(rows)) => {
                    let joint = compose(&source, &parse_channel(rows, "test_channel")?)?;
                    let report =
                        exponent_report(&joint, &d, cfg.distortion_limit, cfg.rate, &grid)?;
                    let out = out_path(cli, cfg.out.as_ref(), "exponent.json");
                    write_output(&out, &json_bytes(&report)?, "exponent", cli, None, &cfg)
                }
                _ => Err(RdError::Config(
                    "exponent config needs `test_channel` or a non-empty `candidates`".into(),
                )),
            }
        }
        Cmd::Rdcurve => {
            let cfg: RdCurveConfig = config::load(config_path(cli)?)?;
            let source = parse_pmf(&cfg.source, "source")?;
            let d = parse_distortion(&cfg.distortion, "distortion")?;
            let mut body = String::from("D,R,slope\n");
            for &target in &cfg.d_list {
                let pt = blahut_arimoto(&source, &d, target, cfg.tol, cfg.max_iter)?;
                body.push_str(&format!("{},{},{}\n", target, pt.rate, pt.slope));
            }
            let out = out_path(cli, cfg.out.as_ref(), "rdcurve.csv");
            write_output(&out, body.as_bytes(), "rdcurve", cli, None, &cfg)
        }
        Cmd::Ppe => {
            let mut cfg: PpeConfig = config::load(config_path(cli)?)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let budget = cfg.budget.clone().unwrap_or_default().apply(&base_budget);
            let report = run_ppe(
                &parse_pmf(&cfg.source, "source")?,
                &parse_channel(&cfg.test_channel, "test_channel")?,
                &parse_distortion(&cfg.distortion, "distortion")?,
                cfg.rate,
                cfg.rate2,
                cfg.n,
                cfg.distortion_limit,
                cfg.trials,
                cfg.seed,
                &budget,
            )?;
            let out = out_path(cli, cfg.out.as_ref(), "ppe_report.json");
            write_output(&out, &json_bytes(&report)?, "ppe", cli, Some(cfg.seed), &cfg)
        }
        Cmd::Compare => {
            let mut cfg: CompareConfig = config::load(config_path(cli)?)?;
            cfg.seed = cli.seed.unwrap_or(cfg.seed);
            let budget = cfg.budget.clone().unwrap_or_default().apply(&base_budget);
            let source = parse_pmf(&cfg.source, "source")?;
            let channel = parse_channel(&cfg.test_channel, "test_channel")?;
            let d = parse_distortion(&cfg.distortion, "distortion")?;
            let lik = run_p2p(
                &source,
                &channel,
                &d,
                cfg.rate,
                cfg.n,
                cfg.distortion_limit,
                cfg.trials,
                cfg.seed,
                &budget,
            )?;
            let ppe = run_ppe(
                &source,
                &channel,
                &d,
                cfg.rate,
                cfg.rate2,
                cfg.n,
                cfg.distortion_limit,
                cfg.trials,
                cfg.seed,
                &budget,
            )?;
            let mut body = Vec::new();
            write_compare_csv(&lik, &ppe, &mut body)?;
            let out = out_path(cli, cfg.out.as_ref(), "compare.csv");
            write_output(&out, &body, "compare", cli, Some(cfg.seed), &cfg)
        }
    }
}
