use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use equidyn::config::{Config, ConfigError, CONFIG_HELP};
use equidyn::formats::{self, Checkpoint};
use equidyn::suite::{self, Suite};
use equidyn::{mnist, runner};
use equidyn_core::theory::{self, RiskFamily};
use equidyn_core::{CheckReport, CheckStatus, HaarStrategy, Tolerances};

#[derive(Debug, Parser)]
#[command(
    name = "equidyn",
    version,
    about = "Gradient-flow dynamics of equivariant and augmented networks"
)]
#[command(after_long_help = CONFIG_HELP)]
struct Cli {
    /// Replaces every seed of the configuration.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for repetitions and checks; 1 is bitwise reproducible.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run theory checks and print one JSON report per line.
    #[command(after_long_help = CONFIG_HELP)]
    Check {
        #[arg(long, value_enum, default_value = "all")]
        suite: Suite,
        /// Check the configured architecture instead of the toy ones.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the reports here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
        /// Print the default tolerances as TOML and exit.
        #[arg(long)]
        list_tolerances: bool,
    },
    /// Train every flow mode for every repetition of a configuration.
    #[command(after_long_help = CONFIG_HELP)]
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Eigenvalues of the augmented Hessian on the complement of E at a
    /// checkpoint, projected onto E.
    #[command(after_long_help = CONFIG_HELP)]
    Spectrum {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write the eigenvalues, one per line.
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// The two-matrix counterexample on R^N under S_N.
    #[command(after_long_help = CONFIG_HELP)]
    Counterexample {
        #[arg(long, default_value_t = 5)]
        n: usize,
    },
    /// Generate or download datasets.
    #[command(after_long_help = CONFIG_HELP)]
    Data {
        #[command(subcommand)]
        action: DataAction,
    },
    /// Print the version.
    #[command(after_long_help = CONFIG_HELP)]
    Version,
}

#[derive(Debug, Subcommand)]
enum DataAction {
    /// Write the dataset of a configuration as JSON.
    #[command(after_long_help = CONFIG_HELP)]
    Gen {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        output: PathBuf,
    },
    /// Download the digit test set.
    #[command(after_long_help = CONFIG_HELP)]
    Fetch {
        /// Target directory; default `$EQUIDYN_DATA_DIR`, then ./data.
        #[arg(long)]
        dir: Option<PathBuf>,
        #[arg(long, default_value = mnist::DEFAULT_MIRROR)]
        mirror: String,
    },
}

/// Failure of a command that ran to completion but did not pass.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct CheckFailed(String);

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .init();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    if e.downcast_ref::<CheckFailed>().is_some() {
        return 1;
    }
    for cause in e.chain() {
        match cause.downcast_ref::<ConfigError>() {
            Some(ConfigError::Read { .. }) => return 3,
            Some(_) => return 2,
            None => {}
        }
        if cause.is::<io::Error>() || cause.is::<ureq::Error>() {
            return 3;
        }
    }
    1
}

fn load_config(path: Option<&Path>, seed: Option<u64>) -> Result<Option<Config>> {
    let Some(path) = path else { return Ok(None) };
    let mut cfg = Config::load(path)?;
    if let Some(s) = seed {
        cfg.override_seed(s);
    }
    Ok(Some(cfg))
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Check {
            suite,
            config,
            output,
            list_tolerances,
        } => {
            if list_tolerances {
                print!("{}", toml::to_string(&Tolerances::default())?);
                return Ok(());
            }
            let cfg = load_config(config.as_deref(), cli.seed)?;
            let seed = cli.seed.or(cfg.as_ref().map(|c| c.flow.seed)).unwrap_or(0);
            let reports = suite::run_suite(suite, cfg.as_ref(), seed, cli.jobs)?;
            emit_reports(&reports, output.as_deref())?;
            let failed = reports.iter().filter(|r| r.failed()).count();
            if failed > 0 {
                return Err(
                    CheckFailed(format!("{failed} of {} checks failed", reports.len())).into(),
                );
            }
            Ok(())
        }
        Command::Run { config } => {
            let cfg = load_config(Some(&config), cli.seed)?.expect("path given");
            let outcome = runner::run_experiment(&cfg, cli.jobs)?;
            for mode in cfg.flow.modes.iter().copied() {
                if let Some(row) = equidyn_core::experiment::final_row(&outcome.summary, mode) {
                    println!(
                        "{:<12} epoch {:>4}  dist_from_init {:.3e}  dist_from_E {:.3e}  risk {:.6}",
                        mode.name(),
                        row.epoch,
                        row.mean_dist_from_init,
                        row.mean_dist_from_e,
                        row.mean_risk
                    );
                }
            }
            log::info!("results in {}", outcome.output_dir.display());
            Ok(())
        }
        Command::Spectrum { checkpoint, output } => spectrum(&checkpoint, output.as_deref()),
        Command::Counterexample { n } => {
            let report = theory::counterexample(n, &Tolerances::default())?;
            print_counterexample(&report);
            if report.failed() {
                return Err(CheckFailed(format!("counterexample for N = {n} failed")).into());
            }
            Ok(())
        }
        Command::Data { action } => match action {
            DataAction::Gen { config, output } => {
                let cfg = load_config(config.as_deref(), cli.seed)?.unwrap_or_default();
                let exp = cfg.experiment()?;
                let data = runner::load_data(&cfg, &exp)?;
                if let Some(parent) = output.parent().filter(|p| !p.as_os_str().is_empty()) {
                    fs::create_dir_all(parent)
                        .with_context(|| format!("creating {}", parent.display()))?;
                }
                formats::save_dataset(&output, &data)?;
                log::info!("wrote {} samples to {}", data.len(), output.display());
                Ok(())
            }
            DataAction::Fetch { dir, mirror } => {
                let dir = dir.unwrap_or_else(|| Config::default().data_dir());
                let (images, labels) = mnist::fetch(&dir, &mirror)?;
                println!("{}\n{}", images.display(), labels.display());
                Ok(())
            }
        },
        Command::Version => {
            println!("equidyn {}", env!("CARGO_PKG_VERSION"));
            Ok(())
        }
    }
}

fn emit_reports(reports: &[CheckReport], output: Option<&Path>) -> Result<()> {
    for r in reports {
        let status = match r.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Measured => "MEASURED",
        };
        let family = r
            .fingerprint
            .get("family")
            .or(r.fingerprint.get("group"))
            .map(String::as_str)
            .unwrap_or("");
        log::info!("{status:<8} {} {family}", r.name);
    }
    match output {
        Some(path) => {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent)
                    .with_context(|| format!("creating {}", parent.display()))?;
            }
            let f =
                fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
            formats::write_reports(io::BufWriter::new(f), reports)
        }
        None => formats::write_reports(io::stdout().lock(), reports),
    }
}

const COUNTEREXAMPLE_VERDICTS: [(&str, &[&str]); 4] = [
    (
        "U is indefinite with smallest eigenvalue -1",
        &["u_min_eig_minus_one"],
    ),
    (
        "the E⊗2 projection of U is the identity",
        &["projected_u_eigs_minus_one", "projected_u_minus_identity"],
    ),
    (
        "V restricted to the complement of E has eigenvalue -1",
        &["v_on_e_perp_eigs_plus_one"],
    ),
    (
        "the projected V restricted to E has eigenvalue 1",
        &[
            "projected_v_on_e_eig_minus_one",
            "projected_v_minus_mean_outer",
        ],
    ),
];

fn print_counterexample(report: &CheckReport) {
    let mut out = io::stdout().lock();
    for (text, keys) in COUNTEREXAMPLE_VERDICTS {
        let worst = keys
            .iter()
            .map(|k| report.residuals[*k])
            .fold(0.0, f64::max);
        let pass = keys
            .iter()
            .all(|k| report.residuals[*k] <= report.bounds[*k]);
        let _ = writeln!(
            out,
            "{}  {text} (residual {worst:.1e})",
            if pass { "PASS" } else { "FAIL" }
        );
    }
}

fn spectrum(path: &Path, output: Option<&Path>) -> Result<()> {
    let ckpt = Checkpoint::load(path)?;
    let cfg = &ckpt.config;
    let exp = cfg.experiment()?;
    let data = runner::load_data(cfg, &exp)?;
    let model = exp.arch.model(exp.method)?;
    let layers = ckpt.layer_stack()?;
    if layers.dims() != model.dims() {
        bail!(
            "checkpoint dims {:?} do not match the configured model {:?}",
            layers.dims(),
            model.dims()
        );
    }
    let off = model.dist_from_e(&layers)?;
    if off > 0.0 {
        log::info!("projecting the checkpoint onto E (distance {off:.3e})");
    }
    let a = model.project_e(&layers)?;
    let family = RiskFamily::from_model(
        "checkpoint",
        &model,
        Arc::new(data),
        HaarStrategy::Exact,
        cfg.flow.seed,
    );
    let (report, spectrum) = theory::stability_spectrum(&family, &a, &cfg.tolerances)?;
    formats::write_reports(io::stdout().lock(), std::slice::from_ref(&report))?;
    if let Some(out) = output {
        let text: String = spectrum
            .eigenvalues
            .iter()
            .map(|l| format!("{l:.16e}\n"))
            .collect();
        fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}
