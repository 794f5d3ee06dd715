//! Command-line front end.
//!
//! Exit codes: 0 success, 2 invalid input or usage, 3 numerical failure.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use netsem::io::{
    align_moments, export_network, ingest_data, read_model_file, read_report, rerun, run_job, write_model_file,
    write_report, DataKind, Job, NetworkFormat, Report,
};
use netsem::measures::{InformationCriterion, DEFAULT_EBIC_GAMMA};
use netsem::model::{all_slots, EdgeSet, ModelSpec, NetworkTarget};
use netsem::search::{log_spaced, InitialNetwork, LassoPathConfig, SearchConfig, SearchCriterion};
use netsem::simulation::{run_study, Study, StudyConfig};
use netsem::{Error, ObjectiveConfig, SampleMoments};

const EXIT_USER: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const THREADS_ENV: &str = "NETSEM_THREADS";

#[derive(Parser)]
#[command(name = "netsem", version, about = "Latent and residual network models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Fit a model and write a report.
    Fit(FitArgs),
    /// Stepwise search of a latent or residual network.
    Search(SearchArgs),
    /// LASSO path search of a latent or residual network.
    Lasso(LassoArgs),
    /// Run a simulation study.
    Simulate(SimulateArgs),
    /// Write the network of a report as an edge list or graph.
    ExportNetwork(ExportArgs),
    /// Recompute a report from its provenance block.
    Rerun(RerunArgs),
    /// Write a model file for a common model family.
    NewModel(NewModelArgs),
}

#[derive(Args)]
struct DataArgs {
    /// Model file (JSON).
    #[arg(long)]
    model: PathBuf,
    /// Data file: raw observations, or a covariance matrix with --covariance.
    #[arg(long)]
    data: PathBuf,
    /// Treat --data as a covariance matrix.
    #[arg(long)]
    covariance: bool,
    /// Sample size for covariance input.
    #[arg(long)]
    n: Option<usize>,
    /// Not supported: raw data are always centered.
    #[arg(long, hide = true)]
    no_center: bool,
    /// Report path; standard output when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// EBIC tuning parameter for reported fit measures.
    #[arg(long, default_value_t = DEFAULT_EBIC_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = 10_000)]
    max_iterations: usize,
}

#[derive(Args)]
struct FitArgs {
    #[command(flatten)]
    data: DataArgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Psi,
    Theta,
}

impl From<TargetArg> for NetworkTarget {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Psi => NetworkTarget::Psi,
            TargetArg::Theta => NetworkTarget::Theta,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CriterionArg {
    Chisq,
    Aic,
    Bic,
    Ebic,
}

#[derive(Clone, Copy, ValueEnum)]
enum InitialArg {
    Empty,
    Full,
    /// Start from the network declared in the model file.
    Model,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long, value_enum, default_value = "ebic")]
    criterion: CriterionArg,
    /// Significance level for --criterion chisq.
    #[arg(long, default_value_t = 0.05)]
    alpha: f64,
    /// Starting network; full for psi and empty for theta by default.
    #[arg(long, value_enum)]
    initial: Option<InitialArg>,
    #[arg(long, default_value_t = 1000)]
    max_steps: usize,
}

#[derive(Args)]
struct LassoArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, value_enum)]
    target: TargetArg,
    #[arg(long, value_enum, default_value = "ebic")]
    criterion: CriterionArg,
    /// Comma-separated penalty values; 20 log-spaced values on [0.01, 1] by default.
    #[arg(long, value_delimiter = ',')]
    nu_grid: Option<Vec<f64>>,
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
}

#[derive(Args)]
struct SimulateArgs {
    /// Study design 1-4.
    #[arg(long, conflicts_with = "config")]
    study: Option<u8>,
    /// Study configuration file (JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    replications: Option<usize>,
    /// Use the replication count of the original studies.
    #[arg(long)]
    full: bool,
    /// Comma-separated sample sizes.
    #[arg(long, value_delimiter = ',')]
    n_grid: Option<Vec<usize>>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory for summary.tsv, replications.tsv and study.json;
    /// the summary goes to standard output when omitted.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    EdgeList,
    Dot,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long, value_enum, default_value = "edge-list")]
    format: FormatArg,
    #[arg(long, value_enum)]
    target: Option<TargetArg>,
    /// Edges with absolute weight at or below this are omitted.
    #[arg(long, default_value_t = 1e-4)]
    epsilon: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct RerunArgs {
    #[arg(long)]
    report: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum FamilyArg {
    Ggm,
    Cfa,
    Lnm,
    Rnm,
}

#[derive(Args)]
struct NewModelArgs {
    #[arg(long, value_enum)]
    family: FamilyArg,
    /// Comma-separated observed variable names.
    #[arg(long, value_delimiter = ',', required = true)]
    observed: Vec<String>,
    /// Factor index (0-based) of each observed variable, for latent models.
    #[arg(long, value_delimiter = ',')]
    factors: Option<Vec<usize>>,
    /// Start with every network slot free (GGM and LNM); empty otherwise.
    #[arg(long)]
    full: bool,
    #[arg(long)]
    out: PathBuf,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Err(e) = configure_threads() {
        eprintln!("error[invalid_config]: {e}");
        return ExitCode::from(EXIT_USER);
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::from(if e.is_numerical() { EXIT_NUMERICAL } else { EXIT_USER })
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(value) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let threads: usize = value
        .parse()
        .map_err(|_| format!("{THREADS_ENV} must be a positive integer, got '{value}'"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn run(command: Command) -> netsem::Result<()> {
    match command {
        Command::Fit(args) => {
            let (spec, moments, objective) = load(&args.data)?;
            let job = Job::Fit {
                spec,
                moments,
                objective,
                ebic_gamma: args.data.gamma,
            };
            emit_report(&run_job(&job)?, args.data.out.as_deref())
        }
        Command::Search(args) => {
            let (spec, moments, objective) = load(&args.data)?;
            let target = NetworkTarget::from(args.target);
            let criterion = match args.criterion {
                CriterionArg::Chisq => SearchCriterion::ChiSquare { alpha: args.alpha },
                other => SearchCriterion::Information(information(other, args.data.gamma)?),
            };
            let initial = match args.initial {
                None => InitialNetwork::recommended(target),
                Some(InitialArg::Empty) => InitialNetwork::Empty,
                Some(InitialArg::Full) => InitialNetwork::Full,
                Some(InitialArg::Model) => InitialNetwork::Given(spec.network_edges(target).ok_or_else(|| {
                    Error::InvalidSpec(format!("model has no {} network", target.omega().name()))
                })?),
            };
            let config = SearchConfig {
                target,
                criterion,
                initial,
                max_steps: args.max_steps,
                objective,
            };
            let job = Job::Search {
                spec,
                moments,
                config,
                ebic_gamma: args.data.gamma,
            };
            emit_report(&run_job(&job)?, args.data.out.as_deref())
        }
        Command::Lasso(args) => {
            let (spec, moments, objective) = load(&args.data)?;
            let config = LassoPathConfig {
                target: args.target.into(),
                nu_sequence: args.nu_grid.unwrap_or_else(|| log_spaced(0.01, 1.0, 20)),
                epsilon: args.epsilon,
                criterion: information(args.criterion, args.data.gamma)?,
                objective,
            };
            let job = Job::Lasso {
                spec,
                moments,
                config,
                ebic_gamma: args.data.gamma,
            };
            emit_report(&run_job(&job)?, args.data.out.as_deref())
        }
        Command::Simulate(args) => simulate(args),
        Command::ExportNetwork(args) => {
            let report = read_report(&args.report)?;
            let format = match args.format {
                FormatArg::EdgeList => NetworkFormat::EdgeList,
                FormatArg::Dot => NetworkFormat::Dot,
            };
            let text = export_network(&report, args.target.map(Into::into), format, args.epsilon)?;
            emit_text(&text, args.out.as_deref())
        }
        Command::Rerun(args) => {
            let report = rerun(&read_report(&args.report)?)?;
            emit_report(&report, args.out.as_deref())
        }
        Command::NewModel(args) => {
            let spec = new_model(&args)?;
            write_model_file(&args.out, &spec)
        }
    }
}

fn information(c: CriterionArg, gamma: f64) -> netsem::Result<InformationCriterion> {
    match c {
        CriterionArg::Aic => Ok(InformationCriterion::Aic),
        CriterionArg::Bic => Ok(InformationCriterion::Bic),
        CriterionArg::Ebic => Ok(InformationCriterion::Ebic { gamma }),
        CriterionArg::Chisq => Err(Error::InvalidConfig(
            "chisq selection is only available for stepwise search".into(),
        )),
    }
}

fn load(args: &DataArgs) -> netsem::Result<(ModelSpec, SampleMoments, ObjectiveConfig)> {
    if args.no_center {
        return Err(Error::InvalidConfig(
            "--no-center is not supported: raw data are always centered".into(),
        ));
    }
    let spec = read_model_file(&args.model)?;
    let kind = if args.covariance {
        DataKind::Covariance { n: args.n }
    } else {
        if args.n.is_some() {
            return Err(Error::InvalidConfig("--n applies to covariance input only".into()));
        }
        DataKind::RawCsv
    };
    let ingested = ingest_data(&args.data, kind)?;
    for w in &ingested.warnings {
        log::warn!("{w}");
    }
    let moments = align_moments(&ingested.moments, spec.observed())?;
    let objective = ObjectiveConfig {
        max_iterations: args.max_iterations,
        ..ObjectiveConfig::default()
    };
    Ok((spec, moments, objective))
}

fn emit_report(report: &Report, out: Option<&Path>) -> netsem::Result<()> {
    for w in &report.warnings {
        log::warn!("{w}");
    }
    match out {
        Some(path) => write_report(path, report),
        None => emit_text(&(netsem::io::report_to_string(report)? + "\n"), None),
    }
}

fn emit_text(text: &str, out: Option<&Path>) -> netsem::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn simulate(args: SimulateArgs) -> netsem::Result<()> {
    let mut config = match (&args.config, args.study) {
        (Some(path), _) => serde_json::from_str::<StudyConfig>(&std::fs::read_to_string(path)?)
            .map_err(|e| Error::MalformedFile(e.to_string()))?,
        (None, Some(n)) => {
            let study =
                Study::from_number(n).ok_or_else(|| Error::InvalidConfig(format!("unknown study {n}")))?;
            if args.full {
                StudyConfig::full(study, args.seed)
            } else {
                StudyConfig::desk(study, args.seed)
            }
        }
        (None, None) => return Err(Error::InvalidConfig("give --study or --config".into())),
    };
    if args.config.is_some() && args.full {
        config.replications = StudyConfig::full(config.study, config.seed).replications;
    }
    if let Some(r) = args.replications {
        config.replications = r;
    }
    if let Some(grid) = args.n_grid {
        config.n_grid = grid;
    }
    let result = run_study(&config)?;
    match args.out_dir {
        Some(dir) => {
            std::fs::create_dir_all(&dir)?;
            std::fs::write(dir.join("summary.tsv"), result.summary_tsv())?;
            std::fs::write(dir.join("replications.tsv"), result.rows_tsv())?;
            std::fs::write(dir.join("study.json"), serde_json::to_string_pretty(&result)? + "\n")?;
            Ok(())
        }
        None => emit_text(&result.summary_tsv(), None),
    }
}

fn new_model(args: &NewModelArgs) -> netsem::Result<ModelSpec> {
    let observed = args.observed.clone();
    let network = |n: usize| -> EdgeSet {
        if args.full {
            all_slots(n).collect()
        } else {
            EdgeSet::new()
        }
    };
    match args.family {
        FamilyArg::Ggm => ModelSpec::ggm(observed.clone(), &network(observed.len())),
        family => {
            let factors = args
                .factors
                .as_ref()
                .ok_or_else(|| Error::InvalidSpec("latent models need --factors".into()))?;
            let m = factors.iter().max().map_or(0, |v| v + 1);
            let latent = (1..=m).map(|i| format!("f{i}")).collect();
            let cfa = ModelSpec::cfa(observed, latent, factors)?;
            match family {
                FamilyArg::Lnm => cfa.with_latent_network(&network(m)),
                FamilyArg::Rnm => cfa.with_residual_network(&EdgeSet::new()),
                _ => Ok(cfa),
            }
        }
    }
}
