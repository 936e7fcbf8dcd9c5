mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use privscore::models::ModelKind;
use privscore::psc::Route;
use privscore::scm::Scenario;
use privscore::study::QuantilesOver;

use crate::config::RunConfig;

#[derive(Parser)]
#[command(
    name = "privscore",
    version,
    about = "Privilege scores and their contributions for fairness audits"
)]
struct Cli {
    /// Worker threads for iterations, folds and bootstrap replicates.
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation study and report bias, MSE, coverage and CI width.
    Simulate(SimulateArgs),
    /// Fit both worlds on a data set and score every test row.
    Audit(AuditArgs),
    /// Print and chart one scored row of an audit run.
    Explain(ExplainArgs),
    /// Permutation importance of each model input for the privilege score.
    Pfi(PfiArgs),
}

/// Flags shared by every fitting command; each overrides its config key.
#[derive(Args, Clone, Default)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Bootstrap replicates.
    #[arg(long)]
    bootstrap: Option<usize>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, value_parser = parse_route)]
    route: Option<Route>,
    /// logistic or random_forest.
    #[arg(long, value_parser = parse_model)]
    model: Option<ModelKind>,
    /// Random-search evaluations per tuning run.
    #[arg(long)]
    evaluations: Option<usize>,
    #[arg(long)]
    folds: Option<usize>,
    /// Training fraction of the train/test split.
    #[arg(long)]
    split: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SimulateArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, value_parser = parse_scenario)]
    scenario: Option<Scenario>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    iters: Option<usize>,
    /// Population the 5%/95% quantiles range over: iterations or individuals.
    #[arg(long, value_parser = parse_quantiles)]
    quantiles_over: Option<QuantilesOver>,
}

#[derive(Args)]
struct AuditArgs {
    #[command(flatten)]
    common: Common,
    /// Input CSV.
    #[arg(long)]
    data: PathBuf,
    /// Causal graph JSON.
    #[arg(long)]
    dag: PathBuf,
    /// Column spec JSON (name -> kind and role).
    #[arg(long, conflicts_with = "recipe", required_unless_present = "recipe")]
    columns: Option<PathBuf>,
    /// Built-in encoding of a raw public data set: hmda or lawschool.
    #[arg(long)]
    recipe: Option<String>,
    /// Also write one SVG chart per scored row.
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct ExplainArgs {
    /// Audit output directory.
    #[arg(long)]
    run: PathBuf,
    #[arg(long)]
    id: String,
    /// Chart destination; defaults to explain_<id>.svg in the run directory.
    #[arg(long)]
    svg: Option<PathBuf>,
}

#[derive(Args)]
struct PfiArgs {
    /// Audit output directory.
    #[arg(long)]
    run: PathBuf,
    #[arg(long, default_value_t = privscore::analytics::DEFAULT_PFI_REPEATS)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_route(s: &str) -> Result<Route, String> {
    s.parse().map_err(|e: privscore::Error| e.to_string())
}

fn parse_model(s: &str) -> Result<ModelKind, String> {
    s.parse().map_err(|e: privscore::Error| e.to_string())
}

fn parse_scenario(s: &str) -> Result<Scenario, String> {
    s.parse().map_err(|e: privscore::Error| e.to_string())
}

fn parse_quantiles(s: &str) -> Result<QuantilesOver, String> {
    s.parse().map_err(|e: privscore::Error| e.to_string())
}

impl Common {
    fn resolve(&self) -> privscore::Result<RunConfig> {
        let mut c = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        macro_rules! take {
            ($($field:ident => $key:ident),*) => {
                $(if let Some(v) = self.$field.clone() { c.$key = v; })*
            };
        }
        take!(seed => seed, bootstrap => bootstrap, route => route, model => model,
              evaluations => evaluations, folds => folds, split => split);
        if self.alpha.is_some() {
            c.alpha = self.alpha;
        }
        if self.out.is_some() {
            c.out = self.out.clone();
        }
        Ok(c)
    }
}

fn run(cli: Cli) -> privscore::Result<()> {
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(privscore::Error::InvalidArgument(
                "--workers must be at least 1".into(),
            ));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(w)
            .build_global()
            .map_err(|e| privscore::Error::InvalidArgument(format!("worker pool: {e}")))?;
    }
    match cli.command {
        Command::Simulate(a) => {
            let mut c = a.common.resolve()?;
            if let Some(s) = a.scenario {
                c.scenario = s;
            }
            if let Some(n) = a.n {
                c.n = n;
            }
            if let Some(m) = a.iters {
                c.iterations = m;
            }
            if let Some(q) = a.quantiles_over {
                c.quantiles_over = q;
            }
            commands::simulate(&c)
        }
        Command::Audit(a) => {
            let c = a.common.resolve()?;
            let input = commands::AuditInput {
                data: a.data,
                dag: a.dag,
                columns: a.columns,
                recipe: a.recipe.map(|r| r.parse()).transpose()?,
                svg: a.svg,
            };
            commands::audit(&c, &input)
        }
        Command::Explain(a) => commands::explain(&a.run, &a.id, a.svg.as_deref()),
        Command::Pfi(a) => commands::pfi(&a.run, a.repeats, a.seed),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_input_error() { 2 } else { 1 })
        }
    }
}
