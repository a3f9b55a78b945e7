use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use minilab_cli::error::CliError;
use minilab_cli::metrics::{self, AlphaMetric};
use minilab_cli::report::{cmd_report, ReportFormat};
use minilab_cli::server::{serve, ServeConfig};
use minilab_cli::simulate::{cmd_simulate, SimulateArgs};

#[derive(Parser)]
#[command(name = "minilab", version, about = "Outreach campaign lab: simulation, metrics, reports and the review service")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run seeded campaign batches and write per-campaign and aggregate JSON.
    Simulate {
        spec: PathBuf,
        profiles: PathBuf,
        #[arg(long, default_value_t = 200)]
        leads: usize,
        #[arg(long, default_value_t = 1)]
        campaigns: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        backends: Option<PathBuf>,
    },
    /// Score text or ratings.
    Metrics {
        #[command(subcommand)]
        metric: MetricCommand,
    },
    /// Render a result table with ratio analysis.
    Report {
        #[arg(long)]
        fixtures: PathBuf,
        #[arg(long)]
        baseline: Option<String>,
        /// An aggregate.json from `simulate` to compare against.
        #[arg(long)]
        computed: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = ReportFormat::Text)]
        format: ReportFormat,
    },
    /// Serve the REST API and the review UI.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long)]
        state_dir: PathBuf,
        #[arg(long)]
        backends: Option<PathBuf>,
        #[arg(long)]
        ui_dir: Option<PathBuf>,
        #[arg(long, default_value_t = 42)]
        assign_seed: u64,
        #[arg(long)]
        research_backend: Option<String>,
    },
}

#[derive(Subcommand)]
enum MetricCommand {
    Rouge {
        candidate: PathBuf,
        reference: PathBuf,
        #[arg(long, default_value_t = 1.2)]
        beta: f64,
    },
    Bertscore {
        candidate: PathBuf,
        reference: PathBuf,
        #[arg(long)]
        baseline: Option<f64>,
    },
    Factual {
        output: PathBuf,
        #[arg(long = "source", required = true)]
        sources: Vec<PathBuf>,
    },
    Stats {
        #[command(subcommand)]
        stat: StatCommand,
    },
}

#[derive(Subcommand)]
enum StatCommand {
    /// JSON confusion matrix.
    Kappa { matrix: PathBuf },
    /// CSV of item,rater,rating.
    Alpha {
        ratings: PathBuf,
        #[arg(long, value_enum, default_value_t = AlphaMetric::Interval)]
        metric: AlphaMetric,
    },
    /// CSV of x,y.
    Pearson { pairs: PathBuf },
    Relevance { ratings: PathBuf },
    Completeness {
        #[arg(long = "present", value_delimiter = ',')]
        present: Vec<String>,
        #[arg(long)]
        checklist: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let out = match cli.command {
        Command::Simulate { spec, profiles, leads, campaigns, seed, out, backends } => {
            let args = SimulateArgs { spec, profiles, leads, campaigns, seed, out, backends };
            let agg = cmd_simulate(&args)?;
            format!("wrote {} campaign files and aggregate.json to {}\n", agg.campaigns, args.out.display())
        }
        Command::Metrics { metric } => match metric {
            MetricCommand::Rouge { candidate, reference, beta } => metrics::rouge(&candidate, &reference, beta)?,
            MetricCommand::Bertscore { candidate, reference, baseline } => metrics::bertscore(&candidate, &reference, baseline)?,
            MetricCommand::Factual { output, sources } => metrics::factual(&output, &sources)?,
            MetricCommand::Stats { stat } => match stat {
                StatCommand::Kappa { matrix } => metrics::kappa(&matrix)?,
                StatCommand::Alpha { ratings, metric } => metrics::alpha(&ratings, metric)?,
                StatCommand::Pearson { pairs } => metrics::pearson(&pairs)?,
                StatCommand::Relevance { ratings } => metrics::relevance(&ratings)?,
                StatCommand::Completeness { present, checklist } => metrics::completeness(&present, checklist.as_deref())?,
            },
        },
        Command::Report { fixtures, baseline, computed, format } => cmd_report(&fixtures, baseline.as_deref(), computed.as_deref(), format)?,
        Command::Serve { port, state_dir, backends, ui_dir, assign_seed, research_backend } => {
            serve(&ServeConfig { port, state_dir, backends, ui_dir, assign_seed, research_backend })?;
            String::new()
        }
    };
    print!("{out}");
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
