use std::path::PathBuf;
use std::process::ExitCode;

use automas::config::ConfigFile;
use automas::harness::{
    emit_plot_data, read_results, run_experiment, walkthrough, write_outputs, SelectorBackend,
    WalkthroughOptions,
};
use automas::llm::ChatEndpointConfig;
use clap::{Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "automas", about = "Multi-agent channel estimation experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineKind {
    Rule,
    Llm,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        /// JSON experiment config.
        #[arg(long)]
        config: PathBuf,
        /// Overrides the master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the output directory.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads for trials.
        #[arg(long)]
        parallel: Option<usize>,
    },
    /// Single Scenario-2 episode with the full agent trace.
    Walkthrough {
        #[arg(long, value_enum, default_value = "rule")]
        engine: EngineKind,
        /// Recorded transcript to serve the selector from.
        #[arg(long)]
        replay: Option<PathBuf>,
        /// Live endpoint, used with `--engine llm` and no `--replay`.
        #[arg(long)]
        base_url: Option<String>,
        /// Model name sent with each request.
        #[arg(long)]
        model: Option<String>,
        /// Append live exchanges to this transcript.
        #[arg(long)]
        record: Option<PathBuf>,
        /// Master seed.
        #[arg(long, default_value_t = 2025)]
        seed: u64,
    },
    /// Regenerate per-scenario plot data from a results directory.
    EmitPlots {
        /// Directory holding results.csv.
        #[arg(long = "in")]
        input: PathBuf,
    },
}

fn run(cli: Cli) -> Result<bool, Box<dyn std::error::Error>> {
    match cli.command {
        Command::Run {
            config,
            seed,
            out,
            parallel,
        } => {
            let mut cfg = ConfigFile::load(&config)?;
            if let Some(s) = seed {
                cfg.experiment.master_seed = s;
            }
            if let Some(o) = out {
                cfg.experiment.output_dir = o;
            }
            if let Some(p) = parallel {
                cfg.experiment.parallel = p;
            }
            let result = run_experiment(&cfg)?;
            write_outputs(&result, &cfg.experiment.output_dir)?;
            println!("scenario,algorithm,mean_nmse_db,std_nmse_db,failed_rows");
            for s in &result.summary {
                println!(
                    "{},{},{:.3},{:.3},{}",
                    s.scenario, s.algorithm, s.mean_nmse_db, s.std_nmse_db, s.failed_rows
                );
            }
            println!("wrote {}", cfg.experiment.output_dir.display());
            Ok(true)
        }
        Command::Walkthrough {
            engine,
            replay,
            base_url,
            model,
            record,
            seed,
        } => {
            let mut opts = WalkthroughOptions {
                master_seed: seed,
                ..WalkthroughOptions::default()
            };
            if let Some(m) = &model {
                opts.model_name = m.clone();
            }
            opts.backend = match (engine, replay, base_url) {
                (EngineKind::Rule, _, _) => SelectorBackend::Rule,
                (EngineKind::Llm, Some(path), _) => SelectorBackend::Replay(path),
                (EngineKind::Llm, None, Some(url)) => SelectorBackend::Live {
                    endpoint: ChatEndpointConfig::new(url, opts.model_name.clone())?,
                    record,
                },
                (EngineKind::Llm, None, None) => {
                    return Err("--engine llm needs --replay FILE or --base-url URL".into())
                }
            };
            let report = walkthrough(&opts)?;
            for line in &report.lines {
                println!("{line}");
            }
            Ok(report.passed())
        }
        Command::EmitPlots { input } => {
            let rows = read_results(&input.join("results.csv"))?;
            for p in emit_plot_data(&rows, &input)? {
                println!("wrote {}", p.display());
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
