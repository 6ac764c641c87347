use clap::{Args, Parser, Subcommand, ValueEnum};
use sentinel_cli::commands::{
    cmd_run, cmd_sweeps, cmd_validate, eval_logs, eval_occlusion_suite, render_suite, write_perception, write_suite,
    EXIT_CLEAN, EXIT_FAILURE,
};
use sentinel_cli::config::{LlmSpec, RunConfig};
use sentinel_cli::llm::make_client;
use sentinel_cli::serve::{start, ServeOptions};
use sentinel_cli::CliError;
use sentinel_core::reasoning::PromptLevel;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Duration;

#[derive(Parser)]
#[command(name = "sentinel", version, about = "Cooperative perception and safety reasoning episodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode and write its log. Exits 2 if the episode ends in a collision.
    Run(RunArgs),
    /// Score logs or the occlusion suite, or run the renewal and prompt sweeps.
    Eval(EvalArgs),
    /// Host a live session over HTTP.
    Serve(ServeArgs),
    /// Check scenario files and episode logs.
    Validate(ValidateArgs),
}

#[derive(Args, Clone)]
struct RunArgs {
    /// Scenario file or bundled scenario name.
    #[arg(long, default_value = "straight_road_clear")]
    scenario: String,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value_t = 0.35, allow_negative_numbers = true)]
    threshold: f64,
    /// `mock` or `http:<endpoint>`.
    #[arg(long, default_value = "mock")]
    llm: LlmSpec,
    #[arg(long = "renewal-rate", default_value_t = 0.5, allow_negative_numbers = true)]
    renewal_rate: f64,
    /// mini, middle or high.
    #[arg(long, default_value = "middle")]
    level: PromptLevel,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Perfect sensors and a lossless link.
    #[arg(long)]
    noiseless: bool,
    /// Corpus file kept across runs.
    #[arg(long)]
    corpus: Option<PathBuf>,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            scenario: self.scenario.clone(),
            seed: self.seed,
            threshold: self.threshold,
            llm: self.llm.clone(),
            out: self.out.clone(),
            renewal_rate: self.renewal_rate,
            level: self.level,
            noiseless: self.noiseless,
            corpus: self.corpus.clone(),
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Perception,
    Sweeps,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long, value_enum)]
    mode: Mode,
    /// Episode logs to score. Without any, perception mode runs the occlusion suite.
    logs: Vec<PathBuf>,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    #[arg(long, default_value = "mock")]
    llm: LlmSpec,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

#[derive(Args)]
struct ServeArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long, default_value_t = 8080)]
    port: u16,
    /// Milliseconds between ticks.
    #[arg(long = "tick-ms", default_value_t = 100)]
    tick_ms: u64,
}

#[derive(Args)]
struct ValidateArgs {
    /// Scenario file or bundled name; repeatable.
    #[arg(long)]
    scenario: Vec<String>,
    /// Episode logs.
    logs: Vec<PathBuf>,
}

fn eval(args: EvalArgs) -> Result<(), CliError> {
    let client = make_client(&args.llm).map_err(|e| CliError::Config(e.to_string()))?;
    match args.mode {
        Mode::Perception if args.logs.is_empty() => {
            let s = eval_occlusion_suite(args.seed, client.as_ref())?;
            print!("{}", render_suite(&s));
            write_suite(&args.out, &s)
        }
        Mode::Perception => {
            let report = eval_logs(&args.logs)?;
            print!("{}", report.render());
            write_perception(&args.out, &report)
        }
        Mode::Sweeps => {
            let s = cmd_sweeps(&args.out, args.seed, client.as_ref())?;
            print!("{}\n{}", s.renewal.render(), s.intensity.render());
            println!("tables written to {}", args.out.display());
            Ok(())
        }
    }
}

fn serve(args: ServeArgs) -> Result<(), CliError> {
    let rt = tokio::runtime::Runtime::new().map_err(|source| CliError::Bind { port: args.port, source })?;
    rt.block_on(async {
        let opts = ServeOptions { run: args.run.config(), tick_interval: Duration::from_millis(args.tick_ms) };
        let server = start(opts, args.port).await?;
        println!("listening on http://{}", server.addr);
        tokio::select! {
            r = server.task => match r {
                Ok(Ok(())) => Ok(()),
                Ok(Err(source)) => Err(CliError::Bind { port: args.port, source }),
                Err(e) => Err(CliError::Bind { port: args.port, source: std::io::Error::other(e) }),
            },
            _ = tokio::signal::ctrl_c() => Ok(()),
        }
    })
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(&args.config()).map(|r| {
            let s = &r.summary;
            println!(
                "{}: {} ticks, outcome {:?}, {} alerts, {} collisions, {} corpus boxes committed",
                s.episode_id,
                s.ticks,
                s.outcome,
                s.alerts.len(),
                s.collisions.len(),
                s.committed.len()
            );
            println!("log: {}", r.log_path.display());
            r.exit_code()
        }),
        Command::Eval(args) => eval(args).map(|_| EXIT_CLEAN),
        Command::Serve(args) => serve(args).map(|_| EXIT_CLEAN),
        Command::Validate(args) => {
            let (ok, lines) = cmd_validate(&args.scenario, &args.logs);
            for l in lines {
                println!("{l}");
            }
            Ok(if ok { EXIT_CLEAN } else { EXIT_FAILURE })
        }
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("sentinel: {e}");
            ExitCode::from(EXIT_FAILURE as u8)
        }
    }
}
