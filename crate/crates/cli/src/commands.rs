//! `run`, `eval` and `validate`.

use crate::config::{resolve_scenario, RunConfig};
use crate::llm::make_client;
use crate::log::{read_log, ConfigEcho, EpisodeLogWriter, LogHeader, LogLine, TickLog, Versions, LOG_FORMAT};
use crate::CliError;
use sentinel_core::metrics::{
    run_intensity_sweep, run_renewal_sweep, PerceptionEval, PerceptionReport, SweepTable, RATER_VERSION,
    RENEWAL_RATES, SWEEP_RENEWAL_K, SWEEP_SUITE_SIZE,
};
use sentinel_core::reasoning::{CorpusStore, EpisodeOutcome, LlmClient, PromptLevel};
use sentinel_core::runner::{run_episode, EpisodeSummary, RunOptions};
use sentinel_core::scenarios::{occlusion_suite, sweep_suite};
use sentinel_core::world::{Scenario, SCENARIO_SCHEMA_VERSION};
use serde::Serialize;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

pub const EXIT_CLEAN: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_COLLISION: i32 = 2;

#[derive(Debug, Clone)]
pub struct RunResult {
    pub summary: EpisodeSummary,
    pub log_path: PathBuf,
}

impl RunResult {
    pub fn exit_code(&self) -> i32 {
        match self.summary.outcome {
            EpisodeOutcome::Clean => EXIT_CLEAN,
            EpisodeOutcome::Collision { .. } => EXIT_COLLISION,
        }
    }
}

pub fn log_header(cfg: &RunConfig, scenario: &Scenario, digest: &str, opts: &RunOptions, llm: &str) -> LogHeader {
    let seed = opts.seed.unwrap_or(scenario.seed);
    LogHeader {
        format: LOG_FORMAT.into(),
        episode_id: opts.episode_id.clone().unwrap_or_else(|| format!("{}-s{seed}", scenario.id)),
        scenario_id: scenario.id.clone(),
        ego_id: scenario.ego_id(),
        config: ConfigEcho {
            scenario: cfg.scenario.clone(),
            scenario_sha256: digest.to_string(),
            seed,
            threshold: opts.threshold,
            llm: llm.to_string(),
            renewal_rate: opts.renewal_rate,
            renewal_k: opts.renewal_k,
            level: opts.level.name().into(),
            noiseless: opts.noiseless,
            corpus: cfg.corpus.is_some(),
        },
        versions: Versions {
            sentinel: env!("CARGO_PKG_VERSION").into(),
            llm: llm.to_string(),
            rater: RATER_VERSION.into(),
            scenario_schema: SCENARIO_SCHEMA_VERSION,
        },
    }
}

fn open_store(cfg: &RunConfig) -> Result<CorpusStore, CliError> {
    match &cfg.corpus {
        Some(path) => CorpusStore::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display()))),
        None => Ok(CorpusStore::in_memory()),
    }
}

/// Runs one episode and writes `<out>/<episode_id>.ndjson`.
pub fn cmd_run(cfg: &RunConfig) -> Result<RunResult, CliError> {
    cfg.validate()?;
    let resolved = resolve_scenario(&cfg.scenario)?;
    let opts = cfg.options();
    opts.validate()?;
    let client = make_client(&cfg.llm).map_err(|e| CliError::Config(e.to_string()))?;
    run_with_client(cfg, &resolved.scenario, &resolved.digest, &opts, client.as_ref())
}

pub fn run_with_client(
    cfg: &RunConfig,
    scenario: &Scenario,
    digest: &str,
    opts: &RunOptions,
    client: &dyn LlmClient,
) -> Result<RunResult, CliError> {
    let header = log_header(cfg, scenario, digest, opts, &client.name());
    std::fs::create_dir_all(&cfg.out).map_err(|e| CliError::io(&cfg.out, e))?;
    let log_path = cfg.out.join(format!("{}.ndjson", header.episode_id));
    let file = File::create(&log_path).map_err(|e| CliError::io(&log_path, e))?;
    let mut writer = EpisodeLogWriter::new(BufWriter::new(file));
    let io = |e| CliError::io(&log_path, e);
    writer.write(&LogLine::Header(Box::new(header))).map_err(io)?;
    let mut store = open_store(cfg)?;
    let mut write_err = None;
    let summary = run_episode(scenario, opts, client, &mut store, |r| {
        if write_err.is_none() {
            write_err = writer.write(&LogLine::Tick(Box::new(TickLog::from_record(r)))).err();
        }
    })?;
    if let Some(e) = write_err {
        return Err(io(e));
    }
    writer.write(&LogLine::Summary(Box::new(summary.clone()))).map_err(io)?;
    writer.finish().map_err(io)?;
    Ok(RunResult { summary, log_path })
}

fn write_file(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    write_file(path, &(serde_json::to_string_pretty(value).expect("report serializes") + "\n"))
}

/// Scores logged episodes. Missing or corrupt logs fail the whole call.
pub fn eval_logs(paths: &[PathBuf]) -> Result<PerceptionReport, CliError> {
    let mut eval = PerceptionEval::new(true).observable_only();
    for path in paths {
        let log = read_log(path)?;
        for t in &log.ticks {
            let rec = t.to_record().map_err(|m| CliError::Log(format!("{}: tick {}: {m}", path.display(), t.tick)))?;
            if let Some(p) = &rec.product {
                let spec = p.fused_grid.spec;
                eval.add(&rec, log.header.ego_id, &spec);
            }
        }
    }
    Ok(eval.report())
}

/// Outcome of running the occlusion suite through perception scoring.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteEval {
    pub report: PerceptionReport,
    /// Per scene: matched by fusion, matched by the best single node, total.
    pub scenes: Vec<(String, [usize; 3])>,
}

impl SuiteEval {
    pub fn fused_recall(&self) -> f64 {
        let (hit, total) = self.scenes.iter().fold((0, 0), |acc, (_, c)| (acc.0 + c[0], acc.1 + c[2]));
        hit as f64 / total.max(1) as f64
    }

    /// Best single node per scene, pooled over scenes.
    pub fn best_single_recall(&self) -> f64 {
        let (hit, total) = self.scenes.iter().fold((0, 0), |acc, (_, c)| (acc.0 + c[1], acc.1 + c[2]));
        hit as f64 / total.max(1) as f64
    }
}

/// Every object in range counts, seen or hidden, so occlusion costs recall.
pub fn eval_occlusion_suite(seed: u64, client: &dyn LlmClient) -> Result<SuiteEval, CliError> {
    let mut pooled = PerceptionEval::new(true);
    let mut scenes = Vec::new();
    for scenario in occlusion_suite(seed) {
        let opts = RunOptions::default();
        let grid = opts.heads.grid;
        let ego = scenario.ego_id();
        let mut local = PerceptionEval::new(false);
        run_episode(&scenario, &opts, client, &mut CorpusStore::in_memory(), |r| {
            pooled.add(r, ego, &grid);
            local.add(r, ego, &grid);
        })?;
        let (fused, best, total) = local.recall_counts();
        scenes.push((scenario.id.clone(), [fused, best, total]));
    }
    Ok(SuiteEval { report: pooled.report(), scenes })
}

pub fn render_suite(s: &SuiteEval) -> String {
    let mut out = s.report.render();
    out.push_str(&format!("\n{:<24}{:>10}{:>10}{:>8}\n", "scene", "fused", "best node", "objects"));
    for (id, [f, b, n]) in &s.scenes {
        out.push_str(&format!("{id:<24}{f:>10}{b:>10}{n:>8}\n"));
    }
    out.push_str(&format!(
        "\nrecall at 2.0 m: fused {:.1}%  best single node {:.1}%\n",
        100.0 * s.fused_recall(),
        100.0 * s.best_single_recall()
    ));
    out
}

pub fn write_perception(out: &Path, report: &PerceptionReport) -> Result<(), CliError> {
    write_file(&out.join("perception_report.txt"), &report.render())?;
    write_json(&out.join("perception_report.json"), report)
}

pub fn write_suite(out: &Path, s: &SuiteEval) -> Result<(), CliError> {
    write_file(&out.join("occlusion_suite.txt"), &render_suite(s))?;
    write_json(&out.join("occlusion_suite.json"), s)
}

pub struct Sweeps {
    pub renewal: SweepTable,
    pub intensity: SweepTable,
}

/// Both sweeps over the generated suite. Files land in `out` as
/// `renewal_sweep.{txt,json}` and `intensity_sweep.{txt,json}`.
pub fn cmd_sweeps(out: &Path, seed: u64, client: &dyn LlmClient) -> Result<Sweeps, CliError> {
    let suite = sweep_suite(SWEEP_SUITE_SIZE);
    let base = RunOptions { renewal_k: SWEEP_RENEWAL_K, ..RunOptions::default() };
    let renewal = run_renewal_sweep(&suite, &RENEWAL_RATES, seed, &base, client)?;
    let intensity = run_intensity_sweep(&suite, &PromptLevel::ALL, seed, &base, client)?;
    write_file(&out.join("renewal_sweep.txt"), &renewal.render())?;
    write_json(&out.join("renewal_sweep.json"), &renewal)?;
    write_file(&out.join("intensity_sweep.txt"), &intensity.render())?;
    write_json(&out.join("intensity_sweep.json"), &intensity)?;
    Ok(Sweeps { renewal, intensity })
}

/// Checks scenarios load and logs verify. Returns one line per input.
pub fn cmd_validate(scenarios: &[String], logs: &[PathBuf]) -> (bool, Vec<String>) {
    if scenarios.is_empty() && logs.is_empty() {
        return (false, vec!["nothing to validate".into()]);
    }
    let mut ok = true;
    let mut lines = Vec::new();
    for s in scenarios {
        match resolve_scenario(s) {
            Ok(r) => lines.push(format!("ok    scenario {s} ({} ticks)", r.scenario.tick_count())),
            Err(e) => {
                ok = false;
                lines.push(format!("error scenario {s}: {e}"));
            }
        }
    }
    for p in logs {
        match read_log(p) {
            Ok(log) => lines.push(format!("ok    log {} ({} ticks)", p.display(), log.ticks.len())),
            Err(e) => {
                ok = false;
                lines.push(format!("error log {e}"));
            }
        }
    }
    (ok, lines)
}
