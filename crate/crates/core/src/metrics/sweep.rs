//! Renewal-rate and prompt-intensity sweeps over a scenario suite.

use super::rating::{Rating, RatingHistogram, RATER_VERSION};
use crate::reasoning::{CorpusStore, LlmClient, Mission, PromptLevel};
use crate::runner::{run_episode, RunError, RunOptions};
use crate::world::Scenario;
use serde::{Deserialize, Serialize};

pub const RENEWAL_RATES: [f64; 5] = [0.1, 0.3, 0.5, 0.7, 0.9];

/// Renewal rate held fixed while prompt levels vary.
pub const INTENSITY_SWEEP_RATE: f64 = 0.5;

/// Frames considered per clean episode during sweeps. With the runtime
/// default of two, rates .1 through .5 all commit a single box.
pub const SWEEP_RENEWAL_K: usize = 10;

/// Scenes in the generated sweep suite.
pub const SWEEP_SUITE_SIZE: usize = 16;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub histogram: RatingHistogram,
    /// Mission → `[Good, Middle, Normal, Bad]` percentages.
    pub percentages: Vec<(Mission, [f64; 4])>,
    pub good_pct: f64,
    pub alerts: u64,
}

impl SweepRow {
    fn new(setting: String, histogram: RatingHistogram) -> Self {
        Self {
            percentages: Mission::ALL.iter().map(|m| (*m, histogram.percentages(*m))).collect(),
            good_pct: histogram.overall_pct(Rating::Good),
            alerts: histogram.total(),
            setting,
            histogram,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepTable {
    pub kind: String,
    pub rater: String,
    pub rows: Vec<SweepRow>,
}

impl SweepTable {
    pub fn row(&self, setting: &str) -> Option<&SweepRow> {
        self.rows.iter().find(|r| r.setting == setting)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&format!("[{} = {}]  alerts {}  mean Good {:.1}%\n", self.kind, row.setting, row.alerts, row.good_pct));
            out.push_str(&format!("{:<26}{:>10}{:>12}{:>12}{:>9}\n", "mission", "Good (%)", "Middle (%)", "Normal (%)", "Bad (%)"));
            for (m, p) in &row.percentages {
                out.push_str(&format!(
                    "{:<26}{:>10.1}{:>12.1}{:>12.1}{:>9.1}\n",
                    m.label(),
                    p[0],
                    p[1],
                    p[2],
                    p[3]
                ));
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the suite in order on one store, advancing the corpus clock.
pub fn run_suite(
    suite: &[Scenario],
    base: &RunOptions,
    seed: u64,
    client: &dyn LlmClient,
    store: &mut CorpusStore,
) -> Result<RatingHistogram, RunError> {
    let mut hist = RatingHistogram::default();
    let mut epoch = base.corpus_epoch;
    for (i, scenario) in suite.iter().enumerate() {
        let opts = RunOptions {
            seed: Some(seed.wrapping_add(i as u64)),
            corpus_epoch: epoch,
            ..base.clone()
        };
        let summary = run_episode(scenario, &opts, client, store, |_| {})?;
        hist.merge(&summary.ratings);
        epoch += scenario.tick_count() + 1;
    }
    Ok(hist)
}

fn check_suite(suite: &[Scenario]) -> Result<(), RunError> {
    if suite.is_empty() {
        return Err(RunError::Config("sweep suite is empty".into()));
    }
    Ok(())
}

/// Each rate starts from an empty store.
pub fn run_renewal_sweep(
    suite: &[Scenario],
    rates: &[f64],
    seed: u64,
    base: &RunOptions,
    client: &dyn LlmClient,
) -> Result<SweepTable, RunError> {
    check_suite(suite)?;
    let mut rows = Vec::new();
    for &rate in rates {
        let mut store = CorpusStore::in_memory();
        let opts = RunOptions {
            renewal_rate: rate,
            ..base.clone()
        };
        let hist = run_suite(suite, &opts, seed, client, &mut store)?;
        rows.push(SweepRow::new(format!("{rate:.1}"), hist));
    }
    Ok(SweepTable {
        kind: "renewal_rate".into(),
        rater: RATER_VERSION.into(),
        rows,
    })
}

pub fn run_intensity_sweep(
    suite: &[Scenario],
    levels: &[PromptLevel],
    seed: u64,
    base: &RunOptions,
    client: &dyn LlmClient,
) -> Result<SweepTable, RunError> {
    check_suite(suite)?;
    let mut rows = Vec::new();
    for &level in levels {
        let mut store = CorpusStore::in_memory();
        let opts = RunOptions {
            level,
            renewal_rate: INTENSITY_SWEEP_RATE,
            ..base.clone()
        };
        let hist = run_suite(suite, &opts, seed, client, &mut store)?;
        rows.push(SweepRow::new(level.name().into(), hist));
    }
    Ok(SweepTable {
        kind: "prompt_level".into(),
        rater: RATER_VERSION.into(),
        rows,
    })
}
