//! One episode end to end: world → sense → encode → channel → ingest →
//! fusion heads → reasoning loop, one tick at a time.

use crate::fusion::{EgoState, FusionCenter, FusionError, HeadsConfig, HeadsInput, PerceptionProduct};
use crate::geom::Pose;
use crate::metrics::{rate_alerts, EpisodeTruth, RatingHistogram};
use crate::reasoning::{
    CorpusBox, CorpusStore, DecisionFrame, EpisodeOutcome, LlmClient, MissionRubric, PromptLevel, ReasoningConfig,
    ReasoningError, ReasoningLoop, SafetyAlert,
};
use crate::sensing::{observable_ids, sense_frame, GridSpec, SensingAgent, SensorConfig, SensorFrame};
use crate::v2x::{decode_message, encode_message, Channel, ChannelModel, ChannelStats, CodecError, IngestBuffer};
use crate::world::{detect_collisions, step_world, ActorId, CollisionEvent, Scenario, WorldError, WorldState};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet};
use std::time::Duration;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Reasoning(#[from] ReasoningError),
    #[error(transparent)]
    Codec(#[from] CodecError),
    #[error("invalid configuration: {0}")]
    Config(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunOptions {
    /// Overrides the scenario's own seed.
    pub seed: Option<u64>,
    pub threshold: f64,
    pub renewal_rate: f64,
    /// Candidate boxes per clean episode.
    pub renewal_k: usize,
    pub level: PromptLevel,
    /// Perfect sensors and a lossless link.
    pub noiseless: bool,
    pub channel: ChannelModel,
    /// How long the fusion center waits for a tick's frames.
    pub staleness_s: f64,
    pub heads: HeadsConfig,
    pub cot: bool,
    pub llm_timeout: Duration,
    /// Offset of this episode on the corpus clock.
    pub corpus_epoch: u64,
    pub episode_id: Option<String>,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seed: None,
            threshold: 0.35,
            renewal_rate: 0.5,
            renewal_k: 2,
            level: PromptLevel::Middle,
            noiseless: false,
            channel: ChannelModel::default(),
            staleness_s: 0.1,
            heads: HeadsConfig::default(),
            cot: true,
            llm_timeout: Duration::from_secs(10),
            corpus_epoch: 0,
            episode_id: None,
        }
    }
}

impl RunOptions {
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    pub fn validate(&self) -> Result<(), RunError> {
        if !(0.0..=1.0).contains(&self.threshold) {
            return Err(RunError::Config(format!("threshold {} outside [0, 1]", self.threshold)));
        }
        if !(0.0..=1.0).contains(&self.renewal_rate) {
            return Err(RunError::Config(format!("renewal rate {} outside [0, 1]", self.renewal_rate)));
        }
        if self.renewal_k == 0 {
            return Err(RunError::Config("renewal k must be positive".into()));
        }
        if !(self.staleness_s >= 0.0) {
            return Err(RunError::Config("staleness must be non-negative".into()));
        }
        self.channel.validate().map_err(RunError::Config)?;
        self.heads.grid.validate().map_err(|e| RunError::Config(e.to_string()))
    }
}

/// Everything that happened on one tick.
#[derive(Debug, Clone)]
pub struct TickRecord {
    pub tick: u64,
    pub time_s: f64,
    pub world: WorldState,
    /// Raw frames as sensed, before the link.
    pub sensed: Vec<SensorFrame>,
    pub product: Option<PerceptionProduct>,
    pub frame: Option<DecisionFrame>,
    pub collisions: Vec<CollisionEvent>,
    /// Agents whose frames reached the fusion center for this tick.
    pub contributors: Vec<ActorId>,
    pub partial: bool,
    /// Actors in line of sight of at least one sensing node.
    pub observable: BTreeSet<ActorId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub episode_id: String,
    pub scenario_id: String,
    pub seed: u64,
    pub ticks: u64,
    pub outcome: EpisodeOutcome,
    pub collisions: Vec<CollisionEvent>,
    pub alerts: Vec<SafetyAlert>,
    pub committed: Vec<CorpusBox>,
    pub ratings: RatingHistogram,
    pub channel: ChannelStats,
}

struct Node {
    id: ActorId,
    config: SensorConfig,
    fixed_pose: Option<Pose>,
}

pub struct Session {
    pub scenario: Scenario,
    pub options: RunOptions,
    seed: u64,
    episode_id: String,
    world: WorldState,
    nodes: Vec<Node>,
    grid: GridSpec,
    center: FusionCenter,
    channel: Channel,
    ingest: IngestBuffer,
    reasoning: ReasoningLoop,
    history: BTreeMap<u64, WorldState>,
    truth: EpisodeTruth,
    last_fused_tick: Option<u64>,
    collisions: Vec<CollisionEvent>,
    ticks_run: u64,
    done: bool,
}

impl Session {
    pub fn new(scenario: Scenario, options: RunOptions) -> Result<Self, RunError> {
        scenario.validate()?;
        options.validate()?;
        let seed = options.seed.unwrap_or(scenario.seed);
        let episode_id = options
            .episode_id
            .clone()
            .unwrap_or_else(|| format!("{}-s{seed}", scenario.id));
        let sensor = |cfg: &Option<SensorConfig>| {
            if options.noiseless {
                SensorConfig::noiseless()
            } else {
                cfg.clone().unwrap_or_default()
            }
        };
        let mut nodes: Vec<Node> = Vec::new();
        for id in scenario.sensing_ids() {
            if let Some(a) = scenario.actor(id) {
                nodes.push(Node { id, config: sensor(&a.sensor), fixed_pose: None });
            } else if let Some(r) = scenario.rsus.iter().find(|r| r.id == id) {
                nodes.push(Node { id, config: sensor(&r.sensor), fixed_pose: Some(r.pose()) });
            }
        }
        let channel_model = if options.noiseless {
            ChannelModel::lossless()
        } else {
            options.channel.clone()
        };
        let reasoning = ReasoningLoop::new(
            ReasoningConfig {
                episode_id: episode_id.clone(),
                threshold: options.threshold,
                level: options.level,
                cot: options.cot,
                timeout: options.llm_timeout,
                corpus_epoch: options.corpus_epoch,
                renewal_k: options.renewal_k,
                ..ReasoningConfig::default()
            },
            MissionRubric::bundled(),
        )?;
        Ok(Self {
            world: WorldState::initial(&scenario),
            ingest: IngestBuffer::new(nodes.iter().map(|n| n.id), options.staleness_s, scenario.dt_s),
            channel: Channel::new(channel_model, seed),
            center: FusionCenter::new(options.heads.clone()),
            grid: options.heads.grid,
            nodes,
            reasoning,
            history: BTreeMap::new(),
            truth: EpisodeTruth::default(),
            last_fused_tick: None,
            collisions: Vec::new(),
            ticks_run: 0,
            done: false,
            seed,
            episode_id,
            scenario,
            options,
        })
    }

    pub fn episode_id(&self) -> &str {
        &self.episode_id
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn world(&self) -> &WorldState {
        &self.world
    }

    pub fn reasoning(&self) -> &ReasoningLoop {
        &self.reasoning
    }

    pub fn reasoning_mut(&mut self) -> &mut ReasoningLoop {
        &mut self.reasoning
    }

    pub fn truth(&self) -> &EpisodeTruth {
        &self.truth
    }

    fn pose_of(world: &WorldState, node: &Node) -> Option<Pose> {
        node.fixed_pose.or_else(|| world.actor(node.id).map(|a| a.pose()))
    }

    /// Advances one tick. Returns `None` once the episode is over.
    pub fn step(&mut self, client: &dyn LlmClient, store: &CorpusStore) -> Result<Option<TickRecord>, RunError> {
        if self.done {
            return Ok(None);
        }
        let tick = self.world.tick;
        let now = self.world.time_s;
        let dt = self.scenario.dt_s;
        for q in self.scenario.queries.iter().filter(|q| q.tick == tick) {
            self.reasoning.submit_query(&q.text)?;
        }

        let agents: Vec<SensingAgent> = self
            .nodes
            .iter()
            .filter_map(|node| {
                let pose = Self::pose_of(&self.world, node)?;
                Some(SensingAgent { id: node.id, pose, config: node.config.clone() })
            })
            .collect();
        let mut sensed = Vec::with_capacity(agents.len());
        for agent in &agents {
            let frame = sense_frame(&self.world, agent, &self.grid, self.seed);
            self.channel.submit(encode_message(&frame, now))?;
            sensed.push(frame);
        }
        let observable = observable_ids(&self.world, &agents);
        self.history.insert(tick, self.world.clone());
        self.history.retain(|&t, _| t + 16 > tick);

        let mut arrivals = Vec::new();
        for d in self.channel.flush_tick(now) {
            arrivals.push((d.delivery_time_s, decode_message(&d.bytes)?));
        }
        arrivals.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.agent_id.cmp(&b.1.agent_id)));
        let mut ready = Vec::new();
        for (at, msg) in arrivals {
            if let (_, Some(set)) = self.ingest.ingest(msg, at) {
                ready.push(set);
            }
        }
        ready.extend(self.ingest.poll(now + self.options.staleness_s));
        ready.sort_by_key(|r| r.tick);

        let mut product = None;
        let mut frame = None;
        let mut contributors = Vec::new();
        let mut partial = false;
        for set in ready {
            if self.last_fused_tick.is_some_and(|t| set.tick <= t) {
                continue;
            }
            let Some(world) = self.history.get(&set.tick) else { continue };
            let ego_id = self.scenario.ego_id();
            let Some(ego) = world.actor(ego_id) else { continue };
            let frames: Vec<SensorFrame> = set
                .messages
                .into_iter()
                .filter_map(|m| {
                    let node = self.nodes.iter().find(|n| n.id == m.agent_id)?;
                    let pose = Self::pose_of(world, node)?;
                    Some(m.into_frame(pose))
                })
                .collect();
            if frames.is_empty() {
                continue;
            }
            let gap = self.last_fused_tick.map_or(1, |t| set.tick - t);
            let input = HeadsInput {
                tick: set.tick,
                dt_s: gap as f64 * dt,
                ego: EgoState {
                    id: ego_id,
                    class: ego.kind,
                    pose: ego.pose(),
                    speed: ego.speed,
                    length: ego.length,
                    width: ego.width,
                },
                frames,
            };
            let p = self.center.run_heads(input)?;
            self.last_fused_tick = Some(set.tick);
            self.truth.record(&p);
            let f = self.reasoning.step(&p, set.tick as f64 * dt, client, store)?.clone();
            contributors = p.contributors.clone();
            partial = set.partial;
            product = Some(p);
            frame = Some(f);
        }

        let collisions = detect_collisions(&self.world);
        let record = TickRecord {
            tick,
            time_s: now,
            world: self.world.clone(),
            sensed,
            product,
            frame,
            collisions: collisions.clone(),
            contributors,
            partial,
            observable,
        };
        self.ticks_run += 1;
        if !collisions.is_empty() {
            self.collisions = collisions;
            self.done = true;
        } else {
            match step_world(&self.world, &self.scenario) {
                Ok(next) => self.world = next,
                Err(WorldError::EndOfScenario(_)) => self.done = true,
                Err(e) => return Err(e.into()),
            }
        }
        Ok(Some(record))
    }

    pub fn outcome(&self) -> EpisodeOutcome {
        match self.collisions.first() {
            Some(c) => EpisodeOutcome::Collision { tick: c.tick },
            None => EpisodeOutcome::Clean,
        }
    }

    /// Runs the corpus update and summarizes the episode.
    pub fn finish(&self, store: &mut CorpusStore) -> Result<EpisodeSummary, RunError> {
        let outcome = self.outcome();
        let committed = self.reasoning.finalize(outcome, store, self.options.renewal_rate)?;
        Ok(self.summary(committed))
    }

    pub fn summary(&self, committed: Vec<CorpusBox>) -> EpisodeSummary {
        EpisodeSummary {
            episode_id: self.episode_id.clone(),
            scenario_id: self.scenario.id.clone(),
            seed: self.seed,
            ticks: self.ticks_run,
            outcome: self.outcome(),
            collisions: self.collisions.clone(),
            alerts: self.reasoning.alerts().to_vec(),
            committed,
            ratings: rate_alerts(self.reasoning.alerts(), &self.truth),
            channel: self.channel.stats,
        }
    }
}

/// Runs a whole episode, handing each tick to `on_tick`, then updates the corpus.
pub fn run_episode(
    scenario: &Scenario,
    options: &RunOptions,
    client: &dyn LlmClient,
    store: &mut CorpusStore,
    mut on_tick: impl FnMut(&TickRecord),
) -> Result<EpisodeSummary, RunError> {
    let mut session = Session::new(scenario.clone(), options.clone())?;
    while let Some(record) = session.step(client, store)? {
        on_tick(&record);
    }
    session.finish(store)
}
