//! Simulated V2X transport: binary codec, lossy channel and the fusion
//! center's ingestion buffer.
//!
//! Wire layout (little-endian):
//!
//! ```text
//! "V2XM" | u16 schema_version | u32 total_len | u32 agent_id | u64 tick
//! | f64 sent_time | u32 det_count
//! | det_count × (u8 class, f32 x, f32 y, f32 yaw, f32 len, f32 wid, f32 conf)
//! | u16 cells_x | u16 cells_y | f32 resolution | cells_x·cells_y × u8
//! ```
//!
//! The class byte carries the object class in its low nibble and the
//! observed-violation flag in bit 7. The sender's pose is not on the wire;
//! the fusion center joins it from the localization side channel.

use crate::geom::Pose;
use crate::sensing::{derive_rng, BevGrid, Detection3D, GridSpec, SensorFrame};
use crate::world::{ActorId, ObjectClass};
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, BTreeSet, VecDeque};
use thiserror::Error;

pub const MAGIC: &[u8; 4] = b"V2XM";
pub const WIRE_VERSION: u16 = 1;
pub const HEADER_LEN: usize = 4 + 2 + 4 + 4 + 8 + 8 + 4;
pub const DET_RECORD_LEN: usize = 1 + 6 * 4;
const VIOLATION_BIT: u8 = 0x80;

#[derive(Debug, Error, PartialEq)]
pub enum CodecError {
    #[error("malformed message: {0}")]
    MalformedMessage(String),
    #[error("unsupported schema version {0}")]
    UnsupportedVersion(u16),
}

/// Grid cell quantization: `round(p·255)`, half away from zero.
pub fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

pub fn dequantize(b: u8) -> f64 {
    b as f64 / 255.0
}

/// Decoded message; the payload grid has no anchor pose until joined.
#[derive(Debug, Clone, PartialEq)]
pub struct V2XMessage {
    pub schema_version: u16,
    pub agent_id: ActorId,
    pub tick: u64,
    pub sent_time_s: f64,
    pub detections: Vec<Detection3D>,
    pub cells_x: u16,
    pub cells_y: u16,
    pub resolution: f32,
    pub cells: Vec<u8>,
}

impl V2XMessage {
    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.detections.len() * DET_RECORD_LEN + 8 + self.cells.len()
    }

    /// Reattaches the sender pose reported by the localization channel.
    pub fn into_frame(self, ego_pose: Pose) -> SensorFrame {
        let spec = GridSpec {
            cells_x: self.cells_x as usize,
            cells_y: self.cells_y as usize,
            resolution_m_per_cell: self.resolution as f64,
            origin: ego_pose,
        };
        SensorFrame {
            agent_id: self.agent_id,
            tick: self.tick,
            ego_pose,
            detections: self.detections,
            local_grid: BevGrid {
                spec,
                tick: self.tick,
                cells: self.cells.into_iter().map(dequantize).collect(),
            },
        }
    }
}

pub fn encode_message(frame: &SensorFrame, sent_time_s: f64) -> Vec<u8> {
    let grid = &frame.local_grid;
    let cells = grid.spec.cells_x * grid.spec.cells_y;
    let total = HEADER_LEN + frame.detections.len() * DET_RECORD_LEN + 8 + cells;
    let mut out = Vec::with_capacity(total);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&WIRE_VERSION.to_le_bytes());
    out.extend_from_slice(&(total as u32).to_le_bytes());
    out.extend_from_slice(&frame.agent_id.to_le_bytes());
    out.extend_from_slice(&frame.tick.to_le_bytes());
    out.extend_from_slice(&sent_time_s.to_le_bytes());
    out.extend_from_slice(&(frame.detections.len() as u32).to_le_bytes());
    for d in &frame.detections {
        let class = d.class.code() | if d.violation { VIOLATION_BIT } else { 0 };
        out.push(class);
        for v in [d.center[0], d.center[1], d.yaw, d.length, d.width, d.confidence] {
            out.extend_from_slice(&(v as f32).to_le_bytes());
        }
    }
    out.extend_from_slice(&(grid.spec.cells_x as u16).to_le_bytes());
    out.extend_from_slice(&(grid.spec.cells_y as u16).to_le_bytes());
    out.extend_from_slice(&(grid.spec.resolution_m_per_cell as f32).to_le_bytes());
    out.extend(grid.cells.iter().map(|&p| quantize(p)));
    debug_assert_eq!(out.len(), total);
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CodecError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| {
            CodecError::MalformedMessage(format!("truncated at byte {} (need {n} more)", self.pos))
        })?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N], CodecError> {
        Ok(self.take(N)?.try_into().expect("slice length checked"))
    }

    fn u8(&mut self) -> Result<u8, CodecError> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16, CodecError> {
        Ok(u16::from_le_bytes(self.array()?))
    }
    fn u32(&mut self) -> Result<u32, CodecError> {
        Ok(u32::from_le_bytes(self.array()?))
    }
    fn u64(&mut self) -> Result<u64, CodecError> {
        Ok(u64::from_le_bytes(self.array()?))
    }
    fn f32(&mut self) -> Result<f32, CodecError> {
        Ok(f32::from_le_bytes(self.array()?))
    }
    fn f64(&mut self) -> Result<f64, CodecError> {
        Ok(f64::from_le_bytes(self.array()?))
    }
}

pub fn decode_message(bytes: &[u8]) -> Result<V2XMessage, CodecError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(4)? != MAGIC {
        return Err(CodecError::MalformedMessage("bad magic".into()));
    }
    let version = r.u16()?;
    if version != WIRE_VERSION {
        return Err(CodecError::UnsupportedVersion(version));
    }
    let total = r.u32()? as usize;
    if total != bytes.len() {
        return Err(CodecError::MalformedMessage(format!(
            "length prefix {total} but buffer holds {}",
            bytes.len()
        )));
    }
    let agent_id = r.u32()?;
    let tick = r.u64()?;
    let sent_time_s = r.f64()?;
    let det_count = r.u32()? as usize;
    if det_count.saturating_mul(DET_RECORD_LEN) > bytes.len() {
        return Err(CodecError::MalformedMessage(format!("implausible det_count {det_count}")));
    }
    let mut detections = Vec::with_capacity(det_count);
    for _ in 0..det_count {
        let raw = r.u8()?;
        let class = ObjectClass::from_code(raw & !VIOLATION_BIT)
            .ok_or_else(|| CodecError::MalformedMessage(format!("unknown class code {raw}")))?;
        let mut v = [0f64; 6];
        for slot in v.iter_mut() {
            *slot = r.f32()? as f64;
        }
        detections.push(Detection3D {
            class,
            center: [v[0], v[1]],
            yaw: v[2],
            length: v[3],
            width: v[4],
            confidence: v[5],
            speed: 0.0,
            violation: raw & VIOLATION_BIT != 0,
            peripheral: false,
            track_id: None,
        });
    }
    let cells_x = r.u16()?;
    let cells_y = r.u16()?;
    let resolution = r.f32()?;
    let cells = r.take(cells_x as usize * cells_y as usize)?.to_vec();
    if r.pos != bytes.len() {
        return Err(CodecError::MalformedMessage("trailing bytes".into()));
    }
    Ok(V2XMessage {
        schema_version: version,
        agent_id,
        tick,
        sent_time_s,
        detections,
        cells_x,
        cells_y,
        resolution,
        cells,
    })
}

fn d_latency() -> f64 {
    0.05
}
fn d_jitter() -> f64 {
    0.02
}
fn d_drop() -> f64 {
    0.02
}
fn d_bandwidth() -> u64 {
    65536
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelModel {
    #[serde(default = "d_latency")]
    pub latency_base_s: f64,
    /// Uniform extra latency in `[0, latency_jitter_s]`.
    #[serde(default = "d_jitter")]
    pub latency_jitter_s: f64,
    #[serde(default = "d_drop")]
    pub drop_prob: f64,
    #[serde(default = "d_bandwidth")]
    pub bandwidth_bytes_per_tick: u64,
}

impl Default for ChannelModel {
    fn default() -> Self {
        Self {
            latency_base_s: d_latency(),
            latency_jitter_s: d_jitter(),
            drop_prob: d_drop(),
            bandwidth_bytes_per_tick: d_bandwidth(),
        }
    }
}

impl ChannelModel {
    pub fn lossless() -> Self {
        Self {
            latency_jitter_s: 0.0,
            drop_prob: 0.0,
            bandwidth_bytes_per_tick: u64::MAX,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if [self.latency_base_s, self.latency_jitter_s, self.drop_prob]
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0)
        {
            return Err("channel parameters must be finite and non-negative".into());
        }
        if self.drop_prob > 1.0 {
            return Err("channel drop_prob must be in [0, 1]".into());
        }
        Ok(())
    }
}

const CHANNEL_STREAM: u64 = 0x5632_584D;

/// Loss and latency for one message, ignoring bandwidth. Deterministic in
/// `(seed, agent_id, tick)`.
pub fn transmit(msg: V2XMessage, channel: &ChannelModel, seed: u64) -> Option<(f64, V2XMessage)> {
    let mut rng = derive_rng(seed ^ CHANNEL_STREAM, msg.tick, msg.agent_id as u64);
    let lost = channel.drop_prob > 0.0 && rng.random::<f64>() < channel.drop_prob;
    let jitter = if channel.latency_jitter_s > 0.0 {
        rng.random_range(0.0..=channel.latency_jitter_s)
    } else {
        0.0
    };
    if lost {
        return None;
    }
    let at = msg.sent_time_s + channel.latency_base_s + jitter;
    Some((at, msg))
}

#[derive(Debug, Clone)]
pub struct Delivery {
    pub delivery_time_s: f64,
    pub bytes: Vec<u8>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChannelStats {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
}

/// Stateful channel: per-tick byte budget with a FIFO backlog.
pub struct Channel {
    pub model: ChannelModel,
    seed: u64,
    backlog: VecDeque<(V2XMessage, Vec<u8>)>,
    last_delivery: BTreeMap<ActorId, f64>,
    pub stats: ChannelStats,
}

impl Channel {
    pub fn new(model: ChannelModel, seed: u64) -> Self {
        Self {
            model,
            seed,
            backlog: VecDeque::new(),
            last_delivery: BTreeMap::new(),
            stats: ChannelStats::default(),
        }
    }

    pub fn submit(&mut self, bytes: Vec<u8>) -> Result<(), CodecError> {
        let msg = decode_message(&bytes)?;
        self.stats.sent += 1;
        self.backlog.push_back((msg, bytes));
        Ok(())
    }

    pub fn queued(&self) -> usize {
        self.backlog.len()
    }

    /// Releases up to one tick's byte budget from the backlog, in order.
    /// Messages held back by bandwidth leave no earlier than `tick_start_s`.
    pub fn flush_tick(&mut self, tick_start_s: f64) -> Vec<Delivery> {
        let mut budget = self.model.bandwidth_bytes_per_tick;
        let mut out = Vec::new();
        while let Some((_, bytes)) = self.backlog.front() {
            let size = bytes.len() as u64;
            if size > budget && !(out.is_empty() && budget == self.model.bandwidth_bytes_per_tick) {
                break;
            }
            budget = budget.saturating_sub(size);
            let (mut msg, bytes) = self.backlog.pop_front().expect("front exists");
            let queued_for = (tick_start_s - msg.sent_time_s).max(0.0);
            msg.sent_time_s += queued_for;
            let agent = msg.agent_id;
            let original_sent = msg.sent_time_s - queued_for;
            match transmit(msg, &self.model, self.seed) {
                None => self.stats.dropped += 1,
                Some((at, _)) => {
                    let floor = self.last_delivery.get(&agent).copied().unwrap_or(f64::NEG_INFINITY);
                    let at = at.max(floor);
                    self.last_delivery.insert(agent, at);
                    self.stats.delivered += 1;
                    debug_assert!(at >= original_sent);
                    out.push(Delivery {
                        delivery_time_s: at,
                        bytes,
                    });
                }
            }
        }
        out
    }
}

/// Frames for one tick released to the fusion center.
#[derive(Debug, Clone)]
pub struct ReadySet {
    pub tick: u64,
    pub messages: Vec<V2XMessage>,
    /// True when released by the deadline rather than completion.
    pub partial: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IngestOutcome {
    Accepted,
    Replaced,
    Stale,
    AlreadyFired,
}

/// Gathers per-tick frames; a tick fires once, on completion or deadline.
pub struct IngestBuffer {
    pub staleness_s: f64,
    pub dt_s: f64,
    expected: BTreeSet<ActorId>,
    pending: BTreeMap<u64, BTreeMap<ActorId, V2XMessage>>,
    fired: BTreeSet<u64>,
}

impl IngestBuffer {
    pub fn new(expected: impl IntoIterator<Item = ActorId>, staleness_s: f64, dt_s: f64) -> Self {
        Self {
            staleness_s,
            dt_s,
            expected: expected.into_iter().collect(),
            pending: BTreeMap::new(),
            fired: BTreeSet::new(),
        }
    }

    fn deadline(&self, tick: u64) -> f64 {
        tick as f64 * self.dt_s + self.staleness_s
    }

    pub fn has_fired(&self, tick: u64) -> bool {
        self.fired.contains(&tick)
    }

    /// Files a message; returns the ready-set if this completes its tick.
    pub fn ingest(&mut self, msg: V2XMessage, now_s: f64) -> (IngestOutcome, Option<ReadySet>) {
        if now_s - msg.sent_time_s > self.staleness_s + 1e-12 {
            return (IngestOutcome::Stale, None);
        }
        if self.fired.contains(&msg.tick) {
            return (IngestOutcome::AlreadyFired, None);
        }
        let tick = msg.tick;
        let slot = self.pending.entry(tick).or_default();
        let outcome = match slot.insert(msg.agent_id, msg) {
            Some(_) => IngestOutcome::Replaced,
            None => IngestOutcome::Accepted,
        };
        let complete = self.expected.iter().all(|a| slot.contains_key(a));
        if complete {
            return (outcome, self.fire(tick, false));
        }
        (outcome, None)
    }

    /// Fires every pending tick whose deadline has passed, oldest first.
    pub fn poll(&mut self, now_s: f64) -> Vec<ReadySet> {
        let due: Vec<u64> = self
            .pending
            .keys()
            .copied()
            .filter(|&t| now_s + 1e-12 >= self.deadline(t))
            .collect();
        due.into_iter().filter_map(|t| self.fire(t, true)).collect()
    }

    fn fire(&mut self, tick: u64, partial: bool) -> Option<ReadySet> {
        if !self.fired.insert(tick) {
            return None;
        }
        let messages = self.pending.remove(&tick).unwrap_or_default().into_values().collect();
        Some(ReadySet { tick, messages, partial })
    }
}
