//! Episode logs: newline-delimited JSON, one header line, one line per tick,
//! a summary line and a closing checksum over every preceding byte.

use crate::config::hex_digest;
use crate::CliError;
use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use sentinel_core::fusion::PerceptionProduct;
use sentinel_core::geom::Pose;
use sentinel_core::reasoning::{DecisionFrame, SafetyAlert};
use sentinel_core::runner::{EpisodeSummary, TickRecord};
use sentinel_core::sensing::{BevGrid, Detection3D, GridSpec, SensorFrame};
use sentinel_core::v2x::{dequantize, quantize};
use sentinel_core::world::{ActorId, CollisionEvent, WorldState};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use std::io::Write;
use std::path::Path;

pub const LOG_FORMAT: &str = "sentinel-episode-log/1";

/// A raster in its wire form: cells quantized to a byte, row-major, base64.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireGrid {
    pub spec: GridSpec,
    pub tick: u64,
    pub cells_b64: String,
}

impl WireGrid {
    pub fn from_grid(g: &BevGrid) -> Self {
        let bytes: Vec<u8> = g.cells.iter().map(|&p| quantize(p)).collect();
        Self { spec: g.spec, tick: g.tick, cells_b64: STANDARD.encode(bytes) }
    }

    pub fn to_grid(&self) -> Result<BevGrid, String> {
        let bytes = STANDARD.decode(&self.cells_b64).map_err(|e| e.to_string())?;
        if bytes.len() != self.spec.cells_x * self.spec.cells_y {
            return Err(format!("grid has {} cells, spec wants {}", bytes.len(), self.spec.cells_x * self.spec.cells_y));
        }
        Ok(BevGrid { spec: self.spec, tick: self.tick, cells: bytes.into_iter().map(dequantize).collect() })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub sentinel: String,
    pub llm: String,
    pub rater: String,
    pub scenario_schema: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub scenario: String,
    pub scenario_sha256: String,
    pub seed: u64,
    pub threshold: f64,
    pub llm: String,
    pub renewal_rate: f64,
    pub renewal_k: usize,
    pub level: String,
    pub noiseless: bool,
    pub corpus: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogHeader {
    pub format: String,
    pub episode_id: String,
    pub scenario_id: String,
    pub ego_id: ActorId,
    pub config: ConfigEcho,
    pub versions: Versions,
}

/// What a node sensed, without its local raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensedLog {
    pub agent_id: ActorId,
    pub ego_pose: Pose,
    pub detections: Vec<Detection3D>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TickLog {
    pub tick: u64,
    pub time_s: f64,
    pub world_digest: String,
    pub world: WorldState,
    pub observable: Vec<ActorId>,
    pub sensed: Vec<SensedLog>,
    pub contributors: Vec<ActorId>,
    pub partial: bool,
    /// Perception product with the fused grid in wire form.
    pub product: Option<Value>,
    pub frame: Option<DecisionFrame>,
    pub alerts: Vec<SafetyAlert>,
    pub collisions: Vec<CollisionEvent>,
}

impl TickLog {
    pub fn from_record(r: &TickRecord) -> Self {
        let world_json = serde_json::to_vec(&r.world).expect("world serializes");
        Self {
            tick: r.tick,
            time_s: r.time_s,
            world_digest: hex_digest(&world_json)[..16].to_string(),
            world: r.world.clone(),
            observable: r.observable.iter().copied().collect(),
            sensed: r
                .sensed
                .iter()
                .map(|f| SensedLog { agent_id: f.agent_id, ego_pose: f.ego_pose, detections: f.detections.clone() })
                .collect(),
            contributors: r.contributors.clone(),
            partial: r.partial,
            product: r.product.as_ref().map(product_to_wire),
            frame: r.frame.clone(),
            alerts: r.frame.iter().filter_map(|f| f.alert.clone()).collect(),
            collisions: r.collisions.clone(),
        }
    }

    /// Rebuilds the tick for scoring. Local rasters are not logged, so the
    /// sensed frames carry a one-cell placeholder.
    pub fn to_record(&self) -> Result<TickRecord, String> {
        let product = self.product.as_ref().map(product_from_wire).transpose()?;
        let placeholder = GridSpec { cells_x: 1, cells_y: 1, ..GridSpec::default() };
        Ok(TickRecord {
            tick: self.tick,
            time_s: self.time_s,
            world: self.world.clone(),
            sensed: self
                .sensed
                .iter()
                .map(|s| SensorFrame {
                    agent_id: s.agent_id,
                    tick: self.tick,
                    ego_pose: s.ego_pose,
                    detections: s.detections.clone(),
                    local_grid: BevGrid::unknown(placeholder.with_origin(s.ego_pose), self.tick),
                })
                .collect(),
            product,
            frame: self.frame.clone(),
            collisions: self.collisions.clone(),
            contributors: self.contributors.clone(),
            partial: self.partial,
            observable: self.observable.iter().copied().collect(),
        })
    }
}

pub fn product_to_wire(p: &PerceptionProduct) -> Value {
    let mut v = serde_json::to_value(p).expect("product serializes");
    v["fused_grid"] = serde_json::to_value(WireGrid::from_grid(&p.fused_grid)).expect("grid serializes");
    v
}

pub fn product_from_wire(v: &Value) -> Result<PerceptionProduct, String> {
    let mut v = v.clone();
    let wire: WireGrid = serde_json::from_value(v["fused_grid"].take()).map_err(|e| e.to_string())?;
    v["fused_grid"] = serde_json::to_value(wire.to_grid()?).map_err(|e| e.to_string())?;
    serde_json::from_value(v).map_err(|e| e.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum LogLine {
    Header(Box<LogHeader>),
    Tick(Box<TickLog>),
    Summary(Box<EpisodeSummary>),
    Checksum { sha256: String, lines: usize },
}

/// Streams lines out and hashes them as they go.
pub struct EpisodeLogWriter<W: Write> {
    out: W,
    hasher: Sha256,
    lines: usize,
}

impl<W: Write> EpisodeLogWriter<W> {
    pub fn new(out: W) -> Self {
        Self { out, hasher: Sha256::new(), lines: 0 }
    }

    pub fn write(&mut self, line: &LogLine) -> std::io::Result<()> {
        let mut bytes = serde_json::to_vec(line).map_err(std::io::Error::other)?;
        bytes.push(b'\n');
        self.hasher.update(&bytes);
        self.lines += 1;
        self.out.write_all(&bytes)
    }

    pub fn finish(mut self) -> std::io::Result<W> {
        let sha256 = self.hasher.clone().finalize().iter().map(|b| format!("{b:02x}")).collect();
        let lines = self.lines;
        self.write(&LogLine::Checksum { sha256, lines })?;
        self.out.flush()?;
        Ok(self.out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeLog {
    pub header: LogHeader,
    pub ticks: Vec<TickLog>,
    pub summary: EpisodeSummary,
}

/// Parses and verifies a log: checksum, line count, contiguous ticks.
pub fn read_log(path: &Path) -> Result<EpisodeLog, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_log(&text).map_err(|msg| CliError::Log(format!("{}: {msg}", path.display())))
}

pub fn parse_log(text: &str) -> Result<EpisodeLog, String> {
    let body_end = text.trim_end_matches('\n').rfind('\n').map_or(0, |i| i + 1);
    let (body, last) = text.split_at(body_end);
    let LogLine::Checksum { sha256, lines } =
        serde_json::from_str(last.trim_end()).map_err(|e| format!("last line: {e}"))?
    else {
        return Err("missing checksum line".into());
    };
    if hex_digest(body.as_bytes()) != sha256 {
        return Err("checksum mismatch".into());
    }
    let mut header = None;
    let mut summary = None;
    let mut ticks: Vec<TickLog> = Vec::new();
    let mut count = 0;
    for (i, line) in body.lines().enumerate() {
        count += 1;
        match serde_json::from_str(line).map_err(|e| format!("line {}: {e}", i + 1))? {
            LogLine::Header(h) if i == 0 => header = Some(*h),
            LogLine::Tick(t) => {
                if let Some(prev) = ticks.last() {
                    if t.tick != prev.tick + 1 {
                        return Err(format!("tick {} follows {}", t.tick, prev.tick));
                    }
                }
                ticks.push(*t);
            }
            LogLine::Summary(s) if summary.is_none() => summary = Some(*s),
            _ => return Err(format!("line {}: unexpected record", i + 1)),
        }
    }
    if count != lines {
        return Err(format!("checksum covers {lines} lines, found {count}"));
    }
    Ok(EpisodeLog {
        header: header.ok_or("missing header")?,
        ticks,
        summary: summary.ok_or("missing summary")?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wire_grid_round_trips_within_a_quantum() {
        let mut g = BevGrid::unknown(GridSpec { cells_x: 4, cells_y: 3, ..GridSpec::default() }, 7);
        for (i, c) in g.cells.iter_mut().enumerate() {
            *c = i as f64 / 11.0;
        }
        let back = WireGrid::from_grid(&g).to_grid().unwrap();
        assert_eq!((back.spec, back.tick), (g.spec, g.tick));
        for (a, b) in g.cells.iter().zip(&back.cells) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
        let short = WireGrid { cells_b64: STANDARD.encode([1u8, 2]), ..WireGrid::from_grid(&g) };
        assert!(short.to_grid().is_err());
    }

    #[test]
    fn tampering_breaks_the_checksum() {
        let mut w = EpisodeLogWriter::new(Vec::new());
        w.write(&LogLine::Checksum { sha256: "x".into(), lines: 0 }).unwrap();
        let text = String::from_utf8(w.finish().unwrap()).unwrap();
        // the body holds a stray checksum record, which is not a valid log
        assert!(parse_log(&text).unwrap_err().contains("unexpected"));
        let tampered = text.replacen("\"x\"", "\"y\"", 1);
        assert_eq!(parse_log(&tampered).unwrap_err(), "checksum mismatch");
        assert!(parse_log("").is_err());
    }
}
