//! Device parameter tables: retention, per-access energy, hold power and
//! access delay, plus per-cell retention variation.
//!
//! `ModelParams` is immutable once loaded and validated. The bundled default
//! file lives in `data/default_model.toml`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CellMode, Technology, Trit};
use crate::rng;

pub const DEFAULT_MODEL_TOML: &str = include_str!("../data/default_model.toml");

/// Wordline bias protocol. Only the underdrive takes part in retention
/// lookup; the boost level is recorded metadata.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasConfig {
    pub wl_underdrive_mv: i32,
    pub wl_boost_mv: i32,
}

impl BiasConfig {
    pub fn underdrive(mv: i32) -> Self {
        BiasConfig {
            wl_underdrive_mv: mv,
            wl_boost_mv: 0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OpKind {
    SramRead,
    SramWrite,
    SramPulsedRead,
    DramRead,
    DramWrite,
    TritRead,
    TritWrite,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [
        OpKind::SramRead,
        OpKind::SramWrite,
        OpKind::SramPulsedRead,
        OpKind::DramRead,
        OpKind::DramWrite,
        OpKind::TritRead,
        OpKind::TritWrite,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            OpKind::SramRead => "sram_read",
            OpKind::SramWrite => "sram_write",
            OpKind::SramPulsedRead => "sram_pulsed_read",
            OpKind::DramRead => "dram_read",
            OpKind::DramWrite => "dram_write",
            OpKind::TritRead => "trit_read",
            OpKind::TritWrite => "trit_write",
        }
    }

    /// Ops the controller can issue against a (tech, mode) pair.
    pub fn reachable(tech: Technology, mode: CellMode) -> &'static [OpKind] {
        use OpKind::*;
        match (tech, mode) {
            (Technology::Std6T, CellMode::Normal) => &[SramRead, SramWrite],
            (Technology::Aug8T, CellMode::Normal) => &[SramRead, SramWrite, SramPulsedRead],
            (Technology::Aug8T, CellMode::Augmented) => &[SramRead, SramWrite, SramPulsedRead, DramRead, DramWrite],
            (Technology::Aug7T, CellMode::Normal) => &[SramRead, SramWrite],
            (Technology::Aug7T, CellMode::Augmented) => &[TritRead, TritWrite],
            _ => &[],
        }
    }

    /// The (read, write) pair a refresh of this (tech, mode) consists of.
    pub fn refresh_pair(tech: Technology, mode: CellMode) -> Option<(OpKind, OpKind)> {
        match (tech, mode) {
            (Technology::Aug8T, CellMode::Augmented) => Some((OpKind::DramRead, OpKind::DramWrite)),
            (Technology::Aug7T, CellMode::Augmented) => Some((OpKind::TritRead, OpKind::TritWrite)),
            _ => None,
        }
    }

    fn is_boosted_write(self) -> bool {
        matches!(self, OpKind::DramWrite | OpKind::TritWrite)
    }

    /// Table row consulted when an 8T static-plane row is absent.
    fn fallback(self, tech: Technology) -> Option<(Technology, CellMode, OpKind)> {
        match (tech, self) {
            (_, OpKind::SramPulsedRead) => Some((tech, CellMode::Normal, OpKind::SramRead)),
            (Technology::Aug8T, OpKind::SramRead | OpKind::SramWrite) => Some((Technology::Std6T, CellMode::Normal, self)),
            _ => None,
        }
    }
}

impl fmt::Display for OpKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for OpKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        OpKind::ALL
            .into_iter()
            .find(|op| op.as_str() == s)
            .ok_or_else(|| format!("unknown op kind `{s}`"))
    }
}

/// Data dependence of a delay entry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataPattern {
    #[default]
    Any,
    Zero,
    NonZero,
}

impl DataPattern {
    pub fn of_trit(t: Trit) -> Self {
        if t == Trit::Zero {
            DataPattern::Zero
        } else {
            DataPattern::NonZero
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    #[default]
    Measured,
    Derived,
    Assumed,
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("cannot parse model file: {0}")]
    Parse(String),
    #[error("cannot read model file: {0}")]
    Io(#[from] std::io::Error),
    #[error("no retention anchors for {tech} at wordline underdrive {wl_underdrive_mv} mV")]
    NoAnchor { tech: Technology, wl_underdrive_mv: i32 },
    #[error("temperature {temperature_c} C outside [{min}, {max}] C")]
    OutOfRange { temperature_c: f64, min: f64, max: f64 },
    #[error("model table has no entry for {0}")]
    MissingEntry(String),
    #[error("invalid model: {0}")]
    Invalid(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionAnchor {
    pub tech: Technology,
    pub temperature_c: f64,
    #[serde(default)]
    pub wl_underdrive_mv: i32,
    pub retention_ns: f64,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default)]
    pub approx: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HoldEntry {
    pub tech: Technology,
    pub mode: CellMode,
    pub uw: f64,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnergyEntry {
    pub tech: Technology,
    pub mode: CellMode,
    pub op: OpKind,
    pub fj: f64,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DelayEntry {
    pub tech: Technology,
    pub mode: CellMode,
    pub op: OpKind,
    #[serde(default)]
    pub pattern: DataPattern,
    pub ns: f64,
    #[serde(default)]
    pub origin: Origin,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VariationConfig {
    /// Relative lognormal sigma of per-cell retention.
    pub sigma: f64,
    pub resample_on_refresh: bool,
}

#[derive(Deserialize)]
struct ModelFile {
    temperature_range_c: Option<[f64; 2]>,
    #[serde(default)]
    boost_energy_fj: f64,
    #[serde(default)]
    variation: VariationConfig,
    #[serde(default)]
    retention: Vec<RetentionAnchor>,
    #[serde(default)]
    hold: Vec<HoldEntry>,
    #[serde(default)]
    energy: Vec<EnergyEntry>,
    #[serde(default)]
    delay: Vec<DelayEntry>,
}

/// Retention anchors grouped by (tech, underdrive), sorted by temperature.
#[derive(Clone, Debug, PartialEq)]
pub struct RetentionTable {
    groups: BTreeMap<(Technology, i32), Vec<(f64, f64)>>,
    pub anchors: Vec<RetentionAnchor>,
    pub temperature_range_c: (f64, f64),
}

impl RetentionTable {
    fn build(anchors: Vec<RetentionAnchor>, range: (f64, f64)) -> Result<Self, ModelError> {
        let mut groups: BTreeMap<(Technology, i32), Vec<(f64, f64)>> = BTreeMap::new();
        for a in &anchors {
            if !(a.retention_ns > 0.0 && a.retention_ns.is_finite()) {
                return Err(ModelError::Invalid(format!("non-positive retention anchor {a:?}")));
            }
            if !a.tech.has_dynamic_storage() {
                return Err(ModelError::Invalid(format!("retention anchor for {} has no dynamic storage", a.tech)));
            }
            groups
                .entry((a.tech, a.wl_underdrive_mv))
                .or_default()
                .push((a.temperature_c, a.retention_ns));
        }
        for ((tech, mv), pts) in groups.iter_mut() {
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            for w in pts.windows(2) {
                if w[0].0 == w[1].0 {
                    return Err(ModelError::Invalid(format!(
                        "duplicate retention anchor for {tech} at {mv} mV, {} C",
                        w[0].0
                    )));
                }
                if w[1].1 > w[0].1 {
                    return Err(ModelError::Invalid(format!(
                        "retention for {tech} at {mv} mV increases with temperature"
                    )));
                }
            }
        }
        Ok(RetentionTable {
            groups,
            anchors,
            temperature_range_c: range,
        })
    }

    /// Nominal retention in ns. Exact at anchors, log-linear between them and
    /// extrapolated along the nearest segment outside.
    pub fn retention_time(&self, tech: Technology, temperature_c: f64, bias: BiasConfig) -> Result<f64, ModelError> {
        let (min, max) = self.temperature_range_c;
        if !(temperature_c >= min && temperature_c <= max) {
            return Err(ModelError::OutOfRange { temperature_c, min, max });
        }
        let no_anchor = || ModelError::NoAnchor {
            tech,
            wl_underdrive_mv: bias.wl_underdrive_mv,
        };
        let pts = self.groups.get(&(tech, bias.wl_underdrive_mv)).ok_or_else(no_anchor)?;
        if let Some(&(_, r)) = pts.iter().find(|(t, _)| *t == temperature_c) {
            return Ok(r);
        }
        if pts.len() < 2 {
            return Err(no_anchor());
        }
        let i = pts
            .iter()
            .position(|(t, _)| *t > temperature_c)
            .unwrap_or(pts.len())
            .clamp(1, pts.len() - 1);
        let (t0, r0) = pts[i - 1];
        let (t1, r1) = pts[i];
        let frac = (temperature_c - t0) / (t1 - t0);
        Ok((r0.ln() + frac * (r1.ln() - r0.ln())).exp())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EnergyTable {
    hold_uw: BTreeMap<(Technology, CellMode), f64>,
    op_fj: BTreeMap<(Technology, CellMode, OpKind), f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DelayTable {
    ns: BTreeMap<(Technology, CellMode, OpKind, DataPattern), f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub retention: RetentionTable,
    pub energy: EnergyTable,
    pub delay: DelayTable,
    pub variation: VariationConfig,
    /// Extra energy charged per boosted-wordline write.
    pub boost_energy_fj: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams::from_toml_str(DEFAULT_MODEL_TOML).expect("bundled model file is valid")
    }
}

fn positive(what: &str, v: f64) -> Result<f64, ModelError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(ModelError::Invalid(format!("{what} must be positive, got {v}")))
    }
}

impl ModelParams {
    pub fn load(path: &Path) -> Result<Self, ModelError> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_toml_str(text: &str) -> Result<Self, ModelError> {
        let file: ModelFile = toml::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))?;
        let range = file.temperature_range_c.map_or((-50.0, 125.0), |[a, b]| (a, b));
        if !(range.0 < range.1) {
            return Err(ModelError::Invalid("empty temperature range".into()));
        }
        if !(file.variation.sigma >= 0.0) {
            return Err(ModelError::Invalid("variation sigma must be >= 0".into()));
        }
        if !(file.boost_energy_fj >= 0.0) {
            return Err(ModelError::Invalid("boost energy must be >= 0".into()));
        }

        let mut hold_uw = BTreeMap::new();
        for h in &file.hold {
            if hold_uw.insert((h.tech, h.mode), positive("hold power", h.uw)?).is_some() {
                return Err(ModelError::Invalid(format!("duplicate hold entry {} {}", h.tech, h.mode)));
            }
        }
        let mut op_fj = BTreeMap::new();
        for e in &file.energy {
            if op_fj.insert((e.tech, e.mode, e.op), positive("energy", e.fj)?).is_some() {
                return Err(ModelError::Invalid(format!("duplicate energy entry {} {} {}", e.tech, e.mode, e.op)));
            }
        }
        let mut delay_ns = BTreeMap::new();
        for d in &file.delay {
            if delay_ns
                .insert((d.tech, d.mode, d.op, d.pattern), positive("delay", d.ns)?)
                .is_some()
            {
                return Err(ModelError::Invalid(format!("duplicate delay entry {} {} {}", d.tech, d.mode, d.op)));
            }
        }

        let params = ModelParams {
            retention: RetentionTable::build(file.retention, range)?,
            energy: EnergyTable { hold_uw, op_fj },
            delay: DelayTable { ns: delay_ns },
            variation: file.variation,
            boost_energy_fj: file.boost_energy_fj,
        };
        params.check_complete()?;
        Ok(params)
    }

    /// Refuses a model that cannot price every access the controller may
    /// issue.
    fn check_complete(&self) -> Result<(), ModelError> {
        for tech in Technology::ALL {
            for &mode in tech.modes() {
                self.hold_power(tech, mode)?;
                for &op in OpKind::reachable(tech, mode) {
                    self.op_energy(tech, mode, op)?;
                    let patterns: &[DataPattern] = match op {
                        OpKind::TritRead | OpKind::TritWrite => &[DataPattern::Zero, DataPattern::NonZero],
                        _ => &[DataPattern::Any],
                    };
                    for &p in patterns {
                        self.op_delay(tech, mode, op, p)?;
                    }
                }
            }
        }
        Ok(())
    }

    pub fn retention_time(&self, tech: Technology, temperature_c: f64, bias: BiasConfig) -> Result<f64, ModelError> {
        self.retention.retention_time(tech, temperature_c, bias)
    }

    pub fn op_energy(&self, tech: Technology, mode: CellMode, op: OpKind) -> Result<f64, ModelError> {
        let mut key = (tech, mode, op);
        loop {
            if let Some(&fj) = self.energy.op_fj.get(&key) {
                let boost = if op.is_boosted_write() { self.boost_energy_fj } else { 0.0 };
                return Ok(fj + boost);
            }
            match key.2.fallback(key.0) {
                Some(next) if next != key => key = next,
                _ => return Err(ModelError::MissingEntry(format!("energy of {op} on {tech} in {mode} mode"))),
            }
        }
    }

    /// One refresh is a read plus a write of the dynamic datum.
    pub fn refresh_energy(&self, tech: Technology, mode: CellMode) -> Result<f64, ModelError> {
        let (r, w) = OpKind::refresh_pair(tech, mode)
            .ok_or_else(|| ModelError::MissingEntry(format!("refresh on {tech} in {mode} mode")))?;
        Ok(self.op_energy(tech, mode, r)? + self.op_energy(tech, mode, w)?)
    }

    /// Per-cell hold power in microwatts.
    pub fn hold_power(&self, tech: Technology, mode: CellMode) -> Result<f64, ModelError> {
        self.energy
            .hold_uw
            .get(&(tech, mode))
            .copied()
            .ok_or_else(|| ModelError::MissingEntry(format!("hold power of {tech} in {mode} mode")))
    }

    /// Hold power rounded to whole nanowatts, the unit hold energy is
    /// integrated in.
    pub fn hold_power_nw(&self, tech: Technology, mode: CellMode) -> Result<u64, ModelError> {
        Ok((self.hold_power(tech, mode)? * 1000.0).round() as u64)
    }

    pub fn op_delay(&self, tech: Technology, mode: CellMode, op: OpKind, pattern: DataPattern) -> Result<f64, ModelError> {
        let mut key = (tech, mode, op);
        loop {
            let (t, m, o) = key;
            if let Some(&ns) = self
                .delay
                .ns
                .get(&(t, m, o, pattern))
                .or_else(|| self.delay.ns.get(&(t, m, o, DataPattern::Any)))
            {
                return Ok(ns);
            }
            match o.fallback(t) {
                Some(next) if next != key => key = next,
                _ => return Err(ModelError::MissingEntry(format!("delay of {op} on {tech} in {mode} mode"))),
            }
        }
    }

    /// Delay in whole picoseconds.
    pub fn op_delay_ps(&self, tech: Technology, mode: CellMode, op: OpKind, pattern: DataPattern) -> Result<u64, ModelError> {
        Ok((self.op_delay(tech, mode, op, pattern)? * 1000.0).round() as u64)
    }
}

/// Lognormal per-cell retention around `nominal_ns`. A pure function of
/// `(cell_key, seed, counter)`; `sigma == 0` returns `nominal_ns` exactly.
pub fn sample_cell_retention(nominal_ns: f64, sigma: f64, seed: u64, cell_key: u64, counter: u64) -> f64 {
    if sigma == 0.0 {
        return nominal_ns;
    }
    nominal_ns * (sigma * rng::standard_normal(seed, cell_key, counter)).exp()
}
