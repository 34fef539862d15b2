//! Logical state machines for the three bit-cell technologies.
//!
//! Node voltages are abstracted to logical levels plus a write timestamp. A
//! dynamic datum is sensible until its retention time has elapsed and is lost
//! (as a step) afterwards. Every operation either succeeds and returns the
//! events it caused, or fails and leaves the cell untouched.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Technology {
    #[serde(rename = "std6t")]
    Std6T,
    #[serde(rename = "aug8t")]
    Aug8T,
    #[serde(rename = "aug7t")]
    Aug7T,
}

impl Technology {
    pub const ALL: [Technology; 3] = [Technology::Std6T, Technology::Aug8T, Technology::Aug7T];

    pub fn as_str(self) -> &'static str {
        match self {
            Technology::Std6T => "std6t",
            Technology::Aug8T => "aug8t",
            Technology::Aug7T => "aug7t",
        }
    }

    /// Modes this technology can be configured in.
    pub fn modes(self) -> &'static [CellMode] {
        match self {
            Technology::Std6T => &[CellMode::Normal],
            Technology::Aug8T => &[CellMode::Normal, CellMode::Augmented],
            Technology::Aug7T => &[CellMode::Normal, CellMode::Augmented, CellMode::PowerGated],
        }
    }

    pub fn supports(self, mode: CellMode) -> bool {
        self.modes().contains(&mode)
    }

    /// Whether the technology has any dynamic storage at all.
    pub fn has_dynamic_storage(self) -> bool {
        !matches!(self, Technology::Std6T)
    }
}

impl fmt::Display for Technology {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Technology {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "std6t" | "6t" => Ok(Technology::Std6T),
            "aug8t" | "8t" => Ok(Technology::Aug8T),
            "aug7t" | "7t" => Ok(Technology::Aug7T),
            other => Err(format!("unknown technology `{other}`")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CellMode {
    Normal,
    Augmented,
    /// 7T only: header PMOS off, no data retained.
    PowerGated,
}

impl CellMode {
    pub fn as_str(self) -> &'static str {
        match self {
            CellMode::Normal => "normal",
            CellMode::Augmented => "augmented",
            CellMode::PowerGated => "power_gated",
        }
    }
}

impl fmt::Display for CellMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CellMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "normal" => Ok(CellMode::Normal),
            "augmented" => Ok(CellMode::Augmented),
            "power_gated" | "powergated" | "power-gated" => Ok(CellMode::PowerGated),
            other => Err(format!("unknown mode `{other}`")),
        }
    }
}

/// Ternary digit stored on the (Q, QB) node pair of a 7T cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Trit {
    MinusOne,
    Zero,
    PlusOne,
}

impl Trit {
    pub const ALL: [Trit; 3] = [Trit::MinusOne, Trit::Zero, Trit::PlusOne];

    /// Logical (Q, QB) levels. (1, 1) is never produced.
    pub fn node_encoding(self) -> (bool, bool) {
        match self {
            Trit::MinusOne => (true, false),
            Trit::Zero => (false, false),
            Trit::PlusOne => (false, true),
        }
    }

    /// Sense-side decode: a discharging BL means QB high, a discharging BLB
    /// means Q high, no discharge means (0,0).
    pub fn from_nodes(q: bool, qb: bool) -> Option<Trit> {
        match (q, qb) {
            (true, false) => Some(Trit::MinusOne),
            (false, false) => Some(Trit::Zero),
            (false, true) => Some(Trit::PlusOne),
            (true, true) => None,
        }
    }

    pub fn value(self) -> i8 {
        match self {
            Trit::MinusOne => -1,
            Trit::Zero => 0,
            Trit::PlusOne => 1,
        }
    }
}

impl fmt::Display for Trit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Trit::MinusOne => "-1",
            Trit::Zero => "0",
            Trit::PlusOne => "+1",
        })
    }
}

impl FromStr for Trit {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "-1" => Ok(Trit::MinusOne),
            "0" => Ok(Trit::Zero),
            "+1" => Ok(Trit::PlusOne),
            other => Err(format!("invalid trit `{other}` (expected -1, 0 or +1)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Payload {
    Bit(bool),
    Trit(Trit),
}

impl fmt::Display for Payload {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Payload::Bit(b) => write!(f, "{}", u8::from(*b)),
            Payload::Trit(t) => t.fmt(f),
        }
    }
}

/// Charge-based datum with a step-function lifetime.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicDatum {
    pub payload: Payload,
    pub written_at: SimTime,
    /// The cell's sampled retention bound.
    pub cell_retention_ns: f64,
    /// Lifetime of this particular payload. Equals `cell_retention_ns` except
    /// for a ternary zero, which lasts longer.
    pub retention_ns: f64,
}

impl DynamicDatum {
    pub fn age(&self, now: SimTime) -> SimTime {
        now.saturating_sub(self.written_at)
    }

    pub fn is_valid(&self, now: SimTime) -> bool {
        (self.age(now) as f64) < self.retention_ns
    }
}

/// Behavioral knobs that change cell-level semantics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CellPolicy {
    /// Expired dynamic reads return the decayed value instead of failing.
    pub silent_decay: bool,
    /// Lifetime multiplier for a stored ternary zero.
    pub zero_retention_factor: f64,
    /// Permit pulsed-wordline reads on an 8T cell in Augmented mode.
    pub allow_pulsed_in_augmented: bool,
}

impl Default for CellPolicy {
    fn default() -> Self {
        CellPolicy {
            silent_decay: false,
            zero_retention_factor: 4.0,
            allow_pulsed_in_augmented: false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum CellEventKind {
    DramDestroyedBySramAccess,
    SilentDecayAlias,
    ExpiredRead,
    ModeFlush,
    PulsedCopyOverwrite,
}

impl CellEventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            CellEventKind::DramDestroyedBySramAccess => "DRAM_DESTROYED",
            CellEventKind::SilentDecayAlias => "SILENT_DECAY",
            CellEventKind::ExpiredRead => "EXPIRED_READ",
            CellEventKind::ModeFlush => "MODE_FLUSH",
            CellEventKind::PulsedCopyOverwrite => "PULSED_COPY",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellEvent {
    pub kind: CellEventKind,
    pub at: SimTime,
}

impl CellEvent {
    fn new(kind: CellEventKind, at: SimTime) -> Self {
        CellEvent { kind, at }
    }
}

#[derive(Clone, Debug, PartialEq, Error)]
pub enum CellError {
    #[error("mode {mode} is not available for {tech}")]
    IllegalMode { tech: Technology, mode: CellMode },
    #[error("{op} is not allowed on a {tech} cell in {mode} mode")]
    WrongMode {
        op: &'static str,
        tech: Technology,
        mode: CellMode,
    },
    #[error("cell holds no data for this access")]
    EmptyCell,
    #[error("dynamic datum expired: age {age_ns} ns >= retention {retention_ns} ns")]
    ExpiredRead { age_ns: SimTime, retention_ns: f64 },
}

pub fn check_mode(tech: Technology, mode: CellMode) -> Result<(), CellError> {
    if tech.supports(mode) {
        Ok(())
    } else {
        Err(CellError::IllegalMode { tech, mode })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CellState {
    pub tech: Technology,
    pub mode: CellMode,
    pub static_bit: Option<bool>,
    pub dynamic: Option<DynamicDatum>,
}

impl CellState {
    /// Power-up state: nothing stored.
    pub fn new(tech: Technology, mode: CellMode) -> Result<Self, CellError> {
        check_mode(tech, mode)?;
        Ok(CellState {
            tech,
            mode,
            static_bit: None,
            dynamic: None,
        })
    }

    /// Checks the per-mode storage invariants. Returns a description of the
    /// first violated one.
    pub fn check_invariants(&self) -> Result<(), String> {
        if !self.tech.supports(self.mode) {
            return Err(format!("{} cell in illegal mode {}", self.tech, self.mode));
        }
        match (self.tech, self.mode) {
            (Technology::Std6T, _) | (Technology::Aug7T, CellMode::Normal) | (Technology::Aug8T, CellMode::Normal)
                if self.dynamic.is_some() =>
            {
                Err(format!("{} {} cell holds a dynamic datum", self.tech, self.mode))
            }
            (Technology::Aug7T, CellMode::Augmented | CellMode::PowerGated) if self.static_bit.is_some() => {
                Err(format!("{} {} cell holds a static bit", self.tech, self.mode))
            }
            (Technology::Aug7T, CellMode::PowerGated) if self.dynamic.is_some() => {
                Err("power-gated cell holds a dynamic datum".into())
            }
            (Technology::Aug7T, CellMode::Augmented) => match self.dynamic.map(|d| d.payload) {
                Some(Payload::Bit(_)) => Err("7T augmented cell holds a binary dynamic datum".into()),
                _ => Ok(()),
            },
            (Technology::Aug8T, CellMode::Augmented) => match self.dynamic.map(|d| d.payload) {
                Some(Payload::Trit(_)) => Err("8T cell holds a ternary datum".into()),
                _ => Ok(()),
            },
            _ => Ok(()),
        }
        .and_then(|()| match self.dynamic {
            Some(d) if !(d.cell_retention_ns > 0.0 && d.retention_ns > 0.0) => {
                Err("dynamic datum with non-positive retention".into())
            }
            _ => Ok(()),
        })
    }

    pub fn has_valid_dynamic(&self, now: SimTime) -> bool {
        self.dynamic.is_some_and(|d| d.is_valid(now))
    }

    fn static_access_allowed(&self, op: &'static str) -> Result<(), CellError> {
        match (self.tech, self.mode) {
            (Technology::Std6T | Technology::Aug8T, _) | (Technology::Aug7T, CellMode::Normal) => Ok(()),
            _ => Err(self.wrong_mode(op)),
        }
    }

    fn wrong_mode(&self, op: &'static str) -> CellError {
        CellError::WrongMode {
            op,
            tech: self.tech,
            mode: self.mode,
        }
    }

    /// Opening both wordlines puts Vz in the static read/write path: any
    /// dynamic datum is lost, with an event if it was still live.
    fn clobber_dynamic(&mut self, now: SimTime, events: &mut Vec<CellEvent>) {
        if let Some(d) = self.dynamic.take() {
            if d.is_valid(now) {
                events.push(CellEvent::new(CellEventKind::DramDestroyedBySramAccess, now));
            }
        }
    }

    pub fn write_sram_bit(&mut self, bit: bool, now: SimTime) -> Result<Vec<CellEvent>, CellError> {
        self.static_access_allowed("write_sram_bit")?;
        let mut events = Vec::new();
        self.clobber_dynamic(now, &mut events);
        self.static_bit = Some(bit);
        Ok(events)
    }

    pub fn read_sram_bit(&mut self, now: SimTime) -> Result<(bool, Vec<CellEvent>), CellError> {
        self.static_access_allowed("read_sram_bit")?;
        let bit = self.static_bit.ok_or(CellError::EmptyCell)?;
        let mut events = Vec::new();
        self.clobber_dynamic(now, &mut events);
        Ok((bit, events))
    }

    /// Decoupled read with a pulsed WL2: the static bit is copied onto Vz and
    /// sensed there. In Augmented mode this overwrites user data, so it needs
    /// `allow_override`.
    pub fn read_sram_pulsed(&mut self, now: SimTime, allow_override: bool) -> Result<(bool, Vec<CellEvent>), CellError> {
        match (self.tech, self.mode) {
            (Technology::Aug8T, CellMode::Normal) => {}
            (Technology::Aug8T, CellMode::Augmented) if allow_override => {}
            _ => return Err(self.wrong_mode("read_sram_pulsed")),
        }
        let bit = self.static_bit.ok_or(CellError::EmptyCell)?;
        let mut events = Vec::new();
        self.clobber_dynamic(now, &mut events);
        events.push(CellEvent::new(CellEventKind::PulsedCopyOverwrite, now));
        // The copy on Vz is transient bookkeeping and is not kept.
        Ok((bit, events))
    }

    pub fn write_dram_bit(&mut self, bit: bool, now: SimTime, retention_ns: f64) -> Result<(), CellError> {
        if (self.tech, self.mode) != (Technology::Aug8T, CellMode::Augmented) {
            return Err(self.wrong_mode("write_dram_bit"));
        }
        self.dynamic = Some(DynamicDatum {
            payload: Payload::Bit(bit),
            written_at: now,
            cell_retention_ns: retention_ns,
            retention_ns,
        });
        Ok(())
    }

    /// Single-ended read through the gate of M4; does not disturb Vz.
    pub fn read_dram_bit(&mut self, now: SimTime, policy: &CellPolicy) -> Result<(bool, Vec<CellEvent>), CellError> {
        if (self.tech, self.mode) != (Technology::Aug8T, CellMode::Augmented) {
            return Err(self.wrong_mode("read_dram_bit"));
        }
        let d = self.dynamic.ok_or(CellError::EmptyCell)?;
        let Payload::Bit(bit) = d.payload else {
            return Err(CellError::EmptyCell);
        };
        if d.is_valid(now) {
            Ok((bit, Vec::new()))
        } else if policy.silent_decay {
            // A leaked Vz sits at ground and senses as 0.
            Ok((false, vec![CellEvent::new(CellEventKind::SilentDecayAlias, now)]))
        } else {
            Err(expired(&d, now))
        }
    }

    /// Read-and-rewrite of the dynamic datum. `resampled_retention` replaces
    /// the cell's retention bound when given.
    pub fn refresh(
        &mut self,
        now: SimTime,
        resampled_retention: Option<f64>,
        policy: &CellPolicy,
    ) -> Result<(), CellError> {
        if self.mode != CellMode::Augmented {
            return Err(self.wrong_mode("refresh"));
        }
        let d = self.dynamic.ok_or(CellError::EmptyCell)?;
        if !d.is_valid(now) {
            return Err(expired(&d, now));
        }
        let base = resampled_retention.unwrap_or(d.cell_retention_ns);
        self.dynamic = Some(DynamicDatum {
            written_at: now,
            cell_retention_ns: base,
            retention_ns: payload_retention(d.payload, base, policy),
            ..d
        });
        Ok(())
    }

    pub fn write_trit(&mut self, trit: Trit, now: SimTime, retention_ns: f64, policy: &CellPolicy) -> Result<(), CellError> {
        if (self.tech, self.mode) != (Technology::Aug7T, CellMode::Augmented) {
            return Err(self.wrong_mode("write_trit"));
        }
        let payload = Payload::Trit(trit);
        self.dynamic = Some(DynamicDatum {
            payload,
            written_at: now,
            cell_retention_ns: retention_ns,
            retention_ns: payload_retention(payload, retention_ns, policy),
        });
        Ok(())
    }

    /// Large-signal ternary read. A successful read restores the nodes, so
    /// the datum's timestamp is reset to `now`.
    pub fn read_trit(&mut self, now: SimTime, policy: &CellPolicy) -> Result<(Trit, Vec<CellEvent>), CellError> {
        if (self.tech, self.mode) != (Technology::Aug7T, CellMode::Augmented) {
            return Err(self.wrong_mode("read_trit"));
        }
        let d = self.dynamic.ok_or(CellError::EmptyCell)?;
        let Payload::Trit(trit) = d.payload else {
            return Err(CellError::EmptyCell);
        };
        if d.is_valid(now) {
            self.dynamic = Some(DynamicDatum { written_at: now, ..d });
            Ok((trit, Vec::new()))
        } else if policy.silent_decay {
            // Both nodes have leaked low: the sense logic sees (0,0) and the
            // restore writes that back.
            let payload = Payload::Trit(Trit::Zero);
            self.dynamic = Some(DynamicDatum {
                payload,
                written_at: now,
                cell_retention_ns: d.cell_retention_ns,
                retention_ns: payload_retention(payload, d.cell_retention_ns, policy),
            });
            Ok((Trit::Zero, vec![CellEvent::new(CellEventKind::SilentDecayAlias, now)]))
        } else {
            Err(expired(&d, now))
        }
    }

    pub fn set_mode(&mut self, new_mode: CellMode, now: SimTime) -> Result<Vec<CellEvent>, CellError> {
        check_mode(self.tech, new_mode)?;
        if new_mode == self.mode {
            return Ok(Vec::new());
        }
        let mut flushed = false;
        if let Some(d) = self.dynamic.take() {
            flushed |= d.is_valid(now);
        }
        // Disconnecting VDD breaks the static latch.
        if self.tech == Technology::Aug7T && new_mode != CellMode::Normal {
            flushed |= self.static_bit.take().is_some();
        }
        if self.tech == Technology::Aug7T && self.mode != CellMode::Normal {
            // Power returns to an unknown latch state.
            self.static_bit = None;
        }
        self.mode = new_mode;
        Ok(if flushed {
            vec![CellEvent::new(CellEventKind::ModeFlush, now)]
        } else {
            Vec::new()
        })
    }
}

fn payload_retention(payload: Payload, base: f64, policy: &CellPolicy) -> f64 {
    match payload {
        Payload::Trit(Trit::Zero) => base * policy.zero_retention_factor,
        _ => base,
    }
}

fn expired(d: &DynamicDatum, now: SimTime) -> CellError {
    CellError::ExpiredRead {
        age_ns: d.age(now),
        retention_ns: d.retention_ns,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const RET: f64 = 25_000.0;

    fn cell(tech: Technology, mode: CellMode) -> CellState {
        CellState::new(tech, mode).unwrap()
    }

    fn kinds(events: &[CellEvent]) -> Vec<CellEventKind> {
        events.iter().map(|e| e.kind).collect()
    }

    #[test]
    fn construction_checks_mode() {
        let c = cell(Technology::Aug8T, CellMode::Augmented);
        assert_eq!(c.static_bit, None);
        assert_eq!(c.dynamic, None);
        assert!(matches!(
            CellState::new(Technology::Std6T, CellMode::Augmented),
            Err(CellError::IllegalMode { .. })
        ));
        assert!(CellState::new(Technology::Aug8T, CellMode::PowerGated).is_err());
        let pg = cell(Technology::Aug7T, CellMode::PowerGated);
        assert!(pg.static_bit.is_none() && pg.dynamic.is_none());
    }

    #[test]
    fn sram_write_destroys_live_dram() {
        let mut c = cell(Technology::Aug8T, CellMode::Augmented);
        c.write_dram_bit(true, 0, RET).unwrap();
        let ev = c.write_sram_bit(false, 10).unwrap();
        assert_eq!(c.static_bit, Some(false));
        assert_eq!(c.dynamic, None);
        assert_eq!(kinds(&ev), vec![CellEventKind::DramDestroyedBySramAccess]);
    }

    #[test]
    fn sram_ops_on_6t_and_7t_augmented() {
        let mut c = cell(Technology::Std6T, CellMode::Normal);
        assert!(c.write_sram_bit(true, 0).unwrap().is_empty());
        assert_eq!(c.read_sram_bit(1).unwrap(), (true, vec![]));

        let mut t = cell(Technology::Aug7T, CellMode::Augmented);
        assert!(matches!(t.write_sram_bit(true, 0), Err(CellError::WrongMode { .. })));
        let mut g = cell(Technology::Aug7T, CellMode::PowerGated);
        assert!(matches!(g.read_sram_bit(0), Err(CellError::WrongMode { .. })));
    }

    #[test]
    fn sram_read_destroys_live_dram() {
        let mut c = cell(Technology::Aug8T, CellMode::Augmented);
        c.write_sram_bit(true, 0).unwrap();
        c.write_dram_bit(false, 1, RET).unwrap();
        let (bit, ev) = c.read_sram_bit(2).unwrap();
        assert!(bit);
        assert_eq!(kinds(&ev), vec![CellEventKind::DramDestroyedBySramAccess]);
        assert!(c.dynamic.is_none());
        let mut empty = cell(Technology::Aug8T, CellMode::Augmented);
        assert_eq!(empty.read_sram_bit(0), Err(CellError::EmptyCell));
    }

    #[test]
    fn sram_access_clears_expired_dram_silently() {
        let mut c = cell(Technology::Aug8T, CellMode::Augmented);
        c.write_sram_bit(true, 0).unwrap();
        c.write_dram_bit(true, 0, 100.0).unwrap();
        let (_, ev) = c.read_sram_bit(100).unwrap();
        assert!(ev.is_empty());
        assert!(c.dynamic.is_none());
    }

    #[test]
    fn pulsed_read() {
        let mut c = cell(Technology::Aug8T, CellMode::Normal);
        c.write_sram_bit(true, 0).unwrap();
        let (bit, ev) = c.read_sram_pulsed(5, false).unwrap();
        assert!(bit);
        assert_eq!(kinds(&ev), vec![CellEventKind::PulsedCopyOverwrite]);
        assert!(c.dynamic.is_none());

        let mut a = cell(Technology::Aug8T, CellMode::Augmented);
        a.write_sram_bit(false, 0).unwrap();
        a.write_dram_bit(true, 1, RET).unwrap();
        let before = a.clone();
        assert!(matches!(a.read_sram_pulsed(2, false), Err(CellError::WrongMode { .. })));
        assert_eq!(a, before);
        let (bit, ev) = a.read_sram_pulsed(2, true).unwrap();
        assert!(!bit);
        assert_eq!(
            kinds(&ev),
            vec![CellEventKind::DramDestroyedBySramAccess, CellEventKind::PulsedCopyOverwrite]
        );
        assert!(a.dynamic.is_none());
    }

    #[test]
    fn dram_write_keeps_static_bit() {
        let mut c = cell(Technology::Aug8T, CellMode::Augmented);
        c.write_sram_bit(true, 0).unwrap();
        c.write_dram_bit(false, 1, RET).unwrap();
        assert_eq!(c.static_bit, Some(true));
        assert!(!c.read_dram_bit(1, &CellPolicy::default()).unwrap().0);

        let mut n = cell(Technology::Aug8T, CellMode::Normal);
        assert!(matches!(n.write_dram_bit(true, 0, RET), Err(CellError::WrongMode { .. })));
    }

    #[test]
    fn dram_read_respects_retention() {
        let p = CellPolicy::default();
        let mut c = cell(Technology::Aug8T, CellMode::Augmented);
        c.write_dram_bit(true, 0, RET).unwrap();
        assert_eq!(c.read_dram_bit(24_000, &p).unwrap(), (true, vec![]));
        let snapshot = c.clone();
        assert_eq!(c.read_dram_bit(24_000, &p).unwrap(), (true, vec![]));
        assert_eq!(c, snapshot);
        assert!(matches!(c.read_dram_bit(26_000, &p), Err(CellError::ExpiredRead { .. })));

        let silent = CellPolicy { silent_decay: true, ..p };
        let (bit, ev) = c.read_dram_bit(26_000, &silent).unwrap();
        assert!(!bit);
        assert_eq!(kinds(&ev), vec![CellEventKind::SilentDecayAlias]);
    }

    #[test]
    fn refresh_restarts_window() {
        let p = CellPolicy::default();
        let mut c = cell(Technology::Aug8T, CellMode::Augmented);
        c.write_dram_bit(true, 0, RET).unwrap();
        c.refresh(20_000, None, &p).unwrap();
        assert_eq!(c.dynamic.unwrap().written_at, 20_000);
        assert!(c.read_dram_bit(44_000, &p).is_ok());

        let mut late = cell(Technology::Aug8T, CellMode::Augmented);
        late.write_dram_bit(true, 0, RET).unwrap();
        assert!(matches!(late.refresh(27_500, None, &p), Err(CellError::ExpiredRead { .. })));

        let mut empty = cell(Technology::Aug8T, CellMode::Augmented);
        assert_eq!(empty.refresh(0, None, &p), Err(CellError::EmptyCell));
    }

    #[test]
    fn refresh_resample_updates_bound() {
        let p = CellPolicy::default();
        let mut c = cell(Technology::Aug7T, CellMode::Augmented);
        c.write_trit(Trit::Zero, 0, 4_000.0, &p).unwrap();
        c.refresh(100, Some(5_000.0), &p).unwrap();
        let d = c.dynamic.unwrap();
        assert_eq!(d.cell_retention_ns, 5_000.0);
        assert_eq!(d.retention_ns, 20_000.0);
    }

    #[test]
    fn trit_write_encodings() {
        assert_eq!(Trit::PlusOne.node_encoding(), (false, true));
        assert_eq!(Trit::MinusOne.node_encoding(), (true, false));
        assert_eq!(Trit::Zero.node_encoding(), (false, false));
        assert_eq!(Trit::from_nodes(true, true), None);
        for t in Trit::ALL {
            let (q, qb) = t.node_encoding();
            assert_eq!(Trit::from_nodes(q, qb), Some(t));
        }
    }

    #[test]
    fn trit_read_and_silent_decay() {
        let p = CellPolicy::default();
        let mut c = cell(Technology::Aug7T, CellMode::Augmented);
        c.write_trit(Trit::MinusOne, 0, 4_000.0, &p).unwrap();
        assert_eq!(c.read_trit(3_999, &p).unwrap().0, Trit::MinusOne);
        // write-back restored the window
        assert_eq!(c.read_trit(7_000, &p).unwrap().0, Trit::MinusOne);

        let mut e = cell(Technology::Aug7T, CellMode::Augmented);
        e.write_trit(Trit::PlusOne, 0, 4_000.0, &p).unwrap();
        assert!(matches!(e.read_trit(4_000, &p), Err(CellError::ExpiredRead { .. })));
        let silent = CellPolicy { silent_decay: true, ..p };
        let (t, ev) = e.read_trit(4_000, &silent).unwrap();
        assert_eq!(t, Trit::Zero);
        assert_eq!(kinds(&ev), vec![CellEventKind::SilentDecayAlias]);
    }

    #[test]
    fn zero_trit_outlives_cell_bound() {
        let p = CellPolicy::default();
        let mut c = cell(Technology::Aug7T, CellMode::Augmented);
        c.write_trit(Trit::Zero, 0, 4_000.0, &p).unwrap();
        assert_eq!(c.read_trit(15_999, &p).unwrap().0, Trit::Zero);
        let mut d = cell(Technology::Aug7T, CellMode::Augmented);
        d.write_trit(Trit::Zero, 0, 4_000.0, &p).unwrap();
        assert!(d.read_trit(16_000, &p).is_err());
    }

    #[test]
    fn trit_ops_need_7t_augmented() {
        let p = CellPolicy::default();
        let mut n = cell(Technology::Aug7T, CellMode::Normal);
        assert!(matches!(n.write_trit(Trit::Zero, 0, 1.0, &p), Err(CellError::WrongMode { .. })));
        let mut e = cell(Technology::Aug7T, CellMode::Augmented);
        assert_eq!(e.read_trit(0, &p), Err(CellError::EmptyCell));
    }

    #[test]
    fn mode_changes() {
        let mut c = cell(Technology::Aug8T, CellMode::Augmented);
        c.write_sram_bit(true, 0).unwrap();
        c.write_dram_bit(true, 0, RET).unwrap();
        let ev = c.set_mode(CellMode::Normal, 10).unwrap();
        assert_eq!(kinds(&ev), vec![CellEventKind::ModeFlush]);
        assert_eq!(c.static_bit, Some(true));
        assert!(c.dynamic.is_none());
        assert!(c.check_invariants().is_ok());

        let mut s = cell(Technology::Aug7T, CellMode::Normal);
        s.write_sram_bit(true, 0).unwrap();
        let ev = s.set_mode(CellMode::Augmented, 1).unwrap();
        assert_eq!(kinds(&ev), vec![CellEventKind::ModeFlush]);
        assert_eq!(s.static_bit, None);

        let before = s.clone();
        assert!(s.set_mode(CellMode::Augmented, 2).unwrap().is_empty());
        assert_eq!(s, before);

        assert!(matches!(
            c.set_mode(CellMode::PowerGated, 3),
            Err(CellError::IllegalMode { .. })
        ));
    }

    #[test]
    fn invariant_predicate_rejects_bad_states() {
        let mut c = cell(Technology::Aug7T, CellMode::Augmented);
        c.static_bit = Some(true);
        assert!(c.check_invariants().is_err());
        let mut n = cell(Technology::Std6T, CellMode::Normal);
        n.dynamic = Some(DynamicDatum {
            payload: Payload::Bit(true),
            written_at: 0,
            cell_retention_ns: 1.0,
            retention_ns: 1.0,
        });
        assert!(n.check_invariants().is_err());
    }
}
