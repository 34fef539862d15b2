//! Executes time-ordered command streams against sub-arrays.
//!
//! The timing model is functional: a command takes effect atomically at its
//! timestamp and its table delay is only recorded for latency statistics.
//! Refreshes are scheduled from a deadline queue and run before any user
//! command with the same timestamp, ties broken by (sub-array, row, column).
//!
//! Energy is tallied as integer access counts per (mode, op, data pattern)
//! and priced only when the report is built. Two controllers over disjoint
//! sub-arrays therefore merge exactly, in any order.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{Address, ArrayError, ArraySpec, Capacity, CellOp, Charge, ChargeKind, RetentionEnv, SubArray};
use crate::cell::{CellError, CellEventKind, CellMode, CellPolicy, Payload, Technology};
use crate::models::{BiasConfig, ModelError, ModelParams};
use crate::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Action {
    Access(Address, CellOp),
    SetMode { subarray: u32, mode: CellMode },
    Idle,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Command {
    pub at: SimTime,
    pub action: Action,
}

impl Command {
    pub fn access(at: SimTime, addr: Address, op: CellOp) -> Self {
        Command {
            at,
            action: Action::Access(addr, op),
        }
    }

    pub fn set_mode(at: SimTime, subarray: u32, mode: CellMode) -> Self {
        Command {
            at,
            action: Action::SetMode { subarray, mode },
        }
    }

    pub fn subarray(&self) -> Option<u32> {
        match self.action {
            Action::Access(a, _) => Some(a.subarray),
            Action::SetMode { subarray, .. } => Some(subarray),
            Action::Idle => None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FiloPolicy {
    /// Reject any static access that would destroy a live dynamic bit.
    #[default]
    Enforce,
    /// Execute it, destroy the dynamic bit and count the violation.
    Warn,
    Off,
}

impl std::str::FromStr for FiloPolicy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "enforce" => Ok(FiloPolicy::Enforce),
            "warn" => Ok(FiloPolicy::Warn),
            "off" => Ok(FiloPolicy::Off),
            _ => Err(format!("unknown FILO policy `{s}` (enforce, warn, off)")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RefreshPolicy {
    pub enabled: bool,
    /// Refresh once a datum's age reaches `margin * retention`.
    pub margin: f64,
    /// Schedule against each cell's sampled retention instead of the nominal
    /// value.
    pub controller_knows_variation: bool,
}

impl Default for RefreshPolicy {
    fn default() -> Self {
        RefreshPolicy {
            enabled: false,
            margin: 0.8,
            controller_knows_variation: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Policies {
    pub filo: FiloPolicy,
    pub refresh: RefreshPolicy,
    pub cell: CellPolicy,
    /// Abort the run on the first failed command.
    pub strict: bool,
}

/// Everything a run depends on besides the trace and the model tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub arrays: Vec<ArraySpec>,
    pub temperature_c: f64,
    pub bias: BiasConfig,
    pub seed: u64,
    /// Minimum simulated span; runs last at least until the final command.
    pub horizon_ns: SimTime,
    pub policies: Policies,
    /// Overrides of the model file's variation settings.
    pub variation_sigma: Option<f64>,
    pub resample_on_refresh: Option<bool>,
    /// Keep the per-event log. Reports do not depend on it.
    pub record_log: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            arrays: Vec::new(),
            temperature_c: 85.0,
            bias: BiasConfig::default(),
            seed: 0,
            horizon_ns: 0,
            policies: Policies::default(),
            variation_sigma: None,
            resample_on_refresh: None,
            record_log: true,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), ControllerError> {
        let err = |m: String| Err(ControllerError::Config(m));
        if self.arrays.is_empty() {
            return err("no sub-arrays configured".into());
        }
        for a in &self.arrays {
            if a.count == 0 || a.rows == 0 || a.cols == 0 {
                return err(format!("sub-array spec {a:?} has a zero dimension or count"));
            }
            if !a.tech.supports(a.mode) {
                return err(format!("{} cannot start in {} mode", a.tech, a.mode));
            }
        }
        let m = self.policies.refresh.margin;
        if !(m > 0.0 && m < 1.0) {
            return err(format!("refresh margin must be in (0, 1), got {m}"));
        }
        if !(self.policies.cell.zero_retention_factor > 0.0) {
            return err("zero_retention_factor must be positive".into());
        }
        if let Some(s) = self.variation_sigma {
            if !(s >= 0.0) {
                return err("variation sigma must be >= 0".into());
            }
        }
        if !self.temperature_c.is_finite() {
            return err("temperature must be finite".into());
        }
        Ok(())
    }

    /// Sub-array ids in construction order with their spec.
    pub fn subarray_specs(&self) -> Vec<(u32, ArraySpec)> {
        let mut out = Vec::new();
        for spec in &self.arrays {
            for _ in 0..spec.count {
                out.push((out.len() as u32, *spec));
            }
        }
        out
    }

    fn retention_env(&self, models: &ModelParams) -> RetentionEnv {
        let mut env = RetentionEnv::from_models(models, self.temperature_c, self.bias, self.seed);
        if let Some(s) = self.variation_sigma {
            env.sigma = s;
        }
        if let Some(r) = self.resample_on_refresh {
            env.resample_on_refresh = r;
        }
        env
    }
}

#[derive(Debug, Error)]
pub enum ControllerError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Array(#[from] ArrayError),
    #[error("command at {at} ns arrives after t = {now} ns")]
    OutOfOrder { at: SimTime, now: SimTime },
    #[error("command at {at} ns failed: {error}")]
    CommandFailed { at: SimTime, error: String },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub commands: u64,
    pub executed: u64,
    pub rejected: u64,
    pub failed: u64,
    pub filo_violations: u64,
    pub retention_violations: u64,
    pub silent_decays: u64,
    pub refreshes: u64,
    pub scheduled_refreshes: u64,
    pub mode_switches: u64,
    pub mode_flushes: u64,
    pub dram_destroyed: u64,
    pub pulsed_copies: u64,
}

impl Counters {
    pub fn add(&mut self, o: &Counters) {
        self.commands += o.commands;
        self.executed += o.executed;
        self.rejected += o.rejected;
        self.failed += o.failed;
        self.filo_violations += o.filo_violations;
        self.retention_violations += o.retention_violations;
        self.silent_decays += o.silent_decays;
        self.refreshes += o.refreshes;
        self.scheduled_refreshes += o.scheduled_refreshes;
        self.mode_switches += o.mode_switches;
        self.mode_flushes += o.mode_flushes;
        self.dram_destroyed += o.dram_destroyed;
        self.pulsed_copies += o.pulsed_copies;
    }
}

/// Raw per-sub-array accounting, before pricing.
#[derive(Clone, Debug, PartialEq)]
pub struct SubArrayTally {
    pub tech: Technology,
    pub rows: u32,
    pub cols: u32,
    pub final_mode: CellMode,
    pub charges: BTreeMap<Charge, u64>,
    pub resident_ns: BTreeMap<CellMode, SimTime>,
    pub counters: Counters,
}

/// Mergeable accounting of one or more controllers.
#[derive(Clone, Debug, PartialEq)]
pub struct Tally {
    pub horizon_ns: SimTime,
    pub subarrays: BTreeMap<u32, SubArrayTally>,
    /// Idle commands and commands naming an unknown sub-array.
    pub unattributed: Counters,
}

impl Tally {
    /// Combines tallies of controllers that own disjoint sub-arrays.
    pub fn merge(mut self, other: Tally) -> Tally {
        self.horizon_ns = self.horizon_ns.max(other.horizon_ns);
        for (id, t) in other.subarrays {
            let prev = self.subarrays.insert(id, t);
            debug_assert!(prev.is_none(), "sub-array {id} tallied twice");
        }
        self.unattributed.add(&other.unattributed);
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChargeLine {
    pub mode: CellMode,
    pub op: String,
    pub pattern: crate::models::DataPattern,
    pub count: u64,
    pub energy_fj_each: f64,
    pub delay_ps_each: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubArrayReport {
    pub id: u32,
    pub tech: Technology,
    pub final_mode: CellMode,
    pub rows: u32,
    pub cols: u32,
    pub dynamic_energy_fj: f64,
    pub refresh_energy_fj: f64,
    pub hold_energy_fj: f64,
    pub hold_energy_aj: u128,
    pub resident_ns: BTreeMap<CellMode, SimTime>,
    pub charges: Vec<ChargeLine>,
    pub counters: Counters,
    pub capacity: Capacity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub accesses: u64,
    pub total_delay_ps: u64,
    pub mean_delay_ns: f64,
    /// Access count per delay value (ps).
    pub histogram_ps: BTreeMap<u64, u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CapacitySummary {
    pub cells: u64,
    pub binary_bits: u64,
    pub trits: u64,
    pub bit_equivalent: f64,
    pub conventional_6t_cells: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub format: String,
    pub config: SimConfig,
    pub horizon_ns: SimTime,
    /// All access energy, refreshes included.
    pub dynamic_energy_fj: f64,
    pub refresh_energy_fj: f64,
    pub hold_energy_fj: f64,
    /// Hold energy in attojoules (nW x ns), exact.
    pub hold_energy_aj: u128,
    pub total_energy_fj: f64,
    pub energy_by_op_fj: BTreeMap<String, f64>,
    pub latency: LatencyStats,
    pub counters: Counters,
    pub capacity: CapacitySummary,
    pub subarrays: Vec<SubArrayReport>,
}

pub const REPORT_FORMAT: &str = "amcsim-report/1";

impl SimReport {
    pub fn build(tally: &Tally, config: &SimConfig, models: &ModelParams) -> Result<SimReport, ModelError> {
        let mut subs = Vec::new();
        let mut by_op: BTreeMap<String, f64> = BTreeMap::new();
        let mut counters = tally.unattributed;
        let mut histogram: BTreeMap<u64, u64> = BTreeMap::new();
        let (mut accesses, mut total_delay_ps) = (0u64, 0u64);

        for (&id, t) in &tally.subarrays {
            let mut lines = Vec::new();
            let mut sub_by_op: BTreeMap<String, f64> = BTreeMap::new();
            let (mut dynamic, mut refresh) = (0.0, 0.0);
            for (charge, &count) in &t.charges {
                let e = charge.energy_fj(models, t.tech)?;
                let d = charge.delay_ps(models, t.tech)?;
                let energy = e * count as f64;
                dynamic += energy;
                if charge.kind == ChargeKind::Refresh {
                    refresh += energy;
                }
                *sub_by_op.entry(charge.kind.to_string()).or_default() += energy;
                *histogram.entry(d).or_default() += count;
                accesses += count;
                total_delay_ps += d * count;
                lines.push(ChargeLine {
                    mode: charge.mode,
                    op: charge.kind.to_string(),
                    pattern: charge.pattern,
                    count,
                    energy_fj_each: e,
                    delay_ps_each: d,
                });
            }
            for (k, v) in sub_by_op {
                *by_op.entry(k).or_default() += v;
            }
            let cells = t.rows as u128 * t.cols as u128;
            let mut hold_aj = 0u128;
            for (&mode, &ns) in &t.resident_ns {
                hold_aj += models.hold_power_nw(t.tech, mode)? as u128 * cells * ns as u128;
            }
            counters.add(&t.counters);
            subs.push(SubArrayReport {
                id,
                tech: t.tech,
                final_mode: t.final_mode,
                rows: t.rows,
                cols: t.cols,
                dynamic_energy_fj: dynamic,
                refresh_energy_fj: refresh,
                hold_energy_fj: aj_to_fj(hold_aj),
                hold_energy_aj: hold_aj,
                resident_ns: t.resident_ns.clone(),
                charges: lines,
                counters: t.counters,
                capacity: Capacity::of(t.tech, t.final_mode, t.rows, t.cols),
            });
        }

        let dynamic_energy_fj = subs.iter().map(|s| s.dynamic_energy_fj).sum::<f64>();
        let refresh_energy_fj = subs.iter().map(|s| s.refresh_energy_fj).sum::<f64>();
        let hold_energy_aj = subs.iter().map(|s| s.hold_energy_aj).sum::<u128>();
        let hold_energy_fj = aj_to_fj(hold_energy_aj);
        let capacity = CapacitySummary {
            cells: subs.iter().map(|s| s.capacity.cells).sum(),
            binary_bits: subs.iter().map(|s| s.capacity.binary_bits).sum(),
            trits: subs.iter().map(|s| s.capacity.trits).sum(),
            bit_equivalent: subs.iter().map(|s| s.capacity.bit_equivalent).sum(),
            conventional_6t_cells: subs.iter().map(|s| s.capacity.conventional_6t_cells).sum(),
        };
        Ok(SimReport {
            format: REPORT_FORMAT.into(),
            config: config.clone(),
            horizon_ns: tally.horizon_ns,
            dynamic_energy_fj,
            refresh_energy_fj,
            hold_energy_fj,
            hold_energy_aj,
            total_energy_fj: dynamic_energy_fj + hold_energy_fj,
            energy_by_op_fj: by_op,
            latency: LatencyStats {
                accesses,
                total_delay_ps,
                mean_delay_ns: if accesses == 0 {
                    0.0
                } else {
                    total_delay_ps as f64 / accesses as f64 / 1000.0
                },
                histogram_ps: histogram,
            },
            counters,
            capacity,
            subarrays: subs,
        })
    }

    /// Whether anything went wrong that a lenient run tolerated.
    pub fn has_violations(&self) -> bool {
        let c = &self.counters;
        c.filo_violations + c.retention_violations + c.silent_decays + c.failed > 0
    }

    /// Plain-text summary table.
    pub fn summary(&self) -> String {
        let c = &self.counters;
        let mut s = String::new();
        let mut row = |k: &str, v: String| s.push_str(&format!("{k:<28}{v:>24}\n"));
        row("horizon (ns)", self.horizon_ns.to_string());
        row("dynamic energy (fJ)", format!("{:.4}", self.dynamic_energy_fj));
        row("  of which refresh (fJ)", format!("{:.4}", self.refresh_energy_fj));
        row("hold energy (fJ)", format!("{:.4}", self.hold_energy_fj));
        row("total energy (fJ)", format!("{:.4}", self.total_energy_fj));
        for (op, e) in &self.energy_by_op_fj {
            row(&format!("  {op} (fJ)"), format!("{e:.4}"));
        }
        row("accesses", self.latency.accesses.to_string());
        row("mean access delay (ns)", format!("{:.4}", self.latency.mean_delay_ns));
        row("commands", c.commands.to_string());
        row("executed", c.executed.to_string());
        row("rejected", c.rejected.to_string());
        row("failed", c.failed.to_string());
        row("FILO violations", c.filo_violations.to_string());
        row("retention violations", c.retention_violations.to_string());
        row("silent decays", c.silent_decays.to_string());
        row("refreshes", c.refreshes.to_string());
        row("mode flushes", c.mode_flushes.to_string());
        row("dynamic bits destroyed", c.dram_destroyed.to_string());
        row("capacity (bit equivalent)", format!("{:.2}", self.capacity.bit_equivalent));
        s
    }
}

fn aj_to_fj(aj: u128) -> f64 {
    aj as f64 / 1000.0
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FiloCheck {
    Ok,
    Violation(Address),
}

#[derive(Clone, Debug, PartialEq)]
pub enum Outcome {
    Executed {
        result: Option<Payload>,
        energy_fj: f64,
        delay_ps: u64,
    },
    Rejected(Address),
    Failed(String),
    ModeSet { flushed: usize },
    Idle,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LogDetail {
    Exec {
        op: CellOp,
        result: Option<Payload>,
        energy_fj: f64,
        delay_ps: u64,
    },
    Refresh {
        scheduled: bool,
        energy_fj: f64,
        delay_ps: u64,
    },
    FiloViolation(CellOp),
    Reject(CellOp),
    Fail(String),
    RetentionViolation { age_ns: SimTime, retention_ns: f64 },
    Cell(CellEventKind),
    SetMode { from: CellMode, to: CellMode, flushed: usize },
    Idle,
}

/// One line of the event log: `time_ns KIND addr detail`.
#[derive(Clone, Debug, PartialEq)]
pub struct LogRecord {
    pub at: SimTime,
    pub subarray: Option<u32>,
    pub addr: Option<Address>,
    pub detail: LogDetail,
}

impl LogRecord {
    pub fn kind(&self) -> &'static str {
        match &self.detail {
            LogDetail::Exec { .. } => "EXEC",
            LogDetail::Refresh { .. } => "REFRESH",
            LogDetail::FiloViolation(_) => "FILO_VIOLATION",
            LogDetail::Reject(_) => "REJECT",
            LogDetail::Fail(_) => "FAIL",
            LogDetail::RetentionViolation { .. } => "RETENTION_VIOLATION",
            LogDetail::Cell(k) => k.as_str(),
            LogDetail::SetMode { .. } => "SET_MODE",
            LogDetail::Idle => "IDLE",
        }
    }
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} ", self.at, self.kind())?;
        match (self.addr, self.subarray) {
            (Some(a), _) => write!(f, "{a} ")?,
            (None, Some(s)) => write!(f, "{s} ")?,
            (None, None) => f.write_str("- ")?,
        }
        match &self.detail {
            LogDetail::Exec {
                op,
                result,
                energy_fj,
                delay_ps,
            } => {
                write!(f, "op={} ", op_keyword(*op))?;
                match result {
                    Some(r) => write!(f, "result={r} ")?,
                    None => f.write_str("result=- ")?,
                }
                write!(f, "energy_fj={energy_fj} delay_ps={delay_ps}")
            }
            LogDetail::Refresh {
                scheduled,
                energy_fj,
                delay_ps,
            } => write!(f, "scheduled={scheduled} energy_fj={energy_fj} delay_ps={delay_ps}"),
            LogDetail::FiloViolation(op) | LogDetail::Reject(op) => write!(f, "op={}", op_keyword(*op)),
            LogDetail::Fail(e) => write!(f, "error={}", e.replace(char::is_whitespace, "_")),
            LogDetail::RetentionViolation { age_ns, retention_ns } => {
                write!(f, "age_ns={age_ns} retention_ns={retention_ns}")
            }
            LogDetail::Cell(_) | LogDetail::Idle => f.write_str("-"),
            LogDetail::SetMode { from, to, flushed } => write!(f, "from={from} to={to} flushed={flushed}"),
        }
    }
}

/// Trace keyword of a cell operation.
pub fn op_keyword(op: CellOp) -> &'static str {
    match op {
        CellOp::WriteSram(_) => "WRITE_SRAM",
        CellOp::ReadSram => "READ_SRAM",
        CellOp::ReadSramPulsed => "READ_SRAM_PULSED",
        CellOp::WriteDram(_) => "WRITE_DRAM",
        CellOp::ReadDram => "READ_DRAM",
        CellOp::WriteTrit(_) => "WRITE_TRIT",
        CellOp::ReadTrit => "READ_TRIT",
        CellOp::Refresh => "REFRESH",
    }
}

pub fn render_log(records: &[LogRecord]) -> String {
    let mut s = String::with_capacity(records.len() * 48);
    for r in records {
        use std::fmt::Write as _;
        let _ = writeln!(s, "{r}");
    }
    s
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
struct RefreshSlot {
    due: SimTime,
    addr: Address,
    written_at: SimTime,
}

struct Owned {
    array: SubArray,
    mode_since: SimTime,
    tally: SubArrayTally,
}

pub struct Controller<'m> {
    models: &'m ModelParams,
    config: SimConfig,
    subarrays: BTreeMap<u32, Owned>,
    now: SimTime,
    queue: BinaryHeap<Reverse<RefreshSlot>>,
    unattributed: Counters,
    log: Vec<LogRecord>,
}

impl<'m> Controller<'m> {
    pub fn new(config: &SimConfig, models: &'m ModelParams) -> Result<Self, ControllerError> {
        let ids: Vec<u32> = config.subarray_specs().iter().map(|(id, _)| *id).collect();
        Self::for_subarrays(config, models, &ids)
    }

    /// A controller owning only the listed sub-arrays.
    pub fn for_subarrays(config: &SimConfig, models: &'m ModelParams, ids: &[u32]) -> Result<Self, ControllerError> {
        config.validate()?;
        let env = config.retention_env(models);
        let mut subarrays = BTreeMap::new();
        for (id, spec) in config.subarray_specs() {
            if !ids.contains(&id) {
                continue;
            }
            let array = SubArray::new(id, spec.tech, spec.mode, spec.rows, spec.cols, models, &env)?;
            let tally = SubArrayTally {
                tech: spec.tech,
                rows: spec.rows,
                cols: spec.cols,
                final_mode: spec.mode,
                charges: BTreeMap::new(),
                resident_ns: BTreeMap::new(),
                counters: Counters::default(),
            };
            subarrays.insert(
                id,
                Owned {
                    array,
                    mode_since: 0,
                    tally,
                },
            );
        }
        Ok(Controller {
            models,
            config: config.clone(),
            subarrays,
            now: 0,
            queue: BinaryHeap::new(),
            unattributed: Counters::default(),
            log: Vec::new(),
        })
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn subarray(&self, id: u32) -> Option<&SubArray> {
        self.subarrays.get(&id).map(|o| &o.array)
    }

    pub fn log(&self) -> &[LogRecord] {
        &self.log
    }

    fn record(&mut self, at: SimTime, subarray: Option<u32>, addr: Option<Address>, detail: LogDetail) {
        if self.config.record_log {
            self.log.push(LogRecord {
                at,
                subarray,
                addr,
                detail,
            });
        }
    }

    /// Whether executing `cmd` now would destroy a live dynamic bit.
    pub fn check_filo(&self, cmd: &Command) -> FiloCheck {
        let Action::Access(addr, op) = cmd.action else {
            return FiloCheck::Ok;
        };
        let Some(o) = self.subarrays.get(&addr.subarray) else {
            return FiloCheck::Ok;
        };
        let a = &o.array;
        if (a.tech, a.mode()) != (Technology::Aug8T, CellMode::Augmented) || !op.touches_static_plane() {
            return FiloCheck::Ok;
        }
        match a.cell(addr) {
            Ok(cell) if cell.has_valid_dynamic(cmd.at) => FiloCheck::Violation(addr),
            _ => FiloCheck::Ok,
        }
    }

    fn refresh_retention(&self, o: &Owned, addr: Address) -> Option<f64> {
        let cell = o.array.cell(addr).ok()?;
        let d = cell.dynamic?;
        if self.config.policies.refresh.controller_knows_variation {
            Some(d.cell_retention_ns)
        } else {
            o.array.nominal_retention_ns()
        }
    }

    /// Refresh commands for every dynamic datum whose age has reached the
    /// refresh threshold at `now`, in (sub-array, row, column) order.
    pub fn schedule_refresh(&self, now: SimTime) -> Vec<Command> {
        let margin = self.config.policies.refresh.margin;
        let mut out = Vec::new();
        for o in self.subarrays.values() {
            for (addr, cell) in o.array.cells() {
                let Some(d) = cell.dynamic else { continue };
                let Some(ret) = self.refresh_retention(o, addr) else { continue };
                if d.age(now) as f64 >= margin * ret {
                    out.push(Command::access(now, addr, CellOp::Refresh));
                }
            }
        }
        out
    }

    fn enqueue_refresh(&mut self, addr: Address) {
        if !self.config.policies.refresh.enabled {
            return;
        }
        let Some(o) = self.subarrays.get(&addr.subarray) else { return };
        let Some(d) = o.array.cell(addr).ok().and_then(|c| c.dynamic) else {
            return;
        };
        let Some(ret) = self.refresh_retention(o, addr) else { return };
        let wait = (self.config.policies.refresh.margin * ret).ceil().max(1.0) as SimTime;
        self.queue.push(Reverse(RefreshSlot {
            due: d.written_at + wait,
            addr,
            written_at: d.written_at,
        }));
    }

    /// Runs every scheduled refresh due at or before `until`.
    fn run_refreshes(&mut self, until: SimTime) -> Result<(), ControllerError> {
        while let Some(&Reverse(slot)) = self.queue.peek() {
            if slot.due > until {
                break;
            }
            self.queue.pop();
            let fresh = self
                .subarrays
                .get(&slot.addr.subarray)
                .and_then(|o| o.array.cell(slot.addr).ok())
                .and_then(|c| c.dynamic)
                .is_some_and(|d| d.written_at == slot.written_at);
            if !fresh {
                continue;
            }
            self.now = self.now.max(slot.due);
            self.execute_access(slot.due, slot.addr, CellOp::Refresh, true)?;
        }
        Ok(())
    }

    /// Applies one command. Commands must arrive in non-decreasing time
    /// order; due refreshes run first.
    pub fn submit(&mut self, cmd: &Command) -> Result<Outcome, ControllerError> {
        if cmd.at < self.now {
            return Err(ControllerError::OutOfOrder { at: cmd.at, now: self.now });
        }
        self.run_refreshes(cmd.at)?;
        self.now = cmd.at;
        match cmd.action {
            Action::Idle => {
                self.unattributed.commands += 1;
                self.unattributed.executed += 1;
                self.record(cmd.at, None, None, LogDetail::Idle);
                Ok(Outcome::Idle)
            }
            Action::SetMode { subarray, mode } => self.execute_set_mode(cmd.at, subarray, mode),
            Action::Access(addr, op) => {
                let Some(o) = self.subarrays.get_mut(&addr.subarray) else {
                    return self.fail_unattributed(cmd.at, addr.subarray, ArrayError::NoSuchSubArray(addr.subarray).to_string());
                };
                o.tally.counters.commands += 1;
                if let FiloCheck::Violation(a) = self.check_filo(cmd) {
                    match self.config.policies.filo {
                        FiloPolicy::Enforce => {
                            let c = &mut self.subarrays.get_mut(&addr.subarray).expect("checked").tally.counters;
                            c.filo_violations += 1;
                            c.rejected += 1;
                            self.record(cmd.at, Some(a.subarray), Some(a), LogDetail::Reject(op));
                            return Ok(Outcome::Rejected(a));
                        }
                        FiloPolicy::Warn => {
                            self.subarrays.get_mut(&addr.subarray).expect("checked").tally.counters.filo_violations += 1;
                            self.record(cmd.at, Some(a.subarray), Some(a), LogDetail::FiloViolation(op));
                        }
                        FiloPolicy::Off => {}
                    }
                }
                self.execute_access(cmd.at, addr, op, false)
            }
        }
    }

    fn fail_unattributed(&mut self, at: SimTime, subarray: u32, msg: String) -> Result<Outcome, ControllerError> {
        self.unattributed.commands += 1;
        self.unattributed.failed += 1;
        self.record(at, Some(subarray), None, LogDetail::Fail(msg.clone()));
        if self.config.policies.strict {
            return Err(ControllerError::CommandFailed { at, error: msg });
        }
        Ok(Outcome::Failed(msg))
    }

    fn execute_set_mode(&mut self, at: SimTime, id: u32, mode: CellMode) -> Result<Outcome, ControllerError> {
        let Some(o) = self.subarrays.get_mut(&id) else {
            return self.fail_unattributed(at, id, ArrayError::NoSuchSubArray(id).to_string());
        };
        o.tally.counters.commands += 1;
        let from = o.array.mode();
        match o.array.set_mode(mode, at) {
            Ok(events) => {
                if from != mode {
                    *o.tally.resident_ns.entry(from).or_default() += at - o.mode_since;
                    o.mode_since = at;
                    o.tally.counters.mode_switches += 1;
                }
                o.tally.final_mode = mode;
                o.tally.counters.executed += 1;
                o.tally.counters.mode_flushes += events.len() as u64;
                let flushed = events.len();
                self.record(at, Some(id), None, LogDetail::SetMode { from, to: mode, flushed });
                for (addr, e) in events {
                    self.record(at, Some(id), Some(addr), LogDetail::Cell(e.kind));
                }
                Ok(Outcome::ModeSet { flushed })
            }
            Err(e) => {
                o.tally.counters.failed += 1;
                let msg = e.to_string();
                self.record(at, Some(id), None, LogDetail::Fail(msg.clone()));
                if self.config.policies.strict {
                    return Err(ControllerError::CommandFailed { at, error: msg });
                }
                Ok(Outcome::Failed(msg))
            }
        }
    }

    fn execute_access(&mut self, at: SimTime, addr: Address, op: CellOp, scheduled: bool) -> Result<Outcome, ControllerError> {
        let models = self.models;
        let policy = self.config.policies.cell;
        let o = self.subarrays.get_mut(&addr.subarray).expect("caller checked sub-array");
        if scheduled {
            o.tally.counters.commands += 1;
        }
        match o.array.access(addr, op, at, models, &policy) {
            Ok(access) => {
                let c = &mut o.tally.counters;
                c.executed += 1;
                if op == CellOp::Refresh {
                    c.refreshes += 1;
                    c.scheduled_refreshes += u64::from(scheduled);
                }
                for e in &access.events {
                    match e.kind {
                        CellEventKind::DramDestroyedBySramAccess => c.dram_destroyed += 1,
                        CellEventKind::SilentDecayAlias => c.silent_decays += 1,
                        CellEventKind::PulsedCopyOverwrite => c.pulsed_copies += 1,
                        CellEventKind::ModeFlush => c.mode_flushes += 1,
                        CellEventKind::ExpiredRead => c.retention_violations += 1,
                    }
                }
                *o.tally.charges.entry(access.charge).or_default() += 1;
                let rewrote = o
                    .array
                    .cell(addr)
                    .ok()
                    .and_then(|c| c.dynamic)
                    .is_some_and(|d| d.written_at == at);
                let detail = if op == CellOp::Refresh {
                    LogDetail::Refresh {
                        scheduled,
                        energy_fj: access.energy_fj,
                        delay_ps: access.delay_ps,
                    }
                } else {
                    LogDetail::Exec {
                        op,
                        result: access.result,
                        energy_fj: access.energy_fj,
                        delay_ps: access.delay_ps,
                    }
                };
                self.record(at, Some(addr.subarray), Some(addr), detail);
                for e in &access.events {
                    self.record(at, Some(addr.subarray), Some(addr), LogDetail::Cell(e.kind));
                }
                if rewrote {
                    self.enqueue_refresh(addr);
                }
                Ok(Outcome::Executed {
                    result: access.result,
                    energy_fj: access.energy_fj,
                    delay_ps: access.delay_ps,
                })
            }
            Err(err) => {
                let c = &mut o.tally.counters;
                c.failed += 1;
                if let ArrayError::Cell(CellError::ExpiredRead { age_ns, retention_ns }) = err {
                    c.retention_violations += 1;
                    self.record(
                        at,
                        Some(addr.subarray),
                        Some(addr),
                        LogDetail::RetentionViolation { age_ns, retention_ns },
                    );
                }
                let msg = err.to_string();
                self.record(at, Some(addr.subarray), Some(addr), LogDetail::Fail(msg.clone()));
                if self.config.policies.strict {
                    return Err(ControllerError::CommandFailed { at, error: msg });
                }
                Ok(Outcome::Failed(msg))
            }
        }
    }

    /// Runs outstanding refreshes up to `horizon`, closes the hold-energy
    /// intervals and returns the raw accounting and the event log.
    pub fn finish(mut self, horizon: SimTime) -> Result<(Tally, Vec<LogRecord>), ControllerError> {
        let end = horizon.max(self.now);
        self.run_refreshes(end)?;
        let mut subarrays = BTreeMap::new();
        for (id, mut o) in std::mem::take(&mut self.subarrays) {
            *o.tally.resident_ns.entry(o.array.mode()).or_default() += end - o.mode_since;
            o.tally.final_mode = o.array.mode();
            subarrays.insert(id, o.tally);
        }
        Ok((
            Tally {
                horizon_ns: end,
                subarrays,
                unattributed: self.unattributed,
            },
            self.log,
        ))
    }
}

pub struct RunOutput {
    pub report: SimReport,
    pub tally: Tally,
    pub log: Vec<LogRecord>,
}

/// End of the simulated span: the configured horizon or the last command.
pub fn horizon_end(trace: &[Command], config: &SimConfig) -> SimTime {
    trace.last().map_or(0, |c| c.at).max(config.horizon_ns)
}

fn check_sorted(trace: &[Command]) -> Result<(), ControllerError> {
    for w in trace.windows(2) {
        if w[1].at < w[0].at {
            return Err(ControllerError::OutOfOrder { at: w[1].at, now: w[0].at });
        }
    }
    Ok(())
}

fn run_group(
    trace: &[Command],
    config: &SimConfig,
    models: &ModelParams,
    ids: &[u32],
    horizon: SimTime,
) -> Result<(Tally, Vec<LogRecord>), ControllerError> {
    let mut ctl = Controller::for_subarrays(config, models, ids)?;
    for cmd in trace {
        ctl.submit(cmd)?;
    }
    ctl.finish(horizon)
}

/// Simulates a whole trace with one controller.
pub fn run(trace: &[Command], config: &SimConfig, models: &ModelParams) -> Result<RunOutput, ControllerError> {
    run_partitioned(trace, config, models, 1)
}

/// Splits the sub-arrays round-robin over `workers` independent controllers,
/// runs them on separate threads and merges the results. The report does
/// not depend on `workers`.
pub fn run_partitioned(
    trace: &[Command],
    config: &SimConfig,
    models: &ModelParams,
    workers: usize,
) -> Result<RunOutput, ControllerError> {
    config.validate()?;
    check_sorted(trace)?;
    let horizon = horizon_end(trace, config);
    let ids: Vec<u32> = config.subarray_specs().iter().map(|(id, _)| *id).collect();
    let workers = workers.clamp(1, ids.len().max(1));

    let (tally, log) = if workers == 1 {
        run_group(trace, config, models, &ids, horizon)?
    } else {
        let groups: Vec<Vec<u32>> = (0..workers)
            .map(|w| ids.iter().copied().filter(|id| *id as usize % workers == w).collect())
            .collect();
        let owner = |c: &Command| match c.subarray() {
            Some(s) if (s as usize) < ids.len() => s as usize % workers,
            _ => 0,
        };
        let traces: Vec<Vec<Command>> = (0..workers)
            .map(|w| trace.iter().copied().filter(|c| owner(c) == w).collect())
            .collect();
        let results: Vec<Result<(Tally, Vec<LogRecord>), ControllerError>> = std::thread::scope(|s| {
            let handles: Vec<_> = groups
                .iter()
                .zip(&traces)
                .map(|(g, t)| s.spawn(move || run_group(t, config, models, g, horizon)))
                .collect();
            handles.into_iter().map(|h| h.join().expect("worker panicked")).collect()
        });
        let mut merged: Option<Tally> = None;
        let mut log = Vec::new();
        for r in results {
            let (t, l) = r?;
            merged = Some(match merged {
                None => t,
                Some(m) => m.merge(t),
            });
            log.extend(l);
        }
        log.sort_by_key(|r| r.at);
        (merged.expect("at least one worker"), log)
    };
    let report = SimReport::build(&tally, config, models)?;
    Ok(RunOutput { report, tally, log })
}
