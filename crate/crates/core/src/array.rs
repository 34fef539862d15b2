//! Sub-arrays of cells sharing one technology and one operating mode.
//!
//! # Snapshot format
//!
//! [`SubArray::snapshot`] renders a header line followed by one line per row:
//!
//! ```text
//! subarray <id> tech=<tech> mode=<mode> rows=<r> cols=<c> t=<now>
//! <cell> <cell> ...
//! ```
//!
//! Each cell is two characters. The first is the static bit (`0`, `1`, or
//! `.` when absent). The second is the dynamic datum: `0`/`1` for a live bit,
//! `m`/`z`/`p` for a live trit (-1/0/+1), `x` for an expired datum and `.`
//! when nothing is stored.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cell::{CellError, CellEvent, CellMode, CellPolicy, CellState, Payload, Technology, Trit};
use crate::models::{sample_cell_retention, BiasConfig, DataPattern, ModelError, ModelParams, OpKind};
use crate::rng::cell_key;
use crate::SimTime;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Address {
    pub subarray: u32,
    pub row: u32,
    pub col: u32,
}

impl Address {
    pub fn new(subarray: u32, row: u32, col: u32) -> Self {
        Address { subarray, row, col }
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}:{}", self.subarray, self.row, self.col)
    }
}

impl FromStr for Address {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut it = s.split(':');
        let mut next = |what: &str| -> Result<u32, String> {
            it.next()
                .ok_or_else(|| format!("address `{s}` is missing the {what}"))?
                .parse()
                .map_err(|_| format!("address `{s}` has a bad {what}"))
        };
        let addr = Address::new(next("sub-array")?, next("row")?, next("column")?);
        if it.next().is_some() {
            return Err(format!("address `{s}` has too many fields"));
        }
        Ok(addr)
    }
}

/// Which datum of a cell an access targets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Plane {
    Static,
    Dynamic,
}

/// A cell-level access.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CellOp {
    WriteSram(bool),
    ReadSram,
    ReadSramPulsed,
    WriteDram(bool),
    ReadDram,
    WriteTrit(Trit),
    ReadTrit,
    Refresh,
}

impl CellOp {
    pub fn plane(self) -> Plane {
        match self {
            CellOp::WriteSram(_) | CellOp::ReadSram | CellOp::ReadSramPulsed => Plane::Static,
            _ => Plane::Dynamic,
        }
    }

    /// Static-plane accesses that open the path through the dynamic node.
    pub fn touches_static_plane(self) -> bool {
        self.plane() == Plane::Static
    }

    pub fn is_write(self) -> bool {
        matches!(self, CellOp::WriteSram(_) | CellOp::WriteDram(_) | CellOp::WriteTrit(_))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChargeKind {
    Op(OpKind),
    Refresh,
}

impl fmt::Display for ChargeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ChargeKind::Op(op) => op.fmt(f),
            ChargeKind::Refresh => f.write_str("refresh"),
        }
    }
}

/// What an access is billed as. Energy depends on (tech, mode, kind); delay
/// additionally on the data pattern.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Charge {
    pub mode: CellMode,
    pub kind: ChargeKind,
    pub pattern: DataPattern,
}

impl Charge {
    pub fn energy_fj(&self, models: &ModelParams, tech: Technology) -> Result<f64, ModelError> {
        match self.kind {
            ChargeKind::Op(op) => models.op_energy(tech, self.mode, op),
            ChargeKind::Refresh => models.refresh_energy(tech, self.mode),
        }
    }

    pub fn delay_ps(&self, models: &ModelParams, tech: Technology) -> Result<u64, ModelError> {
        match self.kind {
            ChargeKind::Op(op) => models.op_delay_ps(tech, self.mode, op, self.pattern),
            ChargeKind::Refresh => {
                let (r, w) = OpKind::refresh_pair(tech, self.mode)
                    .ok_or_else(|| ModelError::MissingEntry(format!("refresh on {tech} in {} mode", self.mode)))?;
                Ok(models.op_delay_ps(tech, self.mode, r, self.pattern)? + models.op_delay_ps(tech, self.mode, w, self.pattern)?)
            }
        }
    }
}

#[derive(Debug, Error)]
pub enum ArrayError {
    #[error(transparent)]
    Cell(#[from] CellError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("address {addr} out of range for a {rows}x{cols} sub-array")]
    AddressOutOfRange { addr: Address, rows: u32, cols: u32 },
    #[error("sub-array {0} not present")]
    NoSuchSubArray(u32),
    #[error("sub-array dimensions must be at least 1x1")]
    ZeroDimension,
    #[error("{0:?} plane is not addressable on a {1} cell in {2} mode")]
    IllegalPlane(Plane, Technology, CellMode),
}

/// A group of identical sub-arrays, as written in configs and trace headers.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ArraySpec {
    pub tech: Technology,
    pub mode: CellMode,
    pub rows: u32,
    pub cols: u32,
    #[serde(default = "one")]
    pub count: u32,
}

fn one() -> u32 {
    1
}

impl ArraySpec {
    pub fn new(tech: Technology, mode: CellMode, rows: u32, cols: u32) -> Self {
        ArraySpec {
            tech,
            mode,
            rows,
            cols,
            count: 1,
        }
    }

    pub fn cells(&self) -> u64 {
        self.rows as u64 * self.cols as u64
    }
}

/// Environment that determines per-cell retention.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetentionEnv {
    pub temperature_c: f64,
    pub bias: BiasConfig,
    pub sigma: f64,
    pub resample_on_refresh: bool,
    pub seed: u64,
}

impl RetentionEnv {
    pub fn from_models(models: &ModelParams, temperature_c: f64, bias: BiasConfig, seed: u64) -> Self {
        RetentionEnv {
            temperature_c,
            bias,
            sigma: models.variation.sigma,
            resample_on_refresh: models.variation.resample_on_refresh,
            seed,
        }
    }
}

/// Effective storage of a sub-array in its current mode.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Capacity {
    pub cells: u64,
    pub binary_bits: u64,
    pub trits: u64,
    /// Information content in bits (`trits * log2(3)` for ternary storage).
    pub bit_equivalent: f64,
    /// 6T cells a conventional array needs to hold the same data.
    pub conventional_6t_cells: u64,
}

impl Capacity {
    pub fn of(tech: Technology, mode: CellMode, rows: u32, cols: u32) -> Capacity {
        let cells = rows as u64 * cols as u64;
        let (binary_bits, trits) = match (tech, mode) {
            (_, CellMode::PowerGated) => (0, 0),
            (Technology::Aug8T, CellMode::Augmented) => (2 * cells, 0),
            (Technology::Aug7T, CellMode::Augmented) => (0, cells),
            _ => (cells, 0),
        };
        Capacity {
            cells,
            binary_bits,
            trits,
            bit_equivalent: binary_bits as f64 + trits as f64 * 3f64.log2(),
            // one 6T cell per bit, two per trit
            conventional_6t_cells: binary_bits + 2 * trits,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Access {
    pub result: Option<Payload>,
    pub events: Vec<CellEvent>,
    pub charge: Charge,
    pub energy_fj: f64,
    pub delay_ps: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SubArray {
    pub id: u32,
    pub tech: Technology,
    mode: CellMode,
    pub rows: u32,
    pub cols: u32,
    cells: Vec<CellState>,
    /// Sampled per-cell retention; empty for technologies without dynamic
    /// storage.
    retention_ns: Vec<f64>,
    nominal_retention_ns: Option<f64>,
    env: Option<RetentionEnv>,
}

impl SubArray {
    /// Builds an empty sub-array. Per-cell retention is pre-sampled from
    /// `(seed, id, row, col)`, so it does not depend on access order.
    pub fn new(
        id: u32,
        tech: Technology,
        mode: CellMode,
        rows: u32,
        cols: u32,
        models: &ModelParams,
        env: &RetentionEnv,
    ) -> Result<Self, ArrayError> {
        crate::cell::check_mode(tech, mode)?;
        if rows == 0 || cols == 0 {
            return Err(ArrayError::ZeroDimension);
        }
        let n = rows as usize * cols as usize;
        let cells = vec![CellState::new(tech, mode)?; n];
        let (nominal, retention_ns) = if tech.has_dynamic_storage() {
            let nominal = models.retention_time(tech, env.temperature_c, env.bias)?;
            let samples = (0..rows)
                .flat_map(|r| (0..cols).map(move |c| (r, c)))
                .map(|(r, c)| sample_cell_retention(nominal, env.sigma, env.seed, cell_key(id, r, c), 0))
                .collect();
            (Some(nominal), samples)
        } else {
            (None, Vec::new())
        };
        Ok(SubArray {
            id,
            tech,
            mode,
            rows,
            cols,
            cells,
            retention_ns,
            nominal_retention_ns: nominal,
            env: tech.has_dynamic_storage().then_some(*env),
        })
    }

    pub fn mode(&self) -> CellMode {
        self.mode
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn nominal_retention_ns(&self) -> Option<f64> {
        self.nominal_retention_ns
    }

    fn index(&self, addr: Address) -> Result<usize, ArrayError> {
        if addr.row >= self.rows || addr.col >= self.cols {
            return Err(ArrayError::AddressOutOfRange {
                addr,
                rows: self.rows,
                cols: self.cols,
            });
        }
        Ok(addr.row as usize * self.cols as usize + addr.col as usize)
    }

    pub fn check_address(&self, addr: Address) -> Result<(), ArrayError> {
        self.index(addr).map(|_| ())
    }

    pub fn cell(&self, addr: Address) -> Result<&CellState, ArrayError> {
        Ok(&self.cells[self.index(addr)?])
    }

    pub fn cells(&self) -> impl Iterator<Item = (Address, &CellState)> + '_ {
        let cols = self.cols;
        let id = self.id;
        self.cells
            .iter()
            .enumerate()
            .map(move |(i, c)| (Address::new(id, i as u32 / cols, i as u32 % cols), c))
    }

    /// The cell's sampled retention bound.
    pub fn cell_retention_ns(&self, addr: Address) -> Result<Option<f64>, ArrayError> {
        let i = self.index(addr)?;
        Ok(self.retention_ns.get(i).copied())
    }

    /// Flat index of a datum. Dynamic planes are addressable only on an 8T
    /// cell in Augmented mode.
    pub fn datum_index(&self, row: u32, col: u32, plane: Plane) -> Result<usize, ArrayError> {
        let i = self.index(Address::new(self.id, row, col))?;
        match plane {
            Plane::Static => Ok(2 * i),
            Plane::Dynamic if (self.tech, self.mode) == (Technology::Aug8T, CellMode::Augmented) => Ok(2 * i + 1),
            Plane::Dynamic => Err(ArrayError::IllegalPlane(plane, self.tech, self.mode)),
        }
    }

    pub fn effective_capacity(&self) -> Capacity {
        Capacity::of(self.tech, self.mode, self.rows, self.cols)
    }

    /// Switches every cell atomically. Returns the events of flushed cells.
    pub fn set_mode(&mut self, new_mode: CellMode, now: SimTime) -> Result<Vec<(Address, CellEvent)>, ArrayError> {
        crate::cell::check_mode(self.tech, new_mode)?;
        let (id, cols) = (self.id, self.cols);
        let mut out = Vec::new();
        for (i, cell) in self.cells.iter_mut().enumerate() {
            let addr = Address::new(id, i as u32 / cols, i as u32 % cols);
            out.extend(cell.set_mode(new_mode, now)?.into_iter().map(|e| (addr, e)));
        }
        self.mode = new_mode;
        Ok(out)
    }

    /// Applies one cell operation and prices it.
    pub fn access(
        &mut self,
        addr: Address,
        op: CellOp,
        now: SimTime,
        models: &ModelParams,
        policy: &CellPolicy,
    ) -> Result<Access, ArrayError> {
        let i = self.index(addr)?;
        let retention = self.retention_ns.get(i).copied();
        let resampled = match (op, self.env) {
            (CellOp::Refresh, Some(env)) if env.resample_on_refresh && env.sigma > 0.0 => {
                let nominal = self.nominal_retention_ns.unwrap_or_default();
                // counter 0 is the construction-time draw
                let r = sample_cell_retention(nominal, env.sigma, env.seed, cell_key(self.id, addr.row, addr.col), now + 1);
                Some(r)
            }
            _ => None,
        };
        let need_retention = || retention.ok_or(CellError::WrongMode {
            op: "dynamic write",
            tech: self.tech,
            mode: self.mode,
        });

        let mode = self.mode;
        let cell = &mut self.cells[i];
        let charge = |kind, pattern| Charge { mode, kind, pattern };
        let (result, events, charge) = match op {
            CellOp::WriteSram(b) => {
                let ev = cell.write_sram_bit(b, now)?;
                (None, ev, charge(ChargeKind::Op(OpKind::SramWrite), DataPattern::Any))
            }
            CellOp::ReadSram => {
                let (b, ev) = cell.read_sram_bit(now)?;
                (Some(Payload::Bit(b)), ev, charge(ChargeKind::Op(OpKind::SramRead), DataPattern::Any))
            }
            CellOp::ReadSramPulsed => {
                let (b, ev) = cell.read_sram_pulsed(now, policy.allow_pulsed_in_augmented)?;
                (Some(Payload::Bit(b)), ev, charge(ChargeKind::Op(OpKind::SramPulsedRead), DataPattern::Any))
            }
            CellOp::WriteDram(b) => {
                let r = need_retention()?;
                cell.write_dram_bit(b, now, r)?;
                (None, Vec::new(), charge(ChargeKind::Op(OpKind::DramWrite), DataPattern::Any))
            }
            CellOp::ReadDram => {
                let (b, ev) = cell.read_dram_bit(now, policy)?;
                (Some(Payload::Bit(b)), ev, charge(ChargeKind::Op(OpKind::DramRead), DataPattern::Any))
            }
            CellOp::WriteTrit(t) => {
                let r = need_retention()?;
                cell.write_trit(t, now, r, policy)?;
                (None, Vec::new(), charge(ChargeKind::Op(OpKind::TritWrite), DataPattern::of_trit(t)))
            }
            CellOp::ReadTrit => {
                let (t, ev) = cell.read_trit(now, policy)?;
                (Some(Payload::Trit(t)), ev, charge(ChargeKind::Op(OpKind::TritRead), DataPattern::of_trit(t)))
            }
            CellOp::Refresh => {
                cell.refresh(now, resampled, policy)?;
                let pattern = match cell.dynamic.map(|d| d.payload) {
                    Some(Payload::Trit(t)) => DataPattern::of_trit(t),
                    _ => DataPattern::Any,
                };
                (None, Vec::new(), charge(ChargeKind::Refresh, pattern))
            }
        };
        if resampled.is_some() {
            self.retention_ns[i] = resampled.unwrap_or_default();
        }
        Ok(Access {
            result,
            events,
            energy_fj: charge.energy_fj(models, self.tech)?,
            delay_ps: charge.delay_ps(models, self.tech)?,
            charge,
        })
    }

    /// Occupancy dump; see the module docs for the format.
    pub fn snapshot(&self, now: SimTime) -> String {
        let mut out = format!(
            "subarray {} tech={} mode={} rows={} cols={} t={}\n",
            self.id, self.tech, self.mode, self.rows, self.cols, now
        );
        for row in self.cells.chunks(self.cols as usize) {
            let line: Vec<String> = row
                .iter()
                .map(|c| {
                    let s = match c.static_bit {
                        None => '.',
                        Some(false) => '0',
                        Some(true) => '1',
                    };
                    let d = match c.dynamic {
                        None => '.',
                        Some(d) if !d.is_valid(now) => 'x',
                        Some(d) => match d.payload {
                            Payload::Bit(false) => '0',
                            Payload::Bit(true) => '1',
                            Payload::Trit(Trit::MinusOne) => 'm',
                            Payload::Trit(Trit::Zero) => 'z',
                            Payload::Trit(Trit::PlusOne) => 'p',
                        },
                    };
                    format!("{s}{d}")
                })
                .collect();
            let _ = writeln!(out, "{}", line.join(" "));
        }
        out
    }
}
