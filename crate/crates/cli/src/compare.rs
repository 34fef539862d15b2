//! Same logical workload on 6T baseline arrays and on augmented arrays.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use amcsim::array::ArraySpec;
use amcsim::cell::{CellMode, Technology, Trit};
use amcsim::controller::{run, LogDetail, LogRecord, SimConfig, SimReport};
use amcsim::models::ModelParams;
use amcsim::rng::hash3;
use amcsim::{Address, CellOp, Command};
use anyhow::{ensure, Result};
use clap::ValueEnum;
use serde::Serialize;

use crate::RunConfig;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Workload {
    /// Write then read each trit once.
    Ternary,
    /// Two bits per item: one static, one dynamic on the 8T side.
    DualBit,
}

const COLS: u32 = 64;

#[derive(Clone, Debug, Serialize)]
pub struct Side {
    pub tech: Technology,
    pub mode: CellMode,
    pub cells: u64,
    pub dynamic_energy_fj: f64,
    pub hold_energy_fj: f64,
    pub write_energy_fj: f64,
    pub read_energy_fj: f64,
    pub write_energy_per_unit_fj: f64,
    pub read_energy_per_unit_fj: f64,
    pub mean_access_delay_ns: f64,
    /// Logical writes and reads recovered from the event log.
    pub logical_writes: u64,
    pub logical_reads: u64,
    pub physical_ops: BTreeMap<String, u64>,
    pub failed: u64,
}

#[derive(Clone, Debug, Serialize)]
pub struct Comparison {
    pub workload: Workload,
    pub items: u32,
    /// Logical units: trits, or bits for the dual-bit workload.
    pub units: u64,
    pub baseline: Side,
    pub augmented: Side,
    pub write_energy_ratio: f64,
    pub read_energy_ratio: f64,
    pub cell_ratio: f64,
    pub latency_ratio: f64,
}

fn rows_for(cells: u64) -> u32 {
    cells.div_ceil(COLS as u64).max(1) as u32
}

fn at(sub_cell: u64) -> Address {
    Address::new(0, (sub_cell / COLS as u64) as u32, (sub_cell % COLS as u64) as u32)
}

fn trit_of(seed: u64, i: u32) -> Trit {
    Trit::ALL[(hash3(seed, 0x7472_6974, i as u64) % 3) as usize]
}

fn bit_of(seed: u64, i: u32, lane: u64) -> bool {
    hash3(seed, 0x6269_7473 + lane, i as u64) & 1 == 1
}

/// Physical op counts per trace keyword in an event log.
pub fn op_counts(log: &[LogRecord]) -> BTreeMap<String, u64> {
    let mut m = BTreeMap::new();
    for r in log {
        if let LogDetail::Exec { op, .. } = r.detail {
            *m.entry(amcsim::controller::op_keyword(op).to_string()).or_default() += 1;
        }
    }
    m
}

struct Lowered {
    spec: ArraySpec,
    trace: Vec<Command>,
}

fn lower(workload: Workload, items: u32, seed: u64, augmented: bool) -> Lowered {
    let mut trace = Vec::new();
    let mut t = 0;
    match (workload, augmented) {
        (Workload::Ternary, true) => {
            for i in 0..items {
                let a = at(i as u64);
                trace.push(Command::access(t, a, CellOp::WriteTrit(trit_of(seed, i))));
                trace.push(Command::access(t + 1, a, CellOp::ReadTrit));
                t += 2;
            }
            Lowered {
                spec: ArraySpec::new(Technology::Aug7T, CellMode::Augmented, rows_for(items as u64), COLS),
                trace,
            }
        }
        (Workload::Ternary, false) => {
            for i in 0..items {
                let (q, qb) = trit_of(seed, i).node_encoding();
                let (a, b) = (at(2 * i as u64), at(2 * i as u64 + 1));
                trace.push(Command::access(t, a, CellOp::WriteSram(q)));
                trace.push(Command::access(t, b, CellOp::WriteSram(qb)));
                trace.push(Command::access(t + 1, a, CellOp::ReadSram));
                trace.push(Command::access(t + 1, b, CellOp::ReadSram));
                t += 2;
            }
            Lowered {
                spec: ArraySpec::new(Technology::Std6T, CellMode::Normal, rows_for(2 * items as u64), COLS),
                trace,
            }
        }
        (Workload::DualBit, true) => {
            for i in 0..items {
                let a = at(i as u64);
                trace.push(Command::access(t, a, CellOp::WriteSram(bit_of(seed, i, 0))));
                trace.push(Command::access(t + 1, a, CellOp::WriteDram(bit_of(seed, i, 1))));
                trace.push(Command::access(t + 2, a, CellOp::ReadDram));
                t += 3;
            }
            // Dropping the consumed dynamic bits makes the static reads
            // FILO-clean.
            trace.push(Command::set_mode(t, 0, CellMode::Normal));
            for i in 0..items {
                trace.push(Command::access(t + 1 + i as u64, at(i as u64), CellOp::ReadSram));
            }
            Lowered {
                spec: ArraySpec::new(Technology::Aug8T, CellMode::Augmented, rows_for(items as u64), COLS),
                trace,
            }
        }
        (Workload::DualBit, false) => {
            for i in 0..items {
                let (a, b) = (at(2 * i as u64), at(2 * i as u64 + 1));
                trace.push(Command::access(t, a, CellOp::WriteSram(bit_of(seed, i, 0))));
                trace.push(Command::access(t + 1, b, CellOp::WriteSram(bit_of(seed, i, 1))));
                trace.push(Command::access(t + 2, b, CellOp::ReadSram));
                t += 3;
            }
            for i in 0..items {
                trace.push(Command::access(t + 1 + i as u64, at(2 * i as u64), CellOp::ReadSram));
            }
            Lowered {
                spec: ArraySpec::new(Technology::Std6T, CellMode::Normal, rows_for(2 * items as u64), COLS),
                trace,
            }
        }
    }
}

fn side(workload: Workload, units: u64, spec: ArraySpec, report: &SimReport, log: &[LogRecord]) -> Side {
    let ops = op_counts(log);
    let n = |k: &str| ops.get(k).copied().unwrap_or(0);
    let (logical_writes, logical_reads) = match (workload, spec.tech) {
        (Workload::Ternary, Technology::Aug7T) => (n("WRITE_TRIT"), n("READ_TRIT")),
        // two cells per trit
        (Workload::Ternary, _) => (n("WRITE_SRAM") / 2, n("READ_SRAM") / 2),
        (Workload::DualBit, _) => (n("WRITE_SRAM") + n("WRITE_DRAM"), n("READ_SRAM") + n("READ_DRAM")),
    };
    let e = |k: &str| report.energy_by_op_fj.get(k).copied().unwrap_or(0.0);
    let write_energy_fj = e("sram_write") + e("dram_write") + e("trit_write");
    let read_energy_fj = e("sram_read") + e("dram_read") + e("trit_read");
    Side {
        tech: spec.tech,
        mode: spec.mode,
        cells: report.capacity.cells,
        dynamic_energy_fj: report.dynamic_energy_fj,
        hold_energy_fj: report.hold_energy_fj,
        write_energy_fj,
        read_energy_fj,
        write_energy_per_unit_fj: write_energy_fj / units as f64,
        read_energy_per_unit_fj: read_energy_fj / units as f64,
        mean_access_delay_ns: report.latency.mean_delay_ns,
        logical_writes,
        logical_reads,
        physical_ops: ops,
        failed: report.counters.failed,
    }
}

pub fn compare(workload: Workload, items: u32, rc: &RunConfig, models: &ModelParams) -> Result<Comparison> {
    ensure!(items > 0, "compare needs at least one item");
    let units = match workload {
        Workload::Ternary => items as u64,
        Workload::DualBit => 2 * items as u64,
    };
    let mut sides = Vec::new();
    for augmented in [false, true] {
        let l = lower(workload, items, rc.sim.seed, augmented);
        let config = SimConfig {
            arrays: vec![l.spec],
            record_log: true,
            ..rc.sim.clone()
        };
        let out = run(&l.trace, &config, models)?;
        sides.push(side(workload, units, l.spec, &out.report, &out.log));
    }
    let augmented = sides.pop().expect("two sides");
    let baseline = sides.pop().expect("two sides");
    ensure!(
        (baseline.logical_writes, baseline.logical_reads) == (augmented.logical_writes, augmented.logical_reads),
        "baseline and augmented runs saw different logical workloads"
    );
    // Cells actually holding data, not the padded array size.
    let data_cells = |aug: bool| match (workload, aug) {
        (_, true) => items as f64,
        (_, false) => 2.0 * items as f64,
    };
    Ok(Comparison {
        workload,
        items,
        units,
        write_energy_ratio: baseline.write_energy_per_unit_fj / augmented.write_energy_per_unit_fj,
        read_energy_ratio: baseline.read_energy_per_unit_fj / augmented.read_energy_per_unit_fj,
        cell_ratio: data_cells(false) / data_cells(true),
        latency_ratio: baseline.mean_access_delay_ns / augmented.mean_access_delay_ns,
        baseline,
        augmented,
    })
}

impl Comparison {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let unit = match self.workload {
            Workload::Ternary => "trit",
            Workload::DualBit => "bit",
        };
        let _ = writeln!(s, "workload {:?}, {} items, {} {unit}s", self.workload, self.items, self.units);
        let _ = writeln!(s, "{:<28}{:>18}{:>18}", "", "6T baseline", format!("{} {}", self.augmented.tech, self.augmented.mode));
        let mut row = |k: &str, a: String, b: String| {
            let _ = writeln!(s, "{k:<28}{a:>18}{b:>18}");
        };
        let (b, a) = (&self.baseline, &self.augmented);
        row("array cells", b.cells.to_string(), a.cells.to_string());
        row(&format!("write energy / {unit} (fJ)"), format!("{:.4}", b.write_energy_per_unit_fj), format!("{:.4}", a.write_energy_per_unit_fj));
        row(&format!("read energy / {unit} (fJ)"), format!("{:.4}", b.read_energy_per_unit_fj), format!("{:.4}", a.read_energy_per_unit_fj));
        row("dynamic energy (fJ)", format!("{:.4}", b.dynamic_energy_fj), format!("{:.4}", a.dynamic_energy_fj));
        row("hold energy (fJ)", format!("{:.4}", b.hold_energy_fj), format!("{:.4}", a.hold_energy_fj));
        row("mean access delay (ns)", format!("{:.4}", b.mean_access_delay_ns), format!("{:.4}", a.mean_access_delay_ns));
        row("logical writes", b.logical_writes.to_string(), a.logical_writes.to_string());
        row("logical reads", b.logical_reads.to_string(), a.logical_reads.to_string());
        let _ = writeln!(s, "write energy ratio (baseline/augmented): {}", self.write_energy_ratio);
        let _ = writeln!(s, "read energy ratio (baseline/augmented):  {}", self.read_energy_ratio);
        let _ = writeln!(s, "cell ratio (baseline/augmented):         {}", self.cell_ratio);
        let _ = writeln!(s, "latency ratio (baseline/augmented):      {}", self.latency_ratio);
        s
    }
}
