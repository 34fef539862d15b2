//! Trace files and synthetic trace generators.
//!
//! A trace is line-oriented text. The first non-comment line is the format
//! tag, followed by optional array lines, then commands in time order:
//!
//! ```text
//! AMCTRACE 1
//! ARRAY aug8t augmented 64x64 2
//! 100 WRITE_DRAM 0:3:7 1
//! 250 READ_DRAM 0:3:7
//! 300 SET_MODE 1 normal
//! 400 IDLE
//! ```
//!
//! `#` starts a comment. Bits are `0|1`, trits `-1|0|+1`, times integer ns.

use std::fmt::{self, Write as _};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::array::{Address, ArraySpec, CellOp};
use crate::cell::{CellMode, Technology, Trit};
use crate::controller::{op_keyword, Action, Command};
use crate::SimTime;

pub const TRACE_MAGIC: &str = "AMCTRACE";
pub const TRACE_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("line {line}: {reason}")]
pub struct TraceError {
    pub line: usize,
    pub reason: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TraceFile {
    /// Array configuration the trace was generated for; may be empty.
    pub arrays: Vec<ArraySpec>,
    pub commands: Vec<Command>,
}

fn parse_bit(s: &str) -> Result<bool, String> {
    match s {
        "0" => Ok(false),
        "1" => Ok(true),
        _ => Err(format!("invalid bit `{s}` (expected 0 or 1)")),
    }
}

fn parse_array(fields: &[&str]) -> Result<ArraySpec, String> {
    if !(3..=4).contains(&fields.len()) {
        return Err("expected `ARRAY <tech> <mode> <rows>x<cols> [count]`".into());
    }
    let tech: Technology = fields[0].parse()?;
    let mode: CellMode = fields[1].parse()?;
    let (r, c) = fields[2]
        .split_once('x')
        .ok_or_else(|| format!("bad dimensions `{}`", fields[2]))?;
    let rows: u32 = r.parse().map_err(|_| format!("bad row count `{r}`"))?;
    let cols: u32 = c.parse().map_err(|_| format!("bad column count `{c}`"))?;
    let count: u32 = match fields.get(3) {
        Some(n) => n.parse().map_err(|_| format!("bad sub-array count `{n}`"))?,
        None => 1,
    };
    if rows == 0 || cols == 0 || count == 0 {
        return Err("array dimensions and count must be positive".into());
    }
    if !tech.supports(mode) {
        return Err(format!("{tech} has no {mode} mode"));
    }
    Ok(ArraySpec {
        tech,
        mode,
        rows,
        cols,
        count,
    })
}

fn parse_command(fields: &[&str]) -> Result<Command, String> {
    let at: SimTime = fields[0].parse().map_err(|_| format!("bad time `{}`", fields[0]))?;
    let kind = *fields.get(1).ok_or("missing command kind")?;
    let args = &fields[2..];
    let arity = |n: usize| {
        if args.len() == n {
            Ok(())
        } else {
            Err(format!("{kind} takes {n} argument(s), got {}", args.len()))
        }
    };
    let action = match kind {
        "IDLE" => {
            arity(0)?;
            Action::Idle
        }
        "SET_MODE" => {
            arity(2)?;
            let subarray = args[0].parse().map_err(|_| format!("bad sub-array `{}`", args[0]))?;
            Action::SetMode {
                subarray,
                mode: args[1].parse()?,
            }
        }
        _ => {
            let op = match kind {
                "WRITE_SRAM" | "WRITE_DRAM" | "WRITE_TRIT" => {
                    arity(2)?;
                    match kind {
                        "WRITE_SRAM" => CellOp::WriteSram(parse_bit(args[1])?),
                        "WRITE_DRAM" => CellOp::WriteDram(parse_bit(args[1])?),
                        _ => CellOp::WriteTrit(args[1].parse::<Trit>()?),
                    }
                }
                "READ_SRAM" | "READ_SRAM_PULSED" | "READ_DRAM" | "READ_TRIT" | "REFRESH" => {
                    arity(1)?;
                    match kind {
                        "READ_SRAM" => CellOp::ReadSram,
                        "READ_SRAM_PULSED" => CellOp::ReadSramPulsed,
                        "READ_DRAM" => CellOp::ReadDram,
                        "READ_TRIT" => CellOp::ReadTrit,
                        _ => CellOp::Refresh,
                    }
                }
                other => return Err(format!("unknown command kind `{other}`")),
            };
            Action::Access(args[0].parse()?, op)
        }
    };
    Ok(Command { at, action })
}

/// Parses a trace, requiring non-decreasing timestamps.
pub fn parse_trace(text: &str) -> Result<TraceFile, TraceError> {
    let mut out = TraceFile::default();
    let mut seen_magic = false;
    let mut seen_command = false;
    let mut last_at = 0;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let err = |reason: String| TraceError { line, reason };
        let content = raw.split('#').next().unwrap_or("");
        let fields: Vec<&str> = content.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if !seen_magic {
            if fields.len() != 2 || fields[0] != TRACE_MAGIC {
                return Err(err(format!("expected `{TRACE_MAGIC} {TRACE_VERSION}` header")));
            }
            if fields[1] != TRACE_VERSION.to_string() {
                return Err(err(format!("unsupported trace version `{}`", fields[1])));
            }
            seen_magic = true;
            continue;
        }
        if fields[0] == "ARRAY" {
            if seen_command {
                return Err(err("ARRAY lines must precede commands".into()));
            }
            out.arrays.push(parse_array(&fields[1..]).map_err(err)?);
            continue;
        }
        let cmd = parse_command(&fields).map_err(err)?;
        if cmd.at < last_at {
            return Err(err(format!("time {} goes back from {last_at}", cmd.at)));
        }
        last_at = cmd.at;
        seen_command = true;
        out.commands.push(cmd);
    }
    if !seen_magic {
        return Err(TraceError {
            line: 0,
            reason: "empty trace (missing header)".into(),
        });
    }
    Ok(out)
}

/// One command in trace syntax, without a trailing newline.
pub fn format_command(cmd: &Command) -> String {
    match cmd.action {
        Action::Idle => format!("{} IDLE", cmd.at),
        Action::SetMode { subarray, mode } => format!("{} SET_MODE {subarray} {mode}", cmd.at),
        Action::Access(addr, op) => {
            let kw = op_keyword(op);
            match op {
                CellOp::WriteSram(b) | CellOp::WriteDram(b) => format!("{} {kw} {addr} {}", cmd.at, u8::from(b)),
                CellOp::WriteTrit(t) => format!("{} {kw} {addr} {t}", cmd.at),
                _ => format!("{} {kw} {addr}", cmd.at),
            }
        }
    }
}

impl fmt::Display for TraceFile {
    /// Canonical form: no comments, single spaces, explicit array counts.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{TRACE_MAGIC} {TRACE_VERSION}")?;
        for a in &self.arrays {
            writeln!(f, "ARRAY {} {} {}x{} {}", a.tech, a.mode, a.rows, a.cols, a.count)?;
        }
        let mut buf = String::new();
        for c in &self.commands {
            buf.clear();
            let _ = write!(buf, "{}", format_command(c));
            writeln!(f, "{buf}")?;
        }
        Ok(())
    }
}

pub fn serialize_trace(trace: &TraceFile) -> String {
    trace.to_string()
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
#[error("generator configuration error: {0}")]
pub struct GenError(pub String);

#[derive(Clone, Debug, PartialEq)]
pub struct Generated {
    pub trace: TraceFile,
    pub warnings: Vec<String>,
}

/// Weights held on the static planes of one 8T sub-array while activations
/// stream through the dynamic planes.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WeightStationaryParams {
    pub subarray: u32,
    pub rows: u32,
    pub cols: u32,
    pub weights: u32,
    pub activations: u32,
    /// Gap between consecutive commands, ns.
    pub inter_arrival_ns: SimTime,
    pub start_ns: SimTime,
    /// Dynamic retention used for the feasibility warning.
    pub retention_ns: Option<f64>,
}

impl Default for WeightStationaryParams {
    fn default() -> Self {
        WeightStationaryParams {
            subarray: 0,
            rows: 64,
            cols: 64,
            weights: 64,
            activations: 256,
            inter_arrival_ns: 10,
            start_ns: 0,
            retention_ns: None,
        }
    }
}

/// Ops per streamed activation: one dynamic write and one dynamic read.
pub const OPS_PER_ACTIVATION: u64 = 2;

/// Phase 1 writes every weight, phase 2 writes and immediately reads one
/// activation per step on the dynamic plane of a weight cell, phase 3
/// switches the sub-array back to Normal (dropping the leftover activations)
/// and reads the weights back. No static access ever meets a live dynamic
/// bit.
pub fn gen_weight_stationary(p: &WeightStationaryParams, seed: u64) -> Result<Generated, GenError> {
    let cells = p.rows as u64 * p.cols as u64;
    if cells == 0 {
        return Err(GenError("sub-array has no cells".into()));
    }
    if p.weights as u64 > cells {
        return Err(GenError(format!("{} weights do not fit in a {}x{} sub-array", p.weights, p.rows, p.cols)));
    }
    if p.activations > 0 && p.weights == 0 {
        return Err(GenError("activations need at least one weight cell".into()));
    }
    if p.inter_arrival_ns == 0 {
        return Err(GenError("inter-arrival time must be positive".into()));
    }
    let mut warnings = Vec::new();
    if let Some(r) = p.retention_ns {
        let window = p.inter_arrival_ns * OPS_PER_ACTIVATION;
        if window as f64 >= r {
            warnings.push(format!(
                "inter-arrival {} ns x {OPS_PER_ACTIVATION} ops >= retention {r} ns; activations will expire before they are read",
                p.inter_arrival_ns
            ));
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let addr = |i: u32| Address::new(p.subarray, i / p.cols, i % p.cols);
    let mut t = p.start_ns;
    let mut cmds = Vec::new();
    let mut push = |t: &mut SimTime, action: Action| {
        cmds.push(Command { at: *t, action });
        *t += p.inter_arrival_ns;
    };
    for i in 0..p.weights {
        push(&mut t, Action::Access(addr(i), CellOp::WriteSram(rng.gen())));
    }
    for k in 0..p.activations {
        let a = addr(k % p.weights);
        push(&mut t, Action::Access(a, CellOp::WriteDram(rng.gen())));
        push(&mut t, Action::Access(a, CellOp::ReadDram));
    }
    if p.activations > 0 {
        push(
            &mut t,
            Action::SetMode {
                subarray: p.subarray,
                mode: CellMode::Normal,
            },
        );
    }
    for i in 0..p.weights {
        push(&mut t, Action::Access(addr(i), CellOp::ReadSram));
    }
    let arrays = vec![ArraySpec {
        tech: Technology::Aug8T,
        mode: CellMode::Augmented,
        rows: p.rows,
        cols: p.cols,
        count: p.subarray + 1,
    }];
    Ok(Generated {
        trace: TraceFile { arrays, commands: cmds },
        warnings,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomParams {
    pub array: ArraySpec,
    pub commands: usize,
    pub min_gap_ns: SimTime,
    pub max_gap_ns: SimTime,
    /// Probability of emitting a FILO-violating static access whenever one
    /// is possible.
    pub violation_rate: f64,
    pub mode_switch_rate: f64,
    pub idle_rate: f64,
    /// How long the generator assumes a dynamic datum stays live. `None`
    /// treats it as live until a static access or mode switch removes it.
    pub dynamic_lifetime_ns: Option<SimTime>,
}

impl Default for RandomParams {
    fn default() -> Self {
        RandomParams {
            array: ArraySpec {
                count: 2,
                ..ArraySpec::new(Technology::Aug8T, CellMode::Augmented, 16, 16)
            },
            commands: 10_000,
            min_gap_ns: 0,
            max_gap_ns: 20,
            violation_rate: 0.0,
            mode_switch_rate: 0.001,
            idle_rate: 0.0,
            dynamic_lifetime_ns: None,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GenStats {
    /// Steps at which a FILO violation could have been emitted.
    pub eligible: u64,
    pub injected: u64,
}

#[derive(Clone, Copy, Default)]
struct ShadowCell {
    has_static: bool,
    dyn_at: Option<SimTime>,
}

struct ShadowSub {
    mode: CellMode,
    cells: Vec<ShadowCell>,
    /// Cells holding a dynamic datum, with positions for O(1) removal.
    dynamic: Vec<u32>,
    pos: Vec<Option<usize>>,
}

impl ShadowSub {
    fn add_dynamic(&mut self, i: u32, at: SimTime) {
        self.cells[i as usize].dyn_at = Some(at);
        if self.pos[i as usize].is_none() {
            self.pos[i as usize] = Some(self.dynamic.len());
            self.dynamic.push(i);
        }
    }

    fn drop_dynamic(&mut self, i: u32) {
        self.cells[i as usize].dyn_at = None;
        if let Some(p) = self.pos[i as usize].take() {
            self.dynamic.swap_remove(p);
            if let Some(&moved) = self.dynamic.get(p) {
                self.pos[moved as usize] = Some(p);
            }
        }
    }
}

/// Random commands that the cells accept in their current mode, with FILO
/// violations injected at `violation_rate`. Deterministic per seed.
pub fn gen_random(p: &RandomParams, seed: u64) -> Result<(Generated, GenStats), GenError> {
    let a = p.array;
    if a.rows == 0 || a.cols == 0 || a.count == 0 {
        return Err(GenError("array has no cells".into()));
    }
    if !a.tech.supports(a.mode) {
        return Err(GenError(format!("{} has no {} mode", a.tech, a.mode)));
    }
    if p.min_gap_ns > p.max_gap_ns {
        return Err(GenError("min_gap_ns exceeds max_gap_ns".into()));
    }
    for (name, r) in [
        ("violation_rate", p.violation_rate),
        ("mode_switch_rate", p.mode_switch_rate),
        ("idle_rate", p.idle_rate),
    ] {
        if !(0.0..=1.0).contains(&r) {
            return Err(GenError(format!("{name} must be in [0, 1]")));
        }
    }
    let n = (a.rows * a.cols) as usize;
    let mut subs: Vec<ShadowSub> = (0..a.count)
        .map(|_| ShadowSub {
            mode: a.mode,
            cells: vec![ShadowCell::default(); n],
            dynamic: Vec::new(),
            pos: vec![None; n],
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = GenStats::default();
    let mut cmds = Vec::with_capacity(p.commands);
    let mut t: SimTime = 0;
    let lifetime = p.dynamic_lifetime_ns;
    let live = |c: &ShadowCell, now: SimTime| match (c.dyn_at, lifetime) {
        (Some(at), Some(l)) => now - at < l,
        (Some(_), None) => true,
        (None, _) => false,
    };
    let addr_of = |s: u32, i: u32| Address::new(s, i / a.cols, i % a.cols);

    for k in 0..p.commands {
        if k > 0 {
            t += rng.gen_range(p.min_gap_ns..=p.max_gap_ns);
        }
        if rng.gen_bool(p.idle_rate) {
            cmds.push(Command { at: t, action: Action::Idle });
            continue;
        }
        let s = rng.gen_range(0..a.count);
        let sub = &mut subs[s as usize];
        let modes = a.tech.modes();
        if modes.len() > 1 && rng.gen_bool(p.mode_switch_rate) {
            let mode = modes[rng.gen_range(0..modes.len())];
            if mode != sub.mode {
                let leaving_normal = sub.mode == CellMode::Normal;
                for i in sub.dynamic.clone() {
                    sub.drop_dynamic(i);
                }
                if a.tech == Technology::Aug7T && leaving_normal {
                    sub.cells.iter_mut().for_each(|c| c.has_static = false);
                }
                sub.mode = mode;
            }
            cmds.push(Command::set_mode(t, s, mode));
            continue;
        }

        let aug8 = (a.tech, sub.mode) == (Technology::Aug8T, CellMode::Augmented);
        if aug8 && !sub.dynamic.is_empty() {
            let mut target = None;
            for _ in 0..16 {
                let i = sub.dynamic[rng.gen_range(0..sub.dynamic.len())];
                if live(&sub.cells[i as usize], t) {
                    target = Some(i);
                    break;
                }
            }
            if let Some(i) = target {
                stats.eligible += 1;
                if rng.gen_bool(p.violation_rate) {
                    stats.injected += 1;
                    let op = if sub.cells[i as usize].has_static && rng.gen_bool(0.5) {
                        CellOp::ReadSram
                    } else {
                        CellOp::WriteSram(rng.gen())
                    };
                    // The shadow assumes the controller rejects it.
                    cmds.push(Command::access(t, addr_of(s, i), op));
                    continue;
                }
            }
        }

        let i = rng.gen_range(0..n as u32);
        let cell = sub.cells[i as usize];
        let addr = addr_of(s, i);
        let op = match (a.tech, sub.mode) {
            (_, CellMode::PowerGated) => None,
            (Technology::Std6T, _) | (Technology::Aug7T, CellMode::Normal) | (Technology::Aug8T, CellMode::Normal) => {
                let pulsed = a.tech == Technology::Aug8T && rng.gen_bool(0.25);
                Some(if cell.has_static && rng.gen_bool(0.5) {
                    if pulsed {
                        CellOp::ReadSramPulsed
                    } else {
                        CellOp::ReadSram
                    }
                } else {
                    CellOp::WriteSram(rng.gen())
                })
            }
            (Technology::Aug8T, _) => {
                let r = rng.gen_range(0..10u32);
                Some(if cell.dyn_at.is_some() && r < 4 {
                    if r == 0 {
                        CellOp::Refresh
                    } else {
                        CellOp::ReadDram
                    }
                } else if r < 7 || live(&cell, t) {
                    CellOp::WriteDram(rng.gen())
                } else if cell.has_static && r < 9 {
                    CellOp::ReadSram
                } else {
                    CellOp::WriteSram(rng.gen())
                })
            }
            (Technology::Aug7T, _) => {
                let r = rng.gen_range(0..10u32);
                Some(if cell.dyn_at.is_some() && r < 5 {
                    if r == 0 {
                        CellOp::Refresh
                    } else {
                        CellOp::ReadTrit
                    }
                } else {
                    CellOp::WriteTrit(Trit::ALL[rng.gen_range(0..3)])
                })
            }
        };
        match op {
            None => cmds.push(Command { at: t, action: Action::Idle }),
            Some(op) => {
                match op {
                    CellOp::WriteSram(_) | CellOp::ReadSram | CellOp::ReadSramPulsed => {
                        if op.is_write() {
                            sub.cells[i as usize].has_static = true;
                        }
                        sub.drop_dynamic(i);
                    }
                    CellOp::WriteDram(_) | CellOp::WriteTrit(_) => sub.add_dynamic(i, t),
                    // an expired datum fails instead of being rewritten
                    CellOp::Refresh | CellOp::ReadTrit if live(&cell, t) => sub.add_dynamic(i, t),
                    _ => {}
                }
                cmds.push(Command::access(t, addr, op));
            }
        }
    }
    Ok((
        Generated {
            trace: TraceFile {
                arrays: vec![a],
                commands: cmds,
            },
            warnings: Vec::new(),
        },
        stats,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_example_line() {
        let t = parse_trace("AMCTRACE 1\n100 WRITE_DRAM 0:3:7 1\n").unwrap();
        assert_eq!(
            t.commands,
            vec![Command::access(100, Address::new(0, 3, 7), CellOp::WriteDram(true))]
        );
    }

    #[test]
    fn reports_time_regression_line() {
        let e = parse_trace("AMCTRACE 1\n# c\n10 IDLE\n5 IDLE\n").unwrap_err();
        assert_eq!(e.line, 4);
    }

    #[test]
    fn rejects_malformed_lines() {
        for (body, line) in [
            ("1 WRITE_SRAM 0:0:0 2", 2),
            ("1 WRITE_TRIT 0:0:0 1", 2),
            ("1 FROB 0:0:0", 2),
            ("1 READ_SRAM 0:0", 2),
            ("x IDLE", 2),
            ("1 READ_SRAM 0:0:0 1", 2),
            ("1 SET_MODE 0 sideways", 2),
        ] {
            let e = parse_trace(&format!("AMCTRACE 1\n{body}\n")).unwrap_err();
            assert_eq!(e.line, line, "{body}");
        }
        assert_eq!(parse_trace("1 IDLE\n").unwrap_err().line, 1);
        assert!(parse_trace("AMCTRACE 2\n").is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let text = "AMCTRACE   1\nARRAY aug7t augmented 4x4 # one\n\n 5 WRITE_TRIT 0:1:2 -1\n6  READ_TRIT 0:1:2\n7 SET_MODE 0 power_gated\n8 IDLE\n";
        let t = parse_trace(text).unwrap();
        let canon = serialize_trace(&t);
        assert_eq!(
            canon,
            "AMCTRACE 1\nARRAY aug7t augmented 4x4 1\n5 WRITE_TRIT 0:1:2 -1\n6 READ_TRIT 0:1:2\n7 SET_MODE 0 power_gated\n8 IDLE\n"
        );
        assert_eq!(parse_trace(&canon).unwrap(), t);
    }

    #[test]
    fn weight_stationary_shape() {
        let p = WeightStationaryParams {
            rows: 4,
            cols: 4,
            weights: 5,
            activations: 0,
            ..Default::default()
        };
        let g = gen_weight_stationary(&p, 1).unwrap();
        assert_eq!(g.trace.commands.len(), 10);
        assert!(g.trace.commands[..5]
            .iter()
            .all(|c| matches!(c.action, Action::Access(_, CellOp::WriteSram(_)))));
        assert!(g.trace.commands[5..]
            .iter()
            .all(|c| matches!(c.action, Action::Access(_, CellOp::ReadSram))));
        let too_big = WeightStationaryParams { weights: 17, ..p };
        assert!(gen_weight_stationary(&too_big, 1).is_err());
    }

    #[test]
    fn weight_stationary_warns_on_slow_stream() {
        let p = WeightStationaryParams {
            inter_arrival_ns: 20_000,
            retention_ns: Some(25_000.0),
            ..Default::default()
        };
        assert_eq!(gen_weight_stationary(&p, 0).unwrap().warnings.len(), 1);
    }

    #[test]
    fn random_is_deterministic_and_sorted() {
        let p = RandomParams {
            violation_rate: 0.3,
            ..Default::default()
        };
        let (a, sa) = gen_random(&p, 9).unwrap();
        let (b, sb) = gen_random(&p, 9).unwrap();
        assert_eq!(serialize_trace(&a.trace), serialize_trace(&b.trace));
        assert_eq!(sa, sb);
        assert!(a.trace.commands.windows(2).all(|w| w[0].at <= w[1].at));
        assert!(sa.injected > 0);
        let (c, _) = gen_random(&p, 10).unwrap();
        assert_ne!(a.trace, c.trace);
    }
}
