//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use amcsim::array::{Address, ArraySpec, CellOp, RetentionEnv, SubArray};
use amcsim::cell::{CellEventKind, CellMode, CellPolicy, Payload, Technology, Trit};
use amcsim::controller::{render_log, run, run_partitioned, Action, Command, FiloPolicy, SimConfig};
use amcsim::models::{BiasConfig, ModelParams};
use amcsim::rng::hash3;
use amcsim::workload::{gen_random, RandomParams};
use amcsim::Capacity;
use amcsim_cli::compare::{compare, Workload};
use amcsim_cli::RunConfig;

type Outcome = Result<String, String>;

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn models() -> ModelParams {
    ModelParams::default()
}

fn config(tech: Technology, mode: CellMode, rows: u32, cols: u32, count: u32) -> SimConfig {
    SimConfig {
        arrays: vec![ArraySpec {
            count,
            ..ArraySpec::new(tech, mode, rows, cols)
        }],
        temperature_c: 85.0,
        bias: if tech == Technology::Aug8T {
            BiasConfig::underdrive(-100)
        } else {
            BiasConfig::default()
        },
        ..SimConfig::default()
    }
}

fn retention_anchors() -> Outcome {
    let m = models();
    let cases = [
        (Technology::Aug8T, 85.0, -100, 25_000.0),
        (Technology::Aug8T, 25.0, 0, 250_000.0),
        (Technology::Aug8T, 25.0, -100, 1_000_000.0),
        (Technology::Aug7T, 85.0, 0, 4_000.0),
        (Technology::Aug7T, 25.0, 0, 50_000.0),
    ];
    for (tech, t, mv, want) in cases {
        let got = m.retention_time(tech, t, BiasConfig::underdrive(mv)).map_err(|e| e.to_string())?;
        check!(got == want, "{tech} {t} C {mv} mV: {got} != {want}");
    }
    Ok(format!("{} anchors exact", cases.len()))
}

fn read_at(tech: Technology, write: CellOp, read: CellOp, t: u64, policy: CellPolicy) -> (Option<Payload>, u64, Vec<CellEventKind>) {
    let mut c = config(tech, CellMode::Augmented, 1, 1, 1);
    c.policies.cell = policy;
    let a = Address::new(0, 0, 0);
    let out = run(&[Command::access(0, a, write), Command::access(t, a, read)], &c, &models()).unwrap();
    let result = out.log.iter().rev().find_map(|r| match r.detail {
        amcsim::controller::LogDetail::Exec { result, op, .. } if op == read => result,
        _ => None,
    });
    let events = out
        .log
        .iter()
        .filter_map(|r| match r.detail {
            amcsim::controller::LogDetail::Cell(k) => Some(k),
            _ => None,
        })
        .collect();
    (result, out.report.counters.retention_violations, events)
}

fn expiry_boundary() -> Outcome {
    let p = CellPolicy::default();
    let w = CellOp::WriteDram(true);
    let (r, v, _) = read_at(Technology::Aug8T, w, CellOp::ReadDram, 24_999, p);
    check!(r == Some(Payload::Bit(true)) && v == 0, "8T read at 24999 ns: {r:?}, {v} violations");
    let (r, v, _) = read_at(Technology::Aug8T, w, CellOp::ReadDram, 25_001, p);
    check!(r.is_none() && v == 1, "8T read at 25001 ns: {r:?}, {v} violations");
    for t in [Trit::PlusOne, Trit::MinusOne] {
        let w = CellOp::WriteTrit(t);
        let (r, v, _) = read_at(Technology::Aug7T, w, CellOp::ReadTrit, 3_999, p);
        check!(r == Some(Payload::Trit(t)) && v == 0, "7T {t} at 3999 ns: {r:?}");
        let (r, v, _) = read_at(Technology::Aug7T, w, CellOp::ReadTrit, 4_001, p);
        check!(r.is_none() && v == 1, "7T {t} at 4001 ns: {r:?}, {v} violations");
    }
    Ok("8T valid at 24999 ns, expired at 25001 ns; 7T at 3999/4001 ns".into())
}

/// Sums the energy fields of EXEC and REFRESH log lines.
fn log_energy_oracle(log: &str) -> f64 {
    let mut total = 0.0;
    for line in log.lines() {
        let mut f = line.split_whitespace();
        let kind = f.nth(1);
        if kind != Some("EXEC") && kind != Some("REFRESH") {
            continue;
        }
        let e = line
            .split_whitespace()
            .find_map(|x| x.strip_prefix("energy_fj="))
            .expect("priced line");
        total += e.parse::<f64>().expect("number");
    }
    total
}

fn random_params(k: u64) -> (RandomParams, SimConfig) {
    let h = |salt: u64| hash3(0xACCE, k, salt);
    let (tech, mode) = match h(0) % 5 {
        0 => (Technology::Std6T, CellMode::Normal),
        1 => (Technology::Aug8T, CellMode::Normal),
        2 | 3 => (Technology::Aug8T, CellMode::Augmented),
        _ => (Technology::Aug7T, CellMode::Augmented),
    };
    let rows = 1 + (h(1) % 8) as u32;
    let cols = 1 + (h(2) % 8) as u32;
    let count = 1 + (h(3) % 3) as u32;
    let p = RandomParams {
        array: ArraySpec {
            count,
            ..ArraySpec::new(tech, mode, rows, cols)
        },
        commands: 1 + (h(4) % 10_000) as usize,
        min_gap_ns: 0,
        max_gap_ns: [5, 50, 500, 5_000][(h(5) % 4) as usize],
        violation_rate: (h(6) % 100) as f64 / 100.0,
        mode_switch_rate: [0.0, 0.001, 0.02][(h(7) % 3) as usize],
        idle_rate: 0.01,
        dynamic_lifetime_ns: None,
    };
    let mut c = config(tech, mode, rows, cols, count);
    c.seed = k;
    c.policies.filo = if h(8) % 2 == 0 { FiloPolicy::Enforce } else { FiloPolicy::Warn };
    c.policies.refresh.enabled = h(9) % 2 == 0;
    c.policies.cell.silent_decay = h(10) % 3 == 0;
    c.variation_sigma = Some([0.0, 0.1][(h(11) % 2) as usize]);
    c.temperature_c = [85.0, 55.0, 25.0][(h(12) % 3) as usize];
    (p, c)
}

fn energy_oracle() -> Outcome {
    let m = models();
    let mut worst: f64 = 0.0;
    let mut commands = 0;
    for k in 0..1_000 {
        let (p, c) = random_params(k);
        let (g, _) = gen_random(&p, k).map_err(|e| e.to_string())?;
        commands += g.trace.commands.len();
        let out = run(&g.trace.commands, &c, &m).map_err(|e| e.to_string())?;
        let oracle = log_energy_oracle(&render_log(&out.log));
        let got = out.report.dynamic_energy_fj;
        let rel = if oracle == 0.0 { got.abs() } else { ((got - oracle) / oracle).abs() };
        check!(rel <= 1e-9, "trace {k}: report {got} vs log sum {oracle}");
        worst = worst.max(rel);
    }
    Ok(format!("1000 traces, {commands} commands, worst relative error {worst:e}"))
}

fn hold_energy() -> Outcome {
    let mut c = config(Technology::Std6T, CellMode::Normal, 64, 64, 1);
    c.horizon_ns = 1_000_000;
    let out = run(&[], &c, &models()).map_err(|e| e.to_string())?;
    // 0.448 uW x 4096 cells x 1 ms, in fJ (uW x ns = fJ)
    let want: f64 = 0.448 * 4096.0 * 1_000_000.0;
    let got = out.report.hold_energy_fj;
    let ulp = f64::from_bits(want.to_bits() + 1) - want;
    check!(out.report.dynamic_energy_fj == 0.0, "dynamic energy {}", out.report.dynamic_energy_fj);
    check!((got - want).abs() <= ulp, "hold {got} fJ vs {want} fJ");
    Ok(format!("{got} fJ = {} uJ", got * 1e-9))
}

fn filo_properties() -> Outcome {
    let m = models();
    let per = 100_000;
    let mut totals = [(0u64, 0u64); 2];
    for (pi, policy) in [FiloPolicy::Enforce, FiloPolicy::Warn].into_iter().enumerate() {
        for k in 0..10u64 {
            let p = RandomParams {
                array: ArraySpec {
                    count: 2,
                    ..ArraySpec::new(Technology::Aug8T, CellMode::Augmented, 8, 8)
                },
                commands: per,
                min_gap_ns: 0,
                max_gap_ns: 40,
                violation_rate: 0.3,
                mode_switch_rate: 0.001,
                idle_rate: 0.0,
                dynamic_lifetime_ns: Some(25_000),
            };
            let (g, stats) = gen_random(&p, 1000 + k).map_err(|e| e.to_string())?;
            let mut c = config(Technology::Aug8T, CellMode::Augmented, 8, 8, 2);
            c.policies.filo = policy;
            c.record_log = false;
            let r = run(&g.trace.commands, &c, &m).map_err(|e| e.to_string())?.report;
            let cn = r.counters;
            match policy {
                FiloPolicy::Enforce => {
                    check!(cn.dram_destroyed == 0, "seed {k}: {} destructions under Enforce", cn.dram_destroyed);
                    check!(
                        cn.rejected == stats.injected && cn.filo_violations == stats.injected,
                        "seed {k}: injected {} rejected {} detected {}",
                        stats.injected,
                        cn.rejected,
                        cn.filo_violations
                    );
                }
                _ => check!(
                    cn.dram_destroyed == cn.filo_violations,
                    "seed {k}: {} destructions vs {} violations",
                    cn.dram_destroyed,
                    cn.filo_violations
                ),
            }
            totals[pi].0 += cn.filo_violations;
            totals[pi].1 += cn.dram_destroyed;
        }
    }
    check!(totals[0].0 > 0 && totals[1].0 > 0, "no violations were injected");
    Ok(format!(
        "Enforce: {} rejected, 0 destroyed over 1e6 commands; Warn: {} detected = {} destroyed",
        totals[0].0, totals[1].0, totals[1].1
    ))
}

/// Independent replay of a trace with refresh off and FILO enforced.
/// Returns the number of reads or refreshes that find an expired datum.
fn expected_retention_violations(cmds: &[Command], tech: Technology, ret: f64, zero_factor: f64) -> u64 {
    #[derive(Default)]
    struct S {
        stat: bool,
        dynamic: Option<(u64, f64)>,
    }
    let mut cells: HashMap<Address, S> = HashMap::new();
    let mut violations = 0;
    for c in cmds {
        let Action::Access(a, op) = c.action else { continue };
        let s = cells.entry(a).or_default();
        let valid = |s: &S| s.dynamic.is_some_and(|(w, r)| ((c.at - w) as f64) < r);
        match op {
            CellOp::WriteDram(_) => s.dynamic = Some((c.at, ret)),
            CellOp::WriteTrit(t) => s.dynamic = Some((c.at, if t == Trit::Zero { ret * zero_factor } else { ret })),
            CellOp::ReadDram | CellOp::ReadTrit | CellOp::Refresh => {
                if s.dynamic.is_some() {
                    if valid(s) {
                        if op != CellOp::ReadDram {
                            s.dynamic = s.dynamic.map(|(_, r)| (c.at, r));
                        }
                    } else {
                        violations += 1;
                    }
                }
            }
            CellOp::WriteSram(_) | CellOp::ReadSram => {
                let live = tech == Technology::Aug8T && valid(s);
                if !live && (s.stat || op != CellOp::ReadSram) {
                    s.stat = true;
                    s.dynamic = None;
                }
            }
            CellOp::ReadSramPulsed => {}
        }
    }
    violations
}

fn refresh_sufficiency() -> Outcome {
    let m = models();
    let mut with_gaps = 0;
    let mut refreshes = 0;
    for k in 0..100u64 {
        let (tech, max_gap) = if k % 2 == 0 {
            (Technology::Aug8T, 4_000)
        } else {
            (Technology::Aug7T, 700)
        };
        let p = RandomParams {
            array: ArraySpec::new(tech, CellMode::Augmented, 4, 4),
            commands: 3_000,
            min_gap_ns: 0,
            max_gap_ns: max_gap,
            violation_rate: 0.0,
            mode_switch_rate: 0.0,
            idle_rate: 0.0,
            dynamic_lifetime_ns: None,
        };
        let (g, _) = gen_random(&p, 7_000 + k).map_err(|e| e.to_string())?;
        let mut c = config(tech, CellMode::Augmented, 4, 4, 1);
        c.record_log = false;
        c.policies.refresh.enabled = true;
        c.policies.refresh.margin = 0.8;
        c.variation_sigma = Some(0.0);
        let on = run(&g.trace.commands, &c, &m).map_err(|e| e.to_string())?.report;
        check!(
            on.counters.retention_violations == 0,
            "trace {k}: {} violations with refresh on",
            on.counters.retention_violations
        );
        refreshes += on.counters.scheduled_refreshes;

        c.policies.refresh.enabled = false;
        let off = run(&g.trace.commands, &c, &m).map_err(|e| e.to_string())?.report;
        let ret = m.retention_time(tech, c.temperature_c, c.bias).map_err(|e| e.to_string())?;
        let want = expected_retention_violations(&g.trace.commands, tech, ret, c.policies.cell.zero_retention_factor);
        check!(
            off.counters.retention_violations == want,
            "trace {k}: refresh off gave {} violations, replay expects {want}",
            off.counters.retention_violations
        );
        check!(want == 0 || off.counters.retention_violations >= 1, "trace {k}: missed expiry");
        with_gaps += u64::from(want > 0);
    }
    check!(with_gaps > 0, "no trace had an over-long read gap");
    Ok(format!(
        "0 violations on 100 traces with {refreshes} scheduled refreshes; refresh off: {with_gaps} traces with expired reads, counts match replay"
    ))
}

fn ternary_round_trip() -> Outcome {
    for t in Trit::ALL {
        let (r, v, _) = read_at(Technology::Aug7T, CellOp::WriteTrit(t), CellOp::ReadTrit, 1_000, CellPolicy::default());
        check!(r == Some(Payload::Trit(t)) && v == 0, "{t} read back as {r:?}");
    }
    let decay = CellPolicy {
        silent_decay: true,
        ..CellPolicy::default()
    };
    for t in [Trit::PlusOne, Trit::MinusOne] {
        let (r, v, ev) = read_at(Technology::Aug7T, CellOp::WriteTrit(t), CellOp::ReadTrit, 4_500, decay);
        check!(r == Some(Payload::Trit(Trit::Zero)), "expired {t} read as {r:?}");
        check!(v == 0 && ev == vec![CellEventKind::SilentDecayAlias], "expired {t}: events {ev:?}, {v} violations");
    }
    Ok("-1, 0, +1 round trip; expired +1/-1 alias to 0 with an event".into())
}

fn capacity_ratios() -> Outcome {
    let n = Capacity::of(Technology::Aug8T, CellMode::Normal, 64, 64);
    let a = Capacity::of(Technology::Aug8T, CellMode::Augmented, 64, 64);
    let ratio = a.binary_bits as f64 / n.binary_bits as f64;
    check!(ratio == 2.0, "8T ratio {ratio}");
    let t = Capacity::of(Technology::Aug7T, CellMode::Augmented, 64, 64);
    check!(t.cells == t.trits && t.conventional_6t_cells == 2 * t.trits, "7T capacity {t:?}");
    let rc = RunConfig {
        sim: config(Technology::Aug7T, CellMode::Augmented, 64, 64, 1),
        ..RunConfig::default()
    };
    let c = compare(Workload::Ternary, 1000, &rc, &models()).map_err(|e| e.to_string())?;
    let want = (2.0 * 2.07) / 0.99;
    check!((c.write_energy_ratio - want).abs() < 1e-12, "write ratio {} vs {want}", c.write_energy_ratio);
    check!(c.cell_ratio == 2.0, "cell ratio {}", c.cell_ratio);
    Ok(format!("8T 2.0x bits; 7T 1 vs 2 cells per trit; per-trit write ratio {}", c.write_energy_ratio))
}

fn determinism() -> Outcome {
    let m = models();
    let p = RandomParams {
        array: ArraySpec {
            count: 6,
            ..ArraySpec::new(Technology::Aug8T, CellMode::Augmented, 8, 8)
        },
        commands: 50_000,
        max_gap_ns: 200,
        violation_rate: 0.2,
        mode_switch_rate: 0.002,
        ..RandomParams::default()
    };
    let (g, _) = gen_random(&p, 99).map_err(|e| e.to_string())?;
    let mut c = config(Technology::Aug8T, CellMode::Augmented, 8, 8, 6);
    c.policies.refresh.enabled = true;
    c.variation_sigma = Some(0.2);
    c.resample_on_refresh = Some(true);
    c.seed = 42;
    let json = |w: usize| -> Result<String, String> {
        let out = run_partitioned(&g.trace.commands, &c, &m, w).map_err(|e| e.to_string())?;
        serde_json::to_string(&out.report).map_err(|e| e.to_string())
    };
    let first = json(1)?;
    check!(first == json(1)?, "repeated runs differ");
    for w in [2, 3, 6] {
        check!(first == json(w)?, "{w}-worker report differs from 1-worker report");
    }
    Ok(format!("byte-identical reports ({} bytes) for 1, 2, 3, 6 workers", first.len()))
}

fn mode_flush_soundness() -> Outcome {
    let m = models();
    let policy = CellPolicy::default();
    let mut transitions = 0;
    for k in 0..300u64 {
        let tech = Technology::ALL[(k % 3) as usize];
        let modes = tech.modes();
        let mode = modes[(hash3(k, 0, 0) % modes.len() as u64) as usize];
        let env = RetentionEnv::from_models(&m, 85.0, BiasConfig::default(), k);
        let mut s = SubArray::new(0, tech, mode, 4, 4, &m, &env).map_err(|e| e.to_string())?;
        let mut now = 0;
        for step in 0..400u64 {
            let h = hash3(k, 1, step);
            now += h % 300;
            if h % 7 == 0 {
                let target = modes[((h >> 8) % modes.len() as u64) as usize];
                s.set_mode(target, now).map_err(|e| e.to_string())?;
                transitions += 1;
            } else {
                let a = Address::new(0, ((h >> 8) % 4) as u32, ((h >> 12) % 4) as u32);
                let op = match (h >> 16) % 8 {
                    0 => CellOp::WriteSram((h >> 20) & 1 == 1),
                    1 => CellOp::ReadSram,
                    2 => CellOp::ReadSramPulsed,
                    3 => CellOp::WriteDram((h >> 20) & 1 == 1),
                    4 => CellOp::ReadDram,
                    5 => CellOp::WriteTrit(Trit::ALL[((h >> 20) % 3) as usize]),
                    6 => CellOp::ReadTrit,
                    _ => CellOp::Refresh,
                };
                let _ = s.access(a, op, now, &m, &policy);
            }
            for (a, cell) in s.cells() {
                cell.check_invariants()
                    .map_err(|e| format!("{tech} run {k} step {step} cell {a}: {e}"))?;
                check!(cell.mode == s.mode(), "cell {a} mode out of sync");
            }
        }
    }
    Ok(format!("{transitions} mode transitions over 300 random runs, invariants held"))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome, Option<Duration>); 10] = [
        ("retention anchors", retention_anchors, Some(Duration::from_secs(1))),
        ("retention expiry boundary", expiry_boundary, Some(Duration::from_secs(1))),
        ("energy oracle equivalence", energy_oracle, Some(Duration::from_secs(60))),
        ("hold energy", hold_energy, None),
        ("FILO properties", filo_properties, None),
        ("refresh sufficiency", refresh_sufficiency, None),
        ("ternary round trip", ternary_round_trip, None),
        ("capacity ratios", capacity_ratios, None),
        ("determinism and merge independence", determinism, None),
        ("mode-flush soundness", mode_flush_soundness, None),
    ];
    let mut failed = 0;
    for (i, (name, f, budget)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into()))
        });
        let took = start.elapsed();
        let result = match (result, budget) {
            (Ok(_), Some(b)) if took > *b => Err(format!("took {took:.2?}, budget {b:?}")),
            (r, _) => r,
        };
        match result {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail} [{took:.2?}]", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {:>2} {name}: {why} [{took:.2?}]", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
