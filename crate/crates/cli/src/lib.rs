//! Command-line driver: configuration resolution, subcommands and report
//! files.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use amcsim::array::{ArraySpec, Capacity};
use amcsim::cell::{CellMode, Technology};
use amcsim::controller::{run_partitioned, render_log, Controller, FiloCheck, Outcome, SimConfig, SimReport};
use amcsim::models::{ModelParams, DEFAULT_MODEL_TOML};
use amcsim::workload::{
    gen_random, gen_weight_stationary, parse_trace, serialize_trace, RandomParams, TraceFile, WeightStationaryParams,
};
use amcsim::{Address, CellOp, FiloPolicy};
use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub mod compare;

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_VIOLATIONS: i32 = 2;

pub const MODEL_ENV: &str = "AMCSIM_MODEL_FILE";

#[derive(Parser, Debug)]
#[command(name = "amcsim", version, about = "Behavioral simulator for dual-mode augmented SRAM arrays")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Cmd,
}

#[derive(Subcommand, Debug)]
pub enum Cmd {
    /// Run a trace and write the report and event log.
    Simulate {
        trace: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        /// Directory for report.json and events.log.
        #[arg(long, default_value = ".")]
        out_dir: PathBuf,
    },
    /// Print effective capacity per mode.
    Capacity {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long)]
        json: bool,
    },
    /// Run one logical workload on 6T baseline arrays and on augmented arrays.
    Compare {
        #[command(flatten)]
        config: ConfigArgs,
        #[arg(long, value_enum, default_value_t = compare::Workload::Ternary)]
        workload: compare::Workload,
        /// Logical data items (trits or bit pairs).
        #[arg(long, default_value_t = 1024)]
        items: u32,
        #[arg(long)]
        json: bool,
    },
    /// Write a synthetic trace.
    GenTrace {
        #[arg(value_enum)]
        generator: Generator,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
        #[command(flatten)]
        gen: GenArgs,
    },
    /// Lint a trace without simulating it.
    ValidateTrace {
        trace: PathBuf,
        #[command(flatten)]
        config: ConfigArgs,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Generator {
    WeightStationary,
    Random,
}

/// Overrides shared by every subcommand. Unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Args, Debug, Default, Clone)]
pub struct ConfigArgs {
    /// TOML run configuration.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model parameter file (default: $AMCSIM_MODEL_FILE, else bundled).
    #[arg(long)]
    pub model: Option<PathBuf>,
    #[arg(long)]
    pub tech: Option<Technology>,
    #[arg(long)]
    pub mode: Option<CellMode>,
    #[arg(long)]
    pub rows: Option<u32>,
    #[arg(long)]
    pub cols: Option<u32>,
    /// Number of identical sub-arrays.
    #[arg(long)]
    pub count: Option<u32>,
    #[arg(long, allow_hyphen_values = true)]
    pub temperature: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub wl_underdrive_mv: Option<i32>,
    #[arg(long)]
    pub wl_boost_mv: Option<i32>,
    #[arg(long)]
    pub filo: Option<FiloPolicy>,
    #[arg(long)]
    pub refresh: Option<bool>,
    #[arg(long)]
    pub refresh_margin: Option<f64>,
    #[arg(long)]
    pub controller_knows_variation: Option<bool>,
    #[arg(long)]
    pub silent_decay: Option<bool>,
    #[arg(long)]
    pub zero_retention_factor: Option<f64>,
    #[arg(long)]
    pub allow_pulsed_override: Option<bool>,
    #[arg(long)]
    pub strict: Option<bool>,
    /// Lognormal sigma of per-cell retention.
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub resample_on_refresh: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub horizon_ns: Option<u64>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub no_log: bool,
}

#[derive(Args, Debug, Default, Clone)]
pub struct GenArgs {
    #[arg(long)]
    pub subarray: Option<u32>,
    #[arg(long)]
    pub weights: Option<u32>,
    #[arg(long)]
    pub activations: Option<u32>,
    #[arg(long)]
    pub inter_arrival_ns: Option<u64>,
    #[arg(long)]
    pub commands: Option<usize>,
    #[arg(long)]
    pub min_gap_ns: Option<u64>,
    #[arg(long)]
    pub max_gap_ns: Option<u64>,
    #[arg(long)]
    pub violation_rate: Option<f64>,
    #[arg(long)]
    pub mode_switch_rate: Option<f64>,
    #[arg(long)]
    pub idle_rate: Option<f64>,
    #[arg(long)]
    pub lifetime_ns: Option<u64>,
}

/// Resolved run configuration, echoed into every report.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub model_file: Option<PathBuf>,
    /// Parallelism only; never changes results and is not echoed.
    #[serde(skip_serializing)]
    pub workers: Option<usize>,
    #[serde(flatten)]
    pub sim: SimConfig,
}

pub const DEFAULT_ROWS: u32 = 64;
pub const DEFAULT_COLS: u32 = 64;

pub fn default_array() -> ArraySpec {
    ArraySpec::new(Technology::Aug8T, CellMode::Augmented, DEFAULT_ROWS, DEFAULT_COLS)
}

impl ConfigArgs {
    fn touches_array(&self) -> bool {
        self.tech.is_some() || self.mode.is_some() || self.rows.is_some() || self.cols.is_some() || self.count.is_some()
    }

    /// Flags over file over `fallback_arrays` over defaults.
    pub fn resolve(&self, fallback_arrays: &[ArraySpec]) -> Result<RunConfig> {
        let mut rc = match &self.config {
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
                toml::from_str::<RunConfig>(&text).with_context(|| format!("parsing config {}", p.display()))?
            }
            None => RunConfig::default(),
        };
        if rc.sim.arrays.is_empty() {
            rc.sim.arrays = fallback_arrays.to_vec();
        }
        if self.touches_array() {
            let base = rc.sim.arrays.first().copied().unwrap_or_else(default_array);
            let tech = self.tech.unwrap_or(base.tech);
            let mode = self.mode.unwrap_or(if tech.supports(base.mode) { base.mode } else { CellMode::Normal });
            rc.sim.arrays = vec![ArraySpec {
                tech,
                mode,
                rows: self.rows.unwrap_or(base.rows),
                cols: self.cols.unwrap_or(base.cols),
                count: self.count.unwrap_or(base.count),
            }];
        }
        if rc.sim.arrays.is_empty() {
            rc.sim.arrays = vec![default_array()];
        }
        if self.model.is_some() {
            rc.model_file = self.model.clone();
        }
        if rc.model_file.is_none() {
            rc.model_file = std::env::var_os(MODEL_ENV).filter(|v| !v.is_empty()).map(PathBuf::from);
        }
        let s = &mut rc.sim;
        macro_rules! set {
            ($flag:ident => $($dst:tt)+) => {
                if let Some(v) = self.$flag {
                    $($dst)+ = v;
                }
            };
        }
        set!(temperature => s.temperature_c);
        set!(wl_underdrive_mv => s.bias.wl_underdrive_mv);
        set!(wl_boost_mv => s.bias.wl_boost_mv);
        set!(filo => s.policies.filo);
        set!(refresh => s.policies.refresh.enabled);
        set!(refresh_margin => s.policies.refresh.margin);
        set!(controller_knows_variation => s.policies.refresh.controller_knows_variation);
        set!(silent_decay => s.policies.cell.silent_decay);
        set!(zero_retention_factor => s.policies.cell.zero_retention_factor);
        set!(allow_pulsed_override => s.policies.cell.allow_pulsed_in_augmented);
        set!(strict => s.policies.strict);
        set!(seed => s.seed);
        set!(horizon_ns => s.horizon_ns);
        if self.sigma.is_some() {
            s.variation_sigma = self.sigma;
        }
        if self.resample_on_refresh.is_some() {
            s.resample_on_refresh = self.resample_on_refresh;
        }
        if self.no_log {
            s.record_log = false;
        }
        if self.workers.is_some() {
            rc.workers = self.workers;
        }
        s.validate()?;
        Ok(rc)
    }
}

pub struct LoadedModel {
    pub params: ModelParams,
    pub source: String,
    pub sha256: String,
}

pub fn load_model(path: Option<&Path>) -> Result<LoadedModel> {
    let (text, source) = match path {
        Some(p) => (
            std::fs::read_to_string(p).with_context(|| format!("reading model file {}", p.display()))?,
            p.display().to_string(),
        ),
        None => (DEFAULT_MODEL_TOML.to_string(), "bundled".to_string()),
    };
    let params = ModelParams::from_toml_str(&text).with_context(|| format!("loading model {source}"))?;
    Ok(LoadedModel {
        params,
        source,
        sha256: hex::encode(Sha256::digest(text.as_bytes())),
    })
}

/// JSON written next to the event log.
#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ReportFile {
    pub model_source: String,
    pub model_sha256: String,
    pub run_config: RunConfig,
    pub report: SimReport,
}

pub fn read_trace(path: &Path) -> Result<TraceFile> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading trace {}", path.display()))?;
    parse_trace(&text).with_context(|| format!("parsing trace {}", path.display()))
}

pub struct SimulateOutput {
    pub file: ReportFile,
    pub json: String,
    pub log: String,
}

pub fn simulate(trace: &TraceFile, rc: &RunConfig, model: &LoadedModel) -> Result<SimulateOutput> {
    let out = run_partitioned(&trace.commands, &rc.sim, &model.params, rc.workers.unwrap_or(1))?;
    let file = ReportFile {
        model_source: model.source.clone(),
        model_sha256: model.sha256.clone(),
        run_config: rc.clone(),
        report: out.report,
    };
    let json = serde_json::to_string_pretty(&file)? + "\n";
    Ok(SimulateOutput {
        file,
        json,
        log: render_log(&out.log),
    })
}

fn cmd_simulate(trace_path: &Path, args: &ConfigArgs, out_dir: &Path) -> Result<i32> {
    let trace = read_trace(trace_path)?;
    let rc = args.resolve(&trace.arrays)?;
    let model = load_model(rc.model_file.as_deref())?;
    let out = simulate(&trace, &rc, &model)?;
    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    std::fs::write(out_dir.join("report.json"), &out.json)?;
    std::fs::write(out_dir.join("events.log"), &out.log)?;
    print!("{}", out.file.report.summary());
    Ok(if out.file.report.has_violations() {
        EXIT_VIOLATIONS
    } else {
        EXIT_OK
    })
}

#[derive(Debug, Serialize)]
pub struct CapacityRow {
    pub tech: Technology,
    pub rows: u32,
    pub cols: u32,
    pub by_mode: Vec<(CellMode, Capacity)>,
    /// Augmented over Normal bit-equivalent capacity, if the tech has both.
    pub augmented_ratio: Option<f64>,
}

pub fn capacity_rows(rc: &RunConfig) -> Vec<CapacityRow> {
    rc.sim
        .arrays
        .iter()
        .map(|a| {
            let by_mode: Vec<_> = a
                .tech
                .modes()
                .iter()
                .map(|&m| (m, Capacity::of(a.tech, m, a.rows, a.cols)))
                .collect();
            let get = |m| by_mode.iter().find(|(x, _)| *x == m).map(|(_, c)| c.bit_equivalent);
            let augmented_ratio = match (get(CellMode::Augmented), get(CellMode::Normal)) {
                (Some(aug), Some(norm)) if norm > 0.0 => Some(aug / norm),
                _ => None,
            };
            CapacityRow {
                tech: a.tech,
                rows: a.rows,
                cols: a.cols,
                by_mode,
                augmented_ratio,
            }
        })
        .collect()
}

pub fn render_capacity(rows: &[CapacityRow]) -> String {
    let mut s = String::new();
    for r in rows {
        let _ = writeln!(s, "{} {}x{}", r.tech, r.rows, r.cols);
        let _ = writeln!(
            s,
            "  {:<12}{:>8}{:>12}{:>8}{:>16}{:>12}",
            "mode", "cells", "bits", "trits", "bit-equiv", "6T cells"
        );
        for (m, c) in &r.by_mode {
            let _ = writeln!(
                s,
                "  {:<12}{:>8}{:>12}{:>8}{:>16.2}{:>12}",
                m.as_str(),
                c.cells,
                c.binary_bits,
                c.trits,
                c.bit_equivalent,
                c.conventional_6t_cells
            );
        }
        if let Some(q) = r.augmented_ratio {
            let _ = writeln!(s, "  augmented/normal ratio: {q}");
        }
    }
    s
}

fn gen_trace(generator: Generator, out: &Path, args: &ConfigArgs, g: &GenArgs) -> Result<i32> {
    let rc = args.resolve(&[])?;
    let model = load_model(rc.model_file.as_deref())?;
    let seed = rc.sim.seed;
    let array = rc.sim.arrays[0];
    let generated = match generator {
        Generator::WeightStationary => {
            if array.tech != Technology::Aug8T {
                bail!("the weight-stationary generator targets aug8t arrays");
            }
            let d = WeightStationaryParams::default();
            let p = WeightStationaryParams {
                subarray: g.subarray.unwrap_or(d.subarray),
                rows: array.rows,
                cols: array.cols,
                weights: g.weights.unwrap_or(d.weights),
                activations: g.activations.unwrap_or(d.activations),
                inter_arrival_ns: g.inter_arrival_ns.unwrap_or(d.inter_arrival_ns),
                start_ns: 0,
                retention_ns: Some(model.params.retention_time(Technology::Aug8T, rc.sim.temperature_c, rc.sim.bias)?),
            };
            gen_weight_stationary(&p, seed)?
        }
        Generator::Random => {
            let d = RandomParams::default();
            let p = RandomParams {
                array,
                commands: g.commands.unwrap_or(d.commands),
                min_gap_ns: g.min_gap_ns.unwrap_or(d.min_gap_ns),
                max_gap_ns: g.max_gap_ns.unwrap_or(d.max_gap_ns),
                violation_rate: g.violation_rate.unwrap_or(d.violation_rate),
                mode_switch_rate: g.mode_switch_rate.unwrap_or(d.mode_switch_rate),
                idle_rate: g.idle_rate.unwrap_or(d.idle_rate),
                dynamic_lifetime_ns: g.lifetime_ns,
            };
            let (generated, stats) = gen_random(&p, seed)?;
            println!("eligible {} injected {}", stats.eligible, stats.injected);
            generated
        }
    };
    for w in &generated.warnings {
        eprintln!("warning: {w}");
    }
    std::fs::write(out, serialize_trace(&generated.trace)).with_context(|| format!("writing {}", out.display()))?;
    println!("wrote {} commands to {}", generated.trace.commands.len(), out.display());
    Ok(EXIT_OK)
}

/// Lint findings: errors make the trace unusable, warnings flag commands
/// that would misbehave.
#[derive(Debug, Default)]
pub struct Lint {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

pub fn lint_trace(trace: &TraceFile, rc: &RunConfig, models: &ModelParams) -> Result<Lint> {
    let mut lint = Lint::default();
    let specs = rc.sim.subarray_specs();
    for (i, c) in trace.commands.iter().enumerate() {
        let Some(s) = c.subarray() else { continue };
        let Some((_, spec)) = specs.get(s as usize) else {
            lint.errors.push(format!("command {i} at {} ns: no sub-array {s}", c.at));
            continue;
        };
        if let amcsim::Action::Access(Address { row, col, .. }, _) = c.action {
            if row >= spec.rows || col >= spec.cols {
                lint.errors.push(format!(
                    "command {i} at {} ns: address {s}:{row}:{col} outside {}x{}",
                    c.at, spec.rows, spec.cols
                ));
            }
        }
    }
    if !lint.errors.is_empty() {
        return Ok(lint);
    }
    let mut dry = rc.sim.clone();
    dry.policies.filo = FiloPolicy::Enforce;
    dry.policies.strict = false;
    dry.record_log = false;
    let mut ctl = Controller::new(&dry, models)?;
    for (i, c) in trace.commands.iter().enumerate() {
        if let FiloCheck::Violation(a) = ctl.check_filo(c) {
            lint.warnings.push(format!(
                "command {i} at {} ns: FILO violation, static access to {a} destroys a live dynamic bit",
                c.at
            ));
        }
        if let Outcome::Failed(msg) = ctl.submit(c)? {
            let hint = match c.action {
                amcsim::Action::Access(_, CellOp::ReadDram | CellOp::ReadTrit | CellOp::Refresh)
                    if msg.contains("expired") =>
                {
                    " (retention exceeded)"
                }
                _ => "",
            };
            lint.warnings.push(format!("command {i} at {} ns would fail{hint}: {msg}", c.at));
        }
    }
    Ok(lint)
}

fn cmd_validate(path: &Path, args: &ConfigArgs) -> Result<i32> {
    let trace = read_trace(path)?;
    let rc = args.resolve(&trace.arrays)?;
    let model = load_model(rc.model_file.as_deref())?;
    let lint = lint_trace(&trace, &rc, &model.params)?;
    for e in &lint.errors {
        println!("error: {e}");
    }
    for w in &lint.warnings {
        println!("warning: {w}");
    }
    Ok(if !lint.errors.is_empty() {
        EXIT_ERROR
    } else if !lint.warnings.is_empty() {
        EXIT_VIOLATIONS
    } else {
        println!("ok: {} commands", trace.commands.len());
        EXIT_OK
    })
}

pub fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Cmd::Simulate { trace, config, out_dir } => cmd_simulate(&trace, &config, &out_dir),
        Cmd::Capacity { config, json } => {
            let rc = config.resolve(&[])?;
            let rows = capacity_rows(&rc);
            if json {
                println!("{}", serde_json::to_string_pretty(&rows)?);
            } else {
                print!("{}", render_capacity(&rows));
            }
            Ok(EXIT_OK)
        }
        Cmd::Compare {
            config,
            workload,
            items,
            json,
        } => {
            let rc = config.resolve(&[])?;
            let model = load_model(rc.model_file.as_deref())?;
            let c = compare::compare(workload, items, &rc, &model.params)?;
            if json {
                println!("{}", serde_json::to_string_pretty(&c)?);
            } else {
                print!("{}", c.render());
            }
            Ok(EXIT_OK)
        }
        Cmd::GenTrace {
            generator,
            out,
            config,
            gen,
        } => gen_trace(generator, &out, &config, &gen),
        Cmd::ValidateTrace { trace, config } => cmd_validate(&trace, &config),
    }
}
