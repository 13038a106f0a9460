//! Scenario files and run output.
//!
//! A scenario file is line-oriented: `[section]` headers, `key = value`
//! pairs and `#` comments. Lengths accept `m` or `um`, times `s` or `min`.
//! A `preset = paper-fig2` line before the first section fills every key
//! with the reference values; without it all non-optional keys are required.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::closed_loop::{CapViolations, ControllerMode, EtmSource, RunRecord, ScenarioConfig, SweepRow};
use crate::error::{Error, Result};
use crate::model::{DerivedConstants, Linearization};
use crate::solver::{SolverConfig, TimeScheme};
use crate::trigger::{AlphaConstants, DwellTime, EtmConfig, ZenoReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    PaperFig2,
}

impl Preset {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "paper-fig2" => Some(Preset::PaperFig2),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Preset::PaperFig2 => "paper-fig2",
        }
    }

    pub fn config(self) -> ScenarioConfig {
        match self {
            Preset::PaperFig2 => ScenarioConfig::paper_fig2(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Unit {
    None,
    Length,
    Time,
}

impl Unit {
    fn factor(self, suffix: &str) -> Option<f64> {
        match (self, suffix) {
            (Unit::Length, "m") => Some(1.0),
            (Unit::Length, "um") => Some(1e-6),
            (Unit::Time, "s") => Some(1.0),
            (Unit::Time, "min") => Some(60.0),
            _ => None,
        }
    }

    fn allowed(self) -> &'static str {
        match self {
            Unit::None => "none",
            Unit::Length => "m, um",
            Unit::Time => "s, min",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Bound {
    Finite,
    Positive,
    NonNegative,
    Negative,
    /// Open interval.
    Between(f64, f64),
    /// Closed interval.
    Within(f64, f64),
}

impl Bound {
    fn check(self, v: f64) -> std::result::Result<(), String> {
        let ok = v.is_finite()
            && match self {
                Bound::Finite => true,
                Bound::Positive => v > 0.0,
                Bound::NonNegative => v >= 0.0,
                Bound::Negative => v < 0.0,
                Bound::Between(lo, hi) => v > lo && v < hi,
                Bound::Within(lo, hi) => v >= lo && v <= hi,
            };
        if ok {
            return Ok(());
        }
        Err(match self {
            Bound::Finite => "must be finite".into(),
            Bound::Positive => "must be positive".into(),
            Bound::NonNegative => "must be non-negative".into(),
            Bound::Negative => "must be negative".into(),
            Bound::Between(lo, hi) => format!("out of range ({lo}, {hi})"),
            Bound::Within(lo, hi) => format!("out of range [{lo}, {hi}]"),
        })
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Real(Unit, Bound),
    /// Optional real that replaces a trigger constant.
    Override(Bound),
    Count(usize),
    Choice(&'static [&'static str]),
}

struct Key {
    section: &'static str,
    name: &'static str,
    kind: Kind,
}

const fn real(section: &'static str, name: &'static str, unit: Unit, bound: Bound) -> Key {
    Key {
        section,
        name,
        kind: Kind::Real(unit, bound),
    }
}

const fn opt(name: &'static str, bound: Bound) -> Key {
    Key {
        section: "etm",
        name,
        kind: Kind::Override(bound),
    }
}

const SECTIONS: [&str; 5] = ["bio", "solver", "gains", "etm", "run"];

const KEYS: &[Key] = &[
    real("bio", "D", Unit::None, Bound::Positive),
    real("bio", "a", Unit::None, Bound::NonNegative),
    real("bio", "g", Unit::None, Bound::NonNegative),
    real("bio", "r_g", Unit::None, Bound::Positive),
    real("bio", "rt_g", Unit::None, Bound::Finite),
    real("bio", "l_c", Unit::Length, Bound::Positive),
    real("bio", "c_inf", Unit::None, Bound::Positive),
    real("bio", "l_s", Unit::Length, Bound::Positive),
    Key {
        section: "solver",
        name: "N",
        kind: Kind::Count(SolverConfig::MIN_INTERVALS),
    },
    real("solver", "dt", Unit::Time, Bound::Positive),
    real("solver", "theta", Unit::None, Bound::Within(0.5, 1.0)),
    real("solver", "t_end", Unit::Time, Bound::Positive),
    Key {
        section: "solver",
        name: "startup_steps",
        kind: Kind::Count(0),
    },
    Key {
        section: "solver",
        name: "scheme",
        kind: Kind::Choice(&["theta", "bdf2"]),
    },
    real("gains", "k1", Unit::None, Bound::Finite),
    real("gains", "k2", Unit::None, Bound::Finite),
    Key {
        section: "etm",
        name: "source",
        kind: Kind::Choice(&["paper-fig2", "derived"]),
    },
    real("etm", "design_sigma", Unit::None, Bound::Between(0.0, 1.0)),
    real("etm", "design_eta", Unit::None, Bound::Positive),
    opt("gamma", Bound::Positive),
    opt("eta", Bound::Positive),
    opt("rho", Bound::Positive),
    opt("sigma", Bound::Between(0.0, 1.0)),
    opt("beta1", Bound::NonNegative),
    opt("beta2", Bound::NonNegative),
    opt("beta3", Bound::NonNegative),
    opt("beta4", Bound::NonNegative),
    opt("beta5", Bound::NonNegative),
    opt("m0", Bound::Negative),
    Key {
        section: "run",
        name: "mode",
        kind: Kind::Choice(&["continuous", "etc", "zoh"]),
    },
    Key {
        section: "run",
        name: "linearization",
        kind: Kind::Choice(&["jacobian", "literal"]),
    },
    real("run", "l_bar", Unit::Length, Bound::Positive),
    real("run", "v_bar", Unit::None, Bound::Positive),
    Key {
        section: "run",
        name: "event_cap",
        kind: Kind::Count(1),
    },
    real("run", "zoh_period", Unit::Time, Bound::Positive),
    real("run", "l0", Unit::Length, Bound::Positive),
    real("run", "c0", Unit::None, Bound::NonNegative),
    real("run", "offset_scale", Unit::None, Bound::Finite),
    real("run", "snapshot_every", Unit::Time, Bound::NonNegative),
    Key {
        section: "run",
        name: "kernel_intervals",
        kind: Kind::Count(2),
    },
];

fn real_slot<'a>(cfg: &'a mut ScenarioConfig, section: &str, name: &str) -> &'a mut f64 {
    match (section, name) {
        ("bio", "D") => &mut cfg.bio.d,
        ("bio", "a") => &mut cfg.bio.a,
        ("bio", "g") => &mut cfg.bio.g,
        ("bio", "r_g") => &mut cfg.bio.r_g,
        ("bio", "rt_g") => &mut cfg.bio.rt_g,
        ("bio", "l_c") => &mut cfg.bio.l_c,
        ("bio", "c_inf") => &mut cfg.bio.c_inf,
        ("bio", "l_s") => &mut cfg.bio.l_s,
        ("solver", "dt") => &mut cfg.solver.dt,
        ("solver", "theta") => &mut cfg.solver.theta,
        ("solver", "t_end") => &mut cfg.solver.t_end,
        ("gains", "k1") => &mut cfg.gains.k1,
        ("gains", "k2") => &mut cfg.gains.k2,
        ("etm", "design_sigma") => &mut cfg.etm_sigma,
        ("etm", "design_eta") => &mut cfg.etm_eta,
        ("run", "l_bar") => &mut cfg.l_bar,
        ("run", "v_bar") => &mut cfg.v_bar,
        ("run", "zoh_period") => &mut cfg.zoh_period,
        ("run", "l0") => &mut cfg.l0,
        ("run", "c0") => &mut cfg.c0,
        ("run", "offset_scale") => &mut cfg.offset_scale,
        ("run", "snapshot_every") => &mut cfg.snapshot_every,
        _ => unreachable!("no real field {section}.{name}"),
    }
}

fn override_slot<'a>(cfg: &'a mut ScenarioConfig, name: &str) -> &'a mut Option<f64> {
    let o = &mut cfg.etm_overrides;
    match name {
        "gamma" => &mut o.gamma,
        "eta" => &mut o.eta,
        "rho" => &mut o.rho,
        "sigma" => &mut o.sigma,
        "beta1" => &mut o.beta[0],
        "beta2" => &mut o.beta[1],
        "beta3" => &mut o.beta[2],
        "beta4" => &mut o.beta[3],
        "beta5" => &mut o.beta[4],
        "m0" => &mut o.m0,
        _ => unreachable!("no override {name}"),
    }
}

fn count_slot<'a>(cfg: &'a mut ScenarioConfig, name: &str) -> &'a mut usize {
    match name {
        "N" => &mut cfg.solver.n,
        "startup_steps" => &mut cfg.solver.startup_steps,
        "event_cap" => &mut cfg.event_cap,
        "kernel_intervals" => &mut cfg.kernel_intervals,
        _ => unreachable!("no count field {name}"),
    }
}

fn choice_value(cfg: &ScenarioConfig, name: &str) -> &'static str {
    match name {
        "scheme" => cfg.solver.scheme.name(),
        "source" => match cfg.etm_source {
            EtmSource::PaperFig2 => "paper-fig2",
            EtmSource::Derived => "derived",
        },
        "mode" => cfg.mode.name(),
        "linearization" => cfg.linearization.name(),
        _ => unreachable!("no choice field {name}"),
    }
}

fn set_choice(cfg: &mut ScenarioConfig, name: &str, v: &str) {
    match name {
        "scheme" => cfg.solver.scheme = TimeScheme::parse(v).expect("checked"),
        "source" => {
            cfg.etm_source = match v {
                "derived" => EtmSource::Derived,
                _ => EtmSource::PaperFig2,
            }
        }
        "mode" => cfg.mode = ControllerMode::parse(v).expect("checked"),
        "linearization" => cfg.linearization = Linearization::parse(v).expect("checked"),
        _ => unreachable!("no choice field {name}"),
    }
}

/// Splits a trailing alphabetic unit suffix off a number.
fn parse_quantity(raw: &str, unit: Unit) -> std::result::Result<f64, String> {
    if let Ok(v) = raw.parse::<f64>() {
        return Ok(v);
    }
    let split = raw.trim_end_matches(|c: char| c.is_ascii_alphabetic()).len();
    let (num, suffix) = raw.split_at(split);
    let num = num.trim_end();
    if suffix.is_empty() || num.is_empty() {
        return Err(format!("invalid number '{raw}'"));
    }
    let v: f64 = num.parse().map_err(|_| format!("invalid number '{num}'"))?;
    let factor = unit
        .factor(suffix)
        .ok_or_else(|| format!("bad unit '{suffix}' (allowed: {})", unit.allowed()))?;
    Ok(v * factor)
}

fn assign(cfg: &mut ScenarioConfig, key: &Key, raw: &str) -> std::result::Result<(), String> {
    match key.kind {
        Kind::Real(unit, bound) => {
            let v = parse_quantity(raw, unit)?;
            bound.check(v).map_err(|m| format!("{} = {raw} {m}", key.name))?;
            *real_slot(cfg, key.section, key.name) = v;
        }
        Kind::Override(bound) => {
            let v = parse_quantity(raw, Unit::None)?;
            bound.check(v).map_err(|m| format!("{} = {raw} {m}", key.name))?;
            *override_slot(cfg, key.name) = Some(v);
        }
        Kind::Count(min) => {
            let v: usize = raw.parse().map_err(|_| format!("{} expects a non-negative integer, got '{raw}'", key.name))?;
            if v < min {
                return Err(format!("{} = {v} must be at least {min}", key.name));
            }
            *count_slot(cfg, key.name) = v;
        }
        Kind::Choice(options) => {
            if !options.contains(&raw) {
                return Err(format!("{} = '{raw}' is not one of {}", key.name, options.join(", ")));
            }
            set_choice(cfg, key.name, raw);
        }
    }
    Ok(())
}

pub fn parse_config(text: &str) -> Result<ScenarioConfig> {
    parse_config_with(text, None)
}

/// Parses with `preset` as the base, as if the file began with a preset line.
pub fn parse_config_with(text: &str, preset: Option<Preset>) -> Result<ScenarioConfig> {
    let mut base = preset;
    let mut cfg = ScenarioConfig::paper_fig2();
    let mut section: Option<&str> = None;
    let mut seen: HashSet<(&str, &str)> = HashSet::new();
    let mut last_line = 0;

    for (idx, full) in text.lines().enumerate() {
        let line = idx + 1;
        last_line = line;
        let body = full.split('#').next().unwrap_or("").trim();
        if body.is_empty() {
            continue;
        }
        if let Some(rest) = body.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::config(line, format!("malformed section header '{body}'")))?
                .trim();
            let known = SECTIONS
                .iter()
                .find(|s| **s == name)
                .ok_or_else(|| Error::config(line, format!("unknown section [{name}]")))?;
            section = Some(known);
            continue;
        }
        let (k, v) = body
            .split_once('=')
            .ok_or_else(|| Error::config(line, format!("expected 'key = value', got '{body}'")))?;
        let (k, v) = (k.trim(), v.trim());
        let Some(sec) = section else {
            if k != "preset" {
                return Err(Error::config(line, format!("key '{k}' outside a section")));
            }
            if !seen.insert(("", "preset")) {
                return Err(Error::config(line, "duplicate key 'preset'"));
            }
            let p = Preset::parse(v).ok_or_else(|| Error::config(line, format!("unknown preset '{v}'")))?;
            base = Some(p);
            cfg = p.config();
            continue;
        };
        let key = KEYS
            .iter()
            .find(|key| key.section == sec && key.name == k)
            .ok_or_else(|| Error::config(line, format!("unknown key '{k}' in [{sec}]")))?;
        if !seen.insert((key.section, key.name)) {
            return Err(Error::config(line, format!("duplicate key '{k}' in [{sec}]")));
        }
        assign(&mut cfg, key, v).map_err(|m| Error::config(line, m))?;
    }

    if base.is_none() {
        let missing: Vec<String> = KEYS
            .iter()
            .filter(|k| !matches!(k.kind, Kind::Override(_)) && !seen.contains(&(k.section, k.name)))
            .map(|k| format!("[{}] {}", k.section, k.name))
            .collect();
        if !missing.is_empty() {
            return Err(Error::config(
                last_line,
                format!("missing keys without a preset: {}", missing.join(", ")),
            ));
        }
    }
    cfg.validate().map_err(|e| Error::config(last_line, e.to_string()))?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig> {
    parse_config(&fs::read_to_string(path)?)
}

/// Writes every field; `parse_config` of the result returns `cfg`.
pub fn serialize_config(cfg: &ScenarioConfig) -> String {
    let mut scratch = cfg.clone();
    let mut out = String::new();
    for (i, sec) in SECTIONS.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let _ = writeln!(out, "[{sec}]");
        for key in KEYS.iter().filter(|k| k.section == *sec) {
            let value = match key.kind {
                Kind::Real(..) => format!("{:e}", *real_slot(&mut scratch, key.section, key.name)),
                Kind::Override(_) => match *override_slot(&mut scratch, key.name) {
                    Some(v) => format!("{v:e}"),
                    None => continue,
                },
                Kind::Count(_) => count_slot(&mut scratch, key.name).to_string(),
                Kind::Choice(_) => choice_value(cfg, key.name).to_string(),
            };
            let _ = writeln!(out, "{} = {value}", key.name);
        }
    }
    out
}

/// Paths written by [`write_outputs`].
#[derive(Debug, Clone, PartialEq)]
pub struct OutputBundle {
    pub run_csv: PathBuf,
    pub events_csv: PathBuf,
    pub summary_json: PathBuf,
    pub profiles_csv: Option<PathBuf>,
}

pub const RUN_COLUMNS: &str = "t,l,c_c,U_applied,d,m,norm_u,norm_w,norm_wx,V1,V2,V3,V,event_flag";
pub const EVENT_COLUMNS: &str = "index,t_j,U_tj,gap";
pub const PROFILE_COLUMNS: &str = "t,l,x,c";
pub const SWEEP_COLUMNS: &str = "param,value,mode,status,event_count,min_gap,time_to_95,final_l,final_error,length_at_240";

/// 17 significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn run_csv(r: &RunRecord) -> String {
    let mut out = String::with_capacity(r.samples.len() * 320);
    out.push_str(RUN_COLUMNS);
    out.push('\n');
    for s in &r.samples {
        let cols = [
            s.t, s.l, s.c_c, s.u_applied, s.d, s.m, s.norm_u, s.norm_w, s.norm_wx, s.v1, s.v2, s.v3, s.v,
        ];
        for c in cols {
            out.push_str(&num(c));
            out.push(',');
        }
        out.push(if s.event { '1' } else { '0' });
        out.push('\n');
    }
    out
}

pub fn events_csv(r: &RunRecord) -> String {
    let mut out = String::from(EVENT_COLUMNS);
    out.push('\n');
    for e in &r.events {
        let _ = writeln!(out, "{},{},{},{}", e.index, num(e.t), num(e.u), num(e.gap));
    }
    out
}

/// Long format: one row per grid node per snapshot.
pub fn profiles_csv(r: &RunRecord) -> String {
    let mut out = String::from(PROFILE_COLUMNS);
    out.push('\n');
    for snap in &r.snapshots {
        let n = snap.c.len().saturating_sub(1).max(1);
        for (i, c) in snap.c.iter().enumerate() {
            let x = snap.l * i as f64 / n as f64;
            let _ = writeln!(out, "{},{},{},{}", num(snap.t), num(snap.l), num(x), num(*c));
        }
    }
    out
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_COLUMNS);
    out.push('\n');
    for row in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{}",
            row.param,
            num(row.value),
            row.mode.name(),
            row.status,
            row.event_count,
            num(row.min_gap),
            opt_num(row.time_to_95),
            num(row.final_l),
            num(row.final_error),
            opt_num(row.length_at_240),
        );
    }
    out
}

#[derive(Debug, Serialize)]
struct FinalState {
    t: f64,
    l: f64,
    c_c: f64,
    relative_length_error: f64,
    h1_plus_ode: f64,
    v: f64,
}

#[derive(Debug, Serialize)]
struct Summary<'a> {
    status: &'static str,
    status_detail: Option<String>,
    mode: &'static str,
    dt: f64,
    horizon: f64,
    steps: usize,
    #[serde(rename = "final")]
    final_state: Option<FinalState>,
    time_to_95: Option<f64>,
    length_at_240: Option<f64>,
    max_trigger_margin: f64,
    caps: &'a CapViolations,
    zeno: ZenoReport,
    dwell: &'a DwellTime,
    etm: &'a EtmConfig,
    alpha: &'a AlphaConstants,
    lyapunov: &'a crate::closed_loop::LyapunovDiagnostics,
    derived: &'a DerivedConstants,
    config: String,
}

pub fn summary_json(r: &RunRecord, cfg: &ScenarioConfig) -> String {
    use crate::closed_loop::RunStatus;
    let detail = match &r.status {
        RunStatus::NonFinite(s) | RunStatus::NumericFailure(s) => Some(s.clone()),
        _ => None,
    };
    let l_s = r.derived.params.l_s;
    let summary = Summary {
        status: r.status.label(),
        status_detail: detail,
        mode: r.mode.name(),
        dt: r.dt,
        horizon: cfg.horizon(),
        steps: r.samples.len().saturating_sub(1),
        final_state: r.final_sample().map(|s| FinalState {
            t: s.t,
            l: s.l,
            c_c: s.c_c,
            relative_length_error: (s.l - l_s).abs() / l_s,
            h1_plus_ode: s.h1_plus_ode(),
            v: s.v,
        }),
        time_to_95: r.time_to_fraction(0.95),
        length_at_240: r.length_at(240.0),
        max_trigger_margin: r.max_trigger_margin,
        caps: &r.caps,
        zeno: r.zeno(),
        dwell: &r.dwell,
        etm: &r.etm,
        alpha: &r.alpha,
        lyapunov: &r.lyapunov,
        derived: &r.derived,
        config: serialize_config(cfg),
    };
    let mut s = serde_json::to_string_pretty(&summary).expect("summary is serializable");
    s.push('\n');
    s
}

/// Writes run.csv, events.csv, summary.json and, when snapshots exist,
/// profiles.csv into `dir` (created if missing).
pub fn write_outputs(r: &RunRecord, cfg: &ScenarioConfig, dir: &Path) -> Result<OutputBundle> {
    fs::create_dir_all(dir)?;
    let bundle = OutputBundle {
        run_csv: dir.join("run.csv"),
        events_csv: dir.join("events.csv"),
        summary_json: dir.join("summary.json"),
        profiles_csv: (!r.snapshots.is_empty()).then(|| dir.join("profiles.csv")),
    };
    fs::write(&bundle.run_csv, run_csv(r))?;
    fs::write(&bundle.events_csv, events_csv(r))?;
    fs::write(&bundle.summary_json, summary_json(r, cfg))?;
    if let Some(p) = &bundle.profiles_csv {
        fs::write(p, profiles_csv(r))?;
    }
    Ok(bundle)
}
