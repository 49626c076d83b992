//! Run configuration: a sectioned key–value file in TOML syntax.
//!
//! ```toml
//! [grid]
//! lo = [-0.5, -0.5]
//! hi = [1.5, 1.5]
//! cells = [128, 128]
//!
//! [time]
//! t1 = 1.0
//!
//! [pme]
//! m = 2.0
//!
//! [initial]
//! preset = "stationary-corner"
//! ```
//!
//! `drift`, `boundary`, `checks` and `output` are optional; every omitted key
//! takes its default. Parsing collects every problem before giving up.

use std::fmt;
use std::ops::Range;

use pmdrift_core::report::fmt17;
use pmdrift_core::{Boundary, DriftSpec, FaceBc, GridSpec, InitialSpec, SolverParams};
use toml_edit::{Document, Item, Table, Value};

/// Verifiers the `verify` subcommand knows, in the order they are listed.
pub const CHECK_NAMES: [&str; 3] = ["pressure_residual", "aronson_benilan", "mass"];

const FACE_KEYS: [&str; 4] = ["x_lo", "x_hi", "y_lo", "y_hi"];

#[derive(Debug, Clone, PartialEq)]
pub struct GridSection {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
    pub cells: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSection {
    pub t0: f64,
    pub t1: f64,
    pub cfl: f64,
    /// Number of snapshot intervals.
    pub stride: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PmeSection {
    pub m: f64,
    pub lift: f64,
    pub fb_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PresetSection {
    pub preset: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceSection {
    pub kind: String,
    pub params: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputSection {
    pub dir: String,
    pub formats: Vec<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridSection,
    pub time: TimeSection,
    pub pme: PmeSection,
    pub drift: PresetSection,
    pub initial: PresetSection,
    /// Faces in the order x_lo, x_hi, y_lo, y_hi.
    pub boundary: [FaceSection; 4],
    /// Verifier name and tolerance.
    pub checks: Vec<(String, f64)>,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub line: usize,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {}", self.line, self.message)
    }
}

/// Every problem found in a config file.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub struct ConfigErrors(pub Vec<ConfigError>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let lines: Vec<String> = self.0.iter().map(|e| e.to_string()).collect();
        write!(f, "{}", lines.join("\n"))
    }
}

struct Parser<'a> {
    text: &'a str,
    errors: Vec<ConfigError>,
}

impl<'a> Parser<'a> {
    fn line_of(&self, span: Option<Range<usize>>) -> usize {
        match span {
            Some(r) => self.text[..r.start.min(self.text.len())].matches('\n').count() + 1,
            None => self.text.lines().count().max(1),
        }
    }

    fn error(&mut self, span: Option<Range<usize>>, message: impl Into<String>) {
        let line = self.line_of(span);
        self.errors.push(ConfigError { line, message: message.into() });
    }

    fn section<'d>(&mut self, doc: &'d Table, name: &str, required: bool) -> Option<&'d Table> {
        match doc.get(name) {
            Some(Item::Table(t)) => Some(t),
            Some(other) => {
                let span = doc.key(name).and_then(|k| k.span()).or_else(|| other.span());
                self.error(span, format!("'{name}' must be a [section]"));
                None
            }
            None => {
                if required {
                    self.error(None, format!("missing section [{name}]"));
                }
                None
            }
        }
    }

    fn check_keys(&mut self, table: &Table, section: &str, known: &[&str]) {
        for (key, _) in table.iter() {
            if !known.contains(&key) {
                let span = table.key(key).and_then(|k| k.span());
                self.error(span, format!("unknown key '{key}' in [{section}]"));
            }
        }
    }

    fn value<'d>(&mut self, table: &'d Table, key: &str) -> Option<(&'d Value, Option<Range<usize>>)> {
        let (k, item) = table.get_key_value(key)?;
        let span = k.span();
        match item {
            Item::Value(v) => Some((v, span)),
            _ => {
                self.error(span, format!("'{key}' must be a value"));
                None
            }
        }
    }

    fn float(&mut self, table: &Table, section: &str, key: &str, default: Option<f64>) -> Option<f64> {
        let Some((v, span)) = self.value(table, key) else {
            if default.is_none() {
                let span = table.span();
                self.error(span, format!("missing key '{key}' in [{section}]"));
            }
            return default;
        };
        match as_f64(v) {
            Some(x) => Some(x),
            None => {
                self.error(span, format!("'{key}' must be a number"));
                None
            }
        }
    }

    fn int(&mut self, table: &Table, key: &str, default: usize) -> Option<usize> {
        let Some((v, span)) = self.value(table, key) else { return Some(default) };
        match v.as_integer() {
            Some(n) if n >= 0 => Some(n as usize),
            _ => {
                self.error(span, format!("'{key}' must be a non-negative integer"));
                None
            }
        }
    }

    fn string(&mut self, table: &Table, section: &str, key: &str, default: Option<&str>) -> Option<String> {
        let Some((v, span)) = self.value(table, key) else {
            if default.is_none() {
                let span = table.span();
                self.error(span, format!("missing key '{key}' in [{section}]"));
            }
            return default.map(str::to_string);
        };
        match v.as_str() {
            Some(s) => Some(s.to_string()),
            None => {
                self.error(span, format!("'{key}' must be a string"));
                None
            }
        }
    }

    fn floats(&mut self, table: &Table, section: &str, key: &str, required: bool) -> Option<Vec<f64>> {
        let Some((v, span)) = self.value(table, key) else {
            if required {
                let span = table.span();
                self.error(span, format!("missing key '{key}' in [{section}]"));
                return None;
            }
            return Some(Vec::new());
        };
        let parsed: Option<Vec<f64>> = v.as_array().and_then(|a| a.iter().map(as_f64).collect());
        if parsed.is_none() {
            self.error(span, format!("'{key}' must be an array of numbers"));
        }
        parsed
    }

    fn strings(&mut self, table: &Table, key: &str, default: &[&str]) -> Option<Vec<String>> {
        let Some((v, span)) = self.value(table, key) else {
            return Some(default.iter().map(|s| s.to_string()).collect());
        };
        let parsed: Option<Vec<String>> =
            v.as_array().and_then(|a| a.iter().map(|x| x.as_str().map(str::to_string)).collect());
        if parsed.is_none() {
            self.error(span, format!("'{key}' must be an array of strings"));
        }
        parsed
    }

    fn key_span(table: &Table, key: &str) -> Option<Range<usize>> {
        table.key(key).and_then(|k| k.span()).or_else(|| table.span())
    }
}

fn as_f64(v: &Value) -> Option<f64> {
    v.as_float().or_else(|| v.as_integer().map(|n| n as f64))
}

pub fn parse_config(text: &str) -> Result<RunConfig, ConfigErrors> {
    let doc = match Document::parse(text) {
        Ok(d) => d,
        Err(e) => {
            let p = Parser { text, errors: Vec::new() };
            let line = p.line_of(e.span());
            return Err(ConfigErrors(vec![ConfigError { line, message: e.message().to_string() }]));
        }
    };
    let root = doc.as_table();
    let mut p = Parser { text, errors: Vec::new() };
    let known = ["grid", "time", "pme", "drift", "initial", "boundary", "checks", "output"];
    for (key, _) in root.iter() {
        if !known.contains(&key) {
            let span = root.key(key).and_then(|k| k.span());
            p.error(span, format!("unknown section [{key}]"));
        }
    }

    let grid = p.section(root, "grid", true).and_then(|t| {
        p.check_keys(t, "grid", &["lo", "hi", "cells"]);
        let lo = p.floats(t, "grid", "lo", true);
        let hi = p.floats(t, "grid", "hi", true);
        let cells = match p.value(t, "cells") {
            Some((v, span)) => {
                let c: Option<Vec<usize>> = v
                    .as_array()
                    .and_then(|a| a.iter().map(|x| x.as_integer().filter(|&n| n > 0).map(|n| n as usize)).collect());
                if c.is_none() {
                    p.error(span, "'cells' must be an array of positive integers");
                }
                c
            }
            None => {
                p.error(t.span(), "missing key 'cells' in [grid]");
                None
            }
        };
        let g = GridSection { lo: lo?, hi: hi?, cells: cells? };
        if let Err(e) = GridSpec::new(&g.lo, &g.hi, &g.cells) {
            p.error(t.span(), e.to_string());
        }
        Some(g)
    });

    let time = p.section(root, "time", true).and_then(|t| {
        p.check_keys(t, "time", &["t0", "t1", "cfl", "stride"]);
        let t0 = p.float(t, "time", "t0", Some(0.0));
        let t1 = p.float(t, "time", "t1", None);
        let cfl = p.float(t, "time", "cfl", Some(0.4));
        let stride = p.int(t, "stride", 10);
        let s = TimeSection { t0: t0?, t1: t1?, cfl: cfl?, stride: stride? };
        if !(s.t1 > s.t0) {
            p.error(Parser::key_span(t, "t1"), format!("t1 = {} must exceed t0 = {}", s.t1, s.t0));
        }
        if !(s.cfl > 0.0 && s.cfl <= 1.0) {
            p.error(Parser::key_span(t, "cfl"), format!("cfl = {} must lie in (0, 1]", s.cfl));
        }
        if s.stride == 0 {
            p.error(Parser::key_span(t, "stride"), "stride must be at least 1");
        }
        Some(s)
    });

    let pme = p.section(root, "pme", true).and_then(|t| {
        p.check_keys(t, "pme", &["m", "lift", "fb_threshold"]);
        let m = p.float(t, "pme", "m", None);
        let lift = p.float(t, "pme", "lift", Some(0.0));
        let fb = p.float(t, "pme", "fb_threshold", Some(1e-8));
        let s = PmeSection { m: m?, lift: lift?, fb_threshold: fb? };
        if !(s.m > 1.0 && s.m.is_finite()) {
            p.error(Parser::key_span(t, "m"), format!("m = {} violates the constraint m > 1", s.m));
        }
        if !(s.lift >= 0.0) {
            p.error(Parser::key_span(t, "lift"), "lift must be non-negative");
        }
        if !(s.fb_threshold > 0.0 && s.fb_threshold < 1.0) {
            p.error(Parser::key_span(t, "fb_threshold"), "fb_threshold must lie in (0, 1)");
        }
        Some(s)
    });

    let drift = match p.section(root, "drift", false) {
        Some(t) => {
            p.check_keys(t, "drift", &["preset", "params"]);
            let preset = p.string(t, "drift", "preset", Some("zero"));
            let params = p.floats(t, "drift", "params", false);
            match (preset, params) {
                (Some(preset), Some(params)) => {
                    if let Err(e) = DriftSpec::from_name(&preset, &params) {
                        p.error(Parser::key_span(t, "preset"), format!("drift: {e}"));
                    }
                    Some(PresetSection { preset, params })
                }
                _ => None,
            }
        }
        None => Some(PresetSection { preset: "zero".into(), params: Vec::new() }),
    };

    let initial = p.section(root, "initial", true).and_then(|t| {
        p.check_keys(t, "initial", &["preset", "params"]);
        let preset = p.string(t, "initial", "preset", None);
        let params = p.floats(t, "initial", "params", false);
        let s = PresetSection { preset: preset?, params: params? };
        if let Err(e) = InitialSpec::from_name(&s.preset, &s.params) {
            p.error(Parser::key_span(t, "preset"), format!("initial: {e}"));
        }
        Some(s)
    });

    let closed = || FaceSection { kind: "closed".into(), params: Vec::new() };
    let mut boundary = [closed(), closed(), closed(), closed()];
    let mut boundary_ok = true;
    if let Some(t) = p.section(root, "boundary", false) {
        let mut known = FACE_KEYS.to_vec();
        let param_keys: Vec<String> = FACE_KEYS.iter().map(|k| format!("{k}_params")).collect();
        known.extend(param_keys.iter().map(String::as_str));
        p.check_keys(t, "boundary", &known);
        for (k, face) in FACE_KEYS.iter().enumerate() {
            let kind = p.string(t, "boundary", face, Some("closed"));
            let params = p.floats(t, "boundary", &param_keys[k], false);
            match (kind, params) {
                (Some(kind), Some(params)) => {
                    if let Err(e) = FaceBc::from_parts(&kind, &params) {
                        p.error(Parser::key_span(t, face), format!("boundary {face}: {e}"));
                    }
                    boundary[k] = FaceSection { kind, params };
                }
                _ => boundary_ok = false,
            }
        }
    }

    let mut checks = Vec::new();
    if let Some(t) = p.section(root, "checks", false) {
        for (key, _) in t.iter() {
            let span = Parser::key_span(t, key);
            if !CHECK_NAMES.contains(&key) {
                p.error(span, format!("unknown check '{key}' (known: {})", CHECK_NAMES.join(", ")));
                continue;
            }
            if let Some(tol) = p.float(t, "checks", key, None) {
                if tol > 0.0 && tol.is_finite() {
                    checks.push((key.to_string(), tol));
                } else {
                    p.error(span, format!("tolerance for '{key}' must be positive"));
                }
            }
        }
    }

    let output = match p.section(root, "output", false) {
        Some(t) => {
            p.check_keys(t, "output", &["dir", "formats"]);
            let dir = p.string(t, "output", "dir", Some("run"));
            let formats = p.strings(t, "formats", &["csv"]);
            if let Some(f) = &formats {
                for bad in f.iter().filter(|f| f.as_str() != "csv") {
                    p.error(Parser::key_span(t, "formats"), format!("unsupported output format '{bad}' (only csv)"));
                }
            }
            match (dir, formats) {
                (Some(dir), Some(formats)) => Some(OutputSection { dir, formats }),
                _ => None,
            }
        }
        None => Some(OutputSection { dir: "run".into(), formats: vec!["csv".into()] }),
    };

    if !p.errors.is_empty() {
        p.errors.sort_by_key(|e| e.line);
        return Err(ConfigErrors(p.errors));
    }
    match (grid, time, pme, drift, initial, output) {
        (Some(grid), Some(time), Some(pme), Some(drift), Some(initial), Some(output)) if boundary_ok => {
            Ok(RunConfig { grid, time, pme, drift, initial, boundary, checks, output })
        }
        _ => Err(ConfigErrors(vec![ConfigError { line: 1, message: "incomplete configuration".into() }])),
    }
}

fn float_list(v: &[f64]) -> String {
    let items: Vec<String> = v.iter().map(|x| fmt17(*x)).collect();
    format!("[{}]", items.join(", "))
}

fn quoted(s: &str) -> String {
    let mut out = String::from("\"");
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            c if c.is_control() => out.push_str(&format!("\\u{:04X}", c as u32)),
            c => out.push(c),
        }
    }
    out.push('"');
    out
}

impl RunConfig {
    /// Canonical text with every default written out; parses back to `self`.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let cells: Vec<String> = self.grid.cells.iter().map(|c| c.to_string()).collect();
        s += &format!(
            "[grid]\nlo = {}\nhi = {}\ncells = [{}]\n\n",
            float_list(&self.grid.lo),
            float_list(&self.grid.hi),
            cells.join(", ")
        );
        s += &format!(
            "[time]\nt0 = {}\nt1 = {}\ncfl = {}\nstride = {}\n\n",
            fmt17(self.time.t0),
            fmt17(self.time.t1),
            fmt17(self.time.cfl),
            self.time.stride
        );
        s += &format!(
            "[pme]\nm = {}\nlift = {}\nfb_threshold = {}\n\n",
            fmt17(self.pme.m),
            fmt17(self.pme.lift),
            fmt17(self.pme.fb_threshold)
        );
        s += &format!(
            "[drift]\npreset = {}\nparams = {}\n\n",
            quoted(&self.drift.preset),
            float_list(&self.drift.params)
        );
        s += &format!(
            "[initial]\npreset = {}\nparams = {}\n\n",
            quoted(&self.initial.preset),
            float_list(&self.initial.params)
        );
        s += "[boundary]\n";
        for (k, face) in FACE_KEYS.iter().enumerate() {
            s += &format!("{face} = {}\n", quoted(&self.boundary[k].kind));
            if !self.boundary[k].params.is_empty() {
                s += &format!("{face}_params = {}\n", float_list(&self.boundary[k].params));
            }
        }
        s += "\n[checks]\n";
        for (name, tol) in &self.checks {
            s += &format!("{name} = {}\n", fmt17(*tol));
        }
        let formats: Vec<String> = self.output.formats.iter().map(|f| quoted(f)).collect();
        s += &format!("\n[output]\ndir = {}\nformats = [{}]\n", quoted(&self.output.dir), formats.join(", "));
        s
    }

    pub fn grid_spec(&self) -> pmdrift_core::Result<GridSpec> {
        GridSpec::new(&self.grid.lo, &self.grid.hi, &self.grid.cells)
    }

    pub fn drift_spec(&self) -> pmdrift_core::Result<DriftSpec> {
        DriftSpec::from_name(&self.drift.preset, &self.drift.params)
    }

    pub fn initial_spec(&self) -> pmdrift_core::Result<InitialSpec> {
        InitialSpec::from_name(&self.initial.preset, &self.initial.params)
    }

    pub fn boundary_spec(&self) -> pmdrift_core::Result<Boundary> {
        let f = |k: usize| FaceBc::from_parts(&self.boundary[k].kind, &self.boundary[k].params);
        Ok(Boundary { lo: [f(0)?, f(2)?], hi: [f(1)?, f(3)?] })
    }

    pub fn solver_params(&self) -> SolverParams {
        let mut p = SolverParams::new(self.pme.m, self.time.t0, self.time.t1)
            .with_snapshots(self.time.stride)
            .with_cfl(self.time.cfl)
            .with_lift(self.pme.lift);
        p.fb_threshold = self.pme.fb_threshold;
        p
    }

    pub fn tolerance(&self, check: &str) -> Option<f64> {
        self.checks.iter().find(|(k, _)| k == check).map(|(_, v)| *v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[grid]\nlo = [0.0]\nhi = [1.0]\ncells = [16]\n\n[time]\nt1 = 0.5\n\n[pme]\nm = 2\n\n[initial]\npreset = \"bump\"\n";

    #[test]
    fn minimal_config_fills_defaults_and_echo_round_trips() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.time.t0, 0.0);
        assert_eq!(c.time.cfl, 0.4);
        assert_eq!(c.time.stride, 10);
        assert_eq!(c.pme.fb_threshold, 1e-8);
        assert_eq!(c.drift.preset, "zero");
        assert_eq!(c.boundary[3].kind, "closed");
        assert_eq!(c.output.dir, "run");
        let text = c.to_text();
        let back = parse_config(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_text(), text);
    }

    #[test]
    fn m_below_one_names_the_constraint() {
        let text = MINIMAL.replace("m = 2", "m = 0.5");
        let err = parse_config(&text).unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert_eq!(err.0[0].line, 10);
        assert!(err.0[0].message.contains("m > 1"), "{}", err.0[0].message);
    }

    #[test]
    fn reports_every_error_with_its_line() {
        let text = "[grid]\nlo = [0.0]\nhi = [1.0]\ncells = [16]\nspacing = 3\n\n[time]\nt1 = -1\n\n[pme]\nm = 0.5\n\n[initial]\npreset = \"nope\"\n\n[checks]\nmass = 0\n";
        let err = parse_config(text).unwrap_err();
        let lines: Vec<usize> = err.0.iter().map(|e| e.line).collect();
        assert_eq!(lines, vec![5, 8, 11, 14, 17], "{err}");
        assert!(err.0[0].message.contains("unknown key 'spacing'"));
    }

    #[test]
    fn missing_sections_and_unknown_sections_are_reported() {
        let err = parse_config("[grid]\nlo = [0.0]\nhi = [1.0]\ncells = [16]\n[extra]\nx = 1\n").unwrap_err();
        let text = err.to_string();
        for want in ["unknown section [extra]", "missing section [time]", "missing section [pme]", "missing section [initial]"] {
            assert!(text.contains(want), "{text}");
        }
        assert!(text.contains("line 5: unknown section"));
    }

    #[test]
    fn syntax_errors_carry_a_line() {
        let err = parse_config("[grid]\nlo = [0.0\n").unwrap_err();
        assert_eq!(err.0.len(), 1);
        assert!(err.0[0].line >= 2);
    }

    #[test]
    fn boundary_faces_round_trip_with_parameters() {
        let text = format!("{MINIMAL}\n[boundary]\nx_hi = \"dirichlet-affine\"\nx_hi_params = [0, 1, 0, 2]\n");
        let c = parse_config(&text).unwrap();
        let b = c.boundary_spec().unwrap();
        assert_eq!(b.hi[0].params(), vec![0.0, 1.0, 0.0, 2.0]);
        assert_eq!(parse_config(&c.to_text()).unwrap(), c);
        let bad = format!("{MINIMAL}\n[boundary]\nx_hi = \"dirichlet-affine\"\n");
        assert!(parse_config(&bad).unwrap_err().to_string().contains("takes 4 parameters"));
    }
}
