//! Run configuration in a small `section.key = value` format.
//!
//! ```text
//! # comment
//! problem.n = 2
//! problem.alpha0 = 1.0
//! problem.kappa = 0.1
//! problem.datum = hyperboloid
//! solver.dt = 1e-3
//! output.csv = "run.csv"
//! ```
//!
//! One assignment per line. Blank lines and text after a `#` that starts a
//! line or follows whitespace are ignored. Values are numbers, bare words or
//! double-quoted strings (no escapes). Every key may appear at most once and
//! unknown keys are rejected.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::diagnostics::Probes;
use crate::error::{ImcfError, Result};
use crate::exact::ConeFamily;
use crate::radial::{BoundaryKind, SolverConfig, TimeScheme};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModuleKind {
    Radial,
    Grid2d,
}

impl ModuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModuleKind::Radial => "radial",
            ModuleKind::Grid2d => "grid2d",
        }
    }
}

/// Initial datum selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatumKind {
    /// `sqrt(alpha0^2 r^2 + kappa^2)`.
    Hyperboloid,
    /// Cone with the vertex rounded off inside the sandwich.
    ConeSmooth,
    /// Smoothed cone with a quadrupole bump (lattice only).
    Quadrupole,
    /// Heights read from `problem.datum_file`.
    File,
}

impl DatumKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DatumKind::Hyperboloid => "hyperboloid",
            DatumKind::ConeSmooth => "cone-smooth",
            DatumKind::Quadrupole => "quadrupole",
            DatumKind::File => "file",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "hyperboloid" => DatumKind::Hyperboloid,
            "cone-smooth" => DatumKind::ConeSmooth,
            "quadrupole" => DatumKind::Quadrupole,
            "file" => DatumKind::File,
            _ => return None,
        })
    }
}

pub fn boundary_name(b: BoundaryKind) -> &'static str {
    match b {
        BoundaryKind::NeumannConeSlope => "neumann",
        BoundaryKind::DirichletShift => "dirichlet",
    }
}

pub fn parse_boundary(s: &str) -> Option<BoundaryKind> {
    match s {
        "neumann" => Some(BoundaryKind::NeumannConeSlope),
        "dirichlet" => Some(BoundaryKind::DirichletShift),
        _ => None,
    }
}

pub fn scheme_name(s: TimeScheme) -> &'static str {
    match s {
        TimeScheme::BackwardEuler => "backward-euler",
        TimeScheme::Bdf2 => "bdf2",
    }
}

pub fn parse_scheme(s: &str) -> Option<TimeScheme> {
    match s {
        "backward-euler" => Some(TimeScheme::BackwardEuler),
        "bdf2" => Some(TimeScheme::Bdf2),
        _ => None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProblemConfig {
    pub module: ModuleKind,
    pub n: usize,
    pub alpha0: f64,
    pub kappa: f64,
    pub datum: DatumKind,
    pub datum_file: Option<String>,
    /// Quadrupole amplitude.
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig {
    /// Outer radius `R` of the radial grid.
    pub radius: f64,
    /// Number of radial cells `M`.
    pub cells: usize,
    /// Geometric stretching toward `R` (0 for uniform).
    pub stretch: f64,
    /// Half width `L` of the lattice.
    pub half_width: f64,
    /// Lattice nodes per half side.
    pub m: usize,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            radius: 100.0,
            cells: 2000,
            stretch: 6.0,
            half_width: 8.0,
            m: 32,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSection {
    /// End time; `None` runs until flattening.
    pub t_end: Option<f64>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct OutputConfig {
    pub csv: Option<String>,
    pub snapshot: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    pub grid: GridConfig,
    pub solver: SolverConfig,
    pub probes: Probes,
    pub run: RunSection,
    pub output: OutputConfig,
}

impl RunConfig {
    /// Defaults for everything except the problem.
    pub fn new(n: usize, alpha0: f64, kappa: f64, datum: DatumKind) -> Self {
        Self {
            problem: ProblemConfig {
                module: ModuleKind::Radial,
                n,
                alpha0,
                kappa,
                datum,
                datum_file: None,
                delta: 0.1,
            },
            grid: GridConfig::default(),
            solver: SolverConfig::default(),
            probes: Probes::default(),
            run: RunSection { t_end: None, seed: 0 },
            output: OutputConfig::default(),
        }
    }

    pub fn cone(&self) -> Result<ConeFamily> {
        ConeFamily::new(self.problem.n, self.problem.alpha0, self.problem.kappa)
    }

    /// Canonical text listing every key; parses back to an equal value.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.entries() {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }

    /// 64-bit FNV-1a hash of [`RunConfig::to_text`], as 16 hex digits.
    pub fn hash(&self) -> String {
        fnv1a_hex(self.to_text().as_bytes())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.problem;
        let g = &self.grid;
        let c = &self.solver;
        let q = |s: &str| format!("\"{s}\"");
        let mut e = vec![
            ("problem.module", p.module.as_str().to_string()),
            ("problem.n", p.n.to_string()),
            ("problem.alpha0", fmt_f64(p.alpha0)),
            ("problem.kappa", fmt_f64(p.kappa)),
            ("problem.datum", p.datum.as_str().to_string()),
        ];
        if let Some(f) = &p.datum_file {
            e.push(("problem.datum_file", q(f)));
        }
        e.extend([
            ("problem.delta", fmt_f64(p.delta)),
            ("grid.radius", fmt_f64(g.radius)),
            ("grid.cells", g.cells.to_string()),
            ("grid.stretch", fmt_f64(g.stretch)),
            ("grid.half_width", fmt_f64(g.half_width)),
            ("grid.m", g.m.to_string()),
            ("solver.dt", fmt_f64(c.dt)),
            ("solver.newton_tol", fmt_f64(c.newton_tol)),
            ("solver.newton_max_iter", c.newton_max_iter.to_string()),
            ("solver.h_min", fmt_f64(c.h_min)),
            ("solver.bc", boundary_name(c.bc_kind).to_string()),
            ("solver.flat_eps", fmt_f64(c.flat_eps)),
            ("solver.scheme", scheme_name(c.scheme).to_string()),
            ("solver.max_slope_change", fmt_f64(c.max_slope_change)),
            ("solver.sample_every", c.sample_every.to_string()),
            ("probes.probe_fraction", fmt_f64(self.probes.probe_fraction)),
            ("probes.star_center", fmt_f64(self.probes.star_center)),
            ("run.t_end", self.run.t_end.map_or_else(|| "flat".to_string(), fmt_f64)),
            ("run.seed", self.run.seed.to_string()),
        ]);
        if let Some(f) = &self.output.csv {
            e.push(("output.csv", q(f)));
        }
        if let Some(f) = &self.output.snapshot {
            e.push(("output.snapshot", q(f)));
        }
        e
    }
}

/// Shortest text that parses back to the same double.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn fnv1a_hex(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq)]
struct Entry {
    value: String,
    line: usize,
}

fn is_key_char(c: char) -> bool {
    c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_'
}

/// Split the text into assignments, checking only the syntax.
fn tokenize(text: &str) -> Result<BTreeMap<String, Entry>> {
    let mut out: BTreeMap<String, Entry> = BTreeMap::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let perr = |col: usize, message: &str| ImcfError::Parse {
            line,
            column: col,
            message: message.to_string(),
        };
        let mut body = raw;
        let mut in_quote = false;
        let mut prev_space = true;
        for (i, c) in raw.char_indices() {
            if c == '"' {
                in_quote = !in_quote;
            } else if c == '#' && !in_quote && prev_space {
                body = &raw[..i];
                break;
            }
            prev_space = c.is_whitespace();
        }
        if body.trim().is_empty() {
            continue;
        }
        let col_of = |s: &str| raw.chars().count() - s.chars().count() + 1;
        let start = body.trim_start();
        let Some(eq) = start.find('=') else {
            return Err(perr(col_of(start), "expected `section.key = value`"));
        };
        let key = start[..eq].trim_end();
        let parts: Vec<&str> = key.split('.').collect();
        if parts.len() != 2 || parts.iter().any(|p| p.is_empty() || !p.chars().all(is_key_char)) {
            return Err(perr(col_of(start), "key must look like `section.key` (lowercase letters, digits, `_`)"));
        }
        let after = &start[eq + 1..];
        let vtext = after.trim();
        if vtext.is_empty() {
            return Err(perr(col_of(after), "missing value"));
        }
        let vcol = col_of(after.trim_start());
        let value = if let Some(rest) = vtext.strip_prefix('"') {
            match rest.find('"') {
                Some(end) if end + 1 == rest.len() => rest[..end].to_string(),
                Some(end) => return Err(perr(vcol + end + 2, "unexpected text after closing quote")),
                None => return Err(perr(vcol, "unterminated string")),
            }
        } else {
            if let Some(p) = vtext.find(|c: char| c.is_whitespace() || c == '"') {
                return Err(perr(vcol + vtext[..p].chars().count(), "unquoted values cannot contain spaces or quotes"));
            }
            vtext.to_string()
        };
        if let Some(prev) = out.get(key) {
            return Err(perr(col_of(start), &format!("duplicate key `{key}` (first set on line {})", prev.line)));
        }
        out.insert(key.to_string(), Entry { value, line });
    }
    Ok(out)
}

struct Fields {
    map: BTreeMap<String, Entry>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<Entry> {
        self.map.remove(key)
    }

    fn bad(key: &str, line: usize, message: impl Into<String>) -> ImcfError {
        ImcfError::Config {
            key: key.to_string(),
            line,
            message: message.into(),
        }
    }

    fn parsed<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<Option<(T, usize)>> {
        match self.take(key) {
            None => Ok(None),
            Some(e) => e
                .value
                .parse::<T>()
                .map(|v| Some((v, e.line)))
                .map_err(|_| Self::bad(key, e.line, format!("expected {what}, got `{}`", e.value))),
        }
    }

    fn real(&mut self, key: &str, slot: &mut f64, ok: impl Fn(f64) -> bool, rule: &str) -> Result<()> {
        if let Some((v, line)) = self.parsed::<f64>(key, "a number")? {
            if !(v.is_finite() && ok(v)) {
                return Err(Self::bad(key, line, format!("{rule}, got {v}")));
            }
            *slot = v;
        }
        Ok(())
    }

    fn count(&mut self, key: &str, slot: &mut usize, min: usize) -> Result<()> {
        if let Some((v, line)) = self.parsed::<usize>(key, "a non-negative integer")? {
            if v < min {
                return Err(Self::bad(key, line, format!("must be at least {min}, got {v}")));
            }
            *slot = v;
        }
        Ok(())
    }

    fn word<T>(&mut self, key: &str, slot: &mut T, parse: impl Fn(&str) -> Option<T>, choices: &str) -> Result<()> {
        if let Some(e) = self.take(key) {
            *slot = parse(&e.value).ok_or_else(|| Self::bad(key, e.line, format!("expected one of {choices}, got `{}`", e.value)))?;
        }
        Ok(())
    }

    fn required<T: std::str::FromStr>(&mut self, key: &str, what: &str) -> Result<(T, usize)> {
        self.parsed(key, what)?.ok_or_else(|| Self::bad(key, 0, "required key is missing"))
    }
}

/// Parse and validate a configuration, filling defaults.
///
/// `problem.n`, `problem.alpha0`, `problem.kappa` and `problem.datum` are
/// required; everything else has a default.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut f = Fields { map: tokenize(text)? };
    let (n, n_line) = f.required::<usize>("problem.n", "an integer")?;
    let (alpha0, a_line) = f.required::<f64>("problem.alpha0", "a number")?;
    let (kappa, k_line) = f.required::<f64>("problem.kappa", "a number")?;
    let datum_entry = f.take("problem.datum").ok_or_else(|| Fields::bad("problem.datum", 0, "required key is missing"))?;
    let datum = DatumKind::parse(&datum_entry.value).ok_or_else(|| {
        Fields::bad(
            "problem.datum",
            datum_entry.line,
            format!("expected one of hyperboloid, cone-smooth, quadrupole, file, got `{}`", datum_entry.value),
        )
    })?;
    if n < 2 {
        return Err(Fields::bad("problem.n", n_line, format!("must be at least 2, got {n}")));
    }
    if !(alpha0.is_finite() && alpha0 > 0.0) {
        return Err(Fields::bad("problem.alpha0", a_line, format!("must be positive, got {alpha0}")));
    }
    if !(kappa.is_finite() && kappa >= 0.0) {
        return Err(Fields::bad("problem.kappa", k_line, format!("must be non-negative, got {kappa}")));
    }
    let mut c = RunConfig::new(n, alpha0, kappa, datum);
    let module_line = f.map.get("problem.module").map(|e| e.line);
    f.word(
        "problem.module",
        &mut c.problem.module,
        |s| match s {
            "radial" => Some(ModuleKind::Radial),
            "grid2d" => Some(ModuleKind::Grid2d),
            _ => None,
        },
        "radial, grid2d",
    )?;
    if let Some(e) = f.take("problem.datum_file") {
        c.problem.datum_file = Some(e.value);
    }
    f.real("problem.delta", &mut c.problem.delta, |v| v >= 0.0, "must be non-negative")?;
    f.real("grid.radius", &mut c.grid.radius, |v| v > 0.0, "must be positive")?;
    f.count("grid.cells", &mut c.grid.cells, 3)?;
    f.real("grid.stretch", &mut c.grid.stretch, |v| v >= 0.0, "must be non-negative")?;
    f.real("grid.half_width", &mut c.grid.half_width, |v| v > 0.0, "must be positive")?;
    f.count("grid.m", &mut c.grid.m, 4)?;
    let s = &mut c.solver;
    f.real("solver.dt", &mut s.dt, |v| v > 0.0, "must be positive")?;
    f.real("solver.newton_tol", &mut s.newton_tol, |v| v > 0.0, "must be positive")?;
    f.count("solver.newton_max_iter", &mut s.newton_max_iter, 1)?;
    f.real("solver.h_min", &mut s.h_min, |v| v > 0.0, "must be positive")?;
    f.word("solver.bc", &mut s.bc_kind, parse_boundary, "neumann, dirichlet")?;
    f.real("solver.flat_eps", &mut s.flat_eps, |v| v > 0.0, "must be positive")?;
    f.word("solver.scheme", &mut s.scheme, parse_scheme, "bdf2, backward-euler")?;
    f.real("solver.max_slope_change", &mut s.max_slope_change, |v| v > 0.0 && v < 1.0, "must lie in (0, 1)")?;
    f.count("solver.sample_every", &mut s.sample_every, 1)?;
    f.real(
        "probes.probe_fraction",
        &mut c.probes.probe_fraction,
        |v| (0.5..=0.8).contains(&v),
        "must lie in [0.5, 0.8]",
    )?;
    f.real("probes.star_center", &mut c.probes.star_center, |_| true, "must be finite")?;
    if let Some(e) = f.take("run.t_end") {
        if e.value != "flat" {
            let v: f64 = e
                .value
                .parse()
                .map_err(|_| Fields::bad("run.t_end", e.line, format!("expected a number or `flat`, got `{}`", e.value)))?;
            if !(v.is_finite() && v > 0.0) {
                return Err(Fields::bad("run.t_end", e.line, format!("must be positive, got {v}")));
            }
            c.run.t_end = Some(v);
        }
    }
    if let Some((v, _)) = f.parsed::<u64>("run.seed", "a non-negative integer")? {
        c.run.seed = v;
    }
    if let Some(e) = f.take("output.csv") {
        c.output.csv = Some(e.value);
    }
    if let Some(e) = f.take("output.snapshot") {
        c.output.snapshot = Some(e.value);
    }
    if let Some((key, e)) = f.map.iter().next() {
        return Err(Fields::bad(key, e.line, "unknown key"));
    }
    if c.problem.datum == DatumKind::File && c.problem.datum_file.is_none() {
        return Err(Fields::bad("problem.datum_file", datum_entry.line, "required when problem.datum = file"));
    }
    if c.problem.module == ModuleKind::Grid2d && c.problem.n != 2 {
        return Err(Fields::bad("problem.module", module_line.unwrap_or(0), "grid2d requires problem.n = 2"));
    }
    if c.problem.datum == DatumKind::Quadrupole && c.problem.module != ModuleKind::Grid2d {
        return Err(Fields::bad("problem.datum", datum_entry.line, "quadrupole data need problem.module = grid2d"));
    }
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "problem.n = 2\nproblem.alpha0 = 1\nproblem.kappa = 0.1\nproblem.datum = hyperboloid\n";

    #[test]
    fn minimal_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c, RunConfig::new(2, 1.0, 0.1, DatumKind::Hyperboloid));
        assert_eq!(c.solver, SolverConfig::default());
        assert_eq!(c.run.t_end, None);
    }

    #[test]
    fn round_trip() {
        let mut c = parse_config(MINIMAL).unwrap();
        c.solver.dt = 0.1 + 0.2;
        c.run.t_end = Some(std::f64::consts::LN_2 / 3.0);
        c.output.csv = Some("out dir/run #1.csv".into());
        c.solver.bc_kind = BoundaryKind::DirichletShift;
        let back = parse_config(&c.to_text()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn negative_dt_names_key() {
        let text = format!("{MINIMAL}solver.dt = -1\n");
        match parse_config(&text) {
            Err(ImcfError::Config { key, line, .. }) => {
                assert_eq!(key, "solver.dt");
                assert_eq!(line, 5);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let e = parse_config("problem.n = 2\n  problem.alpha0 1\n").unwrap_err();
        assert_eq!(e, ImcfError::Parse { line: 2, column: 3, message: "expected `section.key = value`".into() });
        let e = parse_config("problem.n = \"2\n").unwrap_err();
        assert!(matches!(e, ImcfError::Parse { line: 1, column: 13, .. }), "{e:?}");
        let e = parse_config("problem.n = 2\nproblem.n = 3\n").unwrap_err();
        assert!(matches!(e, ImcfError::Parse { line: 2, .. }));
        let e = parse_config("Problem.N = 2\n").unwrap_err();
        assert!(matches!(e, ImcfError::Parse { line: 1, column: 1, .. }));
    }

    #[test]
    fn unknown_and_missing_keys() {
        let e = parse_config(&format!("{MINIMAL}solver.dtt = 1\n")).unwrap_err();
        assert!(matches!(e, ImcfError::Config { ref key, line: 5, .. } if key == "solver.dtt"));
        let e = parse_config("problem.n = 2\nproblem.alpha0 = 1\nproblem.datum = hyperboloid\n").unwrap_err();
        assert!(matches!(e, ImcfError::Config { ref key, line: 0, .. } if key == "problem.kappa"));
    }

    #[test]
    fn comments_and_quotes() {
        let text = format!("# header\n{MINIMAL}\noutput.csv = \"a#b.csv\"  # trailing\nsolver.scheme = bdf2#x\n");
        let e = parse_config(&text).unwrap_err();
        assert!(matches!(e, ImcfError::Config { ref key, .. } if key == "solver.scheme"));
        let text = format!("# header\n{MINIMAL}\noutput.csv = \"a#b.csv\"  # trailing\n");
        assert_eq!(parse_config(&text).unwrap().output.csv.as_deref(), Some("a#b.csv"));
    }

    #[test]
    fn cross_field_rules() {
        let e = parse_config(&format!("{MINIMAL}problem.module = grid2d\nproblem.n = 3\n")).unwrap_err();
        assert!(matches!(e, ImcfError::Parse { .. }));
        let text = "problem.n = 3\nproblem.alpha0 = 1\nproblem.kappa = 0.1\nproblem.datum = hyperboloid\nproblem.module = grid2d\n";
        assert!(matches!(parse_config(text), Err(ImcfError::Config { ref key, .. }) if key == "problem.module"));
        let text = "problem.n = 2\nproblem.alpha0 = 1\nproblem.kappa = 0.1\nproblem.datum = file\n";
        assert!(matches!(parse_config(text), Err(ImcfError::Config { ref key, .. }) if key == "problem.datum_file"));
    }

    #[test]
    fn hash_is_stable() {
        assert_eq!(fnv1a_hex(b""), "cbf29ce484222325");
        assert_eq!(fnv1a_hex(b"a"), "af63dc4c8601ec8c");
    }
}
