//! Run configuration: a strict sectioned `key = value` format.
//!
//! ```text
//! # comment
//! [grid]
//! points = 128
//! upper = 32
//!
//! [material]
//! potential = log_quench
//! theta = 1.0
//! theta_c = 2.75
//! delta = 0.05
//! ```
//!
//! Section and key names are fixed; unknown sections or keys, duplicate keys
//! and malformed values are errors that carry the key and line number. List
//! values are comma separated, matrix lists separate matrices with `;`.
//!
//! | section | key | default |
//! |---|---|---|
//! | grid | `points` (per axis, or one value for every axis) | required |
//! | grid | `dim` | number of `points` entries |
//! | grid | `lower` / `upper` (per axis or one value) | `0` / required |
//! | anisotropy | `family` = `isotropic` \| `quadratic` \| `ellipsoid_sum` | `isotropic` |
//! | anisotropy | `matrix` (quadratic, row-major) | required for quadratic |
//! | anisotropy | `matrices` (ellipsoid_sum) | required for ellipsoid_sum |
//! | anisotropy | `samples` / `seed` | `20000` / `1` |
//! | material | `potential` = `log_quench` \| `double_well` | `log_quench` |
//! | material | `theta` / `theta_c` | `1.0` / `2.0` |
//! | material | `m` | `1.0` |
//! | material | `delta` | required |
//! | initial | `kind` = `constant` \| `seeded_noise` \| `tanh_profile` \| `from_snapshot` | required |
//! | initial | `value` (constant) | `0.0` |
//! | initial | `mean` / `amplitude` / `seed` (seeded_noise) | `0.0` / `0.1` / `0` |
//! | initial | `centers` / `width` (tanh_profile, along axis 0) | required / `1.0` |
//! | initial | `path` (from_snapshot) | required |
//! | solver | `scheme` = `imex` \| `explicit` | `imex` |
//! | solver | `dt_init` / `dt_min` / `dt_max` | `1e-6` / `1e-10` / `1e-2` |
//! | solver | `kappa` | `2 A1 B^*` |
//! | solver | `t_final` | required |
//! | solver | `energy_tol` | `1e-12` |
//! | solver | `safeguard` = `reject_and_halve` \| `warn_only` | `reject_and_halve` |
//! | solver | `growth_after` / `dt_factor` | `50` / `2.0` |
//! | output | `directory` | `output` |
//! | output | `diagnostics_stride` / `snapshot_stride` | `1` / `0` |
//! | output | `formats` (subset of `csv`, `snapshot`) | `csv, snapshot` |

use std::collections::BTreeMap;
use std::path::PathBuf;

use anideg_core::stepper::{Safeguard, Scheme, SolverConfig};

use crate::error::ConfigError;

#[derive(Debug, Clone, PartialEq)]
pub struct GridConfig {
    pub points: Vec<usize>,
    pub extents: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum AnisotropyConfig {
    Isotropic,
    Quadratic(Vec<f64>),
    EllipsoidSum(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertificationConfig {
    pub samples: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PresetConfig {
    LogQuench { theta: f64, theta_c: f64 },
    DoubleWell,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaterialConfig {
    pub preset: PresetConfig,
    pub m: f64,
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    Constant(f64),
    SeededNoise { mean: f64, amplitude: f64, seed: u64 },
    TanhProfile { centers: Vec<f64>, width: f64 },
    FromSnapshot(PathBuf),
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub diagnostics_stride: usize,
    pub snapshot_stride: usize,
    pub snapshots: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub anisotropy: AnisotropyConfig,
    pub certification: CertificationConfig,
    pub material: MaterialConfig,
    pub initial: InitialCondition,
    pub solver: SolverConfig,
    pub output: OutputConfig,
}

const SECTIONS: &[(&str, &[&str])] = &[
    ("grid", &["dim", "points", "lower", "upper"]),
    ("anisotropy", &["family", "matrix", "matrices", "samples", "seed"]),
    ("material", &["potential", "theta", "theta_c", "m", "delta"]),
    (
        "initial",
        &["kind", "value", "mean", "amplitude", "seed", "centers", "width", "path"],
    ),
    (
        "solver",
        &[
            "scheme",
            "dt_init",
            "dt_min",
            "dt_max",
            "kappa",
            "t_final",
            "energy_tol",
            "safeguard",
            "growth_after",
            "dt_factor",
        ],
    ),
    ("output", &["directory", "diagnostics_stride", "snapshot_stride", "formats"]),
];

#[derive(Debug, Clone)]
struct Entry {
    value: String,
    line: usize,
}

type Sections = BTreeMap<String, (usize, BTreeMap<String, Entry>)>;

fn lex(text: &str) -> Result<Sections, ConfigError> {
    let mut sections: Sections = BTreeMap::new();
    let mut current: Option<String> = None;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::parse(line, content, "unterminated section header"))?
                .trim();
            if !SECTIONS.iter().any(|(s, _)| *s == name) {
                return Err(ConfigError::parse(line, name, "unknown section"));
            }
            if let Some((first, _)) = sections.get(name) {
                return Err(ConfigError::parse(
                    line,
                    name,
                    format!("duplicate section (first defined on line {first})"),
                ));
            }
            sections.insert(name.to_string(), (line, BTreeMap::new()));
            current = Some(name.to_string());
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::parse(line, content, "expected `key = value`"))?;
        let key = key.trim();
        let value = value.trim();
        let section = current
            .as_ref()
            .ok_or_else(|| ConfigError::parse(line, key, "key outside of any section"))?;
        let allowed = SECTIONS
            .iter()
            .find(|(s, _)| s == section)
            .map(|(_, keys)| *keys)
            .unwrap_or(&[]);
        if !allowed.contains(&key) {
            return Err(ConfigError::parse(line, key, format!("unknown key in [{section}]")));
        }
        if value.is_empty() {
            return Err(ConfigError::parse(line, key, "empty value"));
        }
        let entries = &mut sections.get_mut(section).expect("section exists").1;
        if let Some(prev) = entries.get(key) {
            return Err(ConfigError::parse(
                line,
                key,
                format!("duplicate key (first defined on line {})", prev.line),
            ));
        }
        entries.insert(
            key.to_string(),
            Entry {
                value: value.to_string(),
                line,
            },
        );
    }
    Ok(sections)
}

/// Typed access to one section.
struct Section<'a> {
    name: &'static str,
    line: usize,
    entries: Option<&'a BTreeMap<String, Entry>>,
}

impl<'a> Section<'a> {
    fn get(&self, key: &str) -> Option<&'a Entry> {
        self.entries.and_then(|e| e.get(key))
    }

    fn required(&self, key: &str) -> Result<&'a Entry, ConfigError> {
        self.get(key).ok_or_else(|| ConfigError::Validation {
            key: format!("{}.{key}", self.name),
            line: self.line,
            reason: "missing required key".into(),
        })
    }

    fn parse<T: std::str::FromStr>(&self, entry: &Entry, key: &str, what: &str) -> Result<T, ConfigError> {
        entry
            .value
            .parse()
            .map_err(|_| ConfigError::parse(entry.line, key, format!("expected {what}, got `{}`", entry.value)))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<(f64, usize), ConfigError> {
        match self.get(key) {
            Some(e) => Ok((self.parse(e, key, "a number")?, e.line)),
            None => Ok((default, self.line)),
        }
    }

    fn f64_req(&self, key: &str) -> Result<(f64, usize), ConfigError> {
        let e = self.required(key)?;
        Ok((self.parse(e, key, "a number")?, e.line))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<(usize, usize), ConfigError> {
        match self.get(key) {
            Some(e) => Ok((self.parse(e, key, "a nonnegative integer")?, e.line)),
            None => Ok((default, self.line)),
        }
    }

    fn u64_or(&self, key: &str, default: u64) -> Result<u64, ConfigError> {
        match self.get(key) {
            Some(e) => self.parse(e, key, "a nonnegative integer"),
            None => Ok(default),
        }
    }

    fn word_or(&self, key: &str, default: &'a str) -> (&'a str, usize) {
        match self.get(key) {
            Some(e) => (e.value.as_str(), e.line),
            None => (default, self.line),
        }
    }

    fn list<T: std::str::FromStr>(&self, entry: &Entry, key: &str, what: &str) -> Result<Vec<T>, ConfigError> {
        entry
            .value
            .split(',')
            .map(|s| {
                s.trim()
                    .parse()
                    .map_err(|_| ConfigError::parse(entry.line, key, format!("expected a list of {what}, got `{}`", entry.value)))
            })
            .collect()
    }
}

fn invalid(key: &str, line: usize, reason: impl Into<String>) -> ConfigError {
    ConfigError::Validation {
        key: key.to_string(),
        line,
        reason: reason.into(),
    }
}

fn choice(key: &str, line: usize, value: &str, allowed: &[&str]) -> ConfigError {
    invalid(key, line, format!("`{value}` is not one of {}", allowed.join(", ")))
}

/// Parses and validates a configuration text.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let sections = lex(text)?;
    let section = |name: &'static str| Section {
        name,
        line: sections.get(name).map(|s| s.0).unwrap_or(0),
        entries: sections.get(name).map(|s| &s.1),
    };
    for required in ["grid", "material", "initial", "solver"] {
        if !sections.contains_key(required) {
            return Err(invalid(required, 0, "missing required section"));
        }
    }

    let grid = parse_grid(&section("grid"))?;
    let d = grid.points.len();
    let (anisotropy, certification) = parse_anisotropy(&section("anisotropy"), d)?;
    let material = parse_material(&section("material"))?;
    let initial = parse_initial(&section("initial"))?;
    let (output, diagnostics_stride, snapshot_stride) = parse_output(&section("output"))?;
    let solver = parse_solver(&section("solver"), diagnostics_stride, snapshot_stride)?;
    Ok(RunConfig {
        grid,
        anisotropy,
        certification,
        material,
        initial,
        solver,
        output,
    })
}

fn per_axis(values: Vec<f64>, d: usize, key: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    match values.len() {
        1 => Ok(vec![values[0]; d]),
        n if n == d => Ok(values),
        n => Err(invalid(key, line, format!("expected 1 or {d} values, got {n}"))),
    }
}

fn parse_grid(s: &Section) -> Result<GridConfig, ConfigError> {
    let pe = s.required("points")?;
    let mut points: Vec<usize> = s.list(pe, "points", "integers")?;
    let d = match s.get("dim") {
        Some(e) => {
            let d: usize = s.parse(e, "dim", "an integer")?;
            if !(1..=3).contains(&d) {
                return Err(invalid("grid.dim", e.line, format!("must be 1, 2 or 3, got {d}")));
            }
            d
        }
        None => points.len(),
    };
    if !(1..=3).contains(&d) {
        return Err(invalid("grid.points", pe.line, "between 1 and 3 axes are supported"));
    }
    if points.len() == 1 {
        points = vec![points[0]; d];
    } else if points.len() != d {
        return Err(invalid(
            "grid.points",
            pe.line,
            format!("expected 1 or {d} values, got {}", points.len()),
        ));
    }
    for &n in &points {
        if n < 8 || !n.is_power_of_two() {
            return Err(invalid("grid.points", pe.line, format!("must be a power of two >= 8, got {n}")));
        }
    }
    let ue = s.required("upper")?;
    let upper = per_axis(s.list(ue, "upper", "numbers")?, d, "grid.upper", ue.line)?;
    let lower = match s.get("lower") {
        Some(le) => per_axis(s.list(le, "lower", "numbers")?, d, "grid.lower", le.line)?,
        None => vec![0.0; d],
    };
    let extents: Vec<(f64, f64)> = lower.into_iter().zip(upper).collect();
    if let Some(&(a, b)) = extents.iter().find(|(a, b)| !(a.is_finite() && b.is_finite() && a < b)) {
        return Err(invalid("grid.upper", ue.line, format!("need lower < upper, got ({a}, {b})")));
    }
    Ok(GridConfig { points, extents })
}

fn parse_matrix(text: &str, d: usize, key: &str, line: usize) -> Result<Vec<f64>, ConfigError> {
    let m: Vec<f64> = text
        .split(',')
        .map(|v| v.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|_| ConfigError::parse(line, key, format!("expected comma separated numbers, got `{text}`")))?;
    if m.len() != d * d {
        return Err(invalid(key, line, format!("expected {} entries for a {d}x{d} matrix, got {}", d * d, m.len())));
    }
    Ok(m)
}

fn parse_anisotropy(s: &Section, d: usize) -> Result<(AnisotropyConfig, CertificationConfig), ConfigError> {
    let (family, line) = s.word_or("family", "isotropic");
    let a = match family {
        "isotropic" => AnisotropyConfig::Isotropic,
        "quadratic" => {
            let e = s.required("matrix")?;
            AnisotropyConfig::Quadratic(parse_matrix(&e.value, d, "anisotropy.matrix", e.line)?)
        }
        "ellipsoid_sum" => {
            let e = s.required("matrices")?;
            let ms = e
                .value
                .split(';')
                .map(|m| parse_matrix(m, d, "anisotropy.matrices", e.line))
                .collect::<Result<Vec<_>, _>>()?;
            AnisotropyConfig::EllipsoidSum(ms)
        }
        other => {
            return Err(choice(
                "anisotropy.family",
                line,
                other,
                &["isotropic", "quadratic", "ellipsoid_sum"],
            ))
        }
    };
    let (samples, sl) = s.usize_or("samples", 20_000)?;
    if samples < 1000 {
        return Err(invalid("anisotropy.samples", sl, format!("must be >= 1000, got {samples}")));
    }
    let seed = s.u64_or("seed", 1)?;
    Ok((a, CertificationConfig { samples, seed }))
}

fn parse_material(s: &Section) -> Result<MaterialConfig, ConfigError> {
    let (preset, line) = s.word_or("potential", "log_quench");
    let preset = match preset {
        "log_quench" => {
            let (theta, tl) = s.f64_or("theta", 1.0)?;
            let (theta_c, cl) = s.f64_or("theta_c", 2.0)?;
            if !(theta > 0.0) {
                return Err(invalid("material.theta", tl, format!("must be > 0, got {theta}")));
            }
            if !(theta_c > 0.0) {
                return Err(invalid("material.theta_c", cl, format!("must be > 0, got {theta_c}")));
            }
            PresetConfig::LogQuench { theta, theta_c }
        }
        "double_well" => PresetConfig::DoubleWell,
        "custom" => {
            return Err(invalid(
                "material.potential",
                line,
                "custom materials are only available through the library API",
            ))
        }
        other => return Err(choice("material.potential", line, other, &["log_quench", "double_well"])),
    };
    let (m, ml) = s.f64_or("m", 1.0)?;
    if !(m >= 1.0 && m.is_finite()) {
        return Err(invalid("material.m", ml, format!("must be >= 1, got {m}")));
    }
    let (delta, dl) = s.f64_req("delta")?;
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta", dl, format!("must lie in the open interval (0,1), got {delta}")));
    }
    Ok(MaterialConfig { preset, m, delta })
}

fn parse_initial(s: &Section) -> Result<InitialCondition, ConfigError> {
    let e = s.required("kind")?;
    Ok(match e.value.as_str() {
        "constant" => InitialCondition::Constant(s.f64_or("value", 0.0)?.0),
        "seeded_noise" => {
            let (amplitude, al) = s.f64_or("amplitude", 0.1)?;
            if !(amplitude >= 0.0) {
                return Err(invalid("initial.amplitude", al, "must be >= 0"));
            }
            InitialCondition::SeededNoise {
                mean: s.f64_or("mean", 0.0)?.0,
                amplitude,
                seed: s.u64_or("seed", 0)?,
            }
        }
        "tanh_profile" => {
            let ce = s.required("centers")?;
            let centers: Vec<f64> = s.list(ce, "centers", "numbers")?;
            if centers.is_empty() || !centers.len().is_multiple_of(2) {
                return Err(invalid("initial.centers", ce.line, "need an even, nonzero number of interface centers"));
            }
            let (width, wl) = s.f64_or("width", 1.0)?;
            if !(width > 0.0) {
                return Err(invalid("initial.width", wl, format!("must be > 0, got {width}")));
            }
            InitialCondition::TanhProfile { centers, width }
        }
        "from_snapshot" => InitialCondition::FromSnapshot(PathBuf::from(&s.required("path")?.value)),
        other => {
            return Err(choice(
                "initial.kind",
                e.line,
                other,
                &["constant", "seeded_noise", "tanh_profile", "from_snapshot"],
            ))
        }
    })
}

fn parse_output(s: &Section) -> Result<(OutputConfig, usize, usize), ConfigError> {
    let (dir, _) = s.word_or("directory", "output");
    let (diagnostics_stride, dl) = s.usize_or("diagnostics_stride", 1)?;
    if diagnostics_stride == 0 {
        return Err(invalid("output.diagnostics_stride", dl, "must be >= 1"));
    }
    let (snapshot_stride, _) = s.usize_or("snapshot_stride", 0)?;
    let mut snapshots = true;
    if let Some(e) = s.get("formats") {
        let formats: Vec<String> = s.list(e, "formats", "format names")?;
        for f in &formats {
            if f != "csv" && f != "snapshot" {
                return Err(choice("output.formats", e.line, f, &["csv", "snapshot"]));
            }
        }
        if !formats.iter().any(|f| f == "csv") {
            return Err(invalid("output.formats", e.line, "the diagnostics `csv` format is mandatory"));
        }
        snapshots = formats.iter().any(|f| f == "snapshot");
    }
    Ok((
        OutputConfig {
            directory: PathBuf::from(dir),
            diagnostics_stride,
            snapshot_stride,
            snapshots,
        },
        diagnostics_stride,
        snapshot_stride,
    ))
}

fn parse_solver(s: &Section, diagnostics_stride: usize, snapshot_stride: usize) -> Result<SolverConfig, ConfigError> {
    let (scheme, line) = s.word_or("scheme", "imex");
    let scheme = match scheme {
        "imex" => Scheme::StabilizedImex,
        "explicit" => Scheme::Explicit,
        other => return Err(choice("solver.scheme", line, other, &["imex", "explicit"])),
    };
    let (safeguard, line) = s.word_or("safeguard", "reject_and_halve");
    let safeguard = match safeguard {
        "reject_and_halve" => Safeguard::RejectAndHalve,
        "warn_only" => Safeguard::WarnOnly,
        other => return Err(choice("solver.safeguard", line, other, &["reject_and_halve", "warn_only"])),
    };
    let (dt_init, il) = s.f64_or("dt_init", 1e-6)?;
    let (dt_min, _) = s.f64_or("dt_min", 1e-10)?;
    let (dt_max, _) = s.f64_or("dt_max", 1e-2)?;
    if !(dt_min > 0.0 && dt_min <= dt_init && dt_init <= dt_max) {
        return Err(invalid(
            "solver.dt_init",
            il,
            format!("need 0 < dt_min <= dt_init <= dt_max, got {dt_min} / {dt_init} / {dt_max}"),
        ));
    }
    let kappa = match s.get("kappa") {
        Some(e) => {
            let k: f64 = s.parse(e, "kappa", "a number")?;
            if !(k >= 0.0 && k.is_finite()) {
                return Err(invalid("solver.kappa", e.line, format!("must be >= 0, got {k}")));
            }
            Some(k)
        }
        None => None,
    };
    let (t_final, tl) = s.f64_req("t_final")?;
    if !(t_final >= 0.0 && t_final.is_finite()) {
        return Err(invalid("solver.t_final", tl, format!("must be finite and >= 0, got {t_final}")));
    }
    let (energy_tol, el) = s.f64_or("energy_tol", 1e-12)?;
    if !(energy_tol >= 0.0) {
        return Err(invalid("solver.energy_tol", el, "must be >= 0"));
    }
    let (growth_after, gl) = s.usize_or("growth_after", 50)?;
    if growth_after == 0 {
        return Err(invalid("solver.growth_after", gl, "must be >= 1"));
    }
    let (dt_factor, fl) = s.f64_or("dt_factor", 2.0)?;
    if !(dt_factor > 1.0) {
        return Err(invalid("solver.dt_factor", fl, format!("must exceed 1, got {dt_factor}")));
    }
    Ok(SolverConfig {
        scheme,
        dt_init,
        dt_min,
        dt_max,
        kappa,
        t_final,
        energy_tol_per_step: energy_tol,
        safeguard,
        snapshot_stride,
        diagnostics_stride,
        growth_after,
        dt_factor,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "\
[grid]
points = 64
upper = 16

[material]
delta = 0.1

[initial]
kind = constant
value = 0.2

[solver]
t_final = 1
";

    #[test]
    fn minimal_config_fills_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.grid.points, vec![64]);
        assert_eq!(c.grid.extents, vec![(0.0, 16.0)]);
        assert_eq!(c.anisotropy, AnisotropyConfig::Isotropic);
        assert_eq!(c.certification, CertificationConfig { samples: 20_000, seed: 1 });
        assert_eq!(
            c.material,
            MaterialConfig {
                preset: PresetConfig::LogQuench { theta: 1.0, theta_c: 2.0 },
                m: 1.0,
                delta: 0.1
            }
        );
        assert_eq!(c.initial, InitialCondition::Constant(0.2));
        assert_eq!(c.solver.scheme, Scheme::StabilizedImex);
        assert_eq!((c.solver.dt_init, c.solver.dt_min, c.solver.dt_max), (1e-6, 1e-10, 1e-2));
        assert_eq!(c.solver.kappa, None);
        assert_eq!(c.solver.energy_tol_per_step, 1e-12);
        assert_eq!(c.solver.safeguard, Safeguard::RejectAndHalve);
        assert_eq!((c.solver.growth_after, c.solver.dt_factor), (50, 2.0));
        assert_eq!(c.output.directory, PathBuf::from("output"));
        assert_eq!((c.output.diagnostics_stride, c.output.snapshot_stride), (1, 0));
        assert!(c.output.snapshots);
    }

    #[test]
    fn delta_out_of_range() {
        let text = MINIMAL.replace("delta = 0.1", "delta = 1.5");
        match parse_config(&text).unwrap_err() {
            ConfigError::Validation { key, line, reason } => {
                assert_eq!(key, "delta");
                assert_eq!(line, 6);
                assert!(reason.contains("(0,1)"), "{reason}");
            }
            e => panic!("{e:?}"),
        }
    }

    #[test]
    fn duplicate_key_names_both_lines() {
        let text = MINIMAL.replace("upper = 16", "upper = 16\nupper = 8");
        let err = parse_config(&text).unwrap_err();
        match &err {
            ConfigError::Parse { line, key, reason } => {
                assert_eq!((*line, key.as_str()), (4, "upper"));
                assert!(reason.contains("line 3"), "{reason}");
            }
            e => panic!("{e:?}"),
        }
        assert!(err.to_string().contains("line 4") && err.to_string().contains("line 3"));
    }

    #[test]
    fn unknown_keys_and_sections() {
        let e = parse_config(&MINIMAL.replace("value = 0.2", "valeu = 0.2")).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 10, ref key, .. } if key == "valeu"));
        let e = parse_config(&format!("{MINIMAL}\n[extra]\n")).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { ref key, .. } if key == "extra"));
        let e = parse_config("x = 1\n").unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 1, .. }));
        let e = parse_config(&MINIMAL.replace("[solver]\nt_final = 1\n", "")).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { ref key, .. } if key == "solver"));
    }

    #[test]
    fn malformed_values() {
        let e = parse_config(&MINIMAL.replace("points = 64", "points = 60")).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { ref key, line: 2, .. } if key == "grid.points"));
        let e = parse_config(&MINIMAL.replace("value = 0.2", "value = abc")).unwrap_err();
        assert!(matches!(e, ConfigError::Parse { line: 10, .. }));
        let e = parse_config(&MINIMAL.replace("t_final = 1", "t_final = 1\nscheme = rk4")).unwrap_err();
        assert!(matches!(e, ConfigError::Validation { ref key, .. } if key == "solver.scheme"));
    }

    #[test]
    fn full_config() {
        let text = "\
[grid]
points = 32, 64
lower = -1, 0
upper = 1, 4
[anisotropy]
family = ellipsoid_sum
matrices = 1, 0, 0, 0.25; 0.5, 0.2, 0.2, 1.5
samples = 5000
[material]
potential = log_quench
theta = 1
theta_c = 2.75
m = 2
delta = 0.05
[initial]
kind = seeded_noise # trailing comment
mean = 0.4
amplitude = 0.05
seed = 9
[solver]
scheme = explicit
dt_init = 1e-7
dt_min = 1e-9
dt_max = 1e-5
kappa = 3
t_final = 0.01
safeguard = warn_only
[output]
directory = runs/a
snapshot_stride = 10
formats = csv
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.grid.extents, vec![(-1.0, 1.0), (0.0, 4.0)]);
        assert_eq!(
            c.anisotropy,
            AnisotropyConfig::EllipsoidSum(vec![vec![1.0, 0.0, 0.0, 0.25], vec![0.5, 0.2, 0.2, 1.5]])
        );
        assert_eq!(
            c.initial,
            InitialCondition::SeededNoise {
                mean: 0.4,
                amplitude: 0.05,
                seed: 9
            }
        );
        assert_eq!(c.solver.kappa, Some(3.0));
        assert_eq!(c.solver.safeguard, Safeguard::WarnOnly);
        assert_eq!(c.solver.snapshot_stride, 10);
        assert!(!c.output.snapshots);
        let bad = text.replace("1, 0, 0, 0.25;", "1, 0, 0;");
        assert!(matches!(parse_config(&bad), Err(ConfigError::Validation { .. })));
    }
}
