//! Flat `key = value` experiment configs.
//!
//! Blank lines and `#` comments are ignored; lists are comma separated.
//! Every key is declared in [`SCHEMA`]; anything else is rejected.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::conformal::ConformalProfile;
use crate::grid::Point;
use crate::prescription::from_family;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    WidthSweep,
    PmcSolve,
    DriftDemo,
    ConformalExample,
    HypothesisReport,
}

impl Experiment {
    pub const ALL: [Experiment; 5] = [
        Experiment::WidthSweep,
        Experiment::PmcSolve,
        Experiment::DriftDemo,
        Experiment::ConformalExample,
        Experiment::HypothesisReport,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::WidthSweep => "width-sweep",
            Experiment::PmcSolve => "pmc-solve",
            Experiment::DriftDemo => "drift-demo",
            Experiment::ConformalExample => "conformal-example",
            Experiment::HypothesisReport => "hypothesis-report",
        }
    }
}

impl FromStr for Experiment {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Experiment::ALL.into_iter().find(|e| e.name() == s).ok_or_else(|| {
            let names: Vec<_> = Experiment::ALL.iter().map(|e| e.name()).collect();
            format!("unknown experiment '{s}' (expected one of {})", names.join(", "))
        })
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Text,
    Int { min: u64 },
    Real { min: f64, max: f64 },
    Positive,
    Reals { min: f64, max: f64 },
    Flag,
}

struct KeySpec {
    name: &'static str,
    kind: Kind,
    /// Experiments that cannot run without the key.
    required_by: &'static [Experiment],
    help: &'static str,
}

const ALL: &[Experiment] = &Experiment::ALL;
const RADII: &[Experiment] = &[Experiment::WidthSweep, Experiment::PmcSolve, Experiment::DriftDemo];
const INF: f64 = f64::INFINITY;

const SCHEMA: &[KeySpec] = &[
    KeySpec { name: "experiment", kind: Kind::Text, required_by: ALL, help: "experiment name" },
    KeySpec { name: "family", kind: Kind::Text, required_by: ALL, help: "prescription family" },
    KeySpec { name: "params", kind: Kind::Reals { min: -INF, max: INF }, required_by: &[], help: "family parameters" },
    KeySpec { name: "dimension", kind: Kind::Int { min: 2 }, required_by: &[], help: "n; only 2 is supported" },
    KeySpec { name: "grid_theta", kind: Kind::Int { min: 4 }, required_by: &[], help: "polar nodes" },
    KeySpec { name: "grid_phi", kind: Kind::Int { min: 8 }, required_by: &[], help: "azimuthal nodes" },
    KeySpec { name: "nodes", kind: Kind::Int { min: 2 }, required_by: &[], help: "path node count m" },
    KeySpec { name: "radii", kind: Kind::Reals { min: 0.0, max: INF }, required_by: RADII, help: "truncation radii" },
    KeySpec { name: "ts", kind: Kind::Reals { min: 0.0, max: INF }, required_by: &[Experiment::ConformalExample], help: "conformal parameters t" },
    KeySpec { name: "profile", kind: Kind::Text, required_by: &[], help: "conformal profile" },
    KeySpec { name: "profile_params", kind: Kind::Reals { min: 0.0, max: INF }, required_by: &[], help: "profile parameters" },
    KeySpec { name: "seed", kind: Kind::Int { min: 0 }, required_by: &[], help: "random seed" },
    KeySpec { name: "tolerance", kind: Kind::Real { min: 0.0, max: INF }, required_by: &[], help: "slope and monotonicity slack" },
    KeySpec { name: "residual_tolerance", kind: Kind::Positive, required_by: &[], help: "saddle residual bound" },
    KeySpec { name: "center_fractions", kind: Kind::Reals { min: 0.0, max: 1.0 }, required_by: &[], help: "sphere-path centers as fractions of R" },
    KeySpec { name: "center_direction", kind: Kind::Reals { min: -INF, max: INF }, required_by: &[], help: "direction of the path centers" },
    KeySpec { name: "path_radius", kind: Kind::Positive, required_by: &[], help: "endpoint ball radius" },
    KeySpec { name: "perturbations", kind: Kind::Int { min: 0 }, required_by: &[], help: "perturbed copies per path" },
    KeySpec { name: "perturbation_amplitude", kind: Kind::Real { min: 0.0, max: 1.0 }, required_by: &[], help: "perturbation size" },
    KeySpec { name: "max_sweeps", kind: Kind::Int { min: 1 }, required_by: &[], help: "string sweeps" },
    KeySpec { name: "band_limit", kind: Kind::Int { min: 1 }, required_by: &[], help: "string harmonic degree" },
    KeySpec { name: "saddle_band_limit", kind: Kind::Int { min: 2 }, required_by: &[], help: "saddle harmonic degree" },
    KeySpec { name: "saddle_iterations", kind: Kind::Int { min: 1 }, required_by: &[], help: "saddle iterations" },
    KeySpec { name: "expect_class", kind: Kind::Text, required_by: &[], help: "expected drift class" },
    KeySpec { name: "sigma", kind: Kind::Real { min: 0.0, max: 1.0 }, required_by: &[], help: "scaling constant" },
    KeySpec { name: "rho", kind: Kind::Positive, required_by: &[], help: "inner radius of the scaling check" },
    KeySpec { name: "r_max", kind: Kind::Positive, required_by: &[], help: "outer radius of the scaling check" },
    KeySpec { name: "samples", kind: Kind::Int { min: 2 }, required_by: &[], help: "random samples" },
    KeySpec { name: "width", kind: Kind::Real { min: -INF, max: INF }, required_by: &[], help: "width for the gap hypothesis" },
    KeySpec { name: "snapshots", kind: Kind::Flag, required_by: &[], help: "write region snapshots" },
    KeySpec { name: "out_dir", kind: Kind::Text, required_by: &[], help: "output directory" },
];

/// Schema and range violations, one message per problem.
#[derive(Debug, Clone, Default, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Raw key/value pairs, after syntax checks.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    pub entries: BTreeMap<String, String>,
}

impl RawConfig {
    pub fn parse(text: &str) -> (RawConfig, Vec<String>) {
        let mut entries = BTreeMap::new();
        let mut errors = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                errors.push(format!("line {}: expected 'key = value'", n + 1));
                continue;
            };
            let (k, v) = (k.trim().to_string(), v.trim().to_string());
            if entries.insert(k.clone(), v).is_some() {
                errors.push(format!("line {}: duplicate key '{k}'", n + 1));
            }
        }
        (RawConfig { entries }, errors)
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }
}

fn parse_reals(v: &str) -> Result<Vec<f64>, String> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    v.split(',')
        .map(|s| s.trim().parse::<f64>().map_err(|_| format!("'{}' is not a number", s.trim())))
        .collect()
}

fn check_value(spec: &KeySpec, v: &str) -> Result<(), String> {
    let range = |x: f64, min: f64, max: f64| -> Result<(), String> {
        if !x.is_finite() || x < min || x > max {
            Err(format!("value {x} out of range"))
        } else {
            Ok(())
        }
    };
    match spec.kind {
        Kind::Text => Ok(()),
        Kind::Flag => v.parse::<bool>().map(|_| ()).map_err(|_| format!("'{v}' is not true/false")),
        Kind::Int { min } => {
            let x = v.parse::<u64>().map_err(|_| format!("'{v}' is not a non-negative integer"))?;
            if x < min {
                Err(format!("value {x} is below the minimum {min}"))
            } else {
                Ok(())
            }
        }
        Kind::Positive => match v.parse::<f64>() {
            Ok(x) if x > 0.0 && x.is_finite() => Ok(()),
            Ok(x) => Err(format!("value {x} must be positive")),
            Err(_) => Err(format!("'{v}' is not a number")),
        },
        Kind::Real { min, max } => range(v.parse::<f64>().map_err(|_| format!("'{v}' is not a number"))?, min, max),
        Kind::Reals { min, max } => {
            for x in parse_reals(v)? {
                if !x.is_finite() || x < min || x > max {
                    return Err(format!("value {x} out of range"));
                }
            }
            Ok(())
        }
    }
}

/// Full list of violations; never fails.
pub fn validate(raw: &RawConfig) -> ValidationReport {
    let mut violations = Vec::new();
    for key in raw.entries.keys() {
        if !SCHEMA.iter().any(|s| s.name == key) {
            violations.push(format!("unknown key '{key}'"));
        }
    }
    let experiment = raw.get("experiment").map(Experiment::from_str);
    if let Some(Err(e)) = &experiment {
        violations.push(format!("experiment: {e}"));
    }
    for spec in SCHEMA {
        match raw.get(spec.name) {
            None => {
                let needed = match &experiment {
                    Some(Ok(e)) => spec.required_by.contains(e),
                    _ => spec.required_by == ALL,
                };
                if needed {
                    violations.push(format!("missing required key '{}' ({})", spec.name, spec.help));
                }
            }
            Some(v) => {
                if let Err(e) = check_value(spec, v) {
                    violations.push(format!("{}: {e}", spec.name));
                }
            }
        }
    }
    if let Some(d) = raw.get("dimension") {
        if d.parse::<u64>().is_ok_and(|d| d != 2) {
            violations.push(format!("dimension: only n = 2 is supported, got {d}"));
        }
    }
    if let Some(family) = raw.get("family") {
        let params = raw.get("params").map(parse_reals).unwrap_or(Ok(Vec::new()));
        if let Ok(params) = params {
            if let Err(e) = from_family(family, &params) {
                violations.push(format!("family: {e}"));
            }
        }
    }
    if let Some(radii) = raw.get("radii").and_then(|v| parse_reals(v).ok()) {
        if radii.windows(2).any(|w| w[1] <= w[0]) {
            violations.push("radii: must increase strictly".into());
        }
        if radii.iter().any(|&r| r <= 0.0) {
            violations.push("radii: must be positive".into());
        }
    }
    if let Some(name) = raw.get("profile") {
        let params = raw.get("profile_params").and_then(|v| parse_reals(v).ok()).unwrap_or_default();
        if let Err(e) = ConformalProfile::from_name(name, &params) {
            violations.push(format!("profile: {e}"));
        }
    }
    if let Some(dir) = raw.get("center_direction").and_then(|v| parse_reals(v).ok()) {
        if dir.len() != 3 || dir.iter().all(|&x| x == 0.0) {
            violations.push("center_direction: expected three components, not all zero".into());
        }
    }
    if let Some(c) = raw.get("expect_class") {
        if !["confined", "drifting", "neutral-drift", "inconclusive"].contains(&c) {
            violations.push(format!("expect_class: unknown class '{c}'"));
        }
    }
    ValidationReport { violations }
}

/// Typed config with defaults filled in.
#[derive(Debug, Clone, Serialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub dimension: usize,
    pub family: String,
    pub params: Vec<f64>,
    pub grid_theta: usize,
    pub grid_phi: usize,
    pub nodes: usize,
    pub radii: Vec<f64>,
    pub ts: Vec<f64>,
    pub profile: String,
    pub profile_params: Vec<f64>,
    pub seed: u64,
    pub tolerance: f64,
    pub residual_tolerance: f64,
    pub center_fractions: Vec<f64>,
    pub center_direction: [f64; 3],
    pub path_radius: f64,
    pub perturbations: usize,
    pub perturbation_amplitude: f64,
    pub max_sweeps: usize,
    pub band_limit: usize,
    pub saddle_band_limit: usize,
    pub saddle_iterations: usize,
    pub expect_class: Option<String>,
    pub sigma: f64,
    pub rho: f64,
    pub r_max: f64,
    pub samples: usize,
    pub width: Option<f64>,
    pub snapshots: bool,
    pub out_dir: Option<PathBuf>,
}

impl ExperimentConfig {
    /// Parse and validate; the error lists every violation.
    pub fn from_text(text: &str) -> Result<Self, ValidationReport> {
        let (raw, mut syntax) = RawConfig::parse(text);
        let mut report = validate(&raw);
        syntax.append(&mut report.violations);
        if !syntax.is_empty() {
            return Err(ValidationReport { violations: syntax });
        }
        Ok(Self::from_raw(&raw))
    }

    /// Assumes `validate(raw)` is clean.
    fn from_raw(raw: &RawConfig) -> Self {
        let text = |k: &str, d: &str| raw.get(k).unwrap_or(d).to_string();
        let int = |k: &str, d: u64| raw.get(k).map_or(d, |v| v.parse().expect("validated"));
        let real = |k: &str, d: f64| raw.get(k).map_or(d, |v| v.parse().expect("validated"));
        let reals = |k: &str, d: &[f64]| raw.get(k).map_or(d.to_vec(), |v| parse_reals(v).expect("validated"));
        let dir = reals("center_direction", &[1.0, 0.0, 0.0]);
        ExperimentConfig {
            experiment: raw.get("experiment").expect("validated").parse().expect("validated"),
            dimension: int("dimension", 2) as usize,
            family: text("family", ""),
            params: reals("params", &[]),
            grid_theta: int("grid_theta", 16) as usize,
            grid_phi: int("grid_phi", 32) as usize,
            nodes: int("nodes", 101) as usize,
            radii: reals("radii", &[]),
            ts: reals("ts", &[]),
            profile: text("profile", "inverse-sqrt"),
            profile_params: reals("profile_params", &[]),
            seed: int("seed", 0),
            tolerance: real("tolerance", 1e-3),
            residual_tolerance: real("residual_tolerance", 1e-4),
            center_fractions: reals("center_fractions", &[0.0]),
            center_direction: [dir[0], dir[1], dir[2]],
            path_radius: real("path_radius", 3.0),
            perturbations: int("perturbations", 0) as usize,
            perturbation_amplitude: real("perturbation_amplitude", 0.05),
            max_sweeps: int("max_sweeps", 60) as usize,
            band_limit: int("band_limit", 6) as usize,
            saddle_band_limit: int("saddle_band_limit", 8) as usize,
            saddle_iterations: int("saddle_iterations", 80) as usize,
            expect_class: raw.get("expect_class").map(str::to_string),
            sigma: real("sigma", 0.5),
            rho: real("rho", 1.0),
            r_max: real("r_max", 100.0),
            samples: int("samples", 1000) as usize,
            width: raw.get("width").map(|v| v.parse().expect("validated")),
            snapshots: raw.get("snapshots").is_none_or(|v| v.parse().expect("validated")),
            out_dir: raw.get("out_dir").map(PathBuf::from),
        }
    }

    pub fn direction(&self) -> Point {
        Point::from(self.center_direction)
    }

    /// Documented keys with a short description, for `--help`-style output.
    pub fn keys() -> impl Iterator<Item = (&'static str, &'static str)> {
        SCHEMA.iter().map(|s| (s.name, s.help))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_lists_required_keys() {
        let r = ExperimentConfig::from_text("").unwrap_err();
        assert_eq!(r.violations.len(), 2);
        assert!(r.violations[0].contains("'experiment'"));
        assert!(r.violations[1].contains("'family'"));
    }

    #[test]
    fn unknown_key_is_named() {
        let r = ExperimentConfig::from_text("experiment = width-sweep\nfamily = constant\nparams = 2\nradii = 5\nfoo_bar = 1\n")
            .unwrap_err();
        assert_eq!(r.violations, vec!["unknown key 'foo_bar'".to_string()]);
    }

    #[test]
    fn single_node_path_is_out_of_range() {
        let r = ExperimentConfig::from_text("experiment = width-sweep\nfamily = constant\nparams = 2\nradii = 5\nnodes = 1\n")
            .unwrap_err();
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].starts_with("nodes:"));
    }

    #[test]
    fn defaults_and_lists() {
        let c = ExperimentConfig::from_text(
            "# sample\nexperiment = conformal-example\nfamily = constant\nparams = 2\nts = 0, 0.02, 0.05\n",
        )
        .unwrap();
        assert_eq!(c.experiment, Experiment::ConformalExample);
        assert_eq!(c.ts, vec![0.0, 0.02, 0.05]);
        assert_eq!((c.grid_theta, c.grid_phi, c.nodes), (16, 32, 101));
        assert!(c.snapshots);
    }

    #[test]
    fn collects_every_violation() {
        let r = ExperimentConfig::from_text(
            "experiment = drift-demo\nfamily = gaussian\nparams = 2, 0.5\nradii = 10, 5\ndimension = 3\nsigma = 2\nbad line\n",
        )
        .unwrap_err();
        let all = r.violations.join("\n");
        for needle in ["line 7", "dimension", "sigma", "family", "radii: must increase"] {
            assert!(all.contains(needle), "{needle} missing from {all}");
        }
    }
}
