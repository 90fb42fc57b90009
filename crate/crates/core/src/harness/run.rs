//! Experiment orchestration and artifact output.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use super::config::{Experiment, ExperimentConfig, ValidationReport};
use crate::conformal::{dt_energy_at_zero, hypothesis_h_check, phi, phi_ode, ConformalProfile};
use crate::engine::{
    check_nice_class, drift_diagnostic, estimate_width, refine_saddle, width_sweep, DriftClass, EngineConfig,
    SaddleCandidate, SaddleConfig, WidthRun,
};
use crate::functional::{
    energy, gradient, gradient_mass, homothety_derivative, isoperimetric_certificate, transition_mass,
    translation_derivative, Metric,
};
use crate::grid::{Point, SphereGrid};
use crate::hypotheses::{check_h1, check_h2, check_h3, check_h4, HypothesisReport};
use crate::prescription::{from_family, Prescription, Truncated};

/// Slack below the isoperimetric certificate tolerated for widths.
pub const CERTIFICATE_SLACK: f64 = 5e-3;
/// Largest `t` covered by the small-`t` width statement.
pub const CONFORMAL_T_CLAIM: f64 = 0.05;

#[derive(Debug, Error)]
pub enum RunError {
    #[error("invalid config:\n{0}")]
    Config(ValidationReport),
    #[error("numerical failure: {0}")]
    Numerical(#[from] crate::Error),
    #[error("i/o failure: {0}")]
    Io(#[from] std::io::Error),
}

impl RunError {
    pub fn exit_code(&self) -> u8 {
        match self {
            RunError::Config(_) => 2,
            RunError::Numerical(_) | RunError::Io(_) => 3,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Assertion {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct Stage {
    pub name: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub tool_version: String,
    pub wall_clock_seconds: f64,
    pub stages: Vec<Stage>,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
    pub assertions: Vec<Assertion>,
    pub pass: bool,
}

impl RunManifest {
    pub fn exit_code(&self) -> u8 {
        if self.pass {
            0
        } else {
            1
        }
    }
}

/// 17 significant digits.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn opt(x: Option<f64>) -> String {
    x.map(num).unwrap_or_default()
}

struct Outputs {
    dir: PathBuf,
    files: Vec<String>,
}

impl Outputs {
    fn new(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    fn csv(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<(), RunError> {
        let mut w = csv::Writer::from_path(self.dir.join(name)).map_err(csv_io)?;
        w.write_record(header).map_err(csv_io)?;
        for r in rows {
            w.write_record(r).map_err(csv_io)?;
        }
        w.flush()?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn text(&mut self, name: &str, content: &str) -> Result<(), RunError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(path, content)?;
        self.files.push(name.to_string());
        Ok(())
    }
}

fn csv_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e)
}

struct Timer {
    stages: Vec<Stage>,
}

impl Timer {
    fn time<T>(&mut self, name: &str, f: impl FnOnce() -> T) -> T {
        let t0 = Instant::now();
        let out = f();
        self.stages.push(Stage { name: name.to_string(), seconds: t0.elapsed().as_secs_f64() });
        out
    }
}

pub fn engine_config(c: &ExperimentConfig) -> crate::Result<EngineConfig> {
    let grid = Arc::new(SphereGrid::new(c.grid_theta, c.grid_phi)?);
    let mut e = EngineConfig::new(grid);
    e.nodes = c.nodes;
    e.center_fractions = c.center_fractions.clone();
    e.center_direction = c.direction();
    e.path_radius = c.path_radius;
    e.perturbations = c.perturbations;
    e.perturbation_amplitude = c.perturbation_amplitude;
    e.seed = c.seed;
    e.schedule.max_sweeps = c.max_sweeps;
    e.schedule.band_limit = c.band_limit;
    Ok(e)
}

fn saddle_config(c: &ExperimentConfig) -> SaddleConfig {
    SaddleConfig { band_limit: c.saddle_band_limit, max_iterations: c.saddle_iterations, ..SaddleConfig::default() }
}

fn radius_tag(r: f64) -> String {
    format!("{r}").replace('.', "p")
}

/// Run the configured experiment, writing artifacts and `manifest.json`
/// under `out_dir`.
pub fn run(config: &ExperimentConfig, out_dir: &Path) -> Result<RunManifest, RunError> {
    let t0 = Instant::now();
    let mut out = Outputs::new(out_dir)?;
    let mut timer = Timer { stages: Vec::new() };
    let assertions = match config.experiment {
        Experiment::WidthSweep => run_width_sweep(config, &mut out, &mut timer)?,
        Experiment::PmcSolve => run_pmc_solve(config, &mut out, &mut timer)?,
        Experiment::DriftDemo => run_drift_demo(config, &mut out, &mut timer)?,
        Experiment::ConformalExample => run_conformal(config, &mut out, &mut timer)?,
        Experiment::HypothesisReport => run_hypotheses(config, &mut out, &mut timer)?,
    };
    let manifest = RunManifest {
        config: config.clone(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        wall_clock_seconds: t0.elapsed().as_secs_f64(),
        stages: timer.stages,
        outputs: out.files.clone(),
        pass: assertions.iter().all(|a| a.pass),
        assertions,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(std::io::Error::other)?;
    fs::write(out_dir.join("manifest.json"), json)?;
    Ok(manifest)
}

fn certificate_check(p: &dyn Prescription, widths: &[(f64, f64, bool)]) -> crate::Result<Option<Assertion>> {
    let m = p.sup_bound();
    if !(m > 0.0 && m <= 2.0) {
        return Ok(None);
    }
    let (_, a) = isoperimetric_certificate(m)?;
    let low: Vec<String> = widths
        .iter()
        .filter(|(_, w, conv)| *conv && *w < a - CERTIFICATE_SLACK)
        .map(|(r, w, _)| format!("R={r}: {w}"))
        .collect();
    Ok(Some(Assertion {
        name: "isoperimetric-certificate".into(),
        pass: low.is_empty(),
        detail: if low.is_empty() { format!("a={}", num(a)) } else { format!("below a={}: {}", num(a), low.join("; ")) },
    }))
}

fn write_runs(
    runs: &[WidthRun],
    base: &Arc<dyn Prescription>,
    config: &ExperimentConfig,
    out: &mut Outputs,
) -> Result<(), RunError> {
    let mut nodes = Vec::new();
    let mut log = Vec::new();
    for run in runs {
        for (k, n) in run.estimate.nodes.iter().enumerate() {
            nodes.push(vec![
                num(run.radius),
                k.to_string(),
                num(n.t),
                num(n.energy),
                num(n.transition_mass),
                num(n.support_radius),
                num(n.barycenter_norm),
            ]);
        }
        for s in &run.estimate.log {
            log.push(vec![
                num(run.radius),
                s.sweep.to_string(),
                num(s.max_energy),
                num(s.argmax_t),
                num(s.mean_step),
                s.accepted.to_string(),
            ]);
        }
    }
    out.csv(
        "path_nodes.csv",
        &["radius", "k", "t", "energy", "transition_mass", "support_radius", "barycenter_norm"],
        &nodes,
    )?;
    out.csv("sweep_log.csv", &["radius", "sweep", "max_energy", "argmax_t", "mean_step", "accepted"], &log)?;
    let mut energies = Vec::new();
    for run in runs {
        let trunc = Truncated::new(base.clone(), run.radius)?;
        let peak = &run.path.nodes[run.estimate.argmax];
        let e = energy(peak, &trunc, &Metric::Flat)?;
        energies.push(vec![
            format!("peak_R{}", radius_tag(run.radius)),
            num(e.area),
            num(e.prescription_term),
            num(e.total),
            num(gradient(peak, &trunc, &Metric::Flat)?.norm),
            num(transition_mass(peak, &trunc)?),
        ]);
    }
    out.csv(
        "energies.csv",
        &["region", "area", "prescription_term", "total", "gradient_norm", "transition_mass"],
        &energies,
    )?;
    if config.snapshots {
        for run in runs {
            let peak = &run.path.nodes[run.estimate.argmax];
            out.text(&format!("snapshots/peak_R{}.txt", radius_tag(run.radius)), &peak.to_snapshot())?;
        }
    }
    Ok(())
}

fn run_width_sweep(c: &ExperimentConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Vec<Assertion>, RunError> {
    let base = from_family(&c.family, &c.params)?;
    let ecfg = engine_config(c)?;
    let sweep = timer.time("width-sweep", || width_sweep(base.clone(), &c.radii, &ecfg, c.tolerance))?;
    let rows: Vec<Vec<String>> = sweep
        .rows
        .iter()
        .zip(&sweep.runs)
        .map(|(r, run)| {
            vec![
                num(r.radius),
                num(r.width),
                opt(r.slope),
                r.selected.to_string(),
                (!r.monotonicity_violation).to_string(),
                r.converged.to_string(),
                num(run.estimate.nodes[run.estimate.argmax].t),
                run.start.to_string(),
            ]
        })
        .collect();
    out.csv(
        "widths.csv",
        &["radius", "width", "slope", "selected", "monotone", "converged", "argmax_t", "start"],
        &rows,
    )?;
    write_runs(&sweep.runs, &base, c, out)?;

    let nice = timer.time("nice-class", || {
        sweep
            .rows
            .iter()
            .zip(&sweep.runs)
            .filter(|(r, _)| r.selected)
            .map(|(r, run)| {
                let trunc = Truncated::new(base.clone(), r.radius)?;
                let eta = 1.0 / r.radius;
                check_nice_class(&run.path, &trunc, &ecfg.metric, 10.0 / r.radius, eta, eta, r.width)
            })
            .collect::<crate::Result<Vec<_>>>()
    })?;
    let nice_rows: Vec<Vec<String>> = nice
        .iter()
        .map(|n| {
            vec![
                num(n.radius),
                num(n.c),
                num(n.eta),
                num(n.theta),
                n.contained.to_string(),
                n.energy_bounded.to_string(),
                n.mass_bounded.to_string(),
                num(n.max_support_radius),
                num(n.max_energy),
                num(n.max_transition_mass),
                n.high_energy_nodes.to_string(),
            ]
        })
        .collect();
    out.csv(
        "nice_class.csv",
        &[
            "radius",
            "c",
            "eta",
            "theta",
            "contained",
            "energy_bounded",
            "mass_bounded",
            "max_support_radius",
            "max_energy",
            "max_transition_mass",
            "high_energy_nodes",
        ],
        &nice_rows,
    )?;

    let violations: Vec<String> =
        sweep.rows.iter().filter(|r| r.monotonicity_violation).map(|r| format!("R={}", r.radius)).collect();
    let mut a = vec![
        Assertion {
            name: "monotone".into(),
            pass: violations.is_empty(),
            detail: if violations.is_empty() {
                format!("plateau gap {}", opt(sweep.plateau_gap))
            } else {
                format!("increase at {}", violations.join(", "))
            },
        },
        Assertion {
            name: "nice-class".into(),
            pass: nice.iter().all(|n| n.passes()),
            detail: format!("{} selected radii checked", nice.len()),
        },
    ];
    let widths: Vec<(f64, f64, bool)> = sweep.rows.iter().map(|r| (r.radius, r.width, r.converged)).collect();
    a.extend(certificate_check(base.as_ref(), &widths)?);
    Ok(a)
}

struct Solved {
    radius: f64,
    run: WidthRun,
    saddle: SaddleCandidate,
}

fn solve_all(c: &ExperimentConfig, base: &Arc<dyn Prescription>, timer: &mut Timer) -> crate::Result<Vec<Solved>> {
    let ecfg = engine_config(c)?;
    let scfg = saddle_config(c);
    timer.time("solve", || {
        c.radii
            .par_iter()
            .map(|&r| {
                let trunc = Truncated::new(base.clone(), r)?;
                let run = estimate_width(&trunc, &ecfg)?;
                let start = &run.path.nodes[run.estimate.argmax];
                let saddle = refine_saddle(start, &trunc, &Metric::Flat, &scfg)?;
                Ok(Solved { radius: r, run, saddle })
            })
            .collect()
    })
}

fn write_saddles(solved: &[Solved], base: &Arc<dyn Prescription>, out: &mut Outputs) -> Result<Vec<f64>, RunError> {
    let mut rows = Vec::new();
    let mut homothety = Vec::new();
    for s in solved {
        let trunc = Truncated::new(base.clone(), s.radius)?;
        let region = &s.saddle.region;
        let h = homothety_derivative(region, &trunc)?;
        homothety.push(h);
        let td = (0..3)
            .map(|i| translation_derivative(region, &trunc, &Point::ith(i, 1.0)))
            .collect::<crate::Result<Vec<_>>>()?;
        let c = region.center();
        rows.push(vec![
            num(s.radius),
            num(s.run.estimate.value),
            num(s.saddle.energy),
            num(s.saddle.residual_sup),
            num(s.saddle.residual_l2),
            num(s.saddle.reduced_gradient_norm),
            s.saddle.index.negative.to_string(),
            s.saddle.index.zero.to_string(),
            s.saddle.iterations.to_string(),
            s.saddle.converged.to_string(),
            num(h),
            num(td[0]),
            num(td[1]),
            num(td[2]),
            num(gradient_mass(region, &trunc)?),
            num(c.x),
            num(c.y),
            num(c.z),
        ]);
        out.text(&format!("snapshots/saddle_R{}.txt", radius_tag(s.radius)), &region.to_snapshot())?;
    }
    out.csv(
        "saddles.csv",
        &[
            "radius",
            "width",
            "energy",
            "residual_sup",
            "residual_l2",
            "reduced_gradient_norm",
            "negative",
            "zero",
            "iterations",
            "converged",
            "homothety_derivative",
            "translation_x",
            "translation_y",
            "translation_z",
            "gradient_mass",
            "center_x",
            "center_y",
            "center_z",
        ],
        &rows,
    )?;
    Ok(homothety)
}

fn run_pmc_solve(c: &ExperimentConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Vec<Assertion>, RunError> {
    let base = from_family(&c.family, &c.params)?;
    let solved = solve_all(c, &base, timer)?;
    let runs: Vec<WidthRun> = solved.iter().map(|s| s.run.clone()).collect();
    write_runs(&runs, &base, c, out)?;
    let homothety = write_saddles(&solved, &base, out)?;
    let mut a = Vec::new();
    for (s, h) in solved.iter().zip(&homothety) {
        let sd = &s.saddle;
        a.push(Assertion {
            name: format!("saddle-R{}", s.radius),
            pass: sd.converged && sd.residual_sup <= c.residual_tolerance && h.abs() < 1e-3,
            detail: format!(
                "converged={}, residual={}, homothety={}",
                sd.converged,
                num(sd.residual_sup),
                num(*h)
            ),
        });
    }
    let widths: Vec<(f64, f64, bool)> =
        solved.iter().map(|s| (s.radius, s.run.estimate.value, s.run.estimate.converged)).collect();
    a.extend(certificate_check(base.as_ref(), &widths)?);
    Ok(a)
}

fn class_name(c: DriftClass) -> &'static str {
    match c {
        DriftClass::Confined => "confined",
        DriftClass::Drifting => "drifting",
        DriftClass::NeutralDrift => "neutral-drift",
        DriftClass::Inconclusive => "inconclusive",
    }
}

fn run_drift_demo(c: &ExperimentConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Vec<Assertion>, RunError> {
    let base = from_family(&c.family, &c.params)?;
    let solved = solve_all(c, &base, timer)?;
    write_saddles(&solved, &base, out)?;
    let sequence: Vec<(f64, SaddleCandidate)> = solved.into_iter().map(|s| (s.radius, s.saddle)).collect();
    let report = timer.time("drift", || drift_diagnostic(&sequence, base.as_ref()))?;
    let rows: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            vec![
                num(r.radius),
                num(r.energy),
                num(r.support_radius),
                num(r.barycenter_norm),
                num(r.unit_ball_distance),
            ]
        })
        .collect();
    out.csv("drift.csv", &["radius", "energy", "support_radius", "barycenter_norm", "unit_ball_distance"], &rows)?;
    let class = class_name(report.class);
    let summary = serde_json::json!({
        "class": class,
        "sphere_energy": report.sphere_energy,
        "energy_gap": report.energy_gap,
    });
    out.text("drift_summary.json", &serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?)?;
    Ok(c
        .expect_class
        .iter()
        .map(|want| Assertion {
            name: "drift-class".into(),
            pass: want == class,
            detail: format!("expected {want}, got {class}; energy gap {}", opt(report.energy_gap)),
        })
        .collect())
}

fn run_conformal(c: &ExperimentConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Vec<Assertion>, RunError> {
    let profile = ConformalProfile::from_name(&c.profile, &c.profile_params)?;
    let base = from_family(&c.family, &c.params)?;
    let Some(level) = base.asymptotic_constant().filter(|_| c.family == "constant") else {
        return Err(RunError::Config(ValidationReport {
            violations: vec!["family: conformal-example needs a constant prescription".into()],
        }));
    };
    let radius = c.radii.first().copied().unwrap_or(10.0);
    let ecfg = engine_config(c)?;

    let (slope, phi1, odes) = timer.time("radial", || -> crate::Result<_> {
        let radii: Vec<f64> = (0..40).map(|k| 2.0 * 0.01f64.powf(1.0 - k as f64 / 39.0)).collect();
        let odes = radii.iter().map(|&r| Ok((phi(&profile, r)?, phi_ode(&profile, r)?))).collect::<crate::Result<Vec<_>>>()?;
        Ok((dt_energy_at_zero(&profile)?, phi(&profile, 1.0)?, odes))
    })?;
    let phi_rows: Vec<Vec<String>> = odes
        .iter()
        .map(|(p, o)| vec![num(o.r), num(*p), num(o.lhs), num(o.rhs), num(o.residual())])
        .collect();
    out.csv("phi.csv", &["r", "phi", "lhs", "rhs", "residual"], &phi_rows)?;

    let rows = timer.time("widths", || {
        hypothesis_h_check(profile, &c.ts, &ecfg, level, radius, 1e-6, CONFORMAL_T_CLAIM)
    })?;
    let h_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                num(r.t),
                num(r.width),
                num(r.first_order),
                num(r.margin),
                r.holds.to_string(),
                r.in_scope.to_string(),
                r.converged.to_string(),
                num(r.sphere_path_max),
                num(r.mean_curvature_k),
                num(r.divergence_k),
            ]
        })
        .collect();
    out.csv(
        "conformal_widths.csv",
        &[
            "t",
            "width",
            "first_order",
            "margin",
            "holds",
            "in_scope",
            "converged",
            "sphere_path_max",
            "mean_curvature_k",
            "divergence_k",
        ],
        &h_rows,
    )?;
    let eps = rows.iter().filter(|r| r.t > 0.0 && r.holds).map(|r| r.t).fold(None, |m: Option<f64>, t| {
        Some(m.map_or(t, |m| m.max(t)))
    });
    let summary = serde_json::json!({
        "profile": profile.name(),
        "dt_energy_at_zero": slope,
        "phi_1": phi1,
        "ball_energy": 4.0 * PI / 3.0,
        "largest_t_with_margin": eps,
    });
    out.text("conformal_summary.json", &serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?)?;

    let worst_ode = odes.iter().map(|(_, o)| o.residual().abs()).fold(0.0, f64::max);
    let failed: Vec<String> =
        rows.iter().filter(|r| r.t > 0.0 && r.in_scope && !r.holds).map(|r| format!("t={}", r.t)).collect();
    Ok(vec![
        Assertion {
            name: "phi-negative".into(),
            pass: odes.iter().all(|(p, o)| o.r > 2.0 || *p < 0.0),
            detail: format!("phi(1)={}", num(phi1)),
        },
        Assertion { name: "phi-ode".into(), pass: worst_ode <= 1e-8, detail: format!("max residual {}", num(worst_ode)) },
        Assertion {
            name: "width-gap".into(),
            pass: failed.is_empty(),
            detail: if failed.is_empty() { "all in-scope t > 0 have positive margin".into() } else { failed.join(", ") },
        },
    ])
}

fn report_row(r: &HypothesisReport) -> Vec<String> {
    vec![
        r.hypothesis.clone(),
        r.pass.map_or("not-evaluated".into(), |p| p.to_string()),
        opt(r.margin),
        r.samples.to_string(),
        r.seed.to_string(),
        r.detail.clone(),
    ]
}

fn run_hypotheses(c: &ExperimentConfig, out: &mut Outputs, timer: &mut Timer) -> Result<Vec<Assertion>, RunError> {
    let p = from_family(&c.family, &c.params)?;
    let radii = if c.radii.is_empty() { vec![5.0, 10.0, 20.0, 40.0] } else { c.radii.clone() };
    let (reports, decay) = timer.time("hypotheses", || {
        let (h1, decay) = check_h1(p.as_ref(), &radii, c.tolerance, 64);
        let h2 = check_h2(p.as_ref(), c.rho, c.sigma, c.r_max, c.samples, c.seed);
        let mut reports = vec![h1, h2, check_h3()];
        if let Some(w) = c.width {
            reports.push(check_h4(w, p.as_ref()));
        }
        (reports, decay)
    });
    out.csv(
        "hypotheses.csv",
        &["hypothesis", "pass", "margin", "samples", "seed", "detail"],
        &reports.iter().map(report_row).collect::<Vec<_>>(),
    )?;
    out.text("hypotheses.json", &serde_json::to_string_pretty(&reports).map_err(std::io::Error::other)?)?;
    let decay_rows: Vec<Vec<String>> =
        decay.iter().map(|d| vec![num(d.radius), num(d.value_deviation), num(d.gradient_norm)]).collect();
    out.csv("decay.csv", &["radius", "value_deviation", "gradient_norm"], &decay_rows)?;
    Ok(reports
        .iter()
        .filter_map(|r| {
            r.pass.map(|pass| Assertion { name: r.hypothesis.clone(), pass, detail: r.detail.clone() })
        })
        .collect())
}
