//! Batch experiments: JSON configuration, orchestration of the numerical
//! modules, and the report files written for each run.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::covers::{double_cover_normal_index, equator_cover, induced_metric_lambda1, RationalMap};
use crate::curvature::{complex_sectional_curvature, verify_pinch_implication, ComplexPlane, CurvatureOperator};
use crate::energy::{dilation_chart, dirichlet_energy, SphereMap};
use crate::error::{Error, Result};
use crate::flow::{continue_in_alpha, descend, relative_center_of_mass, FlowConfig};
use crate::mesh::{build_icosphere, SphereMesh, MAX_LEVEL};
use crate::spectrum::{assemble_second_variation, calibrate_tau, morse_index_nullity};
use crate::topology::{
    build_complex, desk_model, gaussian_binomial, homology_z2, predicted_minimum_counts, schubert_cell_counts,
    split_by_action, Generator, MorseComplexZ2, Trajectory,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Census,
    Flow,
    Spectrum,
    Covers,
    Pinch,
    Morse,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 6] = [Self::Census, Self::Flow, Self::Spectrum, Self::Covers, Self::Pinch, Self::Morse];

    pub fn name(self) -> &'static str {
        match self {
            Self::Census => "census",
            Self::Flow => "flow",
            Self::Spectrum => "spectrum",
            Self::Covers => "covers",
            Self::Pinch => "pinch",
            Self::Morse => "morse",
        }
    }

    /// Largest mesh level accepted for this kind.
    pub fn level_guard(self) -> usize {
        match self {
            Self::Flow => 6,
            Self::Spectrum | Self::Covers => 5,
            _ => MAX_LEVEL,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Relative tolerance on energies against their expected multiples of 4π.
    pub energy_rel: f64,
    /// Bound on the relative α-center of mass after recentering.
    pub center_of_mass: f64,
    /// Relative tolerance on the leading negative eigenvalue.
    pub eigenvalue_rel: f64,
    /// Allowance on eigenvalue upper bounds.
    pub bound_slack: f64,
    pub grad_tol: f64,
    pub max_iterations: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self { energy_rel: 0.02, center_of_mass: 1e-4, eigenvalue_rel: 0.05, bound_slack: 0.05, grad_tol: 1e-6, max_iterations: 3000 }
    }
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// One experiment. Fields not used by `kind` are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level: Option<usize>,
    /// Target sphere `Sⁿ`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_schedule: Option<Vec<f64>>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub write_obj: bool,
    /// Grassmannian rank for the census.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    /// Inclusive range of ambient dimensions `N` for the census.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ambient_range: Option<[usize; 2]>,
    /// Degree of the power map `z ↦ z^d` for covers.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub degree: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<usize>,
    /// Morse complex in the `{generators, boundaries}` format.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub complex: Option<Value>,
}

impl ExperimentConfig {
    /// Settings used when a subcommand runs without a config file.
    pub fn default_for(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            level: None,
            n: None,
            alpha_schedule: None,
            seeds: default_seeds(),
            tolerances: Tolerances::default(),
            output_dir: None,
            write_obj: false,
            m: None,
            ambient_range: None,
            degree: None,
            delta: None,
            samples: None,
            complex: None,
        };
        match kind {
            ExperimentKind::Census => {
                c.m = Some(3);
                c.ambient_range = Some([5, 9]);
            }
            ExperimentKind::Flow => {
                c.level = Some(3);
                c.n = Some(4);
                c.alpha_schedule = Some(vec![1.1, 1.05]);
            }
            ExperimentKind::Spectrum => {
                c.level = Some(3);
                c.n = Some(4);
            }
            ExperimentKind::Covers => {
                c.level = Some(4);
                c.n = Some(4);
                c.degree = Some(2);
            }
            ExperimentKind::Pinch => {
                c.n = Some(4);
                c.delta = Some(0.5);
                c.samples = Some(100_000);
            }
            ExperimentKind::Morse => c.n = Some(5),
        }
        c
    }

    pub fn from_json_str(text: &str) -> std::result::Result<Self, Vec<ConfigIssue>> {
        let value: Value = serde_json::from_str(text).map_err(|e| {
            vec![ConfigIssue { field: String::new(), line: Some(e.line()), message: format!("{e}") }]
        })?;
        let mut issues = shape_issues(&value);
        if issues.is_empty() {
            match serde_json::from_value::<ExperimentConfig>(value) {
                Ok(config) => {
                    issues = config.issues();
                    if issues.is_empty() {
                        return Ok(config);
                    }
                }
                Err(e) => issues.push(ConfigIssue { field: String::new(), line: None, message: e.to_string() }),
            }
        }
        for issue in &mut issues {
            if issue.line.is_none() && !issue.field.is_empty() {
                issue.line = line_of_key(text, issue.field.split('.').next().unwrap_or_default());
            }
        }
        Err(issues)
    }

    pub fn from_path(path: &Path) -> std::result::Result<Self, Vec<ConfigIssue>> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            vec![ConfigIssue { field: String::new(), line: None, message: format!("cannot read {}: {e}", path.display()) }]
        })?;
        Self::from_json_str(&text)
    }

    /// Semantic checks on a well-typed config, all of them reported.
    pub fn issues(&self) -> Vec<ConfigIssue> {
        let mut out = Vec::new();
        let mut bad = |field: &str, message: String| out.push(ConfigIssue { field: field.into(), line: None, message });
        let kind = self.kind;
        let require_level = matches!(kind, ExperimentKind::Flow | ExperimentKind::Spectrum | ExperimentKind::Covers);
        match self.level {
            None if require_level => bad("level", format!("required for {}", kind.name())),
            Some(l) if l > kind.level_guard() => {
                bad("level", format!("{l} exceeds the guard {} for {}", kind.level_guard(), kind.name()))
            }
            _ => {}
        }
        let require_n = !matches!(kind, ExperimentKind::Census);
        match self.n {
            None if require_n && !(kind == ExperimentKind::Morse && self.complex.is_some()) => {
                bad("n", format!("required for {}", kind.name()))
            }
            Some(n) if n < 2 => bad("n", format!("must be at least 2, got {n}")),
            _ => {}
        }
        if self.seeds.is_empty() {
            bad("seeds", "must list at least one seed".into());
        }
        let t = &self.tolerances;
        for (name, v) in [
            ("tolerances.energy_rel", t.energy_rel),
            ("tolerances.center_of_mass", t.center_of_mass),
            ("tolerances.eigenvalue_rel", t.eigenvalue_rel),
            ("tolerances.bound_slack", t.bound_slack),
            ("tolerances.grad_tol", t.grad_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                bad(name, format!("must be positive, got {v}"));
            }
        }
        if t.max_iterations == 0 {
            bad("tolerances.max_iterations", "must be positive".into());
        }
        match kind {
            ExperimentKind::Census => {
                let m = self.m.unwrap_or(3);
                match self.ambient_range {
                    None => bad("ambient_range", "required for census".into()),
                    Some([lo, hi]) => {
                        if lo > hi || lo <= m || hi > crate::topology::MAX_AMBIENT {
                            bad("ambient_range", format!("need m < lo ≤ hi ≤ {}, got [{lo}, {hi}] with m = {m}", crate::topology::MAX_AMBIENT));
                        }
                    }
                }
                if m == 0 {
                    bad("m", "must be positive".into());
                }
            }
            ExperimentKind::Flow => match &self.alpha_schedule {
                None => bad("alpha_schedule", "required for flow".into()),
                Some(s) if s.is_empty() => bad("alpha_schedule", "must not be empty".into()),
                Some(s) => {
                    if s.iter().any(|a| !(a.is_finite() && *a >= 1.0)) {
                        bad("alpha_schedule", "every alpha must be at least 1".into());
                    }
                    if s.windows(2).any(|w| w[1] >= w[0]) {
                        bad("alpha_schedule", "must be strictly decreasing".into());
                    }
                }
            },
            ExperimentKind::Spectrum => {}
            ExperimentKind::Covers => {
                match self.degree {
                    None => bad("degree", "required for covers".into()),
                    Some(d) if !(1..=4).contains(&d) => bad("degree", format!("must lie in 1..=4, got {d}")),
                    _ => {}
                }
                if matches!(self.n, Some(n) if n < 3) {
                    bad("n", "normal variations need n ≥ 3".into());
                }
            }
            ExperimentKind::Pinch => {
                if matches!(self.n, Some(n) if n < 4) {
                    bad("n", "orthonormal 4-frames need n ≥ 4".into());
                }
                if let Some(d) = self.delta {
                    if !(d > 0.0 && d <= 1.0) {
                        bad("delta", format!("must lie in (0, 1], got {d}"));
                    }
                }
                if self.samples == Some(0) {
                    bad("samples", "must be positive".into());
                }
            }
            ExperimentKind::Morse => {
                if let Some(c) = &self.complex {
                    if let Err(e) = serde_json::from_value::<ComplexShape>(c.clone()) {
                        bad("complex", e.to_string());
                    }
                }
                if self.complex.is_none() && matches!(self.n, Some(n) if n < 4) {
                    bad("n", "the desk model needs n ≥ 4".into());
                }
            }
        }
        out
    }
}

/// Structure of a complex, checked without building it.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(dead_code)]
struct ComplexShape {
    generators: Vec<Generator>,
    boundaries: Vec<Trajectory>,
}

const UNSIGNED_FIELDS: [&str; 6] = ["level", "n", "m", "degree", "samples", "max_iterations"];

/// Type checks that name the offending field, before typed parsing.
fn shape_issues(value: &Value) -> Vec<ConfigIssue> {
    let mut out = Vec::new();
    let mut bad = |field: &str, message: String| out.push(ConfigIssue { field: field.into(), line: None, message });
    let Some(obj) = value.as_object() else {
        bad("", "config must be a JSON object".into());
        return out;
    };
    match obj.get("kind") {
        None => bad("kind", "missing experiment kind".into()),
        Some(Value::String(s)) if ExperimentKind::ALL.iter().any(|k| k.name() == s) => {}
        Some(other) => bad("kind", format!("expected one of census, flow, spectrum, covers, pinch, morse; got {other}")),
    }
    let known = [
        "kind", "level", "n", "alpha_schedule", "seeds", "tolerances", "output_dir", "write_obj", "m", "ambient_range",
        "degree", "delta", "samples", "complex",
    ];
    for (key, v) in obj {
        if !known.contains(&key.as_str()) {
            bad(key, "unknown field".into());
            continue;
        }
        if UNSIGNED_FIELDS.contains(&key.as_str()) && !v.is_u64() {
            bad(key, format!("must be a nonnegative integer, got {v}"));
        }
    }
    if let Some(t) = obj.get("tolerances").and_then(Value::as_object) {
        for (key, v) in t {
            if key == "max_iterations" {
                if !v.is_u64() {
                    bad("tolerances.max_iterations", format!("must be a nonnegative integer, got {v}"));
                }
            } else if !["energy_rel", "center_of_mass", "eigenvalue_rel", "bound_slack", "grad_tol"].contains(&key.as_str()) {
                bad(&format!("tolerances.{key}"), "unknown field".into());
            } else if !v.is_number() {
                bad(&format!("tolerances.{key}"), format!("must be a number, got {v}"));
            }
        }
    }
    if let Some(s) = obj.get("seeds") {
        if !s.as_array().is_some_and(|a| a.iter().all(Value::is_u64)) {
            bad("seeds", "must be an array of nonnegative integers".into());
        }
    }
    if let Some(s) = obj.get("alpha_schedule") {
        if !s.as_array().is_some_and(|a| a.iter().all(Value::is_number)) {
            bad("alpha_schedule", "must be an array of numbers".into());
        }
    }
    if let Some(r) = obj.get("ambient_range") {
        if !r.as_array().is_some_and(|a| a.len() == 2 && a.iter().all(Value::is_u64)) {
            bad("ambient_range", "must be a pair of nonnegative integers".into());
        }
    }
    out
}

fn line_of_key(text: &str, key: &str) -> Option<usize> {
    if key.is_empty() {
        return None;
    }
    let needle = format!("\"{key}\"");
    text.lines().position(|l| l.contains(&needle)).map(|i| i + 1)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ConfigIssue {
    pub field: String,
    pub line: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if let Some(l) = self.line {
            write!(f, "line {l}: ")?;
        }
        if self.field.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "field `{}`: {}", self.field, self.message)
        }
    }
}

fn issues_to_error(issues: &[ConfigIssue]) -> Error {
    Error::Config {
        field: issues.first().map(|i| i.field.clone()).unwrap_or_default(),
        message: issues.iter().map(ToString::to_string).collect::<Vec<_>>().join("; "),
    }
}

/// A pass/fail comparison against an expected value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub anchor: &'static str,
    pub measured: f64,
    pub expected: String,
    pub passed: bool,
}

/// A measured quantity and the claim it documents.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Measurement {
    pub value: Value,
    pub anchor: &'static str,
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub kind: ExperimentKind,
    pub timestamp_unix: u64,
    pub config: ExperimentConfig,
    pub passed: bool,
    pub checks: Vec<Check>,
    pub results: BTreeMap<String, Measurement>,
}

impl Report {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            2
        }
    }
}

/// Exit status for a failed run: 3 for configuration problems, 2 for
/// numeric failures, 1 for I/O.
pub fn exit_code_for(e: &Error) -> i32 {
    match e.root() {
        Error::Config { .. } | Error::Json(_) => 3,
        Error::Io(_) => 1,
        _ => 2,
    }
}

#[derive(Default)]
struct Recorder {
    checks: Vec<Check>,
    results: BTreeMap<String, Measurement>,
    spectra: Vec<String>,
    telemetry: Vec<String>,
    extra_files: Vec<(String, String)>,
}

impl Recorder {
    fn measure(&mut self, name: impl Into<String>, value: impl Serialize, anchor: &'static str) {
        let value = serde_json::to_value(value).unwrap_or(Value::Null);
        self.results.insert(name.into(), Measurement { value, anchor });
    }

    fn check(&mut self, name: impl Into<String>, anchor: &'static str, measured: f64, expected: String, passed: bool) {
        self.checks.push(Check { name: name.into(), anchor, measured, expected, passed });
    }

    fn at_most(&mut self, name: impl Into<String>, anchor: &'static str, measured: f64, bound: f64) {
        self.check(name, anchor, measured, format!("<= {}", number(bound)), measured <= bound);
    }

    fn equal(&mut self, name: impl Into<String>, anchor: &'static str, measured: f64, expected: f64) {
        self.check(name, anchor, measured, format!("== {}", number(expected)), measured == expected);
    }

    fn stage(&mut self, name: &str, started: Instant) {
        self.telemetry.push(format!("{name},,,,,,{}", started.elapsed().as_millis()));
    }
}

fn number(x: f64) -> String {
    if x != 0.0 && (x.abs() < 1e-3 || x.abs() >= 1e6) {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

fn context<T>(module: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Config { .. } | Error::Context { .. } => e,
        e => Error::Context { module, source: Box::new(e) },
    })
}

fn mesh(level: usize) -> Result<Arc<SphereMesh>> {
    Ok(Arc::new(context("sphere_mesh", build_icosphere(level))?))
}

fn image_obj(map: &SphereMap) -> String {
    let mut out = String::new();
    for i in 0..map.mesh().vertex_count() {
        let v = map.value(i);
        let c = |k: usize| v.get(k).copied().unwrap_or(0.0);
        let _ = writeln!(out, "v {:.17} {:.17} {:.17}", c(0), c(1), c(2));
    }
    for &[a, b, c] in map.mesh().faces() {
        let _ = writeln!(out, "f {} {} {}", a + 1, b + 1, c + 1);
    }
    out
}

/// Random degree-one start: the equator precomposed with a Möbius dilation.
pub fn distorted_equator(mesh: Arc<SphereMesh>, n: usize, seed: u64) -> Result<SphereMap> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t: [f64; 3] = std::array::from_fn(|_| rng.random_range(-0.6..0.6));
    SphereMap::equator(mesh, n)?.precompose(|x| dilation_chart(&t, x))
}

fn run_census(c: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let m = c.m.unwrap_or(3);
    let [lo, hi] = c.ambient_range.expect("validated");
    for ambient in lo..=hi {
        let census = context("topology", schubert_cell_counts(m, ambient))?;
        let oracle = context("topology", gaussian_binomial(m, ambient))?;
        let binom = (0..m as u64).fold(1u64, |acc, i| acc * (ambient as u64 - i) / (i + 1));
        let matches = census.counts == oracle;
        rec.measure(format!("counts_N{ambient}"), &census.counts, "cells of the Grassmannian by dimension");
        rec.measure(format!("oracle_match_N{ambient}"), matches, "census equals q-binomial coefficients");
        rec.check(format!("oracle_N{ambient}"), "census equals q-binomial coefficients", matches as u8 as f64, "== 1".into(), matches);
        rec.equal(format!("total_N{ambient}"), "total cell count is a binomial coefficient", census.total() as f64, binom as f64);
        rec.check(
            format!("palindromic_N{ambient}"),
            "Poincaré duality of the Grassmannian",
            census.is_palindromic() as u8 as f64,
            "== 1".into(),
            census.is_palindromic(),
        );
        rec.extra_files.push((format!("census_m{m}_N{ambient}.csv"), census.to_csv()));
    }
    Ok(())
}

fn run_flow(c: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let (level, n) = (c.level.expect("validated"), c.n.expect("validated"));
    let schedule = c.alpha_schedule.clone().expect("validated");
    let tol = &c.tolerances;
    let m = mesh(level)?;
    let cfg = FlowConfig {
        max_iterations: tol.max_iterations,
        grad_tol: tol.grad_tol,
        ..FlowConfig::with_alpha(schedule[0])
    };
    for &seed in &c.seeds {
        let started = Instant::now();
        let start = context("flow", distorted_equator(m.clone(), n, seed))?;
        let first = context("flow", descend(&start, &FlowConfig { seed, ..cfg.clone() }))?;
        let run = context("flow", continue_in_alpha(&first, &schedule, &cfg, 1e-8))?;
        for (stage, r) in std::iter::once(&first).chain(&run.records).enumerate() {
            for s in &r.pseudogradient_log {
                rec.telemetry.push(format!(
                    "seed{seed}_stage{stage},{},{},{:.17e},{:.17e},{:.17e},",
                    s.iteration, r.alpha, s.alpha_energy, s.grad_norm, s.step
                ));
            }
        }
        rec.stage(&format!("flow_seed{seed}"), started);
        if let Some((k, msg)) = &run.failure {
            rec.measure(format!("seed{seed}_failure"), json!({ "stage": k, "message": msg }), "continuation stage failure");
            rec.check(format!("seed{seed}_continuation"), "continuation completes", *k as f64, "no failure".into(), false);
            continue;
        }
        let last = run.records.last().expect("nonempty schedule");
        let com = context("flow", relative_center_of_mass(last.map(), last.alpha))?;
        let target = 4.0 * PI;
        rec.measure(format!("seed{seed}_energies"), run.records.iter().map(|r| r.energy).collect::<Vec<_>>(), "Dirichlet energy per alpha");
        rec.measure(format!("seed{seed}_harmonic_residual"), last.harmonic_residual, "tension field of the last stage");
        rec.measure(format!("seed{seed}_pseudogradient"), last.pseudogradient_constants(), "pseudogradient constants");
        rec.check(format!("seed{seed}_converged"), "descent converges", last.grad_norm, format!("<= {}", number(tol.grad_tol)), last.converged);
        rec.at_most(
            format!("seed{seed}_energy_gap"),
            "degree-one critical points have energy 4π",
            (last.energy - target).abs() / target,
            tol.energy_rel,
        );
        rec.at_most(format!("seed{seed}_center_of_mass"), "recentered critical points have vanishing center of mass", com, tol.center_of_mass);
        if c.write_obj {
            rec.extra_files.push((format!("image_seed{seed}.obj"), image_obj(last.map())));
        }
    }
    if c.write_obj {
        rec.extra_files.push(("mesh.obj".into(), m.to_obj()));
    }
    Ok(())
}

fn run_spectrum(c: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let (level, n) = (c.level.expect("validated"), c.n.expect("validated"));
    let started = Instant::now();
    let tau = context("spectrum", calibrate_tau(level))?;
    rec.stage("calibrate_tau", started);
    rec.measure("tau", &tau, "null threshold from the equator into S⁴");
    let m = mesh(level)?;
    let map = context("energy", SphereMap::equator(m.clone(), n))?;
    let started = Instant::now();
    let pencil = context("spectrum", assemble_second_variation(&map, 1.0))?;
    let expected_null = 3 * (n - 2) + 6;
    let k = (n - 2) + expected_null + 5;
    let report = context("spectrum", morse_index_nullity(&pencil, k, tau.tau))?;
    rec.stage("second_variation", started);
    for (i, l) in report.eigenvalues.iter().enumerate() {
        rec.spectra.push(format!("second_variation,{i},{l:.17e},{}", report.classify(*l)));
    }
    rec.measure("index", report.index, "equator index n - 2");
    rec.measure("nullity", report.nullity, "equator nullity 3(n-2)+6");
    rec.measure("eigenvalues", &report.eigenvalues, "second variation spectrum");
    rec.measure("criticality", pencil.criticality, "relative gradient of the equator");
    rec.equal("index", "equator index n - 2", report.index as f64, (n - 2) as f64);
    rec.equal("nullity", "equator nullity 3(n-2)+6", report.nullity as f64, expected_null as f64);
    rec.check("converged", "eigensolver converged", report.eigenvalues.len() as f64, format!("{k} eigenvalues"), report.converged);
    if n > 2 {
        let lead = report.eigenvalues[0];
        rec.at_most("leading_eigenvalue_gap", "normal Jacobi eigenvalue -2", (lead + 2.0).abs() / 2.0, c.tolerances.eigenvalue_rel);
    }
    if c.write_obj {
        rec.extra_files.push(("mesh.obj".into(), m.to_obj()));
    }
    Ok(())
}

fn run_covers(c: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let (level, n, d) = (c.level.expect("validated"), c.n.expect("validated"), c.degree.expect("validated"));
    let tol = &c.tolerances;
    let m = mesh(level)?;
    let g = context("covers", RationalMap::power(d))?;
    let f = context("covers", equator_cover(m.clone(), n, &g))?;
    let energy = dirichlet_energy(&f);
    let target = 4.0 * PI * d as f64;
    rec.measure("energy", energy, "energy of a degree-d cover is 4πd");
    rec.at_most("energy_gap", "energy of a degree-d cover is 4πd", (energy - target).abs() / target, 0.01);

    let started = Instant::now();
    let s = context("covers", induced_metric_lambda1(&f, 1e-3))?;
    rec.stage("induced_spectrum", started);
    for (i, l) in s.eigenvalues.iter().enumerate() {
        rec.spectra.push(format!("pulled_back_laplacian,{i},{l:.17e},"));
    }
    rec.measure("lambda1", s.lambda1, "first eigenvalue of the pulled-back metric is at most 2/d");
    rec.measure("floored_elements", s.floored, "elements at the metric floor");
    rec.measure("degenerate", s.degenerate, "floor touches more than 1% of elements");
    rec.at_most("lambda1", "first eigenvalue of the pulled-back metric is at most 2/d", s.lambda1, 2.0 / d as f64 * (1.0 + tol.bound_slack));
    rec.at_most("lambda1_area", "λ₁·area ≤ 8π", s.lambda1 * s.area, 8.0 * PI * (1.0 + tol.bound_slack));

    let started = Instant::now();
    let index = context("covers", double_cover_normal_index(&f, n))?;
    rec.stage("normal_index", started);
    rec.measure("normal_index", index, "normal index of a branched cover");
    if d == 1 {
        rec.equal("normal_index", "equator normal index n - 2", index as f64, (n - 2) as f64);
    } else {
        let bound = 2 * (n - 2);
        rec.check("normal_index", "covers have normal index at least 2(n-2)", index as f64, format!(">= {bound}"), index >= bound);
    }
    if c.write_obj {
        rec.extra_files.push(("mesh.obj".into(), m.to_obj()));
        rec.extra_files.push(("image.obj".into(), image_obj(&f)));
    }
    Ok(())
}

fn run_pinch(c: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let n = c.n.unwrap_or(4);
    let delta = c.delta.unwrap_or(0.5);
    let samples = c.samples.unwrap_or(100_000);
    let mut identity_error = 0.0f64;
    let mut rng = ChaCha8Rng::seed_from_u64(c.seeds[0]);
    for cc in [1.0, 0.6, -0.4] {
        let r = CurvatureOperator::constant(n, cc);
        for _ in 0..200 {
            let mut v = || (0..n).map(|_| num_complex::Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect();
            let p = ComplexPlane::new(v(), v());
            identity_error = identity_error.max((context("curvature", complex_sectional_curvature(&r, &p))? - cc).abs());
        }
    }
    rec.measure("space_form_error", identity_error, "space forms have constant complex curvature");
    rec.at_most("space_form_error", "space forms have constant complex curvature", identity_error, 1e-10);

    let mid = (1.0 + delta) / 2.0;
    let mut operators = vec![("constant_mid".to_string(), CurvatureOperator::constant(n, mid))];
    for &seed in &c.seeds {
        let lambda = 0.3 + 0.4 * ChaCha8Rng::seed_from_u64(seed).random::<f64>();
        let noise = 0.05 * (1.0 - delta);
        let hi = 1.0 - 0.1 * (1.0 - delta);
        let lo = delta + 0.2 * (1.0 - delta);
        operators.push((format!("mixture_seed{seed}"), CurvatureOperator::pinched_mixture(n, hi, lo, lambda, noise, seed)));
    }
    for (name, r) in &operators {
        let started = Instant::now();
        let report = context("curvature", verify_pinch_implication(r, delta, samples, c.seeds[0]))?;
        rec.stage(name, started);
        rec.measure(format!("{name}_report"), &report, "half-isotropic curvatures of pinched operators");
        let violations = report.violations.map_or(f64::NAN, |v| v as f64);
        rec.check(
            format!("{name}_violations"),
            "pinched real curvature bounds half-isotropic curvature",
            violations,
            "== 0".into(),
            report.hypothesis_satisfied && report.violations == Some(0),
        );
    }
    Ok(())
}

fn run_morse(c: &ExperimentConfig, rec: &mut Recorder) -> Result<()> {
    let complex: MorseComplexZ2 = match &c.complex {
        Some(v) => {
            let shape: ComplexShape = serde_json::from_value(v.clone())?;
            context("topology", build_complex(shape.generators, &shape.boundaries))?
        }
        None => context("topology", desk_model(c.n.expect("validated")))?,
    };
    let betti = homology_z2(&complex);
    let chi: i64 = betti.iter().enumerate().map(|(l, &b)| if l % 2 == 0 { b as i64 } else { -(b as i64) }).sum();
    rec.measure("betti", &betti, "mod-2 homology of the Morse complex");
    rec.measure("euler_characteristic", complex.euler_characteristic(), "alternating generator count");
    rec.equal("euler_characteristic", "Euler characteristic from generators and homology agree", chi as f64, complex.euler_characteristic() as f64);
    if c.complex.is_none() {
        let n = c.n.expect("validated");
        let predicted = context("topology", predicted_minimum_counts(n))?;
        let matches = predicted.iter().all(|(&l, &p)| betti.get(l).copied().unwrap_or(0) as u64 == p);
        rec.check("desk_betti", "Betti numbers reproduce the Grassmannian counts", matches as u8 as f64, "== 1".into(), matches);
    }
    let split = context("topology", split_by_action(&complex))?;
    rec.measure("a_generators", split.a_complex.generators().len(), "generators with trivial module action");
    rec.measure("b_generators", split.b_quotient.generators().len(), "generators with nontrivial module action");
    rec.check("a_closure", "the boundary preserves A-generators", 1.0, "== 1".into(), split.verified);
    if let Some(n) = c.n.filter(|&n| n >= 4) {
        let counts = context("topology", split.morse_inequalities(n))?;
        for ic in &counts {
            rec.check(
                format!("morse_inequality_{}", ic.degree),
                "A-generators of index λ are at least p₃(λ-n+2)",
                ic.a_generators as f64,
                format!(">= {}", ic.predicted),
                ic.holds,
            );
        }
        rec.measure("morse_inequalities", &counts, "A-generators against predicted minimum counts");
    }
    Ok(())
}

/// Validates `config`, runs it, and writes `report.json`, `spectra.csv`,
/// `telemetry.csv` and any requested OBJ or census files into `out`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<Report> {
    let issues = config.issues();
    if !issues.is_empty() {
        return Err(issues_to_error(&issues));
    }
    let mut rec = Recorder::default();
    match config.kind {
        ExperimentKind::Census => run_census(config, &mut rec)?,
        ExperimentKind::Flow => run_flow(config, &mut rec)?,
        ExperimentKind::Spectrum => run_spectrum(config, &mut rec)?,
        ExperimentKind::Covers => run_covers(config, &mut rec)?,
        ExperimentKind::Pinch => run_pinch(config, &mut rec)?,
        ExperimentKind::Morse => run_morse(config, &mut rec)?,
    }
    let timestamp_unix = std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let report = Report {
        kind: config.kind,
        timestamp_unix,
        config: config.clone(),
        passed: rec.checks.iter().all(|c| c.passed),
        checks: rec.checks,
        results: rec.results,
    };
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("report.json"), serde_json::to_string_pretty(&report)? + "\n")?;
    let mut spectra = String::from("source,k,eigenvalue,class\n");
    for line in &rec.spectra {
        spectra.push_str(line);
        spectra.push('\n');
    }
    std::fs::write(out.join("spectra.csv"), spectra)?;
    let mut telemetry = String::from("stage,iteration,alpha,alpha_energy,grad_norm,step,elapsed_ms\n");
    for line in &rec.telemetry {
        telemetry.push_str(line);
        telemetry.push('\n');
    }
    std::fs::write(out.join("telemetry.csv"), telemetry)?;
    for (name, text) in &rec.extra_files {
        std::fs::write(out.join(name), text)?;
    }
    Ok(report)
}

/// Output directory: the explicit override, then the config, then
/// `spheremorse-out/<kind>`.
pub fn output_dir(config: &ExperimentConfig, explicit: Option<&Path>) -> PathBuf {
    explicit
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("spheremorse-out").join(config.kind.name()))
}
