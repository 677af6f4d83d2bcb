//! Scenario construction and experiment dispatch.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use fhlab_core::blowup::{nondegeneracy_check, VanishingOptions};
use fhlab_core::extension::{mode_flux_limit, poisson_check, residual_convergence, ResidualRegion};
use fhlab_core::fracheat::BalakrishnanQuad;
use fhlab_core::frequency::psi;
use fhlab_core::specfun::{principal_l, principal_pow};
use fhlab_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{ExpectedOrder, Experiment, FieldSpec, PotentialSpec, Scenario};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    ReportOnly,
    Error,
}

#[derive(Debug, Clone, Serialize)]
pub struct ExperimentOutcome {
    pub kind: String,
    pub status: Status,
    pub metrics: BTreeMap<String, Value>,
    pub outputs: Vec<String>,
    /// Lines printed to stdout after the run.
    pub summary: Vec<String>,
    pub wall_clock_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub message: Option<String>,
    #[serde(skip)]
    pub csv: Option<Vec<u8>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub tool: String,
    pub version: String,
    pub scenario: String,
    pub seed: u64,
    pub threads: usize,
    pub tolerance_scale: f64,
    pub wall_clock_ms: f64,
    pub experiments: Vec<ExperimentOutcome>,
    /// The scenario as run, in TOML.
    pub config: String,
}

impl RunReport {
    pub fn failed(&self) -> bool {
        self.experiments.iter().any(|e| matches!(e.status, Status::Fail | Status::Error))
    }
}

pub struct RunOptions {
    pub out_dir: PathBuf,
    pub threads: usize,
    pub seed: Option<u64>,
    pub tolerance_scale: f64,
    /// Restrict to experiments of this kind, adding a default one when none is declared.
    pub only: Option<String>,
    /// Directory against which relative paths in the scenario resolve.
    pub base_dir: PathBuf,
}

/// The field a scenario describes, ready for evaluation.
pub enum Subject {
    /// `zero_flux` holds when every term has vanishing weighted Neumann data.
    Builtin { field: Superposition, kappa: Option<f64>, solves: bool, zero_flux: bool },
    Grid { u: SpaceTimeField, ext: ExtensionField, potential: Option<PotentialField> },
}

impl Subject {
    pub fn solution(&self) -> &dyn SolutionField {
        match self {
            Subject::Builtin { field, .. } => field,
            Subject::Grid { ext, .. } => ext,
        }
    }
}

/// Real boundary datum of a spectrum or random field specification.
pub fn grid_field(scenario: &Scenario, grid: SpaceTimeGrid) -> Option<SpaceTimeField> {
    let mut modes: Vec<([i64; 2], i64, Complex64)> = Vec::new();
    let mut offset = 0.0;
    let real = match &scenario.field {
        FieldSpec::Builtin { .. } => return None,
        FieldSpec::Spectrum { modes: list, real } => {
            for m in list {
                let k = [m.k[0], m.k.get(1).copied().unwrap_or(0)];
                modes.push((k, m.m, Complex64::new(m.re, m.im)));
            }
            *real
        }
        FieldSpec::Random { modes: count, amplitude, offset: off, max_k, max_m } => {
            let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
            for _ in 0..*count {
                let k1 = rng.random_range(0..=*max_k);
                let k2 = if scenario.dim == 2 { rng.random_range(-*max_k..=*max_k) } else { 0 };
                let m = rng.random_range(-*max_m..=*max_m);
                let re = rng.random_range(-*amplitude..=*amplitude);
                let im = rng.random_range(-*amplitude..=*amplitude);
                modes.push(([k1, k2], m, Complex64::new(re, im)));
            }
            offset = *off;
            true
        }
    };
    let mut samples = vec![Complex64::new(offset, 0.0); grid.len()];
    for (k, m, c) in modes {
        let zero = k == [0, 0] && m == 0;
        let f = SpaceTimeField::single_mode(grid, k, m, if real && zero { Complex64::new(c.re, 0.0) } else { c });
        for (acc, v) in samples.iter_mut().zip(f.samples()) {
            *acc += if real && !zero { Complex64::new(2.0 * v.re, 0.0) } else { *v };
        }
    }
    Some(SpaceTimeField::from_samples(grid, samples).expect("grid length"))
}

pub fn build_subject(scenario: &Scenario, base_dir: &Path) -> Result<Subject> {
    let cfg = FracConfig::new(scenario.s)?;
    let g = &scenario.grid;
    let grid = SpaceTimeGrid::new(scenario.dim, g.length_x, g.points_x, g.time_window, g.points_t)?;
    if let FieldSpec::Builtin { terms } = &scenario.field {
        let mut parts: Vec<(f64, Box<dyn SolutionField + Send>)> = Vec::new();
        let mut kinds = Vec::new();
        for t in terms {
            let kind = BuiltinKind::from_name(&t.name)
                .ok_or_else(|| FhError::Structural(format!("unknown builtin {}", t.name)))?;
            let b = Builtin::new(kind, cfg, scenario.dim)?;
            kinds.push((b.kappa(), b.solves_extension(), t.coefficient));
            parts.push((t.coefficient, Box::new(b)));
        }
        let solves = kinds.iter().all(|k| k.1);
        let zero_flux = terms
            .iter()
            .filter(|t| t.coefficient != 0.0)
            .all(|t| !matches!(BuiltinKind::from_name(&t.name), Some(BuiltinKind::Y2s | BuiltinKind::CounterexampleF)));
        let active: Vec<f64> = kinds.iter().filter(|k| k.2 != 0.0).map(|k| k.0).collect();
        let kappa = (!active.is_empty() && active.iter().all(|k| *k == active[0])).then(|| active[0]);
        return Ok(Subject::Builtin { field: Superposition::new(parts)?, kappa, solves, zero_flux });
    }
    let u = grid_field(scenario, grid).expect("grid field");
    let (mode, potential) = match &scenario.potential {
        PotentialSpec::None => (PotentialMode::None, None),
        PotentialSpec::Manufactured { floor } => {
            let v = manufactured_potential(&u, &cfg, *floor)?;
            (PotentialMode::Manufactured, Some(v))
        }
        PotentialSpec::Explicit { path } => {
            let field = SpaceTimeField::read_binary(&base_dir.join(path))?;
            if field.grid() != &grid {
                return Err(FhError::Structural(format!("potential {path} is sampled on a different grid")));
            }
            let v = PotentialField::new(field);
            (PotentialMode::Explicit(v.clone()), Some(v))
        }
    };
    let ext = ExtensionField::extend(&u, &cfg, YGrid::default())?.with_potential(mode);
    Ok(Subject::Grid { u, ext, potential })
}

fn fmt(v: f64) -> String {
    format!("{v:.15e}")
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "nan".to_string(), fmt)
}

struct Done {
    status: Status,
    metrics: BTreeMap<String, Value>,
    summary: Vec<String>,
    csv: Vec<u8>,
}

fn pass_if(ok: bool) -> Status {
    if ok {
        Status::Pass
    } else {
        Status::Fail
    }
}

fn op_check(scenario: &Scenario, u: &SpaceTimeField, s_values: &Option<Vec<f64>>, tol: f64) -> Result<Done> {
    let mut csv = String::from("s,multiplier_vs_balakrishnan,multiplier_vs_neumann,balakrishnan_vs_neumann\n");
    let mut summary = vec![format!("{:>6} {:>24} {:>24} {:>24}", "s", "mult-bal", "mult-neu", "bal-neu")];
    let mut worst = 0.0f64;
    for &s in s_values.as_deref().unwrap_or(&[scenario.s]) {
        let cfg = FracConfig::new(s)?;
        let mult = frac_heat_multiplier(u, &cfg);
        let bal = frac_heat_balakrishnan(u, &cfg, &BalakrishnanQuad::with_defaults(&cfg))?;
        let trace = ExtensionField::extend(u, &cfg, YGrid::default())?.neumann_trace()?;
        let neu = trace.flux_grid.scale(Complex64::new(-1.0 / cfg.c_s(), 0.0));
        let d = [mult.relative_l2_distance(&bal)?, mult.relative_l2_distance(&neu)?, bal.relative_l2_distance(&neu)?];
        worst = d.iter().copied().fold(worst, f64::max);
        csv.push_str(&format!("{},{},{},{}\n", fmt(s), fmt(d[0]), fmt(d[1]), fmt(d[2])));
        summary.push(format!("{s:>6} {:>24.6e} {:>24.6e} {:>24.6e}", d[0], d[1], d[2]));
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("max_relative_l2".into(), json!(worst));
    metrics.insert("tolerance".into(), json!(tol));
    Ok(Done { status: pass_if(worst <= tol), metrics, summary, csv: csv.into_bytes() })
}

/// Boundary-adjacent residual region inside the time window.
fn residual_region(dim: usize, time_window: f64) -> ResidualRegion {
    let x1 = if dim == 2 { (-0.5, 0.5) } else { (0.0, 0.0) };
    ResidualRegion {
        x: [(-0.5, 0.5), x1],
        y: (0.2, 0.8),
        t: (-0.75 * time_window, -0.25 * time_window),
        points_per_axis: 3,
    }
}

fn extend_check(u: &SpaceTimeField, ext: &ExtensionField, cfg: &FracConfig, tol: f64) -> Result<Done> {
    let grid = *u.grid();
    let spec = u.spectrum();
    let scale = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut worst_const = 0.0f64;
    let mut modes = 0usize;
    for (i, c) in spec.iter().enumerate() {
        if c.norm() <= 1e-13 * scale {
            continue;
        }
        let mode = grid.mode(i);
        let l = principal_l(mode.xi_norm(), mode.sigma);
        if l.norm() == 0.0 {
            continue;
        }
        let (_, extrapolated) = mode_flux_limit(cfg, l, ext.ygrid())?;
        let l2s = principal_pow(l * l, cfg.s());
        worst_const = worst_const.max((-extrapolated / (cfg.c_s() * l2s) - 1.0).norm());
        modes += 1;
    }
    let tw = grid.time_window();
    let probes = [([0.0, 0.0], 0.5, -0.3 * tw), ([1.3, 0.2], 0.1, -0.8 * tw), ([-2.0, -0.4], 2.0, -0.05 * tw)];
    let poisson = poisson_check(u, cfg, &probes)?;
    let (res, order) = residual_convergence(ext, cfg, &residual_region(grid.dim(), tw), 0.04, 1e-15)?;
    let order_ok = order.is_none_or(|p| (p - 2.0).abs() <= 0.2);
    let poisson_tol = 1e-7;
    let rows = [
        ("neumann_constant", worst_const, tol, worst_const <= tol),
        ("poisson_deviation", poisson, poisson_tol, poisson <= poisson_tol),
        ("residual_order", order.unwrap_or(f64::NAN), 0.2, order_ok),
    ];
    let mut csv = String::from("check,value,tolerance,pass\n");
    for (name, v, t, ok) in rows {
        csv.push_str(&format!("{name},{},{},{ok}\n", fmt(v), fmt(t)));
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("neumann_constant_max_deviation".into(), json!(worst_const));
    metrics.insert("active_modes".into(), json!(modes));
    metrics.insert("poisson_deviation".into(), json!(poisson));
    metrics.insert("residuals".into(), json!(res));
    metrics.insert("residual_order".into(), json!(order));
    let summary = rows.iter().map(|(n, v, t, ok)| format!("{n}: {v:.3e} (tolerance {t:.1e}) {}", if *ok { "ok" } else { "FAIL" })).collect();
    Ok(Done { status: pass_if(rows.iter().all(|r| r.3)), metrics, summary, csv: csv.into_bytes() })
}

fn frequency(subject: &Subject, cfg: &FracConfig, quad: &GaussianQuadrature, radii: &[f64], c: f64, tol: f64, slack: f64) -> Result<Done> {
    let curve = adjusted_frequency_curve(subject.solution(), cfg, quad, radii, c)?;
    let mut csv = Vec::new();
    curve.write_csv(&mut csv)?;
    let ns = curve.frequencies();
    let mut metrics = BTreeMap::new();
    metrics.insert("N_min".into(), json!(ns.iter().copied().fold(f64::INFINITY, f64::min)));
    metrics.insert("N_max".into(), json!(ns.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
    metrics.insert("min_frequency_increment".into(), json!(curve.min_frequency_increment()));
    metrics.insert("min_adjusted_increment".into(), json!(curve.min_adjusted_increment()));
    metrics.insert("truncated".into(), json!(curve.truncated));
    let (status, verdict) = match subject {
        Subject::Builtin { kappa: Some(k), solves: true, .. } => {
            let dev = ns.iter().map(|n| (n - k).abs()).fold(0.0, f64::max);
            metrics.insert("kappa".into(), json!(k));
            metrics.insert("max_deviation_from_kappa".into(), json!(dev));
            if let Some(v) = nondegeneracy_metrics(&curve, tol) {
                metrics.insert("nondegeneracy".into(), v);
            }
            (pass_if(dev <= tol && ns.len() == radii.len()), format!("N = {k} within {dev:.3e}"))
        }
        Subject::Builtin { solves: false, .. } => (Status::ReportOnly, "field does not solve the extension problem".into()),
        Subject::Builtin { zero_flux: true, .. } => {
            let ok = curve.is_monotone(true, slack);
            (pass_if(ok), format!("N nondecreasing within -{slack:e}: {ok}"))
        }
        Subject::Builtin { .. } => (Status::ReportOnly, "Neumann data do not vanish; monotonicity is not asserted".into()),
        Subject::Grid { potential: Some(_), .. } => {
            let ok = curve.is_monotone(false, slack);
            (pass_if(ok), format!("adjusted frequency nondecreasing within -{slack:e} at C = {c}: {ok}"))
        }
        Subject::Grid { potential: None, .. } => (
            Status::ReportOnly,
            "without a potential the extension carries the flux -c_s H^s u; monotonicity is not asserted".into(),
        ),
    };
    Ok(Done { status, metrics, summary: vec![verdict], csv })
}

fn blowup(subject: &Subject, cfg: &FracConfig, quad: &GaussianQuadrature, radii: &[f64], expected: Option<f64>, tol: f64) -> Result<Done> {
    let rep = blowup_sequence(&subject.solution(), cfg, quad, radii)?;
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    let dists: Vec<f64> = rep.distances.iter().flatten().copied().collect();
    let decaying = dists.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-9) + 1e-12);
    let mut metrics = BTreeMap::new();
    metrics.insert("kappa_hat".into(), json!(rep.kappa_hat));
    metrics.insert("N_smallest".into(), json!(rep.n_smallest));
    metrics.insert("distances_decay".into(), json!(decaying));
    metrics.insert("max_h_norm_deviation".into(), json!(rep.h_norm.iter().map(|h| (h - 1.0).abs()).fold(0.0, f64::max)));
    let mut ok = match (rep.kappa_hat, rep.n_smallest) {
        (Some(k), Some(n)) => (k - n).abs() <= tol,
        _ => false,
    };
    if let (Some(want), Some(k)) = (expected, rep.kappa_hat) {
        ok &= (k - want).abs() <= tol;
    }
    let mut summary = vec![format!("kappa_hat = {}, N(r_min) = {}", fmt_opt(rep.kappa_hat), fmt_opt(rep.n_smallest))];
    if !decaying {
        summary.push("Gaussian distances between consecutive rescalings do not decay".into());
    }
    Ok(Done { status: pass_if(ok), metrics, summary, csv })
}

fn harnack(u: &SpaceTimeField, cfg: &FracConfig, v: Option<&PotentialField>, x0: &[f64], radii: &[f64], samples: usize) -> Result<Done> {
    let grid = *u.grid();
    let zero = PotentialField::zero(grid);
    let v = v.unwrap_or(&zero);
    let hs = frac_heat_multiplier(u, cfg);
    let vs = v.samples();
    let c = cfg.c_s();
    let psi_samples = (0..grid.len()).map(|i| Complex64::new((hs.samples()[i] - u.samples()[i] * vs[i] / c).re, 0.0)).collect();
    let psi_field = SpaceTimeField::from_samples(grid, psi_samples)?;
    let x = [x0[0], x0.get(1).copied().unwrap_or(0.0)];
    let rep = harnack_quotient(u, cfg, v, &psi_field, x, radii, samples)?;
    let mut csv = String::from("r,sup,inf,C_hat\n");
    for r in &rep.rows {
        csv.push_str(&format!("{},{},{},{}\n", fmt(r.r), fmt(r.sup), fmt(r.inf), fmt(r.c_hat)));
    }
    let mut metrics = BTreeMap::new();
    metrics.insert("variation".into(), json!(rep.variation));
    metrics.insert("consistency".into(), json!(rep.consistency));
    metrics.insert("psi_sup".into(), json!(psi_field.sup_norm()));
    Ok(Done { status: Status::ReportOnly, metrics, summary: vec![format!("C_hat varies by {:.3e} across radii", rep.variation)], csv: csv.into_bytes() })
}

#[allow(clippy::too_many_arguments)]
fn vanishing(subject: &Subject, radii: &[f64], center: &[f64], t0: f64, half_space: bool, expected: &Option<ExpectedOrder>, tol: f64, samples: usize) -> Result<Done> {
    let field = subject.solution();
    let dim = field.dim();
    let f = |p: &[f64], t: f64| {
        let x = [p[0], if dim == 2 { p[1] } else { 0.0 }];
        let y = if half_space { p[dim] } else { 0.0 };
        if y == 0.0 {
            field.boundary_value(x, t)
        } else {
            field.value(x, y, t)
        }
    };
    let opts = VanishingOptions { samples_per_axis: samples, ..VanishingOptions::default() };
    let rep = vanishing_order(&f, center, t0, half_space, radii, &opts)?;
    let mut csv = Vec::new();
    rep.write_csv(&mut csv)?;
    let order_text = match rep.order {
        VanishingOrder::Finite(p) => format!("{p:.6}"),
        VanishingOrder::Infinite => "infinite".to_string(),
    };
    let status = match (expected, rep.order) {
        (None, _) => Status::ReportOnly,
        (Some(ExpectedOrder::Finite(want)), VanishingOrder::Finite(p)) => pass_if((p - want).abs() <= tol),
        (Some(ExpectedOrder::Named(_)), VanishingOrder::Infinite) => Status::Pass,
        _ => Status::Fail,
    };
    let mut metrics = BTreeMap::new();
    metrics.insert("order".into(), json!(order_text));
    metrics.insert("refinement_change".into(), json!(rep.refinement_change));
    Ok(Done { status, metrics, summary: vec![format!("vanishing order at {center:?}, t0 = {t0}: {order_text}")], csv })
}

fn calibrate(subject: &Subject, cfg: &FracConfig, quad: &GaussianQuadrature, radii: &[f64], slack: f64) -> Result<Done> {
    let curve = adjusted_frequency_curve(subject.solution(), cfg, quad, radii, 0.0)?;
    let c = calibrate_c(&curve, slack);
    let shown = curve.with_constant(c.unwrap_or(0.0));
    let mut csv = String::from("r,psi,N,adjusted\n");
    for p in &shown.points {
        csv.push_str(&format!("{},{},{},{}\n", fmt(p.functionals.r), fmt(p.psi), fmt_opt(p.functionals.n), fmt_opt(p.adjusted)));
    }
    let mut summary = vec![match c {
        Some(c) => format!("smallest monotonizing C = {c}"),
        None => "no monotonizing C below the cap".to_string(),
    }];
    summary.extend(shown.points.iter().map(|p| format!("  r = {:.4}  psi(r) = {:.6e}", p.functionals.r, psi(cfg, p.functionals.r))));
    let mut metrics = BTreeMap::new();
    metrics.insert("C".into(), json!(c));
    metrics.insert("sandwich_constant".into(), json!(curve.sandwich_constant()));
    Ok(Done { status: pass_if(c.is_some()), metrics, summary, csv: csv.into_bytes() })
}

fn dispatch(scenario: &Scenario, subject: &Subject, e: &Experiment) -> Result<Done> {
    let cfg = FracConfig::new(scenario.s)?;
    let quad = || GaussianQuadrature::with_defaults(&cfg, scenario.dim);
    let grid_only = |kind: &str| FhError::Structural(format!("{kind} needs a grid field"));
    match e {
        Experiment::OpCheck { s_values, tolerance } => match subject {
            Subject::Grid { u, .. } => op_check(scenario, u, s_values, *tolerance),
            _ => Err(grid_only("op-check")),
        },
        Experiment::ExtendCheck { tolerance } => match subject {
            Subject::Grid { u, ext, .. } => extend_check(u, ext, &cfg, *tolerance),
            _ => Err(grid_only("extend-check")),
        },
        Experiment::Frequency { radii, c, tolerance, slack } => frequency(subject, &cfg, &quad()?, radii, *c, *tolerance, *slack),
        Experiment::Blowup { radii, expected_kappa, tolerance } => blowup(subject, &cfg, &quad()?, radii, *expected_kappa, *tolerance),
        Experiment::Harnack { radii, x0, samples } => match subject {
            Subject::Grid { u, potential, .. } => harnack(u, &cfg, potential.as_ref(), x0, radii, *samples),
            _ => Err(grid_only("harnack")),
        },
        Experiment::VanishingOrder { radii, center, t0, half_space, expected, tolerance, samples } => {
            vanishing(subject, radii, center, *t0, *half_space, expected, *tolerance, *samples)
        }
        Experiment::CalibrateC { radii, slack } => calibrate(subject, &cfg, &quad()?, radii, *slack),
    }
}

/// Growth bound `H(r) ≥ H(r₀)(r/r₀)^{4N̄+a}` with `r₀` the largest radius.
fn nondegeneracy_metrics(curve: &FrequencyCurve, tol: f64) -> Option<Value> {
    let r0 = curve.radii().last().copied()?;
    nondegeneracy_check(curve, r0, tol).ok().map(|v| json!({"holds": v.holds, "min_slack": v.min_slack, "n_bar": v.n_bar}))
}

/// The experiments a run executes, after kind filtering and tolerance scaling.
pub fn planned_experiments(scenario: &Scenario, opts: &RunOptions) -> Vec<Experiment> {
    let mut list: Vec<Experiment> = match &opts.only {
        Some(kind) => {
            let matching: Vec<Experiment> = scenario.experiments.iter().filter(|e| e.kind() == kind).cloned().collect();
            if matching.is_empty() {
                Experiment::default_for(kind, scenario).into_iter().collect()
            } else {
                matching
            }
        }
        None => scenario.experiments.clone(),
    };
    for e in &mut list {
        *e = e.scaled(opts.tolerance_scale);
    }
    list
}

/// Runs every planned experiment and writes CSVs, `report.json` and `MANIFEST` to the output directory.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> std::result::Result<RunReport, FhError> {
    let start = Instant::now();
    let mut scenario = scenario.clone();
    if let Some(seed) = opts.seed {
        scenario.seed = seed;
    }
    let experiments = planned_experiments(&scenario, opts);
    scenario.experiments = experiments.clone();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| FhError::Structural(format!("cannot start {} worker threads: {e}", opts.threads)))?;
    let subject = pool.install(|| build_subject(&scenario, &opts.base_dir))?;
    let outcomes: Vec<ExperimentOutcome> = pool.install(|| {
        experiments
            .par_iter()
            .enumerate()
            .map(|(j, e)| {
                let t = Instant::now();
                let result = dispatch(&scenario, &subject, e);
                let file = format!("{j:02}-{}.csv", e.kind());
                let ms = t.elapsed().as_secs_f64() * 1e3;
                match result {
                    Ok(d) => ExperimentOutcome {
                        kind: e.kind().to_string(),
                        status: d.status,
                        metrics: d.metrics,
                        outputs: vec![file],
                        summary: d.summary,
                        wall_clock_ms: ms,
                        message: None,
                        csv: Some(d.csv),
                    },
                    Err(err) => ExperimentOutcome {
                        kind: e.kind().to_string(),
                        status: Status::Error,
                        metrics: BTreeMap::new(),
                        outputs: Vec::new(),
                        summary: vec![err.to_string()],
                        wall_clock_ms: ms,
                        message: Some(err.to_string()),
                        csv: None,
                    },
                }
            })
            .collect()
    });
    std::fs::create_dir_all(&opts.out_dir)?;
    let mut manifest = Vec::new();
    for o in &outcomes {
        if let (Some(csv), Some(name)) = (&o.csv, o.outputs.first()) {
            std::fs::write(opts.out_dir.join(name), csv)?;
            manifest.push((name.clone(), crate::report::sha256_hex(csv)));
        }
    }
    let report = RunReport {
        tool: "fhlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        scenario: scenario.name.clone(),
        seed: scenario.seed,
        threads: opts.threads,
        tolerance_scale: opts.tolerance_scale,
        wall_clock_ms: start.elapsed().as_secs_f64() * 1e3,
        experiments: outcomes,
        config: scenario.to_toml(),
    };
    let json = serde_json::to_vec_pretty(&report).map_err(|e| FhError::Format(e.to_string()))?;
    std::fs::write(opts.out_dir.join("report.json"), &json)?;
    manifest.push(("report.json".into(), crate::report::sha256_hex(&json)));
    crate::report::write_manifest(&opts.out_dir, &manifest)?;
    Ok(report)
}
