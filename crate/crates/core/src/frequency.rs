//! Gaussian-weighted functionals on the strip `{y > 0, −r² < t < 0}`.
//!
//! With `Ḡ(X,t) = (4π|t|)^{−(n+1)/2} e^{−|X|²/4|t|}`:
//!
//! - `h(t) = ∫ y^a U² Ḡ dX`
//! - `i(t) = |t| ∫ y^a |∇U|² Ḡ dX − |t| ∫ V u² Ḡ(x,0,t) dx`
//! - `H(r) = r^{−2} ∫_{−r²}^0 h`, `I(r) = r^{−2} ∫_{−r²}^0 i`, `N = I/H`
//!
//! Every time slice is rescaled by `X = √(4|t|) X′`, so one fixed tensor rule
//! with weight `e^{−|x′|²} (y′)^a e^{−y′²}` serves all `t`.

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;

use crate::error::{domain, FhError, Result};
use crate::fracheat::FracConfig;
use crate::quadrature::{compensated_sum, gauss_hermite, half_range_de, tanh_sinh, Rule};
use crate::solution::{Jet, SolutionField};
use crate::specfun::gamma_unchecked;

/// `|X′|` beyond which nodes of the rescaled rule are dropped.
pub const TRUNCATION_RADIUS: f64 = 10.0;
/// Fraction of `√T` kept free at the far end of the time window.
pub const WINDOW_MARGIN: f64 = 0.05;
/// `H` at or below this value is reported as degenerate.
pub const DEGENERATE_H: f64 = 1e-300;
/// Relative step of the central difference for `H′` in curves.
pub const CURVE_FD_STEP: f64 = 1e-3;

/// Backward heat kernel of `ℝ^{n+1}` centred at `(x₀, 0, t₀)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackwardGaussian {
    pub dim: usize,
    pub x0: [f64; 2],
    pub t0: f64,
}

impl BackwardGaussian {
    pub fn new(dim: usize) -> Self {
        Self { dim, x0: [0.0; 2], t0: 0.0 }
    }

    pub fn centered(dim: usize, x0: [f64; 2], t0: f64) -> Self {
        Self { dim, x0, t0 }
    }

    fn lag(&self, t: f64) -> Result<f64> {
        let d = self.t0 - t;
        if !(d > 0.0) {
            return domain(format!("backward kernel needs t < t0, got t = {t}, t0 = {}", self.t0));
        }
        Ok(d)
    }

    /// `G(x,t) = (4π|t|)^{−n/2} e^{−|x|²/4|t|}`.
    pub fn g(&self, x: [f64; 2], t: f64) -> Result<f64> {
        let d = self.lag(t)?;
        let r2: f64 = (0..self.dim).map(|i| (x[i] - self.x0[i]).powi(2)).sum();
        Ok((4.0 * PI * d).powf(-0.5 * self.dim as f64) * (-r2 / (4.0 * d)).exp())
    }

    /// `K(y,t) = (4π|t|)^{−1/2} e^{−y²/4|t|}`.
    pub fn k(&self, y: f64, t: f64) -> Result<f64> {
        let d = self.lag(t)?;
        Ok((4.0 * PI * d).powf(-0.5) * (-y * y / (4.0 * d)).exp())
    }

    pub fn eval(&self, x: [f64; 2], y: f64, t: f64) -> Result<f64> {
        Ok(self.g(x, t)? * self.k(y, t)?)
    }

    /// `∇Ḡ = (X − X₀)/(2(t − t₀)) · Ḡ`.
    pub fn gradient(&self, x: [f64; 2], y: f64, t: f64) -> Result<[f64; 3]> {
        let v = self.eval(x, y, t)?;
        let c = v / (2.0 * (t - self.t0));
        Ok([c * (x[0] - self.x0[0]), c * (x[1] - self.x0[1]), c * y])
    }
}

/// Closed form of `∫_{y>0} y^a Ḡ(X,t) dX = 2^{a−1} Γ((a+1)/2) |t|^{a/2} / √π`.
pub fn half_space_mass(a: f64, t: f64) -> f64 {
    2f64.powf(a - 1.0) * gamma_unchecked(0.5 * (a + 1.0)) * t.abs().powf(0.5 * a) / PI.sqrt()
}

/// Fixed tensor rule for the rescaled slice integrals plus the time rule step.
#[derive(Debug, Clone)]
pub struct GaussianQuadrature {
    dim: usize,
    a: f64,
    x_nodes: Vec<[f64; 2]>,
    x_weights: Vec<f64>,
    y_rule: Rule,
    t_step: f64,
}

/// Sizes of the rules actually in use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct QuadratureInfo {
    pub x_nodes: usize,
    pub y_nodes: usize,
    pub t_nodes: usize,
}

impl GaussianQuadrature {
    /// `hermite` nodes per x-axis, DE step `y_step` in y′, tanh-sinh step `t_step` in t.
    pub fn new(cfg: &FracConfig, dim: usize, hermite: usize, y_step: f64, t_step: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(FhError::Structural(format!("space dimension must be 1 or 2, got {dim}")));
        }
        if hermite < 4 || !(y_step > 0.0) || !(t_step > 0.0) {
            return Err(FhError::Quadrature("quadrature sizes must be positive".into()));
        }
        let h = gauss_hermite(hermite);
        let mut x_nodes = Vec::new();
        let mut x_weights = Vec::new();
        if dim == 1 {
            for (x, w) in h.nodes.iter().zip(&h.weights) {
                if x.abs() <= TRUNCATION_RADIUS {
                    x_nodes.push([*x, 0.0]);
                    x_weights.push(*w);
                }
            }
        } else {
            for (x1, w1) in h.nodes.iter().zip(&h.weights) {
                for (x2, w2) in h.nodes.iter().zip(&h.weights) {
                    if x1.hypot(*x2) <= TRUNCATION_RADIUS && w1 * w2 > 1e-300 {
                        x_nodes.push([*x1, *x2]);
                        x_weights.push(w1 * w2);
                    }
                }
            }
        }
        let a = cfg.a();
        let full = half_range_de(a, y_step);
        let mut y_rule = Rule { nodes: Vec::new(), weights: Vec::new() };
        for (y, w) in full.nodes.iter().zip(&full.weights) {
            if *y <= TRUNCATION_RADIUS {
                y_rule.nodes.push(*y);
                y_rule.weights.push(*w);
            }
        }
        Ok(Self { dim, a, x_nodes, x_weights, y_rule, t_step })
    }

    /// 48 Hermite nodes per axis for `n = 1` and 32 for `n = 2`; DE step 1/16; time step 1/12.
    pub fn with_defaults(cfg: &FracConfig, dim: usize) -> Result<Self> {
        Self::new(cfg, dim, if dim == 1 { 48 } else { 32 }, 1.0 / 16.0, 1.0 / 12.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn info(&self, r: f64) -> QuadratureInfo {
        QuadratureInfo { x_nodes: self.x_nodes.len(), y_nodes: self.y_rule.len(), t_nodes: self.time_rule(r).len() }
    }

    /// Tanh-sinh rule on `(−r², 0)`, with nodes of negligible weight dropped.
    pub fn time_rule(&self, r: f64) -> Rule {
        let full = tanh_sinh(-r * r, 0.0, self.t_step);
        let max = full.weights.iter().copied().fold(0.0, f64::max);
        let mut rule = Rule { nodes: Vec::new(), weights: Vec::new() };
        for (t, w) in full.nodes.iter().zip(&full.weights) {
            if *w > 1e-22 * max {
                rule.nodes.push(*t);
                rule.weights.push(*w);
            }
        }
        rule
    }

    /// `∫ y^a f Ḡ dX` at one time through the rescaled tensor rule.
    pub fn integrate_slice(&self, t: f64, f: impl Fn([f64; 2], f64) -> f64) -> f64 {
        let scale = (4.0 * t.abs()).sqrt();
        let terms = self.y_rule.nodes.iter().zip(&self.y_rule.weights).flat_map(|(yp, wy)| {
            let f = &f;
            self.x_nodes.iter().zip(&self.x_weights).map(move |(xp, wx)| {
                wx * wy * f([scale * xp[0], scale * xp[1]], scale * yp)
            })
        });
        self.interior_prefactor(t) * compensated_sum(terms)
    }

    fn interior_prefactor(&self, t: f64) -> f64 {
        PI.powf(-0.5 * (self.dim as f64 + 1.0)) * (4.0 * t.abs()).powf(0.5 * self.a)
    }

    fn boundary_prefactor(&self, t: f64) -> f64 {
        (4.0 * PI * t.abs()).powf(-0.5) * PI.powf(-0.5 * self.dim as f64)
    }
}

/// `ZU = ⟨X, ∇U⟩ + 2t ∂_t U`.
pub fn z_apply(field: &dyn SolutionField, x: [f64; 2], y: f64, t: f64) -> f64 {
    z_of(&field.jet(x, y, t), x, y, t)
}

/// `ZU − degree · U`; zero for parabolically homogeneous fields of that degree.
pub fn euler_residual(field: &dyn SolutionField, x: [f64; 2], y: f64, t: f64, degree: f64) -> f64 {
    let j = field.jet(x, y, t);
    z_of(&j, x, y, t) - degree * j.value
}

fn z_of(j: &Jet, x: [f64; 2], y: f64, t: f64) -> f64 {
    x[0] * j.dx[0] + x[1] * j.dx[1] + y * j.dy + 2.0 * t * j.dt
}

/// Slice integrals at one time `t < 0`, before any time averaging.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct SliceIntegrals {
    pub t: f64,
    /// `∫ y^a U² Ḡ`
    pub height: f64,
    /// `∫ y^a |∇U|² Ḡ`
    pub grad: f64,
    /// `∫ V u² Ḡ(x,0,t) dx`
    pub boundary: f64,
    /// `∫ u² Ḡ(x,0,t) dx`
    pub boundary_mass: f64,
    /// `∫ y^a U · ZU · Ḡ`
    pub uzu: f64,
    /// `∫ y^a (ZU)² Ḡ`
    pub zz: f64,
}

impl SliceIntegrals {
    /// `i(t) = |t| (∫ y^a |∇U|² Ḡ − ∫ V u² Ḡ(x,0,t))`.
    pub fn energy(&self) -> f64 {
        self.t.abs() * (self.grad - self.boundary)
    }
}

/// Slice integrals of `field` at time `t`, with the kernel evaluated at
/// `t − kernel_shift` and the drift of `Z` taken relative to the kernel time.
fn slice_integrals_shifted(
    field: &dyn SolutionField,
    quad: &GaussianQuadrature,
    t_field: f64,
    t_kernel: f64,
) -> SliceIntegrals {
    let scale = (4.0 * t_kernel.abs()).sqrt();
    let xs: Vec<[f64; 2]> = quad.x_nodes.iter().map(|p| [scale * p[0], scale * p[1]]).collect();
    let ys: Vec<f64> = quad.y_rule.nodes.iter().map(|y| scale * y).collect();
    let mut jets = Vec::with_capacity(xs.len() * ys.len());
    field.jets_on_tensor(&xs, &ys, t_field, &mut jets);
    let nx = xs.len();
    let mut acc = [Vec::with_capacity(jets.len()), Vec::new(), Vec::new(), Vec::new()];
    for v in acc.iter_mut() {
        v.reserve(jets.len());
    }
    for (iy, (y, wy)) in ys.iter().zip(&quad.y_rule.weights).enumerate() {
        for (ix, (x, wx)) in xs.iter().zip(&quad.x_weights).enumerate() {
            let j = &jets[iy * nx + ix];
            let w = wx * wy;
            let z = z_of(j, *x, *y, t_kernel);
            acc[0].push(w * j.value * j.value);
            acc[1].push(w * j.grad_norm_sqr());
            acc[2].push(w * j.value * z);
            acc[3].push(w * z * z);
        }
    }
    let pi = quad.interior_prefactor(t_kernel);
    let pb = quad.boundary_prefactor(t_kernel);
    let mut bnd = Vec::with_capacity(nx);
    let mut bmass = Vec::with_capacity(nx);
    for (x, wx) in xs.iter().zip(&quad.x_weights) {
        let u = field.boundary_value(*x, t_field);
        let v = field.potential(*x, t_field);
        bnd.push(wx * v * u * u);
        bmass.push(wx * u * u);
    }
    let [h, g, uz, zz] = acc.map(|v| pi * compensated_sum(v));
    SliceIntegrals {
        t: t_kernel,
        height: h,
        grad: g,
        boundary: pb * compensated_sum(bnd),
        boundary_mass: pb * compensated_sum(bmass),
        uzu: uz,
        zz,
    }
}

pub fn slice_integrals(field: &dyn SolutionField, quad: &GaussianQuadrature, t: f64) -> Result<SliceIntegrals> {
    if !(t < 0.0) {
        return domain(format!("slice integrals need t < 0, got {t}"));
    }
    Ok(slice_integrals_shifted(field, quad, t, t))
}

/// `h(t) = ∫ y^a U² Ḡ dX`.
pub fn height(field: &dyn SolutionField, quad: &GaussianQuadrature, t: f64) -> Result<f64> {
    Ok(slice_integrals(field, quad, t)?.height)
}

/// `i(t)`, including the boundary potential term.
pub fn energy_t(field: &dyn SolutionField, quad: &GaussianQuadrature, t: f64) -> Result<f64> {
    Ok(slice_integrals(field, quad, t)?.energy())
}

/// Time-averaged functionals on the strip of radius `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct Functionals {
    pub r: f64,
    pub h: f64,
    pub i: f64,
    /// `I/H`, `None` when `H` is degenerate.
    pub n: Option<f64>,
    /// `r^{−2} ∫∫ y^a |t| |∇U|² Ḡ / H`.
    pub n1: Option<f64>,
    /// `(2r²)^{−1} ∫∫ y^a U · ZU · Ḡ`, which equals `I` for solutions.
    pub alt_energy: f64,
    /// `∫∫ y^a (ZU)² Ḡ · ∫∫ y^a U² Ḡ − (∫∫ y^a U ZU Ḡ)²`.
    pub cs_defect: f64,
    /// `∫∫ y^a (ZU)² Ḡ · ∫∫ y^a U² Ḡ`.
    pub cs_scale: f64,
    /// `min_t (i(t) + h(t))` over the time nodes.
    pub min_i_plus_h: f64,
    /// `max_t ∫ u² Ḡ(x,0,t) / (|t|^{s−1}(i(t) + h(t)))` over nodes with `i + h > 0`.
    pub trace_ratio: f64,
    pub quadrature: QuadratureInfo,
}

impl Functionals {
    pub fn is_degenerate(&self) -> bool {
        self.n.is_none()
    }
}

fn check_radius(field: &dyn SolutionField, r: f64) -> Result<()> {
    if !(r > 0.0 && r.is_finite()) {
        return domain(format!("radius must be positive, got {r}"));
    }
    if let Some(tw) = field.time_window() {
        let max = tw.sqrt() * (1.0 - WINDOW_MARGIN);
        if r > max {
            return domain(format!("radius {r} exceeds the admissible {max:.6} for a time window of {tw}"));
        }
    }
    Ok(())
}

pub fn averaged_functionals(
    field: &dyn SolutionField,
    cfg: &FracConfig,
    quad: &GaussianQuadrature,
    r: f64,
) -> Result<Functionals> {
    check_radius(field, r)?;
    let rule = quad.time_rule(r);
    let slices: Vec<SliceIntegrals> =
        rule.nodes.par_iter().map(|&t| slice_integrals_shifted(field, quad, t, t)).collect();
    Ok(assemble(cfg, quad, r, &rule, &slices))
}

fn assemble(cfg: &FracConfig, quad: &GaussianQuadrature, r: f64, rule: &Rule, slices: &[SliceIntegrals]) -> Functionals {
    let r2 = r * r;
    let sum = |f: &dyn Fn(&SliceIntegrals) -> f64| -> f64 {
        compensated_sum(rule.weights.iter().zip(slices).map(|(w, s)| w * f(s)))
    };
    let hh = sum(&|s| s.height);
    let ii = sum(&|s| s.energy());
    let grad_t = sum(&|s| s.t.abs() * s.grad);
    let uzu = sum(&|s| s.uzu);
    let zz = sum(&|s| s.zz);
    let h = hh / r2;
    let i = ii / r2;
    let defined = h > DEGENERATE_H;
    let min_i_plus_h = slices.iter().map(|s| s.energy() + s.height).fold(f64::INFINITY, f64::min);
    let trace_ratio = slices
        .iter()
        .filter(|s| s.energy() + s.height > 0.0)
        .map(|s| s.boundary_mass / (s.t.abs().powf(cfg.s() - 1.0) * (s.energy() + s.height)))
        .fold(0.0, f64::max);
    Functionals {
        r,
        h,
        i,
        n: defined.then(|| i / h),
        n1: defined.then(|| grad_t / r2 / h),
        alt_energy: uzu / (2.0 * r2),
        cs_defect: zz * hh - uzu * uzu,
        cs_scale: zz * hh,
        min_i_plus_h,
        trace_ratio,
        quadrature: QuadratureInfo { x_nodes: quad.x_nodes.len(), y_nodes: quad.y_rule.len(), t_nodes: rule.len() },
    }
}

/// Central-difference residuals of `H′ = (4/r) I + (a/r) H` at steps `dr, dr/2, dr/4`.
#[derive(Debug, Clone, PartialEq)]
pub struct FirstVariation {
    pub r: f64,
    pub steps: [f64; 3],
    pub fd: [f64; 3],
    pub formula: f64,
    pub residuals: [f64; 3],
    /// Observed order, `None` when every residual sits at the rounding floor.
    pub order: Option<f64>,
}

/// Residual floor relative to `|H′|` below which the difference is considered exact.
pub const FIRST_VARIATION_FLOOR: f64 = 1e-11;

pub fn first_variation_check(
    field: &dyn SolutionField,
    cfg: &FracConfig,
    quad: &GaussianQuadrature,
    r: f64,
    dr: f64,
) -> Result<FirstVariation> {
    if !(dr > 0.0 && dr < r) {
        return domain(format!("difference step must lie in (0, r), got {dr}"));
    }
    let f = averaged_functionals(field, cfg, quad, r)?;
    let formula = (4.0 * f.i + cfg.a() * f.h) / r;
    let steps = [dr, 0.5 * dr, 0.25 * dr];
    let mut fd = [0.0; 3];
    for (k, h) in steps.iter().enumerate() {
        let hp = averaged_functionals(field, cfg, quad, r + h)?.h;
        let hm = averaged_functionals(field, cfg, quad, r - h)?.h;
        fd[k] = (hp - hm) / (2.0 * h);
    }
    let residuals = fd.map(|d| (d - formula).abs());
    let floor = FIRST_VARIATION_FLOOR * formula.abs().max(f.h / r);
    let order = if residuals.iter().all(|v| *v <= floor) {
        None
    } else {
        Some(0.5 * ((residuals[0] / residuals[1]).log2() + (residuals[1] / residuals[2]).log2()))
    };
    Ok(FirstVariation { r, steps, fd, formula, residuals, order })
}

/// `ψ(r) = r^{2s}/(2s) = ∫₀^r t^{−a} dt`.
pub fn psi(cfg: &FracConfig, r: f64) -> f64 {
    r.powf(2.0 * cfg.s()) / (2.0 * cfg.s())
}

/// `e^{Cψ(r)} (N(r) + Cψ(r))`.
pub fn adjusted_value(n: f64, c: f64, psi: f64) -> f64 {
    (c * psi).exp() * (n + c * psi)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub functionals: Functionals,
    pub psi: f64,
    pub adjusted: Option<f64>,
    pub dh_fd: f64,
    pub dh_formula: f64,
}

/// Frequency data along an increasing list of radii.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyCurve {
    pub s: f64,
    pub c: f64,
    pub points: Vec<CurvePoint>,
    /// Set when a degenerate `H` cut the curve short.
    pub truncated: bool,
}

impl FrequencyCurve {
    pub fn radii(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.functionals.r).collect()
    }

    pub fn frequencies(&self) -> Vec<f64> {
        self.points.iter().filter_map(|p| p.functionals.n).collect()
    }

    pub fn psis(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.psi).collect()
    }

    /// Smallest increment of `N` between consecutive radii.
    pub fn min_frequency_increment(&self) -> f64 {
        min_increment(&self.frequencies())
    }

    /// Smallest increment of the adjusted quantity between consecutive radii.
    pub fn min_adjusted_increment(&self) -> f64 {
        let v: Vec<f64> = self.points.iter().filter_map(|p| p.adjusted).collect();
        min_increment(&v)
    }

    /// Nondecreasing within `slack`: `N` when `potential_free`, else the adjusted quantity.
    pub fn is_monotone(&self, potential_free: bool, slack: f64) -> bool {
        let inc = if potential_free { self.min_frequency_increment() } else { self.min_adjusted_increment() };
        inc >= -slack
    }

    /// Recompute the adjusted column for another `C`.
    pub fn with_constant(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.c = c;
        for p in &mut out.points {
            p.adjusted = p.functionals.n.map(|n| adjusted_value(n, c, p.psi));
        }
        out
    }

    /// `max |N − N₁| / (r^{2s}(N₁ + 1))` over the sampled radii.
    pub fn sandwich_constant(&self) -> f64 {
        self.points
            .iter()
            .filter_map(|p| {
                let (n, n1) = (p.functionals.n?, p.functionals.n1?);
                Some((n - n1).abs() / (p.functionals.r.powf(2.0 * self.s) * (n1 + 1.0)))
            })
            .fold(0.0, f64::max)
    }

    /// CSV with header `r,H,I,N,N1,psi,adjusted,dH_fd,dH_formula,flag`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "r,H,I,N,N1,psi,adjusted,dH_fd,dH_formula,flag")?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.15e}"));
        for p in &self.points {
            let f = &p.functionals;
            writeln!(
                w,
                "{:.15e},{:.15e},{:.15e},{},{},{:.15e},{},{:.15e},{:.15e},{}",
                f.r,
                f.h,
                f.i,
                fmt(f.n),
                fmt(f.n1),
                p.psi,
                fmt(p.adjusted),
                p.dh_fd,
                p.dh_formula,
                if f.is_degenerate() { "degenerate" } else { "ok" }
            )?;
        }
        Ok(())
    }
}

fn min_increment(v: &[f64]) -> f64 {
    v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

pub fn adjusted_frequency_curve(
    field: &dyn SolutionField,
    cfg: &FracConfig,
    quad: &GaussianQuadrature,
    radii: &[f64],
    c: f64,
) -> Result<FrequencyCurve> {
    if !(c >= 0.0) {
        return domain(format!("monotonicity constant must be non-negative, got {c}"));
    }
    if radii.windows(2).any(|w| w[1] <= w[0]) {
        return domain("radii must be strictly increasing");
    }
    let mut points = Vec::with_capacity(radii.len());
    let mut truncated = false;
    for &r in radii {
        let f = averaged_functionals(field, cfg, quad, r)?;
        let Some(n) = f.n else {
            truncated = true;
            log::warn!("H vanishes at r = {r}; frequency curve truncated");
            break;
        };
        let dr = CURVE_FD_STEP * r;
        let hp = averaged_functionals(field, cfg, quad, r + dr)?.h;
        let hm = averaged_functionals(field, cfg, quad, r - dr)?.h;
        let p = psi(cfg, r);
        points.push(CurvePoint {
            dh_fd: (hp - hm) / (2.0 * dr),
            dh_formula: (4.0 * f.i + cfg.a() * f.h) / r,
            adjusted: Some(adjusted_value(n, c, p)),
            psi: p,
            functionals: f,
        });
    }
    Ok(FrequencyCurve { s: cfg.s(), c, points, truncated })
}

/// Resolution of the bisection for the smallest monotonizing `C`.
pub const CALIBRATION_RESOLUTION: f64 = 1e-3;
/// Upper limit for the doubling phase of the calibration.
pub const CALIBRATION_CAP: f64 = 1e8;

/// Smallest `C ≥ 0`, to within [`CALIBRATION_RESOLUTION`], for which the adjusted
/// quantity is nondecreasing within `slack`; `None` if no `C ≤` [`CALIBRATION_CAP`] works.
pub fn calibrate_c(curve: &FrequencyCurve, slack: f64) -> Option<f64> {
    let ok = |c: f64| curve.with_constant(c).min_adjusted_increment() >= -slack;
    if ok(0.0) {
        return Some(0.0);
    }
    let mut hi = 1.0;
    while !ok(hi) {
        hi *= 2.0;
        if hi > CALIBRATION_CAP {
            return None;
        }
    }
    let mut lo = if hi > 1.0 { 0.5 * hi } else { 0.0 };
    while hi - lo > CALIBRATION_RESOLUTION {
        let mid = 0.5 * (lo + hi);
        if ok(mid) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Some(hi)
}

/// Single-time functionals centred at `(0, t₀)`:
/// `h̃(r) = ∫ y^a U₀(X, t₀−r²)² Ḡ(X,−r²)`, `ĩ(r) = r² ∫ y^a |∇U₀|² Ḡ(X,−r²)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Centered {
    pub r: f64,
    pub h: f64,
    pub i: f64,
    pub n: Option<f64>,
    /// `½ ∫ y^a U₀ (⟨X,∇U₀⟩ − 2r² ∂_t U₀) Ḡ(X,−r²)`, equal to `ĩ` for solutions with `V ≡ 0`.
    pub alt_energy: f64,
}

/// Checks `|t₀| + r² < min((|t₀| + 1)/2, 2|t₀|)`.
pub fn centered_guard(t0: f64, r: f64) -> Result<()> {
    if !(t0 < 0.0) {
        return domain(format!("centre time must be negative, got {t0}"));
    }
    let lhs = t0.abs() + r * r;
    let rhs = (0.5 * (t0.abs() + 1.0)).min(2.0 * t0.abs());
    if !(r > 0.0) || lhs >= rhs {
        return domain(format!("radius {r} outside the admissible range for t0 = {t0}"));
    }
    Ok(())
}

pub fn centered_frequency(field: &dyn SolutionField, quad: &GaussianQuadrature, t0: f64, r: f64) -> Result<Centered> {
    centered_guard(t0, r)?;
    let s = slice_integrals_shifted(field, quad, t0 - r * r, -r * r);
    let i = r * r * (s.grad - s.boundary);
    Ok(Centered {
        r,
        h: s.height,
        i,
        n: (s.height > DEGENERATE_H).then(|| i / s.height),
        alt_energy: 0.5 * s.uzu,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::solution::{Builtin, BuiltinKind};

    fn builtin(kind: BuiltinKind, s: f64, dim: usize) -> (Builtin, FracConfig) {
        let cfg = FracConfig::new(s).unwrap();
        (Builtin::new(kind, cfg, dim).unwrap(), cfg)
    }

    #[test]
    fn gaussian_identities() {
        let g = BackwardGaussian::new(2);
        let (x, y, t) = ([0.3, -0.2], 0.4, -0.7);
        let v = g.eval(x, y, t).unwrap();
        let grad = g.gradient(x, y, t).unwrap();
        let h = 1e-5;
        let fd0 = (g.eval([x[0] + h, x[1]], y, t).unwrap() - g.eval([x[0] - h, x[1]], y, t).unwrap()) / (2.0 * h);
        let fdy = (g.eval(x, y + h, t).unwrap() - g.eval(x, y - h, t).unwrap()) / (2.0 * h);
        assert!((fd0 - grad[0]).abs() < 1e-9 * v.max(1.0));
        assert!((fdy - grad[2]).abs() < 1e-9 * v.max(1.0));
        assert!(g.eval(x, y, 0.1).is_err());
    }

    #[test]
    fn full_space_mass_is_one() {
        // ∫_{ℝ^{n+1}} Ḡ = 2 ∫_{y>0} Ḡ with a = 0
        let cfg = FracConfig::new(0.5).unwrap();
        for dim in [1, 2] {
            let q = GaussianQuadrature::with_defaults(&cfg, dim).unwrap();
            for t in [-1e-3, -0.2, -3.0] {
                let m = 2.0 * q.integrate_slice(t, |_, _| 1.0);
                assert!((m - 1.0).abs() < 1e-10, "dim {dim} t {t} mass {m}");
            }
        }
    }

    #[test]
    fn weighted_half_space_mass() {
        for s in [0.1, 0.25, 0.5, 0.75, 0.9] {
            let cfg = FracConfig::new(s).unwrap();
            let q = GaussianQuadrature::with_defaults(&cfg, 1).unwrap();
            for t in [-1e-6, -0.25, -2.0] {
                let m = q.integrate_slice(t, |_, _| 1.0);
                let want = half_space_mass(cfg.a(), t);
                assert!((m / want - 1.0).abs() < 1e-9, "s={s} t={t}");
            }
        }
    }

    #[test]
    fn height_examples_at_half() {
        let (one, cfg) = builtin(BuiltinKind::One, 0.5, 1);
        let q = GaussianQuadrature::with_defaults(&cfg, 1).unwrap();
        for t in [-0.01, -0.3] {
            assert!((height(&one, &q, t).unwrap() - 0.5).abs() < 1e-12);
            let (x1, _) = builtin(BuiltinKind::X1, 0.5, 1);
            assert!((height(&x1, &q, t).unwrap() - t.abs()).abs() < 1e-12);
            assert!((energy_t(&x1, &q, t).unwrap() - 0.5 * t.abs()).abs() < 1e-12);
        }
        assert!(height(&one, &q, 0.0).is_err());
    }

    #[test]
    fn z_examples() {
        let cfg = FracConfig::new(0.3).unwrap();
        for (kind, deg) in [(BuiltinKind::X1, 1.0), (BuiltinKind::Y2s, 0.6), (BuiltinKind::Poly2, 2.0)] {
            let b = Builtin::new(kind, cfg, 1).unwrap();
            assert!(euler_residual(&b, [0.3, 0.0], 0.7, -0.2, deg).abs() < 1e-13);
        }
        let b = Builtin::new(BuiltinKind::X1, cfg, 1).unwrap();
        assert_eq!(z_apply(&b, [0.42, 0.0], 0.1, -0.3), 0.42);
    }

    #[test]
    fn homogeneous_frequencies() {
        for s in [0.25, 0.5, 0.75] {
            for (kind, dim) in [
                (BuiltinKind::One, 1),
                (BuiltinKind::X1, 1),
                (BuiltinKind::X1X2, 2),
                (BuiltinKind::Y2s, 1),
                (BuiltinKind::Poly2, 1),
            ] {
                let (b, cfg) = builtin(kind, s, dim);
                let q = GaussianQuadrature::with_defaults(&cfg, dim).unwrap();
                for r in [0.05, 0.2, 0.5] {
                    let f = averaged_functionals(&b, &cfg, &q, r).unwrap();
                    let n = f.n.unwrap();
                    assert!((n - b.kappa()).abs() < 1e-8, "{kind:?} s={s} r={r} N={n}");
                    assert!((f.alt_energy - f.i).abs() <= 1e-9 * f.h.max(f.i.abs()), "{kind:?} s={s}");
                    assert!(f.cs_defect >= -1e-10 * f.cs_scale);
                }
            }
        }
    }

    #[test]
    fn power_law_of_height() {
        let (b, cfg) = builtin(BuiltinKind::Poly2, 0.3, 1);
        let q = GaussianQuadrature::with_defaults(&cfg, 1).unwrap();
        let e = 4.0 * b.kappa() + cfg.a();
        let c0 = averaged_functionals(&b, &cfg, &q, 0.1).unwrap().h / 0.1f64.powf(e);
        let c1 = averaged_functionals(&b, &cfg, &q, 0.45).unwrap().h / 0.45f64.powf(e);
        assert!((c0 / c1 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn first_variation_orders() {
        let (b, cfg) = builtin(BuiltinKind::Y2s, 0.3, 1);
        let q = GaussianQuadrature::with_defaults(&cfg, 1).unwrap();
        let fv = first_variation_check(&b, &cfg, &q, 0.3, 0.02).unwrap();
        let p = fv.order.expect("power law with non-integer exponent leaves an O(dr²) residual");
        assert!((p - 2.0).abs() < 0.2, "{fv:?}");
        let (one, cfg) = builtin(BuiltinKind::One, 0.5, 1);
        let q = GaussianQuadrature::with_defaults(&cfg, 1).unwrap();
        let fv = first_variation_check(&one, &cfg, &q, 0.3, 0.02).unwrap();
        assert!(fv.residuals.iter().all(|r| *r < 1e-10));
    }

    #[test]
    fn curve_and_calibration() {
        let (b, cfg) = builtin(BuiltinKind::X1, 0.5, 1);
        let q = GaussianQuadrature::with_defaults(&cfg, 1).unwrap();
        let radii: Vec<f64> = (1..=5).map(|k| 0.1 * k as f64).collect();
        let curve = adjusted_frequency_curve(&b, &cfg, &q, &radii, 0.0).unwrap();
        assert!(curve.is_monotone(true, 1e-8));
        for p in &curve.points {
            assert!((p.adjusted.unwrap() - p.functionals.n.unwrap()).abs() < 1e-15);
            assert!((p.dh_fd - p.dh_formula).abs() < 1e-8);
        }
        assert_eq!(calibrate_c(&curve, 1e-8), Some(0.0));
        let mut buf = Vec::new();
        curve.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("r,H,I,N,N1,psi,adjusted,dH_fd,dH_formula,flag\n"));
        assert_eq!(text.lines().count(), 6);
    }

    #[test]
    fn calibration_finds_smallest_constant() {
        // a decreasing synthetic frequency profile
        let cfg = FracConfig::new(0.5).unwrap();
        let radii = [0.1, 0.2, 0.3, 0.4];
        let points = radii
            .iter()
            .map(|&r| CurvePoint {
                functionals: Functionals {
                    r,
                    h: 1.0,
                    i: 1.0 - r,
                    n: Some(1.0 - r),
                    n1: Some(1.0 - r),
                    alt_energy: 0.0,
                    cs_defect: 0.0,
                    cs_scale: 0.0,
                    min_i_plus_h: 0.0,
                    trace_ratio: 0.0,
                    quadrature: QuadratureInfo { x_nodes: 0, y_nodes: 0, t_nodes: 0 },
                },
                psi: psi(&cfg, r),
                adjusted: None,
                dh_fd: 0.0,
                dh_formula: 0.0,
            })
            .collect();
        let curve = FrequencyCurve { s: 0.5, c: 0.0, points, truncated: false };
        let c = calibrate_c(&curve, 1e-12).unwrap();
        assert!(c > 0.0);
        assert!(curve.with_constant(c).is_monotone(false, 1e-12));
        assert!(!curve.with_constant((c - 2e-3).max(0.0)).is_monotone(false, 1e-12));
    }

    #[test]
    fn centered_examples() {
        let (one, cfg) = builtin(BuiltinKind::One, 0.4, 1);
        let q = GaussianQuadrature::with_defaults(&cfg, 1).unwrap();
        let t0 = -0.5;
        assert!(centered_frequency(&one, &q, t0, 0.3).unwrap().n.unwrap().abs() < 1e-14);
        let (x1, _) = builtin(BuiltinKind::X1, 0.4, 1);
        for r in [0.1, 0.3, 0.45] {
            let c = centered_frequency(&x1, &q, t0, r).unwrap();
            assert!((c.n.unwrap() - 0.5).abs() < 1e-12);
            assert!((c.alt_energy - c.i).abs() < 1e-12);
        }
        assert!(centered_frequency(&x1, &q, t0, 0.6).is_err());
        assert!(centered_frequency(&x1, &q, 0.1, 0.1).is_err());
    }
}
