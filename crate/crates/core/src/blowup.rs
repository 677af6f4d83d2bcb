//! Almgren rescalings, blow-up sequences, vanishing order and the
//! non-degeneracy growth bound.

use std::io::Write;

use crate::error::{domain, structural, FhError, Result};
use crate::fields::SpaceTimeField;
use crate::fracheat::{frac_heat_multiplier, FracConfig, PotentialField};
use crate::frequency::{averaged_functionals, FrequencyCurve, GaussianQuadrature, DEGENERATE_H};
use crate::solution::{Difference, Jet, SolutionField};

/// Parabolic dilation `δ_λ(X, t) = (λX, λ²t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicDilation {
    lambda: f64,
}

impl ParabolicDilation {
    pub fn new(lambda: f64) -> Result<Self> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return domain(format!("dilation factor must be positive, got {lambda}"));
        }
        Ok(Self { lambda })
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn apply(&self, x: [f64; 2], y: f64, t: f64) -> ([f64; 2], f64, f64) {
        let l = self.lambda;
        ([l * x[0], l * x[1]], l * y, l * l * t)
    }

    pub fn compose(&self, other: &Self) -> Self {
        Self { lambda: self.lambda * other.lambda }
    }
}

/// `Q_r(x₀, t₀) = B_r(x₀) × (t₀ − r², t₀]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParabolicCylinder {
    pub x0: [f64; 2],
    pub t0: f64,
    pub r: f64,
}

impl ParabolicCylinder {
    pub fn new(x0: [f64; 2], t0: f64, r: f64) -> Result<Self> {
        if !(r > 0.0 && r.is_finite()) {
            return domain(format!("cylinder radius must be positive, got {r}"));
        }
        Ok(Self { x0, t0, r })
    }

    pub fn contains(&self, x: [f64; 2], t: f64) -> bool {
        let d = (x[0] - self.x0[0]).hypot(x[1] - self.x0[1]);
        d < self.r && t > self.t0 - self.r * self.r && t <= self.t0
    }
}

/// `U_r(X, t) = r^{a/2} U(rX, r²t) / √H(U, r)`, with potential `r^{2s} V(rx, r²t)`.
pub struct AlmgrenRescaled<F> {
    base: F,
    r: f64,
    factor: f64,
    s: f64,
    a: f64,
}

impl<F: SolutionField> AlmgrenRescaled<F> {
    pub fn r(&self) -> f64 {
        self.r
    }

    /// `r^{a/2}/√H(U, r)`.
    pub fn factor(&self) -> f64 {
        self.factor
    }

    pub fn base(&self) -> &F {
        &self.base
    }
}

pub fn almgren_rescale<F: SolutionField>(
    base: F,
    cfg: &FracConfig,
    quad: &GaussianQuadrature,
    r: f64,
) -> Result<AlmgrenRescaled<F>> {
    let h = averaged_functionals(&base, cfg, quad, r)?.h;
    if !(h > DEGENERATE_H) {
        return Err(FhError::Degenerate(format!("H(U, {r}) = {h:e} vanishes; the rescaling is undefined")));
    }
    Ok(AlmgrenRescaled { base, r, factor: r.powf(0.5 * cfg.a()) / h.sqrt(), s: cfg.s(), a: cfg.a() })
}

impl<F: SolutionField> SolutionField for AlmgrenRescaled<F> {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet {
        let r = self.r;
        let j = self.base.jet([r * x[0], r * x[1]], r * y, r * r * t);
        self.rescale(j)
    }

    fn jets_on_tensor(&self, xs: &[[f64; 2]], ys: &[f64], t: f64, out: &mut Vec<Jet>) {
        let r = self.r;
        let sx: Vec<[f64; 2]> = xs.iter().map(|x| [r * x[0], r * x[1]]).collect();
        let sy: Vec<f64> = ys.iter().map(|y| r * y).collect();
        self.base.jets_on_tensor(&sx, &sy, r * r * t, out);
        for j in out.iter_mut() {
            *j = self.rescale(*j);
        }
    }

    fn boundary_value(&self, x: [f64; 2], t: f64) -> f64 {
        let r = self.r;
        self.factor * self.base.boundary_value([r * x[0], r * x[1]], r * r * t)
    }

    fn potential(&self, x: [f64; 2], t: f64) -> f64 {
        let r = self.r;
        r.powf(2.0 * self.s) * self.base.potential([r * x[0], r * x[1]], r * r * t)
    }

    fn weighted_flux(&self, x: [f64; 2], t: f64) -> Option<f64> {
        let r = self.r;
        Some(self.factor * r.powf(1.0 - self.a) * self.base.weighted_flux([r * x[0], r * x[1]], r * r * t)?)
    }

    fn time_window(&self) -> Option<f64> {
        self.base.time_window().map(|tw| tw / (self.r * self.r))
    }
}

impl<F: SolutionField> AlmgrenRescaled<F> {
    fn rescale(&self, j: Jet) -> Jet {
        let (c, r) = (self.factor, self.r);
        Jet { value: c * j.value, dx: [c * r * j.dx[0], c * r * j.dx[1]], dy: c * r * j.dy, dt: c * r * r * j.dt }
    }
}

/// `(∫∫_{𝕊₁} y^a (A − B)² Ḡ)^{1/2}`.
pub fn gaussian_distance(
    a: &dyn SolutionField,
    b: &dyn SolutionField,
    cfg: &FracConfig,
    quad: &GaussianQuadrature,
) -> Result<f64> {
    let diff = Difference::new(a, b)?;
    Ok(averaged_functionals(&diff, cfg, quad, 1.0)?.h.max(0.0).sqrt())
}

/// Number of smallest radii used by the power-law fit of `H`.
pub const KAPPA_FIT_WINDOW: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct BlowupReport {
    /// Decreasing radii.
    pub radii: Vec<f64>,
    /// `H(U, r_j)`.
    pub heights: Vec<f64>,
    /// Gaussian distance between `U_{r_j}` and `U_{r_{j−1}}`; `None` for the first radius.
    pub distances: Vec<Option<f64>>,
    /// `H(U_{r_j}, 1)`.
    pub h_norm: Vec<f64>,
    /// `κ` fitted on the radii seen so far (at most the last [`KAPPA_FIT_WINDOW`]).
    pub kappa_running: Vec<Option<f64>>,
    /// Fit over the [`KAPPA_FIT_WINDOW`] smallest radii.
    pub kappa_hat: Option<f64>,
    /// `N(U, r)` at the smallest radius.
    pub n_smallest: Option<f64>,
}

impl BlowupReport {
    /// CSV with header `r,distance,H_norm,kappa_running`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "r,distance,H_norm,kappa_running")?;
        let fmt = |v: Option<f64>| v.map_or_else(|| "nan".to_string(), |v| format!("{v:.15e}"));
        for j in 0..self.radii.len() {
            writeln!(
                w,
                "{:.15e},{},{:.15e},{}",
                self.radii[j],
                fmt(self.distances[j]),
                self.h_norm[j],
                fmt(self.kappa_running[j])
            )?;
        }
        Ok(())
    }
}

/// Least-squares slope of `ln y` against `ln x`.
pub fn log_log_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() < 2 || xs.len() != ys.len() {
        return None;
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `κ = (slope − a)/4` from `H(r) ∝ r^{4κ+a}`.
pub fn fit_kappa(cfg: &FracConfig, radii: &[f64], heights: &[f64]) -> Option<f64> {
    let pairs: Vec<(f64, f64)> =
        radii.iter().zip(heights).filter(|(_, h)| **h > DEGENERATE_H).map(|(r, h)| (*r, *h)).collect();
    let (r, h): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    log_log_slope(&r, &h).map(|slope| (slope - cfg.a()) / 4.0)
}

pub fn blowup_sequence<F: SolutionField>(
    field: &F,
    cfg: &FracConfig,
    quad: &GaussianQuadrature,
    radii: &[f64],
) -> Result<BlowupReport> {
    if radii.is_empty() {
        return structural("blow-up needs at least one radius");
    }
    if radii.windows(2).any(|w| w[1] >= w[0]) {
        return domain("blow-up radii must be strictly decreasing");
    }
    let mut heights = Vec::with_capacity(radii.len());
    let mut distances = Vec::with_capacity(radii.len());
    let mut h_norm = Vec::with_capacity(radii.len());
    let mut kappa_running = Vec::with_capacity(radii.len());
    let mut previous: Option<AlmgrenRescaled<&F>> = None;
    let mut n_smallest = None;
    for (j, &r) in radii.iter().enumerate() {
        let f = averaged_functionals(field, cfg, quad, r)?;
        if !(f.h > DEGENERATE_H) {
            return Err(FhError::Degenerate(format!("H(U, {r}) vanishes")));
        }
        heights.push(f.h);
        n_smallest = f.n;
        let rescaled = almgren_rescale(field, cfg, quad, r)?;
        h_norm.push(averaged_functionals(&rescaled, cfg, quad, 1.0)?.h);
        distances.push(match &previous {
            Some(p) => Some(gaussian_distance(&rescaled, p, cfg, quad)?),
            None => None,
        });
        let lo = (j + 1).saturating_sub(KAPPA_FIT_WINDOW);
        kappa_running.push(fit_kappa(cfg, &radii[lo..=j], &heights[lo..=j]));
        previous = Some(rescaled);
    }
    let lo = radii.len().saturating_sub(KAPPA_FIT_WINDOW);
    let kappa_hat = fit_kappa(cfg, &radii[lo..], &heights[lo..]);
    Ok(BlowupReport { radii: radii.to_vec(), heights, distances, h_norm, kappa_running, kappa_hat, n_smallest })
}

/// Sampling controls for sup-norms over parabolic cylinders.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VanishingOptions {
    /// Lattice points per axis on the coarse pass; the refined pass uses `2m − 1`.
    pub samples_per_axis: usize,
    /// Sup-norms below this count as vanished.
    pub floor: f64,
    /// Fitted slopes at or above this count as infinite order.
    pub slope_cap: f64,
}

impl Default for VanishingOptions {
    fn default() -> Self {
        Self { samples_per_axis: 9, floor: 1e-14, slope_cap: 20.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum VanishingOrder {
    Finite(f64),
    Infinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VanishingReport {
    pub radii: Vec<f64>,
    pub sups: Vec<f64>,
    /// Slope between consecutive radii; `None` for the first.
    pub local_slopes: Vec<Option<f64>>,
    /// Largest change of a sup under lattice refinement, relative to the sup.
    pub refinement_change: f64,
    pub order: VanishingOrder,
}

impl VanishingReport {
    /// CSV with header `r,sup,log_slope`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "r,sup,log_slope")?;
        for j in 0..self.radii.len() {
            let slope = self.local_slopes[j].map_or_else(|| "nan".to_string(), |v| format!("{v:.15e}"));
            writeln!(w, "{:.15e},{:.15e},{}", self.radii[j], self.sups[j], slope)?;
        }
        Ok(())
    }
}

fn cylinder_sup(
    f: &dyn Fn(&[f64], f64) -> f64,
    center: &[f64],
    t0: f64,
    r: f64,
    half_space: bool,
    m: usize,
) -> f64 {
    let d = center.len();
    let coord = |k: usize| -r + 2.0 * r * k as f64 / (m - 1) as f64;
    let mut sup = 0.0f64;
    let mut p = vec![0.0; d];
    for idx in 0..m.pow(d as u32) {
        let mut rest = idx;
        let mut norm2 = 0.0;
        for (k, slot) in p.iter_mut().enumerate() {
            let off = coord(rest % m);
            rest /= m;
            *slot = center[k] + off;
            norm2 += off * off;
        }
        if norm2 > r * r * (1.0 + 1e-12) || (half_space && p[d - 1] < 0.0) {
            continue;
        }
        for k in 0..m {
            let t = t0 - r * r * k as f64 / (m - 1) as f64;
            sup = sup.max(f(&p, t).abs());
        }
    }
    sup
}

/// Order `N` with `sup_{Q_r} |f| = O(r^N)`, from a least-squares fit of `ln sup` on `ln r`.
///
/// Points have `center.len()` space coordinates; with `half_space` the last one is kept non-negative.
pub fn vanishing_order(
    f: &dyn Fn(&[f64], f64) -> f64,
    center: &[f64],
    t0: f64,
    half_space: bool,
    radii: &[f64],
    opts: &VanishingOptions,
) -> Result<VanishingReport> {
    if center.is_empty() || center.len() > 3 {
        return structural(format!("cylinders need 1 to 3 space coordinates, got {}", center.len()));
    }
    if opts.samples_per_axis < 2 || radii.is_empty() || radii.iter().any(|r| !(*r > 0.0)) {
        return structural("cylinder sampling is empty");
    }
    let m = opts.samples_per_axis;
    let mut sups = Vec::with_capacity(radii.len());
    let mut refinement_change = 0.0f64;
    for &r in radii {
        let coarse = cylinder_sup(f, center, t0, r, half_space, m);
        let fine = cylinder_sup(f, center, t0, r, half_space, 2 * m - 1);
        if fine > 0.0 {
            refinement_change = refinement_change.max((fine - coarse) / fine);
        }
        sups.push(fine.max(coarse));
    }
    let local_slopes = (0..radii.len())
        .map(|j| {
            (j > 0 && sups[j] > opts.floor && sups[j - 1] > opts.floor)
                .then(|| (sups[j] / sups[j - 1]).ln() / (radii[j] / radii[j - 1]).ln())
        })
        .collect();
    let order = if sups.iter().any(|s| *s < opts.floor) {
        VanishingOrder::Infinite
    } else {
        match log_log_slope(radii, &sups) {
            Some(slope) if slope < opts.slope_cap => VanishingOrder::Finite(slope),
            _ => VanishingOrder::Infinite,
        }
    };
    Ok(VanishingReport { radii: radii.to_vec(), sups, local_slopes, refinement_change, order })
}

/// [`vanishing_order`] for grid data, evaluated by trigonometric interpolation.
pub fn vanishing_order_field(
    u: &SpaceTimeField,
    x0: [f64; 2],
    t0: f64,
    radii: &[f64],
    opts: &VanishingOptions,
) -> Result<VanishingReport> {
    let grid = u.grid();
    let tw = grid.time_window();
    for &r in radii {
        if t0 > 0.0 || t0 - r * r < -tw {
            return structural(format!("cylinder of radius {r} at t0 = {t0} leaves the time window [-{tw}, 0]"));
        }
    }
    let dim = grid.dim();
    let f = |p: &[f64], t: f64| {
        let x = [p[0], if dim == 2 { p[1] } else { 0.0 }];
        u.evaluate(x, t).re
    };
    vanishing_order(&f, &x0[..dim], t0, false, radii, opts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct NondegeneracyVerdict {
    pub holds: bool,
    pub r0: f64,
    /// `‖N̄‖∞`, the largest sampled adjusted frequency.
    pub n_bar: f64,
    pub exponent: f64,
    /// `min_r (H(r)/(H(r₀)(r/r₀)^{4‖N̄‖∞+a}) − 1)` over sampled `r ≤ r₀`.
    pub min_slack: f64,
}

/// Checks `H(r) ≥ H(r₀)(r/r₀)^{4‖N̄‖∞ + a}` at every sampled `r ≤ r₀`, within `tolerance`.
pub fn nondegeneracy_check(curve: &FrequencyCurve, r0: f64, tolerance: f64) -> Result<NondegeneracyVerdict> {
    let a = 1.0 - 2.0 * curve.s;
    let Some(anchor) = curve
        .points
        .iter()
        .filter(|p| p.functionals.r <= r0 * (1.0 + 1e-12))
        .max_by(|p, q| p.functionals.r.total_cmp(&q.functionals.r))
    else {
        return domain(format!("curve has no radius at or below r0 = {r0}"));
    };
    let r0 = anchor.functionals.r;
    let h0 = anchor.functionals.h;
    let n_bar = curve.points.iter().filter_map(|p| p.adjusted).fold(f64::NEG_INFINITY, f64::max);
    let exponent = 4.0 * n_bar + a;
    let mut min_slack = f64::INFINITY;
    let mut any_zero = curve.truncated;
    for p in curve.points.iter().filter(|p| p.functionals.r <= r0) {
        let h = p.functionals.h;
        if !(h > DEGENERATE_H) {
            any_zero = true;
            continue;
        }
        let bound = h0 * (p.functionals.r / r0).powf(exponent);
        min_slack = min_slack.min(h / bound - 1.0);
    }
    Ok(NondegeneracyVerdict { holds: !any_zero && min_slack >= -tolerance, r0, n_bar, exponent, min_slack })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackRow {
    pub r: f64,
    pub sup: f64,
    pub inf: f64,
    pub c_hat: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnackReport {
    pub rows: Vec<HarnackRow>,
    /// `max Ĉ / min Ĉ − 1` across the radii.
    pub variation: f64,
    /// `‖H^s u − V u / c_s − ψ‖∞` on the grid.
    pub consistency: f64,
}

/// Tolerance on the consistency of `(u, V, ψ)` relative to `1 + ‖H^s u‖∞`.
pub const HARNACK_CONSISTENCY: f64 = 1e-6;

/// `Ĉ(r) = sup_{B_r × (−r², −r²/2)} u / (inf_{B_r × (−r²/4, 0)} u + r^{2s}‖ψ‖∞)`.
///
/// `V` is the Neumann potential, so consistency means `c_s H^s u = V u + c_s ψ`.
pub fn harnack_quotient(
    u: &SpaceTimeField,
    cfg: &FracConfig,
    v: &PotentialField,
    psi: &SpaceTimeField,
    x0: [f64; 2],
    radii: &[f64],
    samples_per_axis: usize,
) -> Result<HarnackReport> {
    let scale = u.sup_norm();
    if u.samples().iter().any(|c| c.re < -1e-12 * scale.max(1.0)) {
        return Err(FhError::Precondition("Harnack quotients need u >= 0".into()));
    }
    if samples_per_axis < 2 {
        return structural("cylinder sampling is empty");
    }
    let hs = frac_heat_multiplier(u, cfg);
    let c = cfg.c_s();
    let vs = v.samples();
    let consistency = (0..u.grid().len())
        .map(|i| (hs.samples()[i] - u.samples()[i] * vs[i] / c - psi.samples()[i]).norm())
        .fold(0.0, f64::max);
    if consistency > HARNACK_CONSISTENCY * (1.0 + hs.sup_norm()) {
        return Err(FhError::Precondition(format!(
            "(u, V, psi) do not satisfy the equation: residual {consistency:.3e}"
        )));
    }
    let psi_norm = psi.sup_norm();
    let dim = u.grid().dim();
    let m = samples_per_axis;
    let mut rows = Vec::with_capacity(radii.len());
    for &r in radii {
        let mut sup = f64::NEG_INFINITY;
        let mut inf = f64::INFINITY;
        let offsets: Vec<f64> = (0..m).map(|k| -r + 2.0 * r * k as f64 / (m - 1) as f64).collect();
        let points: Vec<[f64; 2]> = if dim == 1 {
            offsets.iter().map(|o| [x0[0] + o, 0.0]).collect()
        } else {
            offsets
                .iter()
                .flat_map(|a| offsets.iter().map(move |b| (*a, *b)))
                .filter(|(a, b)| a.hypot(*b) <= r)
                .map(|(a, b)| [x0[0] + a, x0[1] + b])
                .collect()
        };
        for k in 0..m {
            let frac = k as f64 / (m - 1) as f64;
            let t_early = -r * r + 0.5 * r * r * frac;
            let t_late = -0.25 * r * r + 0.25 * r * r * frac;
            for x in &points {
                sup = sup.max(u.evaluate(*x, t_early).re);
                inf = inf.min(u.evaluate(*x, t_late).re);
            }
        }
        let denom = inf + r.powf(2.0 * cfg.s()) * psi_norm;
        rows.push(HarnackRow { r, sup, inf, c_hat: sup / denom });
    }
    let max = rows.iter().map(|r| r.c_hat).fold(f64::NEG_INFINITY, f64::max);
    let min = rows.iter().map(|r| r.c_hat).fold(f64::INFINITY, f64::min);
    Ok(HarnackReport { rows, variation: max / min - 1.0, consistency })
}
