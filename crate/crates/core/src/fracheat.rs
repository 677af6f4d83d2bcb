//! The fractional heat operator `H^s = (∂t − Δ)^s`.
//!
//! Two independent routes are provided: the Fourier multiplier
//! `((2π|ξ|)² + 2πiσ)^s` and the Balakrishnan subordination integral
//! `−(s/Γ(1−s)) ∫₀^∞ τ^{−s−1}(e^{−τH}u − u) dτ`.

use num_complex::Complex64;

use crate::error::{FhError, Result};
use crate::fields::{Mode, SpaceTimeField};
use crate::quadrature::{compensated_sum, gauss_jacobi_unit, gauss_laguerre, Rule};
use crate::specfun::{gamma_unchecked, principal_pow};

/// Default fraction of `max|u|` below which the manufactured potential rejects `u`.
pub const DEFAULT_FLOOR_FRACTION: f64 = 0.1;

/// Order `s ∈ (0,1)` together with the derived weight exponent `a = 1 − 2s`
/// and the constant `c_s = Γ(1−s) / (2^{2s−1} Γ(s))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FracConfig {
    s: f64,
}

impl FracConfig {
    pub fn new(s: f64) -> Result<Self> {
        if !(s > 0.0 && s < 1.0) {
            return Err(FhError::Domain(format!("order s must lie in (0, 1), got {s}")));
        }
        Ok(Self { s })
    }

    pub fn s(&self) -> f64 {
        self.s
    }

    pub fn a(&self) -> f64 {
        1.0 - 2.0 * self.s
    }

    pub fn c_s(&self) -> f64 {
        gamma_unchecked(1.0 - self.s) / (2f64.powf(2.0 * self.s - 1.0) * gamma_unchecked(self.s))
    }
}

/// `L^{2s} = ((2π|ξ|)² + 2πiσ)^s` for one mode.
pub fn frac_symbol(mode: &Mode, cfg: &FracConfig) -> Complex64 {
    principal_pow(mode.heat_symbol(), cfg.s)
}

pub fn frac_heat_multiplier(field: &SpaceTimeField, cfg: &FracConfig) -> SpaceTimeField {
    field.map_spectrum(|m| frac_symbol(m, cfg))
}

/// Quadrature for the subordination integral.
///
/// The integral over `τ` is split at `τ* = split/|λ|`. The head carries the
/// `τ^{1−s}` weight after the linear term of `e^{−τλ} − 1` is removed and
/// integrated exactly; the tail runs along the ray where `τλ` is real.
#[derive(Debug, Clone)]
pub struct BalakrishnanQuad {
    s: f64,
    split: f64,
    head: Rule,
    tail: Rule,
    head_coarse: Rule,
    tail_coarse: Rule,
}

/// Relative disagreement between the full and half-size rules that trips the divergence sentinel.
pub const BALAKRISHNAN_SENTINEL: f64 = 1e-7;

impl BalakrishnanQuad {
    pub fn new(cfg: &FracConfig, nodes: usize, split: f64) -> Result<Self> {
        if nodes < 8 {
            return Err(FhError::Quadrature(format!("need at least 8 nodes, got {nodes}")));
        }
        if !(split > 0.0 && split.is_finite()) {
            return Err(FhError::Quadrature(format!("split must be positive, got {split}")));
        }
        let s = cfg.s();
        Ok(Self {
            s,
            split,
            head: gauss_jacobi_unit(nodes, 0.0, 1.0 - s),
            tail: gauss_laguerre(nodes, 0.0),
            head_coarse: gauss_jacobi_unit(nodes / 2, 0.0, 1.0 - s),
            tail_coarse: gauss_laguerre(nodes / 2, 0.0),
        })
    }

    pub fn with_defaults(cfg: &FracConfig) -> Self {
        Self::new(cfg, 48, 8.0).expect("default quadrature parameters are valid")
    }

    /// `λ^s` through the subordination integral, for `Re λ ≥ 0`.
    pub fn power(&self, lambda: Complex64) -> Result<Complex64> {
        let fine = self.integral(lambda, &self.head, &self.tail);
        let coarse = self.integral(lambda, &self.head_coarse, &self.tail_coarse);
        let scale = fine.norm().max(f64::MIN_POSITIVE);
        if (fine - coarse).norm() > BALAKRISHNAN_SENTINEL * scale {
            return Err(FhError::Quadrature(format!(
                "subordination integral did not settle at lambda = {lambda}: {fine} vs {coarse}"
            )));
        }
        Ok(fine)
    }

    fn integral(&self, lambda: Complex64, head: &Rule, tail: &Rule) -> Complex64 {
        let mag = lambda.norm();
        if mag == 0.0 {
            return Complex64::new(0.0, 0.0);
        }
        let s = self.s;
        let c = self.split;
        let t_star = c / mag;
        // ∫₀^τ* τ^{1−s} (e^{−τλ} − 1 + τλ)/τ² dτ, with τ = τ* x
        let g = |x: f64| remainder_over_square(t_star * x, lambda);
        let head_sum = head.integrate_complex(g) * t_star.powf(2.0 - s);
        let linear = -lambda * t_star.powf(1.0 - s) / (1.0 - s);
        // ∫_τ*^∞ τ^{−s−1} e^{−τλ} dτ on τ = (c + u e^{−iθ})/|λ|
        let rot = Complex64::from_polar(1.0, -lambda.arg());
        let tail_sum = tail.integrate_complex(|u| principal_pow(Complex64::new(c, 0.0) + rot * u, -s - 1.0));
        let tail_val = (-lambda * t_star).exp() * rot * mag.powf(s) * tail_sum;
        let constant = -t_star.powf(-s) / s;
        -(s / gamma_unchecked(1.0 - s)) * (head_sum + linear + tail_val + constant)
    }
}

// (e^{−τλ} − 1 + τλ)/τ², by series when τλ is small
fn remainder_over_square(tau: f64, lambda: Complex64) -> Complex64 {
    let w = lambda * tau;
    if w.norm() < 0.5 {
        let mut term = Complex64::new(0.5, 0.0);
        let mut acc = term;
        for k in 3..30 {
            term = -term * w / k as f64;
            acc += term;
            if term.norm() < 1e-18 * acc.norm() {
                break;
            }
        }
        return lambda * lambda * acc;
    }
    ((-w).exp() - 1.0 + w) / (tau * tau)
}

/// Scalar identity `−(s/Γ(1−s)) ∫₀^∞ τ^{−s−1}(e^{−τλ} − 1) dτ = λ^s`, evaluated by quadrature.
pub fn balakrishnan_scalar(lambda: Complex64, cfg: &FracConfig) -> Result<Complex64> {
    BalakrishnanQuad::with_defaults(cfg).power(lambda)
}

/// `H^s u` through the subordination integral, applied to each mode of `e^{−τH}`.
pub fn frac_heat_balakrishnan(
    field: &SpaceTimeField,
    cfg: &FracConfig,
    quad: &BalakrishnanQuad,
) -> Result<SpaceTimeField> {
    if quad.s != cfg.s() {
        return Err(FhError::Quadrature(format!("quadrature built for s = {}, applied with s = {}", quad.s, cfg.s())));
    }
    let grid = *field.grid();
    let spec = field.spectrum();
    let mut out = Vec::with_capacity(spec.len());
    for (i, c) in spec.iter().enumerate() {
        if *c == Complex64::new(0.0, 0.0) {
            out.push(*c);
            continue;
        }
        let mode = grid.mode(i);
        let p = quad.power(mode.heat_symbol()).map_err(|e| match e {
            FhError::Quadrature(msg) => FhError::Quadrature(format!("mode k={:?} m={}: {msg}", mode.k, mode.m)),
            other => other,
        })?;
        out.push(c * p);
    }
    if field.aliasing_ratio() > crate::fields::ALIASING_TOLERANCE {
        log::warn!("subordination applied to a field with spectral content in the outer half of the mode range");
    }
    SpaceTimeField::from_spectrum(grid, out)
}

/// `( Σ (1 + |L|²)^{2s} |û|² · ΔV/N )^{1/2}`.
pub fn parabolic_sobolev_norm(field: &SpaceTimeField, cfg: &FracConfig) -> f64 {
    let grid = field.grid();
    let weight = grid.cell_volume() / grid.len() as f64;
    let terms = field.spectrum().iter().enumerate().map(|(i, c)| {
        let l2 = grid.mode(i).heat_symbol().norm();
        (1.0 + l2).powf(2.0 * cfg.s()) * c.norm_sqr()
    });
    (weight * compensated_sum(terms)).sqrt()
}

/// A potential `V` sampled on the grid of its boundary datum.
#[derive(Debug, Clone)]
pub struct PotentialField {
    field: SpaceTimeField,
    bound: f64,
    gradient_bound: f64,
    max_imag: f64,
}

impl PotentialField {
    pub fn new(field: SpaceTimeField) -> Self {
        let max_imag = field.max_imag();
        let real = field.real_parts();
        let grid = *field.grid();
        let field = SpaceTimeField::from_samples(grid, real.iter().map(|v| Complex64::new(*v, 0.0)).collect())
            .expect("same grid");
        let bound = real.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let gradient_bound = spectral_gradient_bound(&field);
        Self { field, bound, gradient_bound, max_imag }
    }

    pub fn zero(grid: crate::fields::SpaceTimeGrid) -> Self {
        Self::new(SpaceTimeField::constant(grid, 0.0))
    }

    pub fn field(&self) -> &SpaceTimeField {
        &self.field
    }

    pub fn samples(&self) -> Vec<f64> {
        self.field.real_parts()
    }

    /// `K = max |V|` over the grid.
    pub fn bound(&self) -> f64 {
        self.bound
    }

    /// `max |(∇_x V, ∂_t V)|` from spectral derivatives.
    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    /// Largest imaginary part discarded when the samples were made real.
    pub fn discarded_imag(&self) -> f64 {
        self.max_imag
    }

    pub fn evaluate(&self, x: [f64; 2], t: f64) -> f64 {
        self.field.evaluate(x, t).re
    }
}

fn spectral_gradient_bound(field: &SpaceTimeField) -> f64 {
    use std::f64::consts::PI;
    let grid = *field.grid();
    let dx1 = field.map_spectrum(|m| Complex64::new(0.0, 2.0 * PI * m.xi[0]));
    let dt = field.map_spectrum(|m| Complex64::new(0.0, 2.0 * PI * m.sigma));
    let dx2 = (grid.dim() == 2).then(|| field.map_spectrum(|m| Complex64::new(0.0, 2.0 * PI * m.xi[1])));
    (0..grid.len())
        .map(|i| {
            let mut g = dx1.samples()[i].norm_sqr() + dt.samples()[i].norm_sqr();
            if let Some(d) = &dx2 {
                g += d.samples()[i].norm_sqr();
            }
            g.sqrt()
        })
        .fold(0.0, f64::max)
}

/// `V = c_s · H^s u / u`, so that `U = extend(u)` satisfies `−lim y^a ∂_y U = V u`.
///
/// `u` must be real and satisfy `|u| ≥ floor` on the grid; the default floor is
/// [`DEFAULT_FLOOR_FRACTION`] of `max|u|`.
pub fn manufactured_potential(u: &SpaceTimeField, cfg: &FracConfig, floor: Option<f64>) -> Result<PotentialField> {
    let sup = u.sup_norm();
    if u.max_imag() > 1e-12 * sup.max(1.0) {
        return Err(FhError::Precondition("manufactured potentials need real boundary data".into()));
    }
    let floor = floor.unwrap_or(DEFAULT_FLOOR_FRACTION * sup);
    if !(floor > 0.0) {
        return Err(FhError::Precondition(format!("floor must be positive, got {floor}")));
    }
    let grid = *u.grid();
    let (worst, value) = u
        .samples()
        .iter()
        .enumerate()
        .map(|(i, v)| (i, v.re.abs()))
        .fold((0, f64::INFINITY), |acc, cur| if cur.1 < acc.1 { cur } else { acc });
    if value < floor {
        let (x, t) = grid.node(worst);
        return Err(FhError::Precondition(format!(
            "|u| = {value:.3e} below floor {floor:.3e} at x = {:?}, t = {t}",
            &x[..grid.dim()]
        )));
    }
    let hs = frac_heat_multiplier(u, cfg);
    let c = cfg.c_s();
    let samples = hs.samples().iter().zip(u.samples()).map(|(h, v)| c * h / v.re).collect();
    Ok(PotentialField::new(SpaceTimeField::from_samples(grid, samples)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::SpaceTimeGrid;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn grid() -> SpaceTimeGrid {
        SpaceTimeGrid::new(1, 2.0 * PI, 32, 2.0, 16).unwrap()
    }

    fn five_modes(grid: SpaceTimeGrid) -> SpaceTimeField {
        let (lx, tw) = (grid.length_x(), grid.time_window());
        SpaceTimeField::from_real_fn(grid, |x, t| {
            let p = 2.0 * PI * x[0] / lx;
            let q = 2.0 * PI * t / tw;
            1.0 + p.cos() + 0.5 * (2.0 * p + q).sin() + 0.25 * (3.0 * p - 2.0 * q).cos() + 0.1 * (q).sin()
        })
    }

    #[test]
    fn config_constants() {
        assert!(FracConfig::new(0.0).is_err());
        assert!(FracConfig::new(1.0).is_err());
        let half = FracConfig::new(0.5).unwrap();
        assert_relative_eq!(half.c_s(), 1.0, max_relative = 1e-13);
        assert_eq!(half.a(), 0.0);
        for s in [0.1, 0.25, 0.75, 0.9] {
            let cfg = FracConfig::new(s).unwrap();
            assert!(cfg.c_s() > 0.0);
            assert!(cfg.a() > -1.0 && cfg.a() < 1.0);
        }
    }

    #[test]
    fn multiplier_examples() {
        let cfg = FracConfig::new(0.5).unwrap();
        let g = grid();
        let c = SpaceTimeField::constant(g, 3.0);
        assert!(frac_heat_multiplier(&c, &cfg).sup_norm() < 1e-13);
        // Lx = 2π, k = 1 gives |ξ| = 1/(2π)
        let m = SpaceTimeField::single_mode(g, [1, 0], 0, Complex64::new(1.0, 0.0));
        assert!(frac_heat_multiplier(&m, &cfg).relative_l2_distance(&m).unwrap() < 1e-13);
        let cfg = FracConfig::new(0.3).unwrap();
        let m = SpaceTimeField::single_mode(g, [2, 0], -3, Complex64::new(1.0, 0.0));
        let sigma = -3.0 / g.time_window();
        let lam = Complex64::new(4.0, 2.0 * PI * sigma);
        let expected = m.scale(lam.powf(0.3));
        assert!(frac_heat_multiplier(&m, &cfg).relative_l2_distance(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn scalar_subordination() {
        for s in [0.25, 0.5, 0.75] {
            let cfg = FracConfig::new(s).unwrap();
            for lam in [0.5, 1.0, 4.0] {
                let v = balakrishnan_scalar(Complex64::new(lam, 0.0), &cfg).unwrap();
                assert!((v - lam.powf(s)).norm() < 1e-10 * lam.powf(s), "s={s} lam={lam} v={v}");
            }
            for lam in [Complex64::new(0.0, 3.0), Complex64::new(2.0, -50.0), Complex64::new(1e3, 1e2)] {
                let v = balakrishnan_scalar(lam, &cfg).unwrap();
                let want = principal_pow(lam, s);
                assert!((v - want).norm() < 1e-9 * want.norm(), "s={s} lam={lam} v={v} want={want}");
            }
        }
    }

    #[test]
    fn subordination_matches_multiplier() {
        let g = grid();
        let u = five_modes(g);
        for s in [0.25, 0.5, 0.75] {
            let cfg = FracConfig::new(s).unwrap();
            let quad = BalakrishnanQuad::with_defaults(&cfg);
            let a = frac_heat_multiplier(&u, &cfg);
            let b = frac_heat_balakrishnan(&u, &cfg, &quad).unwrap();
            assert!(b.relative_l2_distance(&a).unwrap() < 1e-6);
            let c = frac_heat_balakrishnan(&SpaceTimeField::constant(g, 2.0), &cfg, &quad).unwrap();
            assert!(c.sup_norm() < 1e-13);
        }
    }

    #[test]
    fn sentinel_trips_on_starved_rules() {
        let cfg = FracConfig::new(0.5).unwrap();
        let quad = BalakrishnanQuad::new(&cfg, 8, 40.0).unwrap();
        assert!(matches!(quad.power(Complex64::new(1.0, 0.0)), Err(FhError::Quadrature(_))));
    }

    #[test]
    fn near_one_recovers_heat_symbol() {
        let cfg = FracConfig::new(0.999).unwrap();
        let g = grid();
        let m = SpaceTimeField::single_mode(g, [2, 0], 1, Complex64::new(1.0, 0.0));
        let mode = g.mode(g.mode_index([2, 0], 1).unwrap());
        let expected = m.scale(mode.heat_symbol());
        assert!(frac_heat_multiplier(&m, &cfg).relative_l2_distance(&expected).unwrap() < 0.01);
    }

    #[test]
    fn composition_of_orders() {
        let g = grid();
        let u = five_modes(g);
        let (c1, c2, c3) =
            (FracConfig::new(0.2).unwrap(), FracConfig::new(0.35).unwrap(), FracConfig::new(0.55).unwrap());
        let a = frac_heat_multiplier(&frac_heat_multiplier(&u, &c1), &c2);
        let b = frac_heat_multiplier(&u, &c3);
        assert!(a.relative_l2_distance(&b).unwrap() < 1e-10);
    }

    #[test]
    fn sobolev_norm_examples() {
        let g = grid();
        let cfg = FracConfig::new(0.4).unwrap();
        assert_eq!(parabolic_sobolev_norm(&SpaceTimeField::constant(g, 0.0), &cfg), 0.0);
        let volume = g.length_x() * g.time_window();
        let c = SpaceTimeField::constant(g, -2.0);
        assert_relative_eq!(parabolic_sobolev_norm(&c, &cfg), 2.0 * volume.sqrt(), max_relative = 1e-12);
        let m = SpaceTimeField::single_mode(g, [3, 0], 2, Complex64::new(1.0, 0.0));
        let mode = g.mode(g.mode_index([3, 0], 2).unwrap());
        let want = (1.0 + mode.heat_symbol().norm()).powf(0.4) * volume.sqrt();
        assert_relative_eq!(parabolic_sobolev_norm(&m, &cfg), want, max_relative = 1e-12);
        let u = five_modes(g);
        assert!(parabolic_sobolev_norm(&u, &cfg) >= u.l2_norm());
    }

    #[test]
    fn manufactured_potential_examples() {
        let g = grid();
        let cfg = FracConfig::new(0.5).unwrap();
        let one = SpaceTimeField::constant(g, 1.0);
        assert!(manufactured_potential(&one, &cfg, None).unwrap().bound() < 1e-13);

        let cfg = FracConfig::new(0.3).unwrap();
        let u = SpaceTimeField::from_real_fn(g, |x, _| 2.0 + x[0].cos());
        let v = manufactured_potential(&u, &cfg, None).unwrap();
        assert!(v.discarded_imag() < 1e-12);
        // (−Δ)^s cos x = cos x for unit wavenumber
        for i in [0, 5, 17] {
            let (x, _) = g.node(i);
            let want = cfg.c_s() * x[0].cos() / (2.0 + x[0].cos());
            assert!((v.samples()[i] - want).abs() < 1e-12);
        }
        assert!(v.gradient_bound() > 0.0);

        // two-mode quotient with a time-dependent mode
        let tw = g.time_window();
        let u = SpaceTimeField::from_real_fn(g, |x, t| 3.0 + (2.0 * x[0] + 2.0 * PI * t / tw).cos());
        let v = manufactured_potential(&u, &cfg, None).unwrap();
        let lam = Complex64::new(4.0, 2.0 * PI / tw).powf(0.3);
        for i in [3, 100, 411] {
            let (x, t) = g.node(i);
            let phase = 2.0 * x[0] + 2.0 * PI * t / tw;
            let hs = (lam * Complex64::from_polar(1.0, phase)).re;
            let want = cfg.c_s() * hs / (3.0 + phase.cos());
            assert!((v.samples()[i] - want).abs() < 1e-12);
        }
    }

    #[test]
    fn manufactured_potential_rejects_small_u() {
        let g = grid();
        let cfg = FracConfig::new(0.5).unwrap();
        let u = SpaceTimeField::from_real_fn(g, |x, _| x[0].cos());
        match manufactured_potential(&u, &cfg, None) {
            Err(FhError::Precondition(msg)) => assert!(msg.contains("x =")),
            other => panic!("expected rejection, got {other:?}"),
        }
    }
}
