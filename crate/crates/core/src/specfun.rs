//! Complex-argument special functions used by the extension calculus.
//!
//! The Macdonald function is evaluated from the Laplace-type integral
//! `∫₀^∞ τ^{ν-1} exp(-β/τ - γτ) dτ = 2 (β/γ)^{ν/2} K_ν(2√(βγ))` with `γ = 1`,
//! `β = z²/4`. Rotating the contour through `τ = (z/2)·e^u` turns it into
//!
//! ```text
//! K_ν(z) = ∫₀^∞ cosh(νu) · exp(-z cosh u) du,      Re z > 0,
//! ```
//!
//! whose integrand decays double-exponentially in `u`; the trapezoidal rule
//! on a truncated range is then spectrally accurate for `|arg z| ≤ π/4`.

use std::f64::consts::{FRAC_PI_4, PI};

use num_complex::Complex64;

use crate::error::{domain, Result};

/// Number of trapezoidal nodes used for every Macdonald evaluation.
pub const MACDONALD_NODES: usize = 400;

/// Below this modulus the power-series form of `Φ_ν` is used.
pub const SMALL_Z: f64 = 1e-3;

/// The integrand is truncated where `Re z·(cosh u − 1)` reaches this value.
const TRUNCATION_EXPONENT: f64 = 46.0;

// small slack so that L·y with arg exactly π/4 passes the domain check
const ARG_SLACK: f64 = 1e-12;

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEFFS: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_59,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// A point of the open right half-plane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexHalfPlanePoint(Complex64);

impl ComplexHalfPlanePoint {
    pub fn new(z: Complex64) -> Result<Self> {
        if !(z.re > 0.0) || !z.im.is_finite() || !z.re.is_finite() {
            return domain(format!("argument {z} is not in the open right half-plane"));
        }
        Ok(Self(z))
    }

    pub fn value(self) -> Complex64 {
        self.0
    }
}

/// Order of a Bessel function, restricted to `|ν| ≤ 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BesselOrder(f64);

impl BesselOrder {
    pub fn new(nu: f64) -> Result<Self> {
        if !nu.is_finite() || nu.abs() > 2.0 {
            return domain(format!("Bessel order {nu} outside [-2, 2]"));
        }
        Ok(Self(nu))
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// Gamma function for real positive arguments (Lanczos, g = 7).
pub fn gamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("gamma requires a positive finite argument, got {x}"));
    }
    Ok(gamma_unchecked(x))
}

pub(crate) fn gamma_unchecked(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        return PI / ((PI * x).sin() * gamma_unchecked(1.0 - x));
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEFFS[0];
    for (i, c) in LANCZOS_COEFFS.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    (2.0 * PI).sqrt() * t.powf(x + 0.5) * (-t).exp() * acc
}

/// Principal root `L(ξ,σ)` of `L² = (2π|ξ|)² + 2πiσ`; `xi_norm` is `|ξ|`.
///
/// The result has `Re L ≥ 0` and `|arg L| ≤ π/4`.
pub fn principal_l(xi_norm: f64, sigma: f64) -> Complex64 {
    let k = 2.0 * PI * xi_norm;
    Complex64::new(k * k, 2.0 * PI * sigma).sqrt()
}

/// Principal power `w^p = exp(p·log w)`, with `0^p = 0` for `p > 0`.
pub fn principal_pow(w: Complex64, p: f64) -> Complex64 {
    if w == Complex64::new(0.0, 0.0) {
        return if p > 0.0 {
            Complex64::new(0.0, 0.0)
        } else {
            Complex64::new(1.0, 0.0)
        };
    }
    (w.ln() * p).exp()
}

fn check_sector(z: Complex64) -> Result<()> {
    if z.arg().abs() > FRAC_PI_4 + ARG_SLACK {
        return domain(format!("argument {z} outside the sector |arg z| <= pi/4"));
    }
    Ok(())
}

fn near_integer(nu: f64) -> bool {
    (nu - nu.round()).abs() < 1e-6
}

/// Macdonald function `K_ν(z)` for `Re z > 0`, `|arg z| ≤ π/4`.
pub fn macdonald_k(nu: BesselOrder, z: ComplexHalfPlanePoint) -> Result<Complex64> {
    let z = z.value();
    check_sector(z)?;
    let nu = nu.value().abs();
    if z.norm() < SMALL_Z && !near_integer(nu) && nu > 0.0 {
        return Ok(phi_series(nu, z) / principal_pow(z, nu));
    }
    Ok(k_integral(nu, z))
}

/// `Φ_ν(z) = z^ν K_ν(z)`; `z = 0` is allowed for `ν > 0` and returns `2^{ν−1}Γ(ν)`.
pub fn phi(nu: BesselOrder, z: Complex64) -> Result<Complex64> {
    let nu_v = nu.value();
    if z == Complex64::new(0.0, 0.0) {
        if nu_v > 0.0 {
            return Ok(Complex64::new(phi_at_zero(nu_v), 0.0));
        }
        return domain(format!("phi({nu_v}, 0) is only finite for positive order"));
    }
    let zp = ComplexHalfPlanePoint::new(z)?;
    check_sector(z)?;
    if z.norm() < SMALL_Z && nu_v > 0.0 && !near_integer(nu_v) {
        return Ok(phi_series(nu_v, z));
    }
    Ok(principal_pow(z, nu_v) * macdonald_k(nu, zp)?)
}

/// Derivative `Φ'_ν(z) = −z^ν K_{ν−1}(z) = −z^ν K_{1−ν}(z)`.
pub fn phi_derivative(nu: BesselOrder, z: Complex64) -> Result<Complex64> {
    let nu_v = nu.value();
    let other = BesselOrder::new(1.0 - nu_v)?;
    if z == Complex64::new(0.0, 0.0) {
        return domain("phi_derivative is not evaluated at the origin");
    }
    // z^ν K_{1-ν}(z) = z^{2ν-1} Φ_{1-ν}(z)
    let p = phi(other, z)?;
    Ok(-principal_pow(z, 2.0 * nu_v - 1.0) * p)
}

/// `(Φ_ν(z), Φ'_ν(z))` with both Macdonald values taken from one contour pass.
pub fn phi_with_derivative(nu: BesselOrder, z: Complex64) -> Result<(Complex64, Complex64)> {
    let nu_v = nu.value();
    let other = BesselOrder::new(1.0 - nu_v)?;
    if z == Complex64::new(0.0, 0.0) {
        return domain("phi_with_derivative is not evaluated at the origin");
    }
    ComplexHalfPlanePoint::new(z)?;
    check_sector(z)?;
    if z.norm() < SMALL_Z {
        return Ok((phi(nu, z)?, phi_derivative(nu, z)?));
    }
    let (k_nu, k_other) = k_integral_pair(nu_v.abs(), other.value().abs(), z);
    let z_nu = principal_pow(z, nu_v);
    Ok((z_nu * k_nu, -z_nu * k_other))
}

/// `Φ_ν(0⁺) = 2^{ν−1} Γ(ν)` for `ν > 0`.
pub fn phi_at_zero(nu: f64) -> f64 {
    2f64.powf(nu - 1.0) * gamma_unchecked(nu)
}

/// Small-argument expansion of `Φ_ν` for non-integer `ν > 0`:
///
/// `Φ_ν(z) ≈ 2^{ν−1}Γ(ν)(1 + z²/(4(1−ν))) − Γ(1−ν)/(ν 2^{ν+1}) · z^{2ν} (1 + z²/(4(1+ν)))`.
fn phi_series(nu: f64, z: Complex64) -> Complex64 {
    let z2 = z * z;
    let regular = phi_at_zero(nu) * (Complex64::new(1.0, 0.0) + z2 / (4.0 * (1.0 - nu)));
    let singular_coeff = gamma_unchecked_signed(1.0 - nu) / (nu * 2f64.powf(nu + 1.0));
    let singular =
        principal_pow(z, 2.0 * nu) * singular_coeff * (Complex64::new(1.0, 0.0) + z2 / (4.0 * (1.0 + nu)));
    regular - singular
}

// Γ on the negative non-integer axis through the reflection formula.
fn gamma_unchecked_signed(x: f64) -> f64 {
    if x > 0.0 {
        gamma_unchecked(x)
    } else {
        PI / ((PI * x).sin() * gamma_unchecked(1.0 - x))
    }
}

fn k_integral(nu: f64, z: Complex64) -> Complex64 {
    k_integral_pair(nu, nu, z).0
}

// K_ν(z) = ∫₀^∞ cosh(νu) e^{−z cosh u} du for two orders sharing the exponentials
fn k_integral_pair(nu1: f64, nu2: f64, z: Complex64) -> (Complex64, Complex64) {
    let re = z.re;
    let upper = (1.0 + TRUNCATION_EXPONENT / re).acosh();
    let h = upper / MACDONALD_NODES as f64;
    // exp(-z) is factored out so that large |z| does not underflow the sum
    let mut first = Neumaier::new(Complex64::new(0.5, 0.0));
    let mut second = Neumaier::new(Complex64::new(0.5, 0.0));
    for k in 1..=MACDONALD_NODES {
        let u = k as f64 * h;
        let half = (0.5 * u).sinh();
        let e = (-z * (2.0 * half * half)).exp(); // cosh u - 1 = 2 sinh²(u/2)
        first.add(e * (nu1 * u).cosh());
        second.add(e * (nu2 * u).cosh());
    }
    let scale = h * (-z).exp();
    (first.total() * scale, second.total() * scale)
}

struct Neumaier {
    acc: Complex64,
    comp: Complex64,
}

impl Neumaier {
    fn new(start: Complex64) -> Self {
        Self { acc: start, comp: Complex64::new(0.0, 0.0) }
    }

    fn add(&mut self, term: Complex64) {
        let t = self.acc + term;
        self.comp += if self.acc.norm() >= term.norm() { (self.acc - t) + term } else { (term - t) + self.acc };
        self.acc = t;
    }

    fn total(&self) -> Complex64 {
        self.acc + self.comp
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::FRAC_PI_2;

    fn k(nu: f64, z: Complex64) -> Complex64 {
        macdonald_k(BesselOrder::new(nu).unwrap(), ComplexHalfPlanePoint::new(z).unwrap()).unwrap()
    }

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    // Independent oracle for K_ν: tanh-sinh quadrature of the original
    // real-τ integral (1/2)(z/2)^{-ν}∫τ^{ν-1}exp(-τ - z²/(4τ))dτ for real z.
    fn k_oracle(nu: f64, z: f64) -> f64 {
        let beta = z * z / 4.0;
        // τ = exp(v), trapezoid in v on a wide range
        let h = 1.0 / 64.0;
        let mut acc = 0.0;
        let mut v: f64 = -40.0;
        while v <= 8.0 {
            let tau = v.exp();
            acc += tau.powf(nu) * (-tau - beta / tau).exp();
            v += h;
        }
        0.5 * (z / 2.0).powf(-nu) * acc * h
    }

    #[test]
    fn gamma_known_values() {
        assert_relative_eq!(gamma(1.0).unwrap(), 1.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(0.5).unwrap(), PI.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(gamma(5.0).unwrap(), 24.0, max_relative = 1e-13);
        assert_relative_eq!(gamma(2.5).unwrap(), 0.75 * PI.sqrt(), max_relative = 1e-13);
        for x in [0.25, 0.5, 1.5] {
            let ratio = gamma(x + 1.0).unwrap() / gamma(x).unwrap();
            assert_relative_eq!(ratio, x, max_relative = 1e-12);
        }
    }

    #[test]
    fn gamma_rejects_non_positive() {
        assert!(gamma(0.0).is_err());
        assert!(gamma(-1.5).is_err());
        assert!(gamma(f64::NAN).is_err());
    }

    #[test]
    fn principal_l_examples() {
        assert_eq!(principal_l(0.0, 0.0), Complex64::new(0.0, 0.0));
        let l = principal_l(1.0 / (2.0 * PI), 0.0);
        assert_relative_eq!(l.re, 1.0, max_relative = 1e-15);
        assert_eq!(l.im, 0.0);
        let sigma = 3.0;
        let l = principal_l(0.0, sigma);
        assert_relative_eq!(l.norm(), (2.0 * PI * sigma).sqrt(), max_relative = 1e-14);
        assert_relative_eq!(l.arg(), FRAC_PI_4, max_relative = 1e-14);
    }

    #[test]
    fn principal_l_squares_back() {
        for &(xi, sigma) in &[(0.3, -2.0), (1.7, 5.5), (0.0, -1.0), (2.0, 0.0), (0.01, 100.0)] {
            let l = principal_l(xi, sigma);
            let target = Complex64::new((2.0 * PI * xi).powi(2), 2.0 * PI * sigma);
            assert!((l * l - target).norm() <= 1e-14 * target.norm());
            assert!(l.re >= 0.0);
            assert!(l.arg().abs() <= FRAC_PI_4 + 1e-15);
        }
    }

    #[test]
    fn k_half_matches_oracle_and_closed_form() {
        let oracle = k_oracle(0.5, 1.0);
        let closed = FRAC_PI_2.sqrt() * (-1.0f64).exp();
        assert_relative_eq!(oracle, closed, max_relative = 1e-10);
        assert_relative_eq!(k(0.5, c(1.0)).re, closed, max_relative = 1e-12);
        assert_relative_eq!(k(0.5, c(1.0)).re, 0.461_068_504_447_894_4, max_relative = 1e-12);
    }

    #[test]
    fn k_matches_real_axis_oracle() {
        for nu in [0.25, 0.5, 0.75, 1.25, 1.75] {
            for z in [0.01, 0.1, 0.7, 2.0, 9.0, 25.0] {
                let got = k(nu, c(z)).re;
                let want = k_oracle(nu, z);
                assert_relative_eq!(got, want, max_relative = 1e-9);
            }
        }
    }

    #[test]
    fn k_is_symmetric_in_order() {
        let z = Complex64::from_polar(1.3, 0.5);
        assert_eq!(k(0.3, z), k(-0.3, z));
    }

    #[test]
    fn k_three_half_closed_form_complex() {
        for &(r, th) in &[(0.05, 0.0), (1.0, 0.7), (5.0, -FRAC_PI_4), (20.0, FRAC_PI_4)] {
            let z = Complex64::from_polar(r, th);
            let closed = (Complex64::new(FRAC_PI_2, 0.0) / z).sqrt() * (-z).exp() * (1.0 + 1.0 / z);
            let got = k(1.5, z);
            assert!((got - closed).norm() <= 1e-10 * closed.norm(), "z={z}");
        }
    }

    #[test]
    fn recurrence_holds_on_sector_grid() {
        for s in [0.25, 0.5, 0.75] {
            for r in [1e-3, 0.05, 0.8, 4.0, 20.0] {
                for th in [-FRAC_PI_4, -0.3, 0.0, 0.5, FRAC_PI_4] {
                    let z = Complex64::from_polar(r, th);
                    let lhs = k(s, z) * (2.0 * s) / z - k(s + 1.0, z) + k(1.0 - s, z);
                    assert!(lhs.norm() <= 1e-9 * k(1.0 - s, z).norm(), "s={s} z={z}");
                }
            }
        }
    }

    #[test]
    fn real_k_positive_decreasing() {
        for nu in [0.0, 0.25, 0.5, 1.0, 1.5, 2.0] {
            let mut prev = f64::INFINITY;
            let mut z = 0.002;
            while z < 30.0 {
                let v = k(nu, c(z));
                assert!(v.im.abs() < 1e-300 || v.im == 0.0);
                assert!(v.re > 0.0 && v.re < prev, "nu={nu} z={z}");
                prev = v.re;
                z *= 1.3;
            }
        }
    }

    #[test]
    fn large_z_asymptotic() {
        for nu in [0.25, 0.5, 1.5] {
            for z in [20.0, 25.0, 30.0] {
                let v = k(nu, c(z)).re * (2.0 * z / PI).sqrt() * z.exp();
                assert!((v - 1.0).abs() <= 0.1);
            }
        }
    }

    #[test]
    fn phi_at_origin_and_continuity() {
        let half = BesselOrder::new(0.5).unwrap();
        assert_relative_eq!(phi(half, c(0.0)).unwrap().re, FRAC_PI_2.sqrt(), max_relative = 1e-13);
        assert_relative_eq!(phi(half, c(1.0)).unwrap().re, 0.461_068_504_447_894_4, max_relative = 1e-12);
        for s in [0.25, 0.5, 0.75, 1.25] {
            let nu = BesselOrder::new(s).unwrap();
            let z0 = phi(nu, c(1e-9)).unwrap().re;
            assert_relative_eq!(z0, phi_at_zero(s), max_relative = 1e-4);
            // series and integral agree across the switch-over
            let z = Complex64::from_polar(SMALL_Z, 0.6);
            let series = phi_series(s, z);
            let integral = principal_pow(z, s) * k_integral(s, z);
            assert!((series - integral).norm() <= 1e-11 * integral.norm(), "s={s}");
        }
    }

    #[test]
    fn phi_derivative_by_finite_differences() {
        for nu in [0.25, 0.5, 0.75] {
            let order = BesselOrder::new(nu).unwrap();
            let z = Complex64::from_polar(0.9, 0.4);
            let exact = phi_derivative(order, z).unwrap();
            let mut errs = Vec::new();
            for h in [1e-2, 5e-3, 2.5e-3] {
                let fd = (phi(order, z + h).unwrap() - phi(order, z - h).unwrap()) / (2.0 * h);
                errs.push((fd - exact).norm());
            }
            let order_est = (errs[0] / errs[2]).log2() / 2.0;
            assert!((order_est - 2.0).abs() < 0.1, "order {order_est}");
        }
    }

    #[test]
    fn domain_errors() {
        assert!(ComplexHalfPlanePoint::new(Complex64::new(-1.0, 0.0)).is_err());
        assert!(ComplexHalfPlanePoint::new(Complex64::new(0.0, 1.0)).is_err());
        assert!(BesselOrder::new(2.5).is_err());
        let far = ComplexHalfPlanePoint::new(Complex64::from_polar(1.0, 1.2)).unwrap();
        assert!(macdonald_k(BesselOrder::new(0.5).unwrap(), far).is_err());
    }

    #[test]
    fn fused_derivative_matches_separate_calls() {
        for nu in [0.25, 0.5, 0.75] {
            let order = BesselOrder::new(nu).unwrap();
            for z in [Complex64::new(0.5, 0.2), Complex64::new(3.0, -2.9), Complex64::new(2e-4, 1e-4)] {
                let (p, d) = phi_with_derivative(order, z).unwrap();
                assert!((p - phi(order, z).unwrap()).norm() <= 1e-14 * p.norm());
                assert!((d - phi_derivative(order, z).unwrap()).norm() <= 1e-14 * d.norm());
            }
        }
    }
}
