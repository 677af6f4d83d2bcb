//! Quadrature rules and deterministic summation.
//!
//! Gauss rules are built with the Golub–Welsch eigenvalue method from the
//! three-term recurrence of the weight's orthogonal polynomials. The
//! double-exponential rules handle integrable endpoint powers whose exponent
//! is not known in advance.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::specfun::gamma_unchecked;

/// Nodes and weights of a quadrature rule.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl Rule {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        compensated_sum(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| w * f(x)))
    }

    pub fn integrate_complex(&self, f: impl Fn(f64) -> Complex64) -> Complex64 {
        compensated_sum_complex(self.nodes.iter().zip(&self.weights).map(|(&x, &w)| f(x) * w))
    }
}

/// Neumaier-compensated sum, evaluated in iteration order.
pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn compensated_sum_complex(values: impl IntoIterator<Item = Complex64>) -> Complex64 {
    let (re, im): (Vec<f64>, Vec<f64>) = values.into_iter().map(|c| (c.re, c.im)).unzip();
    Complex64::new(compensated_sum(re), compensated_sum(im))
}

/// Golub–Welsch: `diag[k] = α_k`, `offdiag[k] = √β_{k+1}`, `mu0 = ∫ w`.
pub fn golub_welsch(diag: &[f64], offdiag: &[f64], mu0: f64) -> Rule {
    let n = diag.len();
    assert_eq!(offdiag.len() + 1, n.max(1));
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = diag[i];
    }
    for (i, &b) in offdiag.iter().enumerate() {
        m[(i, i + 1)] = b;
        m[(i + 1, i)] = b;
    }
    let eig = SymmetricEigen::new(m);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|j| {
            let v0 = eig.eigenvectors[(0, j)];
            (eig.eigenvalues[j], mu0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    let (nodes, weights) = pairs.into_iter().unzip();
    Rule { nodes, weights }
}

/// Gauss–Hermite rule for the weight `e^{-x²}` on ℝ.
pub fn gauss_hermite(n: usize) -> Rule {
    let diag = vec![0.0; n];
    let off: Vec<f64> = (1..n).map(|k| (k as f64 / 2.0).sqrt()).collect();
    let mut rule = golub_welsch(&diag, &off, PI.sqrt());
    symmetrize(&mut rule);
    rule
}

// Hermite nodes are symmetric; enforce it exactly so odd moments vanish.
fn symmetrize(rule: &mut Rule) {
    let n = rule.len();
    for i in 0..n / 2 {
        let j = n - 1 - i;
        let x = 0.5 * (rule.nodes[j] - rule.nodes[i]);
        let w = 0.5 * (rule.weights[i] + rule.weights[j]);
        rule.nodes[i] = -x;
        rule.nodes[j] = x;
        rule.weights[i] = w;
        rule.weights[j] = w;
    }
    if n % 2 == 1 {
        rule.nodes[n / 2] = 0.0;
    }
}

/// Generalized Gauss–Laguerre rule for `w^α e^{-w}` on (0, ∞).
pub fn gauss_laguerre(n: usize, alpha: f64) -> Rule {
    let diag: Vec<f64> = (0..n).map(|k| 2.0 * k as f64 + alpha + 1.0).collect();
    let off: Vec<f64> = (1..n).map(|k| (k as f64 * (k as f64 + alpha)).sqrt()).collect();
    golub_welsch(&diag, &off, gamma_unchecked(alpha + 1.0))
}

/// Gauss–Jacobi rule on (0, 1) for the weight `(1−x)^α x^β`.
pub fn gauss_jacobi_unit(n: usize, alpha: f64, beta: f64) -> Rule {
    // Jacobi recurrence on [-1, 1] for (1-x)^α (1+x)^β, then mapped to (0, 1).
    let ab = alpha + beta;
    let mut diag = Vec::with_capacity(n);
    for k in 0..n {
        let kf = k as f64;
        let d = if k == 0 {
            (beta - alpha) / (ab + 2.0)
        } else {
            (beta * beta - alpha * alpha) / ((2.0 * kf + ab) * (2.0 * kf + ab + 2.0))
        };
        diag.push(d);
    }
    let mut off = Vec::with_capacity(n.saturating_sub(1));
    for k in 1..n {
        let kf = k as f64;
        let num = 4.0 * kf * (kf + alpha) * (kf + beta) * (kf + ab);
        let den = (2.0 * kf + ab).powi(2) * (2.0 * kf + ab + 1.0) * (2.0 * kf + ab - 1.0);
        off.push((num / den).sqrt());
    }
    let mu0 = 2f64.powf(ab + 1.0) * gamma_unchecked(alpha + 1.0) * gamma_unchecked(beta + 1.0)
        / gamma_unchecked(ab + 2.0);
    let rule = golub_welsch(&diag, &off, mu0);
    let scale = 2f64.powf(-(ab + 1.0));
    Rule {
        nodes: rule.nodes.iter().map(|x| 0.5 * (x + 1.0)).collect(),
        weights: rule.weights.iter().map(|w| w * scale).collect(),
    }
}

/// Gauss rule for `y^a e^{-y²}` on (0, ∞), exact for even polynomials in `y`.
///
/// With `w = y²` the weight becomes `½ w^{(a−1)/2} e^{-w}`, whose moments
/// `½Γ((a+2j+1)/2)` close the Laguerre recurrence; nodes are `y = √w`.
pub fn half_range_even(n: usize, a: f64) -> Rule {
    let lag = gauss_laguerre(n, 0.5 * (a - 1.0));
    Rule {
        nodes: lag.nodes.iter().map(|w| w.sqrt()).collect(),
        weights: lag.weights.iter().map(|w| 0.5 * w).collect(),
    }
}

/// Double-exponential rule for `∫₀^∞ f(y) y^a e^{-y²} dy` with the weight
/// folded into the returned weights.
///
/// Uses `y = exp((π/2) sinh v)`; integrable endpoint powers `y^p`, `p > −1`,
/// in `f` are handled without tuning.
pub fn half_range_de(a: f64, step: f64) -> Rule {
    let (lo, hi) = (-5.2, 1.7);
    let count = ((hi - lo) / step).ceil() as usize;
    let mut nodes = Vec::with_capacity(count + 1);
    let mut weights = Vec::with_capacity(count + 1);
    for k in 0..=count {
        let v = lo + k as f64 * step;
        let y = (FRAC_PI_2 * v.sinh()).exp();
        let jac = FRAC_PI_2 * v.cosh() * y;
        let w = step * jac * y.powf(a) * (-y * y).exp();
        if w > 0.0 && w.is_finite() && y.is_finite() {
            nodes.push(y);
            weights.push(w);
        }
    }
    Rule { nodes, weights }
}

/// Tanh-sinh rule on (a, b). Nodes are generated from the nearer endpoint
/// so that points close to either end keep full relative precision.
pub fn tanh_sinh(a: f64, b: f64, step: f64) -> Rule {
    let half = 0.5 * (b - a);
    let mut nodes = Vec::new();
    let mut weights = Vec::new();
    let kmax = (5.0 / step).ceil() as i64;
    for k in -kmax..=kmax {
        let v = k as f64 * step;
        let arg = FRAC_PI_2 * v.sinh();
        // distance from the nearer endpoint in units of `half`: 1 - tanh|arg|
        let e = (-2.0 * arg.abs()).exp();
        let gap = 2.0 * e / (1.0 + e);
        let w = half * step * FRAC_PI_2 * v.cosh() / arg.cosh().powi(2);
        if !(w > 1e-300) || gap == 0.0 {
            continue;
        }
        let x = if arg < 0.0 { a + half * gap } else { b - half * gap };
        if x <= a || x >= b {
            continue;
        }
        nodes.push(x);
        weights.push(w);
    }
    Rule { nodes, weights }
}
