//! Pointwise evaluators of solutions of the extension problem
//! `y^a ∂_t U = div_X(y^a ∇_X U)` on the upper half-space.

use crate::error::{structural, Result};
use crate::fracheat::FracConfig;

/// Value and first derivatives of a real field at `(x, y, t)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub dx: [f64; 2],
    pub dy: f64,
    pub dt: f64,
}

impl Jet {
    pub fn scaled(self, c: f64) -> Self {
        Self { value: c * self.value, dx: [c * self.dx[0], c * self.dx[1]], dy: c * self.dy, dt: c * self.dt }
    }

    pub fn grad_norm_sqr(&self) -> f64 {
        self.dx[0] * self.dx[0] + self.dx[1] * self.dx[1] + self.dy * self.dy
    }

    fn axpy(&mut self, c: f64, other: &Jet) {
        self.value += c * other.value;
        self.dx[0] += c * other.dx[0];
        self.dx[1] += c * other.dx[1];
        self.dy += c * other.dy;
        self.dt += c * other.dt;
    }
}

/// A real field `U(x, y, t)` together with the potential `V(x, t)` of its
/// boundary condition `−lim y^a ∂_y U = V u`.
pub trait SolutionField: Sync {
    /// Space dimension `n` of the boundary.
    fn dim(&self) -> usize;

    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet;

    fn value(&self, x: [f64; 2], y: f64, t: f64) -> f64 {
        self.jet(x, y, t).value
    }

    /// Jets at several `x` sharing one `(y, t)`; implementors may share work across points.
    fn jets_on_slice(&self, xs: &[[f64; 2]], y: f64, t: f64, out: &mut Vec<Jet>) {
        out.clear();
        out.extend(xs.iter().map(|x| self.jet(*x, y, t)));
    }

    /// Jets on the tensor grid `ys × xs` at time `t`, stored y-major.
    fn jets_on_tensor(&self, xs: &[[f64; 2]], ys: &[f64], t: f64, out: &mut Vec<Jet>) {
        out.clear();
        let mut buf = Vec::with_capacity(xs.len());
        for &y in ys {
            self.jets_on_slice(xs, y, t, &mut buf);
            out.extend_from_slice(&buf);
        }
    }

    /// Boundary trace `u(x, t) = U(x, 0, t)`.
    fn boundary_value(&self, x: [f64; 2], t: f64) -> f64 {
        self.value(x, 0.0, t)
    }

    /// Length `T` of the time window `[−T, 0)` on which the field is defined, if bounded.
    fn time_window(&self) -> Option<f64> {
        None
    }

    fn potential(&self, _x: [f64; 2], _t: f64) -> f64 {
        0.0
    }

    /// Closed-form `lim_{y→0⁺} y^a ∂_y U(x, y, t)` when known.
    fn weighted_flux(&self, _x: [f64; 2], _t: f64) -> Option<f64> {
        None
    }
}

impl<T: SolutionField + ?Sized> SolutionField for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet {
        (**self).jet(x, y, t)
    }
    fn value(&self, x: [f64; 2], y: f64, t: f64) -> f64 {
        (**self).value(x, y, t)
    }
    fn jets_on_slice(&self, xs: &[[f64; 2]], y: f64, t: f64, out: &mut Vec<Jet>) {
        (**self).jets_on_slice(xs, y, t, out)
    }
    fn jets_on_tensor(&self, xs: &[[f64; 2]], ys: &[f64], t: f64, out: &mut Vec<Jet>) {
        (**self).jets_on_tensor(xs, ys, t, out)
    }
    fn time_window(&self) -> Option<f64> {
        (**self).time_window()
    }
    fn boundary_value(&self, x: [f64; 2], t: f64) -> f64 {
        (**self).boundary_value(x, t)
    }
    fn potential(&self, x: [f64; 2], t: f64) -> f64 {
        (**self).potential(x, t)
    }
    fn weighted_flux(&self, x: [f64; 2], t: f64) -> Option<f64> {
        (**self).weighted_flux(x, t)
    }
}

impl<T: SolutionField + ?Sized + Send> SolutionField for Box<T> {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet {
        (**self).jet(x, y, t)
    }
    fn value(&self, x: [f64; 2], y: f64, t: f64) -> f64 {
        (**self).value(x, y, t)
    }
    fn jets_on_slice(&self, xs: &[[f64; 2]], y: f64, t: f64, out: &mut Vec<Jet>) {
        (**self).jets_on_slice(xs, y, t, out)
    }
    fn jets_on_tensor(&self, xs: &[[f64; 2]], ys: &[f64], t: f64, out: &mut Vec<Jet>) {
        (**self).jets_on_tensor(xs, ys, t, out)
    }
    fn time_window(&self) -> Option<f64> {
        (**self).time_window()
    }
    fn boundary_value(&self, x: [f64; 2], t: f64) -> f64 {
        (**self).boundary_value(x, t)
    }
    fn potential(&self, x: [f64; 2], t: f64) -> f64 {
        (**self).potential(x, t)
    }
    fn weighted_flux(&self, x: [f64; 2], t: f64) -> Option<f64> {
        (**self).weighted_flux(x, t)
    }
}

/// Closed-form fields used as exact fixtures.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinKind {
    /// `U ≡ 1`
    One,
    /// `U = x₁`
    X1,
    /// `U = x₁x₂`, `n = 2` only
    X1X2,
    /// `U = y^{2s}`
    Y2s,
    /// `U = |x|² + y² + 2(n+1+a)t`
    Poly2,
    /// `f = y·exp(−(|x|² + |t|)/y²)`, not a solution; a vanishing-order fixture
    CounterexampleF,
}

impl BuiltinKind {
    pub const ALL: [BuiltinKind; 6] = [
        BuiltinKind::One,
        BuiltinKind::X1,
        BuiltinKind::X1X2,
        BuiltinKind::Y2s,
        BuiltinKind::Poly2,
        BuiltinKind::CounterexampleF,
    ];

    pub fn name(self) -> &'static str {
        match self {
            BuiltinKind::One => "one",
            BuiltinKind::X1 => "x1",
            BuiltinKind::X1X2 => "x1x2",
            BuiltinKind::Y2s => "y2s",
            BuiltinKind::Poly2 => "poly2",
            BuiltinKind::CounterexampleF => "counterexample_f",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.name() == name)
    }
}

/// A builtin field with its parabolic homogeneity: `ZU = 2κ U`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Builtin {
    kind: BuiltinKind,
    cfg: FracConfig,
    dim: usize,
}

impl Builtin {
    pub fn new(kind: BuiltinKind, cfg: FracConfig, dim: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return structural(format!("space dimension must be 1 or 2, got {dim}"));
        }
        if kind == BuiltinKind::X1X2 && dim != 2 {
            return structural("x1x2 needs two space dimensions");
        }
        Ok(Self { kind, cfg, dim })
    }

    pub fn kind(&self) -> BuiltinKind {
        self.kind
    }

    pub fn config(&self) -> FracConfig {
        self.cfg
    }

    /// `κ` with `U(λX, λ²t) = λ^{2κ} U(X, t)`.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            BuiltinKind::One => 0.0,
            BuiltinKind::X1 => 0.5,
            BuiltinKind::X1X2 => 1.0,
            BuiltinKind::Y2s => self.cfg.s(),
            BuiltinKind::Poly2 => 1.0,
            BuiltinKind::CounterexampleF => 0.5,
        }
    }

    /// Whether the field solves the extension equation with `V ≡ 0`.
    pub fn solves_extension(&self) -> bool {
        self.kind != BuiltinKind::CounterexampleF
    }
}

impl SolutionField for Builtin {
    fn dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet {
        let x2 = if self.dim == 2 { x[1] } else { 0.0 };
        match self.kind {
            BuiltinKind::One => Jet { value: 1.0, ..Jet::default() },
            BuiltinKind::X1 => Jet { value: x[0], dx: [1.0, 0.0], ..Jet::default() },
            BuiltinKind::X1X2 => Jet { value: x[0] * x2, dx: [x2, x[0]], ..Jet::default() },
            BuiltinKind::Y2s => {
                let s = self.cfg.s();
                let p = y.powf(2.0 * s);
                let dy = if y > 0.0 { 2.0 * s * p / y } else { 0.0 };
                Jet { value: p, dy, ..Jet::default() }
            }
            BuiltinKind::Poly2 => {
                let n = self.dim as f64;
                let c = 2.0 * (n + 1.0 + self.cfg.a());
                Jet {
                    value: x[0] * x[0] + x2 * x2 + y * y + c * t,
                    dx: [2.0 * x[0], 2.0 * x2],
                    dy: 2.0 * y,
                    dt: c,
                }
            }
            BuiltinKind::CounterexampleF => {
                if y <= 0.0 {
                    return Jet::default();
                }
                let q = (x[0] * x[0] + x2 * x2 + t.abs()) / (y * y);
                let e = (-q).exp();
                Jet {
                    value: y * e,
                    dx: [-2.0 * x[0] * e / y, -2.0 * x2 * e / y],
                    dy: e * (1.0 + 2.0 * q),
                    dt: -t.signum() * e / y,
                }
            }
        }
    }

    fn weighted_flux(&self, _x: [f64; 2], _t: f64) -> Option<f64> {
        match self.kind {
            BuiltinKind::Y2s => Some(2.0 * self.cfg.s()),
            BuiltinKind::CounterexampleF => None,
            _ => Some(0.0),
        }
    }
}

/// Finite linear combination `Σ cᵢ Uᵢ` of fields with `V ≡ 0`.
pub struct Superposition {
    terms: Vec<(f64, Box<dyn SolutionField + Send>)>,
    dim: usize,
}

impl Superposition {
    pub fn new(terms: Vec<(f64, Box<dyn SolutionField + Send>)>) -> Result<Self> {
        let Some(dim) = terms.first().map(|(_, f)| f.dim()) else {
            return structural("a superposition needs at least one term");
        };
        if terms.iter().any(|(_, f)| f.dim() != dim) {
            return structural("superposed fields must share the space dimension");
        }
        Ok(Self { terms, dim })
    }
}

impl SolutionField for Superposition {
    fn dim(&self) -> usize {
        self.dim
    }

    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet {
        let mut acc = Jet::default();
        for (c, f) in &self.terms {
            acc.axpy(*c, &f.jet(x, y, t));
        }
        acc
    }

    fn jets_on_slice(&self, xs: &[[f64; 2]], y: f64, t: f64, out: &mut Vec<Jet>) {
        out.clear();
        out.resize(xs.len(), Jet::default());
        let mut buf = Vec::with_capacity(xs.len());
        for (c, f) in &self.terms {
            f.jets_on_slice(xs, y, t, &mut buf);
            for (o, j) in out.iter_mut().zip(&buf) {
                o.axpy(*c, j);
            }
        }
    }

    fn jets_on_tensor(&self, xs: &[[f64; 2]], ys: &[f64], t: f64, out: &mut Vec<Jet>) {
        out.clear();
        out.resize(xs.len() * ys.len(), Jet::default());
        let mut buf = Vec::with_capacity(out.len());
        for (c, f) in &self.terms {
            f.jets_on_tensor(xs, ys, t, &mut buf);
            for (o, j) in out.iter_mut().zip(&buf) {
                o.axpy(*c, j);
            }
        }
    }

    fn weighted_flux(&self, x: [f64; 2], t: f64) -> Option<f64> {
        let mut acc = 0.0;
        for (c, f) in &self.terms {
            acc += c * f.weighted_flux(x, t)?;
        }
        Some(acc)
    }
}

/// `A − B` for two borrowed fields; its potential is zero.
pub struct Difference<'a> {
    a: &'a dyn SolutionField,
    b: &'a dyn SolutionField,
}

impl<'a> Difference<'a> {
    pub fn new(a: &'a dyn SolutionField, b: &'a dyn SolutionField) -> Result<Self> {
        if a.dim() != b.dim() {
            return structural("compared fields must share the space dimension");
        }
        Ok(Self { a, b })
    }
}

impl SolutionField for Difference<'_> {
    fn dim(&self) -> usize {
        self.a.dim()
    }

    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet {
        let mut j = self.a.jet(x, y, t);
        j.axpy(-1.0, &self.b.jet(x, y, t));
        j
    }

    fn jets_on_tensor(&self, xs: &[[f64; 2]], ys: &[f64], t: f64, out: &mut Vec<Jet>) {
        self.a.jets_on_tensor(xs, ys, t, out);
        let mut buf = Vec::with_capacity(out.len());
        self.b.jets_on_tensor(xs, ys, t, &mut buf);
        for (o, j) in out.iter_mut().zip(&buf) {
            o.axpy(-1.0, j);
        }
    }

    fn boundary_value(&self, x: [f64; 2], t: f64) -> f64 {
        self.a.boundary_value(x, t) - self.b.boundary_value(x, t)
    }

    fn time_window(&self) -> Option<f64> {
        match (self.a.time_window(), self.b.time_window()) {
            (Some(p), Some(q)) => Some(p.min(q)),
            (p, q) => p.or(q),
        }
    }
}
