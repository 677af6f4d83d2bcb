//! Per-mode solution of the extension problem
//!
//! `y^a ∂_t U = div_X(y^a ∇_X U)` in `{y > 0}`, `U(x, 0, t) = u(x, t)`,
//!
//! through `Û(ξ, y, σ) = Φ_s(L y) / Φ_s(0) · û(ξ, σ)` with `Φ_ν(z) = z^ν K_ν(z)`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{structural, FhError, Result};
use crate::fields::{
    read_f64, read_header, read_u32, read_values, write_header, write_values, Mode, SpaceTimeField, SpaceTimeGrid,
    KIND_EXTENSION,
};
use crate::fracheat::{FracConfig, PotentialField};
use crate::quadrature::compensated_sum_complex;
use crate::solution::{Jet, SolutionField};
use crate::specfun::{gamma_unchecked, phi, phi_at_zero, phi_with_derivative, principal_l, principal_pow, BesselOrder};

/// Modes with `|û| ≤ PRUNE_RELATIVE · max|û|` are dropped from pointwise evaluation.
pub const PRUNE_RELATIVE: f64 = 1e-13;
/// Number of smallest y-nodes used by the Richardson stencil.
pub const RICHARDSON_NODES: usize = 6;

/// Geometric grid `y₁ < … < y_M` in `(0, Ymax]`.
#[derive(Debug, Clone, PartialEq)]
pub struct YGrid {
    nodes: Vec<f64>,
}

impl YGrid {
    pub fn geometric(count: usize, y_min: f64, y_max: f64) -> Result<Self> {
        if count < RICHARDSON_NODES + 2 {
            return structural(format!("a y-grid needs at least {} nodes, got {count}", RICHARDSON_NODES + 2));
        }
        if !(y_min > 0.0 && y_min <= 1e-3) {
            return structural(format!("smallest y-node must lie in (0, 1e-3], got {y_min}"));
        }
        if !(y_max >= 8.0 && y_max.is_finite()) {
            return structural(format!("largest y-node must be at least 8, got {y_max}"));
        }
        let ratio = (y_max / y_min).powf(1.0 / (count - 1) as f64);
        let nodes = (0..count).map(|j| y_min * ratio.powi(j as i32)).collect();
        Ok(Self { nodes })
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn ratio(&self) -> f64 {
        self.nodes[1] / self.nodes[0]
    }
}

impl Default for YGrid {
    fn default() -> Self {
        Self::geometric(64, 1e-4, 12.0).expect("default y-grid is valid")
    }
}

/// How the potential `V` of an extension field is defined.
#[derive(Debug, Clone)]
pub enum PotentialMode {
    None,
    /// `V = −(lim y^a ∂_y U)/u`, evaluated from the modes at every point.
    Manufactured,
    /// Trigonometric interpolation of grid samples.
    Explicit(PotentialField),
}

#[derive(Debug, Clone, Copy)]
struct ExtMode {
    mode: Mode,
    weight: Complex64,
    l: Complex64,
}

/// Samples of `U` and its first derivatives on the space-time grid at one height.
#[derive(Debug, Clone)]
pub struct SliceSamples {
    pub y: f64,
    pub value: SpaceTimeField,
    pub dx: Vec<SpaceTimeField>,
    pub dy: SpaceTimeField,
    pub dt: SpaceTimeField,
}

/// The extension `U` of boundary data `u`.
///
/// Pointwise evaluation returns the real part; for real `u` this is `U` itself.
#[derive(Debug)]
pub struct ExtensionField {
    cfg: FracConfig,
    base: SpaceTimeField,
    modes: Vec<ExtMode>,
    potential: PotentialMode,
    ygrid: YGrid,
    slices: Vec<OnceLock<SliceSamples>>,
    order: BesselOrder,
    inv_phi0: f64,
}

impl ExtensionField {
    pub fn extend(u: &SpaceTimeField, cfg: &FracConfig, ygrid: YGrid) -> Result<Self> {
        if !u.is_band_limited() {
            log::warn!("extending data whose spectrum reaches the outer half of the mode range");
        }
        let grid = *u.grid();
        let spec = u.spectrum();
        let max = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let real = u.max_imag() <= 1e-14 * u.sup_norm().max(f64::MIN_POSITIVE);
        let n = grid.len() as f64;
        let mut modes = Vec::new();
        for (i, c) in spec.iter().enumerate() {
            if c.norm() <= PRUNE_RELATIVE * max || *c == Complex64::new(0.0, 0.0) {
                continue;
            }
            let mode = grid.mode(i);
            let mut mult = 1.0;
            if real {
                // keep one representative of each conjugate pair
                let partner = conjugate_index(&grid, &mode);
                if partner < i {
                    continue;
                }
                if partner > i {
                    mult = 2.0;
                }
            }
            modes.push(ExtMode { mode, weight: c * (mult / n), l: principal_l(mode.xi_norm(), mode.sigma) });
        }
        let slices = (0..ygrid.nodes().len()).map(|_| OnceLock::new()).collect();
        Ok(Self {
            cfg: *cfg,
            base: u.clone(),
            modes,
            potential: PotentialMode::None,
            ygrid,
            slices,
            order: BesselOrder::new(cfg.s())?,
            inv_phi0: 1.0 / phi_at_zero(cfg.s()),
        })
    }

    pub fn with_potential(mut self, potential: PotentialMode) -> Self {
        self.potential = potential;
        self
    }

    pub fn config(&self) -> &FracConfig {
        &self.cfg
    }

    pub fn boundary(&self) -> &SpaceTimeField {
        &self.base
    }

    pub fn ygrid(&self) -> &YGrid {
        &self.ygrid
    }

    /// Number of modes kept for pointwise evaluation.
    pub fn active_modes(&self) -> usize {
        self.modes.len()
    }

    // Φ_s(Ly)/Φ_s(0) and its y-derivative
    fn radial(&self, l: Complex64, y: f64) -> (Complex64, Complex64) {
        if l == Complex64::new(0.0, 0.0) {
            return (Complex64::new(1.0, 0.0), Complex64::new(0.0, 0.0));
        }
        let (p, d) = phi_with_derivative(self.order, l * y).expect("L y lies in the sector |arg| <= pi/4");
        (p * self.inv_phi0, l * d * self.inv_phi0)
    }

    fn radial_value(&self, l: Complex64, y: f64) -> Complex64 {
        if l == Complex64::new(0.0, 0.0) {
            return Complex64::new(1.0, 0.0);
        }
        phi(self.order, l * y).expect("L y lies in the sector |arg| <= pi/4") * self.inv_phi0
    }

    fn phase(mode: &Mode, x: [f64; 2], t: f64) -> Complex64 {
        Complex64::from_polar(1.0, 2.0 * PI * (mode.xi[0] * x[0] + mode.xi[1] * x[1] + mode.sigma * t))
    }

    /// Closed-form `lim y^a ∂_y Û / û = −(2^{1−s}/Γ(s)) L^{2s} Φ_{1−s}(0)` for one mode.
    fn flux_factor(&self, l: Complex64) -> Complex64 {
        spectral_flux_factor(&self.cfg, l)
    }

    /// `lim y^a ∂_y U` on the grid (spectral), its Richardson counterpart, and `H^s u`
    /// recovered as `−(2^{2s−1}Γ(s)/Γ(1−s)) · lim y^a ∂_y U`.
    pub fn neumann_trace(&self) -> Result<NeumannTrace> {
        let grid = *self.base.grid();
        let spec = self.base.spectrum();
        let per_mode: Vec<Result<(Complex64, Complex64)>> = (0..spec.len())
            .into_par_iter()
            .map(|i| {
                let c = spec[i];
                if c == Complex64::new(0.0, 0.0) {
                    return Ok((c, c));
                }
                let mode = grid.mode(i);
                let l = principal_l(mode.xi_norm(), mode.sigma);
                let (exact, extrapolated) = mode_flux_limit(&self.cfg, l, &self.ygrid).map_err(|e| match e {
                    FhError::Extrapolation(msg) => {
                        FhError::Extrapolation(format!("mode k={:?} m={}: {msg}", mode.k, mode.m))
                    }
                    other => other,
                })?;
                Ok((c * exact, c * extrapolated))
            })
            .collect();
        let mut exact = Vec::with_capacity(spec.len());
        let mut extrapolated = Vec::with_capacity(spec.len());
        for r in per_mode {
            let (a, b) = r?;
            exact.push(a);
            extrapolated.push(b);
        }
        let flux = SpaceTimeField::from_spectrum(grid, exact)?;
        let flux_grid = SpaceTimeField::from_spectrum(grid, extrapolated)?;
        let discrepancy = flux_grid.relative_l2_distance(&flux)?;
        let hs = flux.scale(Complex64::new(-1.0 / self.cfg.c_s(), 0.0));
        Ok(NeumannTrace { flux, flux_grid, hs, discrepancy })
    }

    /// Grid samples of `U`, `∇_x U`, `∂_y U`, `∂_t U` at the `j`-th y-node, computed once.
    pub fn slice(&self, j: usize) -> Result<&SliceSamples> {
        let Some(cell) = self.slices.get(j) else {
            return structural(format!("y-node index {j} out of range"));
        };
        if let Some(s) = cell.get() {
            return Ok(s);
        }
        let y = self.ygrid.nodes()[j];
        let grid = *self.base.grid();
        let spec = self.base.spectrum();
        let radial: Vec<(Complex64, Complex64)> = (0..spec.len())
            .into_par_iter()
            .map(|i| {
                if spec[i] == Complex64::new(0.0, 0.0) {
                    return (Complex64::new(0.0, 0.0), Complex64::new(0.0, 0.0));
                }
                let mode = grid.mode(i);
                self.radial(principal_l(mode.xi_norm(), mode.sigma), y)
            })
            .collect();
        let build = |f: &dyn Fn(usize, &Mode) -> Complex64| -> Result<SpaceTimeField> {
            let data = (0..spec.len()).map(|i| spec[i] * f(i, &grid.mode(i))).collect();
            SpaceTimeField::from_spectrum(grid, data)
        };
        let value = build(&|i, _| radial[i].0)?;
        let mut dx = vec![build(&|i, m| radial[i].0 * Complex64::new(0.0, 2.0 * PI * m.xi[0]))?];
        if grid.dim() == 2 {
            dx.push(build(&|i, m| radial[i].0 * Complex64::new(0.0, 2.0 * PI * m.xi[1]))?);
        }
        let dy = build(&|i, _| radial[i].1)?;
        let dt = build(&|i, m| radial[i].0 * Complex64::new(0.0, 2.0 * PI * m.sigma))?;
        let _ = cell.set(SliceSamples { y, value, dx, dy, dt });
        Ok(cell.get().expect("slice was just stored"))
    }

    /// `sup_{x,t} |y^a ∂_y U|` at each y-node with `y ≤ y_max`.
    pub fn decay_profile(&self, y_max: f64) -> Result<Vec<(f64, f64)>> {
        let a = self.cfg.a();
        let mut out = Vec::new();
        for (j, &y) in self.ygrid.nodes().iter().enumerate() {
            if y > y_max {
                break;
            }
            let slice = self.slice(j)?;
            out.push((y, y.powf(a) * slice.dy.real_parts().iter().fold(0.0f64, |m, v| m.max(v.abs()))));
        }
        Ok(out)
    }

    /// Snapshot of `U` at the given heights: a field container of kind 1 whose
    /// header is followed by the y-count, the heights, and one sample block per height.
    pub fn write_snapshot(&self, path: &Path, ys: &[f64]) -> Result<()> {
        let grid = *self.base.grid();
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, &grid, KIND_EXTENSION)?;
        w.write_all(&(ys.len() as u32).to_le_bytes())?;
        for y in ys {
            w.write_all(&y.to_le_bytes())?;
        }
        let spec = self.base.spectrum();
        for &y in ys {
            if !(y >= 0.0) {
                return structural(format!("snapshot heights must be non-negative, got {y}"));
            }
            let data: Vec<Complex64> = (0..spec.len())
                .into_par_iter()
                .map(|i| {
                    if spec[i] == Complex64::new(0.0, 0.0) || y == 0.0 {
                        return spec[i];
                    }
                    let mode = grid.mode(i);
                    spec[i] * self.radial_value(principal_l(mode.xi_norm(), mode.sigma), y)
                })
                .collect();
            let field = SpaceTimeField::from_spectrum(grid, data)?;
            write_values(&mut w, field.samples())?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Read a snapshot written by [`ExtensionField::write_snapshot`].
pub fn read_snapshot(path: &Path) -> Result<(Vec<f64>, Vec<SpaceTimeField>)> {
    let mut r = BufReader::new(File::open(path)?);
    let (grid, kind) = read_header(&mut r)?;
    if kind != KIND_EXTENSION {
        return Err(FhError::Format(format!("container kind {kind} is not an extension snapshot")));
    }
    let count = read_u32(&mut r)? as usize;
    let ys = (0..count).map(|_| read_f64(&mut r)).collect::<Result<Vec<_>>>()?;
    let all = read_values(&mut r, count * grid.len())?;
    let fields = all
        .chunks_exact(grid.len())
        .map(|c| SpaceTimeField::from_samples(grid, c.to_vec()))
        .collect::<Result<Vec<_>>>()?;
    Ok((ys, fields))
}

fn conjugate_index(grid: &SpaceTimeGrid, mode: &Mode) -> usize {
    let wrap = |k: i64, n: usize| -> usize { (-k).rem_euclid(n as i64) as usize };
    let nx = grid.points_x();
    let i1 = wrap(mode.k[0], nx);
    let i2 = if grid.dim() == 2 { wrap(mode.k[1], nx) } else { 0 };
    let j = wrap(mode.m, grid.points_t());
    grid.flat_index(i1, i2, j)
}

/// `−(2^{1−s}/Γ(s)) L^{2s} Φ_{1−s}(0)`, the exact weighted flux per unit boundary coefficient.
pub fn spectral_flux_factor(cfg: &FracConfig, l: Complex64) -> Complex64 {
    let s = cfg.s();
    let norm = 2f64.powf(1.0 - s) / gamma_unchecked(s);
    -norm * principal_pow(l * l, s) * phi_at_zero(1.0 - s)
}

/// Weighted flux limit `lim y^a ∂_y Û` for a unit boundary coefficient: the closed
/// form and a Richardson extrapolation from the smallest nodes of `ygrid`.
///
/// `y^a ∂_y Û = −(2^{1−s}/Γ(s)) L^{2s} Φ_{1−s}(Ly)`, whose expansion at `y = 0`
/// carries the powers `y^{2−2s}, y², y^{4−2s}, y⁴, …`; those are eliminated in turn.
pub fn mode_flux_limit(cfg: &FracConfig, l: Complex64, ygrid: &YGrid) -> Result<(Complex64, Complex64)> {
    let exact = spectral_flux_factor(cfg, l);
    if l == Complex64::new(0.0, 0.0) {
        return Ok((exact, exact));
    }
    let s = cfg.s();
    let a = cfg.a();
    let order = BesselOrder::new(s)?;
    let inv_phi0 = 1.0 / phi_at_zero(s);
    let ys = &ygrid.nodes()[..RICHARDSON_NODES];
    let samples = ys
        .iter()
        .map(|&y| {
            let (_, d) = phi_with_derivative(order, l * y)?;
            Ok(y.powf(a) * l * d * inv_phi0)
        })
        .collect::<Result<Vec<_>>>()?;
    let exponents = [2.0 - 2.0 * s, 2.0, 4.0 - 2.0 * s, 4.0, 6.0 - 2.0 * s];
    let extrapolated = richardson_geometric(&samples, ygrid.ratio(), &exponents)?;
    Ok((exact, extrapolated))
}

/// Richardson table on geometric nodes `y_j = y₀ q^j`, eliminating `y^{p_k}` at level `k`.
pub fn richardson_geometric(samples: &[Complex64], ratio: f64, exponents: &[f64]) -> Result<Complex64> {
    let levels = samples.len().min(exponents.len() + 1);
    let mut table = samples[..levels].to_vec();
    let mut diagonal = vec![table[0]];
    for (k, &p) in exponents.iter().enumerate().take(levels - 1) {
        let qp = ratio.powf(p);
        // table[j] holds level-k estimates built from nodes j-k..=j
        for j in (k + 1..levels).rev() {
            table[j] = (qp * table[j - 1] - table[j]) / (qp - 1.0);
        }
        diagonal.push(table[k + 1]);
    }
    let result = table[levels - 1];
    let steps: Vec<f64> = diagonal.windows(2).map(|w| (w[1] - w[0]).norm()).collect();
    let floor = 1e-12 * result.norm().max(samples[0].norm());
    if let (Some(first), Some(last)) = (steps.first(), steps.last()) {
        if *last > *first && *last > floor {
            return Err(FhError::Extrapolation(format!(
                "Richardson corrections grow ({first:.3e} then {last:.3e}); the y-grid does not resolve the limit"
            )));
        }
    }
    Ok(result)
}

/// Exact and extrapolated weighted flux together with `H^s u` read off the flux.
#[derive(Debug, Clone)]
pub struct NeumannTrace {
    pub flux: SpaceTimeField,
    pub flux_grid: SpaceTimeField,
    pub hs: SpaceTimeField,
    /// Relative L² distance between the extrapolated and exact flux.
    pub discrepancy: f64,
}

impl SolutionField for ExtensionField {
    fn dim(&self) -> usize {
        self.base.grid().dim()
    }

    fn jet(&self, x: [f64; 2], y: f64, t: f64) -> Jet {
        let mut out = Vec::with_capacity(1);
        self.jets_on_slice(&[x], y, t, &mut out);
        out[0]
    }

    fn value(&self, x: [f64; 2], y: f64, t: f64) -> f64 {
        if y <= 0.0 {
            return self.boundary_value(x, t);
        }
        let terms = self.modes.iter().map(|m| m.weight * self.radial_value(m.l, y) * Self::phase(&m.mode, x, t));
        compensated_sum_complex(terms).re
    }

    fn jets_on_slice(&self, xs: &[[f64; 2]], y: f64, t: f64, out: &mut Vec<Jet>) {
        self.jets_on_tensor(xs, &[y], t, out)
    }

    fn jets_on_tensor(&self, xs: &[[f64; 2]], ys: &[f64], t: f64, out: &mut Vec<Jet>) {
        let (nx, ny) = (xs.len(), ys.len());
        let zero = Complex64::new(0.0, 0.0);
        let mut acc = vec![[zero; 5]; nx * ny];
        let mut phases = vec![zero; nx];
        let mut radial = vec![(zero, zero); ny];
        for m in &self.modes {
            for (r, &y) in radial.iter_mut().zip(ys) {
                *r = if y > 0.0 {
                    self.radial(m.l, y)
                } else {
                    let d = if m.l == zero { 0.0 } else { f64::NAN };
                    (Complex64::new(1.0, 0.0), Complex64::new(d, 0.0))
                };
            }
            let base = m.weight * Complex64::from_polar(1.0, 2.0 * PI * m.mode.sigma * t);
            for (p, x) in phases.iter_mut().zip(xs) {
                *p = base * Complex64::from_polar(1.0, 2.0 * PI * (m.mode.xi[0] * x[0] + m.mode.xi[1] * x[1]));
            }
            let w1 = Complex64::new(0.0, 2.0 * PI * m.mode.xi[0]);
            let w2 = Complex64::new(0.0, 2.0 * PI * m.mode.xi[1]);
            let wt = Complex64::new(0.0, 2.0 * PI * m.mode.sigma);
            for (row, (r, dr)) in acc.chunks_exact_mut(nx).zip(&radial) {
                for (a, c) in row.iter_mut().zip(&phases) {
                    let cr = c * r;
                    a[0] += cr;
                    a[1] += cr * w1;
                    a[2] += cr * w2;
                    a[3] += c * dr;
                    a[4] += cr * wt;
                }
            }
        }
        out.clear();
        out.extend(acc.iter().map(|a| Jet { value: a[0].re, dx: [a[1].re, a[2].re], dy: a[3].re, dt: a[4].re }));
    }

    fn time_window(&self) -> Option<f64> {
        Some(self.base.grid().time_window())
    }

    fn boundary_value(&self, x: [f64; 2], t: f64) -> f64 {
        compensated_sum_complex(self.modes.iter().map(|m| m.weight * Self::phase(&m.mode, x, t))).re
    }

    fn weighted_flux(&self, x: [f64; 2], t: f64) -> Option<f64> {
        let terms = self.modes.iter().map(|m| m.weight * self.flux_factor(m.l) * Self::phase(&m.mode, x, t));
        Some(compensated_sum_complex(terms).re)
    }

    fn potential(&self, x: [f64; 2], t: f64) -> f64 {
        match &self.potential {
            PotentialMode::None => 0.0,
            PotentialMode::Manufactured => {
                let flux = self.weighted_flux(x, t).unwrap_or(0.0);
                -flux / self.boundary_value(x, t)
            }
            PotentialMode::Explicit(v) => v.evaluate(x, t),
        }
    }
}

/// Box `Π [lo, hi]` in `(x, y, t)` sampled by a uniform lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualRegion {
    pub x: [(f64, f64); 2],
    pub y: (f64, f64),
    pub t: (f64, f64),
    pub points_per_axis: usize,
}

/// Maximum of the centred-difference residual and of `|y^a ∂_t U|` over the region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub scale: f64,
}

/// Residual of `y^a U_t − div_X(y^a ∇_X U)` with centred second-order differences of step `h`.
pub fn pde_residual(
    field: &dyn SolutionField,
    cfg: &FracConfig,
    region: &ResidualRegion,
    h: f64,
) -> Result<ResidualReport> {
    let n = field.dim();
    let p = region.points_per_axis;
    if p == 0 {
        return structural("residual region needs at least one point per axis");
    }
    let axes: Vec<(f64, f64)> = region.x[..n].iter().copied().chain([region.y, region.t]).collect();
    if axes.iter().any(|(lo, hi)| !(lo <= hi)) {
        return structural("residual region has an inverted axis");
    }
    if !(h > 0.0) || region.y.0 - h <= 0.0 {
        return structural(format!("residual stencil of step {h} leaves the half-space at y = {}", region.y.0));
    }
    let a = cfg.a();
    let coord = |(lo, hi): (f64, f64), i: usize| if p == 1 { 0.5 * (lo + hi) } else { lo + (hi - lo) * i as f64 / (p - 1) as f64 };
    let total = p.pow(axes.len() as u32);
    let results: Vec<(f64, f64)> = (0..total)
        .into_par_iter()
        .map(|mut idx| {
            let mut c = [0.0; 4];
            for (k, ax) in axes.iter().enumerate() {
                c[k] = coord(*ax, idx % p);
                idx /= p;
            }
            let x = [c[0], if n == 2 { c[1] } else { 0.0 }];
            let (y, t) = (c[n], c[n + 1]);
            let u = |x: [f64; 2], y: f64, t: f64| field.value(x, y, t);
            let u0 = u(x, y, t);
            let ut = (u(x, y, t + h) - u(x, y, t - h)) / (2.0 * h);
            let mut lap = 0.0;
            for i in 0..n {
                let mut xp = x;
                let mut xm = x;
                xp[i] += h;
                xm[i] -= h;
                lap += (u(xp, y, t) - 2.0 * u0 + u(xm, y, t)) / (h * h);
            }
            let up = (y + 0.5 * h).powf(a) * (u(x, y + h, t) - u0);
            let dn = (y - 0.5 * h).powf(a) * (u0 - u(x, y - h, t));
            let wy = y.powf(a);
            let residual = wy * ut - wy * lap - (up - dn) / (h * h);
            (residual.abs(), (wy * ut).abs())
        })
        .collect();
    let max_residual = results.iter().map(|r| r.0).fold(0.0, f64::max);
    let scale = results.iter().map(|r| r.1).fold(0.0, f64::max);
    Ok(ResidualReport { max_residual, scale })
}

/// Residuals at steps `h, h/2, h/4` and the observed order, `None` when every
/// residual sits at the rounding floor `floor · (1 + scale)`.
pub fn residual_convergence(
    field: &dyn SolutionField,
    cfg: &FracConfig,
    region: &ResidualRegion,
    h: f64,
    floor: f64,
) -> Result<([f64; 3], Option<f64>)> {
    let mut r = [0.0; 3];
    let mut scale = 0.0f64;
    for (k, slot) in r.iter_mut().enumerate() {
        let rep = pde_residual(field, cfg, region, h / 2f64.powi(k as i32))?;
        *slot = rep.max_residual;
        scale = scale.max(rep.scale);
    }
    // rounding in the second differences grows like eps/h²
    let tol = floor * (1.0 + scale) / (h / 4.0).powi(2);
    if r.iter().all(|v| *v <= tol) {
        return Ok((r, None));
    }
    let order = 0.5 * ((r[0] / r[1]).log2() + (r[1] / r[2]).log2());
    Ok((r, Some(order)))
}

/// Maximum deviation, relative to `sup|u|`, between `extend(u)` and the Poisson formula
///
/// `U(x,y,t) = y^{2s}/(4^s Γ(s)) ∫₀^∞ τ^{−1−s} e^{−y²/(4τ)} e^{−τH}u(x,t) dτ`
///
/// evaluated per mode on a rotated contour.
pub fn poisson_check(u: &SpaceTimeField, cfg: &FracConfig, probes: &[([f64; 2], f64, f64)]) -> Result<f64> {
    let ext = ExtensionField::extend(u, cfg, YGrid::default())?;
    let scale = u.sup_norm().max(f64::MIN_POSITIVE);
    let mut worst = 0.0f64;
    for &(x, y, t) in probes {
        if !(0.1..=2.0).contains(&y) {
            return structural(format!("Poisson probes need y in [0.1, 2], got {y}"));
        }
        let terms = ext.modes.iter().map(|m| {
            m.weight * poisson_mode_factor(cfg, m.l * m.l, y) * ExtensionField::phase(&m.mode, x, t)
        });
        let via_poisson = compensated_sum_complex(terms).re;
        worst = worst.max((via_poisson - ext.value(x, y, t)).abs() / scale);
    }
    Ok(worst)
}

/// `y^{2s}/(4^s Γ(s)) ∫₀^∞ τ^{−1−s} e^{−y²/(4τ)} e^{−τλ} dτ` for `Re λ ≥ 0`.
pub fn poisson_mode_factor(cfg: &FracConfig, lambda: Complex64, y: f64) -> Complex64 {
    let s = cfg.s();
    if lambda == Complex64::new(0.0, 0.0) {
        return Complex64::new(1.0, 0.0);
    }
    // τ = ρ e^{iφ}, φ = −arg(λ)/2, makes both exponents real-positive multiples of e^{i arg(λ)/2}
    let half_arg = 0.5 * lambda.arg();
    let rot = Complex64::from_polar(1.0, half_arg);
    let mag = lambda.norm();
    let cos = half_arg.cos();
    let lo = (y * y * cos / (4.0 * 50.0)).ln();
    let hi = (50.0 / (mag * cos)).ln();
    let step = 1.0 / 16.0;
    let count = ((hi - lo) / step).ceil() as usize;
    let terms = (0..=count).map(|k| {
        let v = lo + k as f64 * step;
        let rho = v.exp();
        rho.powf(-s) * (-(y * y / (4.0 * rho) + rho * mag) * rot).exp()
    });
    let integral = compensated_sum_complex(terms) * step * Complex64::from_polar(1.0, s * half_arg);
    integral * y.powf(2.0 * s) / (4f64.powf(s) * gamma_unchecked(s))
}
