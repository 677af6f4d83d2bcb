//! Periodic space-time grids and band-limited fields.
//!
//! Layout: samples and spectra are stored row-major as `[t][x2][x1]`, with
//! `x1` varying fastest (for `n = 1` the `x2` extent is 1). Node `i` along a
//! space axis sits at `x = −L/2 + i·L/N`; time node `j` sits at
//! `t = −T + j·T/N_t`, so the grid covers `[−L/2, L/2)ⁿ × [−T, 0)`.
//! Spectral index `i` maps to the signed mode `k = i` for `i < N/2` and
//! `k = i − N` otherwise, with physical frequencies `ξ = k/L`, `σ = m/T`.
//!
//! The forward transform carries no prefactor and follows the
//! `e^{−2πi(⟨ξ,x⟩ + σt)}` convention with the node offsets included, so
//! `û(ξ,σ) = Σ u(x,t) e^{−2πi(⟨ξ,x⟩+σt)}`; the inverse carries `1/(Nxⁿ·Nt)`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::OnceLock;

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::error::{domain, structural, FhError, Result};
use crate::quadrature::compensated_sum;

/// File magic of the binary field container.
pub const FIELD_MAGIC: &[u8; 4] = b"FHFL";
/// Container version written by this crate.
pub const FIELD_VERSION: u32 = 1;
/// Container kind: plain space-time field.
pub const KIND_FIELD: u32 = 0;
/// Container kind: extension snapshot with a y-axis header.
pub const KIND_EXTENSION: u32 = 1;

/// Relative spectral mass tolerated outside the inner half of the mode range.
pub const ALIASING_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpaceTimeGrid {
    dim: usize,
    length_x: f64,
    points_x: usize,
    time_window: f64,
    points_t: usize,
}

/// One spectral mode of a grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Mode {
    pub index: usize,
    pub k: [i64; 2],
    pub m: i64,
    pub xi: [f64; 2],
    pub sigma: f64,
}

impl Mode {
    pub fn xi_norm(&self) -> f64 {
        self.xi[0].hypot(self.xi[1])
    }

    /// The heat symbol `(2π|ξ|)² + 2πiσ`.
    pub fn heat_symbol(&self) -> Complex64 {
        let k = 2.0 * PI * self.xi_norm();
        Complex64::new(k * k, 2.0 * PI * self.sigma)
    }
}

impl SpaceTimeGrid {
    pub fn new(dim: usize, length_x: f64, points_x: usize, time_window: f64, points_t: usize) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return structural(format!("space dimension must be 1 or 2, got {dim}"));
        }
        for (name, n) in [("points_x", points_x), ("points_t", points_t)] {
            if n < 8 || !n.is_power_of_two() {
                return structural(format!("{name} must be a power of two >= 8, got {n}"));
            }
        }
        if !(length_x > 0.0 && length_x.is_finite()) {
            return structural(format!("length_x must be positive, got {length_x}"));
        }
        if !(time_window > 0.0 && time_window.is_finite()) {
            return structural(format!("time_window must be positive, got {time_window}"));
        }
        Ok(Self { dim, length_x, points_x, time_window, points_t })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }
    pub fn length_x(&self) -> f64 {
        self.length_x
    }
    pub fn points_x(&self) -> usize {
        self.points_x
    }
    pub fn time_window(&self) -> f64 {
        self.time_window
    }
    pub fn points_t(&self) -> usize {
        self.points_t
    }

    fn ny(&self) -> usize {
        if self.dim == 2 {
            self.points_x
        } else {
            1
        }
    }

    /// Total number of nodes `Nxⁿ·Nt`.
    pub fn len(&self) -> usize {
        self.points_x * self.ny() * self.points_t
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dx(&self) -> f64 {
        self.length_x / self.points_x as f64
    }

    pub fn dt(&self) -> f64 {
        self.time_window / self.points_t as f64
    }

    /// Volume element `Δxⁿ·Δt` of the Riemann sum.
    pub fn cell_volume(&self) -> f64 {
        self.dx().powi(self.dim as i32) * self.dt()
    }

    pub fn x_coord(&self, i: usize) -> f64 {
        -0.5 * self.length_x + i as f64 * self.dx()
    }

    pub fn t_coord(&self, j: usize) -> f64 {
        -self.time_window + j as f64 * self.dt()
    }

    /// `(x, t)` of the node with flat index `idx`.
    pub fn node(&self, idx: usize) -> ([f64; 2], f64) {
        let nx = self.points_x;
        let ny = self.ny();
        let i1 = idx % nx;
        let i2 = (idx / nx) % ny;
        let j = idx / (nx * ny);
        let x2 = if self.dim == 2 { self.x_coord(i2) } else { 0.0 };
        ([self.x_coord(i1), x2], self.t_coord(j))
    }

    pub fn flat_index(&self, i1: usize, i2: usize, j: usize) -> usize {
        (j * self.ny() + i2) * self.points_x + i1
    }

    fn signed(i: usize, n: usize) -> i64 {
        if i < n / 2 {
            i as i64
        } else {
            i as i64 - n as i64
        }
    }

    fn unsigned(k: i64, n: usize) -> Option<usize> {
        let half = (n / 2) as i64;
        if k < -half || k >= half {
            return None;
        }
        Some(if k >= 0 { k as usize } else { (k + n as i64) as usize })
    }

    pub fn mode(&self, idx: usize) -> Mode {
        let nx = self.points_x;
        let ny = self.ny();
        let k1 = Self::signed(idx % nx, nx);
        let k2 = if self.dim == 2 { Self::signed((idx / nx) % ny, ny) } else { 0 };
        let m = Self::signed(idx / (nx * ny), self.points_t);
        Mode {
            index: idx,
            k: [k1, k2],
            m,
            xi: [k1 as f64 / self.length_x, k2 as f64 / self.length_x],
            sigma: m as f64 / self.time_window,
        }
    }

    pub fn modes(&self) -> impl Iterator<Item = Mode> + '_ {
        (0..self.len()).map(move |i| self.mode(i))
    }

    /// Flat spectral index of the signed mode `(k, m)`.
    pub fn mode_index(&self, k: [i64; 2], m: i64) -> Option<usize> {
        let i1 = Self::unsigned(k[0], self.points_x)?;
        let i2 = if self.dim == 2 {
            Self::unsigned(k[1], self.points_x)?
        } else if k[1] == 0 {
            0
        } else {
            return None;
        };
        let j = Self::unsigned(m, self.points_t)?;
        Some(self.flat_index(i1, i2, j))
    }

    /// Whether a mode lies strictly inside the inner half of the mode range.
    pub fn is_inner(&self, mode: &Mode) -> bool {
        let qx = (self.points_x / 4) as i64;
        let qt = (self.points_t / 4) as i64;
        mode.k[0].abs() < qx && mode.k[1].abs() < qx && mode.m.abs() < qt
    }

    // e^{-2πi(<ξ,x0> + σ t0)} for the node offsets x0 = -L/2, t0 = -T
    fn offset_phase(&self, mode: &Mode) -> f64 {
        let parity = (mode.k[0] + mode.k[1]).rem_euclid(2);
        if parity == 0 {
            1.0
        } else {
            -1.0
        }
    }

    fn shape(&self) -> [usize; 3] {
        [self.points_t, self.ny(), self.points_x]
    }
}

/// Samples of a function on a [`SpaceTimeGrid`] together with its spectrum.
///
/// Fields are immutable; the spectrum is computed on first use and cached.
#[derive(Debug, Clone)]
pub struct SpaceTimeField {
    grid: SpaceTimeGrid,
    samples: Vec<Complex64>,
    spectrum: OnceLock<Vec<Complex64>>,
}

impl SpaceTimeField {
    pub fn from_samples(grid: SpaceTimeGrid, samples: Vec<Complex64>) -> Result<Self> {
        if samples.len() != grid.len() {
            return structural(format!("expected {} samples, got {}", grid.len(), samples.len()));
        }
        Ok(Self { grid, samples, spectrum: OnceLock::new() })
    }

    pub fn from_spectrum(grid: SpaceTimeGrid, spectrum: Vec<Complex64>) -> Result<Self> {
        let samples = dft_inverse(&grid, &spectrum)?;
        let cell = OnceLock::new();
        let _ = cell.set(spectrum);
        Ok(Self { grid, samples, spectrum: cell })
    }

    pub fn from_fn(grid: SpaceTimeGrid, f: impl Fn([f64; 2], f64) -> Complex64) -> Self {
        let samples = (0..grid.len())
            .map(|i| {
                let (x, t) = grid.node(i);
                f(x, t)
            })
            .collect();
        Self { grid, samples, spectrum: OnceLock::new() }
    }

    pub fn from_real_fn(grid: SpaceTimeGrid, f: impl Fn([f64; 2], f64) -> f64) -> Self {
        Self::from_fn(grid, |x, t| Complex64::new(f(x, t), 0.0))
    }

    pub fn constant(grid: SpaceTimeGrid, c: f64) -> Self {
        Self::from_real_fn(grid, |_, _| c)
    }

    /// `amplitude · e^{2πi(⟨ξ_k,x⟩ + σ_m t)}`.
    pub fn single_mode(grid: SpaceTimeGrid, k: [i64; 2], m: i64, amplitude: Complex64) -> Self {
        let xi = [k[0] as f64 / grid.length_x, k[1] as f64 / grid.length_x];
        let sigma = m as f64 / grid.time_window;
        Self::from_fn(grid, |x, t| {
            amplitude * Complex64::from_polar(1.0, 2.0 * PI * (xi[0] * x[0] + xi[1] * x[1] + sigma * t))
        })
    }

    pub fn grid(&self) -> &SpaceTimeGrid {
        &self.grid
    }

    pub fn samples(&self) -> &[Complex64] {
        &self.samples
    }

    pub fn spectrum(&self) -> &[Complex64] {
        self.spectrum.get_or_init(|| dft_forward_raw(&self.grid, &self.samples))
    }

    /// Apply a per-mode multiplier and return the resulting field.
    pub fn map_spectrum(&self, symbol: impl Fn(&Mode) -> Complex64) -> Self {
        self.warn_if_aliased();
        let spec: Vec<Complex64> = self
            .spectrum()
            .iter()
            .enumerate()
            .map(|(i, c)| c * symbol(&self.grid.mode(i)))
            .collect();
        Self::from_spectrum(self.grid, spec).expect("spectrum length matches grid")
    }

    /// Largest spectral magnitude outside the inner half, relative to the largest overall.
    pub fn aliasing_ratio(&self) -> f64 {
        let spec = self.spectrum();
        let max_all = spec.iter().map(|c| c.norm()).fold(0.0, f64::max);
        if max_all == 0.0 {
            return 0.0;
        }
        let outer = spec
            .iter()
            .enumerate()
            .filter(|(i, _)| !self.grid.is_inner(&self.grid.mode(*i)))
            .map(|(_, c)| c.norm())
            .fold(0.0, f64::max);
        outer / max_all
    }

    pub fn is_band_limited(&self) -> bool {
        self.aliasing_ratio() <= ALIASING_TOLERANCE
    }

    fn warn_if_aliased(&self) {
        let ratio = self.aliasing_ratio();
        if ratio > ALIASING_TOLERANCE {
            log::warn!("spectrum reaches the outer half of the mode range (relative mass {ratio:.3e}); operator output may alias");
        }
    }

    /// Trigonometric interpolation at an arbitrary point.
    pub fn evaluate(&self, x: [f64; 2], t: f64) -> Complex64 {
        let n = self.grid.len() as f64;
        let terms = self.spectrum().iter().enumerate().filter(|(_, c)| c.norm() > 0.0).map(|(i, c)| {
            let mode = self.grid.mode(i);
            let phase = 2.0 * PI * (mode.xi[0] * x[0] + mode.xi[1] * x[1] + mode.sigma * t);
            c * Complex64::from_polar(1.0, phase)
        });
        crate::quadrature::compensated_sum_complex(terms) / n
    }

    pub fn l2_norm(&self) -> f64 {
        (self.grid.cell_volume() * compensated_sum(self.samples.iter().map(|c| c.norm_sqr()))).sqrt()
    }

    pub fn sup_norm(&self) -> f64 {
        self.samples.iter().map(|c| c.norm()).fold(0.0, f64::max)
    }

    pub fn max_imag(&self) -> f64 {
        self.samples.iter().map(|c| c.im.abs()).fold(0.0, f64::max)
    }

    pub fn real_parts(&self) -> Vec<f64> {
        self.samples.iter().map(|c| c.re).collect()
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.combine(other, |a, b| a - b)
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self {
            grid: self.grid,
            samples: self.samples.iter().map(|v| v * c).collect(),
            spectrum: OnceLock::new(),
        }
    }

    fn combine(&self, other: &Self, f: impl Fn(Complex64, Complex64) -> Complex64) -> Result<Self> {
        if self.grid != other.grid {
            return structural("fields live on different grids");
        }
        let samples = self.samples.iter().zip(&other.samples).map(|(a, b)| f(*a, *b)).collect();
        Self::from_samples(self.grid, samples)
    }

    /// Relative L² distance `‖self − other‖ / ‖other‖` (absolute when `other = 0`).
    pub fn relative_l2_distance(&self, other: &Self) -> Result<f64> {
        let diff = self.sub(other)?.l2_norm();
        let base = other.l2_norm();
        Ok(if base > 0.0 { diff / base } else { diff })
    }

    /// Binary container: magic, version, kind, header, then little-endian `(re, im)` pairs.
    pub fn write_binary(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        write_header(&mut w, &self.grid, KIND_FIELD)?;
        write_values(&mut w, &self.samples)?;
        w.flush()?;
        Ok(())
    }

    pub fn read_binary(path: &Path) -> Result<Self> {
        let mut r = BufReader::new(File::open(path)?);
        let (grid, kind) = read_header(&mut r)?;
        if kind != KIND_FIELD {
            return Err(FhError::Format(format!("container kind {kind} is not a plain field")));
        }
        let samples = read_values(&mut r, grid.len())?;
        Self::from_samples(grid, samples)
    }

    /// CSV dump with columns `x1[,x2],t,re,im`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        if self.grid.dim == 2 {
            writeln!(w, "x1,x2,t,re,im")?;
        } else {
            writeln!(w, "x1,t,re,im")?;
        }
        for (i, v) in self.samples.iter().enumerate() {
            let (x, t) = self.grid.node(i);
            if self.grid.dim == 2 {
                writeln!(w, "{:.15e},{:.15e},{:.15e},{:.15e},{:.15e}", x[0], x[1], t, v.re, v.im)?;
            } else {
                writeln!(w, "{:.15e},{:.15e},{:.15e},{:.15e}", x[0], t, v.re, v.im)?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn write_header(w: &mut impl Write, grid: &SpaceTimeGrid, kind: u32) -> Result<()> {
    w.write_all(FIELD_MAGIC)?;
    w.write_all(&FIELD_VERSION.to_le_bytes())?;
    w.write_all(&kind.to_le_bytes())?;
    w.write_all(&(grid.dim as u32).to_le_bytes())?;
    w.write_all(&(grid.points_x as u32).to_le_bytes())?;
    w.write_all(&(grid.points_t as u32).to_le_bytes())?;
    w.write_all(&grid.length_x.to_le_bytes())?;
    w.write_all(&grid.time_window.to_le_bytes())?;
    Ok(())
}

pub(crate) fn read_header(r: &mut impl Read) -> Result<(SpaceTimeGrid, u32)> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != FIELD_MAGIC {
        return Err(FhError::Format("bad magic bytes, expected FHFL".into()));
    }
    let version = read_u32(r)?;
    if version != FIELD_VERSION {
        return Err(FhError::Format(format!("unsupported container version {version}")));
    }
    let kind = read_u32(r)?;
    let dim = read_u32(r)? as usize;
    let nx = read_u32(r)? as usize;
    let nt = read_u32(r)? as usize;
    let lx = read_f64(r)?;
    let tw = read_f64(r)?;
    let grid = SpaceTimeGrid::new(dim, lx, nx, tw, nt).map_err(|e| FhError::Format(e.to_string()))?;
    Ok((grid, kind))
}

pub(crate) fn write_values(w: &mut impl Write, values: &[Complex64]) -> Result<()> {
    for v in values {
        w.write_all(&v.re.to_le_bytes())?;
        w.write_all(&v.im.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_values(r: &mut impl Read, count: usize) -> Result<Vec<Complex64>> {
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let re = read_f64(r)?;
        let im = read_f64(r)?;
        out.push(Complex64::new(re, im));
    }
    let mut extra = [0u8; 1];
    if r.read(&mut extra)? != 0 {
        return Err(FhError::Format("trailing bytes after sample block".into()));
    }
    Ok(out)
}

pub(crate) fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b))
}

pub(crate) fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn fft_axes(grid: &SpaceTimeGrid, data: &mut [Complex64], inverse: bool) {
    let [nt, ny, nx] = grid.shape();
    let mut planner = FftPlanner::<f64>::new();
    let plan = |n: usize, planner: &mut FftPlanner<f64>| {
        if inverse {
            planner.plan_fft_inverse(n)
        } else {
            planner.plan_fft_forward(n)
        }
    };
    // x1: contiguous rows
    let fx = plan(nx, &mut planner);
    for row in data.chunks_exact_mut(nx) {
        fx.process(row);
    }
    let mut buf = Vec::new();
    if ny > 1 {
        let fy = plan(ny, &mut planner);
        for j in 0..nt {
            for i1 in 0..nx {
                buf.clear();
                buf.extend((0..ny).map(|i2| data[(j * ny + i2) * nx + i1]));
                fy.process(&mut buf);
                for (i2, v) in buf.iter().enumerate() {
                    data[(j * ny + i2) * nx + i1] = *v;
                }
            }
        }
    }
    let ft = plan(nt, &mut planner);
    let plane = ny * nx;
    for p in 0..plane {
        buf.clear();
        buf.extend((0..nt).map(|j| data[j * plane + p]));
        ft.process(&mut buf);
        for (j, v) in buf.iter().enumerate() {
            data[j * plane + p] = *v;
        }
    }
}

fn dft_forward_raw(grid: &SpaceTimeGrid, samples: &[Complex64]) -> Vec<Complex64> {
    let mut data = samples.to_vec();
    fft_axes(grid, &mut data, false);
    for (i, v) in data.iter_mut().enumerate() {
        *v *= grid.offset_phase(&grid.mode(i));
    }
    data
}

/// Forward space-time DFT with the `e^{−2πi(⟨ξ,x⟩+σt)}` convention, no prefactor.
pub fn dft_forward(field: &SpaceTimeField) -> Vec<Complex64> {
    field.spectrum().to_vec()
}

/// Inverse of [`dft_forward`], carrying the `1/(Nxⁿ·Nt)` factor.
pub fn dft_inverse(grid: &SpaceTimeGrid, spectrum: &[Complex64]) -> Result<Vec<Complex64>> {
    if spectrum.len() != grid.len() {
        return structural(format!("expected {} spectral values, got {}", grid.len(), spectrum.len()));
    }
    let mut data: Vec<Complex64> = spectrum
        .iter()
        .enumerate()
        .map(|(i, v)| v * grid.offset_phase(&grid.mode(i)))
        .collect();
    fft_axes(grid, &mut data, true);
    let scale = 1.0 / grid.len() as f64;
    for v in &mut data {
        *v *= scale;
    }
    Ok(data)
}

/// `Λ_h u(x,t) = u(x,t+h)`, applied through the phase `e^{2πiσh}`.
pub fn time_shift(field: &SpaceTimeField, h: f64) -> SpaceTimeField {
    field.map_spectrum(|m| Complex64::from_polar(1.0, 2.0 * PI * m.sigma * h))
}

/// Heat semigroup `e^{−τH}` with symbol `e^{−τ((2π|ξ|)² + 2πiσ)}`.
pub fn heat_semigroup(field: &SpaceTimeField, tau: f64) -> Result<SpaceTimeField> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return domain(format!("heat semigroup needs tau >= 0, got {tau}"));
    }
    Ok(field.map_spectrum(|m| (-tau * m.heat_symbol()).exp()))
}

/// `e^{−τH}u = ∫ G(z,τ) u(x−z, t−τ) dz` computed as a time shift followed by
/// a discrete convolution with the periodized Gaussian.
pub fn heat_semigroup_convolution(field: &SpaceTimeField, tau: f64) -> Result<SpaceTimeField> {
    if !(tau >= 0.0) || !tau.is_finite() {
        return domain(format!("heat semigroup needs tau >= 0, got {tau}"));
    }
    let shifted = time_shift(field, -tau);
    if tau == 0.0 {
        return Ok(shifted);
    }
    let grid = *field.grid();
    let nx = grid.points_x;
    let lx = grid.length_x;
    let dx = grid.dx();
    let images = (1.0 + (40.0 * tau).sqrt() / lx).ceil() as i64 + 1;
    let kernel: Vec<f64> = (0..nx)
        .map(|d| {
            let z = d as f64 * dx;
            let terms = (-images..=images).map(|p| {
                let zz = z + p as f64 * lx;
                (-zz * zz / (4.0 * tau)).exp()
            });
            dx * compensated_sum(terms) / (4.0 * PI * tau).sqrt()
        })
        .collect();
    let [nt, ny, _] = grid.shape();
    let mut data = shifted.samples().to_vec();
    let mut line = vec![Complex64::new(0.0, 0.0); nx];
    let convolve = |line: &[Complex64], out: &mut Vec<Complex64>| {
        out.clear();
        for i in 0..nx {
            let terms = (0..nx).map(|l| line[l] * kernel[(i + nx - l) % nx]);
            out.push(crate::quadrature::compensated_sum_complex(terms));
        }
    };
    let mut out = Vec::with_capacity(nx);
    for row in data.chunks_exact_mut(nx) {
        line.copy_from_slice(row);
        convolve(&line, &mut out);
        row.copy_from_slice(&out);
    }
    if ny > 1 {
        for j in 0..nt {
            for i1 in 0..nx {
                for i2 in 0..ny {
                    line[i2] = data[(j * ny + i2) * nx + i1];
                }
                convolve(&line, &mut out);
                for i2 in 0..ny {
                    data[(j * ny + i2) * nx + i1] = out[i2];
                }
            }
        }
    }
    SpaceTimeField::from_samples(grid, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn grid1() -> SpaceTimeGrid {
        SpaceTimeGrid::new(1, 2.0 * PI, 32, 2.0, 16).unwrap()
    }

    fn bandlimited(grid: SpaceTimeGrid) -> SpaceTimeField {
        let (lx, tw) = (grid.length_x(), grid.time_window());
        SpaceTimeField::from_real_fn(grid, |x, t| {
            1.5 + (2.0 * PI * x[0] / lx).cos() + 0.4 * (2.0 * PI * (2.0 * x[0] / lx + t / tw)).sin()
                + 0.2 * (2.0 * PI * 3.0 * t / tw).cos() * (2.0 * PI * x[1] / lx).cos()
        })
    }

    #[test]
    fn grid_validation() {
        assert!(SpaceTimeGrid::new(3, 1.0, 16, 1.0, 16).is_err());
        assert!(SpaceTimeGrid::new(1, 1.0, 12, 1.0, 16).is_err());
        assert!(SpaceTimeGrid::new(1, 1.0, 4, 1.0, 16).is_err());
        assert!(SpaceTimeGrid::new(1, -1.0, 16, 1.0, 16).is_err());
        assert!(SpaceTimeGrid::new(2, 1.0, 16, 0.0, 16).is_err());
    }

    #[test]
    fn single_mode_maps_to_indicator() {
        for grid in [grid1(), SpaceTimeGrid::new(2, 3.0, 16, 1.5, 8).unwrap()] {
            let k = [3, if grid.dim() == 2 { -2 } else { 0 }];
            let f = SpaceTimeField::single_mode(grid, k, -1, Complex64::new(1.0, 0.0));
            let target = grid.mode_index(k, -1).unwrap();
            for (i, c) in f.spectrum().iter().enumerate() {
                let want = if i == target { grid.len() as f64 } else { 0.0 };
                assert!((c - want).norm() < 1e-9, "mode {i}: {c}");
            }
        }
    }

    #[test]
    fn round_trip_and_parseval() {
        let grid = SpaceTimeGrid::new(2, 3.0, 16, 1.5, 16).unwrap();
        let f = bandlimited(grid);
        let back = dft_inverse(&grid, &dft_forward(&f)).unwrap();
        let scale = f.sup_norm();
        for (a, b) in back.iter().zip(f.samples()) {
            assert!((a - b).norm() <= 1e-12 * scale);
        }
        let e_samples: f64 = f.samples().iter().map(|c| c.norm_sqr()).sum();
        let e_spec: f64 = f.spectrum().iter().map(|c| c.norm_sqr()).sum::<f64>() / grid.len() as f64;
        assert_relative_eq!(e_samples, e_spec, max_relative = 1e-10);
    }

    #[test]
    fn real_even_data_has_hermitian_spectrum() {
        let grid = grid1();
        let lx = grid.length_x();
        let f = SpaceTimeField::from_real_fn(grid, |x, t| (2.0 * PI * x[0] / lx).cos() * (1.0 + t * t));
        for mode in grid.modes() {
            let Some(j) = grid.mode_index([-mode.k[0], 0], -mode.m) else { continue };
            let a = f.spectrum()[mode.index];
            let b = f.spectrum()[j].conj();
            assert!((a - b).norm() < 1e-10);
        }
    }

    #[test]
    fn interpolation_reproduces_band_limited_data() {
        let grid = grid1();
        let f = bandlimited(grid);
        let (x, t) = ([0.3, 0.0], -0.77);
        let lx = grid.length_x();
        let tw = grid.time_window();
        let exact = 1.5 + (2.0 * PI * x[0] / lx).cos() + 0.4 * (2.0 * PI * (2.0 * x[0] / lx + t / tw)).sin()
            + 0.2 * (2.0 * PI * 3.0 * t / tw).cos();
        assert!((f.evaluate(x, t).re - exact).abs() < 1e-12);
    }

    #[test]
    fn time_shift_properties() {
        let grid = grid1();
        let f = bandlimited(grid);
        let id = time_shift(&f, 0.0);
        assert!(id.relative_l2_distance(&f).unwrap() < 1e-13);
        let h = 0.37;
        let back = time_shift(&time_shift(&f, h), -h);
        assert!(back.relative_l2_distance(&f).unwrap() < 1e-12);
        let mode = SpaceTimeField::single_mode(grid, [2, 0], 3, Complex64::new(1.0, 0.0));
        let shifted = time_shift(&mode, h);
        let expected = mode.scale(Complex64::from_polar(1.0, 2.0 * PI * 3.0 / grid.time_window() * h));
        assert!(shifted.relative_l2_distance(&expected).unwrap() < 1e-12);
        // pointwise: shifted(x,t) = f(x, t+h)
        let (x, t) = ([0.4, 0.0], -1.1);
        assert!((time_shift(&f, h).evaluate(x, t) - f.evaluate(x, t + h)).norm() < 1e-12);
    }

    #[test]
    fn heat_semigroup_examples() {
        let grid = grid1();
        let f = bandlimited(grid);
        assert!(heat_semigroup(&f, 0.0).unwrap().relative_l2_distance(&f).unwrap() < 1e-14);
        let c = SpaceTimeField::constant(grid, 2.5);
        let hc = heat_semigroup(&c, 0.8).unwrap();
        assert!(hc.relative_l2_distance(&c).unwrap() < 1e-13);
        let mode = SpaceTimeField::single_mode(grid, [1, 0], 2, Complex64::new(1.0, 0.0));
        let tau = 0.3;
        let m = grid.mode(grid.mode_index([1, 0], 2).unwrap());
        let expected = mode.scale((-tau * m.heat_symbol()).exp());
        assert!(heat_semigroup(&mode, tau).unwrap().relative_l2_distance(&expected).unwrap() < 1e-12);
        assert!(heat_semigroup(&f, -0.1).is_err());
    }

    #[test]
    fn semigroup_law_and_contraction() {
        let grid = grid1();
        let f = bandlimited(grid);
        let a = heat_semigroup(&heat_semigroup(&f, 0.2).unwrap(), 0.35).unwrap();
        let b = heat_semigroup(&f, 0.55).unwrap();
        assert!(a.relative_l2_distance(&b).unwrap() < 1e-11);
        for tau in [0.01, 0.1, 1.0, 5.0] {
            let g = heat_semigroup(&f, tau).unwrap();
            assert!(g.l2_norm() <= f.l2_norm() * (1.0 + 1e-14));
            assert!(g.sup_norm() <= f.sup_norm() * (1.0 + 1e-3));
        }
    }

    #[test]
    fn convolution_matches_spectral() {
        for grid in [grid1(), SpaceTimeGrid::new(2, 2.0 * PI, 32, 2.0, 16).unwrap()] {
            let f = bandlimited(grid);
            assert!(f.is_band_limited());
            for tau in [0.05, 0.3, 1.2] {
                let a = heat_semigroup(&f, tau).unwrap();
                let b = heat_semigroup_convolution(&f, tau).unwrap();
                let d = a.relative_l2_distance(&b).unwrap();
                assert!(d < 1e-8, "tau={tau} d={d:e}");
                // the convolution form is a positive average: sup-norm contraction
                assert!(b.sup_norm() <= f.sup_norm() * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn aliasing_detection() {
        let grid = grid1();
        assert!(bandlimited(grid).is_band_limited());
        let high = SpaceTimeField::single_mode(grid, [12, 0], 0, Complex64::new(1.0, 0.0));
        assert!(!high.is_band_limited());
    }

    #[test]
    fn binary_container_rejects_garbage() {
        let dir = std::env::temp_dir().join(format!("fhfl-test-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("bad.fhfl");
        std::fs::write(&path, b"NOPE0000").unwrap();
        assert!(matches!(SpaceTimeField::read_binary(&path), Err(FhError::Format(_))));
        let f = bandlimited(grid1());
        f.write_binary(&path).unwrap();
        let mut bytes = std::fs::read(&path).unwrap();
        bytes.push(0);
        std::fs::write(&path, &bytes).unwrap();
        assert!(SpaceTimeField::read_binary(&path).is_err());
        std::fs::remove_dir_all(&dir).ok();
    }
}
