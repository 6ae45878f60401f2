//! Periodic grid, discrete Fourier transforms, the free Schrödinger flow,
//! spectral derivatives and rectangle-rule norms.
//!
//! Conventions: the box is `[-L, L)` sampled at `x_j = -L + j dx`, `dx = 2L/n`.
//! Coefficients are stored in FFT order; slot `k < n/2` carries `ξ = πk/L`,
//! slot `k ≥ n/2` carries `ξ = π(k - n)/L`, so the Nyquist slot is the negative
//! frequency `-πn/(2L)`. The forward transform is the raw DFT and the inverse
//! divides by `n`, which gives `dx Σ|u|² = (2L/n²) Σ|û|²`.

use std::fmt;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

struct GridData {
    n: usize,
    half_length: f64,
    dx: f64,
    x: Vec<f64>,
    xi: Vec<f64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    scratch_len: usize,
}

/// Uniform periodic grid with cached FFT plans. Cloning is cheap.
#[derive(Clone)]
pub struct Grid {
    data: Arc<GridData>,
}

/// Serializable description of a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub n: usize,
    pub half_length: f64,
}

impl Grid {
    /// Builds a grid of `n` points on `[-half_length, half_length)`.
    pub fn new(n: usize, half_length: f64) -> Result<Grid> {
        if n < 16 || !n.is_power_of_two() {
            return Err(LabError::Config(format!(
                "grid size n = {n} must be a power of two and at least 16"
            )));
        }
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(LabError::Config(format!(
                "grid half_length = {half_length} must be positive and finite"
            )));
        }
        let dx = 2.0 * half_length / n as f64;
        let x = (0..n).map(|j| -half_length + j as f64 * dx).collect();
        let spacing = std::f64::consts::PI / half_length;
        let xi = (0..n)
            .map(|k| {
                let signed = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
                spacing * signed
            })
            .collect();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward.get_inplace_scratch_len().max(inverse.get_inplace_scratch_len());
        Ok(Grid {
            data: Arc::new(GridData {
                n,
                half_length,
                dx,
                x,
                xi,
                forward,
                inverse,
                scratch_len,
            }),
        })
    }

    pub fn from_spec(spec: GridSpec) -> Result<Grid> {
        Grid::new(spec.n, spec.half_length)
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec {
            n: self.n(),
            half_length: self.half_length(),
        }
    }

    pub fn n(&self) -> usize {
        self.data.n
    }

    pub fn half_length(&self) -> f64 {
        self.data.half_length
    }

    pub fn dx(&self) -> f64 {
        self.data.dx
    }

    /// Sample positions `x_j`.
    pub fn x(&self) -> &[f64] {
        &self.data.x
    }

    /// Wavenumbers in FFT order.
    pub fn wavenumbers(&self) -> &[f64] {
        &self.data.xi
    }

    /// Spacing `π/L` between consecutive wavenumbers.
    pub fn wavenumber_spacing(&self) -> f64 {
        std::f64::consts::PI / self.data.half_length
    }

    /// Largest resolved `|ξ|`, attained by the Nyquist slot.
    pub fn xi_max(&self) -> f64 {
        self.wavenumber_spacing() * (self.data.n / 2) as f64
    }

    /// Slot holding the Nyquist mode `-n/2`.
    pub fn nyquist_index(&self) -> usize {
        self.data.n / 2
    }

    /// Index of the grid point `x = 0`.
    pub fn origin_index(&self) -> usize {
        self.data.n / 2
    }

    /// FFT slot of the signed mode number `k ∈ [-n/2, n/2)`.
    pub fn mode_index(&self, k: i64) -> Option<usize> {
        let half = (self.data.n / 2) as i64;
        if k < -half || k >= half {
            None
        } else if k >= 0 {
            Some(k as usize)
        } else {
            Some((k + self.data.n as i64) as usize)
        }
    }

    /// Scratch buffer sized for [`Grid::forward_with_scratch`] / [`Grid::inverse_with_scratch`].
    pub fn make_scratch(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.data.scratch_len]
    }

    /// Raw forward DFT in place. `buf.len()` must equal `n`.
    pub fn forward_with_scratch(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.data.n);
        self.data.forward.process_with_scratch(buf, scratch);
    }

    /// Inverse DFT in place, including the `1/n` factor.
    pub fn inverse_with_scratch(&self, buf: &mut [Complex64], scratch: &mut [Complex64]) {
        debug_assert_eq!(buf.len(), self.data.n);
        self.data.inverse.process_with_scratch(buf, scratch);
        let scale = 1.0 / self.data.n as f64;
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    pub fn forward_in_place(&self, buf: &mut [Complex64]) {
        let mut scratch = self.make_scratch();
        self.forward_with_scratch(buf, &mut scratch);
    }

    pub fn inverse_in_place(&self, buf: &mut [Complex64]) {
        let mut scratch = self.make_scratch();
        self.inverse_with_scratch(buf, &mut scratch);
    }

    /// Symbol of `∂_x` on each slot, with the Nyquist slot zeroed.
    pub fn derivative_symbol(&self, order: Derivative) -> Vec<Complex64> {
        let nyq = self.nyquist_index();
        self.wavenumbers()
            .iter()
            .enumerate()
            .map(|(k, &xi)| {
                if k == nyq {
                    Complex64::new(0.0, 0.0)
                } else {
                    match order {
                        Derivative::First => Complex64::new(0.0, xi),
                        Derivative::Second => Complex64::new(-xi * xi, 0.0),
                    }
                }
            })
            .collect()
    }

    fn check_len(&self, len: usize, what: &str) -> Result<()> {
        if len != self.data.n {
            Err(LabError::Config(format!(
                "{what} has {len} samples but the grid has n = {}",
                self.data.n
            )))
        } else {
            Ok(())
        }
    }
}

impl PartialEq for Grid {
    fn eq(&self, other: &Grid) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
            || (self.data.n == other.data.n && self.data.half_length == other.data.half_length)
    }
}

impl fmt::Debug for Grid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Grid")
            .field("n", &self.data.n)
            .field("half_length", &self.data.half_length)
            .field("dx", &self.data.dx)
            .finish()
    }
}

/// Convenience constructor mirroring [`Grid::new`].
pub fn make_grid(n: usize, half_length: f64) -> Result<Grid> {
    Grid::new(n, half_length)
}

/// Order of a spectral derivative.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Derivative {
    First,
    Second,
}

/// Transform direction for raw sample buffers.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Inverse,
}

/// Transforms a raw buffer in place after checking its length against the grid.
pub fn transform_in_place(grid: &Grid, buf: &mut [Complex64], direction: Direction) -> Result<()> {
    grid.check_len(buf.len(), "transform buffer")?;
    match direction {
        Direction::Forward => grid.forward_in_place(buf),
        Direction::Inverse => grid.inverse_in_place(buf),
    }
    Ok(())
}

/// Complex field samples on a grid.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector {
    grid: Grid,
    values: Vec<Complex64>,
}

impl StateVector {
    pub fn new(grid: &Grid, values: Vec<Complex64>) -> Result<StateVector> {
        grid.check_len(values.len(), "state")?;
        if values.iter().any(|v| !(v.re.is_finite() && v.im.is_finite())) {
            return Err(LabError::Data("state contains non-finite samples".into()));
        }
        Ok(StateVector {
            grid: grid.clone(),
            values,
        })
    }

    pub fn zeros(grid: &Grid) -> StateVector {
        StateVector {
            grid: grid.clone(),
            values: vec![Complex64::new(0.0, 0.0); grid.n()],
        }
    }

    /// Samples `f(x_j)`.
    pub fn from_fn(grid: &Grid, f: impl Fn(f64) -> Complex64) -> StateVector {
        StateVector {
            grid: grid.clone(),
            values: grid.x().iter().map(|&x| f(x)).collect(),
        }
    }

    pub fn from_real_fn(grid: &Grid, f: impl Fn(f64) -> f64) -> StateVector {
        StateVector::from_fn(grid, |x| Complex64::new(f(x), 0.0))
    }

    /// Wraps values already known to match the grid (internal hot paths).
    pub(crate) fn from_parts(grid: &Grid, values: Vec<Complex64>) -> StateVector {
        debug_assert_eq!(values.len(), grid.n());
        StateVector {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `∥u∥²_{L²}`.
    pub fn mass(&self) -> f64 {
        self.grid.dx() * self.values.iter().map(|v| v.norm_sqr()).sum::<f64>()
    }

    pub fn norm_l2(&self) -> f64 {
        self.mass().sqrt()
    }

    /// `⟨self, other⟩ = ∫ self · conj(other)`.
    pub fn inner(&self, other: &StateVector) -> Complex64 {
        assert_eq!(self.grid, other.grid, "inner product across different grids");
        let s: Complex64 = self.values.iter().zip(&other.values).map(|(a, b)| a * b.conj()).sum();
        s * self.grid.dx()
    }

    /// Pointwise multiplication by a real field.
    pub fn multiply_real(&self, field: &[f64]) -> StateVector {
        assert_eq!(field.len(), self.len(), "multiplier length mismatch");
        let values = self.values.iter().zip(field).map(|(v, &m)| v * m).collect();
        StateVector::from_parts(&self.grid, values)
    }

    pub fn map(&self, f: impl Fn(f64, Complex64) -> Complex64) -> StateVector {
        let values = self.grid.x().iter().zip(&self.values).map(|(&x, &v)| f(x, v)).collect();
        StateVector::from_parts(&self.grid, values)
    }

    pub fn scaled(&self, c: Complex64) -> StateVector {
        StateVector::from_parts(&self.grid, self.values.iter().map(|v| v * c).collect())
    }

    pub fn conj(&self) -> StateVector {
        StateVector::from_parts(&self.grid, self.values.iter().map(|v| v.conj()).collect())
    }

    /// Largest pointwise modulus of the difference.
    pub fn max_abs_diff(&self, other: &StateVector) -> f64 {
        assert_eq!(self.grid, other.grid, "comparison across different grids");
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.re.is_finite() && v.im.is_finite())
    }

    pub fn to_spectral(&self) -> SpectralCoeffs {
        let mut coeffs = self.values.clone();
        self.grid.forward_in_place(&mut coeffs);
        SpectralCoeffs {
            grid: self.grid.clone(),
            coeffs,
        }
    }
}

impl Add for &StateVector {
    type Output = StateVector;
    fn add(self, rhs: &StateVector) -> StateVector {
        assert_eq!(self.grid, rhs.grid, "sum across different grids");
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a + b).collect();
        StateVector::from_parts(&self.grid, values)
    }
}

impl Sub for &StateVector {
    type Output = StateVector;
    fn sub(self, rhs: &StateVector) -> StateVector {
        assert_eq!(self.grid, rhs.grid, "difference across different grids");
        let values = self.values.iter().zip(&rhs.values).map(|(a, b)| a - b).collect();
        StateVector::from_parts(&self.grid, values)
    }
}

impl Mul<f64> for &StateVector {
    type Output = StateVector;
    fn mul(self, rhs: f64) -> StateVector {
        StateVector::from_parts(&self.grid, self.values.iter().map(|v| v * rhs).collect())
    }
}

/// Raw DFT coefficients of a state, in FFT order.
#[derive(Clone, Debug, PartialEq)]
pub struct SpectralCoeffs {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralCoeffs {
    pub fn new(grid: &Grid, coeffs: Vec<Complex64>) -> Result<SpectralCoeffs> {
        grid.check_len(coeffs.len(), "coefficient vector")?;
        Ok(SpectralCoeffs {
            grid: grid.clone(),
            coeffs,
        })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of the signed mode `k`.
    pub fn mode(&self, k: i64) -> Option<Complex64> {
        self.grid.mode_index(k).map(|i| self.coeffs[i])
    }

    /// `∥u∥²_{L²}` evaluated on the coefficient side.
    pub fn mass(&self) -> f64 {
        let n = self.grid.n() as f64;
        2.0 * self.grid.half_length() / (n * n) * self.coeffs.iter().map(|c| c.norm_sqr()).sum::<f64>()
    }

    pub fn to_state(&self) -> StateVector {
        let mut values = self.coeffs.clone();
        self.grid.inverse_in_place(&mut values);
        StateVector::from_parts(&self.grid, values)
    }
}

pub fn forward_transform(state: &StateVector) -> SpectralCoeffs {
    state.to_spectral()
}

pub fn inverse_transform(coeffs: &SpectralCoeffs) -> StateVector {
    coeffs.to_state()
}

/// Multiplies each Fourier mode by `symbol(ξ)`.
pub fn apply_fourier_multiplier(state: &StateVector, symbol: impl Fn(f64) -> Complex64) -> StateVector {
    let grid = state.grid();
    let mut buf = state.values().to_vec();
    grid.forward_in_place(&mut buf);
    for (c, &xi) in buf.iter_mut().zip(grid.wavenumbers()) {
        *c *= symbol(xi);
    }
    grid.inverse_in_place(&mut buf);
    StateVector::from_parts(grid, buf)
}

/// Multiplies each Fourier slot by a precomputed factor (FFT order).
pub fn apply_fourier_factors(state: &StateVector, factors: &[Complex64]) -> StateVector {
    let grid = state.grid();
    assert_eq!(factors.len(), grid.n(), "factor length mismatch");
    let mut buf = state.values().to_vec();
    grid.forward_in_place(&mut buf);
    for (c, f) in buf.iter_mut().zip(factors) {
        *c *= f;
    }
    grid.inverse_in_place(&mut buf);
    StateVector::from_parts(grid, buf)
}

/// `e^{itΔ}`: multiplies mode `ξ` by `e^{-itξ²}`.
pub fn apply_free_propagator(state: &StateVector, t: f64) -> StateVector {
    if t == 0.0 {
        return state.clone();
    }
    apply_fourier_multiplier(state, |xi| Complex64::from_polar(1.0, -t * xi * xi))
}

/// Spectral `∂_x` or `∂_x²`; the Nyquist slot contributes nothing.
pub fn apply_derivative(state: &StateVector, order: Derivative) -> StateVector {
    let symbol = state.grid().derivative_symbol(order);
    apply_fourier_factors(state, &symbol)
}

/// Norms evaluated by the rectangle rule.
#[derive(Debug, Clone, Copy)]
pub enum NormKind<'a> {
    L2,
    H1,
    Lq(f64),
    /// `sqrt(∫ w |u|²)` for a nonnegative weight sampled on the grid.
    Weighted(&'a [f64]),
}

pub fn compute_norm(state: &StateVector, kind: NormKind<'_>) -> Result<f64> {
    let dx = state.grid().dx();
    match kind {
        NormKind::L2 => Ok(state.norm_l2()),
        NormKind::H1 => {
            let du = apply_derivative(state, Derivative::First);
            Ok((state.mass() + du.mass()).sqrt())
        }
        NormKind::Lq(q) => {
            if !(q >= 1.0 && q.is_finite()) {
                return Err(LabError::Domain(format!("L^q norm needs finite q >= 1, got {q}")));
            }
            let s: f64 = state.values().iter().map(|v| v.norm().powf(q)).sum();
            Ok((dx * s).powf(1.0 / q))
        }
        NormKind::Weighted(w) => {
            state.grid().check_len(w.len(), "weight")?;
            if w.iter().any(|&wi| !(wi >= 0.0)) {
                return Err(LabError::Domain("weight must be nonnegative".into()));
            }
            let s: f64 = state.values().iter().zip(w).map(|(v, &wi)| wi * v.norm_sqr()).sum();
            Ok((dx * s).sqrt())
        }
    }
}

/// `sqrt(∥u∥² + ∥∂_x u∥²)`.
pub fn h1_norm(state: &StateVector) -> f64 {
    let du = apply_derivative(state, Derivative::First);
    (state.mass() + du.mass()).sqrt()
}
