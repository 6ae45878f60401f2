//! Propagation observables: expectations, the Morawetz action `γ`, exterior
//! currents, interaction-Morawetz densities, localization functionals, the
//! weighted Ladyzhenskaya check and the tensored Morawetz diagnostic.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Nonlinearity, Observer};
use crate::error::{LabError, Result};
use crate::microlocal::operator::LinearOperator;
use crate::microlocal::profile::{CutoffProfile, Orientation};
use crate::potential::PotentialField;
use crate::spectral::{apply_derivative, Derivative, Grid, StateVector};

/// `sgn(x)` with `sgn(0) = 0`.
#[inline]
pub fn sgn0(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `⟨B u, u⟩`.
pub fn expectation(state: &StateVector, op: &dyn LinearOperator) -> Complex64 {
    op.apply(state).inner(state)
}

/// `γu = (sgn(x)∂_x + ∂_x sgn(x)) u / (2i)`.
pub fn apply_gamma(state: &StateVector) -> StateVector {
    let x = state.grid().x();
    let s: Vec<f64> = x.iter().map(|&xi| sgn0(xi)).collect();
    let du = apply_derivative(state, Derivative::First).multiply_real(&s);
    let dsu = apply_derivative(&state.multiply_real(&s), Derivative::First);
    (&du + &dsu).scaled(Complex64::new(0.0, -0.5))
}

/// `⟨γ⟩ = ∫ sgn(x) Im(ū ∂_x u) dx`.
pub fn morawetz_action(state: &StateVector) -> f64 {
    let du = apply_derivative(state, Derivative::First);
    momentum_flux(state, &du, sgn0)
}

fn momentum_flux(state: &StateVector, du: &StateVector, weight: impl Fn(f64) -> f64) -> f64 {
    let x = state.grid().x();
    let s: f64 = state
        .values()
        .iter()
        .zip(du.values())
        .zip(x)
        .map(|((u, d), &xi)| weight(xi) * (u.conj() * d).im)
        .sum();
    s * state.grid().dx()
}

/// Samples of `F(|x|/A)` with the given orientation.
pub fn space_cutoff(grid: &Grid, profile: CutoffProfile, orientation: Orientation, scale: f64) -> Vec<f64> {
    grid.x()
        .iter()
        .map(|&x| profile.eval(orientation, x.abs() / scale))
        .collect()
}

fn exterior(grid: &Grid, profile: CutoffProfile, scale: f64) -> Vec<f64> {
    space_cutoff(grid, profile, Orientation::AtLeast, scale)
}

/// A value together with non-fatal notes about the parameter range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Flagged<T> {
    pub value: T,
    pub warnings: Vec<String>,
}

fn check_time(t: f64) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        Err(LabError::Domain(format!("exterior observables need t >= 1, got {t}")))
    }
}

fn check_exponent(name: &str, v: f64, lower: f64, warnings: &mut Vec<String>) -> Result<()> {
    if !(v > 0.0 && v < 1.0) {
        return Err(LabError::Domain(format!("{name} must lie in (0, 1), got {v}")));
    }
    if v <= lower {
        warnings.push(format!("{name} = {v} is outside the proved range {name} > {lower:.4}"));
    }
    Ok(())
}

/// `⟨F γ F⟩` with `F = F(|x| ≥ t^β)`.
pub fn exterior_morawetz_current(
    state: &StateVector,
    t: f64,
    beta: f64,
    profile: CutoffProfile,
) -> Result<Flagged<f64>> {
    let mut warnings = Vec::new();
    check_exponent("beta", beta, 1.0 / 3.0, &mut warnings)?;
    check_time(t)?;
    let f = exterior(state.grid(), profile, t.powf(beta));
    Ok(Flagged {
        value: morawetz_action(&state.multiply_real(&f)),
        warnings,
    })
}

/// Spectral `∂_x |u|²`.
pub fn modulus_gradient(state: &StateVector) -> Vec<f64> {
    let rho = StateVector::from_parts(
        state.grid(),
        state
            .values()
            .iter()
            .map(|v| Complex64::new(v.norm_sqr(), 0.0))
            .collect(),
    );
    apply_derivative(&rho, Derivative::First)
        .values()
        .iter()
        .map(|v| v.re)
        .collect()
}

/// Relative sup-distance between `∂_x|u|²` (spectral) and `2 Re(ū ∂_x u)`.
pub fn modulus_gradient_discrepancy(state: &StateVector) -> f64 {
    let g = modulus_gradient(state);
    let du = apply_derivative(state, Derivative::First);
    let alt = state
        .values()
        .iter()
        .zip(du.values())
        .map(|(u, d)| 2.0 * (u.conj() * d).re);
    let scale = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let diff = g.iter().zip(alt).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

/// Exterior interaction-Morawetz densities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteractionDensities {
    /// `∥F ∂_x|u|²∥²`.
    pub grad_density: f64,
    /// `∥F^{2/(p+3)} u∥^{p+3}_{L^{p+3}} = ∫ F² |u|^{p+3}`.
    pub lp_density: f64,
}

pub fn interaction_morawetz_densities(
    state: &StateVector,
    t: f64,
    beta: f64,
    p: f64,
    profile: CutoffProfile,
) -> Result<Flagged<InteractionDensities>> {
    let mut warnings = Vec::new();
    check_exponent("beta", beta, 1.0 / 3.0, &mut warnings)?;
    check_time(t)?;
    if !(p >= 1.0) {
        return Err(LabError::Domain(format!("nonlinearity power must be >= 1, got {p}")));
    }
    let f = exterior(state.grid(), profile, t.powf(beta));
    Ok(Flagged {
        value: densities_with(state, &f, p),
        warnings,
    })
}

fn densities_with(state: &StateVector, f: &[f64], p: f64) -> InteractionDensities {
    let dx = state.grid().dx();
    let g = modulus_gradient(state);
    let grad_density = dx * g.iter().zip(f).map(|(gi, fi)| (fi * gi).powi(2)).sum::<f64>();
    let q = p + 3.0;
    let lp_density = dx
        * state
            .values()
            .iter()
            .zip(f)
            .map(|(u, fi)| fi * fi * u.norm().powf(q))
            .sum::<f64>();
    InteractionDensities {
        grad_density,
        lp_density,
    }
}

/// Exponents of the exterior regions `|x| ≥ t^β`, `t^κ`, `t^μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LocalizationExponents {
    pub beta: f64,
    pub kappa: f64,
    pub mu: f64,
}

impl LocalizationExponents {
    /// Positive exponents are accepted; those outside the theorem ranges
    /// (`β > 1/3`, `κ > 1/2`, `μ > 1/3`) are reported as warnings.
    pub fn check(&self) -> Result<Vec<String>> {
        let mut w = Vec::new();
        for (name, v, lower) in [
            ("beta", self.beta, 1.0 / 3.0),
            ("kappa", self.kappa, 0.5),
            ("mu", self.mu, 1.0 / 3.0),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(LabError::Domain(format!("{name} must be positive, got {v}")));
            }
            if v <= lower {
                w.push(format!("{name} = {v} is outside the proved range {name} > {lower:.4}"));
            }
        }
        Ok(w)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalizationFunctionals {
    /// `∫ |x| |u|²`.
    pub abs_moment: f64,
    /// `∥F(|x| ≥ t^κ) u∥`.
    pub exterior_mass: f64,
    /// `∥F(|x| ≥ t^μ) ∂_x u∥`.
    pub exterior_energy: f64,
    /// `max_x F²(|x| ≥ t^β) |u|²`.
    pub linfty_weighted: f64,
}

pub fn abs_moment(state: &StateVector) -> f64 {
    state
        .values()
        .iter()
        .zip(state.grid().x())
        .map(|(u, x)| x.abs() * u.norm_sqr())
        .sum::<f64>()
        * state.grid().dx()
}

/// Localization functionals at time `t > 0`.
pub fn localization_functionals(
    state: &StateVector,
    t: f64,
    exponents: LocalizationExponents,
    profile: CutoffProfile,
) -> Result<Flagged<LocalizationFunctionals>> {
    let warnings = exponents.check()?;
    if !(t > 0.0 && t.is_finite()) {
        return Err(LabError::Domain(format!(
            "localization functionals need t > 0, got {t}"
        )));
    }
    let du = apply_derivative(state, Derivative::First);
    Ok(Flagged {
        value: localization_with(state, &du, t, exponents, profile),
        warnings,
    })
}

fn localization_with(
    state: &StateVector,
    du: &StateVector,
    t: f64,
    e: LocalizationExponents,
    profile: CutoffProfile,
) -> LocalizationFunctionals {
    let grid = state.grid();
    let fk = exterior(grid, profile, t.powf(e.kappa));
    let fm = exterior(grid, profile, t.powf(e.mu));
    let fb = exterior(grid, profile, t.powf(e.beta));
    LocalizationFunctionals {
        abs_moment: abs_moment(state),
        exterior_mass: state.multiply_real(&fk).norm_l2(),
        exterior_energy: du.multiply_real(&fm).norm_l2(),
        linfty_weighted: state
            .values()
            .iter()
            .zip(&fb)
            .fold(0.0f64, |m, (u, f)| m.max(f * f * u.norm_sqr())),
    }
}

/// `∥∂_x u∥² + ∫ V |u|² + 2/(p+1) ∫ |u|^{p+1}` with `V` sampled on the grid.
pub fn energy(state: &StateVector, potential: &[f64], nonlin: Nonlinearity) -> f64 {
    let du = apply_derivative(state, Derivative::First);
    energy_with(state, &du, potential, nonlin)
}

fn energy_with(state: &StateVector, du: &StateVector, potential: &[f64], nonlin: Nonlinearity) -> f64 {
    let dx = state.grid().dx();
    let pot: f64 = state
        .values()
        .iter()
        .zip(potential)
        .map(|(u, v)| v * u.norm_sqr())
        .sum();
    let nl = if nonlin.enabled {
        let q = nonlin.p + 1.0;
        2.0 / q * state.values().iter().map(|u| u.norm().powf(q)).sum::<f64>()
    } else {
        0.0
    };
    du.mass() + dx * (pot + nl)
}

/// Configuration of the per-sample observables.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableConfig {
    pub exponents: LocalizationExponents,
    pub profile: CutoffProfile,
    /// Running integrals accumulate over intervals with both ends `≥ integral_start`.
    pub integral_start: f64,
}

impl ObservableConfig {
    pub fn new(exponents: LocalizationExponents, profile: CutoffProfile) -> ObservableConfig {
        ObservableConfig {
            exponents,
            profile,
            integral_start: 1.0,
        }
    }
}

/// All diagnostics of one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObservableSample {
    pub t: f64,
    pub mass: f64,
    pub energy: f64,
    pub h1_norm: f64,
    pub morawetz_action: f64,
    pub exterior_current: f64,
    pub im_density_grad: f64,
    pub im_density_lp: f64,
    pub abs_moment: f64,
    pub exterior_mass: f64,
    pub exterior_energy: f64,
    pub linfty_weighted: f64,
}

impl ObservableSample {
    pub fn is_finite(&self) -> bool {
        self.values().iter().all(|v| v.is_finite())
    }

    /// Field values in the fixed column order of [`ObservableSample::COLUMNS`].
    pub fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.mass,
            self.energy,
            self.h1_norm,
            self.morawetz_action,
            self.exterior_current,
            self.im_density_grad,
            self.im_density_lp,
            self.abs_moment,
            self.exterior_mass,
            self.exterior_energy,
            self.linfty_weighted,
        ]
    }

    pub const COLUMNS: [&'static str; 12] = [
        "t",
        "mass",
        "energy",
        "h1",
        "morawetz_action",
        "ext_current",
        "im_grad",
        "im_lp",
        "abs_moment",
        "ext_mass_kappa",
        "ext_energy_mu",
        "linfty_weighted",
    ];
}

/// Computes every diagnostic of `state` at time `t`.
///
/// Exterior cutoff scales use `max(t, 1)`, so samples before `t = 1` see the
/// `t = 1` regions.
pub fn compute_sample(
    state: &StateVector,
    t: f64,
    potential: &PotentialField,
    nonlin: Nonlinearity,
    cfg: &ObservableConfig,
) -> ObservableSample {
    let grid = state.grid();
    let tau = t.max(1.0);
    let du = apply_derivative(state, Derivative::First);
    let v = potential.at(t);
    let loc = localization_with(state, &du, tau, cfg.exponents, cfg.profile);
    let fb = exterior(grid, cfg.profile, tau.powf(cfg.exponents.beta));
    let p = if nonlin.enabled { nonlin.p } else { nonlin.p.max(1.0) };
    let dens = densities_with(state, &fb, p);
    ObservableSample {
        t,
        mass: state.mass(),
        energy: energy_with(state, &du, &v, nonlin),
        h1_norm: (state.mass() + du.mass()).sqrt(),
        morawetz_action: momentum_flux(state, &du, sgn0),
        exterior_current: morawetz_action(&state.multiply_real(&fb)),
        im_density_grad: dens.grad_density,
        im_density_lp: dens.lp_density,
        abs_moment: loc.abs_moment,
        exterior_mass: loc.exterior_mass,
        exterior_energy: loc.exterior_energy,
        linfty_weighted: loc.linfty_weighted,
    }
}

/// Time-ordered samples plus running trapezoid integrals.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub samples: Vec<ObservableSample>,
    /// `∫ (im_density_grad + im_density_lp) dt` up to each sample.
    pub im_running: Vec<f64>,
    /// `∫ linfty_weighted^q dt` up to each sample, `q = 4(p+1)/(p+3)`.
    pub linfty_q_running: Vec<f64>,
    pub linfty_q: f64,
    pub integral_start: f64,
}

impl ObservableSeries {
    pub fn new(p: f64, integral_start: f64) -> ObservableSeries {
        ObservableSeries {
            samples: Vec::new(),
            im_running: Vec::new(),
            linfty_q_running: Vec::new(),
            linfty_q: 4.0 * (p + 1.0) / (p + 3.0),
            integral_start,
        }
    }

    pub fn push(&mut self, s: ObservableSample) -> Result<()> {
        if !s.is_finite() {
            return Err(LabError::Blowup {
                t: s.t,
                detail: "non-finite observable".into(),
            });
        }
        let (im, lq) = match self.samples.last() {
            None => (0.0, 0.0),
            Some(prev) => {
                if !(s.t > prev.t) {
                    return Err(LabError::Data(format!(
                        "sample times must increase strictly: {} after {}",
                        s.t, prev.t
                    )));
                }
                let h = s.t - prev.t;
                let active = prev.t >= self.integral_start - 1e-12;
                let q = self.linfty_q;
                let trap = |a: f64, b: f64| if active { 0.5 * h * (a + b) } else { 0.0 };
                (
                    self.im_running.last().unwrap()
                        + trap(
                            prev.im_density_grad + prev.im_density_lp,
                            s.im_density_grad + s.im_density_lp,
                        ),
                    self.linfty_q_running.last().unwrap()
                        + trap(prev.linfty_weighted.powf(q), s.linfty_weighted.powf(q)),
                )
            }
        };
        self.samples.push(s);
        self.im_running.push(im);
        self.linfty_q_running.push(lq);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// Index of the sample nearest to `t`.
    pub fn nearest(&self, t: f64) -> Option<usize> {
        (0..self.samples.len()).min_by(|&a, &b| {
            (self.samples[a].t - t)
                .abs()
                .partial_cmp(&(self.samples[b].t - t).abs())
                .unwrap()
        })
    }

    /// `(t, value)` pairs of one field.
    pub fn column(&self, f: impl Fn(&ObservableSample) -> f64) -> Vec<(f64, f64)> {
        self.samples.iter().map(|s| (s.t, f(s))).collect()
    }

    /// Running trapezoid integral of `t^n · f(sample)` from `integral_start`.
    pub fn running_integral(&self, n: i32, f: impl Fn(&ObservableSample) -> f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.samples.len());
        let mut acc = 0.0;
        for (k, s) in self.samples.iter().enumerate() {
            if k > 0 {
                let prev = &self.samples[k - 1];
                if prev.t >= self.integral_start - 1e-12 {
                    acc += 0.5 * (s.t - prev.t) * (prev.t.powi(n) * f(prev) + s.t.powi(n) * f(s));
                }
            }
            out.push(acc);
        }
        out
    }
}

/// Builds an [`ObservableSeries`] as an observer of `dynamics::evolve`.
pub struct ObservableRecorder {
    pub config: ObservableConfig,
    pub potential: PotentialField,
    pub nonlinearity: Nonlinearity,
    pub series: ObservableSeries,
}

impl ObservableRecorder {
    pub fn new(config: ObservableConfig, potential: PotentialField, nonlinearity: Nonlinearity) -> ObservableRecorder {
        ObservableRecorder {
            series: ObservableSeries::new(nonlinearity.p, config.integral_start),
            config,
            potential,
            nonlinearity,
        }
    }
}

impl Observer for ObservableRecorder {
    fn observe(&mut self, t: f64, state: &StateVector) -> Result<()> {
        let s = compute_sample(state, t, &self.potential, self.nonlinearity, &self.config);
        self.series.push(s)
    }
}

/// One interior point of the Heisenberg check `d/dt⟨|x|⟩ = 2⟨γ⟩`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeisenbergPoint {
    pub t: f64,
    pub d_abs_moment: f64,
    pub twice_gamma: f64,
    /// `|d/dt⟨|x|⟩ − 2⟨γ⟩| / ∥u∥²_{H¹}`.
    pub residual: f64,
}

/// Second-order (nonuniform) centered differences of `⟨|x|⟩` against `2⟨γ⟩`.
pub fn heisenberg_residual(series: &ObservableSeries) -> Result<Vec<HeisenbergPoint>> {
    let s = &series.samples;
    if s.len() < 3 {
        return Err(LabError::Data(format!(
            "Heisenberg check needs at least 3 samples, got {}",
            s.len()
        )));
    }
    Ok(s.windows(3)
        .map(|w| {
            let (h1, h2) = (w[1].t - w[0].t, w[2].t - w[1].t);
            let d = -h2 / (h1 * (h1 + h2)) * w[0].abs_moment
                + (h2 - h1) / (h1 * h2) * w[1].abs_moment
                + h1 / (h2 * (h1 + h2)) * w[2].abs_moment;
            let g2 = 2.0 * w[1].morawetz_action;
            let norm = w[1].h1_norm.powi(2);
            HeisenbergPoint {
                t: w[1].t,
                d_abs_moment: d,
                twice_gamma: g2,
                residual: if norm > 0.0 {
                    (d - g2).abs() / norm
                } else {
                    (d - g2).abs()
                },
            }
        })
        .collect())
}

/// Weighted Ladyzhenskaya check `sup F²|φ|² ≤ 2∥F ∂_x φ∥ ∥F φ∥`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GnsReport {
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

pub const GNS_SLACK: f64 = 1e-9;

/// `weight` must be nonnegative and nondecreasing in `|x|` on each half-line.
pub fn gns_check(state: &StateVector, weight: &[f64]) -> Result<GnsReport> {
    let grid = state.grid();
    if weight.len() != grid.n() {
        return Err(LabError::Config(format!(
            "weight has {} samples, grid has {}",
            weight.len(),
            grid.n()
        )));
    }
    if weight.iter().any(|w| !(*w >= 0.0 && w.is_finite())) {
        return Err(LabError::Precondition("weight must be finite and nonnegative".into()));
    }
    let o = grid.origin_index();
    let tol = 1e-14 * weight.iter().cloned().fold(0.0, f64::max);
    let right_ok = weight[o..].windows(2).all(|w| w[1] >= w[0] - tol);
    let left_ok = weight[..=o].windows(2).all(|w| w[0] >= w[1] - tol);
    if !(right_ok && left_ok) {
        return Err(LabError::Precondition(
            "weight must be nondecreasing in |x| on each half-line".into(),
        ));
    }
    let du = apply_derivative(state, Derivative::First);
    let lhs = state
        .values()
        .iter()
        .zip(weight)
        .fold(0.0f64, |m, (u, w)| m.max(w * w * u.norm_sqr()));
    let rhs = 2.0 * du.multiply_real(weight).norm_l2() * state.multiply_real(weight).norm_l2();
    Ok(GnsReport {
        lhs,
        rhs,
        pass: lhs <= rhs * (1.0 + GNS_SLACK),
    })
}

/// Random band-limited state `g(x) Σ_{|k| ≤ K} c_k e^{iξ_k x}` with Gaussian
/// `c_k` and envelope `g(x) = exp(-(x/width)²)`, so it is negligible near the
/// box edge.
pub fn random_localized_state(grid: &Grid, seed: u64, bandwidth: f64, width: f64) -> StateVector {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = vec![Complex64::new(0.0, 0.0); grid.n()];
    for (c, &xi) in coeffs.iter_mut().zip(grid.wavenumbers()) {
        if xi.abs() <= bandwidth {
            *c = Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5);
        }
    }
    grid.inverse_in_place(&mut coeffs);
    let x = grid.x();
    let values = coeffs
        .iter()
        .zip(x)
        .map(|(c, &xi)| c * (-(xi / width).powi(2)).exp())
        .collect();
    StateVector::from_parts(grid, values)
}

/// Largest grid on which the dense two-variable field is formed.
pub const TENSOR_MAX_N: usize = 256;

/// `⟨F^⊗ γ^⊗ F^⊗⟩` for `U(x, y) = u(x) u(y)` with
/// `γ^⊗ = (sgn(x−y)(∂_x−∂_y) + (∂_x−∂_y) sgn(x−y)) / (2i)` and
/// `F^⊗ = F(|x+y| ≥ 2t^β) F(|x−y| ≤ t^β/10)`.
pub fn tensor_morawetz_diagnostic(state: &StateVector, t: f64, beta: f64, profile: CutoffProfile) -> Result<f64> {
    let grid = state.grid();
    let n = grid.n();
    if n > TENSOR_MAX_N {
        return Err(LabError::Resource(format!(
            "tensor diagnostic forms an n x n field; n = {n} exceeds {TENSOR_MAX_N}"
        )));
    }
    check_time(t)?;
    if !(beta > 0.0 && beta < 1.0) {
        return Err(LabError::Domain(format!("beta must lie in (0, 1), got {beta}")));
    }
    let x = grid.x();
    let tb = t.powf(beta);
    let u = state.values();
    // W[i][j] = F^⊗(x_i, x_j) u(x_i) u(x_j), row-major in i.
    let mut w = vec![Complex64::new(0.0, 0.0); n * n];
    for i in 0..n {
        for j in 0..n {
            let f = profile.ge((x[i] + x[j]).abs() / (2.0 * tb)) * profile.le((x[i] - x[j]).abs() / (tb / 10.0));
            w[i * n + j] = f * u[i] * u[j];
        }
    }
    let symbol = grid.derivative_symbol(Derivative::First);
    let mut dw = vec![Complex64::new(0.0, 0.0); n * n];
    let mut scratch = grid.make_scratch();
    // ∂_x along the first index.
    let mut col = vec![Complex64::new(0.0, 0.0); n];
    for j in 0..n {
        for i in 0..n {
            col[i] = w[i * n + j];
        }
        spectral_apply(grid, &mut col, &symbol, &mut scratch);
        for i in 0..n {
            dw[i * n + j] = col[i];
        }
    }
    // −∂_y along the second index.
    let mut row = vec![Complex64::new(0.0, 0.0); n];
    for i in 0..n {
        row.copy_from_slice(&w[i * n..(i + 1) * n]);
        spectral_apply(grid, &mut row, &symbol, &mut scratch);
        for j in 0..n {
            dw[i * n + j] -= row[j];
        }
    }
    let dx = grid.dx();
    let mut acc = 0.0;
    for i in 0..n {
        for j in 0..n {
            let k = i * n + j;
            acc += sgn0(x[i] - x[j]) * (w[k].conj() * dw[k]).im;
        }
    }
    Ok(acc * dx * dx)
}

fn spectral_apply(grid: &Grid, buf: &mut [Complex64], symbol: &[Complex64], scratch: &mut [Complex64]) {
    grid.forward_with_scratch(buf, scratch);
    for (b, s) in buf.iter_mut().zip(symbol) {
        *b *= s;
    }
    grid.inverse_with_scratch(buf, scratch);
}

/// Sup over `t` of `∥u∥³ ∥u∥_{H¹}`, the scale of the interaction-Morawetz bound.
pub fn interaction_bound_scale(series: &ObservableSeries) -> f64 {
    series
        .samples
        .iter()
        .map(|s| s.mass.sqrt().powi(3) * s.h1_norm)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, ground_state, EvolutionConfig};
    use crate::microlocal::operator::tests::random_vector;
    use crate::microlocal::operator::{ComposedOperator, Primitive, SpaceVariable};
    use crate::potential::{DecayCertificate, PotentialModel};
    use crate::spectral::h1_norm;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn prof() -> CutoffProfile {
        CutoffProfile::default()
    }

    fn packet(grid: &Grid, centre: f64, width: f64, k: f64) -> StateVector {
        StateVector::from_fn(grid, |x| {
            Complex64::from_polar((-((x - centre) / width).powi(2)).exp(), k * x)
        })
    }

    #[test]
    fn identity_expectation_is_mass() {
        let g = Grid::new(256, 20.0).unwrap();
        let u = random_vector(&g, 3);
        let e = expectation(&u, &ComposedOperator::identity());
        assert_relative_eq!(e.re, u.mass(), max_relative = 1e-13);
        assert!(e.im.abs() < 1e-13 * u.mass());
    }

    #[test]
    fn inner_cutoff_expectation_is_mass_for_supported_state() {
        let g = Grid::new(512, 40.0).unwrap();
        let u = packet(&g, 0.0, 1.0, 0.5);
        let op = ComposedOperator::new(vec![Primitive::space(
            prof(),
            Orientation::AtMost,
            SpaceVariable::Abs,
            10.0,
        )])
        .unwrap();
        assert_relative_eq!(expectation(&u, &op).re, u.mass(), max_relative = 1e-13);
    }

    #[test]
    fn symmetric_pipeline_has_real_expectation() {
        // B = A* A for a pipeline A is self-adjoint.
        let g = Grid::new(256, 20.0).unwrap();
        let a = ComposedOperator::new(vec![
            Primitive::space(prof(), Orientation::AtMost, SpaceVariable::Abs, 4.0),
            Primitive::propagation(0.7),
            Primitive::freq(
                prof(),
                Orientation::AtLeast,
                crate::microlocal::operator::FreqVariable::Plus,
                0.5,
            ),
        ])
        .unwrap();
        let b = a.adjoint().compose(&a);
        for seed in 0..5 {
            let u = random_vector(&g, seed);
            let e = expectation(&u, &b);
            assert!(e.im.abs() <= 1e-10 * e.re.abs().max(1e-300), "{e}");
        }
    }

    #[test]
    fn gamma_quadrature_matches_operator_form() {
        let g = Grid::new(512, 30.0).unwrap();
        let u = random_localized_state(&g, 4, 3.0, 6.0);
        let direct = morawetz_action(&u);
        let op = apply_gamma(&u).inner(&u);
        assert_relative_eq!(op.re, direct, max_relative = 1e-11, epsilon = 1e-14);
        assert!(op.im.abs() <= 1e-12 * h1_norm(&u).powi(2));
    }

    #[test]
    fn real_state_has_zero_action() {
        let g = Grid::new(256, 20.0).unwrap();
        let u = StateVector::from_real_fn(&g, |x| (-(x - 1.0).powi(2)).exp());
        assert!(morawetz_action(&u).abs() < 1e-15);
    }

    #[test]
    fn right_packet_action_is_k_times_mass() {
        // Oracle: ∫ sgn(x) k g² dx by direct quadrature of the envelope, fully on x > 0.
        let g = Grid::new(2048, 100.0).unwrap();
        let (k, c, w) = (1.7, 40.0, 3.0);
        let u = packet(&g, c, w, k);
        let oracle: f64 = g
            .x()
            .iter()
            .map(|&x| sgn0(x) * k * (-2.0 * ((x - c) / w).powi(2)).exp())
            .sum::<f64>()
            * g.dx();
        assert!((morawetz_action(&u) - oracle).abs() <= 1e-8);
    }

    #[test]
    fn conjugation_symmetric_state_has_zero_action() {
        // γ commutes with parity and anticommutes with complex conjugation, so
        // ⟨γ⟩ vanishes when u(-x) = conj(u(x)); sgn(0) = 0 makes this exact at x = 0.
        let g = Grid::new(512, 30.0).unwrap();
        let u = StateVector::from_fn(&g, |x| {
            Complex64::from_polar((-(x / 3.0).powi(2)).exp(), 0.8 * x + 0.1 * x.powi(3) / 9.0)
                + Complex64::new(0.2, 0.0) * (-(x * x)).exp()
        });
        assert!(morawetz_action(&u).abs() < 1e-10, "{}", morawetz_action(&u));
    }

    #[test]
    fn parity_even_chirp_is_outgoing() {
        // u = g(x) e^{icx²}, g even: Im(ū ∂u) = 2cx g², so ⟨γ⟩ = 2c ∫|x| g² > 0.
        let g = Grid::new(1024, 30.0).unwrap();
        let c = 0.4;
        let u = StateVector::from_fn(&g, |x| Complex64::from_polar((-(x / 3.0).powi(2)).exp(), c * x * x));
        let oracle: f64 = g
            .x()
            .iter()
            .map(|&x| 2.0 * c * x.abs() * (-2.0 * (x / 3.0).powi(2)).exp())
            .sum::<f64>()
            * g.dx();
        assert_relative_eq!(morawetz_action(&u), oracle, max_relative = 1e-10);
        assert!(oracle > 0.0);
    }

    #[test]
    fn action_is_bounded_by_cauchy_schwarz() {
        let g = Grid::new(512, 30.0).unwrap();
        for seed in 0..10 {
            let u = random_localized_state(&g, seed, 4.0, 5.0);
            let du = apply_derivative(&u, Derivative::First);
            assert!(morawetz_action(&u).abs() <= u.norm_l2() * du.norm_l2() * (1.0 + 1e-12));
        }
    }

    #[test]
    fn exterior_current_cases() {
        let g = Grid::new(4096, 400.0).unwrap();
        let (t, beta) = (100.0, 0.5);
        // Inside |x| ≤ t^β / 2 = 5: annihilated.
        let inner = packet(&g, 0.0, 0.7, 2.0);
        assert!(exterior_morawetz_current(&inner, t, beta, prof()).unwrap().value.abs() < 1e-14);
        // Far outside: ≈ k·mass, and the mirrored incoming packet gives the negative.
        let k = 2.0;
        let out = packet(&g, 150.0, 5.0, k);
        let oracle: f64 = g
            .x()
            .iter()
            .map(|&x| k * (-2.0 * ((x - 150.0) / 5.0).powi(2)).exp())
            .sum::<f64>()
            * g.dx();
        let j_out = exterior_morawetz_current(&out, t, beta, prof()).unwrap();
        assert!(
            (j_out.value - oracle).abs() <= 1e-8 * oracle,
            "{} vs {oracle}",
            j_out.value
        );
        assert!(j_out.warnings.is_empty());
        let inc = packet(&g, -150.0, 5.0, k);
        let j_in = exterior_morawetz_current(&inc, t, beta, prof()).unwrap().value;
        assert_relative_eq!(j_in, -j_out.value, max_relative = 1e-12);
        // Range handling.
        assert!(exterior_morawetz_current(&out, t, 0.3, prof()).unwrap().warnings.len() == 1);
        assert!(matches!(
            exterior_morawetz_current(&out, t, 1.2, prof()),
            Err(LabError::Domain(_))
        ));
    }

    #[test]
    fn exterior_current_tends_to_action_as_scale_shrinks() {
        let g = Grid::new(1024, 60.0).unwrap();
        let u = random_localized_state(&g, 11, 3.0, 8.0);
        let full = morawetz_action(&u);
        let gaps: Vec<f64> = [8.0, 2.0, 0.5, 0.1, 0.01]
            .iter()
            .map(|&scale| (morawetz_action(&u.multiply_real(&exterior(&g, prof(), scale))) - full).abs())
            .collect();
        assert!(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-14), "{gaps:?}");
        assert!(gaps[4] < 1e-3 * full.abs().max(1e-3), "{gaps:?}");
    }

    #[test]
    fn interaction_densities_cases() {
        let g = Grid::new(2048, 100.0).unwrap();
        let (t, beta, p) = (16.0, 0.5, 7.0);
        let inner = packet(&g, 0.0, 0.5, 1.0);
        let d = interaction_morawetz_densities(&inner, t, beta, p, prof())
            .unwrap()
            .value;
        assert!(d.grad_density < 1e-20 && d.lp_density < 1e-20);
        // |u|² = e^{-(x-x₀)²}: ∫ (∂ e^{-(x-x₀)²})² dx = ∫ 4y² e^{-2y²} dy = sqrt(π/2).
        let x0 = 40.0;
        let u = StateVector::from_real_fn(&g, |x| (-0.5 * (x - x0).powi(2)).exp());
        let d = interaction_morawetz_densities(&u, t, beta, p, prof()).unwrap().value;
        assert_relative_eq!(
            d.grad_density,
            (std::f64::consts::PI / 2.0).sqrt(),
            max_relative = 1e-10
        );
        let d2 = interaction_morawetz_densities(&u.scaled(Complex64::new(2.0, 0.0)), t, beta, p, prof())
            .unwrap()
            .value;
        assert_relative_eq!(d2.grad_density, 16.0 * d.grad_density, max_relative = 1e-12);
        assert_relative_eq!(d2.lp_density, 2f64.powf(p + 3.0) * d.lp_density, max_relative = 1e-12);
    }

    #[test]
    fn modulus_gradient_formulations_agree_on_smooth_states() {
        let g = Grid::new(1024, 40.0).unwrap();
        for u in [packet(&g, 3.0, 2.0, 1.5), random_localized_state(&g, 8, 2.0, 6.0)] {
            assert!(
                modulus_gradient_discrepancy(&u) <= 1e-8,
                "{}",
                modulus_gradient_discrepancy(&u)
            );
        }
    }

    #[test]
    fn localization_cases() {
        let g = Grid::new(8192, 25.0).unwrap();
        let e = LocalizationExponents {
            beta: 0.4,
            kappa: 0.6,
            mu: 0.4,
        };
        // Unit-mass Gaussian with standard deviation s of |u|²: E|x| = s·sqrt(2/π).
        let s = 0.3;
        let amp = (2.0 * std::f64::consts::PI * s * s).powf(-0.25);
        let u = StateVector::from_real_fn(&g, |x| amp * (-(x * x) / (4.0 * s * s)).exp());
        let f = localization_functionals(&u, 2.0, e, prof()).unwrap();
        assert!(f.warnings.is_empty());
        // The kink of |x| at the origin limits the rectangle rule to O(dx²).
        assert_relative_eq!(
            f.value.abs_moment,
            s * (2.0 / std::f64::consts::PI).sqrt(),
            max_relative = 1e-3
        );
        // At t = 2 the exterior regions start near 5 standard deviations.
        assert!(f.value.exterior_mass < 1e-5 && f.value.exterior_energy < 1e-3 && f.value.linfty_weighted < 1e-8);
        // Translation by a ≫ width: E|x + a| → a.
        let mut last = 0.0;
        for a in [1.0, 5.0, 20.0] {
            let v = StateVector::from_real_fn(&g, |x| amp * (-((x - a) * (x - a)) / (4.0 * s * s)).exp());
            let m = abs_moment(&v);
            assert!(m > last);
            last = m;
            if a >= 5.0 {
                assert_relative_eq!(m, a, max_relative = 1e-10);
            }
        }
        // Vanishing exponents: the cutoff scale t^κ → 1 but with t tiny the
        // exterior covers everything that matters for a far packet.
        let far = packet(&g, 15.0, 1.0, 0.0);
        let tiny = LocalizationExponents {
            beta: 1e-3,
            kappa: 1e-3,
            mu: 1e-3,
        };
        let f = localization_functionals(&far, 1.0, tiny, prof()).unwrap();
        assert_relative_eq!(f.value.exterior_mass, far.norm_l2(), max_relative = 1e-12);
        assert_eq!(f.warnings.len(), 3);
    }

    #[test]
    fn gns_simple_cases() {
        let g = Grid::new(1024, 40.0).unwrap();
        let ones = vec![1.0; g.n()];
        let u = StateVector::from_real_fn(&g, |x| (-(x * x)).exp());
        let r = gns_check(&u, &ones).unwrap();
        assert!(r.pass && r.lhs > 0.0);
        let r = gns_check(&StateVector::zeros(&g), &ones).unwrap();
        assert!(r.pass && r.lhs == 0.0 && r.rhs == 0.0);
        let bad: Vec<f64> = g.x().iter().map(|x| (-(x * x)).exp()).collect();
        assert!(matches!(gns_check(&u, &bad), Err(LabError::Precondition(_))));
    }

    #[test]
    fn gns_holds_on_random_states() {
        let g = Grid::new(512, 40.0).unwrap();
        let f = space_cutoff(&g, prof(), Orientation::AtLeast, 3.0);
        for seed in 0..100 {
            let u = random_localized_state(&g, seed, 4.0, 8.0);
            let r = gns_check(&u, &f).unwrap();
            assert!(r.pass, "seed {seed}: {r:?}");
        }
    }

    #[test]
    fn energy_of_plane_wave_and_potential() {
        let g = Grid::new(256, 10.0).unwrap();
        let k = g.wavenumber_spacing() * 3.0;
        let u = StateVector::from_fn(&g, |x| Complex64::from_polar(0.5, k * x));
        let v = vec![2.0; g.n()];
        let nl = Nonlinearity::new(3.0, true).unwrap();
        // mass 0.25·20 = 5: k²·5 + 2·5 + (2/4)·0.0625·20.
        assert_relative_eq!(
            energy(&u, &v, nl),
            k * k * 5.0 + 10.0 + 0.5 * 0.0625 * 20.0,
            max_relative = 1e-12
        );
    }

    #[test]
    fn tensor_diagnostic_trivial_cases() {
        let g = Grid::new(128, 40.0).unwrap();
        let real = StateVector::from_real_fn(&g, |x| (-((x - 20.0) / 3.0).powi(2)).exp());
        assert!(tensor_morawetz_diagnostic(&real, 16.0, 0.5, prof()).unwrap().abs() < 1e-14);
        let inner = packet(&g, 0.0, 0.4, 1.0);
        assert!(tensor_morawetz_diagnostic(&inner, 16.0, 0.5, prof()).unwrap().abs() < 1e-14);
        let big = Grid::new(512, 40.0).unwrap();
        assert!(matches!(
            tensor_morawetz_diagnostic(&StateVector::zeros(&big), 16.0, 0.5, prof()),
            Err(LabError::Resource(_))
        ));
    }

    /// Dense spectral differentiation matrix `D_jk = (1/n) Σ_m iξ_m e^{iξ_m (x_j − x_k)}`
    /// (Nyquist omitted), summed directly.
    fn dense_derivative(g: &Grid) -> Vec<Complex64> {
        let n = g.n();
        let x = g.x();
        let mut d = vec![Complex64::new(0.0, 0.0); n * n];
        let modes: Vec<f64> = (-(n as i64) / 2 + 1..(n as i64) / 2)
            .map(|m| m as f64 * g.wavenumber_spacing())
            .collect();
        for j in 0..n {
            for k in 0..n {
                let s: Complex64 = modes
                    .iter()
                    .map(|&xi| Complex64::new(0.0, xi) * Complex64::from_polar(1.0, xi * (x[j] - x[k])))
                    .sum();
                d[j * n + k] = s / n as f64;
            }
        }
        d
    }

    #[test]
    fn tensor_diagnostic_matches_double_sum_oracle() {
        let g = Grid::new(128, 64.0).unwrap();
        // t^β = 8: strip |x−y| ≲ 0.8..1.6, exterior |x+y| ≳ 16..32.
        let (t, beta) = (16.0, 0.75);
        // Chirped packets: a pure e^{ik(x+y)} phase is annihilated by ∂_x − ∂_y.
        // The left packet is the parity image of the right one, so both are outgoing.
        let x0 = 30.0;
        let chirp = |y: f64| 0.8 * y + 0.05 * y * y;
        let u = StateVector::from_fn(&g, |x| {
            Complex64::from_polar((-((x - x0) / 4.0).powi(2)).exp(), chirp(x - x0))
                + Complex64::from_polar((-((x + x0) / 4.0).powi(2)).exp(), chirp(-x - x0))
        });
        let got = tensor_morawetz_diagnostic(&u, t, beta, prof()).unwrap();

        let n = g.n();
        let x = g.x();
        let tb = t.powf(beta);
        let uv = u.values();
        let w: Vec<Complex64> = (0..n * n)
            .map(|k| {
                let (i, j) = (k / n, k % n);
                prof().ge((x[i] + x[j]).abs() / (2.0 * tb))
                    * prof().le((x[i] - x[j]).abs() / (tb / 10.0))
                    * uv[i]
                    * uv[j]
            })
            .collect();
        let d = dense_derivative(&g);
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let mut dxw = Complex64::new(0.0, 0.0);
                let mut dyw = Complex64::new(0.0, 0.0);
                for m in 0..n {
                    dxw += d[i * n + m] * w[m * n + j];
                    dyw += d[j * n + m] * w[i * n + m];
                }
                acc += sgn0(x[i] - x[j]) * (w[i * n + j].conj() * (dxw - dyw)).im;
            }
        }
        let oracle = acc * g.dx() * g.dx();
        assert!(oracle > 1e-3, "oracle should be nontrivial: {oracle}");
        assert_relative_eq!(got, oracle, max_relative = 1e-9);
    }

    #[test]
    fn series_running_integrals_and_order() {
        let mut s = ObservableSeries::new(7.0, 1.0);
        let mk = |t: f64, dens: f64| ObservableSample {
            t,
            mass: 1.0,
            energy: 1.0,
            h1_norm: 1.0,
            morawetz_action: 0.0,
            exterior_current: 0.0,
            im_density_grad: dens,
            im_density_lp: 0.0,
            abs_moment: 0.0,
            exterior_mass: 0.0,
            exterior_energy: 0.0,
            linfty_weighted: dens,
        };
        s.push(mk(0.5, 9.0)).unwrap();
        s.push(mk(1.0, 1.0)).unwrap();
        s.push(mk(2.0, 1.0)).unwrap();
        s.push(mk(4.0, 3.0)).unwrap();
        assert_eq!(s.im_running, vec![0.0, 0.0, 1.0, 5.0]);
        assert_eq!(
            s.running_integral(1, |x| x.im_density_grad),
            vec![0.0, 0.0, 1.5, 1.5 + 14.0]
        );
        assert!(s.push(mk(4.0, 1.0)).is_err());
        let mut bad = mk(5.0, 1.0);
        bad.energy = f64::NAN;
        assert!(matches!(s.push(bad), Err(LabError::Blowup { .. })));
    }

    #[test]
    fn heisenberg_identity_on_free_and_nonlinear_runs() {
        let g = Grid::new(2048, 100.0).unwrap();
        let u0 = packet(&g, 2.0, 2.0, 1.0);
        let well = PotentialModel::sech2_well(
            -1.0,
            1.0,
            DecayCertificate {
                sigma: 2.0,
                constant: 10.0,
            },
        )
        .unwrap();
        for (model, nl) in [
            (PotentialModel::none(), Nonlinearity::off()),
            (well.clone(), Nonlinearity::off()),
            (well, Nonlinearity::new(7.0, true).unwrap()),
        ] {
            let cfg = ObservableConfig::new(
                LocalizationExponents {
                    beta: 0.4,
                    kappa: 0.6,
                    mu: 0.4,
                },
                prof(),
            );
            let field = PotentialField::new(&model, &g).unwrap();
            let mut rec = ObservableRecorder::new(cfg, field, nl);
            let ec = EvolutionConfig::new(1e-3, 0.0, 2.0, 10);
            evolve(&u0, &ec, &model, nl, &mut [&mut rec]).unwrap();
            let h = heisenberg_residual(&rec.series).unwrap();
            let worst = h.iter().map(|p| p.residual).fold(0.0, f64::max);
            assert!(worst <= 1e-3, "residual {worst}");
            let m0 = rec.series.samples[0].mass;
            assert!(rec.series.samples.iter().all(|s| (s.mass - m0).abs() <= 1e-10 * m0));
        }
    }

    #[test]
    fn ground_state_is_stationary_for_heisenberg() {
        let g = Grid::new(512, 30.0).unwrap();
        let model = PotentialModel::sech2_well(
            -1.0,
            1.0,
            DecayCertificate {
                sigma: 2.0,
                constant: 10.0,
            },
        )
        .unwrap();
        let gs = ground_state(&model, &g, 1.0).unwrap();
        let cfg = ObservableConfig::new(
            LocalizationExponents {
                beta: 0.4,
                kappa: 0.6,
                mu: 0.4,
            },
            prof(),
        );
        let mut rec = ObservableRecorder::new(cfg, PotentialField::new(&model, &g).unwrap(), Nonlinearity::off());
        evolve(
            &gs.state,
            &EvolutionConfig::new(1e-3, 0.0, 0.5, 10),
            &model,
            Nonlinearity::off(),
            &mut [&mut rec],
        )
        .unwrap();
        // The split-step flow breathes at O(dt²) around the exact eigenvector.
        for p in heisenberg_residual(&rec.series).unwrap() {
            assert!(p.d_abs_moment.abs() < 1e-5 && p.twice_gamma.abs() < 1e-5, "{p:?}");
            assert!(p.residual < 1e-6, "{p:?}");
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn gamma_is_real_and_bounded(seed in any::<u64>()) {
            let g = Grid::new(256, 25.0).unwrap();
            let u = random_localized_state(&g, seed, 3.0, 5.0);
            let e = apply_gamma(&u).inner(&u);
            prop_assert!(e.im.abs() <= 1e-12 * h1_norm(&u).powi(2));
            let du = apply_derivative(&u, Derivative::First);
            prop_assert!(e.re.abs() <= u.norm_l2() * du.norm_l2() * (1.0 + 1e-10));
        }

        #[test]
        fn exterior_mass_is_at_most_mass(seed in any::<u64>(), t in 1.0f64..50.0) {
            let g = Grid::new(256, 25.0).unwrap();
            let u = random_localized_state(&g, seed, 3.0, 8.0);
            let e = LocalizationExponents { beta: 0.4, kappa: 0.6, mu: 0.4 };
            let f = localization_functionals(&u, t, e, CutoffProfile::default()).unwrap().value;
            prop_assert!(f.exterior_mass <= u.norm_l2() * (1.0 + 1e-12));
        }
    }
}
