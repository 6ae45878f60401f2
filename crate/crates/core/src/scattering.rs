//! Free-channel wave operator `u₊ = lim e^{-itΔ} J_free(t) u(t)`, the
//! localized remainder `u_loc = u − e^{itΔ}u₊`, its channel split, and the
//! nonradiative classification of a run.

use serde::{Deserialize, Serialize};

use crate::dynamics::Trajectory;
use crate::error::{LabError, Result};
pub use crate::fit::{fit_spreading_exponent, ExponentFit};
use crate::microlocal::channels::{free_channel_profile_operator, split_in_out_low};
use crate::microlocal::operator::LinearOperator;
use crate::microlocal::profile::CutoffProfile;
use crate::microlocal::profile::Orientation;
use crate::observables::{localization_functionals, morawetz_action, space_cutoff, LocalizationExponents};
use crate::spectral::{apply_derivative, apply_free_propagator, h1_norm, Derivative, StateVector};

/// `α₀ = (p−5)(p+2) / (4(p+1))`.
pub fn alpha_zero(p: f64) -> f64 {
    (p - 5.0) * (p + 2.0) / (4.0 * (p + 1.0))
}

fn default_cauchy_tolerance() -> f64 {
    1e-2
}

/// Channel exponents and sampling of the wave-operator limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WaveOpConfig {
    pub alpha: f64,
    pub delta: f64,
    /// Increasing times `≥ 1` at which `w(t)` is formed.
    pub sample_times: Vec<f64>,
    /// Convergence threshold relative to the norm of the initial data.
    #[serde(default = "default_cauchy_tolerance")]
    pub cauchy_tolerance: f64,
    /// Reject exponents outside the theorem range and judge convergence in `H¹`.
    #[serde(default)]
    pub theorem_compliant: bool,
}

/// Outcome of the exponent-range checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Compliance {
    pub compliant: bool,
    pub notes: Vec<String>,
}

impl WaveOpConfig {
    /// Structural checks plus the theorem range `α < α₀`, `δ < min(1/2, α)`.
    /// The `α₀` bound comes from the nonlinear term and is skipped when `p` is
    /// `None` (linear flow).
    pub fn validate(&self, p: Option<f64>) -> Result<Compliance> {
        for (name, v) in [("alpha", self.alpha), ("delta", self.delta)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(LabError::Config(format!("{name} must lie in (0, 1), got {v}")));
            }
        }
        if self.sample_times.len() < 2 {
            return Err(LabError::Config("wave operator needs at least two sample times".into()));
        }
        if self.sample_times.iter().any(|t| !(*t >= 1.0 && t.is_finite())) {
            return Err(LabError::Config("sample times must be finite and >= 1".into()));
        }
        if self.sample_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(LabError::Config("sample times must increase strictly".into()));
        }
        if !(self.cauchy_tolerance > 0.0) {
            return Err(LabError::Config(format!(
                "cauchy_tolerance must be positive, got {}",
                self.cauchy_tolerance
            )));
        }
        let mut notes = Vec::new();
        if let Some(p) = p {
            let a0 = alpha_zero(p);
            if !(self.alpha < a0) {
                notes.push(format!(
                    "alpha = {} violates alpha < alpha_0 = (p-5)(p+2)/(4(p+1)) = {a0:.6} at p = {p}",
                    self.alpha
                ));
            }
        }
        let dmax = self.alpha.min(0.5);
        if !(self.delta < dmax) {
            notes.push(format!(
                "delta = {} violates delta < min(1/2, alpha) = {dmax}",
                self.delta
            ));
        }
        if self.theorem_compliant && !notes.is_empty() {
            return Err(LabError::Config(notes.join("; ")));
        }
        Ok(Compliance {
            compliant: notes.is_empty(),
            notes,
        })
    }
}

/// `u₊ = w(t_max)` and the Cauchy increments of `w`.
#[derive(Debug, Clone)]
pub struct ScatteringResult {
    pub u_plus: StateVector,
    /// Actual snapshot times used (nearest step to each requested time).
    pub times: Vec<f64>,
    pub w_norms: Vec<f64>,
    /// `∥w(t_{k+1}) − w(t_k)∥_{L²}`.
    pub cauchy_l2: Vec<f64>,
    /// `∥w(t_{k+1}) − w(t_k)∥_{H¹}`.
    pub cauchy_h1: Vec<f64>,
    pub initial_l2: f64,
    pub initial_h1: f64,
    pub converged: bool,
    /// Whether convergence was judged on the `H¹` increments.
    pub converged_in_h1: bool,
    pub compliance: Compliance,
}

impl ScatteringResult {
    /// Increments used for the convergence decision.
    pub fn increments(&self) -> &[f64] {
        if self.converged_in_h1 {
            &self.cauchy_h1
        } else {
            &self.cauchy_l2
        }
    }
}

/// `w(t) = F(|x| ≤ t^α) e^{-itΔ} F(|D| ≥ t^{-δ}) u(t)`.
pub fn free_channel_profile(
    state: &StateVector,
    t: f64,
    alpha: f64,
    delta: f64,
    profile: CutoffProfile,
) -> Result<StateVector> {
    Ok(free_channel_profile_operator(t, alpha, delta, profile)?.apply(state))
}

pub fn extract_wave_operator(
    trajectory: &Trajectory,
    cfg: &WaveOpConfig,
    profile: CutoffProfile,
) -> Result<ScatteringResult> {
    let nl = trajectory.nonlinearity;
    let compliance = cfg.validate(nl.enabled.then_some(nl.p))?;
    let mut times = Vec::new();
    let mut ws = Vec::new();
    for &t in &cfg.sample_times {
        let snap = trajectory
            .snapshot_at(t)
            .ok_or_else(|| LabError::Data(format!("trajectory holds no state at sample time {t}")))?;
        if (snap.t - t).abs() > trajectory.config.dt {
            return Err(LabError::Data(format!("nearest stored state to {t} is at {}", snap.t)));
        }
        ws.push(free_channel_profile(
            &snap.state,
            snap.t,
            cfg.alpha,
            cfg.delta,
            profile,
        )?);
        times.push(snap.t);
    }
    let u0 = &trajectory.snapshots[0].state;
    let (initial_l2, initial_h1) = (u0.norm_l2(), h1_norm(u0));
    let mut cauchy_l2 = Vec::new();
    let mut cauchy_h1 = Vec::new();
    for pair in ws.windows(2) {
        let d = &pair[1] - &pair[0];
        cauchy_l2.push(d.norm_l2());
        cauchy_h1.push(h1_norm(&d));
    }
    let use_h1 = cfg.theorem_compliant;
    let converged = if use_h1 {
        *cauchy_h1.last().unwrap() <= cfg.cauchy_tolerance * initial_h1
    } else {
        *cauchy_l2.last().unwrap() <= cfg.cauchy_tolerance * initial_l2
    };
    Ok(ScatteringResult {
        w_norms: ws.iter().map(|w| w.norm_l2()).collect(),
        u_plus: ws.pop().unwrap(),
        times,
        cauchy_l2,
        cauchy_h1,
        initial_l2,
        initial_h1,
        converged,
        converged_in_h1: use_h1,
        compliance,
    })
}

/// `u(t) − e^{itΔ}u₊`.
pub fn u_loc(state: &StateVector, t: f64, u_plus: &StateVector) -> StateVector {
    state - &apply_free_propagator(u_plus, t)
}

/// Decomposition `u = e^{itΔ}u₊ + u_loc` at one stored time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ULocSample {
    pub t: f64,
    pub mass: f64,
    /// `∥e^{itΔ}u₊∥²`.
    pub free_mass: f64,
    /// `∥u_loc∥²`.
    pub u_loc_mass: f64,
    /// `2 Re⟨e^{itΔ}u₊, u_loc⟩`.
    pub cross_term: f64,
    /// `∥F(|x| ≥ t^κ) u_loc∥`.
    pub exterior_mass: f64,
    /// `∥F(|x| ≥ t^μ) ∂_x u_loc∥`.
    pub exterior_energy: f64,
}

/// `u_loc` diagnostics at every stored state with `t > 0`.
pub fn compute_u_loc_series(
    trajectory: &Trajectory,
    u_plus: &StateVector,
    exponents: LocalizationExponents,
    profile: CutoffProfile,
) -> Result<Vec<ULocSample>> {
    trajectory
        .snapshots
        .iter()
        .filter(|s| s.t > 0.0)
        .map(|s| u_loc_sample(&s.state, s.t, u_plus, exponents, profile))
        .collect()
}

pub fn u_loc_sample(
    state: &StateVector,
    t: f64,
    u_plus: &StateVector,
    exponents: LocalizationExponents,
    profile: CutoffProfile,
) -> Result<ULocSample> {
    let free = apply_free_propagator(u_plus, t);
    let loc = state - &free;
    let f = localization_functionals(&loc, t, exponents, profile)?.value;
    Ok(ULocSample {
        t,
        mass: state.mass(),
        free_mass: free.mass(),
        u_loc_mass: loc.mass(),
        cross_term: 2.0 * free.inner(&loc).re,
        exterior_mass: f.exterior_mass,
        exterior_energy: f.exterior_energy,
    })
}

fn default_nonradiative_threshold() -> f64 {
    1e-3
}

/// Nonradiative classification from the exterior Morawetz current.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiativeReport {
    pub beta: f64,
    pub times: Vec<f64>,
    pub current: Vec<f64>,
    /// Mean current over the last decade of times.
    pub last_decade_average: f64,
    /// Least-squares slope of the current in `t` over the last decade.
    pub trend: f64,
    pub final_value: f64,
    /// `threshold · ∥u∥²_{H¹}` at the final time.
    pub bound: f64,
    pub nonradiative: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadiativeCriteria {
    pub beta: f64,
    #[serde(default = "default_nonradiative_threshold")]
    pub threshold: f64,
}

impl RadiativeCriteria {
    pub fn new(beta: f64) -> RadiativeCriteria {
        RadiativeCriteria {
            beta,
            threshold: default_nonradiative_threshold(),
        }
    }
}

/// Classifies from `(t, current, ∥u(t)∥²_{H¹})` triples with `t ≥ 1`.
///
/// Nonradiative means the last-decade trend does not raise the current by more
/// than the bound across the decade and the final current is within the bound.
pub fn classify_radiative_series(series: &[(f64, f64, f64)], criteria: RadiativeCriteria) -> Result<RadiativeReport> {
    if series.len() < 2 {
        return Err(LabError::Data("classification needs at least two samples".into()));
    }
    let t_last = series.last().unwrap().0;
    let window: Vec<&(f64, f64, f64)> = series.iter().filter(|s| s.0 >= t_last / 10.0 - 1e-12).collect();
    let k = window.len() as f64;
    let tm = window.iter().map(|s| s.0).sum::<f64>() / k;
    let jm = window.iter().map(|s| s.1).sum::<f64>() / k;
    let sxx: f64 = window.iter().map(|s| (s.0 - tm).powi(2)).sum();
    let sxy: f64 = window.iter().map(|s| (s.0 - tm) * (s.1 - jm)).sum();
    let trend = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let span = window.last().unwrap().0 - window[0].0;
    let (_, final_value, h1sq) = *series.last().unwrap();
    let bound = criteria.threshold * h1sq;
    Ok(RadiativeReport {
        beta: criteria.beta,
        times: series.iter().map(|s| s.0).collect(),
        current: series.iter().map(|s| s.1).collect(),
        last_decade_average: jm,
        trend,
        final_value,
        bound,
        nonradiative: final_value.abs() <= bound && trend * span <= bound,
    })
}

/// Exterior-current series at exponent `β` over the stored states with `t ≥ 1`.
pub fn classify_radiative(
    trajectory: &Trajectory,
    criteria: RadiativeCriteria,
    profile: CutoffProfile,
) -> Result<RadiativeReport> {
    if !(criteria.beta > 1.0 / 3.0 && criteria.beta < 1.0) {
        return Err(LabError::Domain(format!(
            "nonradiative classification needs beta in (1/3, 1), got {}",
            criteria.beta
        )));
    }
    let series: Vec<(f64, f64, f64)> = trajectory
        .snapshots
        .iter()
        .filter(|s| s.t >= 1.0)
        .map(|s| {
            let f = space_cutoff(s.state.grid(), profile, Orientation::AtLeast, s.t.powf(criteria.beta));
            let j = morawetz_action(&s.state.multiply_real(&f));
            (s.t, j, h1_norm(&s.state).powi(2))
        })
        .collect();
    classify_radiative_series(&series, criteria)
}

/// Exterior size of each channel of a remainder.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelNorms {
    pub t: f64,
    /// `∥F(|x| ≥ t^κ) P u∥` for `P = P^out, P^in, P^low`.
    pub outgoing: f64,
    pub incoming: f64,
    pub low: f64,
    /// `∥F(|x| ≥ t^μ) ∂_x P u∥`.
    pub outgoing_energy: f64,
    pub incoming_energy: f64,
    pub low_energy: f64,
}

/// Splits `remainder` with `P^{out/in/low}` at `s = t^{-λ}` and measures each
/// part outside `|x| ≥ t^κ` (mass) and `|x| ≥ t^μ` (energy).
pub fn split_remainder(
    remainder: &StateVector,
    t: f64,
    lambda: f64,
    kappa: f64,
    mu: f64,
    profile: CutoffProfile,
) -> Result<ChannelNorms> {
    for (name, v) in [("kappa", kappa), ("mu", mu)] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(LabError::Domain(format!("{name} must be positive, got {v}")));
        }
    }
    let split = split_in_out_low(remainder, t, lambda, profile)?;
    let grid = remainder.grid();
    let fk = space_cutoff(grid, profile, Orientation::AtLeast, t.powf(kappa));
    let fm = space_cutoff(grid, profile, Orientation::AtLeast, t.powf(mu));
    let mass = |u: &StateVector| u.multiply_real(&fk).norm_l2();
    let energy = |u: &StateVector| apply_derivative(u, Derivative::First).multiply_real(&fm).norm_l2();
    Ok(ChannelNorms {
        t,
        outgoing: mass(&split.outgoing),
        incoming: mass(&split.incoming),
        low: mass(&split.low),
        outgoing_energy: energy(&split.outgoing),
        incoming_energy: energy(&split.incoming),
        low_energy: energy(&split.low),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{evolve, ground_state, EvolutionConfig, Nonlinearity};
    use crate::potential::{DecayCertificate, PotentialModel};
    use crate::spectral::Grid;
    use approx::assert_relative_eq;
    use num_complex::Complex64;

    fn prof() -> CutoffProfile {
        CutoffProfile::default()
    }

    fn samples() -> Vec<f64> {
        vec![1.5625, 3.125, 6.25, 12.5, 25.0, 50.0, 100.0]
    }

    fn packet(grid: &Grid, centre: f64, width: f64, k: f64) -> StateVector {
        StateVector::from_fn(grid, |x| {
            Complex64::from_polar((-((x - centre) / width).powi(2)).exp(), k * x)
        })
    }

    fn free_run(u0: &StateVector, t_end: f64, dt: f64) -> Trajectory {
        let cfg = EvolutionConfig::new(dt, 0.0, t_end, 1_000_000).with_snapshots(samples());
        evolve(u0, &cfg, &PotentialModel::none(), Nonlinearity::off(), &mut []).unwrap()
    }

    #[test]
    fn alpha_zero_at_seven() {
        assert_relative_eq!(alpha_zero(7.0), 0.5625);
    }

    #[test]
    fn config_compliance() {
        let mut c = WaveOpConfig {
            alpha: 0.5,
            delta: 0.3,
            sample_times: samples(),
            cauchy_tolerance: 1e-2,
            theorem_compliant: false,
        };
        assert!(c.validate(Some(7.0)).unwrap().compliant);
        c.alpha = 0.6;
        let comp = c.validate(Some(7.0)).unwrap();
        assert!(!comp.compliant && comp.notes[0].contains("0.5625"));
        c.theorem_compliant = true;
        assert!(matches!(c.validate(Some(7.0)), Err(LabError::Config(_))));
        c.theorem_compliant = false;
        assert!(c.validate(None).unwrap().compliant);
        c.alpha = 0.5;
        c.sample_times = vec![2.0, 1.5];
        assert!(c.validate(Some(7.0)).is_err());
    }

    #[test]
    fn free_fast_packet_is_its_own_wave_operator() {
        // Spectrum e^{-2.25(ξ-3)²} sits essentially above 2 t^{-δ} ≈ 0.5 at
        // t = 100 and the packet lies inside |x| ≤ t^α = 10, so J_free(100)
        // acts as the identity.
        let g = Grid::new(8192, 1280.0).unwrap();
        let u0 = packet(&g, 0.0, 3.0, 3.0);
        let traj = free_run(&u0, 100.0, 0.02);
        let cfg = WaveOpConfig {
            alpha: 0.5,
            delta: 0.3,
            sample_times: samples(),
            cauchy_tolerance: 1e-2,
            theorem_compliant: true,
        };
        let r = extract_wave_operator(&traj, &cfg, prof()).unwrap();
        assert!((&r.u_plus - &u0).norm_l2() <= 1e-2 * u0.norm_l2());
        assert!(r.converged && r.compliance.compliant);
        assert!(r.cauchy_h1.iter().all(|v| *v >= 0.0));
        // Exact u₊ leaves nothing localized.
        let e = LocalizationExponents {
            beta: 0.4,
            kappa: 0.6,
            mu: 0.4,
        };
        for s in compute_u_loc_series(&traj, &u0, e, prof()).unwrap() {
            assert!(s.u_loc_mass <= 1e-20, "{s:?}");
        }
    }

    #[test]
    fn zero_data_gives_zero_wave_operator() {
        let g = Grid::new(256, 40.0).unwrap();
        let traj = free_run(&StateVector::zeros(&g), 100.0, 0.025);
        let cfg = WaveOpConfig {
            alpha: 0.5,
            delta: 0.3,
            sample_times: samples(),
            cauchy_tolerance: 1e-2,
            theorem_compliant: false,
        };
        let r = extract_wave_operator(&traj, &cfg, prof()).unwrap();
        assert_eq!(r.u_plus.max_abs(), 0.0);
        assert!(r.cauchy_l2.iter().chain(&r.cauchy_h1).all(|v| *v == 0.0));
    }

    #[test]
    fn missing_sample_time_is_a_data_error() {
        let g = Grid::new(256, 40.0).unwrap();
        let traj = free_run(&StateVector::zeros(&g), 100.0, 0.025);
        let cfg = WaveOpConfig {
            alpha: 0.5,
            delta: 0.3,
            sample_times: vec![1.5625, 7.0],
            cauchy_tolerance: 1e-2,
            theorem_compliant: false,
        };
        assert!(matches!(
            extract_wave_operator(&traj, &cfg, prof()),
            Err(LabError::Data(_))
        ));
    }

    #[test]
    fn zero_u_plus_leaves_u() {
        let g = Grid::new(256, 40.0).unwrap();
        let u = packet(&g, 3.0, 2.0, 1.0);
        let l = u_loc(&u, 5.0, &StateVector::zeros(&g));
        assert_eq!(l.max_abs_diff(&u), 0.0);
    }

    #[test]
    fn mass_decomposition_is_exact() {
        let g = Grid::new(512, 60.0).unwrap();
        let u = packet(&g, 3.0, 2.0, 1.0);
        let up = packet(&g, -1.0, 3.0, 2.0).scaled(Complex64::new(0.3, 0.1));
        let e = LocalizationExponents {
            beta: 0.4,
            kappa: 0.6,
            mu: 0.4,
        };
        let s = u_loc_sample(&u, 2.0, &up, e, prof()).unwrap();
        assert_relative_eq!(s.mass, s.free_mass + s.u_loc_mass + s.cross_term, max_relative = 1e-12);
    }

    #[test]
    fn classification_cases() {
        let crit = RadiativeCriteria::new(0.5);
        // Stationary phase-rotating ground state.
        let g = Grid::new(1024, 60.0).unwrap();
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
        let cfg = EvolutionConfig::new(4e-3, 0.0, 20.0, 250);
        let traj = evolve(&gs.state, &cfg, &model, Nonlinearity::off(), &mut []).unwrap();
        let r = classify_radiative(&traj, crit, prof()).unwrap();
        assert!(r.nonradiative && r.final_value.abs() <= 1e-6, "{r:?}");
        // Zero state.
        let z = evolve(&StateVector::zeros(&g), &cfg, &model, Nonlinearity::off(), &mut []).unwrap();
        let r = classify_radiative(&z, crit, prof()).unwrap();
        assert!(r.nonradiative && r.final_value == 0.0);
        // Free outgoing packets: the exterior current tends to k·mass.
        let g = Grid::new(4096, 400.0).unwrap();
        let k = 2.0;
        let u0 = &packet(&g, 0.0, 6.0, k) + &packet(&g, 0.0, 6.0, -k);
        let cfg = EvolutionConfig::new(1e-2, 0.0, 60.0, 200);
        let traj = evolve(&u0, &cfg, &PotentialModel::none(), Nonlinearity::off(), &mut []).unwrap();
        let r = classify_radiative(&traj, crit, prof()).unwrap();
        assert!(!r.nonradiative);
        assert_relative_eq!(r.final_value, k * u0.mass(), max_relative = 2e-2);
        assert!(classify_radiative(&traj, RadiativeCriteria::new(0.3), prof()).is_err());
    }

    #[test]
    fn split_remainder_cases() {
        let g = Grid::new(4096, 400.0).unwrap();
        let z = split_remainder(&StateVector::zeros(&g), 100.0, 0.3, 0.6, 0.4, prof()).unwrap();
        assert!(z.outgoing == 0.0 && z.incoming == 0.0 && z.low == 0.0);
        // Outgoing packet far outside |x| ≥ 2t^κ ≈ 32 with frequency 2 ≫ t^{-λ}.
        let u = packet(&g, 150.0, 8.0, 2.0);
        let c = split_remainder(&u, 100.0, 0.3, 0.6, 0.4, prof()).unwrap();
        assert_relative_eq!(c.outgoing, u.norm_l2(), max_relative = 1e-10);
        assert!(
            c.incoming <= 1e-10 * u.norm_l2() && c.low <= 1e-10 * u.norm_l2(),
            "{c:?}"
        );
    }
}
