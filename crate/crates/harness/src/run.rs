//! A single experiment: evolve, record observables, extract the free-channel
//! wave operator, analyse the localized remainder and judge the checks.

use std::path::PathBuf;
use std::time::Instant;

use nlslab_core::dynamics::{evolve, RunMonitors};
use nlslab_core::observables::{
    heisenberg_residual, interaction_bound_scale, HeisenbergPoint, ObservableRecorder, ObservableSeries,
};
use nlslab_core::potential::{PotentialField, PotentialKind};
use nlslab_core::scattering::{
    classify_radiative_series, compute_u_loc_series, extract_wave_operator, fit_spreading_exponent, split_remainder,
    u_loc, ChannelNorms, Compliance, ExponentFit, RadiativeReport, ULocSample,
};
use nlslab_core::spectral::h1_norm;
use nlslab_core::{Grid, Result, StateVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::{packet_params, ComplianceFlag, ExperimentConfig, InitialComponent, LoadedConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    /// `value ≤ threshold`.
    AtMost,
    /// `value ≥ threshold`.
    AtLeast,
    /// Recorded measurement, not judged.
    Recorded,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Info,
}

impl CheckStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            CheckStatus::Pass => "pass",
            CheckStatus::Fail => "fail",
            CheckStatus::Info => "info",
        }
    }
}

impl Relation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Relation::AtMost => "<=",
            Relation::AtLeast => ">=",
            Relation::Recorded => "recorded",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub relation: Relation,
    pub status: CheckStatus,
}

impl Check {
    pub fn at_most(name: &str, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            threshold,
            relation: Relation::AtMost,
            status: if value <= threshold {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
        }
    }

    pub fn at_least(name: &str, value: f64, threshold: f64) -> Check {
        Check {
            name: name.into(),
            value,
            threshold,
            relation: Relation::AtLeast,
            status: if value >= threshold {
                CheckStatus::Pass
            } else {
                CheckStatus::Fail
            },
        }
    }

    pub fn recorded(name: &str, value: f64, reference: f64) -> Check {
        Check {
            name: name.into(),
            value,
            threshold: reference,
            relation: Relation::Recorded,
            status: CheckStatus::Info,
        }
    }

    pub fn failed(&self) -> bool {
        self.status == CheckStatus::Fail
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub name: String,
    pub fit: ExponentFit,
}

/// The serializable part of a wave-operator extraction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScatteringSummary {
    pub times: Vec<f64>,
    pub w_norms: Vec<f64>,
    pub cauchy_l2: Vec<f64>,
    pub cauchy_h1: Vec<f64>,
    pub initial_l2: f64,
    pub initial_h1: f64,
    pub u_plus_l2: f64,
    pub u_plus_h1: f64,
    pub compliance: Compliance,
}

/// Everything a run produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: ExperimentConfig,
    pub compliance: Vec<ComplianceFlag>,
    pub monitors: RunMonitors,
    pub series: ObservableSeries,
    pub heisenberg: Vec<HeisenbergPoint>,
    pub scattering: Option<ScatteringSummary>,
    pub u_loc: Vec<ULocSample>,
    pub channels: Vec<ChannelNorms>,
    pub radiative: Option<RadiativeReport>,
    pub fits: Vec<FitRecord>,
    pub checks: Vec<Check>,
    pub wall_clock_seconds: f64,
}

impl RunRecord {
    pub fn all_pass(&self) -> bool {
        !self.checks.iter().any(Check::failed)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&ExponentFit> {
        self.fits.iter().find(|f| f.name == name).map(|f| &f.fit)
    }
}

/// Closed-form free evolution of `A exp(-(x-c)²/(2w²)) e^{ik(x-c)}` under
/// `i ∂_t u = -Δu`, summed over the periodic images `x + 2Lm`.
pub fn free_packet_solution(grid: &Grid, components: &[(f64, f64, f64, f64)], t: f64) -> StateVector {
    let period = 2.0 * grid.half_length();
    StateVector::from_fn(grid, |x| {
        let mut acc = Complex64::new(0.0, 0.0);
        for &(a, c, w, k) in components {
            let s = Complex64::new(w * w, 2.0 * t);
            let pre = (Complex64::new(w * w, 0.0) / s).sqrt() * a;
            let reach = 12.0 * (s.norm() / w) + (2.0 * k * t).abs();
            let m_max = (reach / period).ceil() as i64 + 1;
            for m in -m_max..=m_max {
                let y = x - c + period * m as f64;
                let z = y - 2.0 * k * t;
                let phase = Complex64::new(0.0, k * y - k * k * t).exp();
                acc += pre * phase * (-(z * z) / (s * 2.0)).exp();
            }
        }
        acc
    })
}

/// Packet parameters when the run is a free linear flow of Gaussian packets.
fn gaussian_oracle_components(cfg: &ExperimentConfig) -> Option<Vec<(f64, f64, f64, f64)>> {
    if cfg.physics.nonlinearity_enabled || !matches!(cfg.physics.potential, PotentialKind::None) {
        return None;
    }
    if cfg.initial_data.is_empty() {
        return None;
    }
    cfg.initial_data.iter().map(packet_params).collect()
}

/// Copy with file paths made absolute and the base directory cleared.
fn snapshot(cfg: &ExperimentConfig) -> ExperimentConfig {
    let mut c = cfg.clone();
    c.output_dir = cfg.output_path();
    for comp in &mut c.initial_data {
        if let InitialComponent::File { path } = comp {
            *path = cfg.resolve(path);
        }
    }
    c.base_dir = PathBuf::new();
    c
}

fn relative_or_absolute(delta: f64, reference: f64) -> f64 {
    if reference.abs() > 0.0 {
        delta / reference.abs()
    } else {
        delta
    }
}

/// Runs the experiment without writing anything.
pub fn compute_record(loaded: &LoadedConfig) -> Result<RunRecord> {
    let start = Instant::now();
    let cfg = &loaded.config;
    let th = &cfg.thresholds;
    let grid = cfg.grid()?;
    let model = cfg.potential_model()?;
    let nl = cfg.nonlinearity()?;
    let profile = cfg.profile()?;
    let evo = cfg.evolution();
    let u0 = cfg.initial_state(&grid)?;

    let mut recorder = ObservableRecorder::new(cfg.observable_config()?, PotentialField::new(&model, &grid)?, nl);
    let traj = evolve(&u0, &evo, &model, nl, &mut [&mut recorder])?;
    let series = recorder.series;
    let mut checks = Vec::new();

    checks.push(Check::at_most(
        "mass_drift",
        traj.monitors.max_relative_mass_drift,
        th.mass_drift,
    ));
    if model.is_time_independent() && !series.is_empty() {
        let e0 = series.samples[0].energy;
        let drift = series
            .samples
            .iter()
            .map(|s| relative_or_absolute((s.energy - e0).abs(), e0))
            .fold(0.0, f64::max);
        checks.push(Check::at_most("energy_drift", drift, th.energy_drift));
    }

    let heisenberg = if series.len() >= 3 {
        heisenberg_residual(&series)?
    } else {
        Vec::new()
    };
    let interval = evo.dt * evo.save_stride as f64;
    if !heisenberg.is_empty() && interval <= th.heisenberg_max_interval + 1e-15 {
        let worst = heisenberg.iter().map(|h| h.residual).fold(0.0, f64::max);
        checks.push(Check::at_most("heisenberg_residual", worst, th.heisenberg));
    }

    if let Some(components) = gaussian_oracle_components(cfg) {
        let last = traj.last();
        let exact = free_packet_solution(&grid, &components, last.t - evo.t_start);
        checks.push(Check::at_most(
            "gaussian_oracle",
            last.state.max_abs_diff(&exact),
            th.gaussian_oracle,
        ));
    }

    let n0 = u0.norm_l2();
    let h0 = h1_norm(&u0);
    let ex = &cfg.exponents;
    let mut scattering = None;
    let mut u_loc_series = Vec::new();
    let mut channels = Vec::new();
    if !cfg.time.sample_times.is_empty() {
        let r = extract_wave_operator(&traj, &cfg.wave_op(), profile)?;
        let inc = &r.cauchy_h1;
        let final_inc = *inc.last().unwrap();
        checks.push(Check::at_most("cauchy_final_h1", final_inc, th.cauchy_tolerance * h0));
        let k = th.monotone_window.min(r.times.len());
        let tail = &inc[inc.len() + 1 - k..];
        let rise = tail.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
        checks.push(Check::at_most("cauchy_monotone_rise", rise, 0.0));

        u_loc_series = compute_u_loc_series(&traj, &r.u_plus, cfg.localization(), profile)?;
        for snap in traj.snapshots.iter().filter(|s| s.t >= 1.0) {
            let rem = u_loc(&snap.state, snap.t, &r.u_plus);
            channels.push(split_remainder(&rem, snap.t, ex.lambda, ex.kappa, ex.mu, profile)?);
        }
        if let Some(last) = u_loc_series.last() {
            checks.push(Check::at_most(
                "u_loc_exterior_mass",
                last.exterior_mass,
                th.exterior_mass * n0,
            ));
            checks.push(Check::at_most(
                "u_loc_exterior_energy",
                last.exterior_energy,
                th.exterior_energy * h0,
            ));
        }
        if let Some(last) = channels.last() {
            checks.push(Check::at_most("incoming_exterior_mass", last.incoming, th.channel * n0));
            checks.push(Check::at_most("low_exterior_mass", last.low, th.channel * n0));
            checks.push(Check::recorded("outgoing_exterior_mass", last.outgoing, n0));
        }
        scattering = Some(ScatteringSummary {
            times: r.times.clone(),
            w_norms: r.w_norms.clone(),
            cauchy_l2: r.cauchy_l2.clone(),
            cauchy_h1: r.cauchy_h1.clone(),
            initial_l2: r.initial_l2,
            initial_h1: r.initial_h1,
            u_plus_l2: r.u_plus.norm_l2(),
            u_plus_h1: h1_norm(&r.u_plus),
            compliance: r.compliance,
        });
    }

    let t_end = evo.t_end;
    if t_end / 2.0 >= series.integral_start && !series.is_empty() {
        let full = series.im_running[series.nearest(t_end).unwrap()];
        let half = series.im_running[series.nearest(t_end / 2.0).unwrap()];
        if t_end / 2.0 >= th.plateau_from {
            checks.push(Check::at_most("interaction_plateau", full - half, th.plateau * half));
        } else {
            checks.push(Check::recorded("interaction_plateau", full - half, th.plateau * half));
        }
        let scale = interaction_bound_scale(&series);
        let c = if scale > 0.0 { full / scale } else { 0.0 };
        checks.push(Check::recorded("interaction_constant", c, scale));
    }

    let aligned: Vec<(f64, f64, f64)> = series
        .samples
        .iter()
        .filter(|s| s.t >= 1.0)
        .map(|s| (s.t, s.exterior_current, s.h1_norm * s.h1_norm))
        .collect();
    let radiative = if aligned.len() >= 2 {
        let mut rep = classify_radiative_series(&aligned, cfg.radiative())?;
        rep.times.clear();
        rep.current.clear();
        checks.push(Check::recorded("exterior_current_final", rep.final_value, rep.bound));
        Some(rep)
    } else {
        None
    };

    let mut fits = Vec::new();
    let window = th.spreading_window.map(|[a, b]| (a, b));
    let moments = series.column(|s| s.abs_moment);
    if let Ok(fit) = fit_spreading_exponent(&moments, window) {
        if let Some(max) = th.spreading_max {
            checks.push(Check::at_most("spreading_exponent_max", fit.slope, max));
        }
        if let Some(min) = th.spreading_min {
            checks.push(Check::at_least("spreading_exponent_min", fit.slope, min));
        }
        fits.push(FitRecord {
            name: "abs_moment".into(),
            fit,
        });
    } else if th.spreading_max.is_some() || th.spreading_min.is_some() {
        checks.push(Check {
            name: "spreading_exponent".into(),
            value: 0.0,
            threshold: 0.0,
            relation: Relation::Recorded,
            status: CheckStatus::Fail,
        });
    }
    let weighted = series.column(|s| s.linfty_weighted);
    if let Ok(fit) = fit_spreading_exponent(&weighted, window) {
        fits.push(FitRecord {
            name: "linfty_weighted".into(),
            fit,
        });
    }

    Ok(RunRecord {
        config: snapshot(cfg),
        compliance: loaded.compliance.clone(),
        monitors: traj.monitors,
        series,
        heisenberg,
        scattering,
        u_loc: u_loc_series,
        channels,
        radiative,
        fits,
        checks,
        wall_clock_seconds: start.elapsed().as_secs_f64(),
    })
}

/// Runs the experiment and writes every artifact to the configured output directory.
pub fn run_experiment(loaded: &LoadedConfig) -> Result<RunRecord> {
    let record = compute_record(loaded)?;
    crate::outputs::emit_outputs(&record, &loaded.config.output_path())?;
    Ok(record)
}
