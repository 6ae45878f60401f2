//! Strang split-step integration of `i ∂_t u = -Δu + V(x,t) u + |u|^{p-1} u`
//! and the ground state of `-Δ + V(·,0)`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::potential::{PotentialField, PotentialModel};
use crate::spectral::{Grid, StateVector};

/// Power nonlinearity `|u|^{p-1} u`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Nonlinearity {
    pub p: f64,
    pub enabled: bool,
}

impl Nonlinearity {
    pub fn new(p: f64, enabled: bool) -> Result<Nonlinearity> {
        if !(p >= 1.0 && p.is_finite()) {
            return Err(LabError::Config(format!("nonlinearity power p must be >= 1, got {p}")));
        }
        Ok(Nonlinearity { p, enabled })
    }

    pub fn off() -> Nonlinearity {
        Nonlinearity { p: 3.0, enabled: false }
    }

    /// Mass-supercritical regime `p > 5`.
    pub fn is_mass_supercritical(&self) -> bool {
        self.enabled && self.p > 5.0
    }

    /// `|u|^{p-1}` from `|u|²`.
    #[inline]
    pub fn potential_term(&self, abs2: f64) -> f64 {
        if !self.enabled {
            return 0.0;
        }
        let half = 0.5 * (self.p - 1.0);
        if half.fract() == 0.0 && half <= 16.0 {
            abs2.powi(half as i32)
        } else {
            abs2.powf(half)
        }
    }
}

fn default_budget() -> f64 {
    1e-6
}

/// Time-stepping parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionConfig {
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Steps between observer calls.
    pub save_stride: usize,
    /// Largest admissible fraction of the initial mass in `|x| > 0.95 L`.
    #[serde(default = "default_budget")]
    pub boundary_budget: f64,
    /// Times at which states are kept in the trajectory; `None` keeps every save.
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
}

impl EvolutionConfig {
    pub fn new(dt: f64, t_start: f64, t_end: f64, save_stride: usize) -> EvolutionConfig {
        EvolutionConfig {
            dt,
            t_start,
            t_end,
            save_stride,
            boundary_budget: default_budget(),
            snapshot_times: None,
        }
    }

    pub fn with_snapshots(mut self, times: Vec<f64>) -> EvolutionConfig {
        self.snapshot_times = Some(times);
        self
    }

    pub fn steps(&self) -> usize {
        ((self.t_end - self.t_start) / self.dt).round() as usize
    }

    /// Time of step `k`.
    pub fn time_of(&self, k: usize) -> f64 {
        self.t_start + k as f64 * self.dt
    }

    /// Step index nearest to time `t`.
    pub fn step_of(&self, t: f64) -> i64 {
        ((t - self.t_start) / self.dt).round() as i64
    }

    pub fn validate(&self, grid: &Grid) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(LabError::Config(format!("dt must be positive, got {}", self.dt)));
        }
        if !(self.t_end > self.t_start) {
            return Err(LabError::Config(format!(
                "t_end = {} must exceed t_start = {}",
                self.t_end, self.t_start
            )));
        }
        if self.save_stride == 0 {
            return Err(LabError::Config("save_stride must be at least 1".into()));
        }
        let guard = self.dt * grid.xi_max().powi(2);
        if guard > std::f64::consts::PI {
            return Err(LabError::Config(format!(
                "dt * xi_max^2 = {guard:.4} exceeds pi; reduce dt below {:.3e}",
                std::f64::consts::PI / grid.xi_max().powi(2)
            )));
        }
        if !(self.boundary_budget > 0.0) {
            return Err(LabError::Config("boundary_budget must be positive".into()));
        }
        if let Some(times) = &self.snapshot_times {
            let steps = self.steps() as i64;
            for &t in times {
                let k = self.step_of(t);
                if !(0..=steps).contains(&k) {
                    return Err(LabError::Config(format!(
                        "snapshot time {t} lies outside [{}, {}]",
                        self.t_start, self.t_end
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Called at every save step with the completed state.
pub trait Observer {
    fn observe(&mut self, t: f64, state: &StateVector) -> Result<()>;
}

impl<F: FnMut(f64, &StateVector) -> Result<()>> Observer for F {
    fn observe(&mut self, t: f64, state: &StateVector) -> Result<()> {
        self(t, state)
    }
}

/// A stored state of the flow.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub state: StateVector,
}

/// Conservation and containment monitors of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunMonitors {
    pub initial_mass: f64,
    pub max_relative_mass_drift: f64,
    pub max_boundary_fraction: f64,
    pub steps: usize,
}

/// States of a run at its snapshot times plus the run parameters.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub grid: Grid,
    pub config: EvolutionConfig,
    pub model: PotentialModel,
    pub nonlinearity: Nonlinearity,
    pub snapshots: Vec<Snapshot>,
    pub monitors: RunMonitors,
}

impl Trajectory {
    /// Snapshot at the step nearest to `t`, if one was stored.
    pub fn snapshot_at(&self, t: f64) -> Option<&Snapshot> {
        let k = self.config.step_of(t);
        if k < 0 {
            return None;
        }
        self.snapshots.iter().find(|s| s.step == k as usize)
    }

    pub fn last(&self) -> &Snapshot {
        self.snapshots.last().expect("trajectory always holds the final state")
    }
}

/// Fraction of `mass0` carried by `|x| > 0.95 L`.
pub fn boundary_fraction(state: &StateVector, mass0: f64) -> f64 {
    if mass0 <= 0.0 {
        return 0.0;
    }
    let grid = state.grid();
    let edge = 0.95 * grid.half_length();
    let outer: f64 = grid
        .x()
        .iter()
        .zip(state.values())
        .filter(|(x, _)| x.abs() > edge)
        .map(|(_, v)| v.norm_sqr())
        .sum();
    outer * grid.dx() / mass0
}

/// Reusable split-step propagator for a fixed grid, model and `dt`.
pub struct Stepper {
    grid: Grid,
    field: PotentialField,
    nonlin: Nonlinearity,
    dt: f64,
    kinetic: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl Stepper {
    pub fn new(grid: &Grid, model: &PotentialModel, nonlin: Nonlinearity, dt: f64) -> Result<Stepper> {
        let field = PotentialField::new(model, grid)?;
        let kinetic = grid
            .wavenumbers()
            .iter()
            .map(|&xi| Complex64::from_polar(1.0, -dt * xi * xi))
            .collect();
        Ok(Stepper {
            grid: grid.clone(),
            field,
            nonlin,
            dt,
            kinetic,
            scratch: grid.make_scratch(),
        })
    }

    /// `u ← exp(-i (cv·V₀(x) + cn·|u|^{p-1})) u`, with `V₀` the unmodulated profile.
    fn phase(&self, u: &mut [Complex64], cv: f64, cn: f64) {
        let v = self.field.profile();
        let use_v = !self.field.is_zero() && cv != 0.0;
        let use_n = self.nonlin.enabled && cn != 0.0;
        if !use_v && !use_n {
            return;
        }
        for (j, uj) in u.iter_mut().enumerate() {
            let mut theta = 0.0;
            if use_v {
                theta += cv * v[j];
            }
            if use_n {
                theta += cn * self.nonlin.potential_term(uj.norm_sqr());
            }
            *uj *= Complex64::from_polar(1.0, -theta);
        }
    }

    fn kinetic(&mut self, u: &mut [Complex64]) {
        self.grid.forward_with_scratch(u, &mut self.scratch);
        for (c, k) in u.iter_mut().zip(&self.kinetic) {
            *c *= k;
        }
        self.grid.inverse_with_scratch(u, &mut self.scratch);
    }

    /// Potential coefficient of a half step centred at `t_mid`.
    fn half_v(&self, t_mid: f64) -> f64 {
        0.5 * self.dt * self.field.factor(t_mid)
    }

    /// One full Strang step from `t` to `t + dt`.
    pub fn step(&mut self, u: &mut [Complex64], t: f64) {
        let cv = self.half_v(t + 0.5 * self.dt);
        let cn = 0.5 * self.dt;
        self.phase(u, cv, cn);
        self.kinetic(u);
        self.phase(u, cv, cn);
    }
}

fn check_finite(u: &[Complex64], t: f64) -> Result<()> {
    if u.iter().all(|v| v.re.is_finite() && v.im.is_finite()) {
        Ok(())
    } else {
        Err(LabError::Blowup {
            t,
            detail: "non-finite samples; dt is too large for this data".into(),
        })
    }
}

/// One Strang step of the full equation.
pub fn strang_step(
    state: &StateVector,
    t: f64,
    dt: f64,
    model: &PotentialModel,
    nonlin: Nonlinearity,
) -> Result<StateVector> {
    let grid = state.grid();
    EvolutionConfig::new(dt, t, t + dt, 1).validate(grid)?;
    let mut stepper = Stepper::new(grid, model, nonlin, dt)?;
    let mut u = state.values().to_vec();
    stepper.step(&mut u, t);
    check_finite(&u, t + dt)?;
    Ok(StateVector::from_parts(grid, u))
}

/// Evolves `state0` over `[t_start, t_end]`, calling the observers at every
/// save step (every `save_stride` steps and the final step).
///
/// Between save points the trailing half step of one step and the leading
/// half step of the next are applied as a single phase multiplication; this
/// is algebraically the same scheme since the phase does not change `|u|`.
pub fn evolve(
    state0: &StateVector,
    config: &EvolutionConfig,
    model: &PotentialModel,
    nonlin: Nonlinearity,
    observers: &mut [&mut dyn Observer],
) -> Result<Trajectory> {
    let grid = state0.grid().clone();
    config.validate(&grid)?;
    model.validate()?;
    let steps = config.steps();
    let dt = config.dt;
    let mass0 = state0.mass();

    let frac0 = boundary_fraction(state0, mass0);
    if frac0 > config.boundary_budget {
        return Err(LabError::Precondition(format!(
            "initial data carries {frac0:.3e} of its mass within 5% of the box edge (budget {:.1e})",
            config.boundary_budget
        )));
    }

    let snapshot_steps: Option<Vec<usize>> = config
        .snapshot_times
        .as_ref()
        .map(|ts| ts.iter().map(|&t| config.step_of(t) as usize).collect());
    let keep = |k: usize, is_save: bool| match &snapshot_steps {
        None => is_save,
        Some(list) => list.contains(&k) || k == 0 || k == steps,
    };
    let is_save = |k: usize| k.is_multiple_of(config.save_stride) || k == steps;
    let needs_complete = |k: usize| is_save(k) || keep(k, false);

    let mut stepper = Stepper::new(&grid, model, nonlin, dt)?;
    let mut u = state0.values().to_vec();
    let mut snapshots = Vec::new();
    let mut monitors = RunMonitors {
        initial_mass: mass0,
        max_relative_mass_drift: 0.0,
        max_boundary_fraction: frac0,
        steps,
    };

    let record = |k: usize,
                  u: &[Complex64],
                  snapshots: &mut Vec<Snapshot>,
                  monitors: &mut RunMonitors,
                  observers: &mut [&mut dyn Observer]|
     -> Result<()> {
        let t = config.time_of(k);
        check_finite(u, t)?;
        let state = StateVector::from_parts(&grid, u.to_vec());
        let frac = boundary_fraction(&state, mass0);
        monitors.max_boundary_fraction = monitors.max_boundary_fraction.max(frac);
        if mass0 > 0.0 {
            let drift = (state.mass() - mass0).abs() / mass0;
            monitors.max_relative_mass_drift = monitors.max_relative_mass_drift.max(drift);
        }
        if frac > config.boundary_budget {
            return Err(LabError::BoundaryLeak {
                t,
                fraction: frac,
                budget: config.boundary_budget,
            });
        }
        if is_save(k) {
            for obs in observers.iter_mut() {
                obs.observe(t, &state)?;
            }
        }
        if keep(k, is_save(k)) {
            snapshots.push(Snapshot { step: k, t, state });
        }
        Ok(())
    };

    record(0, &u, &mut snapshots, &mut monitors, observers)?;
    let cn_half = 0.5 * dt;
    stepper.phase(&mut u, stepper.half_v(config.time_of(0) + 0.5 * dt), cn_half);
    for k in 0..steps {
        stepper.kinetic(&mut u);
        let cv_this = stepper.half_v(config.time_of(k) + 0.5 * dt);
        let next = k + 1;
        if needs_complete(next) {
            stepper.phase(&mut u, cv_this, cn_half);
            record(next, &u, &mut snapshots, &mut monitors, observers)?;
            if next < steps {
                let cv_next = stepper.half_v(config.time_of(next) + 0.5 * dt);
                stepper.phase(&mut u, cv_next, cn_half);
            }
        } else {
            let cv_next = stepper.half_v(config.time_of(next) + 0.5 * dt);
            stepper.phase(&mut u, cv_this + cv_next, dt);
        }
    }

    Ok(Trajectory {
        grid,
        config: config.clone(),
        model: model.clone(),
        nonlinearity: nonlin,
        snapshots,
        monitors,
    })
}

/// Lowest eigenpair of the discretized `-Δ + V(·,0)`.
#[derive(Debug, Clone)]
pub struct GroundState {
    pub state: StateVector,
    pub eigenvalue: f64,
    pub iterations: usize,
    pub residual: f64,
}

const GROUND_MAX_ITERS: usize = 2000;

struct Hamiltonian<'a> {
    grid: &'a Grid,
    v: Vec<f64>,
    xi2: Vec<f64>,
    scratch: Vec<Complex64>,
}

impl Hamiltonian<'_> {
    /// `(-Δ + V - shift) u`.
    fn apply(&mut self, u: &[Complex64], shift: f64) -> Vec<Complex64> {
        let mut k = u.to_vec();
        self.grid.forward_with_scratch(&mut k, &mut self.scratch);
        for (c, &x2) in k.iter_mut().zip(&self.xi2) {
            *c *= x2;
        }
        self.grid.inverse_with_scratch(&mut k, &mut self.scratch);
        for ((kj, &uj), &vj) in k.iter_mut().zip(u).zip(&self.v) {
            *kj += uj * (vj - shift);
        }
        k
    }

    /// `(ξ² + c)^{-1}` applied in frequency space.
    fn precondition(&mut self, r: &[Complex64], c: f64) -> Vec<Complex64> {
        let mut k = r.to_vec();
        self.grid.forward_with_scratch(&mut k, &mut self.scratch);
        for (z, &x2) in k.iter_mut().zip(&self.xi2) {
            *z /= x2 + c;
        }
        self.grid.inverse_with_scratch(&mut k, &mut self.scratch);
        k
    }
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

fn norm(a: &[Complex64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// Preconditioned conjugate gradients for `(H - shift) x = b`.
fn pcg(h: &mut Hamiltonian<'_>, b: &[Complex64], shift: f64, c: f64) -> Vec<Complex64> {
    let bnorm = norm(b);
    let mut x = vec![Complex64::new(0.0, 0.0); b.len()];
    if bnorm == 0.0 {
        return x;
    }
    let mut r = b.to_vec();
    let mut z = h.precondition(&r, c);
    let mut p = z.clone();
    let mut rz = dot(&r, &z).re;
    for _ in 0..500 {
        let ap = h.apply(&p, shift);
        let alpha = rz / dot(&p, &ap).re;
        for j in 0..x.len() {
            x[j] += p[j] * alpha;
            r[j] -= ap[j] * alpha;
        }
        if norm(&r) <= 1e-14 * bnorm {
            break;
        }
        z = h.precondition(&r, c);
        let rz_new = dot(&r, &z).re;
        let beta = rz_new / rz;
        rz = rz_new;
        for j in 0..p.len() {
            p[j] = z[j] + p[j] * beta;
        }
    }
    x
}

/// Ground state by shifted inverse power iteration, normalized to `mass`
/// and made real-positive at its peak.
pub fn ground_state(model: &PotentialModel, grid: &Grid, mass: f64) -> Result<GroundState> {
    if !(mass > 0.0 && mass.is_finite()) {
        return Err(LabError::Config(format!(
            "ground-state mass must be positive, got {mass}"
        )));
    }
    let v = model.profile(grid)?;
    let vmin = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let vmean = v.iter().sum::<f64>() / v.len() as f64;
    let shift = vmin - 0.25 * (1.0 + vmin.abs());
    let precond_c = vmean - shift;
    let xi2 = grid.wavenumbers().iter().map(|x| x * x).collect();
    let mut h = Hamiltonian {
        grid,
        v,
        xi2,
        scratch: grid.make_scratch(),
    };

    // Positive, nodeless start with broad support.
    let width = grid.half_length() / 4.0;
    let mut phi: Vec<Complex64> = grid
        .x()
        .iter()
        .map(|&x| Complex64::new((-(x / width).powi(2)).exp(), 0.0))
        .collect();
    let n0 = norm(&phi);
    phi.iter_mut().for_each(|z| *z /= n0);

    let mut eigenvalue = 0.0;
    let mut residual = f64::INFINITY;
    for it in 1..=GROUND_MAX_ITERS {
        let mut next = pcg(&mut h, &phi, shift, precond_c);
        let nn = norm(&next);
        if !(nn.is_finite() && nn > 0.0) {
            return Err(LabError::Solver(
                "inverse iteration produced a degenerate vector".into(),
            ));
        }
        next.iter_mut().for_each(|z| *z /= nn);
        phi = next;
        let hphi = h.apply(&phi, 0.0);
        eigenvalue = dot(&phi, &hphi).re;
        residual = hphi
            .iter()
            .zip(&phi)
            .map(|(a, b)| (a - b * eigenvalue).norm_sqr())
            .sum::<f64>()
            .sqrt();
        if residual <= 1e-10 * (eigenvalue.abs() + 1.0) {
            let state = finish_ground_state(grid, phi, mass);
            return Ok(GroundState {
                state,
                eigenvalue,
                iterations: it,
                residual,
            });
        }
    }
    Err(LabError::Solver(format!(
        "ground state did not converge in {GROUND_MAX_ITERS} iterations (eigenvalue {eigenvalue:.6}, residual {residual:.3e})"
    )))
}

fn finish_ground_state(grid: &Grid, phi: Vec<Complex64>, mass: f64) -> StateVector {
    let peak = phi
        .iter()
        .cloned()
        .max_by(|a, b| a.norm().total_cmp(&b.norm()))
        .unwrap_or(Complex64::new(1.0, 0.0));
    let phase = if peak.norm() > 0.0 {
        peak.conj() / peak.norm()
    } else {
        Complex64::new(1.0, 0.0)
    };
    let mut s = StateVector::from_parts(grid, phi.into_iter().map(|z| z * phase).collect());
    let scale = (mass / s.mass()).sqrt();
    s = &s * scale;
    s
}
