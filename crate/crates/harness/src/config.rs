//! Experiment configuration: a TOML document with documented defaults for
//! every field. Loading checks structural constraints (errors) and evaluates
//! the exponent inequality chains of the scattering theorems (flags).

use std::path::{Path, PathBuf};

use nlslab_core::dynamics::{ground_state, EvolutionConfig, Nonlinearity};
use nlslab_core::microlocal::{CutoffProfile, LemmaRequest};
use nlslab_core::observables::{LocalizationExponents, ObservableConfig};
use nlslab_core::potential::{check_potential_decay, DecayCertificate, Modulation, PotentialKind, PotentialModel};
use nlslab_core::scattering::{alpha_zero, RadiativeCriteria, WaveOpConfig};
use nlslab_core::{Grid, LabError, Result, StateVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    pub half_length: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 16384,
            half_length: 2048.0,
        }
    }
}

pub fn default_sample_times() -> Vec<f64> {
    vec![1.5625, 3.125, 6.25, 12.5, 25.0, 50.0, 100.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeSection {
    pub dt: f64,
    pub t_start: f64,
    pub t_end: f64,
    /// Steps between saved samples.
    pub save_stride: usize,
    /// Times at which the free-channel profile is formed and states are kept.
    pub sample_times: Vec<f64>,
    /// Largest admissible mass fraction in `|x| > 0.95 L`.
    pub boundary_budget: f64,
}

impl Default for TimeSection {
    fn default() -> Self {
        TimeSection {
            dt: 1e-3,
            t_start: 0.0,
            t_end: 100.0,
            save_stride: 50,
            sample_times: default_sample_times(),
            boundary_budget: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsSection {
    pub p: f64,
    pub nonlinearity_enabled: bool,
    pub potential: PotentialKind,
    pub modulation: Modulation,
    pub sigma: f64,
    pub decay_constant: f64,
}

impl Default for PhysicsSection {
    fn default() -> Self {
        PhysicsSection {
            p: 7.0,
            nonlinearity_enabled: true,
            potential: PotentialKind::Sech2Well {
                amplitude: -1.0,
                width: 1.0,
            },
            modulation: Modulation::None,
            sigma: 2.0,
            decay_constant: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExponentSection {
    pub alpha: f64,
    pub delta: f64,
    pub beta: f64,
    pub kappa: f64,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    /// Turn exponent-chain violations into load errors.
    pub strict: bool,
}

impl Default for ExponentSection {
    fn default() -> Self {
        ExponentSection {
            alpha: 0.5,
            delta: 0.3,
            beta: 0.4,
            kappa: 0.6,
            lambda: 0.3,
            mu: 0.4,
            nu: 0.3,
            strict: false,
        }
    }
}

/// One summand of the initial data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialComponent {
    /// `A exp(-(x - c)² / (2w²))`.
    Gaussian { amplitude: f64, center: f64, width: f64 },
    /// `A exp(-(x - c)² / (2w²)) e^{ik(x - c)}`.
    ShiftedPacket {
        amplitude: f64,
        center: f64,
        width: f64,
        wavenumber: f64,
    },
    /// Ground state of `-Δ + V(·, 0)` with the given mass.
    GroundState { mass: f64 },
    /// CSV with columns `re,im`, one row per grid point; the path is relative
    /// to the configuration file.
    File { path: PathBuf },
}

fn default_initial_data() -> Vec<InitialComponent> {
    vec![
        InitialComponent::GroundState { mass: 0.45 },
        InitialComponent::ShiftedPacket {
            amplitude: 0.2,
            center: 0.0,
            width: 1.5,
            wavenumber: 3.5,
        },
        InitialComponent::ShiftedPacket {
            amplitude: 0.2,
            center: 0.0,
            width: 1.5,
            wavenumber: -3.5,
        },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Final `H¹` Cauchy increment relative to `∥u₀∥_{H¹}`.
    pub cauchy_tolerance: f64,
    /// Exterior current relative to `∥u∥²_{H¹}` for the nonradiative flag.
    pub nonradiative_threshold: f64,
    /// Relative mass drift.
    pub mass_drift: f64,
    /// Relative energy drift (time-independent potentials only).
    pub energy_drift: f64,
    /// Normalized Heisenberg residual.
    pub heisenberg: f64,
    /// Largest save interval at which the Heisenberg check is judged.
    pub heisenberg_max_interval: f64,
    /// Sup-norm error against the closed-form free Gaussian.
    pub gaussian_oracle: f64,
    /// `I(T) − I(T/2) ≤ plateau · I(T/2)`.
    pub plateau: f64,
    /// Smallest `T/2` at which the plateau is judged rather than recorded.
    pub plateau_from: f64,
    /// Exterior mass of `u_loc` relative to `∥u₀∥`.
    pub exterior_mass: f64,
    /// Exterior energy of `u_loc` relative to `∥u₀∥_{H¹}`.
    pub exterior_energy: f64,
    /// Incoming and low channel exterior masses relative to `∥u₀∥`.
    pub channel: f64,
    /// Sample times over which the Cauchy increments must be nonincreasing.
    pub monotone_window: usize,
    /// Upper bound on the fitted `⟨|x|⟩` exponent, if judged.
    pub spreading_max: Option<f64>,
    /// Lower bound on the fitted `⟨|x|⟩` exponent, if judged.
    pub spreading_min: Option<f64>,
    /// Fit window; the last decade `[t_end/10, t_end]` when absent.
    pub spreading_window: Option<[f64; 2]>,
}

impl Default for Thresholds {
    fn default() -> Self {
        Thresholds {
            cauchy_tolerance: 1e-2,
            nonradiative_threshold: 1e-3,
            mass_drift: 1e-10,
            energy_drift: 1e-6,
            heisenberg: 1e-3,
            heisenberg_max_interval: 0.01,
            gaussian_oracle: 1e-8,
            plateau: 0.05,
            plateau_from: 10.0,
            exterior_mass: 0.05,
            exterior_energy: 0.10,
            channel: 0.05,
            monotone_window: 5,
            spreading_max: None,
            spreading_min: None,
            spreading_window: None,
        }
    }
}

pub fn default_lemmas() -> Vec<LemmaRequest> {
    vec![
        LemmaRequest::high_freq(0.3, 0.3, 0.2),
        LemmaRequest::low_freq(0.2, 0.95, 0.45),
        LemmaRequest::phys_fourier_comm(),
        LemmaRequest::approx_comm(),
        LemmaRequest::CommutatorIdentities { dim: 16 },
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cutoff_smoothness: u32,
    pub grid: GridSection,
    pub time: TimeSection,
    pub physics: PhysicsSection,
    pub exponents: ExponentSection,
    pub initial_data: Vec<InitialComponent>,
    pub thresholds: Thresholds,
    pub lemmas: Vec<LemmaRequest>,
    /// Directory against which relative paths resolve; not serialized.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            seed: 0,
            output_dir: PathBuf::from("out"),
            cutoff_smoothness: 5,
            grid: GridSection::default(),
            time: TimeSection::default(),
            physics: PhysicsSection::default(),
            exponents: ExponentSection::default(),
            initial_data: default_initial_data(),
            thresholds: Thresholds::default(),
            lemmas: default_lemmas(),
            base_dir: PathBuf::new(),
        }
    }
}

/// One evaluated inequality chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComplianceFlag {
    pub name: String,
    pub constraint: String,
    pub holds: bool,
    pub message: String,
}

/// A configuration that passed structural validation, with its compliance flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub compliance: Vec<ComplianceFlag>,
}

impl LoadedConfig {
    pub fn compliant(&self) -> bool {
        self.compliance.iter().all(|f| f.holds)
    }
}

fn flag(name: &str, constraint: String, holds: bool, detail: String) -> ComplianceFlag {
    let message = if holds {
        format!("{name}: {constraint} holds")
    } else {
        format!("{name}: violates {constraint} ({detail})")
    };
    ComplianceFlag {
        name: name.to_string(),
        constraint,
        holds,
        message,
    }
}

/// Evaluates the exponent chains for the given configuration.
pub fn exponent_flags(e: &ExponentSection, p: f64, nonlinear: bool, sigma: f64) -> Vec<ComplianceFlag> {
    let mut out = Vec::new();
    if nonlinear {
        out.push(flag("mass_supercritical", "p > 5".into(), p > 5.0, format!("p = {p}")));
        let a0 = alpha_zero(p);
        out.push(flag(
            "alpha",
            "alpha < alpha_0 = (p-5)(p+2)/(4(p+1))".into(),
            e.alpha < a0,
            format!("alpha = {}, alpha_0 = {a0:.6} at p = {p}", e.alpha),
        ));
    }
    let dmax = e.alpha.min(0.5);
    out.push(flag(
        "delta",
        "delta < min(1/2, alpha)".into(),
        e.delta < dmax,
        format!("delta = {}, bound = {dmax}", e.delta),
    ));
    let blo = (1.0 / 3.0f64).max(1.0 / sigma);
    let bhi = 1.0 - e.delta;
    out.push(flag(
        "beta",
        "max(1/3, 1/sigma) < beta < 1 - delta".into(),
        blo < e.beta && e.beta < bhi,
        format!("beta = {}, range = ({blo:.6}, {bhi:.6})", e.beta),
    ));
    let klo = (1.0 - e.delta).max(e.alpha).max(e.beta);
    out.push(flag(
        "kappa",
        "kappa > max(1 - delta, alpha, beta)".into(),
        e.kappa > klo,
        format!("kappa = {}, bound = {klo:.6}", e.kappa),
    ));
    let llo = 1.0 - e.kappa;
    let lhi = 0.5f64.min(1.0 - e.alpha).min(1.0 - e.beta);
    out.push(flag(
        "lambda",
        "1 - kappa < lambda < min(1/2, 1 - alpha, 1 - beta)".into(),
        llo < e.lambda && e.lambda < lhi,
        format!("lambda = {}, range = ({llo:.6}, {lhi:.6})", e.lambda),
    ));
    out.push(flag(
        "mu",
        "mu > beta".into(),
        e.mu > e.beta,
        format!("mu = {}, beta = {}", e.mu, e.beta),
    ));
    let nhi = [0.5, 1.0 - e.alpha, e.alpha, e.beta, 1.0 - e.beta, e.mu]
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    out.push(flag(
        "nu",
        "0 < nu < max(1/2, 1 - alpha, alpha, beta, 1 - beta, mu)".into(),
        e.nu > 0.0 && e.nu < nhi,
        format!("nu = {}, bound = {nhi:.6}", e.nu),
    ));
    out
}

fn field_err(field: &str, msg: impl std::fmt::Display) -> LabError {
    LabError::Config(format!("{field}: {msg}"))
}

impl ExperimentConfig {
    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.grid.n, self.grid.half_length).map_err(|e| field_err("grid", e))
    }

    pub fn profile(&self) -> Result<CutoffProfile> {
        CutoffProfile::new(self.cutoff_smoothness).map_err(|e| field_err("cutoff_smoothness", e))
    }

    pub fn potential_model(&self) -> Result<PotentialModel> {
        PotentialModel::new(
            self.physics.potential.clone(),
            self.physics.modulation,
            DecayCertificate {
                sigma: self.physics.sigma,
                constant: self.physics.decay_constant,
            },
        )
        .map_err(|e| field_err("physics.potential", e))
    }

    pub fn nonlinearity(&self) -> Result<Nonlinearity> {
        Nonlinearity::new(self.physics.p, self.physics.nonlinearity_enabled).map_err(|e| field_err("physics.p", e))
    }

    /// `p` when the nonlinearity is on.
    pub fn active_power(&self) -> Option<f64> {
        self.physics.nonlinearity_enabled.then_some(self.physics.p)
    }

    pub fn evolution(&self) -> EvolutionConfig {
        let t = &self.time;
        let mut cfg =
            EvolutionConfig::new(t.dt, t.t_start, t.t_end, t.save_stride).with_snapshots(t.sample_times.clone());
        cfg.boundary_budget = t.boundary_budget;
        cfg
    }

    pub fn wave_op(&self) -> WaveOpConfig {
        WaveOpConfig {
            alpha: self.exponents.alpha,
            delta: self.exponents.delta,
            sample_times: self.time.sample_times.clone(),
            cauchy_tolerance: self.thresholds.cauchy_tolerance,
            theorem_compliant: false,
        }
    }

    pub fn localization(&self) -> LocalizationExponents {
        LocalizationExponents {
            beta: self.exponents.beta,
            kappa: self.exponents.kappa,
            mu: self.exponents.mu,
        }
    }

    pub fn observable_config(&self) -> Result<ObservableConfig> {
        Ok(ObservableConfig::new(self.localization(), self.profile()?))
    }

    pub fn radiative(&self) -> RadiativeCriteria {
        RadiativeCriteria {
            beta: self.exponents.beta,
            threshold: self.thresholds.nonradiative_threshold,
        }
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.resolve(&self.output_dir)
    }

    /// Sums the initial-data components on `grid`.
    pub fn initial_state(&self, grid: &Grid) -> Result<StateVector> {
        let mut u = StateVector::zeros(grid);
        for (k, c) in self.initial_data.iter().enumerate() {
            let term = match c {
                InitialComponent::Gaussian { .. } | InitialComponent::ShiftedPacket { .. } => {
                    let (a, c0, w, k) = packet_params(c).unwrap();
                    StateVector::from_fn(grid, |x| packet_value(a, c0, w, k, x))
                }
                InitialComponent::GroundState { mass } => {
                    let model = self.potential_model()?;
                    ground_state(&model, grid, *mass)
                        .map_err(|e| field_err(&format!("initial_data[{k}]"), e))?
                        .state
                }
                InitialComponent::File { path } => read_state_csv(&self.resolve(path), grid)
                    .map_err(|e| field_err(&format!("initial_data[{k}].path"), e))?,
            };
            u = &u + &term;
        }
        Ok(u)
    }

    /// Structural validation plus compliance flags.
    pub fn validate(self) -> Result<LoadedConfig> {
        let grid = self.grid()?;
        self.profile()?;
        let model = self.potential_model()?;
        let nl = self.nonlinearity()?;
        let evo = self.evolution();
        evo.validate(&grid).map_err(|e| field_err("time", e))?;

        let e = &self.exponents;
        for (name, v) in [
            ("alpha", e.alpha),
            ("delta", e.delta),
            ("beta", e.beta),
            ("kappa", e.kappa),
            ("lambda", e.lambda),
            ("mu", e.mu),
            ("nu", e.nu),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(field_err(
                    &format!("exponents.{name}"),
                    format!("must lie in (0, 1), got {v}"),
                ));
            }
        }
        let ts = &self.time.sample_times;
        if ts.iter().any(|t| !(*t >= 1.0 && t.is_finite())) {
            return Err(field_err("time.sample_times", "sample times must be finite and >= 1"));
        }
        if ts.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(field_err("time.sample_times", "sample times must increase strictly"));
        }
        if ts.len() == 1 {
            return Err(field_err("time.sample_times", "give none or at least two sample times"));
        }
        if let Some(&last) = ts.last() {
            if last > self.time.t_end + 1e-12 {
                return Err(field_err(
                    "time.sample_times",
                    format!("sample time {last} lies beyond t_end = {}", self.time.t_end),
                ));
            }
        }
        let th = &self.thresholds;
        if !(th.cauchy_tolerance > 0.0) {
            return Err(field_err("thresholds.cauchy_tolerance", "must be positive"));
        }
        if !(th.nonradiative_threshold > 0.0) {
            return Err(field_err("thresholds.nonradiative_threshold", "must be positive"));
        }
        if let Some([lo, hi]) = th.spreading_window {
            if !(lo > 0.0 && lo < hi) {
                return Err(field_err(
                    "thresholds.spreading_window",
                    format!("need 0 < lo < hi, got [{lo}, {hi}]"),
                ));
            }
        }
        if th.monotone_window < 2 {
            return Err(field_err("thresholds.monotone_window", "must be at least 2"));
        }
        if !(self.physics.sigma > 0.0) {
            return Err(field_err("physics.sigma", "must be positive"));
        }
        let decay = check_potential_decay(&model, &grid)?;
        if !decay.pass {
            return Err(field_err(
                "physics.decay_constant",
                format!(
                    "potential violates sup <x>^sigma |V| <= C at sigma = {}: smallest admissible C is {:.6}",
                    self.physics.sigma, decay.c_effective
                ),
            ));
        }
        for (k, c) in self.initial_data.iter().enumerate() {
            match c {
                InitialComponent::Gaussian { width, .. } | InitialComponent::ShiftedPacket { width, .. } => {
                    if !(*width > 0.0) {
                        return Err(field_err(&format!("initial_data[{k}].width"), "must be positive"));
                    }
                }
                InitialComponent::GroundState { mass } => {
                    if !(*mass > 0.0) {
                        return Err(field_err(&format!("initial_data[{k}].mass"), "must be positive"));
                    }
                }
                InitialComponent::File { path } => {
                    let full = self.resolve(path);
                    if !full.is_file() {
                        return Err(field_err(
                            &format!("initial_data[{k}].path"),
                            format!("file {} does not exist", full.display()),
                        ));
                    }
                }
            }
        }
        let compliance = exponent_flags(e, nl.p, nl.enabled, self.physics.sigma);
        if e.strict {
            let bad: Vec<&str> = compliance
                .iter()
                .filter(|f| !f.holds)
                .map(|f| f.message.as_str())
                .collect();
            if !bad.is_empty() {
                return Err(field_err("exponents", bad.join("; ")));
            }
        }
        Ok(LoadedConfig {
            config: self,
            compliance,
        })
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| LabError::Config(format!("cannot serialize config: {e}")))
    }

    /// Default-completed document tree, used for dotted-path overrides.
    pub fn to_toml_value(&self) -> Result<toml::Value> {
        toml::Value::try_from(self).map_err(|e| LabError::Config(format!("cannot serialize config: {e}")))
    }
}

pub fn packet_params(c: &InitialComponent) -> Option<(f64, f64, f64, f64)> {
    match *c {
        InitialComponent::Gaussian {
            amplitude,
            center,
            width,
        } => Some((amplitude, center, width, 0.0)),
        InitialComponent::ShiftedPacket {
            amplitude,
            center,
            width,
            wavenumber,
        } => Some((amplitude, center, width, wavenumber)),
        _ => None,
    }
}

fn packet_value(a: f64, c: f64, w: f64, k: f64, x: f64) -> Complex64 {
    let y = x - c;
    Complex64::from_polar(a * (-y * y / (2.0 * w * w)).exp(), k * y)
}

/// Reads a `re,im` CSV with one row per grid point.
pub fn read_state_csv(path: &Path, grid: &Grid) -> Result<StateVector> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| LabError::Data(format!("{}: {e}", path.display())))?;
    let mut values = Vec::with_capacity(grid.n());
    for (row, rec) in rdr.deserialize::<(f64, f64)>().enumerate() {
        let (re, im) = rec.map_err(|e| LabError::Data(format!("{} row {}: {e}", path.display(), row + 1)))?;
        values.push(Complex64::new(re, im));
    }
    StateVector::new(grid, values)
}

/// Parses a TOML document; relative paths resolve against `base_dir`.
pub fn parse_config(text: &str, base_dir: &Path) -> Result<LoadedConfig> {
    let mut cfg: ExperimentConfig = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    cfg.base_dir = base_dir.to_path_buf();
    cfg.validate()
}

pub fn parse_error(text: &str, e: &toml::de::Error) -> LabError {
    let msg = e.message().to_string();
    match e.span() {
        Some(span) => {
            let line = text[..span.start.min(text.len())].matches('\n').count() + 1;
            LabError::Config(format!("parse error at line {line}: {msg}"))
        }
        None => LabError::Config(format!("parse error: {msg}")),
    }
}

pub fn load_config(path: &Path) -> Result<LoadedConfig> {
    let text =
        std::fs::read_to_string(path).map_err(|e| LabError::Config(format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    parse_config(&text, &base).map_err(|e| match e {
        LabError::Config(m) => LabError::Config(format!("{}: {m}", path.display())),
        other => other,
    })
}
