//! Localized potentials `V(x,t)` with optional sinusoidal time modulation
//! and a numerical check of the weighted decay bounds
//! `sup |⟨x⟩^σ V| ≤ C`, `sup |⟨x⟩^{σ+1} ∂_x V| ≤ C`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::spectral::{apply_derivative, Derivative, Grid, StateVector};

/// Spatial profile of the potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialKind {
    None,
    /// `V₀ sech²(x/w)`.
    Sech2Well {
        amplitude: f64,
        width: f64,
    },
    /// `V₀ exp(-(x/w)²)`.
    GaussianBump {
        amplitude: f64,
        width: f64,
    },
    /// Samples on a specific grid.
    Tabulated {
        values: Vec<f64>,
    },
}

/// Time dependence multiplying the spatial profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Modulation {
    #[default]
    None,
    /// Factor `1 + depth · sin(frequency · t)`.
    Sinusoidal { frequency: f64, depth: f64 },
}

impl Modulation {
    pub fn factor(&self, t: f64) -> f64 {
        match *self {
            Modulation::None => 1.0,
            Modulation::Sinusoidal { frequency, depth } => 1.0 + depth * (frequency * t).sin(),
        }
    }

    pub fn is_static(&self) -> bool {
        matches!(self, Modulation::None)
    }
}

/// Declared decay exponent σ and constant C.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayCertificate {
    pub sigma: f64,
    pub constant: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialModel {
    pub kind: PotentialKind,
    pub modulation: Modulation,
    pub certificate: DecayCertificate,
}

impl PotentialModel {
    pub fn new(kind: PotentialKind, modulation: Modulation, certificate: DecayCertificate) -> Result<PotentialModel> {
        let model = PotentialModel {
            kind,
            modulation,
            certificate,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn none() -> PotentialModel {
        PotentialModel {
            kind: PotentialKind::None,
            modulation: Modulation::None,
            certificate: DecayCertificate {
                sigma: 2.0,
                constant: 1.0,
            },
        }
    }

    pub fn sech2_well(amplitude: f64, width: f64, certificate: DecayCertificate) -> Result<Self> {
        PotentialModel::new(
            PotentialKind::Sech2Well { amplitude, width },
            Modulation::None,
            certificate,
        )
    }

    pub fn with_modulation(mut self, modulation: Modulation) -> Result<Self> {
        self.modulation = modulation;
        self.validate()?;
        Ok(self)
    }

    /// Parameter checks that do not need a grid.
    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            PotentialKind::None | PotentialKind::Tabulated { .. } => {}
            PotentialKind::Sech2Well { amplitude, width } | PotentialKind::GaussianBump { amplitude, width } => {
                if !amplitude.is_finite() {
                    return Err(LabError::Config("potential amplitude must be finite".into()));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(LabError::Config(format!(
                        "potential width must be positive, got {width}"
                    )));
                }
            }
        }
        if let PotentialKind::Tabulated { values } = &self.kind {
            if values.iter().any(|v| !v.is_finite()) {
                return Err(LabError::Config("tabulated potential has non-finite samples".into()));
            }
        }
        if let Modulation::Sinusoidal { frequency, depth } = self.modulation {
            if !(0.0..=1.0).contains(&depth) {
                return Err(LabError::Config(format!(
                    "modulation depth must lie in [0, 1], got {depth}"
                )));
            }
            if !frequency.is_finite() {
                return Err(LabError::Config("modulation frequency must be finite".into()));
            }
        }
        let DecayCertificate { sigma, constant } = self.certificate;
        if !(sigma >= 2.0 && sigma.is_finite()) {
            return Err(LabError::Config(format!(
                "decay exponent sigma must be >= 2, got {sigma}"
            )));
        }
        if !(constant > 0.0 && constant.is_finite()) {
            return Err(LabError::Config(format!(
                "decay constant C must be positive, got {constant}"
            )));
        }
        Ok(())
    }

    pub fn is_time_independent(&self) -> bool {
        self.modulation.is_static() || matches!(self.kind, PotentialKind::None)
    }

    /// Spatial profile at `t = 0` before modulation, sampled on `grid`.
    pub fn profile(&self, grid: &Grid) -> Result<Vec<f64>> {
        let x = grid.x();
        Ok(match &self.kind {
            PotentialKind::None => vec![0.0; grid.n()],
            PotentialKind::Sech2Well { amplitude, width } => x
                .iter()
                .map(|&xj| {
                    let s = 1.0 / (xj / width).cosh();
                    amplitude * s * s
                })
                .collect(),
            PotentialKind::GaussianBump { amplitude, width } => {
                x.iter().map(|&xj| amplitude * (-(xj / width).powi(2)).exp()).collect()
            }
            PotentialKind::Tabulated { values } => {
                if values.len() != grid.n() {
                    return Err(LabError::Config(format!(
                        "tabulated potential has {} samples but the grid has n = {}",
                        values.len(),
                        grid.n()
                    )));
                }
                values.clone()
            }
        })
    }
}

/// Samples `V(x_j, t)`.
pub fn evaluate_potential(model: &PotentialModel, grid: &Grid, t: f64) -> Result<Vec<f64>> {
    let factor = model.modulation.factor(t);
    let mut v = model.profile(grid)?;
    if factor != 1.0 {
        for vj in &mut v {
            *vj *= factor;
        }
    }
    Ok(v)
}

/// Potential profile sampled once, rescaled per time by the modulation factor.
#[derive(Debug, Clone)]
pub struct PotentialField {
    profile: Vec<f64>,
    modulation: Modulation,
    zero: bool,
}

impl PotentialField {
    pub fn new(model: &PotentialModel, grid: &Grid) -> Result<PotentialField> {
        let profile = model.profile(grid)?;
        let zero = profile.iter().all(|&v| v == 0.0);
        Ok(PotentialField {
            profile,
            modulation: model.modulation,
            zero,
        })
    }

    pub fn profile(&self) -> &[f64] {
        &self.profile
    }

    pub fn factor(&self, t: f64) -> f64 {
        self.modulation.factor(t)
    }

    pub fn is_zero(&self) -> bool {
        self.zero
    }

    pub fn at(&self, t: f64) -> Vec<f64> {
        let f = self.factor(t);
        self.profile.iter().map(|v| v * f).collect()
    }
}

/// Outcome of [`check_potential_decay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayReport {
    /// Largest σ' ≤ 64 for which both bounds hold with the declared C;
    /// `None` when the bounds hold for every σ' tried (e.g. `V ≡ 0`).
    pub sigma_effective: Option<f64>,
    /// Smallest C for which both bounds hold at the declared σ.
    pub c_effective: f64,
    pub pass: bool,
}

const SIGMA_CAP: f64 = 64.0;

/// Evaluates the weighted sup bounds on the grid over one modulation period.
pub fn check_potential_decay(model: &PotentialModel, grid: &Grid) -> Result<DecayReport> {
    let profile = model.profile(grid)?;
    let dv = apply_derivative(
        &StateVector::from_parts(grid, profile.iter().map(|&v| v.into()).collect()),
        Derivative::First,
    );
    let dv: Vec<f64> = dv.values().iter().map(|z| z.re).collect();

    // Sup of the modulation factor over a sampled period (including its peak).
    let max_factor = match model.modulation {
        Modulation::None => 1.0,
        Modulation::Sinusoidal { frequency, .. } => {
            let period = if frequency != 0.0 {
                2.0 * std::f64::consts::PI / frequency.abs()
            } else {
                1.0
            };
            let mut m = (0..=64)
                .map(|k| model.modulation.factor(period * k as f64 / 64.0).abs())
                .fold(0.0, f64::max);
            if frequency != 0.0 {
                m = m.max(model.modulation.factor(period / 4.0).abs());
            }
            m
        }
    };

    let weighted_sup = |sigma: f64| -> f64 {
        grid.x()
            .iter()
            .zip(profile.iter().zip(&dv))
            .map(|(&x, (&v, &d))| {
                let bracket = (1.0 + x * x).sqrt();
                (bracket.powf(sigma) * v.abs()).max(bracket.powf(sigma + 1.0) * d.abs())
            })
            .fold(0.0, f64::max)
            * max_factor
    };

    let DecayCertificate { sigma, constant } = model.certificate;
    let c_effective = weighted_sup(sigma);
    let pass = c_effective <= constant;

    let sigma_effective = if weighted_sup(SIGMA_CAP) <= constant {
        None
    } else if weighted_sup(0.0) > constant {
        Some(0.0)
    } else {
        let (mut lo, mut hi) = (0.0, SIGMA_CAP);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if weighted_sup(mid) <= constant {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(lo)
    };

    Ok(DecayReport {
        sigma_effective,
        c_effective,
        pass,
    })
}
