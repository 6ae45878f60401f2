//! Numerical decay rates of the stationary-phase and commutator operator
//! bounds, by power-iteration norm estimates and log-log fits.
//!
//! The bounds concern operators on `ℝ`; on the periodic grid each pipeline is
//! regularised so the torus cannot fake or hide decay:
//! * `high_freq` carries a smooth band taper `F(|D| ≤ ξ_max/2)` and a box large
//!   enough that the fastest retained mode does not wrap by `t_max`;
//! * `approx_comm` bounds half-line cutoffs by a smooth box window
//!   `F(|x| ≤ L/4)` (or `F(|D| ≤ ξ_max/4)`) on the input side.

use serde::{Deserialize, Serialize};

use super::commutators::verify_commutator_identities;
use super::operator::{
    estimate_operator_norm_with, ComposedOperator, FreqVariable, LinearCombination, LinearOperator, PowerIteration,
    Primitive, SpaceVariable,
};
use super::profile::{CutoffProfile, Orientation};
use crate::error::{LabError, Result};
use crate::fit::{fit_power_law, ExponentFit};
use crate::spectral::Grid;

fn default_time_samples() -> Vec<f64> {
    vec![16.0, 32.0, 64.0, 128.0]
}
fn default_low_time_samples() -> Vec<f64> {
    vec![32.0, 64.0, 128.0, 256.0]
}
fn default_lemma_n() -> usize {
    4096
}
fn default_high_threshold() -> f64 {
    -3.0
}
fn default_low_threshold() -> f64 {
    -2.5
}
fn default_low_half_length() -> f64 {
    1024.0
}
fn default_scales() -> Vec<f64> {
    vec![8.0, 16.0, 32.0, 64.0]
}
fn default_fixed_scale() -> f64 {
    8.0
}
fn default_target_slope() -> f64 {
    -1.0
}
fn default_slope_tolerance() -> f64 {
    0.2
}
fn default_pairs() -> Vec<[f64; 2]> {
    vec![[4.0, 4.0], [8.0, 8.0], [16.0, 16.0], [32.0, 32.0]]
}
fn default_approx_bound() -> f64 {
    1e-6
}
fn default_approx_from() -> f64 {
    256.0
}
fn default_identity_dim() -> usize {
    16
}

/// One lemma experiment with its exponents, sampling and pass threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "lemma", rename_all = "snake_case", deny_unknown_fields)]
pub enum LemmaRequest {
    /// `∥F(|x| ≤ t^α) e^{itΔ} F(|D| ≥ t^{-δ}) F(|x| ≤ t^β)∥`, needs `δ < min(1/2, 1-α, 1-β)`.
    HighFreq {
        alpha: f64,
        beta: f64,
        delta: f64,
        #[serde(default = "default_time_samples")]
        t_samples: Vec<f64>,
        #[serde(default = "default_lemma_n")]
        n: usize,
        #[serde(default = "default_high_threshold")]
        slope_threshold: f64,
    },
    /// `∥F(|x| ≥ t^β) e^{itΔ} F(|D| ≤ t^{-δ}) F(|x| ≤ t^α)∥`, needs `β > max(α, δ, 1-δ)`.
    LowFreq {
        alpha: f64,
        beta: f64,
        delta: f64,
        #[serde(default = "default_low_time_samples")]
        t_samples: Vec<f64>,
        #[serde(default = "default_lemma_n")]
        n: usize,
        #[serde(default = "default_low_half_length")]
        half_length: f64,
        #[serde(default = "default_low_threshold")]
        slope_threshold: f64,
    },
    /// `∥[F(|x| ≤ A), F(|D| ≤ B)]∥`, swept in `A` at fixed `B` and in `B` at fixed `A`.
    PhysFourierComm {
        #[serde(default = "default_scales")]
        scales: Vec<f64>,
        #[serde(default = "default_fixed_scale")]
        fixed: f64,
        #[serde(default = "default_target_slope")]
        target_slope: f64,
        #[serde(default = "default_slope_tolerance")]
        tolerance: f64,
    },
    /// `∥F(D > B) F(|x| ≤ A) F(D ≤ B/100)∥` and `∥F(x > B) F(|D| ≤ A) F(x ≤ B/100)∥`.
    ApproxComm {
        #[serde(default = "default_pairs")]
        pairs: Vec<[f64; 2]>,
        #[serde(default = "default_approx_bound")]
        bound: f64,
        /// Smallest `AB` at which `bound` must hold.
        #[serde(default = "default_approx_from")]
        bound_from_product: f64,
    },
    /// Residuals of the commutator identities on random dense matrices.
    CommutatorIdentities {
        #[serde(default = "default_identity_dim")]
        dim: usize,
    },
}

impl LemmaRequest {
    pub fn name(&self) -> &'static str {
        match self {
            LemmaRequest::HighFreq { .. } => "high_freq",
            LemmaRequest::LowFreq { .. } => "low_freq",
            LemmaRequest::PhysFourierComm { .. } => "phys_fourier_comm",
            LemmaRequest::ApproxComm { .. } => "approx_comm",
            LemmaRequest::CommutatorIdentities { .. } => "commutator_identities",
        }
    }

    pub fn high_freq(alpha: f64, beta: f64, delta: f64) -> LemmaRequest {
        LemmaRequest::HighFreq {
            alpha,
            beta,
            delta,
            t_samples: default_time_samples(),
            n: default_lemma_n(),
            slope_threshold: default_high_threshold(),
        }
    }

    pub fn low_freq(alpha: f64, beta: f64, delta: f64) -> LemmaRequest {
        LemmaRequest::LowFreq {
            alpha,
            beta,
            delta,
            t_samples: default_low_time_samples(),
            n: default_lemma_n(),
            half_length: default_low_half_length(),
            slope_threshold: default_low_threshold(),
        }
    }

    pub fn phys_fourier_comm() -> LemmaRequest {
        LemmaRequest::PhysFourierComm {
            scales: default_scales(),
            fixed: default_fixed_scale(),
            target_slope: default_target_slope(),
            tolerance: default_slope_tolerance(),
        }
    }

    pub fn approx_comm() -> LemmaRequest {
        LemmaRequest::ApproxComm {
            pairs: default_pairs(),
            bound: default_approx_bound(),
            bound_from_product: default_approx_from(),
        }
    }

    /// Checks the lemma's hypotheses; the error names the violated inequality.
    pub fn check_hypotheses(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(LabError::Precondition(format!("{name} = {v} must be positive")))
            }
        };
        match *self {
            LemmaRequest::HighFreq { alpha, beta, delta, .. } => {
                positive("alpha", alpha)?;
                positive("beta", beta)?;
                positive("delta", delta)?;
                if delta >= 0.5 {
                    return Err(LabError::Precondition(format!(
                        "hypothesis delta < 1/2 violated: delta = {delta}"
                    )));
                }
                if delta >= 1.0 - alpha {
                    return Err(LabError::Precondition(format!(
                        "hypothesis delta < 1 - alpha violated: delta = {delta}, 1 - alpha = {}",
                        1.0 - alpha
                    )));
                }
                if delta >= 1.0 - beta {
                    return Err(LabError::Precondition(format!(
                        "hypothesis delta < 1 - beta violated: delta = {delta}, 1 - beta = {}",
                        1.0 - beta
                    )));
                }
            }
            LemmaRequest::LowFreq { alpha, beta, delta, .. } => {
                positive("alpha", alpha)?;
                positive("beta", beta)?;
                positive("delta", delta)?;
                for (name, bound) in [("alpha", alpha), ("delta", delta), ("1 - delta", 1.0 - delta)] {
                    if beta <= bound {
                        return Err(LabError::Precondition(format!(
                            "hypothesis beta > {name} violated: beta = {beta}, {name} = {bound}"
                        )));
                    }
                }
            }
            LemmaRequest::PhysFourierComm { fixed, ref scales, .. } => {
                positive("fixed scale", fixed)?;
                for &s in scales {
                    positive("scale", s)?;
                }
            }
            LemmaRequest::ApproxComm { ref pairs, .. } => {
                for p in pairs {
                    positive("A", p[0])?;
                    positive("B", p[1])?;
                }
            }
            LemmaRequest::CommutatorIdentities { .. } => {}
        }
        Ok(())
    }
}

/// One estimated norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaSample {
    pub label: String,
    /// Sweep variable: `t`, `A`, `B` or `AB`.
    pub parameter: f64,
    pub norm: f64,
    pub n: usize,
    pub half_length: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedFit {
    pub name: String,
    pub fit: ExponentFit,
}

/// Result of [`verify_lemma_decay`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LemmaReport {
    pub lemma: String,
    pub samples: Vec<LemmaSample>,
    pub fits: Vec<NamedFit>,
    pub criterion: String,
    pub pass: bool,
}

const LEMMA_TRIALS: usize = 1;

fn controls() -> PowerIteration {
    PowerIteration {
        max_iters: 3000,
        tolerance: 1e-10,
        // Norms below 1e-14 are excluded from the fits anyway.
        floor: 1e-28,
    }
}

fn norm_of(op: &dyn LinearOperator, grid: &Grid, seed: u64) -> f64 {
    estimate_operator_norm_with(op, grid, LEMMA_TRIALS, seed, controls())
}

fn next_pow2(v: f64) -> usize {
    (v.max(16.0).ceil() as usize).next_power_of_two()
}

/// Box half-length for `high_freq`: modes up to `ξ_max` travel `2 ξ_max t`,
/// which together with the two window widths must stay below `2L`.
pub fn high_freq_half_length(n: usize, t_max: f64, alpha: f64, beta: f64) -> f64 {
    let w = 2.0 * (t_max.powf(alpha) + t_max.powf(beta));
    let pi = std::f64::consts::PI;
    let l = 1.1 * (w + (w * w + 8.0 * pi * n as f64 * t_max).sqrt()) / 4.0;
    (l / 64.0).ceil() * 64.0
}

/// Builds the lemma operators, estimates their norms and fits the decay.
pub fn verify_lemma_decay(request: &LemmaRequest, profile: CutoffProfile, seed: u64) -> Result<LemmaReport> {
    request.check_hypotheses()?;
    let p = profile;
    match request {
        LemmaRequest::CommutatorIdentities { dim } => {
            let r = verify_commutator_identities(*dim, seed)?;
            let sample = |label: &str, v: f64| LemmaSample {
                label: label.into(),
                parameter: *dim as f64,
                norm: v,
                n: *dim,
                half_length: 0.0,
            };
            Ok(LemmaReport {
                lemma: request.name().into(),
                samples: vec![
                    sample("anti_comm", r.anti_comm),
                    sample("anti_comm_general", r.anti_comm_general),
                    sample("two_term", r.two_term),
                    sample("three_term", r.three_term),
                    sample("anti_comm_sign_flipped", r.anti_comm_flipped_residual),
                    sample("three_term_missing_factor", r.three_term_truncated_residual),
                ],
                fits: Vec::new(),
                criterion: format!("relative residuals <= {:e}", r.tolerance),
                pass: r.pass,
            })
        }
        LemmaRequest::HighFreq {
            alpha,
            beta,
            delta,
            t_samples,
            n,
            slope_threshold,
        } => {
            let t_max = t_samples.iter().cloned().fold(1.0, f64::max);
            let half_length = high_freq_half_length(*n, t_max, *alpha, *beta);
            let grid = Grid::new(*n, half_length)?;
            let taper = Primitive::freq(p, Orientation::AtMost, FreqVariable::Abs, grid.xi_max() / 2.0);
            let mut samples = Vec::new();
            for &t in t_samples {
                check_t(t)?;
                let op = ComposedOperator::new(vec![
                    Primitive::space(p, Orientation::AtMost, SpaceVariable::Abs, t.powf(*alpha)),
                    Primitive::propagation(t),
                    Primitive::freq(p, Orientation::AtLeast, FreqVariable::Abs, t.powf(-delta)),
                    taper,
                    Primitive::space(p, Orientation::AtMost, SpaceVariable::Abs, t.powf(*beta)),
                ])?
                .compile(&grid);
                samples.push(LemmaSample {
                    label: format!("t={t}"),
                    parameter: t,
                    norm: norm_of(&op, &grid, seed),
                    n: *n,
                    half_length,
                });
            }
            slope_report(request.name(), samples, *slope_threshold)
        }
        LemmaRequest::LowFreq {
            alpha,
            beta,
            delta,
            t_samples,
            n,
            half_length,
            slope_threshold,
        } => {
            let grid = Grid::new(*n, *half_length)?;
            let mut samples = Vec::new();
            for &t in t_samples {
                check_t(t)?;
                let op = ComposedOperator::new(vec![
                    Primitive::space(p, Orientation::AtLeast, SpaceVariable::Abs, t.powf(*beta)),
                    Primitive::propagation(t),
                    Primitive::freq(p, Orientation::AtMost, FreqVariable::Abs, t.powf(-delta)),
                    Primitive::space(p, Orientation::AtMost, SpaceVariable::Abs, t.powf(*alpha)),
                ])?
                .compile(&grid);
                samples.push(LemmaSample {
                    label: format!("t={t}"),
                    parameter: t,
                    norm: norm_of(&op, &grid, seed),
                    n: *n,
                    half_length: *half_length,
                });
            }
            slope_report(request.name(), samples, *slope_threshold)
        }
        LemmaRequest::PhysFourierComm {
            scales,
            fixed,
            target_slope,
            tolerance,
        } => {
            let comm_norm = |a: f64, b: f64| -> Result<(f64, usize, f64)> {
                let half_length = 4.0 * a;
                let n = next_pow2(2.0 * half_length * 4.0 * b / std::f64::consts::PI);
                let grid = Grid::new(n, half_length)?;
                let x = ComposedOperator::new(vec![Primitive::space(p, Orientation::AtMost, SpaceVariable::Abs, a)])?;
                let d = ComposedOperator::new(vec![Primitive::freq(p, Orientation::AtMost, FreqVariable::Abs, b)])?;
                let c = LinearCombination::commutator(&x, &d, &grid);
                Ok((norm_of(&c, &grid, seed), n, half_length))
            };
            let mut samples = Vec::new();
            for &a in scales {
                let (norm, n, l) = comm_norm(a, *fixed)?;
                samples.push(LemmaSample {
                    label: format!("A={a},B={fixed}"),
                    parameter: a,
                    norm,
                    n,
                    half_length: l,
                });
            }
            for &b in scales {
                let (norm, n, l) = comm_norm(*fixed, b)?;
                samples.push(LemmaSample {
                    label: format!("A={fixed},B={b}"),
                    parameter: b,
                    norm,
                    n,
                    half_length: l,
                });
            }
            let k = scales.len();
            let fit_of = |s: &[LemmaSample]| {
                let t: Vec<f64> = s.iter().map(|x| x.parameter).collect();
                let v: Vec<f64> = s.iter().map(|x| x.norm).collect();
                fit_power_law(&t, &v)
            };
            let fit_a = fit_of(&samples[..k])?;
            let fit_b = fit_of(&samples[k..])?;
            let pass =
                (fit_a.slope - target_slope).abs() <= *tolerance && (fit_b.slope - target_slope).abs() <= *tolerance;
            Ok(LemmaReport {
                lemma: request.name().into(),
                samples,
                fits: vec![
                    NamedFit {
                        name: "slope_in_A".into(),
                        fit: fit_a,
                    },
                    NamedFit {
                        name: "slope_in_B".into(),
                        fit: fit_b,
                    },
                ],
                criterion: format!("both slopes within {target_slope} +/- {tolerance}"),
                pass,
            })
        }
        LemmaRequest::ApproxComm {
            pairs,
            bound,
            bound_from_product,
        } => {
            let mut samples = Vec::new();
            for &[a, b] in pairs {
                let pi = std::f64::consts::PI;
                // Frequency-side version: x-cutoff at scale A, frequency separation B.
                let l1 = 8.0 * a;
                let n1 = next_pow2(2.0 * l1 * 4.0 * b / pi).max(1024);
                let g1 = Grid::new(n1, l1)?;
                let op1 = ComposedOperator::new(vec![
                    Primitive::freq(p, Orientation::AtLeast, FreqVariable::Plus, b),
                    Primitive::space(p, Orientation::AtMost, SpaceVariable::Abs, a),
                    Primitive::freq(p, Orientation::AtMost, FreqVariable::Plus, b / 100.0),
                    Primitive::freq(p, Orientation::AtMost, FreqVariable::Abs, g1.xi_max() / 4.0),
                ])?
                .compile(&g1);
                samples.push(LemmaSample {
                    label: format!("freq_side A={a},B={b}"),
                    parameter: a * b,
                    norm: norm_of(&op1, &g1, seed),
                    n: n1,
                    half_length: l1,
                });
                // Space-side version: frequency cutoff at scale A, x separation B.
                let l2 = 8.0 * b;
                let n2 = next_pow2(2.0 * l2 * 4.0 * a / pi).max(1024);
                let g2 = Grid::new(n2, l2)?;
                let op2 = ComposedOperator::new(vec![
                    Primitive::space(p, Orientation::AtLeast, SpaceVariable::Signed, b),
                    Primitive::freq(p, Orientation::AtMost, FreqVariable::Abs, a),
                    Primitive::space(p, Orientation::AtMost, SpaceVariable::Signed, b / 100.0),
                    Primitive::space(p, Orientation::AtMost, SpaceVariable::Abs, l2 / 4.0),
                ])?
                .compile(&g2);
                samples.push(LemmaSample {
                    label: format!("space_side A={a},B={b}"),
                    parameter: a * b,
                    norm: norm_of(&op2, &g2, seed),
                    n: n2,
                    half_length: l2,
                });
            }
            let mut fits = Vec::new();
            for side in ["freq_side", "space_side"] {
                let pts: Vec<&LemmaSample> = samples
                    .iter()
                    .filter(|s| s.label.starts_with(side) && s.norm > 1e-14)
                    .collect();
                if pts.len() >= 2 {
                    let t: Vec<f64> = pts.iter().map(|s| s.parameter).collect();
                    let v: Vec<f64> = pts.iter().map(|s| s.norm).collect();
                    if let Ok(fit) = fit_power_law(&t, &v) {
                        fits.push(NamedFit {
                            name: format!("{side}_slope_in_AB"),
                            fit,
                        });
                    }
                }
            }
            let checked: Vec<&LemmaSample> = samples.iter().filter(|s| s.parameter >= *bound_from_product).collect();
            let pass = !checked.is_empty() && checked.iter().all(|s| s.norm <= *bound);
            Ok(LemmaReport {
                lemma: request.name().into(),
                samples,
                fits,
                criterion: format!("norms <= {bound:e} for AB >= {bound_from_product}"),
                pass,
            })
        }
    }
}

fn check_t(t: f64) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        Err(LabError::Domain(format!("lemma times must be >= 1, got {t}")))
    }
}

fn slope_report(name: &str, samples: Vec<LemmaSample>, threshold: f64) -> Result<LemmaReport> {
    let t: Vec<f64> = samples.iter().map(|s| s.parameter).collect();
    let v: Vec<f64> = samples.iter().map(|s| s.norm).collect();
    let fit = fit_power_law(&t, &v)?;
    Ok(LemmaReport {
        lemma: name.into(),
        pass: fit.slope <= threshold,
        criterion: format!("fitted slope <= {threshold}"),
        fits: vec![NamedFit {
            name: "slope_in_t".into(),
            fit,
        }],
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hypothesis_violations_are_named() {
        let r = LemmaRequest::high_freq(0.9, 0.3, 0.4);
        match verify_lemma_decay(&r, CutoffProfile::default(), 0) {
            Err(LabError::Precondition(m)) => assert!(m.contains("1 - alpha"), "{m}"),
            other => panic!("expected precondition error, got {other:?}"),
        }
        let r = LemmaRequest::low_freq(0.2, 0.5, 0.45);
        match r.check_hypotheses() {
            Err(LabError::Precondition(m)) => assert!(m.contains("1 - delta"), "{m}"),
            other => panic!("expected precondition error, got {other:?}"),
        }
        assert!(LemmaRequest::high_freq(0.3, 0.3, 0.6).check_hypotheses().is_err());
        assert!(LemmaRequest::high_freq(0.3, 0.3, 0.2).check_hypotheses().is_ok());
    }

    #[test]
    fn half_length_rule_prevents_wrap() {
        let l = high_freq_half_length(4096, 128.0, 0.3, 0.3);
        let xi_max = std::f64::consts::PI * 4096.0 / (2.0 * l);
        let w = 4.0 * 128f64.powf(0.3);
        assert!(2.0 * xi_max * 128.0 + w < 2.0 * l);
        assert_eq!(l % 64.0, 0.0);
    }

    #[test]
    fn small_high_freq_sweep_decays() {
        // Cheap version of the acceptance sweep: the norm falls with t.
        let r = LemmaRequest::HighFreq {
            alpha: 0.3,
            beta: 0.3,
            delta: 0.2,
            t_samples: vec![8.0, 16.0],
            n: 1024,
            slope_threshold: -1.0,
        };
        let rep = verify_lemma_decay(&r, CutoffProfile::default(), 1).unwrap();
        assert!(rep.samples[1].norm < rep.samples[0].norm);
        assert!(rep.samples.iter().all(|s| s.norm <= 1.0 + 1e-9));
    }

    #[test]
    fn commutator_row_reports_residuals() {
        let rep = verify_lemma_decay(
            &LemmaRequest::CommutatorIdentities { dim: 16 },
            CutoffProfile::default(),
            4,
        )
        .unwrap();
        assert!(rep.pass);
        assert!(rep.samples[..4].iter().all(|s| s.norm <= 1e-12));
        assert!(rep.samples[4..].iter().all(|s| s.norm > 0.1));
    }

    #[test]
    fn request_round_trips_through_serde() {
        let r = LemmaRequest::approx_comm();
        let s = serde_json::to_string(&r).unwrap();
        let back: LemmaRequest = serde_json::from_str(&s).unwrap();
        assert_eq!(r, back);
        let minimal: LemmaRequest =
            serde_json::from_str(r#"{"lemma":"high_freq","alpha":0.3,"beta":0.3,"delta":0.2}"#).unwrap();
        assert_eq!(minimal, LemmaRequest::high_freq(0.3, 0.3, 0.2));
    }
}
