//! Space/frequency cutoffs, the free-channel restriction `J_free(t)` and the
//! incoming/outgoing/low-frequency partition.

use serde::{Deserialize, Serialize};

use super::operator::{
    ComposedOperator, FreqVariable, HalfLine, LinearCombination, LinearOperator, Primitive, SpaceVariable,
};
use super::profile::{CutoffProfile, Orientation};
use crate::error::{LabError, Result};
use crate::spectral::{Grid, StateVector};

/// Where a cutoff acts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CutoffDomain {
    Space,
    Frequency,
}

/// `F(|x|/A)` or `F(|ξ|/A)` with the given orientation.
pub fn apply_cutoff(
    state: &StateVector,
    domain: CutoffDomain,
    scale: f64,
    orientation: Orientation,
    profile: CutoffProfile,
) -> Result<StateVector> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(LabError::Domain(format!("cutoff scale must be positive, got {scale}")));
    }
    let prim = match domain {
        CutoffDomain::Space => Primitive::space(profile, orientation, SpaceVariable::Abs, scale),
        CutoffDomain::Frequency => Primitive::freq(profile, orientation, FreqVariable::Abs, scale),
    };
    Ok(ComposedOperator::new(vec![prim])?.apply(state))
}

fn check_unit_exponent(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v < 1.0 {
        Ok(())
    } else {
        Err(LabError::Domain(format!("{name} must lie in (0, 1), got {v}")))
    }
}

fn check_time(t: f64) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        Err(LabError::Domain(format!("channel operators need t >= 1, got {t}")))
    }
}

/// `J_free(t) = e^{itΔ} F(|x| ≤ t^α) e^{-itΔ} F(|D| ≥ t^{-δ})`.
pub fn j_free_operator(t: f64, alpha: f64, delta: f64, profile: CutoffProfile) -> Result<ComposedOperator> {
    check_time(t)?;
    check_unit_exponent("alpha", alpha)?;
    check_unit_exponent("delta", delta)?;
    ComposedOperator::new(vec![
        Primitive::propagation(t),
        Primitive::space(profile, Orientation::AtMost, SpaceVariable::Abs, t.powf(alpha)),
        Primitive::propagation(-t),
        Primitive::freq(profile, Orientation::AtLeast, FreqVariable::Abs, t.powf(-delta)),
    ])
}

/// `e^{-itΔ} J_free(t) = F(|x| ≤ t^α) e^{-itΔ} F(|D| ≥ t^{-δ})`, the map `u(t) ↦ w(t)`.
pub fn free_channel_profile_operator(
    t: f64,
    alpha: f64,
    delta: f64,
    profile: CutoffProfile,
) -> Result<ComposedOperator> {
    check_time(t)?;
    check_unit_exponent("alpha", alpha)?;
    check_unit_exponent("delta", delta)?;
    ComposedOperator::new(vec![
        Primitive::space(profile, Orientation::AtMost, SpaceVariable::Abs, t.powf(alpha)),
        Primitive::propagation(-t),
        Primitive::freq(profile, Orientation::AtLeast, FreqVariable::Abs, t.powf(-delta)),
    ])
}

pub fn apply_j_free(
    state: &StateVector,
    t: f64,
    alpha: f64,
    delta: f64,
    profile: CutoffProfile,
) -> Result<StateVector> {
    Ok(j_free_operator(t, alpha, delta, profile)?.apply(state))
}

/// The three projections `P^out`, `P^in`, `P^low` at `s = t^{-λ}`.
pub struct ChannelProjectors {
    pub outgoing: LinearCombination,
    pub incoming: LinearCombination,
    pub low: LinearCombination,
}

fn check_lambda(lambda: f64) -> Result<()> {
    if lambda > 0.0 && lambda < 0.5 {
        Ok(())
    } else {
        Err(LabError::Domain(format!(
            "channel exponent must lie in (0, 1/2), got {lambda}"
        )))
    }
}

/// `P^out = 1_{x≥0} F(D ≥ s) + 1_{x<0} F(-D ≥ s)`, `P^in` its mirror, `P^low = F(|D| ≤ s)`.
pub fn channel_projectors(grid: &Grid, t: f64, lambda: f64, profile: CutoffProfile) -> Result<ChannelProjectors> {
    check_time(t)?;
    check_lambda(lambda)?;
    let s = t.powf(-lambda);
    let pos = Primitive::indicator(HalfLine::NonNegative);
    let neg = Primitive::indicator(HalfLine::Negative);
    let right = Primitive::freq(profile, Orientation::AtLeast, FreqVariable::Plus, s);
    let left = Primitive::freq(profile, Orientation::AtLeast, FreqVariable::Minus, s);
    let low = Primitive::freq(profile, Orientation::AtMost, FreqVariable::Abs, s);
    let pipe = |a: Primitive, b: Primitive| ComposedOperator::new(vec![a, b]).map(|op| op.compile(grid));
    Ok(ChannelProjectors {
        outgoing: LinearCombination {
            terms: vec![(1.0, pipe(pos, right)?), (1.0, pipe(neg, left)?)],
        },
        incoming: LinearCombination {
            terms: vec![(1.0, pipe(pos, left)?), (1.0, pipe(neg, right)?)],
        },
        low: LinearCombination {
            terms: vec![(1.0, ComposedOperator::new(vec![low])?.compile(grid))],
        },
    })
}

/// Outgoing, incoming and low-frequency parts of a state.
#[derive(Debug, Clone)]
pub struct ChannelSplit {
    pub outgoing: StateVector,
    pub incoming: StateVector,
    pub low: StateVector,
}

pub fn split_in_out_low(state: &StateVector, t: f64, lambda: f64, profile: CutoffProfile) -> Result<ChannelSplit> {
    let p = channel_projectors(state.grid(), t, lambda, profile)?;
    Ok(ChannelSplit {
        outgoing: p.outgoing.apply(state),
        incoming: p.incoming.apply(state),
        low: p.low.apply(state),
    })
}
