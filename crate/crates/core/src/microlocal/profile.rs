//! Polynomial smoothstep cutoffs: `F_≥(y) = S(y - 1)` rises from 0 at `y = 1`
//! to 1 at `y = 2`, and `F_≤ = 1 - F_≥`.

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};

const MAX_SMOOTHNESS: u32 = 7;

fn binomial(n: u64, k: u64) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Which side of the transition the cutoff keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    /// `F(· ≤ A)`: 1 below `A`, 0 above `2A`.
    AtMost,
    /// `F(· ≥ A)`: 0 below `A`, 1 above `2A`.
    AtLeast,
}

/// `C^k` smoothstep of degree `2k + 1`:
/// `S(s) = s^{k+1} Σ_{j=0}^{k} C(k+j, j) C(2k+1, k-j) (-s)^j` on `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ProfileSpec", into = "ProfileSpec")]
pub struct CutoffProfile {
    smoothness: u32,
    coeffs: [f64; (MAX_SMOOTHNESS + 1) as usize],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProfileSpec {
    pub smoothness: u32,
}

impl TryFrom<ProfileSpec> for CutoffProfile {
    type Error = LabError;
    fn try_from(spec: ProfileSpec) -> Result<CutoffProfile> {
        CutoffProfile::new(spec.smoothness)
    }
}

impl From<CutoffProfile> for ProfileSpec {
    fn from(p: CutoffProfile) -> ProfileSpec {
        ProfileSpec {
            smoothness: p.smoothness,
        }
    }
}

impl Default for CutoffProfile {
    fn default() -> Self {
        CutoffProfile::new(5).expect("default smoothness is valid")
    }
}

impl CutoffProfile {
    /// Profile with `k` continuous derivatives at the edges, `1 ≤ k ≤ 7`.
    pub fn new(k: u32) -> Result<CutoffProfile> {
        if !(1..=MAX_SMOOTHNESS).contains(&k) {
            return Err(LabError::Config(format!(
                "cutoff smoothness must lie in 1..={MAX_SMOOTHNESS}, got {k}"
            )));
        }
        let mut coeffs = [0.0; (MAX_SMOOTHNESS + 1) as usize];
        let kk = k as u64;
        for j in 0..=kk {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            coeffs[j as usize] = sign * binomial(kk + j, j) * binomial(2 * kk + 1, kk - j);
        }
        Ok(CutoffProfile { smoothness: k, coeffs })
    }

    pub fn smoothness(&self) -> u32 {
        self.smoothness
    }

    fn raw(&self, s: f64) -> f64 {
        let k = self.smoothness as usize;
        let mut p = 0.0;
        for j in (0..=k).rev() {
            p = p * s + self.coeffs[j];
        }
        p * s.powi(k as i32 + 1)
    }

    /// Transition polynomial on `[0, 1]`, clamped outside. Evaluated through the
    /// symmetry `S(s) = 1 - S(1 - s)` on the upper half for accuracy near 1.
    pub fn step(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s >= 1.0 {
            1.0
        } else if s <= 0.5 {
            self.raw(s)
        } else {
            1.0 - self.raw(1.0 - s)
        }
    }

    /// `F_≥(y)`.
    pub fn ge(&self, y: f64) -> f64 {
        self.step(y - 1.0)
    }

    /// `F_≤(y) = 1 - F_≥(y)`.
    pub fn le(&self, y: f64) -> f64 {
        1.0 - self.ge(y)
    }

    pub fn eval(&self, orientation: Orientation, y: f64) -> f64 {
        match orientation {
            Orientation::AtMost => self.le(y),
            Orientation::AtLeast => self.ge(y),
        }
    }
}
