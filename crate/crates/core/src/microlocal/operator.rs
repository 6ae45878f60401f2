//! Pipelines of space multipliers, Fourier multipliers, half-line indicators
//! and free propagations, their adjoints, and a power-iteration norm estimate.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::profile::{CutoffProfile, Orientation};
use crate::error::{LabError, Result};
use crate::spectral::{Grid, StateVector};

/// Argument of a space multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpaceVariable {
    /// `|x|`
    Abs,
    /// `x`
    Signed,
}

/// Argument of a Fourier multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FreqVariable {
    /// `|ξ|`
    Abs,
    /// `ξ`
    Plus,
    /// `-ξ`
    Minus,
}

/// Half line selected by an indicator; `x = 0` belongs to the nonnegative side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HalfLine {
    NonNegative,
    Negative,
}

impl HalfLine {
    pub fn contains(&self, x: f64) -> bool {
        match self {
            HalfLine::NonNegative => x >= 0.0,
            HalfLine::Negative => x < 0.0,
        }
    }
}

/// One factor of a [`ComposedOperator`]; each has operator norm at most 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Multiplication by `F(v(x)/scale)`.
    SpaceMultiplier {
        profile: CutoffProfile,
        scale: f64,
        orientation: Orientation,
        variable: SpaceVariable,
    },
    /// Fourier multiplier `F(v(ξ)/scale)`.
    FreqMultiplier {
        profile: CutoffProfile,
        scale: f64,
        orientation: Orientation,
        variable: FreqVariable,
    },
    HalfLineIndicator {
        side: HalfLine,
    },
    /// `e^{itΔ}`.
    FreePropagation {
        t: f64,
    },
}

impl Primitive {
    pub fn space(profile: CutoffProfile, orientation: Orientation, variable: SpaceVariable, scale: f64) -> Primitive {
        Primitive::SpaceMultiplier {
            profile,
            scale,
            orientation,
            variable,
        }
    }

    pub fn freq(profile: CutoffProfile, orientation: Orientation, variable: FreqVariable, scale: f64) -> Primitive {
        Primitive::FreqMultiplier {
            profile,
            scale,
            orientation,
            variable,
        }
    }

    pub fn propagation(t: f64) -> Primitive {
        Primitive::FreePropagation { t }
    }

    pub fn indicator(side: HalfLine) -> Primitive {
        Primitive::HalfLineIndicator { side }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Primitive::SpaceMultiplier { scale, .. } | Primitive::FreqMultiplier { scale, .. } => {
                if !(scale > 0.0 && scale.is_finite()) {
                    return Err(LabError::Domain(format!("cutoff scale must be positive, got {scale}")));
                }
            }
            Primitive::FreePropagation { t } => {
                if !t.is_finite() {
                    return Err(LabError::Domain("propagation time must be finite".into()));
                }
            }
            Primitive::HalfLineIndicator { .. } => {}
        }
        Ok(())
    }

    fn adjoint(&self) -> Primitive {
        match *self {
            Primitive::FreePropagation { t } => Primitive::FreePropagation { t: -t },
            other => other,
        }
    }

    fn stage(&self, grid: &Grid) -> Stage {
        match *self {
            Primitive::SpaceMultiplier {
                profile,
                scale,
                orientation,
                variable,
            } => Stage::Space(
                grid.x()
                    .iter()
                    .map(|&x| {
                        let v = match variable {
                            SpaceVariable::Abs => x.abs(),
                            SpaceVariable::Signed => x,
                        };
                        profile.eval(orientation, v / scale)
                    })
                    .collect(),
            ),
            Primitive::HalfLineIndicator { side } => Stage::Space(
                grid.x()
                    .iter()
                    .map(|&x| if side.contains(x) { 1.0 } else { 0.0 })
                    .collect(),
            ),
            Primitive::FreqMultiplier {
                profile,
                scale,
                orientation,
                variable,
            } => Stage::Freq(
                grid.wavenumbers()
                    .iter()
                    .map(|&xi| {
                        let v = match variable {
                            FreqVariable::Abs => xi.abs(),
                            FreqVariable::Plus => xi,
                            FreqVariable::Minus => -xi,
                        };
                        Complex64::new(profile.eval(orientation, v / scale), 0.0)
                    })
                    .collect(),
            ),
            Primitive::FreePropagation { t } => Stage::Freq(
                grid.wavenumbers()
                    .iter()
                    .map(|&xi| Complex64::from_polar(1.0, -t * xi * xi))
                    .collect(),
            ),
        }
    }
}

/// A bounded linear map on states of one grid.
pub trait LinearOperator {
    fn apply(&self, u: &StateVector) -> StateVector;
    fn apply_adjoint(&self, u: &StateVector) -> StateVector;
}

/// Product of primitives written left to right as in `A₁ A₂ … A_m`;
/// `A_m` acts first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ComposedOperator {
    pub factors: Vec<Primitive>,
}

impl ComposedOperator {
    pub fn identity() -> ComposedOperator {
        ComposedOperator { factors: Vec::new() }
    }

    pub fn new(factors: Vec<Primitive>) -> Result<ComposedOperator> {
        for f in &factors {
            f.validate()?;
        }
        Ok(ComposedOperator { factors })
    }

    /// `self ∘ other` (other acts first).
    pub fn compose(&self, other: &ComposedOperator) -> ComposedOperator {
        let mut factors = self.factors.clone();
        factors.extend_from_slice(&other.factors);
        ComposedOperator { factors }
    }

    pub fn adjoint(&self) -> ComposedOperator {
        ComposedOperator {
            factors: self.factors.iter().rev().map(Primitive::adjoint).collect(),
        }
    }

    /// Samples every factor on `grid`, fusing adjacent diagonal stages.
    pub fn compile(&self, grid: &Grid) -> CompiledOperator {
        let mut stages: Vec<Stage> = Vec::new();
        for f in self.factors.iter().rev() {
            let next = f.stage(grid);
            match (stages.last_mut(), next) {
                (Some(Stage::Space(a)), Stage::Space(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x *= y),
                (Some(Stage::Freq(a)), Stage::Freq(b)) => a.iter_mut().zip(b).for_each(|(x, y)| *x *= y),
                (_, next) => stages.push(next),
            }
        }
        CompiledOperator {
            grid: grid.clone(),
            stages,
        }
    }
}

impl LinearOperator for ComposedOperator {
    fn apply(&self, u: &StateVector) -> StateVector {
        self.compile(u.grid()).apply(u)
    }

    fn apply_adjoint(&self, u: &StateVector) -> StateVector {
        self.compile(u.grid()).apply_adjoint(u)
    }
}

#[derive(Debug, Clone)]
enum Stage {
    Space(Vec<f64>),
    Freq(Vec<Complex64>),
}

/// A [`ComposedOperator`] sampled on a grid; stages in application order.
#[derive(Debug, Clone)]
pub struct CompiledOperator {
    grid: Grid,
    stages: Vec<Stage>,
}

impl CompiledOperator {
    fn run<'a>(&self, u: &StateVector, order: impl Iterator<Item = &'a Stage>, conj: bool) -> StateVector {
        assert_eq!(u.grid(), &self.grid, "operator applied on a different grid");
        let mut buf = u.values().to_vec();
        let mut scratch = self.grid.make_scratch();
        for stage in order {
            match stage {
                Stage::Space(m) => buf.iter_mut().zip(m).for_each(|(v, &w)| *v *= w),
                Stage::Freq(m) => {
                    self.grid.forward_with_scratch(&mut buf, &mut scratch);
                    if conj {
                        buf.iter_mut().zip(m).for_each(|(v, w)| *v *= w.conj());
                    } else {
                        buf.iter_mut().zip(m).for_each(|(v, w)| *v *= w);
                    }
                    self.grid.inverse_with_scratch(&mut buf, &mut scratch);
                }
            }
        }
        StateVector::from_parts(&self.grid, buf)
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
}

impl LinearOperator for CompiledOperator {
    fn apply(&self, u: &StateVector) -> StateVector {
        self.run(u, self.stages.iter(), false)
    }

    fn apply_adjoint(&self, u: &StateVector) -> StateVector {
        self.run(u, self.stages.iter().rev(), true)
    }
}

/// `Σ c_i A_i`, e.g. commutators `AB - BA`.
pub struct LinearCombination {
    pub terms: Vec<(f64, CompiledOperator)>,
}

impl LinearCombination {
    /// `[A, B] = AB - BA` of two pipelines.
    pub fn commutator(a: &ComposedOperator, b: &ComposedOperator, grid: &Grid) -> LinearCombination {
        LinearCombination {
            terms: vec![(1.0, a.compose(b).compile(grid)), (-1.0, b.compose(a).compile(grid))],
        }
    }

    fn sum(&self, u: &StateVector, adjoint: bool) -> StateVector {
        let mut acc = StateVector::zeros(u.grid());
        for (c, op) in &self.terms {
            let v = if adjoint { op.apply_adjoint(u) } else { op.apply(u) };
            acc = &acc + &(&v * *c);
        }
        acc
    }
}

impl LinearOperator for LinearCombination {
    fn apply(&self, u: &StateVector) -> StateVector {
        self.sum(u, false)
    }

    fn apply_adjoint(&self, u: &StateVector) -> StateVector {
        self.sum(u, true)
    }
}

/// Power-iteration controls.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerIteration {
    pub max_iters: usize,
    /// Relative change of the Rayleigh value that ends a trial.
    pub tolerance: f64,
    /// A trial also ends once `∥op† op v∥` drops to this level, where the
    /// iteration only amplifies roundoff.
    #[serde(default)]
    pub floor: f64,
}

impl Default for PowerIteration {
    fn default() -> Self {
        PowerIteration {
            max_iters: 3000,
            tolerance: 1e-10,
            floor: 0.0,
        }
    }
}

fn random_state(grid: &Grid, rng: &mut ChaCha8Rng) -> StateVector {
    let values = (0..grid.n())
        .map(|_| {
            let re: f64 = StandardNormal.sample(rng);
            let im: f64 = StandardNormal.sample(rng);
            Complex64::new(re, im)
        })
        .collect();
    StateVector::from_parts(grid, values)
}

/// Lower bound on `∥op∥_{L²→L²}` by power iteration on `op† op` from
/// `trials` seeded random starts; the largest `∥op v∥/∥v∥` seen is returned.
pub fn estimate_operator_norm_with(
    op: &dyn LinearOperator,
    grid: &Grid,
    trials: usize,
    seed: u64,
    controls: PowerIteration,
) -> f64 {
    let mut best: f64 = 0.0;
    for trial in 0..trials.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(trial as u64));
        let mut v = random_state(grid, &mut rng);
        let nv = v.norm_l2();
        v = &v * (1.0 / nv);
        let mut last = 0.0;
        for _ in 0..controls.max_iters {
            let av = op.apply(&v);
            let ratio = av.norm_l2();
            best = best.max(ratio);
            let w = op.apply_adjoint(&av);
            let nw = w.norm_l2();
            if !(nw > 0.0 && nw.is_finite()) {
                break;
            }
            v = &w * (1.0 / nw);
            if (nw - last).abs() <= controls.tolerance * nw || nw <= controls.floor {
                best = best.max(op.apply(&v).norm_l2());
                break;
            }
            last = nw;
        }
    }
    best
}

pub fn estimate_operator_norm(op: &dyn LinearOperator, grid: &Grid, trials: usize, seed: u64) -> f64 {
    estimate_operator_norm_with(op, grid, trials, seed, PowerIteration::default())
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use proptest::prelude::*;
    use rand::Rng;

    pub(crate) fn random_vector(grid: &Grid, seed: u64) -> StateVector {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        random_state(grid, &mut rng)
    }

    fn profile() -> CutoffProfile {
        CutoffProfile::default()
    }

    /// Dense matrix of a primitive built from the explicit DFT matrix.
    pub(crate) fn dense_primitive(p: &Primitive, grid: &Grid) -> DMatrix<Complex64> {
        let n = grid.n();
        let two_pi = 2.0 * std::f64::consts::PI;
        let dft = DMatrix::from_fn(n, n, |k, j| {
            Complex64::from_polar(1.0, -two_pi * (k * j) as f64 / n as f64)
        });
        let idft = DMatrix::from_fn(n, n, |j, k| {
            Complex64::from_polar(1.0 / n as f64, two_pi * (k * j) as f64 / n as f64)
        });
        let xi = |k: usize| {
            let s = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
            std::f64::consts::PI * s / grid.half_length()
        };
        let x = |j: usize| -grid.half_length() + j as f64 * grid.dx();
        match *p {
            Primitive::SpaceMultiplier {
                profile,
                scale,
                orientation,
                variable,
            } => DMatrix::from_fn(n, n, |i, j| {
                if i != j {
                    return Complex64::new(0.0, 0.0);
                }
                let v = match variable {
                    SpaceVariable::Abs => x(i).abs(),
                    SpaceVariable::Signed => x(i),
                };
                Complex64::new(profile.eval(orientation, v / scale), 0.0)
            }),
            Primitive::HalfLineIndicator { side } => DMatrix::from_fn(n, n, |i, j| {
                Complex64::new(if i == j && side.contains(x(i)) { 1.0 } else { 0.0 }, 0.0)
            }),
            Primitive::FreqMultiplier {
                profile,
                scale,
                orientation,
                variable,
            } => {
                let d = DMatrix::from_fn(n, n, |i, j| {
                    if i != j {
                        return Complex64::new(0.0, 0.0);
                    }
                    let v = match variable {
                        FreqVariable::Abs => xi(i).abs(),
                        FreqVariable::Plus => xi(i),
                        FreqVariable::Minus => -xi(i),
                    };
                    Complex64::new(profile.eval(orientation, v / scale), 0.0)
                });
                &idft * d * &dft
            }
            Primitive::FreePropagation { t } => {
                let d = DMatrix::from_fn(n, n, |i, j| {
                    if i == j {
                        Complex64::from_polar(1.0, -t * xi(i) * xi(i))
                    } else {
                        Complex64::new(0.0, 0.0)
                    }
                });
                &idft * d * &dft
            }
        }
    }

    pub(crate) fn dense(op: &ComposedOperator, grid: &Grid) -> DMatrix<Complex64> {
        let n = grid.n();
        op.factors
            .iter()
            .fold(DMatrix::identity(n, n), |acc, p| acc * dense_primitive(p, grid))
    }

    fn jfree_like(t: f64) -> ComposedOperator {
        let p = profile();
        ComposedOperator::new(vec![
            Primitive::propagation(t),
            Primitive::space(p, Orientation::AtMost, SpaceVariable::Abs, 3.0),
            Primitive::propagation(-t),
            Primitive::freq(p, Orientation::AtLeast, FreqVariable::Abs, 1.0),
        ])
        .unwrap()
    }

    #[test]
    fn identity_has_unit_norm() {
        let g = Grid::new(64, 5.0).unwrap();
        let norm = estimate_operator_norm(&ComposedOperator::identity(), &g, 2, 7);
        assert!((norm - 1.0).abs() < 1e-6);
    }

    #[test]
    fn multiplier_norm_is_sup_of_samples() {
        let g = Grid::new(128, 10.0).unwrap();
        // Scale chosen so no sample reaches the flat part of the profile.
        let prim = Primitive::space(profile(), Orientation::AtLeast, SpaceVariable::Signed, 6.0);
        let op = ComposedOperator::new(vec![prim]).unwrap();
        let sup = g.x().iter().map(|&x| profile().ge(x / 6.0)).fold(0.0, f64::max);
        assert!(sup > 0.0 && sup < 1.0);
        let est = estimate_operator_norm(&op, &g, 2, 1);
        assert!((est - sup).abs() < 1e-6 * sup, "{est} vs {sup}");
    }

    #[test]
    fn pipeline_norm_matches_dense_svd() {
        let g = Grid::new(256, 12.0).unwrap();
        let op = jfree_like(2.0);
        let svd = dense(&op, &g).singular_values();
        let sigma_max = svd.iter().cloned().fold(0.0, f64::max);
        let est = estimate_operator_norm(&op, &g, 3, 11);
        assert!((est - sigma_max).abs() <= 0.01 * sigma_max, "{est} vs {sigma_max}");
        assert!(est <= 1.0 + 1e-9);
    }

    #[test]
    fn pipeline_application_matches_dense_matrix() {
        let g = Grid::new(256, 12.0).unwrap();
        let op = jfree_like(1.5);
        let u = random_vector(&g, 4);
        let m = dense(&op, &g);
        let dense_out = &m * nalgebra::DVector::from_column_slice(u.values());
        let fast = op.apply(&u);
        let err = fast
            .values()
            .iter()
            .zip(dense_out.iter())
            .map(|(a, b)| (a - b).norm_sqr())
            .sum::<f64>()
            .sqrt();
        assert!(err < 1e-10 * dense_out.norm());
        // Norm defect of the dense application equals the fast one.
        let defect_fast = u.norm_l2() - fast.norm_l2();
        let defect_dense = u.norm_l2() - (g.dx() * dense_out.norm_squared()).sqrt();
        assert!((defect_fast - defect_dense).abs() < 1e-10);
        assert!(defect_fast >= 0.0);
    }

    #[test]
    fn commutator_of_commuting_factors_vanishes() {
        let g = Grid::new(64, 5.0).unwrap();
        let a = ComposedOperator::new(vec![Primitive::space(
            profile(),
            Orientation::AtMost,
            SpaceVariable::Abs,
            1.0,
        )])
        .unwrap();
        let b = ComposedOperator::new(vec![Primitive::indicator(HalfLine::NonNegative)]).unwrap();
        let c = LinearCombination::commutator(&a, &b, &g);
        assert!(estimate_operator_norm(&c, &g, 1, 0) < 1e-14);
    }

    #[test]
    fn invalid_scale_rejected() {
        assert!(ComposedOperator::new(vec![Primitive::space(
            profile(),
            Orientation::AtMost,
            SpaceVariable::Abs,
            0.0
        )])
        .is_err());
    }

    fn arb_primitive() -> impl Strategy<Value = Primitive> {
        let p = profile();
        prop_oneof![
            (0.5f64..8.0, any::<bool>(), any::<bool>()).prop_map(move |(s, le, abs)| Primitive::space(
                p,
                if le { Orientation::AtMost } else { Orientation::AtLeast },
                if abs { SpaceVariable::Abs } else { SpaceVariable::Signed },
                s
            )),
            (0.2f64..4.0, any::<bool>(), 0u8..3).prop_map(move |(s, le, v)| Primitive::freq(
                p,
                if le { Orientation::AtMost } else { Orientation::AtLeast },
                [FreqVariable::Abs, FreqVariable::Plus, FreqVariable::Minus][v as usize],
                s
            )),
            any::<bool>().prop_map(|b| Primitive::indicator(if b {
                HalfLine::NonNegative
            } else {
                HalfLine::Negative
            })),
            (-3.0f64..3.0).prop_map(Primitive::propagation),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn adjoint_identity(factors in prop::collection::vec(arb_primitive(), 1..6), seed in any::<u64>()) {
            let g = Grid::new(128, 10.0).unwrap();
            let op = ComposedOperator::new(factors).unwrap();
            let u = random_vector(&g, seed);
            let v = random_vector(&g, seed ^ 0x5555);
            let lhs = op.apply(&u).inner(&v);
            let rhs = u.inner(&op.apply_adjoint(&v));
            prop_assert!((lhs - rhs).norm() <= 1e-10 * u.norm_l2() * v.norm_l2());
            // The reversed, conjugated pipeline is the same adjoint.
            let rhs2 = u.inner(&op.adjoint().apply(&v));
            prop_assert!((lhs - rhs2).norm() <= 1e-10 * u.norm_l2() * v.norm_l2());
        }

        #[test]
        fn pipelines_are_contractions(factors in prop::collection::vec(arb_primitive(), 1..5), seed in 0u64..1000) {
            let g = Grid::new(64, 8.0).unwrap();
            let op = ComposedOperator::new(factors).unwrap();
            let est = estimate_operator_norm_with(&op, &g, 1, seed, PowerIteration { max_iters: 200, tolerance: 1e-8, ..Default::default() });
            prop_assert!(est <= 1.0 + 1e-9);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = random_vector(&g, rng.random());
            prop_assert!(op.apply(&u).norm_l2() <= u.norm_l2() * (1.0 + 1e-12));
        }
    }
}
