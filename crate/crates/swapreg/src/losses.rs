//! Loss functions with declared regularity, the calibration loss family,
//! piecewise linearization, and a statistical near-strong-convexity checker.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::geometry::Discretization;
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LossClass {
    General,
    Concave,
    Linear,
    Smooth,
    StronglyConvex,
    ScSmooth,
    Nsc,
}

/// Quadratic structure `a * ||x - center||^2 + c`, kept alongside the oracles
/// so evaluators can minimize weighted sums in closed form.
#[derive(Clone, Debug)]
pub struct Quadratic {
    pub a: f64,
    pub center: Vec<f64>,
    pub c: f64,
}

/// A 1D piecewise-linear function on sorted knots.
#[derive(Clone, Debug)]
pub struct Piecewise1d {
    pub knots: Vec<f64>,
    pub values: Vec<f64>,
    pub slopes: Vec<f64>,
}

impl Piecewise1d {
    /// Segment index for `x`: the `i` with `x` in `[knots[i], knots[i+1])`,
    /// clamped at the ends (so the last knot uses the final segment).
    pub fn segment(&self, x: f64) -> usize {
        let k = self.knots.len();
        match self.knots.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(k - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(k - 2),
        }
    }

    pub fn value(&self, x: f64) -> f64 {
        let i = self.segment(x);
        self.values[i] + self.slopes[i] * (x - self.knots[i])
    }

    /// Right-segment slope, so knots pick up the slope of the interval to
    /// their right (final knot keeps the last slope).
    pub fn slope_at(&self, x: f64) -> f64 {
        let k = self.knots.len();
        let i = match self.knots.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
            Ok(i) => i.min(k - 2),
            Err(0) => 0,
            Err(i) => (i - 1).min(k - 2),
        };
        self.slopes[i]
    }
}

type ValueFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
type GradFn = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A loss with value/subgradient oracles and declared regularity constants.
#[derive(Clone)]
pub struct LossSpec {
    value: ValueFn,
    subgradient: GradFn,
    pub lipschitz: f64,
    pub strong_convexity: f64,
    pub smoothness: f64,
    pub class: LossClass,
    /// Slack parameter when `class == Nsc`.
    pub nsc_epsilon: f64,
    pub quadratic: Option<Quadratic>,
    pub linear_coeff: Option<Vec<f64>>,
    pub piecewise: Option<Arc<Piecewise1d>>,
}

impl std::fmt::Debug for LossSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LossSpec")
            .field("class", &self.class)
            .field("lipschitz", &self.lipschitz)
            .field("strong_convexity", &self.strong_convexity)
            .field("smoothness", &self.smoothness)
            .finish()
    }
}

impl LossSpec {
    pub fn new(
        value: ValueFn,
        subgradient: GradFn,
        lipschitz: f64,
        strong_convexity: f64,
        smoothness: f64,
        class: LossClass,
    ) -> Self {
        Self {
            value,
            subgradient,
            lipschitz,
            strong_convexity,
            smoothness,
            class,
            nsc_epsilon: 0.0,
            quadratic: None,
            linear_coeff: None,
            piecewise: None,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.value)(x)
    }

    pub fn subgradient(&self, x: &[f64]) -> Vec<f64> {
        (self.subgradient)(x)
    }
}

/// The squared calibration loss `(x - b)^2` on [0, 1].
pub fn make_calibration_loss(b: u8) -> Result<LossSpec> {
    if b > 1 {
        return Err(Error::InvalidInput(format!("outcome must be a bit, got {b}")));
    }
    let bf = b as f64;
    let mut spec = LossSpec::new(
        Arc::new(move |x: &[f64]| (x[0] - bf) * (x[0] - bf)),
        Arc::new(move |x: &[f64]| vec![2.0 * (x[0] - bf)]),
        2.0,
        2.0,
        2.0,
        LossClass::ScSmooth,
    );
    spec.quadratic = Some(Quadratic { a: 1.0, center: vec![bf], c: 0.0 });
    Ok(spec)
}

/// The linear loss `<c, x>`.
pub fn make_linear_loss(c: Vec<f64>) -> LossSpec {
    let l = c.iter().map(|v| v * v).sum::<f64>().sqrt();
    let cv = c.clone();
    let cg = c.clone();
    let mut spec = LossSpec::new(
        Arc::new(move |x: &[f64]| x.iter().zip(&cv).map(|(a, b)| a * b).sum()),
        Arc::new(move |_: &[f64]| cg.clone()),
        l,
        0.0,
        0.0,
        LossClass::Linear,
    );
    spec.linear_coeff = Some(c);
    spec
}

/// The quadratic loss `a * ||x - center||^2 + c`; `lipschitz` must bound
/// `2a * ||x - center||` on the intended domain.
pub fn make_quadratic_loss(a: f64, center: Vec<f64>, c: f64, lipschitz: f64) -> Result<LossSpec> {
    if !(a > 0.0) {
        return Err(Error::InvalidInput(format!(
            "quadratic coefficient must be positive, got {a}"
        )));
    }
    let cv = center.clone();
    let cg = center.clone();
    let mut spec = LossSpec::new(
        Arc::new(move |x: &[f64]| {
            a * x.iter().zip(&cv).map(|(u, v)| (u - v) * (u - v)).sum::<f64>() + c
        }),
        Arc::new(move |x: &[f64]| x.iter().zip(&cg).map(|(u, v)| 2.0 * a * (u - v)).collect()),
        lipschitz,
        2.0 * a,
        2.0 * a,
        LossClass::ScSmooth,
    );
    spec.quadratic = Some(Quadratic { a, center, c });
    Ok(spec)
}

/// Linear interpolation of a convex loss on a sorted 1D grid. The result is
/// exact at the knots, dominates the loss pointwise, and is declared
/// nearly-strongly-convex with slack equal to the largest knot gap.
pub fn piecewise_linearize(loss: &LossSpec, grid: &Discretization) -> Result<LossSpec> {
    let knots = grid.knots_1d()?;
    if knots.len() < 2 {
        return Err(Error::InvalidInput("need at least two knots".into()));
    }
    if knots.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidInput("grid knots must be strictly increasing".into()));
    }
    let values: Vec<f64> = knots.iter().map(|&s| loss.value(&[s])).collect();
    let slopes: Vec<f64> = knots
        .windows(2)
        .zip(values.windows(2))
        .map(|(k, v)| (v[1] - v[0]) / (k[1] - k[0]))
        .collect();
    let max_gap = knots
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(0.0f64, f64::max);
    let pw = Arc::new(Piecewise1d { knots, values, slopes });
    let pv = pw.clone();
    let pg = pw.clone();
    let max_slope = pw.slopes.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let mut spec = LossSpec::new(
        Arc::new(move |x: &[f64]| pv.value(x[0])),
        Arc::new(move |x: &[f64]| vec![pg.slope_at(x[0])]),
        max_slope.max(loss.lipschitz),
        loss.strong_convexity,
        f64::INFINITY,
        LossClass::Nsc,
    );
    spec.nsc_epsilon = max_gap;
    spec.piecewise = Some(pw);
    Ok(spec)
}

/// Outcome of a sampled near-strong-convexity check.
#[derive(Clone, Debug)]
pub struct NscCertificate {
    pub alpha: f64,
    pub epsilon: f64,
    /// Sampled `(x, y, gap)` triples violating the NSC lower bound.
    pub violations: Vec<(f64, f64, f64)>,
}

impl NscCertificate {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Sample pairs on [0, 1] and check the nearly-strongly-convex lower bound
/// `l(y) - l(x) - l'(x)(y - x) >= (alpha/2) (|y - x| - eps)_+^2`.
///
/// The sampler is stratified: uniform pairs, pairs straddling knots when the
/// loss is piecewise linear, and pairs at distance near `epsilon`, where
/// violations concentrate.
pub fn check_nsc(
    loss: &LossSpec,
    alpha: f64,
    epsilon: f64,
    trials: usize,
    rng_seed: u64,
) -> NscCertificate {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(trials);
    let uniform = trials / 2;
    for _ in 0..uniform {
        pairs.push((rng.gen::<f64>(), rng.gen::<f64>()));
    }
    if let Some(pw) = &loss.piecewise {
        for _ in 0..trials / 4 {
            let i = rng.gen_range(0..pw.knots.len());
            let k = pw.knots[i].clamp(0.0, 1.0);
            let jitter = rng.gen_range(-0.5..0.5) * epsilon.max(1e-3);
            pairs.push((k, (k + jitter).clamp(0.0, 1.0)));
        }
    }
    while pairs.len() < trials {
        let x: f64 = rng.gen();
        let sign = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        let d = epsilon.max(1e-3) * rng.gen_range(0.5..1.5);
        pairs.push((x, (x + sign * d).clamp(0.0, 1.0)));
    }
    let mut violations = Vec::new();
    for (x, y) in pairs {
        let lhs = loss.value(&[y]) - loss.value(&[x]) - loss.subgradient(&[x])[0] * (y - x);
        let slack = ((y - x).abs() - epsilon).max(0.0);
        let rhs = 0.5 * alpha * slack * slack;
        if lhs < rhs - 1e-9 {
            violations.push((x, y, rhs - lhs));
        }
    }
    NscCertificate { alpha, epsilon, violations }
}
