//! The Blum–Mansour template over discretized convex sets: rounding
//! procedures, the stationary-distribution solver, and the swap engine that
//! runs one scaled external-regret subroutine per discretization point.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::geometry::{ConvexBody, Discretization, DiscretizationKind};
use crate::losses::{piecewise_linearize, LossClass, LossSpec};
use crate::oco::{MwuState, ScaledOgd};
use crate::{Error, Result};

/// A finitely supported distribution over points of a discretization.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixedAction {
    pub support: Vec<usize>,
    pub probs: Vec<f64>,
}

impl MixedAction {
    pub fn point_mass(i: usize) -> Self {
        Self { support: vec![i], probs: vec![1.0] }
    }

    pub fn from_dense(probs: &[f64]) -> Self {
        let mut support = Vec::new();
        let mut p = Vec::new();
        for (i, &v) in probs.iter().enumerate() {
            if v > 0.0 {
                support.push(i);
                p.push(v);
            }
        }
        Self { support, probs: p }
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.support.len() != self.probs.len() {
            return Err(Error::InvalidInput("support/probability length mismatch".into()));
        }
        let mut seen = vec![false; k];
        for &i in &self.support {
            if i >= k {
                return Err(Error::InvalidInput(format!("support index {i} out of range")));
            }
            if seen[i] {
                return Err(Error::InvalidInput(format!("duplicate support index {i}")));
            }
            seen[i] = true;
        }
        if self.probs.iter().any(|&p| p < -1e-12) {
            return Err(Error::InvalidInput("negative probability".into()));
        }
        let s: f64 = self.probs.iter().sum();
        if (s - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!("probabilities sum to {s}")));
        }
        Ok(())
    }

    pub fn prob_of(&self, i: usize) -> f64 {
        self.support
            .iter()
            .position(|&j| j == i)
            .map_or(0.0, |p| self.probs[p])
    }

    pub fn dense(&self, k: usize) -> Vec<f64> {
        let mut v = vec![0.0; k];
        for (&i, &p) in self.support.iter().zip(&self.probs) {
            v[i] = p;
        }
        v
    }

    /// Mean point `sum_s probs[s] * points[s]`.
    pub fn mean(&self, points: &[Vec<f64>]) -> Vec<f64> {
        let d = points[0].len();
        let mut m = vec![0.0; d];
        for (&i, &p) in self.support.iter().zip(&self.probs) {
            for k in 0..d {
                m[k] += p * points[i][k];
            }
        }
        m
    }

    /// Expected loss over the support points.
    pub fn expected_loss(&self, loss: &LossSpec, points: &[Vec<f64>]) -> f64 {
        self.support
            .iter()
            .zip(&self.probs)
            .map(|(&i, &p)| p * loss.value(&points[i]))
            .sum()
    }
}

/// Row-stochastic transition matrix over the discretization, sparse rows.
#[derive(Clone, Debug)]
pub struct MarkovPolicy {
    pub rows: Vec<MixedAction>,
}

impl MarkovPolicy {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.rows.len();
        for row in &self.rows {
            row.validate(k)?;
        }
        Ok(())
    }

    /// Left-multiply: `y = x Q`.
    pub fn apply_left(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.rows.len()];
        for (s, row) in self.rows.iter().enumerate() {
            let xs = x[s];
            if xs == 0.0 {
                continue;
            }
            for (&j, &p) in row.support.iter().zip(&row.probs) {
                y[j] += xs * p;
            }
        }
        y
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RoundingTag {
    Projection,
    Barycentric,
    Interval,
}

/// Point mass on the nearest discretization point (ties to lowest index).
pub fn round_projection(q: &[f64], disc: &Discretization) -> Result<MixedAction> {
    let (i, _) = disc.nearest_point(q)?;
    Ok(MixedAction::point_mass(i))
}

/// Barycentric mixture over the simplex containing the hull projection of
/// `q`; the mixture mean reproduces that projection.
pub fn round_barycentric(q: &[f64], disc: &Discretization) -> Result<MixedAction> {
    let (idx, w) = disc.locate_simplex(q)?;
    let mut support = Vec::new();
    let mut probs = Vec::new();
    for (&i, &wi) in idx.iter().zip(&w) {
        if wi > 0.0 {
            match support.iter().position(|&j| j == i) {
                Some(p) => probs[p] += wi,
                None => {
                    support.push(i);
                    probs.push(wi);
                }
            }
        }
    }
    if support.is_empty() {
        support.push(idx[0]);
        probs.push(1.0);
    }
    Ok(MixedAction { support, probs })
}

/// Two-point mixture on the adjacent 1D grid knots around `x`; the second
/// return is true when `x` had to be clamped into the grid range.
pub fn round_interval(x: f64, disc: &Discretization) -> Result<(MixedAction, bool)> {
    let knots = disc.knots_1d()?;
    if knots.len() < 2 {
        return Ok((MixedAction::point_mass(0), false));
    }
    let lo = knots[0];
    let hi = *knots.last().unwrap();
    let clamped = x < lo || x > hi;
    let x = x.clamp(lo, hi);
    // points may be unsorted in principle; map knot order back to indices
    let mut order: Vec<usize> = (0..disc.points.len()).collect();
    order.sort_by(|&a, &b| disc.points[a][0].partial_cmp(&disc.points[b][0]).unwrap());
    let seg = match knots.binary_search_by(|v| v.partial_cmp(&x).unwrap()) {
        Ok(i) => i.min(knots.len() - 2),
        Err(0) => 0,
        Err(i) => (i - 1).min(knots.len() - 2),
    };
    let (s0, s1) = (knots[seg], knots[seg + 1]);
    let w1 = (x - s0) / (s1 - s0);
    let action = if w1 <= 0.0 {
        MixedAction::point_mass(order[seg])
    } else if w1 >= 1.0 {
        MixedAction::point_mass(order[seg + 1])
    } else {
        MixedAction {
            support: vec![order[seg], order[seg + 1]],
            probs: vec![1.0 - w1, w1],
        }
    };
    Ok((action, clamped))
}

const DENSE_SOLVE_LIMIT: usize = 2000;
const DENSE_DAMPING: f64 = 4e-10;
const POWER_DAMPING: f64 = 1e-12;

/// Stationary distribution of a row-stochastic matrix: dense linear solve for
/// small chains, damped power iteration above [`DENSE_SOLVE_LIMIT`]. A tiny
/// uniform damping resolves reducible chains toward the maximal-entropy
/// stationary distribution (identity rows give uniform).
pub fn stationary_distribution(policy: &MarkovPolicy) -> Result<MixedAction> {
    policy.validate()?;
    let k = policy.len();
    if k == 0 {
        return Err(Error::InvalidInput("empty policy".into()));
    }
    if k == 1 {
        return Ok(MixedAction::point_mass(0));
    }
    // Exact shortcuts for two degenerate shapes the solver handles poorly:
    // identical rows (rank-one chain, stationary = the common row) and the
    // identity (every distribution is stationary; the damped limit is uniform).
    let first = &policy.rows[0];
    if policy
        .rows
        .iter()
        .all(|r| r.support == first.support && r.probs == first.probs)
    {
        return Ok(first.clone());
    }
    if policy
        .rows
        .iter()
        .enumerate()
        .all(|(s, r)| r.support.len() == 1 && r.support[0] == s)
    {
        return Ok(MixedAction {
            support: (0..k).collect(),
            probs: vec![1.0 / k as f64; k],
        });
    }
    let x = if k <= DENSE_SOLVE_LIMIT {
        dense_stationary(policy, DENSE_DAMPING)
    } else {
        None
    };
    let x = match x {
        Some(x) if l1_residual(policy, &x) <= 1e-9 => x,
        _ => {
            let x = power_stationary(policy, POWER_DAMPING, 500_000);
            let res = l1_residual(policy, &x);
            if res > 1e-9 {
                return Err(Error::Numerical(format!(
                    "stationary solver residual {res:.3e} exceeds 1e-9 on a {k}-state chain"
                )));
            }
            x
        }
    };
    Ok(MixedAction::from_dense(&x))
}

fn l1_residual(policy: &MarkovPolicy, x: &[f64]) -> f64 {
    policy
        .apply_left(x)
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b).abs())
        .sum()
}

fn dense_stationary(policy: &MarkovPolicy, gamma: f64) -> Option<Vec<f64>> {
    let k = policy.len();
    // A = (damped Q)^T - I with the last row replaced by the normalization
    let mut a = DMatrix::from_element(k, k, gamma / k as f64);
    for (s, row) in policy.rows.iter().enumerate() {
        for (&j, &p) in row.support.iter().zip(&row.probs) {
            a[(j, s)] += (1.0 - gamma) * p;
        }
    }
    for i in 0..k {
        a[(i, i)] -= 1.0;
    }
    for j in 0..k {
        a[(k - 1, j)] = 1.0;
    }
    let mut b = DVector::zeros(k);
    b[k - 1] = 1.0;
    let sol = a.lu().solve(&b)?;
    let mut x: Vec<f64> = sol.iter().map(|&v| v.max(0.0)).collect();
    let s: f64 = x.iter().sum();
    if s <= 0.0 {
        return None;
    }
    x.iter_mut().for_each(|v| *v /= s);
    Some(x)
}

fn power_stationary(policy: &MarkovPolicy, gamma: f64, max_iter: usize) -> Vec<f64> {
    let k = policy.len();
    let mut x = vec![1.0 / k as f64; k];
    for _ in 0..max_iter {
        let mut y = policy.apply_left(&x);
        let u = gamma / k as f64;
        for v in y.iter_mut() {
            *v = (1.0 - gamma) * *v + u;
        }
        let diff: f64 = y.iter().zip(&x).map(|(a, b)| (a - b).abs()).sum();
        x = y;
        if diff <= 1e-13 {
            break;
        }
    }
    x
}

/// Which scaled external-regret subroutine runs at each discretization point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SubroutineTag {
    /// Multiplicative weights over the discretization (the no-rounding
    /// template: subroutine distributions become the matrix rows directly).
    Mwu,
    /// Projected OGD with the square-root schedule.
    Convex,
    /// Projected OGD with the strongly-convex logarithmic schedule.
    Gds,
    /// Projected OGD with the nearly-strongly-convex schedule; losses are
    /// piecewise-linearized on the grid before every update.
    Gdk,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExecutionMode {
    Sequential,
    #[cfg(feature = "parallel")]
    Parallel,
}

impl Default for ExecutionMode {
    fn default() -> Self {
        #[cfg(feature = "parallel")]
        {
            ExecutionMode::Parallel
        }
        #[cfg(not(feature = "parallel"))]
        {
            ExecutionMode::Sequential
        }
    }
}

enum PointSub {
    Ogd(ScaledOgd),
    Mwu(MwuState),
}

/// One recorded engine round, for the independent evaluators.
#[derive(Clone, Debug)]
pub struct RoundRecord {
    pub play: MixedAction,
    pub rows: Vec<MixedAction>,
    /// Raw pre-rounding subroutine recommendations (absent for MWU rows,
    /// which are distributions already).
    pub recommendations: Option<Vec<Vec<f64>>>,
}

/// Swap-regret engine: per-point subroutines, a rounding procedure, and the
/// stationary-distribution play rule.
pub struct SwapEngine {
    pub body: ConvexBody,
    pub disc: Discretization,
    pub rounding: RoundingTag,
    pub subroutine: SubroutineTag,
    pub mode: ExecutionMode,
    pub lipschitz: f64,
    pub alpha: f64,
    subs: Vec<Option<PointSub>>,
    initial_x: Vec<f64>,
    initial_row: MixedAction,
    pending: Option<(MarkovPolicy, MixedAction)>,
    pub rounds: u64,
    record: bool,
    pub history: Vec<RoundRecord>,
}

impl SwapEngine {
    pub fn new(
        body: ConvexBody,
        disc: Discretization,
        rounding: RoundingTag,
        subroutine: SubroutineTag,
        lipschitz: f64,
        alpha: f64,
        mode: ExecutionMode,
    ) -> Result<Self> {
        if disc.is_empty() {
            return Err(Error::InvalidInput("empty discretization".into()));
        }
        if disc.dimension() != body.dimension() {
            return Err(Error::Configuration(
                "discretization/body dimension mismatch".into(),
            ));
        }
        match rounding {
            RoundingTag::Interval if disc.dimension() != 1 => {
                return Err(Error::Configuration(
                    "interval rounding requires a 1D grid".into(),
                ));
            }
            RoundingTag::Barycentric if disc.simplices.is_none() => {
                return Err(Error::Configuration(
                    "barycentric rounding requires simplices".into(),
                ));
            }
            _ => {}
        }
        if matches!(subroutine, SubroutineTag::Gds | SubroutineTag::Gdk) && !(alpha > 0.0) {
            return Err(Error::Configuration(
                "gds/gdk subroutines need alpha > 0".into(),
            ));
        }
        if matches!(subroutine, SubroutineTag::Gdk) && disc.dimension() != 1 {
            return Err(Error::Configuration("gdk subroutines require d = 1".into()));
        }
        let initial_x = body.project(&disc.centroid());
        let k = disc.len();
        let initial_row = match subroutine {
            SubroutineTag::Mwu => MixedAction {
                support: (0..k).collect(),
                probs: vec![1.0 / k as f64; k],
            },
            _ => apply_rounding(rounding, &initial_x, &disc)?,
        };
        let mut subs = Vec::with_capacity(k);
        subs.resize_with(k, || None);
        Ok(Self {
            body,
            disc,
            rounding,
            subroutine,
            mode,
            lipschitz,
            alpha,
            subs,
            initial_x,
            initial_row,
            pending: None,
            rounds: 0,
            record: false,
            history: Vec::new(),
        })
    }

    /// Record per-round plays and matrix rows for external evaluation.
    pub fn record_history(&mut self, on: bool) {
        self.record = on;
    }

    pub fn len(&self) -> usize {
        self.disc.len()
    }

    pub fn is_empty(&self) -> bool {
        self.disc.is_empty()
    }

    /// Query every subroutine, assemble the transition matrix, and play its
    /// stationary distribution. Idempotent until the next `update`.
    pub fn play(&mut self) -> Result<MixedAction> {
        if let Some((_, x)) = &self.pending {
            return Ok(x.clone());
        }
        let rows: Vec<MixedAction> = {
            let disc = &self.disc;
            let rounding = self.rounding;
            let initial_row = &self.initial_row;
            let row_of = |sub: &Option<PointSub>| -> Result<MixedAction> {
                match sub {
                    None => Ok(initial_row.clone()),
                    Some(PointSub::Mwu(m)) => Ok(MixedAction::from_dense(&m.distribution())),
                    Some(PointSub::Ogd(o)) => apply_rounding(rounding, o.current(), disc),
                }
            };
            #[cfg(feature = "parallel")]
            {
                if self.mode == ExecutionMode::Parallel {
                    self.subs
                        .par_iter()
                        .map(row_of)
                        .collect::<Result<Vec<_>>>()?
                } else {
                    self.subs.iter().map(row_of).collect::<Result<Vec<_>>>()?
                }
            }
            #[cfg(not(feature = "parallel"))]
            {
                self.subs.iter().map(row_of).collect::<Result<Vec<_>>>()?
            }
        };
        let policy = MarkovPolicy { rows };
        let x = stationary_distribution(&policy)?;
        self.pending = Some((policy, x.clone()));
        Ok(x)
    }

    /// Reveal the round's loss: every subroutine s is updated with scale
    /// `x_t[s]`. Subroutines are instantiated lazily on first positive scale.
    pub fn update(&mut self, loss: &LossSpec) -> Result<()> {
        if self.pending.is_none() {
            self.play()?;
        }
        let (policy, x) = self.pending.take().unwrap();
        let k = self.disc.len();
        let scales = x.dense(k);
        let recommendations = if self.record && self.subroutine != SubroutineTag::Mwu {
            Some(
                self.subs
                    .iter()
                    .map(|sub| match sub {
                        Some(PointSub::Ogd(o)) => o.current().to_vec(),
                        _ => self.initial_x.clone(),
                    })
                    .collect::<Vec<_>>(),
            )
        } else {
            None
        };

        // per-round shared work: point losses for MWU, linearization for GDK
        let point_losses: Option<Vec<f64>> = match self.subroutine {
            SubroutineTag::Mwu => Some(
                self.disc
                    .points
                    .iter()
                    .map(|p| loss.value(p))
                    .collect(),
            ),
            _ => None,
        };
        let effective_loss: LossSpec = match self.subroutine {
            SubroutineTag::Gdk => piecewise_linearize(loss, &self.disc)?,
            _ => loss.clone(),
        };

        let body = &self.body;
        let disc = &self.disc;
        let subroutine = self.subroutine;
        let lipschitz = self.lipschitz;
        let alpha = self.alpha;
        let initial_x = &self.initial_x;
        let step_one = |sub: &mut Option<PointSub>, g: f64| -> Result<()> {
            if g <= 0.0 && sub.is_none() {
                return Ok(());
            }
            if sub.is_none() {
                *sub = Some(new_sub(
                    subroutine, body, disc, initial_x, lipschitz, alpha,
                )?);
            }
            match sub.as_mut().unwrap() {
                PointSub::Mwu(m) => m.step(point_losses.as_ref().unwrap(), g),
                PointSub::Ogd(o) => o.step(&effective_loss, g).map(|_| ()),
            }
        };
        #[cfg(feature = "parallel")]
        {
            if self.mode == ExecutionMode::Parallel {
                self.subs
                    .par_iter_mut()
                    .zip(scales.par_iter())
                    .try_for_each(|(sub, &g)| step_one(sub, g))?;
            } else {
                for (sub, &g) in self.subs.iter_mut().zip(&scales) {
                    step_one(sub, g)?;
                }
            }
        }
        #[cfg(not(feature = "parallel"))]
        {
            for (sub, &g) in self.subs.iter_mut().zip(&scales) {
                step_one(sub, g)?;
            }
        }
        self.rounds += 1;
        if self.record {
            self.history.push(RoundRecord {
                play: x,
                rows: policy.rows,
                recommendations,
            });
        }
        Ok(())
    }

    /// One full round: play, then update with the revealed loss.
    pub fn bm_round(&mut self, loss: &LossSpec) -> Result<MixedAction> {
        let x = self.play()?;
        self.update(loss)?;
        Ok(x)
    }
}

fn apply_rounding(tag: RoundingTag, q: &[f64], disc: &Discretization) -> Result<MixedAction> {
    match tag {
        RoundingTag::Projection => round_projection(q, disc),
        RoundingTag::Barycentric => round_barycentric(q, disc),
        RoundingTag::Interval => round_interval(q[0], disc).map(|(a, _)| a),
    }
}

fn new_sub(
    tag: SubroutineTag,
    body: &ConvexBody,
    disc: &Discretization,
    initial_x: &[f64],
    lipschitz: f64,
    alpha: f64,
) -> Result<PointSub> {
    Ok(match tag {
        SubroutineTag::Mwu => PointSub::Mwu(MwuState::new(
            disc.len(),
            (lipschitz * body.diameter_bound()).max(1e-12),
        )?),
        SubroutineTag::Convex => PointSub::Ogd(ScaledOgd::new_convex(
            body.clone(),
            initial_x.to_vec(),
            lipschitz,
        )?),
        SubroutineTag::Gds => PointSub::Ogd(ScaledOgd::new_gds(
            body.clone(),
            initial_x.to_vec(),
            lipschitz,
            alpha,
        )?),
        SubroutineTag::Gdk => {
            let mut eps = 0.0f64;
            let knots = disc.knots_1d()?;
            for w in knots.windows(2) {
                eps = eps.max(w[1] - w[0]);
            }
            PointSub::Ogd(ScaledOgd::new_gdk(
                body.clone(),
                initial_x.to_vec(),
                lipschitz,
                alpha,
                eps.max(1e-12),
            )?)
        }
    })
}

/// One row of the Table-1 configuration map: how to discretize, which
/// subroutine to run, how to round, and the predicted regret exponent.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EngineConfig {
    pub disc_kind: DiscretizationKind,
    pub epsilon: f64,
    pub subroutine: SubroutineTag,
    pub rounding: RoundingTag,
    pub exponent: f64,
}

/// Select discretizer, epsilon, subroutine, and rounding for a loss class,
/// dimension, and horizon.
pub fn configure_from_table(class: LossClass, d: usize, horizon: u64) -> Result<EngineConfig> {
    if horizon < 1 {
        return Err(Error::Configuration("horizon must be >= 1".into()));
    }
    let t = horizon as f64;
    let df = d as f64;
    Ok(match class {
        LossClass::General => EngineConfig {
            disc_kind: DiscretizationKind::Net,
            epsilon: t.powf(-1.0 / (df + 2.0)),
            subroutine: SubroutineTag::Mwu,
            rounding: RoundingTag::Projection,
            exponent: (df + 1.0) / (df + 2.0),
        },
        LossClass::Smooth => EngineConfig {
            disc_kind: DiscretizationKind::Triangulation,
            epsilon: t.powf(-1.0 / (df + 4.0)),
            subroutine: SubroutineTag::Mwu,
            rounding: RoundingTag::Barycentric,
            exponent: (df + 2.0) / (df + 4.0),
        },
        LossClass::Concave | LossClass::Linear => EngineConfig {
            disc_kind: DiscretizationKind::BoundaryPolytope,
            epsilon: t.powf(-1.0 / (df + 3.0)),
            subroutine: SubroutineTag::Mwu,
            rounding: RoundingTag::Projection,
            exponent: (df + 1.0) / (df + 3.0),
        },
        LossClass::StronglyConvex => EngineConfig {
            disc_kind: DiscretizationKind::Net,
            epsilon: t.powf(-1.0 / (df + 1.0)),
            subroutine: SubroutineTag::Gds,
            rounding: RoundingTag::Projection,
            exponent: df / (df + 1.0),
        },
        LossClass::ScSmooth => EngineConfig {
            disc_kind: DiscretizationKind::Triangulation,
            epsilon: t.powf(-1.0 / (df + 2.0)),
            subroutine: SubroutineTag::Gds,
            rounding: if d == 1 {
                RoundingTag::Interval
            } else {
                RoundingTag::Barycentric
            },
            exponent: df / (df + 2.0),
        },
        LossClass::Nsc => {
            return Err(Error::Configuration(
                "nsc is a derived class, not a table row".into(),
            ))
        }
    })
}
