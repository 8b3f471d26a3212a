//! Structured games: embedding maps, the convex-decomposition oracle, the
//! swap-to-full-swap reduction wrapper, normal-form conversion, and the swap
//! regret / correlated-equilibrium evaluators.

use std::collections::HashMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{ExecutionMode, RoundingTag, SubroutineTag, SwapEngine};
use crate::geometry::{build_boundary_polytope, ConvexBody};
use crate::losses::make_linear_loss;
use crate::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A game whose payoffs are inner products of action embeddings: the learner
/// playing i against j yields `u_L(i,j) = <v[i], w[j]>`, and, when the primed
/// embeddings are present, `u_A(i,j) = <v_prime[i], w_prime[j]>` for the
/// adversary (zero-sum by default).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StructuredGame {
    pub v: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_prime: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_prime: Option<Vec<Vec<f64>>>,
    /// Payoff rescaling applied by `nfg_to_structured` to keep norms <= 1.
    #[serde(default = "one")]
    pub scale_learner: f64,
    #[serde(default = "one")]
    pub scale_adversary: f64,
}

fn one() -> f64 {
    1.0
}

impl StructuredGame {
    pub fn new(v: Vec<Vec<f64>>, w: Vec<Vec<f64>>) -> Result<Self> {
        let g = Self {
            v,
            w,
            v_prime: None,
            w_prime: None,
            scale_learner: 1.0,
            scale_adversary: 1.0,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.v.is_empty() || self.w.is_empty() {
            return Err(Error::InvalidInput("game needs actions on both sides".into()));
        }
        let d = self.v[0].len();
        for e in self.v.iter().chain(&self.w) {
            if e.len() != d {
                return Err(Error::InvalidInput("embedding dimension mismatch".into()));
            }
            let n = dot(e, e).sqrt();
            if n > 1.0 + 1e-9 {
                return Err(Error::InvalidInput(format!("embedding norm {n} exceeds 1")));
            }
        }
        match (&self.v_prime, &self.w_prime) {
            (Some(vp), Some(wp)) => {
                if vp.len() != self.v.len() || wp.len() != self.w.len() {
                    return Err(Error::InvalidInput(
                        "adversary embedding counts mismatch".into(),
                    ));
                }
                let dp = vp[0].len();
                if vp.iter().chain(wp).any(|e| e.len() != dp) {
                    return Err(Error::InvalidInput(
                        "adversary embedding dimension mismatch".into(),
                    ));
                }
            }
            (None, None) => {}
            _ => {
                return Err(Error::InvalidInput(
                    "v_prime and w_prime must be given together".into(),
                ))
            }
        }
        Ok(())
    }

    pub fn dimension(&self) -> usize {
        self.v[0].len()
    }

    pub fn n_learner(&self) -> usize {
        self.v.len()
    }

    pub fn n_adversary(&self) -> usize {
        self.w.len()
    }

    pub fn learner_payoff(&self, i: usize, j: usize) -> f64 {
        dot(&self.v[i], &self.w[j])
    }

    pub fn adversary_payoff(&self, i: usize, j: usize) -> f64 {
        match (&self.v_prime, &self.w_prime) {
            (Some(vp), Some(wp)) => dot(&vp[i], &wp[j]),
            _ => -self.learner_payoff(i, j),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(s)?;
        g.validate()?;
        Ok(g)
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// `pi(p) = sum_i p[i] vectors[i]`.
pub fn embed(p: &[f64], vectors: &[Vec<f64>]) -> Result<Vec<f64>> {
    if p.len() != vectors.len() {
        return Err(Error::InvalidInput(format!(
            "distribution over {} entries vs {} embeddings",
            p.len(),
            vectors.len()
        )));
    }
    let d = vectors[0].len();
    let mut x = vec![0.0; d];
    for (pi, v) in p.iter().zip(vectors) {
        for k in 0..d {
            x[k] += pi * v[k];
        }
    }
    Ok(x)
}

/// Express `x` as a convex combination of `vertices` via a phase-1 simplex
/// solve (Bland's rule, so the chosen preimage is deterministic). The basic
/// feasible solution has at most d+1 nonzero weights.
pub fn convex_decompose(x: &[f64], vertices: &[Vec<f64>]) -> Result<Vec<f64>> {
    let n = vertices.len();
    if n == 0 {
        return Err(Error::InvalidInput("no vertices".into()));
    }
    let d = x.len();
    if vertices.iter().any(|v| v.len() != d) {
        return Err(Error::InvalidInput("vertex dimension mismatch".into()));
    }
    let m = d + 1;
    // constraints: sum lambda_i v_i = x, sum lambda_i = 1; artificials appended
    let ncols = n + m;
    let mut tab = vec![vec![0.0f64; ncols + 1]; m];
    for r in 0..m {
        for (j, v) in vertices.iter().enumerate() {
            tab[r][j] = if r < d { v[r] } else { 1.0 };
        }
        tab[r][ncols] = if r < d { x[r] } else { 1.0 };
        if tab[r][ncols] < 0.0 {
            for e in tab[r].iter_mut() {
                *e = -*e;
            }
        }
        tab[r][n + r] = 1.0;
    }
    let mut basis: Vec<usize> = (n..n + m).collect();
    // phase-1 objective: minimize the artificial mass
    let mut cost = vec![0.0f64; ncols + 1];
    for j in n..ncols {
        cost[j] = 1.0;
    }
    for r in 0..m {
        for j in 0..=ncols {
            cost[j] -= tab[r][j];
        }
    }
    loop {
        let entering = (0..ncols).find(|&j| cost[j] < -1e-10);
        let Some(e) = entering else { break };
        let mut leave: Option<usize> = None;
        let mut best_ratio = f64::INFINITY;
        for r in 0..m {
            if tab[r][e] > 1e-12 {
                let ratio = tab[r][ncols] / tab[r][e];
                let better = ratio < best_ratio - 1e-15
                    || ((ratio - best_ratio).abs() <= 1e-15
                        && leave.map_or(true, |l| basis[r] < basis[l]));
                if better {
                    best_ratio = ratio;
                    leave = Some(r);
                }
            }
        }
        let Some(l) = leave else {
            return Err(Error::Numerical("unbounded phase-1 pivot".into()));
        };
        let piv = tab[l][e];
        for j in 0..=ncols {
            tab[l][j] /= piv;
        }
        for r in 0..m {
            if r != l && tab[r][e].abs() > 0.0 {
                let f = tab[r][e];
                for j in 0..=ncols {
                    tab[r][j] -= f * tab[l][j];
                }
            }
        }
        let f = cost[e];
        if f.abs() > 0.0 {
            for j in 0..=ncols {
                cost[j] -= f * tab[l][j];
            }
        }
        basis[l] = e;
    }
    let artificial_mass: f64 = (0..m)
        .filter(|&r| basis[r] >= n)
        .map(|r| tab[r][ncols].max(0.0))
        .sum();
    let mut lambda = vec![0.0f64; n];
    for r in 0..m {
        if basis[r] < n {
            lambda[basis[r]] = tab[r][ncols].max(0.0);
        }
    }
    if artificial_mass > 1e-9 {
        let approx = embed(&normalized(&lambda), vertices)?;
        let direction: Vec<f64> = x.iter().zip(&approx).map(|(a, b)| a - b).collect();
        return Err(Error::Infeasible { gap: artificial_mass, direction });
    }
    let lambda = normalized(&lambda);
    let rec = embed(&lambda, vertices)?;
    let err: f64 = rec
        .iter()
        .zip(x)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    if err > 1e-8 {
        return Err(Error::Numerical(format!(
            "decomposition reconstruction error {err:.3e}"
        )));
    }
    Ok(lambda)
}

fn normalized(l: &[f64]) -> Vec<f64> {
    let s: f64 = l.iter().sum();
    if s <= 0.0 {
        return l.to_vec();
    }
    l.iter().map(|v| v / s).collect()
}

/// Mixed-strategy history of a repeated structured game.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct GameTranscript {
    pub learner: Vec<Vec<f64>>,
    pub adversary: Vec<Vec<f64>>,
}

impl GameTranscript {
    pub fn len(&self) -> usize {
        self.learner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.learner.is_empty()
    }
}

/// `sum_i max_j sum_t p_t[i] (u_L(j, q_t) - u_L(i, q_t))`.
pub fn swap_regret(tr: &GameTranscript, game: &StructuredGame) -> Result<f64> {
    if tr.is_empty() || tr.learner.len() != tr.adversary.len() {
        return Err(Error::InvalidInput("empty or misaligned transcript".into()));
    }
    let n = game.n_learner();
    let d = game.dimension();
    // z_i = sum_t p_t[i] * y_t, so sum_t p_t[i] u_L(j, q_t) = <v_j, z_i>
    let mut z = vec![vec![0.0; d]; n];
    for (p, q) in tr.learner.iter().zip(&tr.adversary) {
        let y = embed(q, &game.w)?;
        for i in 0..n {
            if p[i] != 0.0 {
                for k in 0..d {
                    z[i][k] += p[i] * y[k];
                }
            }
        }
    }
    let mut total = 0.0;
    for i in 0..n {
        let own = dot(&game.v[i], &z[i]);
        let best = (0..n)
            .map(|j| dot(&game.v[j], &z[i]))
            .fold(f64::NEG_INFINITY, f64::max);
        total += best - own;
    }
    Ok(total)
}

/// Exhaustive maximum over all n^n swap functions; only viable for tiny n.
pub fn swap_regret_bruteforce(tr: &GameTranscript, game: &StructuredGame) -> Result<f64> {
    let n = game.n_learner();
    if n == 0 || n > 8 {
        return Err(Error::InvalidInput("brute force needs 1 <= n <= 8".into()));
    }
    // per-action cumulative payoffs under each deviation target
    let d = game.dimension();
    let mut z = vec![vec![0.0; d]; n];
    for (p, q) in tr.learner.iter().zip(&tr.adversary) {
        let y = embed(q, &game.w)?;
        for i in 0..n {
            for k in 0..d {
                z[i][k] += p[i] * y[k];
            }
        }
    }
    let gain = |i: usize, j: usize| dot(&game.v[j], &z[i]) - dot(&game.v[i], &z[i]);
    let mut best = f64::NEG_INFINITY;
    let total = (n as u64).pow(n as u32);
    for code in 0..total {
        let mut c = code;
        let mut g = 0.0;
        for i in 0..n {
            let j = (c % n as u64) as usize;
            c /= n as u64;
            g += gain(i, j);
        }
        best = best.max(g);
    }
    Ok(best)
}

/// Per-player maximal swap-deviation gains under a joint distribution over
/// action pairs. Both at most eps certifies an eps-correlated equilibrium.
pub fn correlated_eq_gap(joint: &[Vec<f64>], game: &StructuredGame) -> Result<(f64, f64)> {
    let n = game.n_learner();
    let np = game.n_adversary();
    if joint.len() != n || joint.iter().any(|r| r.len() != np) {
        return Err(Error::InvalidInput("joint distribution shape mismatch".into()));
    }
    let mass: f64 = joint.iter().flatten().sum();
    if (mass - 1.0).abs() > 1e-9 || joint.iter().flatten().any(|&p| p < -1e-12) {
        return Err(Error::InvalidInput("joint distribution not a distribution".into()));
    }
    let mut learner_gap = 0.0;
    for i in 0..n {
        let mut own = 0.0;
        let mut best = f64::NEG_INFINITY;
        for j_dev in 0..n {
            let val: f64 = (0..np)
                .map(|jp| joint[i][jp] * game.learner_payoff(j_dev, jp))
                .sum();
            if j_dev == i {
                own = val;
            }
            best = best.max(val);
        }
        learner_gap += best - own;
    }
    let mut adversary_gap = 0.0;
    for j in 0..np {
        let mut own = 0.0;
        let mut best = f64::NEG_INFINITY;
        for j_dev in 0..np {
            let val: f64 = (0..n)
                .map(|i| joint[i][j] * game.adversary_payoff(i, j_dev))
                .sum();
            if j_dev == j {
                own = val;
            }
            best = best.max(val);
        }
        adversary_gap += best - own;
    }
    Ok((learner_gap, adversary_gap))
}

/// Empirical product-within-round joint distribution of a transcript.
pub fn empirical_joint(tr: &GameTranscript, n: usize, np: usize) -> Result<Vec<Vec<f64>>> {
    if tr.is_empty() {
        return Err(Error::InvalidInput("empty transcript".into()));
    }
    let t = tr.len() as f64;
    let mut joint = vec![vec![0.0; np]; n];
    for (p, q) in tr.learner.iter().zip(&tr.adversary) {
        for i in 0..n {
            for j in 0..np {
                joint[i][j] += p[i] * q[j] / t;
            }
        }
    }
    Ok(joint)
}

/// Convert a normal-form bimatrix game into a structured game: basis vectors
/// on the smaller side, rescaled payoff rows/columns on the larger.
pub fn nfg_to_structured(u_l: &[Vec<f64>], u_a: &[Vec<f64>]) -> Result<StructuredGame> {
    let n = u_l.len();
    if n == 0 || u_l[0].is_empty() {
        return Err(Error::InvalidInput("empty payoff matrix".into()));
    }
    let np = u_l[0].len();
    if u_l.iter().any(|r| r.len() != np)
        || u_a.len() != n
        || u_a.iter().any(|r| r.len() != np)
    {
        return Err(Error::InvalidInput("payoff matrix shape mismatch".into()));
    }
    let learner_side_small = n <= np;
    let max_norm = |cols: Vec<Vec<f64>>| -> f64 {
        cols.iter()
            .map(|c| dot(c, c).sqrt())
            .fold(0.0f64, f64::max)
            .max(1e-300)
    };
    let (v, w, scale_l) = if learner_side_small {
        let cols: Vec<Vec<f64>> = (0..np).map(|j| (0..n).map(|i| u_l[i][j]).collect()).collect();
        let norm = max_norm(cols.clone());
        let scale = 1.0 / norm.max(1.0);
        let v: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .collect();
        let w: Vec<Vec<f64>> = cols.iter().map(|c| c.iter().map(|x| x * scale).collect()).collect();
        (v, w, scale)
    } else {
        let rows: Vec<Vec<f64>> = u_l.to_vec();
        let norm = max_norm(rows.clone());
        let scale = 1.0 / norm.max(1.0);
        let v: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        let w: Vec<Vec<f64>> = (0..np)
            .map(|j| (0..np).map(|k| if k == j { 1.0 } else { 0.0 }).collect())
            .collect();
        (v, w, scale)
    };
    let (vp, wp, scale_a) = if learner_side_small {
        let cols: Vec<Vec<f64>> = (0..np).map(|j| (0..n).map(|i| u_a[i][j]).collect()).collect();
        let norm = max_norm(cols.clone());
        let scale = 1.0 / norm.max(1.0);
        let vp: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|k| if k == i { 1.0 } else { 0.0 }).collect())
            .collect();
        let wp: Vec<Vec<f64>> =
            cols.iter().map(|c| c.iter().map(|x| x * scale).collect()).collect();
        (vp, wp, scale)
    } else {
        let rows: Vec<Vec<f64>> = u_a.to_vec();
        let norm = max_norm(rows.clone());
        let scale = 1.0 / norm.max(1.0);
        let vp: Vec<Vec<f64>> = rows.iter().map(|r| r.iter().map(|x| x * scale).collect()).collect();
        let wp: Vec<Vec<f64>> = (0..np)
            .map(|j| (0..np).map(|k| if k == j { 1.0 } else { 0.0 }).collect())
            .collect();
        (vp, wp, scale)
    };
    let game = StructuredGame {
        v,
        w,
        v_prime: Some(vp),
        w_prime: Some(wp),
        scale_learner: scale_l,
        scale_adversary: scale_a,
    };
    game.validate()?;
    Ok(game)
}

/// Read a payoff matrix from headerless CSV.
pub fn read_matrix_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).from_path(path)?;
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let row: std::result::Result<Vec<f64>, _> =
            rec.iter().map(|c| c.trim().parse::<f64>()).collect();
        rows.push(row.map_err(|e| Error::InvalidInput(format!("bad matrix entry: {e}")))?);
    }
    if rows.is_empty() {
        return Err(Error::InvalidInput("empty matrix".into()));
    }
    Ok(rows)
}

/// A learner that runs the swap engine on the embedding hull and maps its
/// mixed actions back to the simplex through the decomposition oracle.
pub struct ReducedLearner {
    pub game: StructuredGame,
    pub engine: SwapEngine,
    pub transcript: GameTranscript,
    decompositions: HashMap<usize, Vec<f64>>,
    pending: Option<Vec<f64>>,
}

impl ReducedLearner {
    pub fn new(game: StructuredGame, engine: SwapEngine) -> Result<Self> {
        game.validate()?;
        Ok(Self {
            game,
            engine,
            transcript: GameTranscript::default(),
            decompositions: HashMap::new(),
            pending: None,
        })
    }

    /// Engine on the boundary polytope (the hull vertices) of the learner's
    /// embedding set, following the linear-loss configuration row.
    pub fn with_default_engine(
        game: StructuredGame,
        horizon: u64,
        mode: ExecutionMode,
    ) -> Result<Self> {
        let cfg = configure_for_game(&game, horizon, mode)?;
        Self::new(game, cfg)
    }

    /// The learner's mixed strategy this round.
    pub fn play(&mut self) -> Result<Vec<f64>> {
        if let Some(p) = &self.pending {
            return Ok(p.clone());
        }
        let x = self.engine.play()?;
        let n = self.game.n_learner();
        let mut p = vec![0.0; n];
        for (&s, &prob) in x.support.iter().zip(&x.probs) {
            if !self.decompositions.contains_key(&s) {
                let lambda = convex_decompose(&self.engine.disc.points[s], &self.game.v)?;
                self.decompositions.insert(s, lambda);
            }
            for (pi, li) in p.iter_mut().zip(&self.decompositions[&s]) {
                *pi += prob * li;
            }
        }
        self.pending = Some(p.clone());
        Ok(p)
    }

    /// Observe the opponent's mixed strategy and update the engine with the
    /// induced linear loss.
    pub fn observe(&mut self, q: &[f64]) -> Result<()> {
        let p = match self.pending.take() {
            Some(p) => p,
            None => {
                let p = self.play()?;
                self.pending = None;
                p
            }
        };
        let y = embed(q, &self.game.w)?;
        let loss = make_linear_loss(y.iter().map(|v| -v).collect());
        self.engine.update(&loss)?;
        self.transcript.learner.push(p);
        self.transcript.adversary.push(q.to_vec());
        Ok(())
    }
}

fn configure_for_game(
    game: &StructuredGame,
    horizon: u64,
    mode: ExecutionMode,
) -> Result<SwapEngine> {
    let body = match game.dimension() {
        1 => {
            let vals: Vec<f64> = game.v.iter().map(|v| v[0]).collect();
            let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            if hi - lo < 1e-12 {
                ConvexBody::interval(lo - 1e-6, hi + 1e-6)?
            } else {
                ConvexBody::interval(lo, hi)?
            }
        }
        2 => ConvexBody::hull(game.v.clone())?,
        d => return Err(Error::UnsupportedDimension(d)),
    };
    let cfg = crate::engine::configure_from_table(
        crate::losses::LossClass::Linear,
        body.dimension(),
        horizon,
    )?;
    let disc = build_boundary_polytope(&body, cfg.epsilon)?;
    SwapEngine::new(
        body,
        disc,
        RoundingTag::Projection,
        SubroutineTag::Mwu,
        1.0,
        0.0,
        mode,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_game(rng: &mut ChaCha8Rng, n: usize, np: usize, d: usize) -> StructuredGame {
        let sample = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let raw: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let nrm = dot(&raw, &raw).sqrt().max(1.0);
            raw.iter().map(|v| v / nrm).collect()
        };
        let v = (0..n).map(|_| sample(rng)).collect();
        let w = (0..np).map(|_| sample(rng)).collect();
        StructuredGame::new(v, w).unwrap()
    }

    #[test]
    fn embed_basis_and_calibration_point() {
        // calibration embedding of the pure forecast 0.5
        let v = vec![vec![2.0 * 0.5 - 1.0, -0.25]];
        let x = embed(&[1.0], &v).unwrap();
        assert_eq!(x, vec![0.0, -0.25]);

        let vs = vec![vec![0.1, 0.2], vec![0.5, -0.5]];
        let e1 = embed(&[0.0, 1.0], &vs).unwrap();
        assert_eq!(e1, vs[1]);
        let same = vec![vec![0.3, 0.3], vec![0.3, 0.3]];
        let m = embed(&[0.5, 0.5], &same).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-12);
    }

    #[test]
    fn decompose_interval_and_vertices() {
        let verts = vec![vec![0.0], vec![1.0]];
        let l = convex_decompose(&[0.5], &verts).unwrap();
        assert!((l[0] - 0.5).abs() < 1e-9 && (l[1] - 0.5).abs() < 1e-9);

        let l = convex_decompose(&[1.0], &verts).unwrap();
        assert!((l[1] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn decompose_square_support_bound() {
        let verts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
        ];
        let l = convex_decompose(&[0.5, 0.5], &verts).unwrap();
        assert!(l.iter().filter(|&&x| x > 1e-12).count() <= 3);
        let rec = embed(&l, &verts).unwrap();
        assert!((rec[0] - 0.5).abs() < 1e-9 && (rec[1] - 0.5).abs() < 1e-9);
    }

    #[test]
    fn decompose_outside_hull_is_infeasible() {
        let verts = vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]];
        match convex_decompose(&[1.0, 1.0], &verts) {
            Err(Error::Infeasible { gap, direction }) => {
                assert!(gap > 1e-6);
                assert_eq!(direction.len(), 2);
            }
            other => panic!("expected infeasible, got {other:?}"),
        }
    }

    #[test]
    fn decompose_round_trip_on_random_hull_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let verts: Vec<Vec<f64>> = (0..8)
            .map(|_| vec![rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)])
            .collect();
        for _ in 0..200 {
            // random convex combination
            let mut wts: Vec<f64> = (0..8).map(|_| rng.gen::<f64>()).collect();
            let s: f64 = wts.iter().sum();
            wts.iter_mut().for_each(|w| *w /= s);
            let x = embed(&wts, &verts).unwrap();
            let l = convex_decompose(&x, &verts).unwrap();
            let rec = embed(&l, &verts).unwrap();
            let err = ((rec[0] - x[0]).powi(2) + (rec[1] - x[1]).powi(2)).sqrt();
            assert!(err < 1e-9, "round trip error {err}");
        }
    }

    #[test]
    fn decompose_is_deterministic() {
        let verts = vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![1.0, 1.0],
            vec![0.0, 1.0],
            vec![0.5, 0.5],
        ];
        let a = convex_decompose(&[0.4, 0.3], &verts).unwrap();
        let b = convex_decompose(&[0.4, 0.3], &verts).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn swap_regret_closed_forms() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let game = random_game(&mut rng, 3, 3, 2);
        // constant optimal play against a fixed q
        let q = vec![0.2, 0.5, 0.3];
        let y = embed(&q, &game.w).unwrap();
        let best = (0..3)
            .max_by(|&a, &b| {
                dot(&game.v[a], &y).partial_cmp(&dot(&game.v[b], &y)).unwrap()
            })
            .unwrap();
        let mut p = vec![0.0; 3];
        p[best] = 1.0;
        let tr = GameTranscript {
            learner: vec![p; 10],
            adversary: vec![q.clone(); 10],
        };
        assert!(swap_regret(&tr, &game).unwrap().abs() < 1e-12);

        // dominated constant play: closed-form T * (best - own)
        let worst = (0..3)
            .min_by(|&a, &b| {
                dot(&game.v[a], &y).partial_cmp(&dot(&game.v[b], &y)).unwrap()
            })
            .unwrap();
        let mut p = vec![0.0; 3];
        p[worst] = 1.0;
        let tr = GameTranscript {
            learner: vec![p; 10],
            adversary: vec![q.clone(); 10],
        };
        let expected = 10.0 * (dot(&game.v[best], &y) - dot(&game.v[worst], &y));
        assert!((swap_regret(&tr, &game).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn swap_regret_matches_bruteforce() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let n = rng.gen_range(2..=4);
            let game = random_game(&mut rng, n, 3, 2);
            let t = rng.gen_range(2..=8);
            let tr = GameTranscript {
                learner: (0..t)
                    .map(|_| {
                        let mut p: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
                        let s: f64 = p.iter().sum();
                        p.iter_mut().for_each(|x| *x /= s);
                        p
                    })
                    .collect(),
                adversary: (0..t)
                    .map(|_| {
                        let mut q: Vec<f64> = (0..3).map(|_| rng.gen::<f64>()).collect();
                        let s: f64 = q.iter().sum();
                        q.iter_mut().for_each(|x| *x /= s);
                        q
                    })
                    .collect(),
            };
            let a = swap_regret(&tr, &game).unwrap();
            let b = swap_regret_bruteforce(&tr, &game).unwrap();
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }

    #[test]
    fn matching_pennies_roundtrip_and_equilibrium() {
        let u_l = vec![vec![1.0, -1.0], vec![-1.0, 1.0]];
        let u_a = vec![vec![-1.0, 1.0], vec![1.0, -1.0]];
        let game = nfg_to_structured(&u_l, &u_a).unwrap();
        assert_eq!(game.dimension(), 2);
        for i in 0..2 {
            for j in 0..2 {
                let got = game.learner_payoff(i, j);
                assert!((got - game.scale_learner * u_l[i][j]).abs() < 1e-12);
                let got = game.adversary_payoff(i, j);
                assert!((got - game.scale_adversary * u_a[i][j]).abs() < 1e-12);
            }
        }
        // uniform Nash product distribution has zero gaps
        let joint = vec![vec![0.25, 0.25], vec![0.25, 0.25]];
        let (gl, ga) = correlated_eq_gap(&joint, &game).unwrap();
        assert!(gl.abs() < 1e-12 && ga.abs() < 1e-12);

        // point mass on a dominated pair in a trivial game
        let dom = StructuredGame::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0]],
            vec![vec![1.0, 0.0]],
        )
        .unwrap();
        let joint = vec![vec![1.0], vec![0.0]];
        let (gl, _) = correlated_eq_gap(&joint, &dom).unwrap();
        assert!((gl - 1.0).abs() < 1e-12);
    }

    #[test]
    fn single_action_nfg() {
        let g = nfg_to_structured(&[vec![0.7]], &[vec![-0.7]]).unwrap();
        assert_eq!(g.dimension(), 1);
        assert!((g.learner_payoff(0, 0) - g.scale_learner * 0.7).abs() < 1e-12);
    }

    #[test]
    fn game_json_roundtrip() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let game = random_game(&mut rng, 4, 3, 2);
        let s = game.to_json().unwrap();
        let g2 = StructuredGame::from_json(&s).unwrap();
        assert_eq!(game.v, g2.v);
        assert_eq!(game.w, g2.w);
    }

    #[test]
    fn reduced_learner_self_play_small() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let game = random_game(&mut rng, 6, 6, 2);
        let mut mirror = game.clone();
        std::mem::swap(&mut mirror.v, &mut mirror.w);
        mirror.v_prime = None;
        mirror.w_prime = None;
        let mut a = ReducedLearner::with_default_engine(game.clone(), 50, ExecutionMode::Sequential)
            .unwrap();
        let mut b =
            ReducedLearner::with_default_engine(mirror, 50, ExecutionMode::Sequential).unwrap();
        for _ in 0..50 {
            let pa = a.play().unwrap();
            let pb = b.play().unwrap();
            a.observe(&pb).unwrap();
            b.observe(&pa).unwrap();
        }
        let sr = swap_regret(&a.transcript, &game).unwrap();
        assert!(sr.is_finite());
        for p in &a.transcript.learner {
            let s: f64 = p.iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
            assert!(p.iter().all(|&x| x >= -1e-12));
        }
    }
}
