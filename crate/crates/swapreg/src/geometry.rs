//! Convex bodies, projections, and the discretization constructions the swap
//! engines consume: interval grids, box nets, Kuhn triangulations, and
//! boundary polytope approximations.

use std::collections::HashMap;
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const MEMBERSHIP_TOL: f64 = 1e-12;

pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    a.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn cross2(o: &[f64], a: &[f64], b: &[f64]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Euclidean projection of `p` onto the segment `[a, b]`.
fn project_segment(p: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let d: Vec<f64> = b.iter().zip(a).map(|(x, y)| x - y).collect();
    let len2: f64 = d.iter().map(|x| x * x).sum();
    if len2 == 0.0 {
        return a.to_vec();
    }
    let t: f64 = p
        .iter()
        .zip(a)
        .zip(&d)
        .map(|((x, y), z)| (x - y) * z)
        .sum::<f64>()
        / len2;
    let t = t.clamp(0.0, 1.0);
    a.iter().zip(&d).map(|(x, z)| x + t * z).collect()
}

/// Andrew's monotone chain; returns hull vertex indices in ccw order.
fn convex_hull_2d(points: &[Vec<f64>]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..points.len()).collect();
    idx.sort_by(|&i, &j| {
        points[i]
            .partial_cmp(&points[j])
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    idx.dedup_by(|&mut i, &mut j| points[i] == points[j]);
    if idx.len() <= 2 {
        return idx;
    }
    let mut hull: Vec<usize> = Vec::new();
    for pass in 0..2 {
        let start = hull.len();
        let it: Box<dyn Iterator<Item = &usize>> = if pass == 0 {
            Box::new(idx.iter())
        } else {
            Box::new(idx.iter().rev())
        };
        for &i in it {
            while hull.len() >= start + 2
                && cross2(
                    &points[hull[hull.len() - 2]],
                    &points[hull[hull.len() - 1]],
                    &points[i],
                ) <= 1e-15
            {
                hull.pop();
            }
            hull.push(i);
        }
        hull.pop();
    }
    hull
}

/// The supported convex body families.
#[derive(Clone, Debug)]
pub enum BodyShape {
    Interval { lo: f64, hi: f64 },
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Ball { center: Vec<f64>, radius: f64 },
    /// Convex hull of explicit vertices; `hull` caches the ccw boundary (d = 2).
    Hull { vertices: Vec<Vec<f64>>, hull: Vec<usize> },
}

/// A convex action set with membership and Euclidean projection oracles.
#[derive(Clone, Debug)]
pub struct ConvexBody {
    shape: BodyShape,
    dimension: usize,
    diameter_bound: f64,
}

impl ConvexBody {
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(Error::InvalidInput(format!(
                "interval bounds must be finite with lo < hi, got [{lo}, {hi}]"
            )));
        }
        Ok(Self {
            shape: BodyShape::Interval { lo, hi },
            dimension: 1,
            diameter_bound: hi - lo,
        })
    }

    pub fn unit_interval() -> Self {
        Self::interval(0.0, 1.0).unwrap()
    }

    pub fn axis_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidInput("box bounds length mismatch".into()));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if !l.is_finite() || !h.is_finite() || l >= h {
                return Err(Error::InvalidInput(format!(
                    "box bounds must be finite with lo < hi, got [{l}, {h}]"
                )));
            }
        }
        let diam = dist(&lo, &hi);
        let dimension = lo.len();
        Ok(Self {
            shape: BodyShape::Box { lo, hi },
            dimension,
            diameter_bound: diam,
        })
    }

    pub fn unit_box(d: usize) -> Self {
        Self::axis_box(vec![0.0; d], vec![1.0; d]).unwrap()
    }

    pub fn ball(center: Vec<f64>, radius: f64) -> Result<Self> {
        if !(radius > 0.0) || center.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("ball needs finite center, radius > 0".into()));
        }
        let dimension = center.len();
        Ok(Self {
            shape: BodyShape::Ball { center, radius },
            dimension,
            diameter_bound: 2.0 * radius,
        })
    }

    pub fn unit_ball(d: usize) -> Self {
        Self::ball(vec![0.0; d], 1.0).unwrap()
    }

    /// Convex hull of explicit vertices. Supported for d = 1 and d = 2.
    pub fn hull(vertices: Vec<Vec<f64>>) -> Result<Self> {
        if vertices.is_empty() {
            return Err(Error::InvalidInput("hull needs at least one vertex".into()));
        }
        let d = vertices[0].len();
        if vertices.iter().any(|v| v.len() != d) {
            return Err(Error::InvalidInput("hull vertices of mixed dimension".into()));
        }
        if d == 0 || d > 2 {
            return Err(Error::UnsupportedBody(format!(
                "hull bodies supported only for d <= 2, got d = {d}"
            )));
        }
        let hull = if d == 2 {
            convex_hull_2d(&vertices)
        } else {
            Vec::new()
        };
        let mut diam: f64 = 0.0;
        for i in 0..vertices.len() {
            for j in i + 1..vertices.len() {
                diam = diam.max(dist(&vertices[i], &vertices[j]));
            }
        }
        Ok(Self {
            shape: BodyShape::Hull { vertices, hull },
            dimension: d,
            diameter_bound: diam.max(f64::MIN_POSITIVE),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn diameter_bound(&self) -> f64 {
        self.diameter_bound
    }

    pub fn shape(&self) -> &BodyShape {
        &self.shape
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        self.contains_tol(x, MEMBERSHIP_TOL * (1.0 + self.diameter_bound))
    }

    pub fn contains_tol(&self, x: &[f64], tol: f64) -> bool {
        match &self.shape {
            BodyShape::Interval { lo, hi } => x[0] >= lo - tol && x[0] <= hi + tol,
            BodyShape::Box { lo, hi } => x
                .iter()
                .zip(lo)
                .zip(hi)
                .all(|((v, l), h)| *v >= l - tol && *v <= h + tol),
            BodyShape::Ball { center, radius } => dist(x, center) <= radius + tol,
            BodyShape::Hull { vertices, hull } => match self.dimension {
                1 => {
                    let lo = vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                    let hi = vertices.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                    x[0] >= lo - tol && x[0] <= hi + tol
                }
                _ => {
                    if hull.len() == 1 {
                        return dist(x, &vertices[hull[0]]) <= tol;
                    }
                    if hull.len() == 2 {
                        let p = project_segment(x, &vertices[hull[0]], &vertices[hull[1]]);
                        return dist(x, &p) <= tol;
                    }
                    (0..hull.len()).all(|i| {
                        let a = &vertices[hull[i]];
                        let b = &vertices[hull[(i + 1) % hull.len()]];
                        cross2(a, b, x) >= -tol * (1.0 + self.diameter_bound)
                    })
                }
            },
        }
    }

    /// Euclidean projection onto the body.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match &self.shape {
            BodyShape::Interval { lo, hi } => vec![x[0].clamp(*lo, *hi)],
            BodyShape::Box { lo, hi } => x
                .iter()
                .zip(lo)
                .zip(hi)
                .map(|((v, l), h)| v.clamp(*l, *h))
                .collect(),
            BodyShape::Ball { center, radius } => {
                let r = dist(x, center);
                if r <= *radius {
                    x.to_vec()
                } else {
                    center
                        .iter()
                        .zip(x)
                        .map(|(c, v)| c + (v - c) * radius / r)
                        .collect()
                }
            }
            BodyShape::Hull { vertices, hull } => {
                if self.contains(x) {
                    return x.to_vec();
                }
                match self.dimension {
                    1 => {
                        let lo = vertices.iter().map(|v| v[0]).fold(f64::INFINITY, f64::min);
                        let hi = vertices.iter().map(|v| v[0]).fold(f64::NEG_INFINITY, f64::max);
                        vec![x[0].clamp(lo, hi)]
                    }
                    _ => {
                        if hull.len() == 1 {
                            return vertices[hull[0]].clone();
                        }
                        let mut best = vertices[hull[0]].clone();
                        let mut best_d = f64::INFINITY;
                        let m = hull.len();
                        for i in 0..m {
                            let a = &vertices[hull[i]];
                            let b = &vertices[hull[(i + 1) % m.max(2)]];
                            let p = project_segment(x, a, b);
                            let d = dist(x, &p);
                            if d < best_d {
                                best_d = d;
                                best = p;
                            }
                        }
                        best
                    }
                }
            }
        }
    }

    pub(crate) fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match &self.shape {
            BodyShape::Interval { lo, hi } => (vec![*lo], vec![*hi]),
            BodyShape::Box { lo, hi } => (lo.clone(), hi.clone()),
            BodyShape::Ball { center, radius } => (
                center.iter().map(|c| c - radius).collect(),
                center.iter().map(|c| c + radius).collect(),
            ),
            BodyShape::Hull { vertices, .. } => {
                let d = self.dimension;
                let mut lo = vec![f64::INFINITY; d];
                let mut hi = vec![f64::NEG_INFINITY; d];
                for v in vertices {
                    for k in 0..d {
                        lo[k] = lo[k].min(v[k]);
                        hi[k] = hi[k].max(v[k]);
                    }
                }
                (lo, hi)
            }
        }
    }

    /// Uniform sample via rejection from the bounding box.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<f64> = lo
                .iter()
                .zip(&hi)
                .map(|(l, h)| rng.gen_range(*l..=*h))
                .collect();
            if self.contains(&x) {
                return x;
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DiscretizationKind {
    Net,
    Triangulation,
    BoundaryPolytope,
}

/// A finite point set `K^eps` with covering radius `epsilon`, optional simplex
/// structure, and the construction kind.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Discretization {
    pub kind: DiscretizationKind,
    pub epsilon: f64,
    pub points: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub simplices: Option<Vec<Vec<usize>>>,
    /// Set when a boundary polytope was built outside the theorem's stated
    /// epsilon range.
    #[serde(skip)]
    pub relaxed_epsilon: bool,
    #[serde(skip)]
    locator: OnceLock<CellIndex>,
}

#[derive(Clone, Debug, Default)]
struct CellIndex {
    origin: Vec<f64>,
    cell: f64,
    map: HashMap<Vec<i64>, Vec<usize>>,
}

impl Discretization {
    fn new(
        kind: DiscretizationKind,
        epsilon: f64,
        points: Vec<Vec<f64>>,
        simplices: Option<Vec<Vec<usize>>>,
    ) -> Self {
        Self {
            kind,
            epsilon,
            points,
            simplices,
            relaxed_epsilon: false,
            locator: OnceLock::new(),
        }
    }

    /// Assemble a discretization from explicit parts.
    pub fn from_points(
        kind: DiscretizationKind,
        epsilon: f64,
        points: Vec<Vec<f64>>,
        simplices: Option<Vec<Vec<usize>>>,
    ) -> Self {
        Self::new(kind, epsilon, points, simplices)
    }

    pub fn dimension(&self) -> usize {
        self.points.first().map_or(0, |p| p.len())
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Index of the nearest point; ties broken by lowest index.
    pub fn nearest_point(&self, x: &[f64]) -> Result<(usize, f64)> {
        if self.points.is_empty() {
            return Err(Error::InvalidInput("empty discretization".into()));
        }
        let mut best = 0;
        let mut best_d = dist(x, &self.points[0]);
        for (i, p) in self.points.iter().enumerate().skip(1) {
            let d = dist(x, p);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        Ok((best, best_d))
    }

    /// Center of mass of the point set.
    pub fn centroid(&self) -> Vec<f64> {
        let d = self.dimension();
        let mut c = vec![0.0; d];
        for p in &self.points {
            for k in 0..d {
                c[k] += p[k];
            }
        }
        let n = self.points.len() as f64;
        c.iter_mut().for_each(|v| *v /= n);
        c
    }

    /// For 1D grids: the sorted knot values.
    pub fn knots_1d(&self) -> Result<Vec<f64>> {
        if self.dimension() != 1 {
            return Err(Error::UnsupportedDimension(self.dimension()));
        }
        let mut k: Vec<f64> = self.points.iter().map(|p| p[0]).collect();
        k.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(k)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    fn cell_index(&self) -> &CellIndex {
        self.locator.get_or_init(|| {
            let d = self.dimension();
            let mut origin = vec![f64::INFINITY; d];
            for p in &self.points {
                for k in 0..d {
                    origin[k] = origin[k].min(p[k]);
                }
            }
            let cell = self.epsilon.max(1e-12);
            let mut map: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
            if let Some(simplices) = &self.simplices {
                for (si, simplex) in simplices.iter().enumerate() {
                    let mut lo = vec![i64::MAX; d];
                    let mut hi = vec![i64::MIN; d];
                    for &vi in simplex {
                        for k in 0..d {
                            let c = ((self.points[vi][k] - origin[k]) / cell).floor() as i64;
                            lo[k] = lo[k].min(c);
                            hi[k] = hi[k].max(c);
                        }
                    }
                    // register the simplex in every overlapped cell
                    let mut cur = lo.clone();
                    loop {
                        map.entry(cur.clone()).or_default().push(si);
                        let mut k = 0;
                        loop {
                            if k == d {
                                break;
                            }
                            cur[k] += 1;
                            if cur[k] <= hi[k] {
                                break;
                            }
                            cur[k] = lo[k];
                            k += 1;
                        }
                        if k == d {
                            break;
                        }
                    }
                }
            }
            CellIndex { origin, cell, map }
        })
    }

    /// Find a simplex containing `x` (after projection onto the hull of the
    /// points) and the barycentric weights expressing it.
    ///
    /// Returns (vertex indices, weights) with weights >= 0 summing to 1.
    pub fn locate_simplex(&self, x: &[f64]) -> Result<(Vec<usize>, Vec<f64>)> {
        let simplices = self
            .simplices
            .as_ref()
            .ok_or_else(|| Error::InvalidInput("discretization has no simplices".into()))?;
        let d = self.dimension();
        let idx = self.cell_index();
        let cell: Vec<i64> = (0..d)
            .map(|k| ((x[k] - idx.origin[k]) / idx.cell).floor() as i64)
            .collect();
        let mut candidates: Vec<usize> = idx.map.get(&cell).cloned().unwrap_or_default();
        if candidates.is_empty() {
            // neighbor cells, then everything
            for (key, sids) in &idx.map {
                if key.iter().zip(&cell).all(|(a, b)| (a - b).abs() <= 1) {
                    candidates.extend_from_slice(sids);
                }
            }
        }
        if candidates.is_empty() {
            candidates = (0..simplices.len()).collect();
        }
        for &si in &candidates {
            if let Some(w) = self.barycentric(&simplices[si], x, 1e-9) {
                return Ok((simplices[si].clone(), w));
            }
        }
        // Degenerate or slightly-outside point: least-squares over all
        // simplices with nonnegativity clipping, keep the best residual.
        let mut best: Option<(usize, Vec<f64>, f64)> = None;
        for (si, simplex) in simplices.iter().enumerate() {
            if let Some(w) = self.least_squares_weights(simplex, x) {
                let mut rec = vec![0.0; d];
                for (&vi, &wi) in simplex.iter().zip(&w) {
                    for k in 0..d {
                        rec[k] += wi * self.points[vi][k];
                    }
                }
                let res = dist(&rec, x);
                if best.as_ref().map_or(true, |(_, _, b)| res < *b) {
                    best = Some((si, w, res));
                }
            }
        }
        let tol = (self.epsilon * self.epsilon).max(1e-9);
        match best {
            Some((si, w, res)) if res <= tol + 1e-9 => Ok((simplices[si].clone(), w)),
            Some((_, _, res)) => Err(Error::GeometryInconsistency(format!(
                "point is {res:.3e} outside the triangulated hull (tolerance {tol:.3e})"
            ))),
            None => Err(Error::GeometryInconsistency(
                "no simplex admits a barycentric solution".into(),
            )),
        }
    }

    /// Exact barycentric solve; `None` if the system is singular or any
    /// weight is below `-tol`.
    fn barycentric(&self, simplex: &[usize], x: &[f64], tol: f64) -> Option<Vec<f64>> {
        let d = self.dimension();
        let k = simplex.len();
        if k != d + 1 {
            return None;
        }
        let mut m = DMatrix::zeros(d + 1, k);
        for (j, &vi) in simplex.iter().enumerate() {
            for i in 0..d {
                m[(i, j)] = self.points[vi][i];
            }
            m[(d, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(d + 1);
        for i in 0..d {
            rhs[i] = x[i];
        }
        rhs[d] = 1.0;
        let w = m.lu().solve(&rhs)?;
        if w.iter().any(|&v| v < -tol) {
            return None;
        }
        let mut w: Vec<f64> = w.iter().map(|&v| v.max(0.0)).collect();
        let s: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= s);
        Some(w)
    }

    fn least_squares_weights(&self, simplex: &[usize], x: &[f64]) -> Option<Vec<f64>> {
        let d = self.dimension();
        let k = simplex.len();
        let mut m = DMatrix::zeros(d + 1, k);
        for (j, &vi) in simplex.iter().enumerate() {
            for i in 0..d {
                m[(i, j)] = self.points[vi][i];
            }
            m[(d, j)] = 1.0;
        }
        let mut rhs = DVector::zeros(d + 1);
        for i in 0..d {
            rhs[i] = x[i];
        }
        rhs[d] = 1.0;
        let svd = m.svd(true, true);
        let w = svd.solve(&rhs, 1e-12).ok()?;
        let mut w: Vec<f64> = w.iter().map(|&v| v.max(0.0)).collect();
        let s: f64 = w.iter().sum();
        if s <= 0.0 {
            return None;
        }
        w.iter_mut().for_each(|v| *v /= s);
        Some(w)
    }
}

/// Uniform 1D grid with consecutive-pair simplices.
pub fn build_interval_grid(lo: f64, hi: f64, epsilon: f64) -> Result<Discretization> {
    if !lo.is_finite() || !hi.is_finite() || lo >= hi {
        return Err(Error::InvalidInput(format!(
            "interval grid bounds must be finite with lo < hi, got [{lo}, {hi}]"
        )));
    }
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let len = hi - lo;
    let cells = ((len / epsilon) - 1e-9).ceil().max(1.0) as usize;
    let step = len / cells as f64;
    let mut points: Vec<Vec<f64>> = (0..=cells).map(|i| vec![lo + i as f64 * step]).collect();
    points[cells] = vec![hi];
    let simplices: Vec<Vec<usize>> = (0..cells).map(|i| vec![i, i + 1]).collect();
    Ok(Discretization::new(
        DiscretizationKind::Triangulation,
        epsilon,
        points,
        Some(simplices),
    ))
}

/// Regular grid of spacing `epsilon / sqrt(d)` over an axis-aligned box.
pub fn build_box_net(body: &ConvexBody, epsilon: f64) -> Result<Discretization> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let (lo, hi) = match body.shape() {
        BodyShape::Box { lo, hi } => (lo.clone(), hi.clone()),
        BodyShape::Interval { lo, hi } => (vec![*lo], vec![*hi]),
        _ => {
            return Err(Error::UnsupportedBody(
                "box net requires an axis-aligned box".into(),
            ))
        }
    };
    let d = lo.len();
    let spacing = epsilon / (d as f64).sqrt();
    let counts: Vec<usize> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| (((h - l) / spacing) - 1e-9).ceil().max(1.0) as usize + 1)
        .collect();
    let mut points = Vec::new();
    let mut cur = vec![0usize; d];
    loop {
        points.push(
            (0..d)
                .map(|k| lo[k] + (hi[k] - lo[k]) * cur[k] as f64 / (counts[k] - 1) as f64)
                .collect(),
        );
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            cur[k] += 1;
            if cur[k] < counts[k] {
                break;
            }
            cur[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    Ok(Discretization::new(
        DiscretizationKind::Net,
        epsilon,
        points,
        None,
    ))
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn go(rest: &mut Vec<usize>, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if rest.is_empty() {
            out.push(cur.clone());
            return;
        }
        for i in 0..rest.len() {
            let v = rest.remove(i);
            cur.push(v);
            go(rest, cur, out);
            cur.pop();
            rest.insert(i, v);
        }
    }
    let mut out = Vec::new();
    go(&mut (0..d).collect(), &mut Vec::new(), &mut out);
    out
}

/// Kuhn (Freudenthal) triangulation of a box or ball, d <= 3. Each grid cell
/// is cut into d! simplices; cells fully outside the body are dropped and
/// boundary-cell vertices are projected onto the body.
pub fn build_kuhn_triangulation(body: &ConvexBody, epsilon: f64) -> Result<Discretization> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let d = body.dimension();
    if d > 3 {
        return Err(Error::UnsupportedDimension(d));
    }
    let is_box = matches!(body.shape(), BodyShape::Box { .. } | BodyShape::Interval { .. });
    let is_round = matches!(body.shape(), BodyShape::Ball { .. })
        || (matches!(body.shape(), BodyShape::Hull { .. }) && d == 2);
    if !is_box && !is_round {
        return Err(Error::UnsupportedBody(
            "Kuhn triangulation requires a box, a ball, or a 2D hull".into(),
        ));
    }
    if d == 1 {
        let (lo, hi) = body.bounding_box();
        return build_interval_grid(lo[0], hi[0], epsilon);
    }
    let (lo, hi) = body.bounding_box();
    // Boxes align exactly so no clipping occurs; for balls the cell is halved
    // so that projecting boundary vertices keeps simplex diameters <= 2 eps.
    let spacing = if is_box {
        epsilon / (d as f64).sqrt()
    } else {
        epsilon / (2.0 * (d as f64).sqrt())
    };
    let cells: Vec<usize> = lo
        .iter()
        .zip(&hi)
        .map(|(l, h)| (((h - l) / spacing) - 1e-9).ceil().max(1.0) as usize)
        .collect();
    let steps: Vec<f64> = lo
        .iter()
        .zip(&hi)
        .zip(&cells)
        .map(|((l, h), &c)| (h - l) / c as f64)
        .collect();
    let half_diag = 0.5 * steps.iter().map(|s| s * s).sum::<f64>().sqrt();
    let perms = permutations(d);
    let mut vertex_ids: HashMap<Vec<i64>, usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut simplices: Vec<Vec<usize>> = Vec::new();
    let mut vertex_of = |coord: Vec<i64>, points: &mut Vec<Vec<f64>>| -> usize {
        if let Some(&id) = vertex_ids.get(&coord) {
            return id;
        }
        let p: Vec<f64> = (0..d).map(|k| lo[k] + coord[k] as f64 * steps[k]).collect();
        let id = points.len();
        points.push(p);
        vertex_ids.insert(coord, id);
        id
    };
    let mut cur = vec![0usize; d];
    loop {
        let keep = if is_box {
            true
        } else {
            let center: Vec<f64> = (0..d)
                .map(|k| lo[k] + (cur[k] as f64 + 0.5) * steps[k])
                .collect();
            let projected = body.project(&center);
            dist(&center, &projected) <= half_diag + 1e-12
        };
        if keep {
            let base: Vec<i64> = cur.iter().map(|&c| c as i64).collect();
            for perm in &perms {
                let mut simplex = Vec::with_capacity(d + 1);
                let mut coord = base.clone();
                simplex.push(vertex_of(coord.clone(), &mut points));
                for &axis in perm {
                    coord[axis] += 1;
                    simplex.push(vertex_of(coord.clone(), &mut points));
                }
                simplices.push(simplex);
            }
        }
        let mut k = 0;
        loop {
            if k == d {
                break;
            }
            cur[k] += 1;
            if cur[k] < cells[k] {
                break;
            }
            cur[k] = 0;
            k += 1;
        }
        if k == d {
            break;
        }
    }
    if is_round {
        for p in points.iter_mut() {
            if !body.contains(p) {
                *p = body.project(p);
            }
        }
    }
    Ok(Discretization::new(
        DiscretizationKind::Triangulation,
        epsilon,
        points,
        Some(simplices),
    ))
}

/// Vertices on the boundary of a ball (d <= 3), an interval, or an explicit
/// polytope, forming an inscribed polytope with Hausdorff defect <= eps^2.
pub fn build_boundary_polytope(body: &ConvexBody, epsilon: f64) -> Result<Discretization> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidInput(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    let relaxed = epsilon > 0.01;
    let mut disc = match body.shape() {
        BodyShape::Interval { lo, hi } => Discretization::new(
            DiscretizationKind::BoundaryPolytope,
            epsilon,
            vec![vec![*lo], vec![*hi]],
            None,
        ),
        BodyShape::Hull { vertices, hull } => {
            let points: Vec<Vec<f64>> = if hull.is_empty() {
                vertices.clone()
            } else {
                hull.iter().map(|&i| vertices[i].clone()).collect()
            };
            Discretization::new(DiscretizationKind::BoundaryPolytope, epsilon, points, None)
        }
        BodyShape::Ball { center, radius } => match center.len() {
            1 => Discretization::new(
                DiscretizationKind::BoundaryPolytope,
                epsilon,
                vec![vec![center[0] - radius], vec![center[0] + radius]],
                None,
            ),
            2 => circle_polytope(center, *radius, epsilon),
            3 => sphere_polytope(center, *radius, epsilon),
            d => return Err(Error::UnsupportedDimension(d)),
        },
        BodyShape::Box { .. } => {
            return Err(Error::UnsupportedBody(
                "boundary polytope requires a ball, interval, or explicit polytope".into(),
            ))
        }
    };
    disc.relaxed_epsilon = relaxed;
    Ok(disc)
}

fn circle_polytope(center: &[f64], radius: f64, epsilon: f64) -> Discretization {
    let mut m = (std::f64::consts::PI / (std::f64::consts::SQRT_2 * epsilon)).ceil() as usize;
    m = m.max(3);
    // sagitta of a regular m-gon chord: r (1 - cos(pi/m))
    while radius * (1.0 - (std::f64::consts::PI / m as f64).cos()) > epsilon * epsilon {
        m += 1;
    }
    let points: Vec<Vec<f64>> = (0..m)
        .map(|i| {
            let a = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
            vec![center[0] + radius * a.cos(), center[1] + radius * a.sin()]
        })
        .collect();
    Discretization::new(DiscretizationKind::BoundaryPolytope, epsilon, points, None)
}

/// Subdivided octahedron projected onto the sphere; boundary triangles are
/// kept in `simplices` so the defect can be checked facet by facet.
fn sphere_polytope(center: &[f64], radius: f64, epsilon: f64) -> Discretization {
    let target = epsilon * epsilon;
    let mut k = ((2.0 / epsilon).ceil() as usize).max(1);
    loop {
        let (points, triangles, defect) = subdivided_octahedron(center, radius, k);
        if defect <= target || k > 4096 {
            return Discretization::new(
                DiscretizationKind::BoundaryPolytope,
                epsilon,
                points,
                Some(triangles),
            );
        }
        k += (k / 4).max(1);
    }
}

fn subdivided_octahedron(
    center: &[f64],
    radius: f64,
    k: usize,
) -> (Vec<Vec<f64>>, Vec<Vec<usize>>, f64) {
    let mut ids: HashMap<(i64, i64, i64), usize> = HashMap::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut triangles: Vec<Vec<usize>> = Vec::new();
    let quant = |v: &[f64]| {
        (
            (v[0] * 1e12).round() as i64,
            (v[1] * 1e12).round() as i64,
            (v[2] * 1e12).round() as i64,
        )
    };
    let mut vertex = |dir: Vec<f64>, points: &mut Vec<Vec<f64>>| -> usize {
        let n = norm(&dir);
        let p: Vec<f64> = (0..3).map(|i| center[i] + radius * dir[i] / n).collect();
        let key = quant(&p);
        if let Some(&id) = ids.get(&key) {
            return id;
        }
        let id = points.len();
        points.push(p);
        ids.insert(key, id);
        id
    };
    for sx in [-1.0f64, 1.0] {
        for sy in [-1.0f64, 1.0] {
            for sz in [-1.0f64, 1.0] {
                let a = [sx, 0.0, 0.0];
                let b = [0.0, sy, 0.0];
                let c = [0.0, 0.0, sz];
                // barycentric lattice on the face, projected to the sphere
                let dir = |i: usize, j: usize| -> Vec<f64> {
                    let (fi, fj) = (i as f64 / k as f64, j as f64 / k as f64);
                    let fk = 1.0 - fi - fj;
                    (0..3).map(|t| fi * a[t] + fj * b[t] + fk * c[t]).collect()
                };
                for i in 0..k {
                    for j in 0..(k - i) {
                        let v00 = vertex(dir(i, j), &mut points);
                        let v10 = vertex(dir(i + 1, j), &mut points);
                        let v01 = vertex(dir(i, j + 1), &mut points);
                        triangles.push(vec![v00, v10, v01]);
                        if i + j + 1 < k {
                            let v11 = vertex(dir(i + 1, j + 1), &mut points);
                            triangles.push(vec![v10, v11, v01]);
                        }
                    }
                }
            }
        }
    }
    // worst-case cap height over all facets: r - dist(center, facet plane)
    let mut defect: f64 = 0.0;
    for t in &triangles {
        let a = &points[t[0]];
        let b = &points[t[1]];
        let c = &points[t[2]];
        let u: Vec<f64> = (0..3).map(|i| b[i] - a[i]).collect();
        let v: Vec<f64> = (0..3).map(|i| c[i] - a[i]).collect();
        let n = [
            u[1] * v[2] - u[2] * v[1],
            u[2] * v[0] - u[0] * v[2],
            u[0] * v[1] - u[1] * v[0],
        ];
        let nn = norm(&n);
        if nn < 1e-15 {
            continue;
        }
        let plane_dist =
            ((0..3).map(|i| n[i] * (a[i] - center[i])).sum::<f64>() / nn).abs();
        defect = defect.max(radius - plane_dist);
    }
    (points, triangles, defect)
}
