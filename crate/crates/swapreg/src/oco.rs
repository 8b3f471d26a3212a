//! Scaled external-regret subroutines: projected OGD with the convex,
//! strongly-convex (GDS), and nearly-strongly-convex (GDK) learning-rate
//! schedules, the GDK2 wrapper that linearizes losses on a grid first, and
//! scaled multiplicative weights over finite point sets.

use crate::geometry::{ConvexBody, Discretization};
use crate::losses::{piecewise_linearize, LossClass, LossSpec};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ScheduleTag {
    Convex,
    Gds,
    Gdk,
}

/// Learning rate as a function of the cumulative scale `G`.
///
/// - `Gds`: `1/alpha` for `G <= 1`, then `1/(alpha G)`.
/// - `Gdk`: `2/alpha` for `G <= 1`, `2/(alpha G)` up to `(2/(alpha c))^2`,
///   then `c/sqrt(G)`.
/// - `Convex`: `c/sqrt(G)` throughout.
pub fn lr_schedule(tag: ScheduleTag, alpha: f64, c: f64, g_total: f64) -> Result<f64> {
    if g_total < 0.0 {
        return Err(Error::InvalidInput(format!(
            "cumulative scale must be nonnegative, got {g_total}"
        )));
    }
    Ok(match tag {
        ScheduleTag::Convex => {
            if g_total <= 0.0 {
                c
            } else {
                c / g_total.sqrt()
            }
        }
        ScheduleTag::Gds => {
            if g_total <= 1.0 {
                1.0 / alpha
            } else {
                1.0 / (alpha * g_total)
            }
        }
        ScheduleTag::Gdk => {
            let threshold = (2.0 / (alpha * c)).powi(2);
            if g_total <= 1.0 {
                2.0 / alpha
            } else if g_total <= threshold {
                2.0 / (alpha * g_total)
            } else {
                c / g_total.sqrt()
            }
        }
    })
}

/// Projected online gradient descent with adversary-chosen per-round scales.
#[derive(Clone, Debug)]
pub struct ScaledOgd {
    pub body: ConvexBody,
    x: Vec<f64>,
    pub scale_total: f64,
    pub lipschitz: f64,
    pub alpha: f64,
    pub epsilon: f64,
    pub c: f64,
    pub tag: ScheduleTag,
    pub steps: u64,
}

impl ScaledOgd {
    pub fn new_convex(body: ConvexBody, x0: Vec<f64>, lipschitz: f64) -> Result<Self> {
        if !(lipschitz > 0.0) {
            return Err(Error::InvalidInput("lipschitz must be positive".into()));
        }
        let c = body.diameter_bound() / (lipschitz * 2f64.sqrt());
        Self::build(body, x0, lipschitz, 0.0, 0.0, c, ScheduleTag::Convex)
    }

    pub fn new_gds(body: ConvexBody, x0: Vec<f64>, lipschitz: f64, alpha: f64) -> Result<Self> {
        if !(alpha > 0.0) {
            return Err(Error::InvalidInput("gds needs alpha > 0".into()));
        }
        Self::build(body, x0, lipschitz, alpha, 0.0, 0.0, ScheduleTag::Gds)
    }

    pub fn new_gdk(
        body: ConvexBody,
        x0: Vec<f64>,
        lipschitz: f64,
        alpha: f64,
        epsilon: f64,
    ) -> Result<Self> {
        if !(alpha > 0.0) || !(epsilon > 0.0) || !(lipschitz > 0.0) {
            return Err(Error::InvalidInput("gdk needs positive alpha, epsilon, L".into()));
        }
        let c = 2f64.sqrt() * epsilon / lipschitz;
        Self::build(body, x0, lipschitz, alpha, epsilon, c, ScheduleTag::Gdk)
    }

    fn build(
        body: ConvexBody,
        x0: Vec<f64>,
        lipschitz: f64,
        alpha: f64,
        epsilon: f64,
        c: f64,
        tag: ScheduleTag,
    ) -> Result<Self> {
        if x0.len() != body.dimension() {
            return Err(Error::InvalidInput("x0 dimension mismatch".into()));
        }
        let x = body.project(&x0);
        Ok(Self {
            body,
            x,
            scale_total: 0.0,
            lipschitz,
            alpha,
            epsilon,
            c,
            tag,
            steps: 0,
        })
    }

    /// The point the subroutine currently recommends.
    pub fn current(&self) -> &[f64] {
        &self.x
    }

    fn check_class(&self, loss: &LossSpec) -> Result<()> {
        let ok = match self.tag {
            ScheduleTag::Convex => true,
            ScheduleTag::Gds => loss.strong_convexity >= self.alpha - 1e-12,
            ScheduleTag::Gdk => {
                loss.class == LossClass::Nsc || loss.strong_convexity >= self.alpha - 1e-12
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "loss class {:?} (alpha = {}) incompatible with {:?} schedule (alpha = {})",
                loss.class, loss.strong_convexity, self.tag, self.alpha
            )))
        }
    }

    /// One scaled OGD update; plays the pre-update point, returns it.
    /// A zero scale leaves the state untouched.
    pub fn step(&mut self, loss: &LossSpec, g: f64) -> Result<Vec<f64>> {
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::InvalidInput(format!("scale must lie in [0,1], got {g}")));
        }
        self.check_class(loss)?;
        let played = self.x.clone();
        self.steps += 1;
        if g == 0.0 {
            return Ok(played);
        }
        self.scale_total += g;
        let eta = lr_schedule(self.tag, self.alpha, self.c, self.scale_total)?;
        let grad = loss.subgradient(&self.x);
        let moved: Vec<f64> = self
            .x
            .iter()
            .zip(&grad)
            .map(|(xi, gi)| xi - eta * g * gi)
            .collect();
        self.x = self.body.project(&moved);
        Ok(played)
    }

    /// GDK applied to the piecewise linearization of `loss` on `grid` (1D).
    pub fn gdk2_step(
        &mut self,
        loss: &LossSpec,
        g: f64,
        grid: &Discretization,
    ) -> Result<Vec<f64>> {
        if self.tag != ScheduleTag::Gdk {
            return Err(Error::Configuration("gdk2_step requires the gdk schedule".into()));
        }
        if self.body.dimension() != 1 {
            return Err(Error::UnsupportedDimension(self.body.dimension()));
        }
        let lin = piecewise_linearize(loss, grid)?;
        self.step(&lin, g)
    }
}

/// Scaled multiplicative weights over the points of a discretization, with
/// `eta_t = sqrt(log k / G_t)` and losses normalized by `loss_bound`.
#[derive(Clone, Debug)]
pub struct MwuState {
    log_weights: Vec<f64>,
    pub scale_total: f64,
    pub loss_bound: f64,
}

impl MwuState {
    pub fn new(k: usize, loss_bound: f64) -> Result<Self> {
        if k == 0 {
            return Err(Error::InvalidInput("mwu needs at least one point".into()));
        }
        if !(loss_bound > 0.0) {
            return Err(Error::InvalidInput("loss bound must be positive".into()));
        }
        Ok(Self {
            log_weights: vec![0.0; k],
            scale_total: 0.0,
            loss_bound,
        })
    }

    pub fn len(&self) -> usize {
        self.log_weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_weights.is_empty()
    }

    /// The current normalized distribution over points.
    pub fn distribution(&self) -> Vec<f64> {
        let max = self.log_weights.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut w: Vec<f64> = self.log_weights.iter().map(|lw| (lw - max).exp()).collect();
        let sum: f64 = w.iter().sum();
        w.iter_mut().for_each(|v| *v /= sum);
        w
    }

    /// Multiplicative update with the point losses scaled by `g`.
    pub fn step(&mut self, losses: &[f64], g: f64) -> Result<()> {
        if losses.len() != self.log_weights.len() {
            return Err(Error::InvalidInput("loss vector length mismatch".into()));
        }
        if !(0.0..=1.0).contains(&g) {
            return Err(Error::InvalidInput(format!("scale must lie in [0,1], got {g}")));
        }
        if g == 0.0 {
            return Ok(());
        }
        self.scale_total += g;
        let k = self.log_weights.len() as f64;
        let eta = (k.ln().max(1e-12) / self.scale_total.max(1.0)).sqrt();
        for (lw, &l) in self.log_weights.iter_mut().zip(losses) {
            *lw -= eta * g * l / self.loss_bound;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::losses::{make_calibration_loss, make_linear_loss, make_quadratic_loss};

    #[test]
    fn schedules_match_hand_values() {
        // gdk with alpha=2, L=1, eps=0.1 -> c = sqrt(2)*0.1, threshold 50
        let c = 2f64.sqrt() * 0.1;
        assert!((lr_schedule(ScheduleTag::Gdk, 2.0, c, 1.0).unwrap() - 1.0).abs() < 1e-12);
        assert!((lr_schedule(ScheduleTag::Gdk, 2.0, c, 25.0).unwrap() - 0.04).abs() < 1e-12);
        assert!(
            (lr_schedule(ScheduleTag::Gdk, 2.0, c, 100.0).unwrap() - c / 10.0).abs() < 1e-12
        );
        assert!((lr_schedule(ScheduleTag::Gds, 2.0, 0.0, 0.5).unwrap() - 0.5).abs() < 1e-12);
        assert!((lr_schedule(ScheduleTag::Gds, 2.0, 0.0, 4.0).unwrap() - 0.125).abs() < 1e-12);
        assert!(lr_schedule(ScheduleTag::Gds, 2.0, 0.0, -1.0).is_err());
    }

    #[test]
    fn schedules_are_continuous_at_breakpoints() {
        let (alpha, l, eps) = (2.0, 1.0, 0.1);
        let c = 2f64.sqrt() * eps / l;
        let th = (2.0 / (alpha * c)).powi(2);
        for (lo, hi) in [(1.0 - 1e-9, 1.0 + 1e-9), (th - 1e-6, th + 1e-6)] {
            let a = lr_schedule(ScheduleTag::Gdk, alpha, c, lo).unwrap();
            let b = lr_schedule(ScheduleTag::Gdk, alpha, c, hi).unwrap();
            assert!((a - b).abs() < 1e-6, "jump at breakpoint: {a} vs {b}");
        }
        let a = lr_schedule(ScheduleTag::Gds, alpha, 0.0, 1.0 - 1e-9).unwrap();
        let b = lr_schedule(ScheduleTag::Gds, alpha, 0.0, 1.0 + 1e-9).unwrap();
        assert!((a - b).abs() < 1e-6);
    }

    #[test]
    fn gds_hand_executed_step() {
        let body = ConvexBody::unit_interval();
        let loss = make_calibration_loss(1).unwrap(); // (x-1)^2, grad 2(x-1)
        let mut s = ScaledOgd::new_gds(body, vec![0.5], 2.0, 2.0).unwrap();
        let played = s.step(&loss, 1.0).unwrap();
        assert_eq!(played, vec![0.5]);
        // G=1, eta=1/2, grad=-1 -> x' = clamp(0.5 + 0.5) = 1.0
        assert!((s.current()[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_scale_is_a_noop() {
        let body = ConvexBody::unit_interval();
        let loss = make_calibration_loss(1).unwrap();
        let mut s = ScaledOgd::new_gds(body, vec![0.5], 2.0, 2.0).unwrap();
        s.step(&loss, 0.0).unwrap();
        assert_eq!(s.current(), &[0.5]);
        assert_eq!(s.scale_total, 0.0);
    }

    #[test]
    fn projection_binds_at_the_boundary() {
        let body = ConvexBody::unit_interval();
        // steep quadratic pushing left from x=0
        let loss = make_quadratic_loss(5.0, vec![-1.0], 0.0, 20.0).unwrap();
        let mut s = ScaledOgd::new_gds(body, vec![0.0], 20.0, 10.0).unwrap();
        s.step(&loss, 1.0).unwrap();
        assert_eq!(s.current(), &[0.0]);
    }

    #[test]
    fn class_mismatch_is_a_configuration_error() {
        let body = ConvexBody::unit_interval();
        let lin = make_linear_loss(vec![1.0]);
        let mut s = ScaledOgd::new_gds(body, vec![0.5], 1.0, 2.0).unwrap();
        assert!(matches!(s.step(&lin, 1.0), Err(Error::Configuration(_))));
    }

    #[test]
    fn gdk2_uses_segment_slopes() {
        let body = ConvexBody::unit_interval();
        let grid = crate::geometry::build_interval_grid(0.0, 1.0, 0.5).unwrap();
        let sq = make_quadratic_loss(1.0, vec![0.0], 0.0, 2.0).unwrap();
        let mut s = ScaledOgd::new_gdk(body, vec![0.1], 2.0, 2.0, 0.5).unwrap();
        s.gdk2_step(&sq, 1.0, &grid).unwrap();
        // eta = 2/alpha = 1 at G=1; linearized slope on [0,0.5] is 0.5,
        // so the unprojected point 0.1 - 0.5 clamps to 0
        assert_eq!(s.current(), &[0.0]);
    }

    #[test]
    fn mwu_basic_updates() {
        let mut m = MwuState::new(2, 1.0).unwrap();
        let d0 = m.distribution();
        assert!((d0[0] - 0.5).abs() < 1e-12);

        m.step(&[0.0, 1.0], 1.0).unwrap();
        let d = m.distribution();
        assert!(d[0] > d[1]);
        // eta = sqrt(ln 2 / 1); ratio e^eta
        let eta = (2f64.ln()).sqrt();
        assert!((d[0] / d[1] - eta.exp()).abs() < 1e-9);

        let before = m.distribution();
        m.step(&[0.7, 0.1], 0.0).unwrap();
        assert_eq!(m.distribution(), before);

        m.step(&[0.3, 0.3], 1.0).unwrap();
        let after = m.distribution();
        assert!((after[0] / after[1] - d[0] / d[1]).abs() < 1e-9);
    }

    #[test]
    fn convex_ogd_envelope_small() {
        // adversarial alternating linear losses on [0,1]
        let body = ConvexBody::unit_interval();
        let mut s = ScaledOgd::new_convex(body.clone(), vec![0.5], 1.0).unwrap();
        let mut plays = Vec::new();
        let mut coeffs = Vec::new();
        for t in 0..1000 {
            let c = if t % 2 == 0 { 1.0 } else { -1.0 };
            let loss = make_linear_loss(vec![c]);
            plays.push(s.step(&loss, 1.0).unwrap()[0]);
            coeffs.push(c);
        }
        let incurred: f64 = plays.iter().zip(&coeffs).map(|(x, c)| c * x).sum();
        let best = (coeffs.iter().sum::<f64>() * 0.0)
            .min(coeffs.iter().sum::<f64>() * 1.0);
        let regret = incurred - best;
        let g_total: f64 = 1000.0;
        assert!(regret <= 1.0 * (2.0 * g_total).sqrt() + 1e-6);
    }
}
