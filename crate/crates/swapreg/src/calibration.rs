//! Online binary calibration: the l2 and discretized calibration metrics and
//! the two swap-engine-backed forecasters (logarithmic-schedule subroutines
//! for the continuous grid, linearized-schedule subroutines for the lattice).

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::engine::{
    configure_from_table, ExecutionMode, MixedAction, RoundingTag, SubroutineTag, SwapEngine,
};
use crate::geometry::{build_interval_grid, ConvexBody};
use crate::losses::{make_calibration_loss, LossClass, LossSpec};
use crate::{Error, Result};

/// Per-round forecast distributions over a fixed grid of values in [0, 1],
/// together with the realized outcomes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CalibrationTranscript {
    /// Grid values the mixed-action indices refer to.
    pub grid: Vec<f64>,
    pub forecasts: Vec<MixedAction>,
    pub outcomes: Vec<u8>,
    /// Lattice spacing, when the transcript is ε-discretized.
    pub epsilon: Option<f64>,
}

impl CalibrationTranscript {
    pub fn new(grid: Vec<f64>) -> Self {
        Self { grid, forecasts: Vec::new(), outcomes: Vec::new(), epsilon: None }
    }

    pub fn len(&self) -> usize {
        self.outcomes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcomes.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        if self.forecasts.len() != self.outcomes.len() {
            return Err(Error::InvalidInput("forecast/outcome length mismatch".into()));
        }
        for x in &self.forecasts {
            x.validate(self.grid.len())?;
        }
        if self.outcomes.iter().any(|&b| b > 1) {
            return Err(Error::InvalidInput("outcomes must be bits".into()));
        }
        if let Some(eps) = self.epsilon {
            for &p in &self.grid {
                let m = p / eps;
                if (m - m.round()).abs() > 1e-12 / eps {
                    return Err(Error::InvalidInput(format!(
                        "grid value {p} is not a multiple of epsilon = {eps}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// CSV rows `t,support,probs,b` with `;`-separated support values.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["t", "support", "probs", "b"])?;
        for (t, (x, &b)) in self.forecasts.iter().zip(&self.outcomes).enumerate() {
            let support = x
                .support
                .iter()
                .map(|&i| format!("{}", self.grid[i]))
                .collect::<Vec<_>>()
                .join(";");
            let probs = x
                .probs
                .iter()
                .map(|p| format!("{p}"))
                .collect::<Vec<_>>()
                .join(";");
            w.write_record([&(t + 1).to_string(), &support, &probs, &b.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let mut f = std::fs::File::create(path)?;
        f.write_all(serde_json::to_string_pretty(self)?.as_bytes())?;
        Ok(())
    }
}

/// Aggregate per-grid-value forecast mass and outcome mass.
fn bucket_sums(tr: &CalibrationTranscript) -> (Vec<f64>, Vec<f64>) {
    let k = tr.grid.len();
    let mut mass = vec![0.0; k];
    let mut hits = vec![0.0; k];
    for (x, &b) in tr.forecasts.iter().zip(&tr.outcomes) {
        for (&i, &p) in x.support.iter().zip(&x.probs) {
            mass[i] += p;
            hits[i] += p * b as f64;
        }
    }
    (mass, hits)
}

/// `sum_p mass(p) (p - bbar(p))^2` where `bbar(p)` is the mass-weighted
/// outcome frequency on rounds forecasting `p`.
pub fn l2_calibration_error(tr: &CalibrationTranscript) -> Result<f64> {
    if tr.is_empty() {
        return Err(Error::InvalidInput("empty transcript".into()));
    }
    tr.validate()?;
    let (mass, hits) = bucket_sums(tr);
    let mut cal = 0.0;
    for (i, (&m, &h)) in mass.iter().zip(&hits).enumerate() {
        if m > 0.0 {
            let bbar = h / m;
            let gap = tr.grid[i] - bbar;
            cal += m * gap * gap;
        }
    }
    Ok(cal)
}

/// Round `v` to the nearest multiple of `eps`, ties going to the even
/// multiple.
pub fn round_to_lattice(v: f64, eps: f64) -> f64 {
    let q = v / eps;
    let lo = q.floor();
    let frac = q - lo;
    let m = if (frac - 0.5).abs() <= 1e-12 {
        if (lo as i64) % 2 == 0 {
            lo
        } else {
            lo + 1.0
        }
    } else {
        q.round()
    };
    m * eps
}

/// Calibration error with the comparator frequency `bbar(p)` rounded to the
/// ε-lattice before squaring; the forecast support must already lie on it.
pub fn discretized_calibration_error(tr: &CalibrationTranscript, eps: f64) -> Result<f64> {
    if tr.is_empty() {
        return Err(Error::InvalidInput("empty transcript".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::InvalidInput("epsilon must be positive".into()));
    }
    tr.validate()?;
    for &p in &tr.grid {
        let m = p / eps;
        if (m - m.round()).abs() * eps > 1e-12 {
            return Err(Error::InvalidInput(format!(
                "support value {p} is not on the {eps}-lattice"
            )));
        }
    }
    let (mass, hits) = bucket_sums(tr);
    let mut cal = 0.0;
    for (i, (&m, &h)) in mass.iter().zip(&hits).enumerate() {
        if m > 0.0 {
            let bbar = round_to_lattice(h / m, eps);
            let gap = tr.grid[i] - bbar;
            cal += m * gap * gap;
        }
    }
    Ok(cal)
}

/// A streaming forecaster: `next_forecast` emits the round's mixed action,
/// `observe` feeds back the realized bit.
pub struct Forecaster {
    pub engine: SwapEngine,
    pub transcript: CalibrationTranscript,
    loss_by_bit: [LossSpec; 2],
    awaiting_outcome: Option<MixedAction>,
}

impl Forecaster {
    fn from_engine(engine: SwapEngine, epsilon: Option<f64>) -> Result<Self> {
        let grid: Vec<f64> = engine.disc.points.iter().map(|p| p[0]).collect();
        let mut transcript = CalibrationTranscript::new(grid);
        transcript.epsilon = epsilon;
        Ok(Self {
            engine,
            transcript,
            loss_by_bit: [make_calibration_loss(0)?, make_calibration_loss(1)?],
            awaiting_outcome: None,
        })
    }

    pub fn grid(&self) -> &[f64] {
        &self.transcript.grid
    }

    pub fn next_forecast(&mut self) -> Result<MixedAction> {
        let x = self.engine.play()?;
        self.awaiting_outcome = Some(x.clone());
        Ok(x)
    }

    pub fn observe(&mut self, b: u8) -> Result<()> {
        if b > 1 {
            return Err(Error::InvalidInput(format!("outcome must be a bit, got {b}")));
        }
        let x = match self.awaiting_outcome.take() {
            Some(x) => x,
            None => self.next_forecast()?,
        };
        self.engine.update(&self.loss_by_bit[b as usize].clone())?;
        self.transcript.forecasts.push(x);
        self.transcript.outcomes.push(b);
        Ok(())
    }

    /// Mean of the current round's forecast distribution.
    pub fn mean_forecast(&mut self) -> Result<f64> {
        let x = self.next_forecast()?;
        Ok(x.mean(&self.engine.disc.points)[0])
    }
}

/// The T^{1/3}-rate forecaster: grid of spacing `T^{-1/3}`, logarithmic-rate
/// subroutines, interval rounding.
pub fn l2_forecaster(horizon: u64) -> Result<Forecaster> {
    l2_forecaster_with_mode(horizon, ExecutionMode::default())
}

pub fn l2_forecaster_with_mode(horizon: u64, mode: ExecutionMode) -> Result<Forecaster> {
    let cfg = configure_from_table(LossClass::ScSmooth, 1, horizon)?;
    let grid = build_interval_grid(0.0, 1.0, cfg.epsilon)?;
    let engine = SwapEngine::new(
        ConvexBody::unit_interval(),
        grid,
        RoundingTag::Interval,
        SubroutineTag::Gds,
        2.0,
        2.0,
        mode,
    )?;
    Forecaster::from_engine(engine, None)
}

/// The ε-discretized forecaster: subroutines run on per-round linearized
/// losses and play stays on the lattice. `1/eps` must be an integer.
pub fn discretized_forecaster(horizon: u64, eps: f64) -> Result<Forecaster> {
    discretized_forecaster_with_mode(horizon, eps, ExecutionMode::default())
}

pub fn discretized_forecaster_with_mode(
    horizon: u64,
    eps: f64,
    mode: ExecutionMode,
) -> Result<Forecaster> {
    if horizon < 1 {
        return Err(Error::InvalidInput("horizon must be >= 1".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput(format!("epsilon must lie in (0,1], got {eps}")));
    }
    let n = (1.0 / eps).round();
    if ((1.0 / eps) - n).abs() > 1e-9 {
        return Err(Error::InvalidInput(format!(
            "1/epsilon must be an integer, got 1/{eps} = {}",
            1.0 / eps
        )));
    }
    let grid = build_interval_grid(0.0, 1.0, eps)?;
    let engine = SwapEngine::new(
        ConvexBody::unit_interval(),
        grid,
        RoundingTag::Interval,
        SubroutineTag::Gdk,
        2.0,
        2.0,
        mode,
    )?;
    Forecaster::from_engine(engine, Some(eps))
}

/// Baseline: run the continuous-grid forecaster, then snap every forecast
/// value to the ε-lattice (mass on merged values is pooled).
pub fn round_transcript_to_lattice(
    tr: &CalibrationTranscript,
    eps: f64,
) -> Result<CalibrationTranscript> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput("epsilon must lie in (0,1]".into()));
    }
    tr.validate()?;
    let n = (1.0 / eps).round() as usize;
    let grid: Vec<f64> = (0..=n).map(|i| i as f64 * eps).collect();
    let target = |v: f64| -> usize {
        let snapped = round_to_lattice(v, eps).clamp(0.0, 1.0);
        (snapped / eps).round() as usize
    };
    let mut out = CalibrationTranscript::new(grid);
    out.epsilon = Some(eps);
    for (x, &b) in tr.forecasts.iter().zip(&tr.outcomes) {
        let mut dense = vec![0.0; n + 1];
        for (&i, &p) in x.support.iter().zip(&x.probs) {
            dense[target(tr.grid[i])] += p;
        }
        out.forecasts.push(MixedAction::from_dense(&dense));
        out.outcomes.push(b);
    }
    Ok(out)
}

/// Baseline: the no-rounding template with multiplicative-weights
/// subroutines over the 1/ε + 1 lattice points.
pub fn mwu_lattice_forecaster(eps: f64, mode: ExecutionMode) -> Result<Forecaster> {
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::InvalidInput("epsilon must lie in (0,1]".into()));
    }
    let n = (1.0 / eps).round();
    if ((1.0 / eps) - n).abs() > 1e-9 {
        return Err(Error::InvalidInput("1/epsilon must be an integer".into()));
    }
    let grid = build_interval_grid(0.0, 1.0, eps)?;
    let engine = SwapEngine::new(
        ConvexBody::unit_interval(),
        grid,
        RoundingTag::Projection,
        SubroutineTag::Mwu,
        2.0,
        0.0,
        mode,
    )?;
    Forecaster::from_engine(engine, Some(eps))
}
