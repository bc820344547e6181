//! Wind-direction mathematics on the circle.
//!
//! Directions are meteorological bearings in degrees (the compass direction the
//! wind blows *from*, 0° = north, clockwise). Radians only appear inside the
//! trigonometric calls. The U/V decomposition turns a direction into two
//! linear regression targets; the periodic metrics compare directions with the
//! shorter of the two arcs between them.

use std::ops::Deref;

use crate::error::{Error, Result};

/// Default hit-rate margin in degrees.
pub const DEFAULT_HIT_DELTA: f64 = 15.0;

/// Reduce any finite angle to `[0, 360)`.
pub fn wrap_degrees(deg: f64) -> f64 {
    let r = deg.rem_euclid(360.0);
    // rem_euclid rounds tiny negative inputs up to exactly 360.0
    if r >= 360.0 {
        0.0
    } else {
        r
    }
}

/// A wind observation: speed in m/s and a FROM-direction in degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindSample {
    pub speed: f64,
    pub direction: f64,
}

impl WindSample {
    pub fn new(speed: f64, direction: f64) -> Result<Self> {
        if !speed.is_finite() || speed < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "wind speed must be finite and non-negative, got {speed}"
            )));
        }
        if !is_valid_direction(direction) {
            return Err(Error::InvalidArgument(format!(
                "wind direction must lie in [0, 360), got {direction}"
            )));
        }
        Ok(Self { speed, direction })
    }

    pub fn to_uv(&self) -> UvPair {
        to_uv(self)
    }
}

/// East-west (`u`) and north-south (`v`) wind components in m/s.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct UvPair {
    pub u: f64,
    pub v: f64,
}

impl UvPair {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v }
    }

    pub fn speed(&self) -> f64 {
        self.u.hypot(self.v)
    }

    pub fn is_calm(&self) -> bool {
        self.u == 0.0 && self.v == 0.0
    }
}

/// Result of recomposing a U/V pair: the wind sample plus a calm flag.
///
/// For calm wind (`u = v = 0`) the direction is undefined; it is reported as 0
/// and `calm` is set so that callers can exclude it from direction metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recomposed {
    pub sample: WindSample,
    pub calm: bool,
}

pub fn is_valid_direction(deg: f64) -> bool {
    deg.is_finite() && (0.0..360.0).contains(&deg)
}

/// Decompose a wind sample into U/V components.
pub fn to_uv(sample: &WindSample) -> UvPair {
    let (s, c) = sample.direction.to_radians().sin_cos();
    UvPair {
        u: -sample.speed * s,
        v: -sample.speed * c,
    }
}

/// Recompose speed and FROM-direction from U/V components.
///
/// The components point where the wind blows *to*, so the bearing of the
/// negated vector is the meteorological direction.
pub fn from_uv(uv: UvPair) -> Recomposed {
    if uv.is_calm() {
        return Recomposed {
            sample: WindSample {
                speed: 0.0,
                direction: 0.0,
            },
            calm: true,
        };
    }
    let direction = wrap_degrees((-uv.u).atan2(-uv.v).to_degrees());
    Recomposed {
        sample: WindSample {
            speed: uv.speed(),
            direction,
        },
        calm: false,
    }
}

/// Shorter arc between two bearings, in `[0, 180]`.
pub fn angular_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).abs() % 360.0;
    d.min(360.0 - d)
}

/// An ordered series of bearings, each in `[0, 360)`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct DirectionSeries(Vec<f64>);

impl DirectionSeries {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(bad) = values.iter().find(|d| !is_valid_direction(**d)) {
            return Err(Error::InvalidArgument(format!(
                "direction {bad} outside [0, 360)"
            )));
        }
        Ok(Self(values))
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for DirectionSeries {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

fn check_pair_lengths(pred: usize, truth: usize, what: &'static str) -> Result<()> {
    if pred == 0 || truth == 0 {
        return Err(Error::Empty(what));
    }
    if pred != truth {
        return Err(Error::LengthMismatch {
            what,
            left: pred,
            right: truth,
        });
    }
    Ok(())
}

fn check_directions(pred: &[f64], truth: &[f64], what: &'static str) -> Result<()> {
    check_pair_lengths(pred.len(), truth.len(), what)?;
    if let Some(bad) = pred
        .iter()
        .chain(truth.iter())
        .find(|d| !is_valid_direction(**d))
    {
        return Err(Error::InvalidArgument(format!(
            "{what}: direction {bad} outside [0, 360)"
        )));
    }
    Ok(())
}

fn diffs<'a>(pred: &'a [f64], truth: &'a [f64]) -> impl Iterator<Item = f64> + 'a {
    pred.iter().zip(truth).map(|(p, t)| angular_diff(*p, *t))
}

/// Mean periodic absolute error in degrees.
pub fn mae_periodic(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_directions(pred, truth, "mae_periodic")?;
    Ok(diffs(pred, truth).sum::<f64>() / pred.len() as f64)
}

/// Root-mean-square periodic error in degrees.
pub fn rmse_periodic(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_directions(pred, truth, "rmse_periodic")?;
    let ms = diffs(pred, truth).map(|d| d * d).sum::<f64>() / pred.len() as f64;
    Ok(ms.sqrt())
}

/// Periodic MAE divided by the arithmetic mean of the true bearings.
pub fn rmae_periodic(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let mae = mae_periodic(pred, truth)?;
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    if mean <= 0.0 {
        return Err(Error::Undefined("rmae_periodic: mean of true directions is zero"));
    }
    Ok(mae / mean)
}

/// Fraction of predictions within `delta` degrees of the truth.
pub fn hit_rate(pred: &[f64], truth: &[f64], delta: f64) -> Result<f64> {
    check_directions(pred, truth, "hit_rate")?;
    if !(delta >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "hit-rate delta must be non-negative, got {delta}"
        )));
    }
    let hits = diffs(pred, truth).filter(|d| *d <= delta).count();
    Ok(hits as f64 / pred.len() as f64)
}

/// Vector correlation coefficient between predicted and true wind vectors.
pub fn vcc(pred: &[UvPair], truth: &[UvPair]) -> Result<f64> {
    check_pair_lengths(pred.len(), truth.len(), "vcc")?;
    let mut dot = 0.0;
    let mut np = 0.0;
    let mut nt = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        dot += p.u * t.u + p.v * t.v;
        np += p.u * p.u + p.v * p.v;
        nt += t.u * t.u + t.v * t.v;
    }
    if np == 0.0 || nt == 0.0 {
        return Err(Error::Undefined("vcc: all-zero vector set"));
    }
    Ok((dot / (np.sqrt() * nt.sqrt())).clamp(-1.0, 1.0))
}

/// Coefficient of determination of a scalar series.
pub fn r2_score(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair_lengths(pred.len(), truth.len(), "r2")?;
    if truth.len() < 2 {
        return Err(Error::InvalidArgument("r2 needs at least two samples".into()));
    }
    let mean = truth.iter().sum::<f64>() / truth.len() as f64;
    let ss_tot: f64 = truth.iter().map(|t| (t - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("r2: zero variance in true values"));
    }
    let ss_res: f64 = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Per-component R² of U and V.
pub fn r2_components(pred: &[UvPair], truth: &[UvPair]) -> Result<(f64, f64)> {
    check_pair_lengths(pred.len(), truth.len(), "r2_components")?;
    let pu: Vec<f64> = pred.iter().map(|p| p.u).collect();
    let pv: Vec<f64> = pred.iter().map(|p| p.v).collect();
    let tu: Vec<f64> = truth.iter().map(|t| t.u).collect();
    let tv: Vec<f64> = truth.iter().map(|t| t.v).collect();
    Ok((r2_score(&pu, &tu)?, r2_score(&pv, &tv)?))
}

/// Mean bearing of a set of directions (unit-vector average).
pub fn circular_mean(directions: &[f64]) -> Result<f64> {
    if directions.is_empty() {
        return Err(Error::Empty("circular_mean"));
    }
    let (s, c) = directions.iter().fold((0.0, 0.0), |(s, c), d| {
        let (ds, dc) = d.to_radians().sin_cos();
        (s + ds, c + dc)
    });
    if s.hypot(c) < 1e-12 * directions.len() as f64 {
        return Err(Error::Undefined("circular_mean: resultant vector is zero"));
    }
    Ok(wrap_degrees(s.atan2(c).to_degrees()))
}

/// Direction-level R² built from periodic distances.
///
/// `1 − Σ d(pred, true)² / Σ d(true, circular_mean(true))²`. This is a
/// reconstruction; no closed form for direction R² is published alongside the
/// reported tables.
pub fn direction_r2(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_directions(pred, truth, "direction_r2")?;
    let centre = circular_mean(truth)?;
    let ss_tot: f64 = truth.iter().map(|t| angular_diff(*t, centre).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(Error::Undefined("direction_r2: zero circular spread"));
    }
    let ss_res: f64 = diffs(pred, truth).map(|d| d * d).sum();
    Ok(1.0 - ss_res / ss_tot)
}

/// Linear mean absolute error.
pub fn mae(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair_lengths(pred.len(), truth.len(), "mae")?;
    Ok(pred.iter().zip(truth).map(|(p, t)| (p - t).abs()).sum::<f64>() / pred.len() as f64)
}

/// Linear root-mean-square error.
pub fn rmse(pred: &[f64], truth: &[f64]) -> Result<f64> {
    check_pair_lengths(pred.len(), truth.len(), "rmse")?;
    let ms = pred.iter().zip(truth).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / pred.len() as f64;
    Ok(ms.sqrt())
}
