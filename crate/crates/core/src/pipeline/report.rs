use std::fmt::Write as _;

use crate::circular::{
    direction_r2, hit_rate, mae, mae_periodic, r2_score, rmae_periodic, rmse, rmse_periodic, to_uv, vcc, UvPair,
    WindSample,
};
use crate::data::{Split, Window};
use crate::error::{Error, Result};

use super::inputs::Prepared;
use super::train::{forecast_directions, DirectionForecast, TrainedArtifact};

/// Observed wind over the horizon of one window.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthPath {
    pub directions: Vec<f64>,
    pub speeds: Vec<f64>,
    pub uv: Vec<UvPair>,
}

impl TruthPath {
    pub fn of(data: &Prepared, w: &Window) -> Self {
        let rows = data.future_rows(w);
        Self {
            directions: data.truth.direction[rows.clone()].to_vec(),
            speeds: data.truth.speed[rows.clone()].to_vec(),
            uv: rows.map(|r| data.truth.uv(r)).collect(),
        }
    }
}

/// Metrics of one forecast step. Undefined values are NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepMetrics {
    pub mae_periodic: f64,
    pub rmse_periodic: f64,
    pub rmae: f64,
    pub r2_direction: f64,
    pub r2_u: f64,
    pub r2_v: f64,
    pub mae_u: f64,
    pub rmse_u: f64,
    pub mae_v: f64,
    pub rmse_v: f64,
    pub vcc: f64,
    pub hit_rate: f64,
    /// Windows that entered the direction metrics.
    pub samples: usize,
    /// Windows whose true wind was calm at this step.
    pub calm_excluded: usize,
}

pub const METRIC_NAMES: [&str; 14] = [
    "mae_periodic",
    "rmse_periodic",
    "rmae",
    "r2_direction",
    "r2_u",
    "r2_v",
    "mae_u",
    "rmse_u",
    "mae_v",
    "rmse_v",
    "vcc",
    "hit_rate",
    "samples",
    "calm_excluded",
];

impl StepMetrics {
    pub fn values(&self) -> [f64; 14] {
        [
            self.mae_periodic,
            self.rmse_periodic,
            self.rmae,
            self.r2_direction,
            self.r2_u,
            self.r2_v,
            self.mae_u,
            self.rmse_u,
            self.mae_v,
            self.rmse_v,
            self.vcc,
            self.hit_rate,
            self.samples as f64,
            self.calm_excluded as f64,
        ]
    }

    pub fn get(&self, metric: &str) -> Option<f64> {
        METRIC_NAMES.iter().position(|m| *m == metric).map(|i| self.values()[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForecastReport {
    pub label: String,
    pub hr_delta: f64,
    /// One entry per forecast step.
    pub steps: Vec<StepMetrics>,
}

fn or_nan(r: Result<f64>) -> f64 {
    r.unwrap_or(f64::NAN)
}

/// Score forecasts against observed paths, step by step. Calm true samples
/// are left out of the direction metrics.
pub fn score(label: &str, forecasts: &[DirectionForecast], truths: &[TruthPath], hr_delta: f64) -> Result<ForecastReport> {
    if forecasts.is_empty() {
        return Err(Error::Empty("evaluation windows"));
    }
    if forecasts.len() != truths.len() {
        return Err(Error::LengthMismatch {
            what: "forecasts vs truths",
            left: forecasts.len(),
            right: truths.len(),
        });
    }
    let h = truths[0].directions.len();
    if forecasts.iter().any(|f| f.directions.len() != h) || truths.iter().any(|t| t.directions.len() != h) {
        return Err(Error::InvalidArgument("forecast paths differ in length".into()));
    }
    let mut steps = Vec::with_capacity(h);
    for k in 0..h {
        let mut pd = Vec::new();
        let mut td = Vec::new();
        let mut pv = Vec::with_capacity(forecasts.len());
        let mut tv = Vec::with_capacity(forecasts.len());
        for (f, t) in forecasts.iter().zip(truths) {
            let truth_uv = t.uv[k];
            let pred_uv = if f.direction_only {
                to_uv(&WindSample {
                    speed: t.speeds[k],
                    direction: f.directions[k],
                })
            } else {
                f.uv[k]
            };
            pv.push(pred_uv);
            tv.push(truth_uv);
            if !truth_uv.is_calm() {
                pd.push(f.directions[k]);
                td.push(t.directions[k]);
            }
        }
        let split = |xs: &[UvPair]| -> (Vec<f64>, Vec<f64>) { (xs.iter().map(|p| p.u).collect(), xs.iter().map(|p| p.v).collect()) };
        let (pu, pvv) = split(&pv);
        let (tu, tvv) = split(&tv);
        steps.push(StepMetrics {
            mae_periodic: or_nan(mae_periodic(&pd, &td)),
            rmse_periodic: or_nan(rmse_periodic(&pd, &td)),
            rmae: or_nan(rmae_periodic(&pd, &td)),
            r2_direction: or_nan(direction_r2(&pd, &td)),
            r2_u: or_nan(r2_score(&pu, &tu)),
            r2_v: or_nan(r2_score(&pvv, &tvv)),
            mae_u: or_nan(mae(&pu, &tu)),
            rmse_u: or_nan(rmse(&pu, &tu)),
            mae_v: or_nan(mae(&pvv, &tvv)),
            rmse_v: or_nan(rmse(&pvv, &tvv)),
            vcc: or_nan(vcc(&pv, &tv)),
            hit_rate: or_nan(hit_rate(&pd, &td, hr_delta)),
            samples: pd.len(),
            calm_excluded: forecasts.len() - pd.len(),
        });
    }
    Ok(ForecastReport {
        label: label.to_string(),
        hr_delta,
        steps,
    })
}

/// Evaluate an artifact on every window of `split`.
pub fn evaluate(artifact: &TrainedArtifact, data: &Prepared, split: Split) -> Result<ForecastReport> {
    let windows: Vec<Window> = data.windows.split(split).copied().collect();
    if windows.is_empty() {
        return Err(Error::Empty("evaluation split"));
    }
    let forecasts = forecast_directions(artifact, data, &windows)?;
    let truths: Vec<TruthPath> = windows.iter().map(|w| TruthPath::of(data, w)).collect();
    score(artifact.variant().name(), &forecasts, &truths, artifact.config.eval.hr_delta)
}

fn fmt_value(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

impl ForecastReport {
    pub fn horizon(&self) -> usize {
        self.steps.len()
    }

    pub fn series(&self, metric: &str) -> Option<Vec<f64>> {
        self.steps.iter().map(|s| s.get(metric)).collect()
    }

    pub fn mean(&self, metric: &str) -> Option<f64> {
        self.series(metric).map(|s| s.iter().sum::<f64>() / s.len() as f64)
    }

    /// One row per metric, one column per step, after `# ` comment lines.
    pub fn to_csv(&self, comments: &[String]) -> String {
        let mut out = String::new();
        for c in comments {
            let _ = writeln!(out, "# {c}");
        }
        out.push_str("metric");
        for k in 1..=self.horizon() {
            let _ = write!(out, ",step{k}");
        }
        out.push('\n');
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            out.push_str(name);
            for s in &self.steps {
                let _ = write!(out, ",{}", fmt_value(s.values()[i]));
            }
            out.push('\n');
        }
        out
    }

    /// Aligned plain-text table.
    pub fn to_table(&self) -> String {
        let mut out = format!("{} (hit-rate threshold {}°)\n", self.label, self.hr_delta);
        let _ = write!(out, "{:<14}", "metric");
        for k in 1..=self.horizon() {
            let _ = write!(out, "{:>12}", format!("step {k}"));
        }
        out.push('\n');
        for (i, name) in METRIC_NAMES.iter().enumerate() {
            let _ = write!(out, "{name:<14}");
            for s in &self.steps {
                let v = s.values()[i];
                let cell = if i >= 12 { format!("{v:.0}") } else { format!("{v:.4}") };
                let _ = write!(out, "{cell:>12}");
            }
            out.push('\n');
        }
        out
    }
}

/// One table per metric with a column per report.
pub fn side_by_side(reports: &[ForecastReport], metric: &str) -> String {
    let mut out = format!("{metric}\n{:<8}", "step");
    for r in reports {
        let _ = write!(out, "{:>14}", r.label);
    }
    out.push('\n');
    let h = reports.iter().map(ForecastReport::horizon).max().unwrap_or(0);
    for k in 0..h {
        let _ = write!(out, "{:<8}", k + 1);
        for r in reports {
            let v = r.steps.get(k).and_then(|s| s.get(metric)).unwrap_or(f64::NAN);
            let _ = write!(out, "{:>14}", format!("{v:.4}"));
        }
        out.push('\n');
    }
    let _ = write!(out, "{:<8}", "mean");
    for r in reports {
        let _ = write!(out, "{:>14}", format!("{:.4}", r.mean(metric).unwrap_or(f64::NAN)));
    }
    out.push('\n');
    out
}

/// Side-by-side metric tables as CSV: `variant,metric,step1..stepH`.
pub fn side_by_side_csv(reports: &[ForecastReport], comments: &[String]) -> String {
    let mut out = String::new();
    for c in comments {
        let _ = writeln!(out, "# {c}");
    }
    let h = reports.iter().map(ForecastReport::horizon).max().unwrap_or(0);
    out.push_str("variant,metric");
    for k in 1..=h {
        let _ = write!(out, ",step{k}");
    }
    out.push('\n');
    for name in METRIC_NAMES {
        for r in reports {
            let _ = write!(out, "{},{name}", r.label);
            for s in &r.steps {
                let _ = write!(out, ",{}", fmt_value(s.get(name).unwrap_or(f64::NAN)));
            }
            out.push('\n');
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::circular::from_uv;

    fn path(dirs: &[f64], speed: f64) -> TruthPath {
        TruthPath {
            directions: dirs.to_vec(),
            speeds: vec![speed; dirs.len()],
            uv: dirs
                .iter()
                .map(|d| to_uv(&WindSample { speed, direction: *d }))
                .collect(),
        }
    }

    fn echo(t: &TruthPath) -> DirectionForecast {
        DirectionForecast {
            directions: t.directions.clone(),
            speeds: t.speeds.clone(),
            calm: vec![false; t.directions.len()],
            uv: t.uv.clone(),
            direction_only: false,
        }
    }

    #[test]
    fn truth_as_prediction_scores_perfectly() {
        let truths: Vec<TruthPath> = (0..20)
            .map(|i| path(&[i as f64 * 17.0 % 360.0, (i as f64 * 31.0 + 5.0) % 360.0, 359.0], 1.0 + i as f64 * 0.1))
            .collect();
        let preds: Vec<_> = truths.iter().map(echo).collect();
        let r = score("echo", &preds, &truths, 15.0).unwrap();
        assert_eq!(r.horizon(), 3);
        for s in &r.steps[..2] {
            assert_eq!(s.mae_periodic, 0.0);
            assert_eq!(s.hit_rate, 1.0);
            assert!((s.vcc - 1.0).abs() < 1e-12);
            assert!((s.r2_direction - 1.0).abs() < 1e-12);
            assert_eq!(s.r2_u, 1.0);
            assert_eq!(s.samples, 20);
        }
    }

    #[test]
    fn calm_truth_is_excluded_and_counted() {
        let mut truths = vec![path(&[10.0, 20.0], 2.0), path(&[30.0, 40.0], 2.0)];
        truths[1].uv[0] = UvPair::new(0.0, 0.0);
        truths[1].speeds[0] = 0.0;
        let preds: Vec<_> = truths.iter().map(echo).collect();
        let r = score("x", &preds, &truths, 15.0).unwrap();
        assert_eq!((r.steps[0].samples, r.steps[0].calm_excluded), (1, 1));
        assert_eq!((r.steps[1].samples, r.steps[1].calm_excluded), (2, 0));
    }

    #[test]
    fn hit_rate_recount_and_coherence() {
        let truths: Vec<TruthPath> = (0..10).map(|i| path(&[i as f64 * 36.0], 3.0)).collect();
        let offsets = [0.0, 14.9, 12.0, 15.1, 40.0, -10.0, -20.0, 180.0, 5.0, 359.0];
        let preds: Vec<DirectionForecast> = truths
            .iter()
            .zip(offsets)
            .map(|(t, o)| {
                let d = (t.directions[0] + o).rem_euclid(360.0);
                let uv = to_uv(&WindSample { speed: 3.0, direction: d });
                DirectionForecast {
                    directions: vec![from_uv(uv).sample.direction],
                    speeds: vec![3.0],
                    calm: vec![false],
                    uv: vec![uv],
                    direction_only: false,
                }
            })
            .collect();
        let r = score("x", &preds, &truths, 15.0).unwrap();
        // hand count: 0, 14.9, 12, -10, 5 and 359 (1° off) are hits
        assert!((r.steps[0].hit_rate - 0.6).abs() < 1e-12);
        assert!(r.steps[0].rmse_periodic >= r.steps[0].mae_periodic);
        let csv = r.to_csv(&["hdr".into()]);
        let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
        assert_eq!(rows.len(), METRIC_NAMES.len() + 1);
        assert!(rows[1..].iter().all(|l| l.split(',').count() == 2));
        assert!(r.to_table().contains("hit_rate"));
    }

    #[test]
    fn direction_only_uses_true_speed() {
        let truths = vec![path(&[90.0], 5.0), path(&[180.0], 2.0)];
        let preds: Vec<_> = truths
            .iter()
            .map(|t| DirectionForecast {
                directions: t.directions.clone(),
                speeds: vec![1.0],
                calm: vec![false],
                uv: vec![UvPair::new(0.0, 0.0)],
                direction_only: true,
            })
            .collect();
        let r = score("d", &preds, &truths, 15.0).unwrap();
        assert!((r.steps[0].vcc - 1.0).abs() < 1e-12);
        assert!(r.steps[0].mae_u < 1e-12);
    }

    #[test]
    fn empty_inputs_fail() {
        assert!(score("x", &[], &[], 15.0).is_err());
    }
}
