use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wavehits::circular::{
    from_uv, hit_rate, mae_periodic, rmae_periodic, rmse_periodic, to_uv, WindSample, DEFAULT_HIT_DELTA,
};
use wavehits::neural::{flatten, grad_check, unflatten, Tensor2};
use wavehits::nhits::{BlockConfig, ModelShape, NhitsModel};
use wavehits::pipeline::SelfcheckConfig;
use wavehits::wavelet::{wavedec, waverec, BoundaryMode, WaveletSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub tolerance: f64,
    pub max_error: f64,
    pub passed: bool,
    pub detail: String,
}

impl SuiteResult {
    fn new(name: &'static str, tolerance: f64, max_error: f64, detail: String) -> Self {
        Self {
            name,
            tolerance,
            max_error,
            passed: max_error < tolerance,
            detail,
        }
    }

    pub fn line(&self) -> String {
        format!(
            "{:<10} {}  max error {:.3e}  tolerance {:.1e}  ({})",
            self.name,
            if self.passed { "PASS" } else { "FAIL" },
            self.max_error,
            self.tolerance,
            self.detail
        )
    }
}

pub fn wavelet_suite(cfg: &SelfcheckConfig) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut worst = 0.0f64;
    let mut cases = 0;
    for boundary in [BoundaryMode::Periodic, BoundaryMode::Symmetric] {
        let spec = WaveletSpec::db4(boundary);
        worst = worst.max(spec.qmf_residual());
        for _ in 0..25 {
            let n = 8 * rng.random_range(4..=64);
            let levels = rng.random_range(1..=3);
            let x: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
            let err = wavedec(&x, &spec, levels)
                .and_then(|c| waverec(&c, &spec))
                .map(|y| x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                .unwrap_or(f64::INFINITY);
            worst = worst.max(err);
            cases += 1;
        }
    }
    SuiteResult::new(
        "wavelet",
        cfg.wavelet_tolerance,
        worst,
        format!("{cases} db4 reconstructions, QMF relations"),
    )
}

pub fn roundtrip_suite(cfg: &SelfcheckConfig) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 1);
    let mut worst = 0.0f64;
    let n = 10_000;
    for _ in 0..n {
        let s = WindSample {
            speed: rng.random_range(0.01..40.0),
            direction: rng.random_range(0.0..360.0),
        };
        let back = from_uv(to_uv(&s)).sample;
        let dd = (back.direction - s.direction).abs();
        worst = worst.max((back.speed - s.speed).abs()).max(dd.min(360.0 - dd));
    }
    SuiteResult::new("roundtrip", cfg.roundtrip_tolerance, worst, format!("{n} speed/direction pairs"))
}

/// Periodic distance by brute force over the three nearest wraps.
fn brute_diff(a: f64, b: f64) -> f64 {
    [-360.0, 0.0, 360.0].iter().map(|k| (a - b + k).abs()).fold(f64::INFINITY, f64::min)
}

pub fn metric_suite(cfg: &SelfcheckConfig) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 2);
    let mut worst = 0.0f64;
    let series = 1_000;
    for _ in 0..series {
        let n = rng.random_range(1..50);
        let p: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..360.0)).collect();
        let t: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..360.0)).collect();
        let d: Vec<f64> = p.iter().zip(&t).map(|(a, b)| brute_diff(*a, *b)).collect();
        let nf = n as f64;
        let mae = d.iter().sum::<f64>() / nf;
        let rmse = (d.iter().map(|x| x * x).sum::<f64>() / nf).sqrt();
        let rmae = mae / (t.iter().sum::<f64>() / nf);
        let hits = d.iter().filter(|x| **x <= DEFAULT_HIT_DELTA).count() as f64 / nf;
        let got = [
            mae_periodic(&p, &t),
            rmse_periodic(&p, &t),
            rmae_periodic(&p, &t),
            hit_rate(&p, &t, DEFAULT_HIT_DELTA),
        ];
        for (g, want) in got.into_iter().zip([mae, rmse, rmae, hits]) {
            let err = g.map_or(f64::INFINITY, |g| (g - want).abs() / want.abs().max(1.0));
            worst = worst.max(err);
        }
    }
    SuiteResult::new(
        "metric",
        cfg.metric_tolerance,
        worst,
        format!("{series} random series against a brute-force wrap oracle"),
    )
}

const KINK_MARGIN: f64 = 1e-3;

pub fn gradient_suite(cfg: &SelfcheckConfig) -> SuiteResult {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed + 3);
    let (l, h) = (16, 4);
    let shape = ModelShape {
        input_channels: 6,
        raw_channels: 4,
        n_targets: 2,
        input_length: l,
        horizon: h,
    };
    let blocks: Vec<BlockConfig> = [2, 1]
        .iter()
        .map(|r| BlockConfig::with_default_knots(*r, vec![12, 12], l, h))
        .collect();
    let mut attempt = || -> wavehits::Result<(f64, usize)> {
        // redraw until no relu or pooling tie sits within reach of the finite-difference step
        let mut draw = || -> wavehits::Result<(NhitsModel, Tensor2, f64)> {
            let model = NhitsModel::new(shape, blocks.clone(), &mut rng)?;
            let x = Tensor2::from_vec(3, 6 * l, (0..3 * 6 * l).map(|_| rng.random_range(-1.0..1.0)).collect())?;
            let margin = model.kink_margin(&x)?;
            Ok((model, x, margin))
        };
        let mut best = draw()?;
        for _ in 0..50 {
            if best.2 > KINK_MARGIN {
                break;
            }
            let next = draw()?;
            if next.2 > best.2 {
                best = next;
            }
        }
        let (model, x, _) = best;
        let y: Vec<f64> = (0..3 * 2 * h).map(|_| rng.random_range(-1.0..1.0)).collect();
        let loss = |m: &NhitsModel| -> wavehits::Result<f64> {
            let (out, _) = m.forward_batch(&x)?;
            Ok(out.forecast.as_slice().iter().zip(&y).map(|(p, t)| (p - t).powi(2)).sum::<f64>() / y.len() as f64)
        };
        let (out, cache) = model.forward_batch(&x)?;
        let grad: Vec<f64> = out
            .forecast
            .as_slice()
            .iter()
            .zip(&y)
            .map(|(p, t)| 2.0 * (p - t) / y.len() as f64)
            .collect();
        let grads = model.backward(&cache, &Tensor2::from_vec(3, 2 * h, grad)?)?;
        let params = flatten(&model.param_slices());
        let mut probe = model.clone();
        let report = grad_check(
            |p| {
                unflatten(p, &mut probe.param_slices_mut()).expect("same layout");
                loss(&probe).unwrap_or(f64::NAN)
            },
            &params,
            &flatten(&grads.slices()),
            1e-5,
            cfg.gradient_tolerance,
        )?;
        Ok((report.max_rel_error, report.checked))
    };
    match attempt() {
        Ok((err, n)) => SuiteResult::new(
            "gradient",
            cfg.gradient_tolerance,
            err,
            format!("{n} parameters of a 2-block model vs central differences"),
        ),
        Err(e) => SuiteResult::new("gradient", cfg.gradient_tolerance, f64::INFINITY, format!("error: {e}")),
    }
}

pub fn run_all(cfg: &SelfcheckConfig) -> Vec<SuiteResult> {
    vec![
        wavelet_suite(cfg),
        roundtrip_suite(cfg),
        metric_suite(cfg),
        gradient_suite(cfg),
    ]
}
