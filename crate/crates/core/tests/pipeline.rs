use wavehits::circular::{angular_diff, to_uv, WindSample};
use wavehits::data::{clean_and_grid, synth_wind, FrameSet, MeteoRecord, Scaler, Split, Window, GRID_SECONDS};
use wavehits::nhits::NhitsModel;
use wavehits::pipeline::{
    decode, encode, evaluate, forecast_directions, load_artifact, persistence_forecast, save_artifact, score, train,
    EpochRecord, ExperimentConfig, Prepared, Provenance, TrainedArtifact, TruthPath, Variant, TOOL_VERSION,
};
use wavehits::Error;

fn small(variant: Variant) -> ExperimentConfig {
    let mut c = ExperimentConfig::default().with_variant(variant);
    c.synth.steps = 1500;
    c.data.input_length = 16;
    c.data.horizon = 4;
    c.wavelet.levels = 2;
    c.model.kernels = vec![2, 1];
    c.model.hidden_widths = vec![16];
    c.train.max_epochs = 4;
    c.train.batch_size = 64;
    c.validate().unwrap();
    c
}

fn prepared(config: &ExperimentConfig) -> Prepared {
    let frame = synth_wind(config.synth.seed, config.synth.steps, &config.synth.regime).unwrap();
    Prepared::new(config, &frame, None).unwrap()
}

fn fit(variant: Variant) -> (ExperimentConfig, Prepared, TrainedArtifact) {
    let c = small(variant);
    let p = prepared(&c);
    let a = train(&c, &p).unwrap();
    (c, p, a)
}

fn test_windows(p: &Prepared, n: usize) -> Vec<Window> {
    p.windows.split(Split::Test).take(n).copied().collect()
}

/// Constant-speed records with the given direction per 10-minute slot.
fn records(dirs: &[f64]) -> FrameSet {
    let recs: Vec<MeteoRecord> = dirs
        .iter()
        .enumerate()
        .map(|(i, d)| MeteoRecord {
            timestamp: 1_600_000_000 + i as i64 * GRID_SECONDS,
            pressure: Some(1000.0 + (i % 7) as f64),
            temperature: Some(10.0 + (i % 5) as f64),
            humidity: Some(60.0 + (i % 3) as f64),
            precipitation: Some(0.0),
            wind_speed_2min: Some(5.0),
            wind_dir_2min: Some(*d),
            wind_speed_10min: Some(5.0),
            wind_dir_10min: Some(*d),
        })
        .collect();
    clean_and_grid(&recs).unwrap()
}

#[test]
fn one_epoch_gives_one_history_record() {
    let mut c = small(Variant::NhitsUv);
    c.train.max_epochs = 1;
    let a = train(&c, &prepared(&c)).unwrap();
    assert_eq!(a.history.len(), 1);
    assert_eq!(a.best_epoch, 1);
}

#[test]
fn training_is_bit_reproducible() {
    for v in [Variant::Wavehits, Variant::NhitsDirect] {
        let c = small(v);
        let a = train(&c, &prepared(&c)).unwrap();
        let b = train(&c, &prepared(&c)).unwrap();
        assert_eq!(a, b);
        assert_eq!(encode(&a), encode(&b));
        let p = prepared(&c);
        let ra = evaluate(&a, &p, Split::Test).unwrap();
        let rb = evaluate(&b, &p, Split::Test).unwrap();
        assert_eq!(ra.to_csv(&[]), rb.to_csv(&[]));
    }
    let c = small(Variant::NhitsUv);
    let mut other = c.clone();
    other.train.seed += 1;
    let p = prepared(&c);
    assert_ne!(encode(&train(&c, &p).unwrap()), encode(&train(&other, &p).unwrap()));
}

#[test]
fn saved_epoch_has_minimum_validation_loss() {
    let (_, _, a) = fit(Variant::NhitsUv);
    let min = a.history.iter().map(|r| r.val_loss).fold(f64::INFINITY, f64::min);
    assert_eq!(a.best_val_loss(), min);
    assert_eq!(a.history[a.best_epoch - 1].epoch, a.best_epoch);
}

#[test]
fn validation_loss_improves_on_synthetic_data() {
    let mut c = small(Variant::Wavehits);
    c.train.max_epochs = 12;
    c.train.patience = 12;
    let a = train(&c, &prepared(&c)).unwrap();
    assert!(a.best_val_loss() < a.history[0].val_loss, "{:?}", a.history);
}

#[test]
fn zero_uv_model_with_identity_scaler_is_calm() {
    let c = small(Variant::NhitsUv);
    let frame = synth_wind(c.synth.seed, c.synth.steps, &c.synth.regime).unwrap();
    let p = Prepared::new(&c, &frame, Some(&Scaler::identity(8))).unwrap();
    let artifact = TrainedArtifact {
        config: c.clone(),
        model: Some(NhitsModel::zeros(p.model_shape(), c.block_configs().unwrap()).unwrap()),
        scaler: p.scaler.clone(),
        history: vec![EpochRecord {
            epoch: 1,
            train_loss: 0.0,
            val_loss: 0.0,
        }],
        best_epoch: 1,
        provenance: Provenance {
            tool_version: TOOL_VERSION.into(),
            config_digest: c.digest_hex(),
            seed: c.train.seed,
            data_fingerprint: p.fingerprint.clone(),
        },
    };
    for f in forecast_directions(&artifact, &p, &test_windows(&p, 20)).unwrap() {
        assert_eq!(f.calm, vec![true; 4]);
        assert!(f.speeds.iter().all(|s| *s == 0.0));
    }
}

#[test]
fn forecasts_are_wrapped_and_recompose_to_uv() {
    for v in [Variant::Wavehits, Variant::NhitsUv, Variant::NhitsDirect, Variant::Persistence] {
        let (_, p, a) = fit(v);
        for f in forecast_directions(&a, &p, &test_windows(&p, 100)).unwrap() {
            assert!(f.directions.iter().all(|d| (0.0..360.0).contains(d)), "{v}: {:?}", f.directions);
            for k in 0..f.directions.len() {
                if f.calm[k] {
                    continue;
                }
                let back = to_uv(&WindSample {
                    speed: f.speeds[k],
                    direction: f.directions[k],
                });
                assert!((back.u - f.uv[k].u).abs() < 1e-9 && (back.v - f.uv[k].v).abs() < 1e-9, "{v} step {k}");
            }
        }
    }
}

#[test]
fn forecast_rejects_mismatched_data() {
    let (_, _, a) = fit(Variant::NhitsUv);
    let other = prepared(&small(Variant::Wavehits));
    assert!(forecast_directions(&a, &other, &test_windows(&other, 1)).is_err());
    let mut shifted = small(Variant::NhitsUv);
    shifted.synth.seed += 1;
    let p = prepared(&shifted);
    assert!(matches!(forecast_directions(&a, &p, &test_windows(&p, 1)), Err(Error::Config(_))));
}

#[test]
fn persistence_repeats_last_direction() {
    let mut c = small(Variant::Persistence);
    c.data.horizon = 6;
    let p = Prepared::new(&c, &records(&[37.0; 300]), None).unwrap();
    let f = persistence_forecast(&p, &p.windows.windows[0]);
    assert_eq!(f.directions.len(), 6);
    for d in &f.directions {
        assert!(angular_diff(*d, 37.0) < 1e-9, "{d}");
    }
}

#[test]
fn persistence_error_is_flat_for_frozen_future() {
    let c = small(Variant::Persistence);
    let dirs: Vec<f64> = (0..300).map(|i| if i < 100 { 10.0 } else { 50.0 }).collect();
    let p = Prepared::new(&c, &records(&dirs), None).unwrap();
    let w = *p
        .windows
        .windows
        .iter()
        .find(|w| w.start + c.data.input_length == 100)
        .unwrap();
    let r = score("persistence", &[persistence_forecast(&p, &w)], &[TruthPath::of(&p, &w)], 15.0).unwrap();
    for s in &r.steps {
        assert!((s.mae_periodic - 40.0).abs() < 1e-9, "{}", s.mae_periodic);
    }
}

#[test]
fn persistence_report_is_fully_populated() {
    let (c, p, a) = fit(Variant::Persistence);
    assert!(a.model.is_none());
    assert_eq!(a.history.len(), 1);
    let r = evaluate(&a, &p, Split::Test).unwrap();
    assert_eq!(r.steps.len(), c.data.horizon);
    assert_eq!(r.horizon(), c.data.horizon);
    for s in &r.steps {
        assert!(s.values().iter().all(|v| v.is_finite()), "{s:?}");
        assert_eq!(s.samples, p.windows.count(Split::Test));
    }
}

#[test]
fn hit_rate_matches_manual_recount() {
    let (c, p, a) = fit(Variant::NhitsUv);
    let windows = test_windows(&p, 10);
    let forecasts = forecast_directions(&a, &p, &windows).unwrap();
    let truths: Vec<TruthPath> = windows.iter().map(|w| TruthPath::of(&p, w)).collect();
    let r = score("nhits_uv", &forecasts, &truths, 15.0).unwrap();
    for k in 0..c.data.horizon {
        let (mut hits, mut n) = (0usize, 0usize);
        for (f, t) in forecasts.iter().zip(&truths) {
            if t.uv[k].is_calm() {
                continue;
            }
            n += 1;
            let d = (f.directions[k] - t.directions[k]).abs();
            if d.min(360.0 - d) <= 15.0 {
                hits += 1;
            }
        }
        assert_eq!(r.steps[k].samples, n);
        assert_eq!(r.steps[k].hit_rate, hits as f64 / n as f64, "step {}", k + 1);
    }
}

#[test]
fn report_coherence() {
    for v in [Variant::Wavehits, Variant::NhitsDirect] {
        let (_, p, a) = fit(v);
        for split in Split::ALL {
            let r = evaluate(&a, &p, split).unwrap();
            for s in &r.steps {
                assert!(s.rmse_periodic >= s.mae_periodic);
                assert!(s.rmse_u >= s.mae_u && s.rmse_v >= s.mae_v);
                assert!((0.0..=1.0).contains(&s.hit_rate));
                assert!((-1.0..=1.0).contains(&s.vcc));
            }
        }
    }
}

#[test]
fn container_round_trip_is_bit_identical() {
    let dir = tempfile::tempdir().unwrap();
    for v in [Variant::Wavehits, Variant::NhitsDirect, Variant::Persistence] {
        let (_, p, a) = fit(v);
        let path = dir.path().join(format!("{v}.whts"));
        save_artifact(&a, &path).unwrap();
        let b = load_artifact(&path).unwrap();
        assert_eq!(a, b);
        assert_eq!(encode(&b), std::fs::read(&path).unwrap());
        let windows = test_windows(&p, 100);
        assert_eq!(windows.len(), 100);
        let fa = forecast_directions(&a, &p, &windows).unwrap();
        let fb = forecast_directions(&b, &p, &windows).unwrap();
        for (x, y) in fa.iter().zip(&fb) {
            let bits = |f: &wavehits::pipeline::DirectionForecast| {
                f.directions.iter().chain(&f.speeds).map(|z| z.to_bits()).collect::<Vec<_>>()
            };
            assert_eq!(bits(x), bits(y));
        }
    }
}

#[test]
fn container_keeps_eval_settings() {
    let (c, p, a) = fit(Variant::NhitsUv);
    assert_eq!(decode(&encode(&a)).unwrap().config.eval.hr_delta, 15.0);
    let mut c2 = c.clone();
    c2.eval.hr_delta = 12.5;
    let b = train(&c2, &p).unwrap();
    let back = decode(&encode(&b)).unwrap();
    assert_eq!(back.config.eval.hr_delta, 12.5);
    assert_eq!(evaluate(&back, &p, Split::Test).unwrap().hr_delta, 12.5);
}

#[test]
fn container_rejects_damage() {
    let (_, _, a) = fit(Variant::NhitsUv);
    let bytes = encode(&a);
    let mut bad_magic = bytes.clone();
    bad_magic[0] = b'X';
    assert!(matches!(decode(&bad_magic), Err(Error::Version(_))));
    let mut bad_version = bytes.clone();
    bad_version[4] = 9;
    assert!(matches!(decode(&bad_version), Err(Error::Version(_))));
    let mut flipped = bytes.clone();
    let mid = bytes.len() - 100;
    flipped[mid] ^= 0x01;
    assert!(matches!(decode(&flipped), Err(Error::Checksum)));
    let mut extended = bytes.clone();
    extended.push(0);
    assert!(matches!(decode(&extended), Err(Error::Checksum)));
    for cut in [0, 3, 20, 60, bytes.len() / 2, bytes.len() - 1] {
        let r = decode(&bytes[..cut]);
        assert!(matches!(r, Err(Error::Truncated(_)) | Err(Error::Checksum)), "cut {cut}: {r:?}");
    }
    assert!(matches!(decode(&bytes[..10]), Err(Error::Truncated(_))));
}
