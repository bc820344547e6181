use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use wavehits::data::{clean_and_grid, format_timestamp, parse_csv, synth_wind, FrameSet};
use wavehits::pipeline::{
    evaluate, forecast_directions, load_artifact, load_frame, provenance_line, save_artifact, side_by_side,
    side_by_side_csv, train_with, ExperimentConfig, ForecastReport, Prepared, TrainedArtifact, TruthPath,
    Variant,
};

use crate::args::{GlobalArgs, ModelArg, Verbosity};
use crate::selfcheck;

pub struct Ctx {
    pub config: ExperimentConfig,
    pub out: PathBuf,
    pub verbosity: Verbosity,
}

impl Ctx {
    pub fn new(config: ExperimentConfig, global: &GlobalArgs) -> Self {
        Self {
            config,
            out: global.out.clone(),
            verbosity: global.verbosity(),
        }
    }

    fn say(&self, msg: impl AsRef<str>) {
        if self.verbosity >= Verbosity::Normal {
            println!("{}", msg.as_ref());
        }
    }

    fn detail(&self, msg: impl AsRef<str>) {
        if self.verbosity >= Verbosity::Verbose {
            println!("{}", msg.as_ref());
        }
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf> {
        fs::create_dir_all(&self.out).with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        self.detail(format!("wrote {}", path.display()));
        Ok(path)
    }

    fn header(&self) -> String {
        provenance_line(&self.config)
    }
}

fn frame_summary(frame: &FrameSet) -> String {
    format!(
        "{} rows in {} segments, {} imputed cells, {} stitched-out slots",
        frame.len(),
        frame.segments.len(),
        frame.imputed_count(),
        frame.stitched_slots()
    )
}

pub fn ingest(ctx: &Ctx) -> Result<bool> {
    let data = &ctx.config.data;
    if data.input.is_empty() {
        bail!("data.input must name the station CSV to ingest");
    }
    let path = Path::new(&data.input);
    let (records, report) = parse_csv(path, &data.schema).with_context(|| format!("ingesting {}", path.display()))?;
    let frame = clean_and_grid(&records).with_context(|| format!("cleaning {}", path.display()))?;
    let mut csv = Vec::new();
    frame.write_csv(&mut csv, &data.schema, &[ctx.header()])?;
    ctx.write("ingested.csv", csv)?;
    let mut text = format!("# {}\nsource: {}\n{report}", ctx.header(), path.display());
    let _ = writeln!(text, "grid: {}", frame_summary(&frame));
    ctx.write("ingest_report.txt", &text)?;
    ctx.say(format!(
        "ingested {} records with {} warnings; {}",
        report.rows,
        report.warnings(),
        frame_summary(&frame)
    ));
    Ok(true)
}

pub fn synth(ctx: &Ctx) -> Result<bool> {
    let s = &ctx.config.synth;
    let frame = synth_wind(s.seed, s.steps, &s.regime)?;
    let mut csv = Vec::new();
    frame.write_csv(&mut csv, &ctx.config.data.schema, &[ctx.header(), format!("synthetic seed={} steps={}", s.seed, s.steps)])?;
    let path = ctx.write("synthetic.csv", csv)?;
    ctx.say(format!("wrote {} synthetic steps to {}", s.steps, path.display()));
    Ok(true)
}

fn history_csv(header: &str, artifact: &TrainedArtifact) -> String {
    let mut out = format!("# {header}\n# best_epoch={}\nepoch,train_loss,val_loss\n", artifact.best_epoch);
    for r in &artifact.history {
        let _ = writeln!(out, "{},{},{}", r.epoch, r.train_loss, r.val_loss);
    }
    out
}

fn train_variant(ctx: &Ctx, config: &ExperimentConfig, frame: &FrameSet) -> Result<(TrainedArtifact, Prepared)> {
    let data = Prepared::new(config, frame, None)?;
    ctx.detail(format!(
        "{}: {} input channels, {} train / {} val / {} test windows",
        config.model.variant,
        data.input_channels(),
        data.windows.count(wavehits::data::Split::Train),
        data.windows.count(wavehits::data::Split::Val),
        data.windows.count(wavehits::data::Split::Test),
    ));
    let artifact = train_with(config, &data, |r| {
        ctx.detail(format!(
            "  epoch {:>3}  train {:.6}  val {:.6}",
            r.epoch, r.train_loss, r.val_loss
        ))
    })
    .with_context(|| format!("training {}", config.model.variant))?;
    Ok((artifact, data))
}

pub fn train(ctx: &Ctx) -> Result<bool> {
    let frame = load_frame(&ctx.config)?;
    ctx.detail(format!("data: {}", frame_summary(&frame)));
    let (artifact, _) = train_variant(ctx, &ctx.config, &frame)?;
    let model_path = ctx.out.join("model.whts");
    fs::create_dir_all(&ctx.out)?;
    save_artifact(&artifact, &model_path)?;
    ctx.write("history.csv", history_csv(&ctx.header(), &artifact))?;
    ctx.say(format!(
        "trained {} for {} epochs (best epoch {}, val loss {:.6}); model written to {}",
        artifact.variant(),
        artifact.history.len(),
        artifact.best_epoch,
        artifact.best_val_loss(),
        model_path.display()
    ));
    Ok(true)
}

/// Load the artifact and the data it is evaluated on. Window and model
/// settings come from the artifact; the invocation config must agree.
fn artifact_and_data(ctx: &Ctx, arg: &ModelArg) -> Result<(TrainedArtifact, Prepared)> {
    let path = arg.model.clone().unwrap_or_else(|| ctx.out.join("model.whts"));
    let artifact = load_artifact(&path).with_context(|| format!("loading {}", path.display()))?;
    let (a, c) = (&artifact.config, &ctx.config);
    for (name, ok) in [
        ("model.variant", a.model.variant == c.model.variant),
        ("data.input_length", a.data.input_length == c.data.input_length),
        ("data.horizon", a.data.horizon == c.data.horizon),
    ] {
        if !ok {
            bail!("config/artifact mismatch: {name} differs from the value {} was trained with", path.display());
        }
    }
    if c.model.variant == Variant::Wavehits && a.wavelet != c.wavelet {
        bail!("config/artifact mismatch: wavelet section differs from the trained model");
    }
    let mut eff = a.clone();
    eff.data.source = c.data.source;
    eff.data.input.clone_from(&c.data.input);
    eff.data.schema = c.data.schema.clone();
    eff.synth = c.synth.clone();
    let frame = load_frame(&eff)?;
    let data = Prepared::new(&eff, &frame, Some(&artifact.scaler))?;
    if data.fingerprint != artifact.provenance.data_fingerprint {
        ctx.detail("note: evaluation data differs from the training data");
    }
    Ok((artifact, data))
}

fn report_header(ctx: &Ctx, artifact: &TrainedArtifact) -> Vec<String> {
    vec![
        ctx.header(),
        format!(
            "model variant={} trained_config={} split={}",
            artifact.variant(),
            artifact.provenance.config_digest,
            artifact.config.eval.split.name()
        ),
    ]
}

pub fn evaluate_cmd(ctx: &Ctx, arg: &ModelArg) -> Result<bool> {
    let (artifact, data) = artifact_and_data(ctx, arg)?;
    let report = evaluate(&artifact, &data, artifact.config.eval.split)?;
    let header = report_header(ctx, &artifact);
    ctx.write("report.csv", report.to_csv(&header))?;
    let table = report.to_table();
    ctx.write("report.txt", format!("# {}\n{table}", header.join("\n# ")))?;
    ctx.say(table);
    Ok(true)
}

pub fn forecast_cmd(ctx: &Ctx, arg: &ModelArg) -> Result<bool> {
    let (artifact, data) = artifact_and_data(ctx, arg)?;
    let windows: Vec<_> = data.windows.split(artifact.config.eval.split).copied().collect();
    let forecasts = forecast_directions(&artifact, &data, &windows)?;
    let mut out = String::new();
    for h in report_header(ctx, &artifact) {
        let _ = writeln!(out, "# {h}");
    }
    out.push_str("origin,step,time,direction,speed,calm,true_direction,true_speed\n");
    let ts = load_frame_timestamps(&artifact, ctx)?;
    let fmt = &ctx.config.data.schema.timestamp_format;
    for (w, f) in windows.iter().zip(&forecasts) {
        let truth = TruthPath::of(&data, w);
        let origin = format_timestamp(ts[w.start + data.input_length() - 1], fmt);
        for (k, row) in data.future_rows(w).enumerate() {
            let _ = writeln!(
                out,
                "{origin},{},{},{},{},{},{},{}",
                k + 1,
                format_timestamp(ts[row], fmt),
                f.directions[k],
                f.speeds[k],
                u8::from(f.calm[k]),
                truth.directions[k],
                truth.speeds[k]
            );
        }
    }
    ctx.write("forecast.csv", out)?;
    ctx.say(format!("wrote forecasts for {} windows", windows.len()));
    Ok(true)
}

fn load_frame_timestamps(artifact: &TrainedArtifact, ctx: &Ctx) -> Result<Vec<i64>> {
    let mut eff = artifact.config.clone();
    eff.data.source = ctx.config.data.source;
    eff.data.input.clone_from(&ctx.config.data.input);
    eff.data.schema = ctx.config.data.schema.clone();
    eff.synth = ctx.config.synth.clone();
    Ok(load_frame(&eff)?.timestamps)
}

/// Outcome of one ablation ordering check.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderingCheck {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

/// Ordering checks over the ablation reports that are present.
pub fn ordering_checks(reports: &[ForecastReport], wavehits_band: f64) -> Vec<OrderingCheck> {
    let find = |v: Variant| reports.iter().find(|r| r.label == v.name());
    let mean = |r: &ForecastReport| r.mean("mae_periodic").unwrap_or(f64::NAN);
    let mut out = Vec::new();
    if let (Some(uv), Some(direct)) = (find(Variant::NhitsUv), find(Variant::NhitsDirect)) {
        let (a, b) = (mean(uv), mean(direct));
        out.push(OrderingCheck {
            name: "nhits_uv < nhits_direct".into(),
            passed: a < b,
            detail: format!("mean MAE {a:.4} vs {b:.4}, margin {:.4}", b - a),
        });
    }
    if let (Some(wh), Some(uv)) = (find(Variant::Wavehits), find(Variant::NhitsUv)) {
        let (a, b) = (mean(wh), mean(uv));
        out.push(OrderingCheck {
            name: format!("wavehits <= nhits_uv within {:.0}%", wavehits_band * 100.0),
            passed: a <= b * (1.0 + wavehits_band),
            detail: format!("mean MAE {a:.4} vs {b:.4}, ratio {:.4}", a / b),
        });
    }
    if let Some(p) = find(Variant::Persistence) {
        let base = p.series("mae_periodic").unwrap_or_default();
        for r in reports.iter().filter(|r| r.label != p.label) {
            let s = r.series("mae_periodic").unwrap_or_default();
            let worst = s
                .iter()
                .zip(&base)
                .map(|(a, b)| a - b)
                .fold(f64::NEG_INFINITY, f64::max);
            out.push(OrderingCheck {
                name: format!("{} beats persistence at every step", r.label),
                passed: s.len() == base.len() && worst < 0.0,
                detail: format!("largest step difference {worst:+.4}"),
            });
        }
    }
    out
}

pub fn ablate(ctx: &Ctx) -> Result<bool> {
    let variants = ctx.config.ablate.variants.clone();
    if variants.is_empty() {
        bail!("ablate.variants is empty");
    }
    let frame = load_frame(&ctx.config)?;
    let header = vec![ctx.header(), format!("ablation variants={}", variants.iter().map(|v| v.name()).collect::<Vec<_>>().join(","))];
    let mut reports = Vec::new();
    for v in &variants {
        let config = ctx.config.with_variant(*v);
        let result = train_variant(ctx, &config, &frame)
            .and_then(|(artifact, data)| Ok(evaluate(&artifact, &data, config.eval.split)?));
        match result {
            Ok(report) => {
                ctx.write(&format!("report_{}.csv", v.name()), report.to_csv(&header))?;
                ctx.say(format!(
                    "{}: mean MAE {:.4}",
                    v.name(),
                    report.mean("mae_periodic").unwrap_or(f64::NAN)
                ));
                reports.push(report);
            }
            Err(e) => {
                if !reports.is_empty() {
                    ctx.write("ablation.csv", side_by_side_csv(&reports, &header))?;
                }
                return Err(e.context(format!("ablation aborted at {v}; finished reports kept")));
            }
        }
    }
    ctx.write("ablation.csv", side_by_side_csv(&reports, &header))?;
    let mut text = header.iter().map(|h| format!("# {h}\n")).collect::<String>();
    for metric in wavehits::pipeline::METRIC_NAMES {
        text.push('\n');
        text.push_str(&side_by_side(&reports, metric));
    }
    let checks = ordering_checks(&reports, ctx.config.ablate.wavehits_band);
    text.push_str("\nchecks\n");
    for c in &checks {
        let _ = writeln!(text, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    ctx.write("ablation.txt", &text)?;
    ctx.say(side_by_side(&reports, "mae_periodic"));
    for c in &checks {
        ctx.say(format!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail));
    }
    Ok(checks.iter().all(|c| c.passed))
}

pub fn selfcheck_cmd(ctx: &Ctx) -> Result<bool> {
    let results = selfcheck::run_all(&ctx.config.selfcheck);
    let passed = results.iter().filter(|r| r.passed).count();
    for r in &results {
        if ctx.verbosity >= Verbosity::Normal || !r.passed {
            println!("{}", r.line());
        }
    }
    ctx.say(format!("summary: {passed}/{} suites passed", results.len()));
    Ok(passed == results.len())
}
