//! Variants, training, evaluation and persistence.

mod config;
mod container;
mod inputs;
mod report;
mod train;

pub use config::{
    AblateConfig, DataConfig, DataSource, EvalConfig, ExperimentConfig, ModelConfig, SelfcheckConfig, SynthConfig,
    TrainConfig, Variant, WaveletConfig,
};
pub use container::{decode, encode, load_artifact, save_artifact, Entry, FORMAT_VERSION, MAGIC};
pub use inputs::{raw_channels, Prepared, Truth};
pub use report::{evaluate, score, side_by_side, side_by_side_csv, ForecastReport, StepMetrics, TruthPath, METRIC_NAMES};
pub use train::{
    forecast_direction, forecast_directions, mean_loss, persistence_forecast, predict_normalized, train, train_with,
    DirectionForecast, EpochRecord, Provenance, TrainedArtifact, TOOL_VERSION,
};

use crate::data::{clean_and_grid, parse_csv, synth_wind, FrameSet};
use crate::error::{Error, Result};

/// Load the frame named by the data section: the configured CSV, or the
/// synthetic regime.
pub fn load_frame(config: &ExperimentConfig) -> Result<FrameSet> {
    match config.data.source {
        DataSource::Synthetic => synth_wind(config.synth.seed, config.synth.steps, &config.synth.regime),
        DataSource::Csv => {
            if config.data.input.is_empty() {
                return Err(Error::Config("data.input is empty".into()));
            }
            let (records, _) = parse_csv(std::path::Path::new(&config.data.input), &config.data.schema)?;
            clean_and_grid(&records)
        }
    }
}

/// Header line for every emitted file: tool version, config digest, seed
/// and time. `SOURCE_DATE_EPOCH` pins the time for reproducible output.
pub fn provenance_line(config: &ExperimentConfig) -> String {
    let epoch = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.trim().parse::<i64>().ok())
        .unwrap_or_else(|| chrono::Utc::now().timestamp());
    let stamp = chrono::DateTime::from_timestamp(epoch, 0)
        .map(|t| t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true))
        .unwrap_or_else(|| epoch.to_string());
    format!(
        "wavehits {TOOL_VERSION} config={} seed={} timestamp={stamp}",
        config.digest_hex(),
        config.train.seed
    )
}
