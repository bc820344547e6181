use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{CsvSchema, RegimeSpec, Split, SplitFractions};
use crate::error::{Error, Result};
use crate::neural::AdamConfig;
use crate::nhits::BlockConfig;
use crate::wavelet::{BoundaryMode, WaveletSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Raw channels plus wavelet features of the U/V targets.
    Wavehits,
    /// Raw channels, U/V targets.
    NhitsUv,
    /// Direction in degrees as the target, sin/cos of it as extra inputs.
    NhitsDirect,
    /// Last observed wind repeated over the horizon.
    Persistence,
}

impl Variant {
    pub const ALL: [Variant; 4] = [
        Variant::Wavehits,
        Variant::NhitsUv,
        Variant::NhitsDirect,
        Variant::Persistence,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Wavehits => "wavehits",
            Variant::NhitsUv => "nhits_uv",
            Variant::NhitsDirect => "nhits_direct",
            Variant::Persistence => "persistence",
        }
    }

    pub fn is_trained(self) -> bool {
        self != Variant::Persistence
    }
}

impl std::fmt::Display for Variant {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown variant `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DataSource {
    Csv,
    Synthetic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub source: DataSource,
    /// Station CSV read by `ingest`, or the ingested file read by `train`.
    pub input: String,
    pub schema: CsvSchema,
    pub input_length: usize,
    pub horizon: usize,
    pub splits: SplitFractions,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            input: String::new(),
            schema: CsvSchema::default(),
            input_length: 64,
            horizon: 6,
            splits: SplitFractions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub steps: usize,
    pub regime: RegimeSpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            steps: 20_000,
            regime: RegimeSpec::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WaveletConfig {
    pub name: String,
    pub levels: usize,
    pub boundary: BoundaryMode,
    /// Finest detail bands left out of the feature channels.
    pub denoise_levels: usize,
}

impl Default for WaveletConfig {
    fn default() -> Self {
        Self {
            name: "db4".into(),
            levels: 3,
            boundary: BoundaryMode::Symmetric,
            denoise_levels: 0,
        }
    }
}

impl WaveletConfig {
    pub fn spec(&self) -> Result<WaveletSpec> {
        WaveletSpec::from_name(&self.name, self.boundary)
    }

    /// Feature rows kept per target: the approximation plus the coarsest
    /// `levels - denoise_levels` detail bands.
    pub fn rows_per_target(&self) -> usize {
        self.levels + 1 - self.denoise_levels
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub variant: Variant,
    /// Pooling kernel per block, coarsest first.
    pub kernels: Vec<usize>,
    pub hidden_widths: Vec<usize>,
    /// Per-block knot counts; empty lists derive them from the kernels.
    pub forecast_knots: Vec<usize>,
    pub backcast_knots: Vec<usize>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            variant: Variant::Wavehits,
            kernels: vec![4, 2, 1],
            hidden_widths: vec![64, 64],
            forecast_knots: Vec::new(),
            backcast_knots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub optimizer: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            batch_size: 128,
            max_epochs: 200,
            patience: 10,
            optimizer: AdamConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Hit-rate threshold in degrees.
    pub hr_delta: f64,
    pub split: Split,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            hr_delta: crate::circular::DEFAULT_HIT_DELTA,
            split: Split::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SelfcheckConfig {
    pub seed: u64,
    pub wavelet_tolerance: f64,
    pub roundtrip_tolerance: f64,
    pub metric_tolerance: f64,
    pub gradient_tolerance: f64,
}

impl Default for SelfcheckConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            wavelet_tolerance: 1e-10,
            roundtrip_tolerance: 1e-9,
            metric_tolerance: 1e-12,
            gradient_tolerance: 1e-4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblateConfig {
    pub variants: Vec<Variant>,
    /// Allowed relative excess of wavehits over nhits_uv mean MAE.
    pub wavehits_band: f64,
}

impl Default for AblateConfig {
    fn default() -> Self {
        Self {
            variants: Variant::ALL.to_vec(),
            wavehits_band: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub synth: SynthConfig,
    pub wavelet: WaveletConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub selfcheck: SelfcheckConfig,
    pub ablate: AblateConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable as TOML")
    }

    /// SHA-256 of the canonical TOML form.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_toml().as_bytes()).into()
    }

    pub fn digest_hex(&self) -> String {
        self.digest().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn with_variant(&self, variant: Variant) -> Self {
        let mut c = self.clone();
        c.model.variant = variant;
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let d = &self.data;
        if d.horizon < 1 || d.input_length < 2 {
            return bad(format!(
                "data.horizon must be ≥ 1 and data.input_length ≥ 2 (got {} and {})",
                d.horizon, d.input_length
            ));
        }
        d.splits.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.train.patience < 1 || self.train.max_epochs < 1 || self.train.batch_size < 1 {
            return bad("train.patience, train.max_epochs and train.batch_size must be ≥ 1".into());
        }
        let o = &self.train.optimizer;
        if !(o.learning_rate > 0.0 && (0.0..1.0).contains(&o.beta1) && (0.0..1.0).contains(&o.beta2) && o.epsilon > 0.0) {
            return bad(format!("invalid optimizer settings {o:?}"));
        }
        if !(self.eval.hr_delta >= 0.0 && self.eval.hr_delta.is_finite()) {
            return bad(format!("eval.hr_delta must be a non-negative number, got {}", self.eval.hr_delta));
        }
        if self.model.variant == Variant::Wavehits {
            let spec = self.wavelet.spec()?;
            let max = spec.max_level(d.input_length);
            if self.wavelet.levels < 1 || self.wavelet.levels > max {
                return bad(format!(
                    "wavelet.levels = {} outside [1, {max}] for input length {}",
                    self.wavelet.levels, d.input_length
                ));
            }
            if self.wavelet.denoise_levels > self.wavelet.levels {
                return bad("wavelet.denoise_levels exceeds wavelet.levels".into());
            }
        }
        if self.model.variant.is_trained() {
            self.block_configs()?;
        }
        for (name, t) in [
            ("wavelet", self.selfcheck.wavelet_tolerance),
            ("roundtrip", self.selfcheck.roundtrip_tolerance),
            ("metric", self.selfcheck.metric_tolerance),
            ("gradient", self.selfcheck.gradient_tolerance),
        ] {
            if !(t >= 0.0) {
                return bad(format!("selfcheck.{name}_tolerance must be ≥ 0"));
            }
        }
        Ok(())
    }

    pub fn block_configs(&self) -> Result<Vec<BlockConfig>> {
        let m = &self.model;
        let (l, h) = (self.data.input_length, self.data.horizon);
        if m.kernels.is_empty() {
            return Err(Error::Config("model.kernels must list at least one block".into()));
        }
        for (name, list) in [("forecast_knots", &m.forecast_knots), ("backcast_knots", &m.backcast_knots)] {
            if !list.is_empty() && list.len() != m.kernels.len() {
                return Err(Error::Config(format!(
                    "model.{name} has {} entries for {} blocks",
                    list.len(),
                    m.kernels.len()
                )));
            }
        }
        m.kernels
            .iter()
            .enumerate()
            .map(|(i, &r)| {
                let mut c = BlockConfig::with_default_knots(r, m.hidden_widths.clone(), l, h);
                if let Some(k) = m.forecast_knots.get(i) {
                    c.n_forecast_knots = *k;
                }
                if let Some(k) = m.backcast_knots.get(i) {
                    c.n_backcast_knots = *k;
                }
                c.validate().map_err(|e| Error::Config(format!("block {i}: {e}")))?;
                Ok(c)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let c = ExperimentConfig::default();
        c.validate().unwrap();
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.digest(), c.digest());
        assert_eq!(c.eval.hr_delta, 15.0);
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = ExperimentConfig::from_toml("[model]\nvariant = \"nhits_direct\"\n[data]\nhorizon = 3\n").unwrap();
        assert_eq!(c.model.variant, Variant::NhitsDirect);
        assert_eq!(c.data.horizon, 3);
        assert_eq!(c.data.input_length, 64);
        let knots: Vec<usize> = c.block_configs().unwrap().iter().map(|b| b.n_forecast_knots).collect();
        assert_eq!(knots, vec![2, 2, 3]);
    }

    #[test]
    fn rejects_bad_values() {
        assert!(ExperimentConfig::from_toml("[train]\npatience = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[eval]\nhr_delta = -1.0\n").is_err());
        assert!(ExperimentConfig::from_toml("[data]\nhorizon = 0\n").is_err());
        assert!(ExperimentConfig::from_toml("[wavelet]\nlevels = 7\n").is_err());
        assert!(ExperimentConfig::from_toml("[model]\nforecast_knots = [2]\n").is_err());
        let err = ExperimentConfig::from_toml("[train]\nbogus = 1\n").unwrap_err().to_string();
        assert!(err.contains("bogus"), "{err}");
    }

    #[test]
    fn variant_names() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert!("lstm".parse::<Variant>().is_err());
    }
}
