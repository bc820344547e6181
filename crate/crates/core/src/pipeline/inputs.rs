use crate::circular::UvPair;
use crate::data::{make_windows, Column, FrameSet, Scaler, Window, WindowSet, FEATURES};
use crate::error::{shape_err, Error, Result};
use crate::neural::Tensor2;
use crate::nhits::ModelShape;
use crate::wavelet::{feature_channels, WaveletSpec};

use super::config::{ExperimentConfig, Variant};

/// Future wind at every row, in physical units.
#[derive(Debug, Clone)]
pub struct Truth {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub direction: Vec<f64>,
    pub speed: Vec<f64>,
}

impl Truth {
    pub fn uv(&self, row: usize) -> UvPair {
        UvPair::new(self.u[row], self.v[row])
    }
}

/// Scaled channels, windows and everything needed to assemble model inputs
/// for one variant.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub variant: Variant,
    pub windows: WindowSet,
    /// Scaled raw channels, channel-major over all rows.
    pub channels: Vec<Vec<f64>>,
    pub scaler: Scaler,
    pub truth: Truth,
    /// Digest of the frame the channels came from.
    pub fingerprint: String,
    wavelet: Option<(WaveletSpec, usize, usize)>,
}

/// Unscaled raw channels of a variant; target channels come first.
pub fn raw_channels(variant: Variant, frame: &FrameSet) -> Vec<Vec<f64>> {
    match variant {
        Variant::NhitsDirect => {
            let dir = frame.column(Column::Dir2);
            let mut ch = vec![
                dir.to_vec(),
                dir.iter().map(|d| d.to_radians().sin()).collect(),
                dir.iter().map(|d| d.to_radians().cos()).collect(),
            ];
            ch.extend(FEATURES[2..].iter().map(|c| frame.column(*c).to_vec()));
            ch
        }
        _ => frame.feature_matrix(),
    }
}

impl Prepared {
    /// Scale with `scaler`, or fit one on the training rows when `None`.
    pub fn new(config: &ExperimentConfig, frame: &FrameSet, scaler: Option<&Scaler>) -> Result<Self> {
        config.validate()?;
        let variant = config.model.variant;
        let windows = make_windows(frame, config.data.input_length, config.data.horizon, config.data.splits)?;
        let raw = raw_channels(variant, frame);
        let scaler = match scaler {
            Some(s) => {
                if s.channels() != raw.len() {
                    return Err(shape_err("scaler channels for this variant", raw.len(), s.channels()));
                }
                s.clone()
            }
            None => {
                let rows = windows.split_rows[0].clone();
                if rows.is_empty() {
                    return Err(Error::Empty("training rows"));
                }
                let cols: Vec<&[f64]> = raw.iter().map(|c| &c[rows.clone()]).collect();
                Scaler::fit(&cols)?
            }
        };
        let channels = scaler.apply(&raw)?;
        let wavelet = if variant == Variant::Wavehits {
            Some((config.wavelet.spec()?, config.wavelet.levels, config.wavelet.rows_per_target()))
        } else {
            None
        };
        Ok(Self {
            variant,
            windows,
            channels,
            scaler,
            truth: Truth {
                u: frame.column(Column::U2).to_vec(),
                v: frame.column(Column::V2).to_vec(),
                direction: frame.column(Column::Dir2).to_vec(),
                speed: frame.column(Column::Speed2).to_vec(),
            },
            fingerprint: frame.fingerprint(),
            wavelet,
        })
    }

    pub fn n_targets(&self) -> usize {
        match self.variant {
            Variant::NhitsDirect => 1,
            _ => 2,
        }
    }

    pub fn raw_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn input_channels(&self) -> usize {
        self.raw_channels() + self.wavelet.as_ref().map_or(0, |w| 2 * w.2)
    }

    pub fn input_length(&self) -> usize {
        self.windows.input_length
    }

    pub fn horizon(&self) -> usize {
        self.windows.horizon
    }

    pub fn model_shape(&self) -> ModelShape {
        ModelShape {
            input_channels: self.input_channels(),
            raw_channels: self.raw_channels(),
            n_targets: self.n_targets(),
            input_length: self.input_length(),
            horizon: self.horizon(),
        }
    }

    /// Flattened `[channels × L]` model input of `w` written into `out`.
    pub fn input_into(&self, w: &Window, out: &mut [f64]) -> Result<()> {
        let l = self.input_length();
        if out.len() != self.input_channels() * l {
            return Err(shape_err("input buffer", self.input_channels() * l, out.len()));
        }
        for (c, ch) in self.channels.iter().enumerate() {
            out[c * l..(c + 1) * l].copy_from_slice(&ch[w.start..w.start + l]);
        }
        if let Some((spec, levels, keep)) = &self.wavelet {
            let mut c = self.raw_channels();
            for target in 0..2 {
                let rows = feature_channels(&self.channels[target][w.start..w.start + l], spec, *levels)?;
                for row in rows.iter().take(*keep) {
                    out[c * l..(c + 1) * l].copy_from_slice(row);
                    c += 1;
                }
            }
        }
        Ok(())
    }

    pub fn input(&self, w: &Window) -> Result<Tensor2> {
        let mut data = vec![0.0; self.input_channels() * self.input_length()];
        self.input_into(w, &mut data)?;
        Tensor2::from_vec(self.input_channels(), self.input_length(), data)
    }

    /// Scaled targets of `w`, target-major.
    pub fn target_into(&self, w: &Window, out: &mut [f64]) {
        let (l, h) = (self.input_length(), self.horizon());
        for t in 0..self.n_targets() {
            out[t * h..(t + 1) * h].copy_from_slice(&self.channels[t][w.start + l..w.start + l + h]);
        }
    }

    /// Input and target matrices for a batch of windows.
    pub fn batch(&self, windows: &[Window]) -> Result<(Tensor2, Tensor2)> {
        let iw = self.input_channels() * self.input_length();
        let tw = self.n_targets() * self.horizon();
        let mut x = Tensor2::zeros(windows.len(), iw);
        let mut y = Tensor2::zeros(windows.len(), tw);
        for (i, w) in windows.iter().enumerate() {
            self.input_into(w, x.row_mut(i))?;
            self.target_into(w, y.row_mut(i));
        }
        Ok((x, y))
    }

    /// Rows of the `H` forecast steps of `w`.
    pub fn future_rows(&self, w: &Window) -> std::ops::Range<usize> {
        let l = self.input_length();
        w.start + l..w.start + l + self.horizon()
    }
}
