//! Hierarchical interpolation forecaster.
//!
//! Each block max-pools its residual input at its own rate, maps the pooled
//! window through a dense network to a handful of knots per target, and
//! expands the knots to a backcast over the input window and a forecast over
//! the horizon by piecewise-linear interpolation. Backcasts are subtracted
//! from the target channels before the next block; forecasts are summed.
//!
//! Inputs are `[channels × L]` windows, flattened channel-major. The first
//! `n_targets` channels are the history of the forecast targets.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::Scaler;
use crate::error::{shape_err, Error, Result};
use crate::neural::{Activation, Mlp, MlpCache, MlpGrads, Tensor2};

/// Non-overlapping max pooling; the trailing partial window is pooled over
/// the elements it has.
pub fn maxpool(x: &[f64], kernel: usize) -> Result<Vec<f64>> {
    Ok(maxpool_argmax(x, kernel)?.into_iter().map(|i| x[i]).collect())
}

/// Index of the maximum in each pooling window; ties go to the earliest index.
pub fn maxpool_argmax(x: &[f64], kernel: usize) -> Result<Vec<usize>> {
    if x.is_empty() {
        return Err(Error::Empty("maxpool input"));
    }
    if kernel == 0 {
        return Err(Error::InvalidArgument("pooling kernel must be ≥ 1".into()));
    }
    Ok((0..x.len())
        .step_by(kernel)
        .map(|start| {
            let end = (start + kernel).min(x.len());
            (start + 1..end).fold(start, |best, i| if x[i] > x[best] { i } else { best })
        })
        .collect())
}

/// Linear interpolation weights from `n_knots` equally spaced knots (first at
/// 0, last at `target_len - 1`) onto every integer grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct Interpolator {
    n_knots: usize,
    /// Per output point: left knot index and weight of the right knot.
    segments: Vec<(usize, f64)>,
}

impl Interpolator {
    pub fn new(n_knots: usize, target_len: usize) -> Result<Self> {
        if n_knots < 2 {
            return Err(Error::InvalidArgument(format!(
                "basis expansion needs at least 2 knots, got {n_knots}"
            )));
        }
        if target_len == 0 {
            return Err(Error::InvalidArgument("interpolation target length must be ≥ 1".into()));
        }
        let span = (n_knots - 1) as f64;
        let segments = (0..target_len)
            .map(|i| {
                if target_len == 1 {
                    return (0, 0.0);
                }
                let s = i as f64 * span / (target_len - 1) as f64;
                let k = (s.floor() as usize).min(n_knots - 2);
                (k, s - k as f64)
            })
            .collect();
        Ok(Self { n_knots, segments })
    }

    pub fn target_len(&self) -> usize {
        self.segments.len()
    }

    pub fn expand_into(&self, knots: &[f64], out: &mut [f64]) {
        debug_assert_eq!(knots.len(), self.n_knots);
        for (o, (k, f)) in out.iter_mut().zip(&self.segments) {
            *o = if *f == 0.0 {
                knots[*k]
            } else {
                (1.0 - f) * knots[*k] + f * knots[k + 1]
            };
        }
    }

    /// Accumulate the transpose: `knot_grad += Mᵀ out_grad`.
    pub fn transpose_into(&self, out_grad: &[f64], knot_grad: &mut [f64]) {
        for (g, (k, f)) in out_grad.iter().zip(&self.segments) {
            knot_grad[*k] += (1.0 - f) * g;
            if *f != 0.0 {
                knot_grad[k + 1] += f * g;
            }
        }
    }
}

/// Piecewise-linear basis expansion of `knots` onto `target_len` points.
pub fn interpolate_basis(knots: &[f64], target_len: usize) -> Result<Vec<f64>> {
    let interp = Interpolator::new(knots.len(), target_len)?;
    let mut out = vec![0.0; target_len];
    interp.expand_into(knots, &mut out);
    Ok(out)
}

/// Per-block architecture choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlockConfig {
    pub pool_kernel: usize,
    pub hidden_widths: Vec<usize>,
    pub n_backcast_knots: usize,
    pub n_forecast_knots: usize,
    pub input_length: usize,
    pub horizon: usize,
}

impl BlockConfig {
    /// Knot counts scaled to the pooling rate: `⌈H/r⌉` forecast knots and
    /// `⌈L/2r⌉` backcast knots, clamped to the valid range.
    pub fn with_default_knots(pool_kernel: usize, hidden_widths: Vec<usize>, input_length: usize, horizon: usize) -> Self {
        let r = pool_kernel.max(1);
        Self {
            pool_kernel,
            hidden_widths,
            n_backcast_knots: input_length.div_ceil(2 * r).clamp(2, input_length.max(2)),
            n_forecast_knots: horizon.div_ceil(r).clamp(2, horizon.max(2)),
            input_length,
            horizon,
        }
    }

    pub fn pooled_len(&self) -> usize {
        self.input_length.div_ceil(self.pool_kernel)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.pool_kernel == 0 {
            return bad("pool kernel must be ≥ 1".into());
        }
        if self.input_length == 0 || self.horizon == 0 {
            return bad("input length and horizon must be ≥ 1".into());
        }
        if self.n_forecast_knots < 2 || self.n_forecast_knots > self.horizon.max(2) {
            return bad(format!(
                "forecast knots {} outside [2, {}]",
                self.n_forecast_knots,
                self.horizon.max(2)
            ));
        }
        if self.n_backcast_knots < 2 || self.n_backcast_knots > self.input_length.max(2) {
            return bad(format!(
                "backcast knots {} outside [2, {}]",
                self.n_backcast_knots, self.input_length
            ));
        }
        if self.hidden_widths.contains(&0) {
            return bad("hidden widths must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub config: BlockConfig,
    pub network: Mlp,
    backcast_basis: Interpolator,
    forecast_basis: Interpolator,
}

impl Block {
    fn widths(config: &BlockConfig, channels: usize, n_targets: usize) -> Vec<usize> {
        let mut widths = vec![channels * config.pooled_len()];
        widths.extend(&config.hidden_widths);
        widths.push(n_targets * (config.n_backcast_knots + config.n_forecast_knots));
        widths
    }

    fn from_network(config: BlockConfig, network: Mlp, channels: usize, n_targets: usize) -> Result<Self> {
        config.validate()?;
        let widths = Self::widths(&config, channels, n_targets);
        let actual: Vec<usize> = std::iter::once(network.input_width())
            .chain(network.layers.iter().map(|l| l.outputs()))
            .collect();
        if actual != widths {
            return Err(shape_err("block network widths", format!("{widths:?}"), format!("{actual:?}")));
        }
        Ok(Self {
            backcast_basis: Interpolator::new(config.n_backcast_knots, config.input_length)?,
            forecast_basis: Interpolator::new(config.n_forecast_knots, config.horizon)?,
            config,
            network,
        })
    }
}

/// Shape of a model's input and output.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModelShape {
    pub input_channels: usize,
    /// Leading channels covered by the data scaler.
    pub raw_channels: usize,
    pub n_targets: usize,
    pub input_length: usize,
    pub horizon: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NhitsModel {
    pub shape: ModelShape,
    pub blocks: Vec<Block>,
}

/// Per-step target paths in physical units.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastPair {
    pub u_path: Vec<f64>,
    pub v_path: Vec<f64>,
}

/// Everything a forward pass produced, batch-major.
#[derive(Debug, Clone)]
pub struct ForwardOutput {
    /// `[batch × n_targets·H]`, target-major within a row.
    pub forecast: Tensor2,
    pub block_forecasts: Vec<Tensor2>,
    /// `[batch × n_targets·L]` per block.
    pub block_backcasts: Vec<Tensor2>,
    /// Residual input after the last block, `[batch × channels·L]`.
    pub residual: Tensor2,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    batch: usize,
    argmax: Vec<Vec<u32>>,
    networks: Vec<MlpCache>,
}

impl ForwardCache {
    pub fn network_caches(&self) -> &[MlpCache] {
        &self.networks
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NhitsGrads {
    pub blocks: Vec<MlpGrads>,
    /// Gradient with respect to the model input, `[batch × channels·L]`.
    pub input: Tensor2,
}

impl NhitsGrads {
    pub fn slices(&self) -> Vec<&[f64]> {
        self.blocks.iter().flat_map(MlpGrads::slices).collect()
    }
}

impl NhitsModel {
    fn check_shape(shape: &ModelShape, configs: &[BlockConfig]) -> Result<()> {
        if configs.is_empty() {
            return Err(Error::InvalidArgument("a model needs at least one block".into()));
        }
        if shape.n_targets == 0 || shape.n_targets > shape.input_channels || shape.raw_channels > shape.input_channels {
            return Err(Error::InvalidArgument(format!("inconsistent model shape {shape:?}")));
        }
        for c in configs {
            if c.input_length != shape.input_length || c.horizon != shape.horizon {
                return Err(Error::InvalidArgument("all blocks must share L and H".into()));
            }
        }
        Ok(())
    }

    /// Randomly initialized model; relu hidden layers, identity knot outputs.
    pub fn new<R: Rng + ?Sized>(shape: ModelShape, configs: Vec<BlockConfig>, rng: &mut R) -> Result<Self> {
        Self::check_shape(&shape, &configs)?;
        let blocks = configs
            .into_iter()
            .map(|c| {
                c.validate()?;
                let widths = Block::widths(&c, shape.input_channels, shape.n_targets);
                let net = Mlp::he_uniform(&widths, Activation::Identity, rng)?;
                Block::from_network(c, net, shape.input_channels, shape.n_targets)
            })
            .collect::<Result<_>>()?;
        Ok(Self { shape, blocks })
    }

    /// Model with every parameter zero.
    pub fn zeros(shape: ModelShape, configs: Vec<BlockConfig>) -> Result<Self> {
        Self::check_shape(&shape, &configs)?;
        let blocks = configs
            .into_iter()
            .map(|c| {
                c.validate()?;
                let widths = Block::widths(&c, shape.input_channels, shape.n_targets);
                let net = Mlp::zeros(&widths, Activation::Identity)?;
                Block::from_network(c, net, shape.input_channels, shape.n_targets)
            })
            .collect::<Result<_>>()?;
        Ok(Self { shape, blocks })
    }

    /// Assemble from explicit networks (used when loading).
    pub fn from_parts(shape: ModelShape, parts: Vec<(BlockConfig, Mlp)>) -> Result<Self> {
        let configs: Vec<BlockConfig> = parts.iter().map(|(c, _)| c.clone()).collect();
        Self::check_shape(&shape, &configs)?;
        let blocks = parts
            .into_iter()
            .map(|(c, n)| Block::from_network(c, n, shape.input_channels, shape.n_targets))
            .collect::<Result<_>>()?;
        Ok(Self { shape, blocks })
    }

    pub fn input_width(&self) -> usize {
        self.shape.input_channels * self.shape.input_length
    }

    pub fn output_width(&self) -> usize {
        self.shape.n_targets * self.shape.horizon
    }

    pub fn param_count(&self) -> usize {
        self.blocks.iter().map(|b| b.network.param_count()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.blocks.iter().flat_map(|b| b.network.param_slices()).collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.blocks.iter_mut().flat_map(|b| b.network.param_slices_mut()).collect()
    }

    /// Pool, run the coefficient network and expand knots for one block.
    /// Returns `(backcast [B × nt·L], forecast [B × nt·H], argmax, cache)`.
    fn block_pass(&self, block: &Block, residual: &Tensor2) -> Result<(Tensor2, Tensor2, Vec<u32>, MlpCache)> {
        let ModelShape {
            input_channels: channels,
            n_targets,
            input_length: l,
            horizon: h,
            ..
        } = self.shape;
        let batch = residual.rows();
        let r = block.config.pool_kernel;
        let lp = block.config.pooled_len();
        let mut pooled = Tensor2::zeros(batch, channels * lp);
        let mut argmax = Vec::with_capacity(batch * channels * lp);
        for b in 0..batch {
            let row = residual.row(b);
            let out = pooled.row_mut(b);
            for c in 0..channels {
                let series = &row[c * l..(c + 1) * l];
                for (p, start) in (0..l).step_by(r).enumerate() {
                    let end = (start + r).min(l);
                    let best = (start + 1..end).fold(start, |best, i| if series[i] > series[best] { i } else { best });
                    out[c * lp + p] = series[best];
                    argmax.push((c * l + best) as u32);
                }
            }
        }
        let (coeffs, cache) = block.network.forward_batch(&pooled)?;
        let nb = block.config.n_backcast_knots;
        let nf = block.config.n_forecast_knots;
        let mut backcast = Tensor2::zeros(batch, n_targets * l);
        let mut forecast = Tensor2::zeros(batch, n_targets * h);
        for b in 0..batch {
            let k = coeffs.row(b);
            let bc = backcast.row_mut(b);
            for t in 0..n_targets {
                block
                    .backcast_basis
                    .expand_into(&k[t * nb..(t + 1) * nb], &mut bc[t * l..(t + 1) * l]);
            }
            let fc = forecast.row_mut(b);
            let off = n_targets * nb;
            for t in 0..n_targets {
                block
                    .forecast_basis
                    .expand_into(&k[off + t * nf..off + (t + 1) * nf], &mut fc[t * h..(t + 1) * h]);
            }
        }
        Ok((backcast, forecast, argmax, cache))
    }

    fn check_input(&self, x: &Tensor2) -> Result<()> {
        if x.cols() != self.input_width() {
            return Err(shape_err("model input width", self.input_width(), x.cols()));
        }
        Ok(())
    }

    /// Single block applied to `x` (for inspection and tests).
    pub fn block_forward(&self, index: usize, x: &Tensor2) -> Result<(Tensor2, Tensor2)> {
        self.check_input(x)?;
        let block = self
            .blocks
            .get(index)
            .ok_or_else(|| Error::InvalidArgument(format!("no block {index}")))?;
        let (bc, fc, _, _) = self.block_pass(block, x)?;
        Ok((bc, fc))
    }

    /// Batched forward pass; `x` is `[batch × channels·L]`.
    pub fn forward_batch(&self, x: &Tensor2) -> Result<(ForwardOutput, ForwardCache)> {
        self.check_input(x)?;
        let batch = x.rows();
        let l = self.shape.input_length;
        let nt = self.shape.n_targets;
        let mut residual = x.clone();
        let mut forecast = Tensor2::zeros(batch, self.output_width());
        let mut block_forecasts = Vec::with_capacity(self.blocks.len());
        let mut block_backcasts = Vec::with_capacity(self.blocks.len());
        let mut argmax = Vec::with_capacity(self.blocks.len());
        let mut networks = Vec::with_capacity(self.blocks.len());
        for block in &self.blocks {
            let (bc, fc, am, cache) = self.block_pass(block, &residual)?;
            for b in 0..batch {
                let res = residual.row_mut(b);
                for (slot, v) in res[..nt * l].iter_mut().zip(bc.row(b)) {
                    *slot -= v;
                }
            }
            for (acc, v) in forecast.as_mut_slice().iter_mut().zip(fc.as_slice()) {
                *acc += v;
            }
            block_forecasts.push(fc);
            block_backcasts.push(bc);
            argmax.push(am);
            networks.push(cache);
        }
        Ok((
            ForwardOutput {
                forecast,
                block_forecasts,
                block_backcasts,
                residual,
            },
            ForwardCache { batch, argmax, networks },
        ))
    }

    /// Forward pass on one `[channels × L]` window.
    pub fn forward(&self, window: &Tensor2) -> Result<(ForwardOutput, ForwardCache)> {
        if window.shape() != (self.shape.input_channels, self.shape.input_length) {
            return Err(shape_err(
                "model window",
                format!("{}x{}", self.shape.input_channels, self.shape.input_length),
                format!("{}x{}", window.rows(), window.cols()),
            ));
        }
        let flat = Tensor2::from_vec(1, self.input_width(), window.as_slice().to_vec())?;
        self.forward_batch(&flat)
    }

    /// Exact gradients of `Σ forecast_grad ⊙ forecast` through the cached pass.
    pub fn backward(&self, cache: &ForwardCache, forecast_grad: &Tensor2) -> Result<NhitsGrads> {
        if cache.networks.len() != self.blocks.len() || cache.argmax.len() != self.blocks.len() {
            return Err(Error::StaleCache("block count differs from the cached forward pass"));
        }
        let batch = cache.batch;
        if forecast_grad.shape() != (batch, self.output_width()) {
            return Err(shape_err(
                "forecast gradient",
                format!("{batch}x{}", self.output_width()),
                format!("{}x{}", forecast_grad.rows(), forecast_grad.cols()),
            ));
        }
        let ModelShape {
            input_channels: channels,
            n_targets: nt,
            input_length: l,
            horizon: h,
            ..
        } = self.shape;
        let mut residual_grad = Tensor2::zeros(batch, channels * l);
        let mut grads = Vec::with_capacity(self.blocks.len());
        for (i, block) in self.blocks.iter().enumerate().rev() {
            let nb = block.config.n_backcast_knots;
            let nf = block.config.n_forecast_knots;
            let expected = channels * block.config.pooled_len() * batch;
            if cache.argmax[i].len() != expected || cache.networks[i].batch() != batch {
                return Err(Error::StaleCache("pooling layout differs from the cached forward pass"));
            }
            let mut coeff_grad = Tensor2::zeros(batch, nt * (nb + nf));
            for b in 0..batch {
                let rg = residual_grad.row(b);
                let fg = forecast_grad.row(b);
                let cg = coeff_grad.row_mut(b);
                let (back, fore) = cg.split_at_mut(nt * nb);
                for t in 0..nt {
                    // residual_i = residual_{i-1} - backcast_i
                    let neg: Vec<f64> = rg[t * l..(t + 1) * l].iter().map(|g| -g).collect();
                    block.backcast_basis.transpose_into(&neg, &mut back[t * nb..(t + 1) * nb]);
                    block
                        .forecast_basis
                        .transpose_into(&fg[t * h..(t + 1) * h], &mut fore[t * nf..(t + 1) * nf]);
                }
            }
            let (pooled_grad, g) = block.network.backward_batch(&cache.networks[i], &coeff_grad)?;
            let per_sample = pooled_grad.cols();
            for b in 0..batch {
                let idx = &cache.argmax[i][b * per_sample..(b + 1) * per_sample];
                let pg = pooled_grad.row(b).to_vec();
                let rg = residual_grad.row_mut(b);
                for (j, g) in idx.iter().zip(pg) {
                    rg[*j as usize] += g;
                }
            }
            grads.push(g);
        }
        grads.reverse();
        Ok(NhitsGrads {
            blocks: grads,
            input: residual_grad,
        })
    }

    /// Distance of `x` from the nearest kink in parameter space: the smallest
    /// hidden relu pre-activation magnitude and the smallest top-two gap of
    /// any pooling window whose contents depend on the parameters. Those are
    /// the target channels of every block after the first.
    pub fn kink_margin(&self, x: &Tensor2) -> Result<f64> {
        let (out, cache) = self.forward_batch(x)?;
        let ModelShape {
            n_targets: nt,
            input_length: l,
            ..
        } = self.shape;
        let mut margin = f64::INFINITY;
        for net in &cache.networks {
            let pre = net.pre_activations();
            for z in &pre[..pre.len() - 1] {
                margin = z.as_slice().iter().fold(margin, |m, v| m.min(v.abs()));
            }
        }
        let mut residual = x.clone();
        for (i, (block, backcast)) in self.blocks.iter().zip(&out.block_backcasts).enumerate() {
            let r = block.config.pool_kernel;
            for b in (0..residual.rows()).filter(|_| i > 0) {
                let row = residual.row(b);
                for c in 0..nt {
                    for w in row[c * l..(c + 1) * l].chunks(r).filter(|w| w.len() > 1) {
                        let mut sorted = w.to_vec();
                        sorted.sort_by(|a, b| b.total_cmp(a));
                        margin = margin.min(sorted[0] - sorted[1]);
                    }
                }
            }
            for b in 0..residual.rows() {
                let bc = backcast.row(b).to_vec();
                for (slot, v) in residual.row_mut(b)[..nt * l].iter_mut().zip(bc) {
                    *slot -= v;
                }
            }
        }
        Ok(margin)
    }

    /// Forecast in physical units, one path per target channel.
    pub fn predict_paths(&self, window: &Tensor2, scaler: &Scaler) -> Result<Vec<Vec<f64>>> {
        if scaler.channels() != self.shape.raw_channels {
            return Err(shape_err("scaler channels", self.shape.raw_channels, scaler.channels()));
        }
        let (out, _) = self.forward(window)?;
        let h = self.shape.horizon;
        Ok((0..self.shape.n_targets)
            .map(|t| {
                out.forecast.as_slice()[t * h..(t + 1) * h]
                    .iter()
                    .map(|v| scaler.invert_value(t, *v))
                    .collect()
            })
            .collect())
    }

    /// De-normalized U and V paths of a two-target model.
    pub fn predict(&self, window: &Tensor2, scaler: &Scaler) -> Result<ForecastPair> {
        if self.shape.n_targets != 2 {
            return Err(Error::InvalidArgument(format!(
                "U/V prediction needs a two-target model, this one has {}",
                self.shape.n_targets
            )));
        }
        let mut paths = self.predict_paths(window, scaler)?;
        let v_path = paths.pop().unwrap_or_default();
        let u_path = paths.pop().unwrap_or_default();
        Ok(ForecastPair { u_path, v_path })
    }
}
