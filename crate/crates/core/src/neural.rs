//! Dense feed-forward networks with hand-written backpropagation, the Adam
//! optimizer and a central-difference gradient checker.
//!
//! Batches are row-major `[batch × features]` matrices; the matrix products run
//! through `matrixmultiply`'s single-threaded kernels so results are
//! reproducible bit-for-bit on a given machine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{shape_err, Error, Result};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor2 {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor2 {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(shape_err("Tensor2::from_vec", rows * cols, data.len()));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("tensor entry {bad}")));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::InvalidArgument("ragged rows".into()));
        }
        Self::from_vec(rows.len(), cols, rows.concat())
    }

    pub fn identity(n: usize) -> Self {
        let mut t = Self::zeros(n, n);
        for i in 0..n {
            t.data[i * n + i] = 1.0;
        }
        t
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [f64] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Matrix operand view: storage plus whether it is used transposed.
#[derive(Clone, Copy)]
struct Operand<'a> {
    data: &'a [f64],
    /// Row count of the stored (untransposed) matrix.
    rows: usize,
    cols: usize,
    transposed: bool,
}

impl<'a> Operand<'a> {
    fn plain(t: &'a Tensor2) -> Self {
        Self {
            data: &t.data,
            rows: t.rows,
            cols: t.cols,
            transposed: false,
        }
    }

    fn t(t: &'a Tensor2) -> Self {
        Self {
            transposed: true,
            ..Self::plain(t)
        }
    }

    fn logical(&self) -> (usize, usize) {
        if self.transposed {
            (self.cols, self.rows)
        } else {
            (self.rows, self.cols)
        }
    }

    fn strides(&self) -> (isize, isize) {
        if self.transposed {
            (1, self.cols as isize)
        } else {
            (self.cols as isize, 1)
        }
    }
}

/// `c = alpha · a · b + beta · c`.
fn gemm(alpha: f64, a: Operand, b: Operand, beta: f64, c: &mut Tensor2) {
    let (m, k) = a.logical();
    let (k2, n) = b.logical();
    assert_eq!(k, k2, "gemm inner dimension");
    assert_eq!((c.rows, c.cols), (m, n), "gemm output shape");
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c.data.iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let (rsa, csa) = a.strides();
    let (rsb, csb) = b.strides();
    // SAFETY: strides and dimensions describe the backing slices exactly.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            rsa,
            csa,
            b.data.as_ptr(),
            rsb,
            csb,
            beta,
            c.data.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Identity => z,
        }
    }

    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Identity => 1.0,
        }
    }

    pub fn code(self) -> f64 {
        match self {
            Activation::Relu => 1.0,
            Activation::Identity => 0.0,
        }
    }

    pub fn from_code(code: f64) -> Result<Self> {
        match code {
            c if c == 1.0 => Ok(Activation::Relu),
            c if c == 0.0 => Ok(Activation::Identity),
            c => Err(Error::InvalidArgument(format!("unknown activation code {c}"))),
        }
    }
}

/// Fully connected layer `activation(W x + b)` with `W` shaped `[out × in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    pub weights: Tensor2,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Tensor2, bias: Vec<f64>, activation: Activation) -> Result<Self> {
        if bias.len() != weights.rows() {
            return Err(shape_err("DenseLayer bias", weights.rows(), bias.len()));
        }
        if bias.iter().any(|b| !b.is_finite()) {
            return Err(Error::NonFinite("layer bias".into()));
        }
        Ok(Self {
            weights,
            bias,
            activation,
        })
    }

    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Self {
            weights: Tensor2::zeros(outputs, inputs),
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// He-style uniform initialization, `U(-√(6/fan_in), √(6/fan_in))`, zero bias.
    pub fn he_uniform<R: Rng + ?Sized>(inputs: usize, outputs: usize, activation: Activation, rng: &mut R) -> Self {
        let limit = (6.0 / inputs.max(1) as f64).sqrt();
        let data = (0..inputs * outputs)
            .map(|_| rng.random_range(-limit..limit))
            .collect();
        Self {
            weights: Tensor2 {
                rows: outputs,
                cols: inputs,
                data,
            },
            bias: vec![0.0; outputs],
            activation,
        }
    }

    pub fn inputs(&self) -> usize {
        self.weights.cols()
    }

    pub fn outputs(&self) -> usize {
        self.weights.rows()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.inputs() {
            return Err(shape_err("dense_forward input", self.inputs(), x.len()));
        }
        Ok((0..self.outputs())
            .map(|o| {
                let z: f64 = self.weights.row(o).iter().zip(x).map(|(w, v)| w * v).sum();
                self.activation.apply(z + self.bias[o])
            })
            .collect())
    }

    /// Returns `(pre_activation, output)` for a `[batch × in]` input.
    fn forward_batch(&self, x: &Tensor2) -> (Tensor2, Tensor2) {
        let mut z = Tensor2::zeros(x.rows(), self.outputs());
        for r in 0..x.rows() {
            z.row_mut(r).copy_from_slice(&self.bias);
        }
        gemm(1.0, Operand::plain(x), Operand::t(&self.weights), 1.0, &mut z);
        let mut y = z.clone();
        if self.activation != Activation::Identity {
            y.data.iter_mut().for_each(|v| *v = self.activation.apply(*v));
        }
        (z, y)
    }
}

/// Activations recorded by [`Mlp::forward_batch`].
#[derive(Debug, Clone)]
pub struct MlpCache {
    /// Input to each layer, `[batch × in_l]`.
    inputs: Vec<Tensor2>,
    /// Pre-activation of each layer, `[batch × out_l]`.
    pre: Vec<Tensor2>,
}

impl MlpCache {
    pub fn batch(&self) -> usize {
        self.inputs.first().map_or(0, Tensor2::rows)
    }

    /// Pre-activations of every layer (for kink-margin diagnostics).
    pub fn pre_activations(&self) -> &[Tensor2] {
        &self.pre
    }
}

/// Gradients of every layer's parameters, shaped like the layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub weights: Vec<Tensor2>,
    pub biases: Vec<Vec<f64>>,
}

impl MlpGrads {
    /// Parameter-ordered views: each layer's weights then its bias.
    pub fn slices(&self) -> Vec<&[f64]> {
        self.weights
            .iter()
            .zip(&self.biases)
            .flat_map(|(w, b)| [w.as_slice(), b.as_slice()])
            .collect()
    }
}

/// A chain of dense layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<DenseLayer>,
}

impl Mlp {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::InvalidArgument("an MLP needs at least one layer".into()));
        }
        for pair in layers.windows(2) {
            if pair[0].outputs() != pair[1].inputs() {
                return Err(shape_err("mlp layer chain", pair[0].outputs(), pair[1].inputs()));
            }
        }
        Ok(Self { layers })
    }

    /// `widths = [in, hidden.., out]`; relu on hidden layers, `output` on the last.
    pub fn he_uniform<R: Rng + ?Sized>(widths: &[usize], output: Activation, rng: &mut R) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("need input and output widths".into()));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { Activation::Relu };
                DenseLayer::he_uniform(w[0], w[1], act, rng)
            })
            .collect();
        Self::new(layers)
    }

    pub fn zeros(widths: &[usize], output: Activation) -> Result<Self> {
        if widths.len() < 2 {
            return Err(Error::InvalidArgument("need input and output widths".into()));
        }
        let last = widths.len() - 2;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                let act = if i == last { output } else { Activation::Relu };
                DenseLayer::zeros(w[0], w[1], act)
            })
            .collect();
        Self::new(layers)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs()
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, DenseLayer::outputs)
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.data.len() + l.bias.len()).sum()
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        self.layers
            .iter()
            .flat_map(|l| [l.weights.as_slice(), l.bias.as_slice()])
            .collect()
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.layers
            .iter_mut()
            .flat_map(|l| [l.weights.data.as_mut_slice(), l.bias.as_mut_slice()])
            .collect()
    }

    pub fn forward(&self, x: &[f64]) -> Result<(Vec<f64>, MlpCache)> {
        let batch = Tensor2::from_vec(1, x.len(), x.to_vec())?;
        let (y, cache) = self.forward_batch(&batch)?;
        Ok((y.into_vec(), cache))
    }

    pub fn forward_batch(&self, x: &Tensor2) -> Result<(Tensor2, MlpCache)> {
        if x.cols() != self.input_width() {
            return Err(shape_err("mlp_forward input width", self.input_width(), x.cols()));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut current = x.clone();
        for layer in &self.layers {
            let (z, y) = layer.forward_batch(&current);
            inputs.push(std::mem::replace(&mut current, y));
            pre.push(z);
        }
        Ok((current, MlpCache { inputs, pre }))
    }

    pub fn backward(&self, cache: &MlpCache, output_grad: &[f64]) -> Result<(Vec<f64>, MlpGrads)> {
        let g = Tensor2::from_vec(1, output_grad.len(), output_grad.to_vec())?;
        let (dx, grads) = self.backward_batch(cache, &g)?;
        Ok((dx.into_vec(), grads))
    }

    /// Exact gradients of `Σ output_grad ⊙ output` for the cached forward pass.
    pub fn backward_batch(&self, cache: &MlpCache, output_grad: &Tensor2) -> Result<(Tensor2, MlpGrads)> {
        if cache.inputs.len() != self.layers.len() {
            return Err(Error::StaleCache("layer count differs from the cached forward pass"));
        }
        for (layer, (inp, z)) in self.layers.iter().zip(cache.inputs.iter().zip(&cache.pre)) {
            if inp.cols() != layer.inputs() || z.cols() != layer.outputs() {
                return Err(Error::StaleCache("layer widths differ from the cached forward pass"));
            }
        }
        if output_grad.shape() != (cache.batch(), self.output_width()) {
            return Err(shape_err(
                "mlp_backward output gradient",
                format!("{}x{}", cache.batch(), self.output_width()),
                format!("{}x{}", output_grad.rows(), output_grad.cols()),
            ));
        }
        let n = self.layers.len();
        let mut w_grads = Vec::with_capacity(n);
        let mut b_grads = Vec::with_capacity(n);
        let mut upstream = output_grad.clone();
        for l in (0..n).rev() {
            let layer = &self.layers[l];
            let mut dz = upstream;
            if layer.activation != Activation::Identity {
                for (g, z) in dz.data.iter_mut().zip(&cache.pre[l].data) {
                    *g *= layer.activation.derivative(*z);
                }
            }
            let mut dw = Tensor2::zeros(layer.outputs(), layer.inputs());
            gemm(1.0, Operand::t(&dz), Operand::plain(&cache.inputs[l]), 0.0, &mut dw);
            let mut db = vec![0.0; layer.outputs()];
            for r in 0..dz.rows() {
                for (acc, g) in db.iter_mut().zip(dz.row(r)) {
                    *acc += g;
                }
            }
            let mut dx = Tensor2::zeros(dz.rows(), layer.inputs());
            gemm(1.0, Operand::plain(&dz), Operand::plain(&layer.weights), 0.0, &mut dx);
            w_grads.push(dw);
            b_grads.push(db);
            upstream = dx;
        }
        w_grads.reverse();
        b_grads.reverse();
        Ok((
            upstream,
            MlpGrads {
                weights: w_grads,
                biases: b_grads,
            },
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

/// Bias-corrected Adam moments for a list of parameter slices.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl AdamState {
    pub fn new(config: AdamConfig, shapes: &[usize]) -> Self {
        Self {
            config,
            step: 0,
            first: shapes.iter().map(|n| vec![0.0; *n]).collect(),
            second: shapes.iter().map(|n| vec![0.0; *n]).collect(),
        }
    }

    pub fn for_slices(config: AdamConfig, params: &[&[f64]]) -> Self {
        let shapes: Vec<usize> = params.iter().map(|p| p.len()).collect();
        Self::new(config, &shapes)
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first.len() || grads.len() != self.first.len() {
            return Err(shape_err(
                "adam_step parameter groups",
                self.first.len(),
                format!("{} params / {} grads", params.len(), grads.len()),
            ));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.len() != self.first[i].len() || g.len() != self.first[i].len() {
                return Err(shape_err("adam_step group size", self.first[i].len(), format!("{}/{}", p.len(), g.len())));
            }
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step as i32;
        let c1 = 1.0 - beta1.powi(t);
        let c2 = 1.0 - beta2.powi(t);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first.iter_mut().zip(self.second.iter_mut()))
        {
            for j in 0..p.len() {
                let gj = g[j];
                m[j] = beta1 * m[j] + (1.0 - beta1) * gj;
                v[j] = beta2 * v[j] + (1.0 - beta2) * gj * gj;
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub checked: usize,
    pub tolerance: f64,
    pub passed: bool,
}

/// Denominator floor, keeps exactly-zero gradients from dividing by zero.
const REL_FLOOR: f64 = 1e-6;

/// Compare `analytic` against central differences of `loss` around `params`.
///
/// The relative error of each coordinate is `|a - n| / max(|a|, |n|, 1e-6)`.
/// The check passes when the worst coordinate is strictly below `tolerance`.
pub fn grad_check<F>(mut loss: F, params: &[f64], analytic: &[f64], step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> f64,
{
    if params.len() != analytic.len() {
        return Err(Error::LengthMismatch {
            what: "grad_check parameters vs gradient",
            left: params.len(),
            right: analytic.len(),
        });
    }
    let base = loss(params);
    if !base.is_finite() {
        return Err(Error::NonFinite(format!("loss {base} at the check point")));
    }
    let mut probe = params.to_vec();
    let mut worst = 0.0;
    let mut worst_index = 0;
    for i in 0..params.len() {
        let orig = probe[i];
        probe[i] = orig + step;
        let up = loss(&probe);
        probe[i] = orig - step;
        let down = loss(&probe);
        probe[i] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(Error::NonFinite(format!("loss at perturbed coordinate {i}")));
        }
        let numeric = (up - down) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        if rel > worst {
            worst = rel;
            worst_index = i;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        worst_index,
        checked: params.len(),
        tolerance,
        passed: worst < tolerance,
    })
}

/// Concatenate parameter slices.
pub fn flatten(slices: &[&[f64]]) -> Vec<f64> {
    slices.concat()
}

/// Scatter a flat vector back into parameter slices.
pub fn unflatten(flat: &[f64], slices: &mut [&mut [f64]]) -> Result<()> {
    let total: usize = slices.iter().map(|s| s.len()).sum();
    if total != flat.len() {
        return Err(shape_err("unflatten", total, flat.len()));
    }
    let mut offset = 0;
    for s in slices.iter_mut() {
        let n = s.len();
        s.copy_from_slice(&flat[offset..offset + n]);
        offset += n;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn seeded_net(seed: u64, widths: &[usize]) -> Mlp {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut net = Mlp::he_uniform(widths, Activation::Identity, &mut rng).unwrap();
        for layer in &mut net.layers {
            for b in &mut layer.bias {
                *b = rng.random_range(-0.5..0.5);
            }
        }
        net
    }

    fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Straight-line re-computation with explicit loops.
    fn naive_forward(net: &Mlp, x: &[f64]) -> Vec<f64> {
        let mut cur = x.to_vec();
        for l in &net.layers {
            let mut next = vec![0.0; l.outputs()];
            for o in 0..l.outputs() {
                let mut z = l.bias[o];
                for i in 0..l.inputs() {
                    z += l.weights.get(o, i) * cur[i];
                }
                next[o] = match l.activation {
                    Activation::Relu => {
                        if z > 0.0 {
                            z
                        } else {
                            0.0
                        }
                    }
                    Activation::Identity => z,
                };
            }
            cur = next;
        }
        cur
    }

    #[test]
    fn dense_forward_examples() {
        let zero = DenseLayer::zeros(3, 2, Activation::Relu);
        assert_eq!(zero.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![0.0, 0.0]);
        let id = DenseLayer::new(Tensor2::identity(3), vec![0.0; 3], Activation::Identity).unwrap();
        assert_eq!(id.forward(&[1.0, -2.0, 3.0]).unwrap(), vec![1.0, -2.0, 3.0]);
        let w = Tensor2::from_rows(&[vec![1.0, 2.0]]).unwrap();
        let l = DenseLayer::new(w, vec![-3.0], Activation::Relu).unwrap();
        assert_eq!(l.forward(&[1.0, 1.0]).unwrap(), vec![0.0]);
        assert!(l.forward(&[1.0]).is_err());
    }

    #[test]
    fn mlp_forward_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let single = Mlp::new(vec![DenseLayer::he_uniform(4, 3, Activation::Relu, &mut rng)]).unwrap();
        let x = random_vec(&mut rng, 4);
        assert_eq!(single.forward(&x).unwrap().0, single.layers[0].forward(&x).unwrap());

        let id = |n| DenseLayer::new(Tensor2::identity(n), vec![0.0; n], Activation::Identity).unwrap();
        let two = Mlp::new(vec![id(4), id(4)]).unwrap();
        assert_eq!(two.forward(&x).unwrap().0, x);

        let net = seeded_net(2, &[5, 7, 3]);
        let x = random_vec(&mut rng, 5);
        let (y, _) = net.forward(&x).unwrap();
        for (a, b) in y.iter().zip(naive_forward(&net, &x)) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!(Mlp::new(vec![DenseLayer::zeros(3, 2, Activation::Relu), DenseLayer::zeros(3, 1, Activation::Relu)]).is_err());
        assert!(net.forward(&[1.0]).is_err());
    }

    #[test]
    fn batch_forward_matches_single() {
        let net = seeded_net(4, &[6, 8, 8, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let rows: Vec<Vec<f64>> = (0..5).map(|_| random_vec(&mut rng, 6)).collect();
        let (yb, _) = net.forward_batch(&Tensor2::from_rows(&rows).unwrap()).unwrap();
        for (r, x) in rows.iter().enumerate() {
            let y = naive_forward(&net, x);
            for (a, b) in yb.row(r).iter().zip(&y) {
                assert!((a - b).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn backward_trivial_cases() {
        let net = seeded_net(6, &[4, 5, 3]);
        let (_, cache) = net.forward(&[0.1, 0.2, -0.3, 0.4]).unwrap();
        let (dx, g) = net.backward(&cache, &[0.0; 3]).unwrap();
        assert!(dx.iter().all(|v| *v == 0.0));
        assert!(g.slices().iter().all(|s| s.iter().all(|v| *v == 0.0)));

        let id = Mlp::new(vec![DenseLayer::new(Tensor2::identity(3), vec![0.0; 3], Activation::Identity).unwrap()]).unwrap();
        let (_, cache) = id.forward(&[1.0, 2.0, 3.0]).unwrap();
        let (dx, _) = id.backward(&cache, &[0.5, -1.0, 2.0]).unwrap();
        assert_eq!(dx, vec![0.5, -1.0, 2.0]);

        let other = seeded_net(7, &[4, 6, 3]);
        assert!(matches!(other.backward(&cache, &[0.0; 3]), Err(Error::StaleCache(_))));
        assert!(net.backward(&net.forward(&[0.0; 4]).unwrap().1, &[0.0; 2]).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = seeded_net(9, &[6, 10, 8, 4]);
        let x = random_vec(&mut rng, 6);
        let c = random_vec(&mut rng, 4);
        let (_, cache) = net.forward(&x).unwrap();
        let (dx, grads) = net.backward(&cache, &c).unwrap();
        let flat = flatten(&net.param_slices());
        let analytic = flatten(&grads.slices());
        let loss = |p: &[f64]| {
            let mut probe = net.clone();
            unflatten(p, &mut probe.param_slices_mut()).unwrap();
            let (y, _) = probe.forward(&x).unwrap();
            y.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        let report = grad_check(loss, &flat, &analytic, 1e-5, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");

        let loss_x = |xp: &[f64]| {
            let (y, _) = net.forward(xp).unwrap();
            y.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>()
        };
        let report = grad_check(loss_x, &x, &dx, 1e-5, 1e-4).unwrap();
        assert!(report.passed, "{report:?}");
    }

    #[test]
    fn grad_check_behaviour() {
        // linear model: loss = w·x, gradient = x
        let x = [0.3, -1.2, 2.0, 0.7];
        let w = [1.0, 0.5, -0.25, 2.0];
        let loss = |p: &[f64]| p.iter().zip(&x).map(|(a, b)| a * b).sum::<f64>();
        let r = grad_check(loss, &w, &x, 1e-5, 1e-9).unwrap();
        assert!(r.passed && r.max_rel_error < 1e-9, "{r:?}");

        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let net = seeded_net(11, &[3, 6, 2]);
        let xin = random_vec(&mut rng, 3);
        let (_, cache) = net.forward(&xin).unwrap();
        let (_, g) = net.backward(&cache, &[1.0, 1.0]).unwrap();
        let loss = |p: &[f64]| {
            let mut probe = net.clone();
            unflatten(p, &mut probe.param_slices_mut()).unwrap();
            probe.forward(&xin).unwrap().0.iter().sum::<f64>()
        };
        let flat = flatten(&net.param_slices());
        assert!(grad_check(loss, &flat, &flatten(&g.slices()), 1e-5, 1e-4).unwrap().passed);
        let fail = grad_check(loss, &flat, &flatten(&g.slices()), 1e-5, 0.0).unwrap();
        assert!(!fail.passed);

        assert!(matches!(
            grad_check(|_| f64::NAN, &[1.0], &[1.0], 1e-5, 1.0),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn adam_examples() {
        let mut p = vec![1.0, -2.0, 3.0];
        let mut state = AdamState::new(AdamConfig::default(), &[3]);
        state.step(&mut [p.as_mut_slice()], &[&[0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.0]);
        assert_eq!(state.step, 1);

        let mut p = vec![0.0, 0.0];
        let mut state = AdamState::new(AdamConfig::default(), &[2]);
        state.step(&mut [p.as_mut_slice()], &[&[4.0, -0.01]]).unwrap();
        assert!((p[0] + 1e-3).abs() < 1e-9);
        assert!((p[1] - 1e-3).abs() < 1e-6);

        // f(x) = (x - 3)^2
        let mut x = vec![0.0];
        let mut state = AdamState::new(AdamConfig { learning_rate: 0.1, ..Default::default() }, &[1]);
        let f = |x: f64| (x - 3.0).powi(2);
        let start = f(x[0]);
        for _ in 0..2 {
            let g = 2.0 * (x[0] - 3.0);
            state.step(&mut [x.as_mut_slice()], &[&[g]]).unwrap();
        }
        assert!(f(x[0]) < start);

        assert!(state.step(&mut [x.as_mut_slice()], &[&[1.0, 2.0]]).is_err());
        assert!(state.step(&mut [], &[]).is_err());
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut net = seeded_net(12, &[4, 8, 2]);
            let mut rng = ChaCha8Rng::seed_from_u64(13);
            let mut adam = AdamState::for_slices(AdamConfig::default(), &net.param_slices());
            for _ in 0..20 {
                let rows: Vec<Vec<f64>> = (0..8).map(|_| random_vec(&mut rng, 4)).collect();
                let x = Tensor2::from_rows(&rows).unwrap();
                let (y, cache) = net.forward_batch(&x).unwrap();
                let (_, g) = net.backward_batch(&cache, &y).unwrap();
                let gs: Vec<Vec<f64>> = g.slices().iter().map(|s| s.to_vec()).collect();
                let grefs: Vec<&[f64]> = gs.iter().map(Vec::as_slice).collect();
                adam.step(&mut net.param_slices_mut(), &grefs).unwrap();
            }
            flatten(&net.param_slices())
        };
        let a = run();
        let b = run();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn relu_lipschitz_and_identity_affine() {
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        let relu = DenseLayer::new(Tensor2::identity(5), vec![0.0; 5], Activation::Relu).unwrap();
        for _ in 0..50 {
            let a = random_vec(&mut rng, 5);
            let b = random_vec(&mut rng, 5);
            let (ya, yb) = (relu.forward(&a).unwrap(), relu.forward(&b).unwrap());
            for i in 0..5 {
                assert!((ya[i] - yb[i]).abs() <= (a[i] - b[i]).abs());
            }
        }
        let lin = DenseLayer::he_uniform(4, 3, Activation::Identity, &mut rng);
        let lin = DenseLayer::new(lin.weights, vec![0.3, -0.2, 0.1], Activation::Identity).unwrap();
        let x = random_vec(&mut rng, 4);
        let y = random_vec(&mut rng, 4);
        let (alpha, beta) = (0.7, 0.3);
        let mix: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let (fx, fy, fm) = (lin.forward(&x).unwrap(), lin.forward(&y).unwrap(), lin.forward(&mix).unwrap());
        for i in 0..3 {
            assert!((alpha * fx[i] + beta * fy[i] - fm[i]).abs() < 1e-12);
        }
    }
}
