//! Orthonormal discrete wavelet transform.
//!
//! Filters are generated from the Daubechies construction: the half-band
//! polynomial `P(y) = Σ_k C(N-1+k, k) y^k` is factored, the roots inside the
//! unit circle are kept, and the lowpass filter is `(1 + z)^N · Π (z - z_k)`
//! scaled to `Σh = √2`. The highpass filter is the alternating flip of the
//! lowpass one.
//!
//! Two boundary modes are supported:
//!
//! * `Periodic`: circular extension, `N/2` coefficients per level. The
//!   transform is orthogonal, so energy is preserved exactly.
//! * `Symmetric`: half-sample symmetric extension, `⌊(N + F - 1)/2⌋`
//!   coefficients per level. Redundant at the edges but free of wraparound.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryMode {
    Periodic,
    #[default]
    Symmetric,
}

/// A two-channel orthonormal filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletSpec {
    pub name: String,
    /// Decomposition lowpass taps.
    pub lowpass: Vec<f64>,
    /// Decomposition highpass taps.
    pub highpass: Vec<f64>,
    pub boundary: BoundaryMode,
}

impl WaveletSpec {
    /// Daubechies wavelet with four vanishing moments (8 taps).
    pub fn db4(boundary: BoundaryMode) -> Self {
        Self::daubechies(4, boundary).expect("db4 construction")
    }

    /// Daubechies wavelet with `moments` vanishing moments (`2 * moments` taps).
    pub fn daubechies(moments: usize, boundary: BoundaryMode) -> Result<Self> {
        let lowpass = daubechies_lowpass(moments)?;
        let highpass = quadrature_mirror(&lowpass);
        Ok(Self {
            name: format!("db{moments}"),
            lowpass,
            highpass,
            boundary,
        })
    }

    /// Look up a wavelet by its conventional name (`"db1"` .. `"db10"`).
    pub fn from_name(name: &str, boundary: BoundaryMode) -> Result<Self> {
        let moments = name
            .strip_prefix("db")
            .and_then(|n| n.parse::<usize>().ok())
            .filter(|n| (1..=10).contains(n))
            .ok_or_else(|| Error::InvalidArgument(format!("unknown wavelet `{name}`")))?;
        Self::daubechies(moments, boundary)
    }

    pub fn filter_len(&self) -> usize {
        self.lowpass.len()
    }

    /// Length of one analysis output for an input of length `n`.
    pub fn output_len(&self, n: usize) -> usize {
        match self.boundary {
            BoundaryMode::Periodic => n / 2,
            BoundaryMode::Symmetric => (n + self.filter_len() - 1) / 2,
        }
    }

    fn min_step_len(&self) -> usize {
        match self.boundary {
            BoundaryMode::Periodic => 2,
            BoundaryMode::Symmetric => self.filter_len(),
        }
    }

    fn check_step_input(&self, n: usize) -> Result<()> {
        let min = self.min_step_len();
        if n < min {
            return Err(Error::SignalTooShort {
                what: "dwt_step",
                len: n,
                min,
            });
        }
        if self.boundary == BoundaryMode::Periodic && !n.is_multiple_of(2) {
            return Err(Error::InvalidArgument(format!(
                "periodic dwt_step needs an even length, got {n}"
            )));
        }
        Ok(())
    }

    /// Deepest decomposition that `n` samples admit in this boundary mode.
    pub fn max_level(&self, n: usize) -> usize {
        let mut len = n;
        let mut level = 0;
        while self.check_step_input(len).is_ok() {
            len = self.output_len(len);
            level += 1;
        }
        level
    }

    /// Worst violation of the orthonormal filter-bank identities.
    pub fn qmf_residual(&self) -> f64 {
        let h = &self.lowpass;
        let g = &self.highpass;
        let sum_h: f64 = h.iter().sum();
        let sum_g: f64 = g.iter().sum();
        let mut worst = (sum_h - std::f64::consts::SQRT_2).abs().max(sum_g.abs());
        for shift in (0..h.len()).step_by(2) {
            let target = if shift == 0 { 1.0 } else { 0.0 };
            let hh: f64 = (0..h.len() - shift).map(|n| h[n] * h[n + shift]).sum();
            let gg: f64 = (0..g.len() - shift).map(|n| g[n] * g[n + shift]).sum();
            worst = worst.max((hh - target).abs()).max((gg - target).abs());
        }
        // cross-orthogonality over all even relative shifts
        let len = h.len() as isize;
        for shift in (-(len - 2)..len).step_by(2) {
            let hg: f64 = (0..len)
                .filter_map(|n| {
                    let m = n + shift;
                    (0..len).contains(&m).then(|| h[n as usize] * g[m as usize])
                })
                .sum();
            worst = worst.max(hg.abs());
        }
        worst
    }
}

/// `g[n] = (-1)^n h[F-1-n]`.
pub fn quadrature_mirror(lowpass: &[f64]) -> Vec<f64> {
    let f = lowpass.len();
    (0..f)
        .map(|n| {
            let s = if n % 2 == 0 { 1.0 } else { -1.0 };
            s * lowpass[f - 1 - n]
        })
        .collect()
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Roots of a complex polynomial given in ascending coefficient order.
fn poly_roots(coeffs: &[Complex64]) -> Vec<Complex64> {
    let degree = coeffs.len() - 1;
    if degree == 0 {
        return Vec::new();
    }
    let lead = coeffs[degree];
    let monic: Vec<Complex64> = coeffs.iter().map(|c| c / lead).collect();
    let eval = |z: Complex64| monic.iter().rev().fold(Complex64::new(0.0, 0.0), |acc, c| acc * z + c);
    let deriv = |z: Complex64| {
        monic
            .iter()
            .enumerate()
            .skip(1)
            .rev()
            .fold(Complex64::new(0.0, 0.0), |acc, (k, c)| acc * z + c * k as f64)
    };

    // Durand-Kerner
    let seed = Complex64::new(0.4, 0.9);
    let mut roots: Vec<Complex64> = (0..degree).map(|k| seed.powu(k as u32)).collect();
    for _ in 0..1000 {
        let mut moved = 0.0f64;
        for i in 0..degree {
            let zi = roots[i];
            let denom = (0..degree)
                .filter(|j| *j != i)
                .fold(Complex64::new(1.0, 0.0), |acc, j| acc * (zi - roots[j]));
            let step = eval(zi) / denom;
            roots[i] = zi - step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 {
            break;
        }
    }
    // Newton polish
    for r in roots.iter_mut() {
        for _ in 0..5 {
            let d = deriv(*r);
            if d.norm() == 0.0 {
                break;
            }
            *r -= eval(*r) / d;
        }
    }
    roots
}

fn poly_mul(a: &[Complex64], b: &[Complex64]) -> Vec<Complex64> {
    let mut out = vec![Complex64::new(0.0, 0.0); a.len() + b.len() - 1];
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            out[i + j] += x * y;
        }
    }
    out
}

/// Decomposition lowpass taps of the Daubechies wavelet with `moments`
/// vanishing moments.
pub fn daubechies_lowpass(moments: usize) -> Result<Vec<f64>> {
    if moments == 0 || moments > 10 {
        return Err(Error::InvalidArgument(format!(
            "Daubechies order must be in 1..=10, got {moments}"
        )));
    }
    let p: Vec<Complex64> = (0..moments)
        .map(|k| Complex64::new(binomial(moments - 1 + k, k), 0.0))
        .collect();
    let mut poly = vec![Complex64::new(1.0, 0.0)];
    for y in poly_roots(&p) {
        // z + 1/z = 2 - 4y
        let b = Complex64::new(2.0, 0.0) - y * 4.0;
        let disc = (b * b - 4.0).sqrt();
        let z1 = (b + disc) / 2.0;
        let z2 = (b - disc) / 2.0;
        let z = if z1.norm() < z2.norm() { z1 } else { z2 };
        poly = poly_mul(&poly, &[-z, Complex64::new(1.0, 0.0)]);
    }
    let one_plus_z = [Complex64::new(1.0, 0.0), Complex64::new(1.0, 0.0)];
    for _ in 0..moments {
        poly = poly_mul(&poly, &one_plus_z);
    }
    let sum: f64 = poly.iter().map(|c| c.re).sum();
    let scale = std::f64::consts::SQRT_2 / sum;
    // ascending powers of z: the analysis ordering (synthesis is the reverse)
    let taps: Vec<f64> = poly.iter().map(|c| c.re * scale).collect();
    Ok(taps)
}

fn symmetric_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let mut m = i.rem_euclid(period);
    if m >= n {
        m = period - 1 - m;
    }
    m as usize
}

/// One level of analysis: `(approximation, detail)`.
pub fn dwt_step(signal: &[f64], spec: &WaveletSpec) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = signal.len();
    spec.check_step_input(n)?;
    let out_len = spec.output_len(n);
    let mut approx = vec![0.0; out_len];
    let mut detail = vec![0.0; out_len];
    for k in 0..out_len {
        let centre = 2 * k as isize + 1;
        let mut a = 0.0;
        let mut d = 0.0;
        for (j, (h, g)) in spec.lowpass.iter().zip(&spec.highpass).enumerate() {
            let i = centre - j as isize;
            let x = match spec.boundary {
                BoundaryMode::Periodic => signal[i.rem_euclid(n as isize) as usize],
                BoundaryMode::Symmetric => signal[symmetric_index(i, n)],
            };
            a += h * x;
            d += g * x;
        }
        approx[k] = a;
        detail[k] = d;
    }
    Ok((approx, detail))
}

/// One level of synthesis back to `out_len` samples.
pub fn idwt_step(approx: &[f64], detail: &[f64], out_len: usize, spec: &WaveletSpec) -> Result<Vec<f64>> {
    if approx.len() != detail.len() {
        return Err(Error::LengthMismatch {
            what: "idwt_step coefficient bands",
            left: approx.len(),
            right: detail.len(),
        });
    }
    let expected = spec.output_len(out_len);
    if approx.len() != expected {
        return Err(Error::LengthMismatch {
            what: "idwt_step band length",
            left: approx.len(),
            right: expected,
        });
    }
    let f = spec.filter_len() as isize;
    let mut out = vec![0.0; out_len];
    match spec.boundary {
        BoundaryMode::Periodic => {
            let n = out_len as isize;
            for (k, (a, d)) in approx.iter().zip(detail).enumerate() {
                let centre = 2 * k as isize + 1;
                for j in 0..f {
                    let i = (centre - j).rem_euclid(n) as usize;
                    out[i] += spec.lowpass[j as usize] * a + spec.highpass[j as usize] * d;
                }
            }
        }
        BoundaryMode::Symmetric => {
            for (n, slot) in out.iter_mut().enumerate() {
                let n = n as isize;
                // taps j = 2k + 1 - n must lie in [0, F)
                let k_lo = (n).div_euclid(2).max(0);
                let k_hi = ((n + f - 2).div_euclid(2)).min(approx.len() as isize - 1);
                let mut acc = 0.0;
                for k in k_lo..=k_hi {
                    let j = 2 * k + 1 - n;
                    if (0..f).contains(&j) {
                        let k = k as usize;
                        acc += spec.lowpass[j as usize] * approx[k] + spec.highpass[j as usize] * detail[k];
                    }
                }
                *slot = acc;
            }
        }
    }
    Ok(out)
}

/// Multi-level coefficient pyramid.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveletCoeffs {
    /// Approximation at the coarsest level.
    pub approx: Vec<f64>,
    /// Detail bands, finest (level 1) first.
    pub details: Vec<Vec<f64>>,
    pub original_length: usize,
    pub levels: usize,
}

impl WaveletCoeffs {
    /// Total energy of all coefficients.
    pub fn energy(&self) -> f64 {
        self.approx
            .iter()
            .chain(self.details.iter().flatten())
            .map(|c| c * c)
            .sum()
    }
}

/// Signal length entering each analysis level.
fn level_lengths(n: usize, levels: usize, spec: &WaveletSpec) -> Vec<usize> {
    let mut lengths = Vec::with_capacity(levels + 1);
    let mut len = n;
    for _ in 0..=levels {
        lengths.push(len);
        len = spec.output_len(len);
    }
    lengths
}

pub fn wavedec(signal: &[f64], spec: &WaveletSpec, levels: usize) -> Result<WaveletCoeffs> {
    if levels == 0 {
        return Err(Error::InvalidArgument("wavedec needs at least one level".into()));
    }
    let max = spec.max_level(signal.len());
    if levels > max {
        return Err(Error::TooManyLevels {
            requested: levels,
            max,
            len: signal.len(),
        });
    }
    let mut details = Vec::with_capacity(levels);
    let mut approx = signal.to_vec();
    for _ in 0..levels {
        let (a, d) = dwt_step(&approx, spec)?;
        details.push(d);
        approx = a;
    }
    Ok(WaveletCoeffs {
        approx,
        details,
        original_length: signal.len(),
        levels,
    })
}

pub fn waverec(coeffs: &WaveletCoeffs, spec: &WaveletSpec) -> Result<Vec<f64>> {
    if coeffs.levels == 0 || coeffs.details.len() != coeffs.levels {
        return Err(Error::InvalidArgument(format!(
            "coefficient pyramid declares {} levels but holds {} detail bands",
            coeffs.levels,
            coeffs.details.len()
        )));
    }
    let lengths = level_lengths(coeffs.original_length, coeffs.levels, spec);
    for (j, d) in coeffs.details.iter().enumerate() {
        if d.len() != lengths[j + 1] {
            return Err(Error::LengthMismatch {
                what: "detail band",
                left: d.len(),
                right: lengths[j + 1],
            });
        }
    }
    if coeffs.approx.len() != lengths[coeffs.levels] {
        return Err(Error::LengthMismatch {
            what: "approximation band",
            left: coeffs.approx.len(),
            right: lengths[coeffs.levels],
        });
    }
    let mut approx = coeffs.approx.clone();
    for j in (0..coeffs.levels).rev() {
        approx = idwt_step(&approx, &coeffs.details[j], lengths[j], spec)?;
    }
    Ok(approx)
}

/// Zero the finest `levels - keep_detail_levels` detail bands.
pub fn denoise_lowpass(coeffs: &WaveletCoeffs, keep_detail_levels: usize) -> Result<WaveletCoeffs> {
    if keep_detail_levels > coeffs.levels {
        return Err(Error::InvalidArgument(format!(
            "keep_detail_levels {keep_detail_levels} exceeds {} levels",
            coeffs.levels
        )));
    }
    let cut = coeffs.levels - keep_detail_levels;
    let mut out = coeffs.clone();
    for band in out.details.iter_mut().take(cut) {
        band.iter_mut().for_each(|c| *c = 0.0);
    }
    Ok(out)
}

/// Additive multiresolution decomposition at full input length.
///
/// Row 0 is reconstructed from the approximation alone, row `j` from detail
/// level `j` alone. The rows sum to the input.
pub fn feature_channels(signal: &[f64], spec: &WaveletSpec, levels: usize) -> Result<Vec<Vec<f64>>> {
    let coeffs = wavedec(signal, spec, levels)?;
    let zeroed = WaveletCoeffs {
        approx: vec![0.0; coeffs.approx.len()],
        details: coeffs.details.iter().map(|d| vec![0.0; d.len()]).collect(),
        original_length: coeffs.original_length,
        levels,
    };
    let mut rows = Vec::with_capacity(levels + 1);
    let mut only_approx = zeroed.clone();
    only_approx.approx.clone_from(&coeffs.approx);
    rows.push(waverec(&only_approx, spec)?);
    for j in 0..levels {
        let mut only_detail = zeroed.clone();
        only_detail.details[j].clone_from(&coeffs.details[j]);
        rows.push(waverec(&only_detail, spec)?);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    /// Analysis by explicit circular convolution, written independently of
    /// `dwt_step`: y = (x ⊛ h) sampled at odd positions.
    fn circular_oracle(x: &[f64], h: &[f64]) -> Vec<f64> {
        let n = x.len();
        let full: Vec<f64> = (0..n)
            .map(|m| {
                (0..h.len())
                    .map(|j| h[j] * x[(m + n * h.len() - j) % n])
                    .sum()
            })
            .collect();
        full.iter().skip(1).step_by(2).copied().collect()
    }

    #[test]
    fn db4_filter_bank_identities() {
        let spec = WaveletSpec::db4(BoundaryMode::Periodic);
        assert_eq!(spec.filter_len(), 8);
        let h = &spec.lowpass;
        assert!((h.iter().sum::<f64>() - std::f64::consts::SQRT_2).abs() < 1e-12);
        assert!(spec.highpass.iter().sum::<f64>().abs() < 1e-12);
        assert!((h.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        for k in 1..4 {
            let s: f64 = (0..8 - 2 * k).map(|n| h[n] * h[n + 2 * k]).sum();
            assert!(s.abs() < 1e-12, "shift {k}: {s}");
        }
        assert!(spec.qmf_residual() < 1e-12);
        // four vanishing moments on the highpass side
        for p in 0..4 {
            let m: f64 = spec
                .highpass
                .iter()
                .enumerate()
                .map(|(n, g)| (n as f64).powi(p) * g)
                .sum();
            assert!(m.abs() < 1e-9, "moment {p}: {m}");
        }
    }

    #[test]
    fn db2_matches_closed_form() {
        let s3 = 3f64.sqrt();
        let d = 4.0 * 2f64.sqrt();
        let expected = [(1.0 + s3) / d, (3.0 + s3) / d, (3.0 - s3) / d, (1.0 - s3) / d];
        let got = daubechies_lowpass(2).unwrap();
        for (g, e) in got.iter().rev().zip(expected) {
            assert!((g - e).abs() < 1e-14);
        }
        let haar = daubechies_lowpass(1).unwrap();
        assert!((haar[0] - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
    }

    #[test]
    fn db4_agrees_with_tabulated_scaling_filter() {
        let table = [
            0.230_377_813_308_896_4,
            0.714_846_570_552_915_4,
            0.630_880_767_929_858_7,
            -0.027_983_769_416_859_9,
            -0.187_034_811_719_093_1,
            0.030_841_381_835_560_7,
            0.032_883_011_666_885_2,
            -0.010_597_401_785_069_0,
        ];
        let got = daubechies_lowpass(4).unwrap();
        for (g, t) in got.iter().rev().zip(table) {
            assert!((g - t).abs() < 1e-12, "{g} vs {t}");
        }
    }

    #[test]
    fn higher_orders_are_orthonormal() {
        for m in 1..=10 {
            let spec = WaveletSpec::daubechies(m, BoundaryMode::Periodic).unwrap();
            assert!(spec.qmf_residual() < 1e-10, "db{m}: {}", spec.qmf_residual());
        }
        assert!(WaveletSpec::from_name("db11", BoundaryMode::Periodic).is_err());
        assert!(WaveletSpec::from_name("sym4", BoundaryMode::Periodic).is_err());
        assert_eq!(WaveletSpec::from_name("db4", BoundaryMode::Symmetric).unwrap().name, "db4");
    }

    #[test]
    fn constant_signal_step() {
        let spec = WaveletSpec::db4(BoundaryMode::Periodic);
        let (a, d) = dwt_step(&[2.5; 8], &spec).unwrap();
        assert_eq!(a.len(), 4);
        for (a, d) in a.iter().zip(&d) {
            assert!((a - 2.5 * std::f64::consts::SQRT_2).abs() < 1e-12);
            assert!(d.abs() < 1e-12);
        }
        let (a, d) = dwt_step(&[0.0; 8], &spec).unwrap();
        assert!(a.iter().chain(&d).all(|c| *c == 0.0));
    }

    #[test]
    fn step_matches_convolution_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let spec = WaveletSpec::db4(BoundaryMode::Periodic);
        let x = random_signal(&mut rng, 16);
        let (a, d) = dwt_step(&x, &spec).unwrap();
        let oa = circular_oracle(&x, &spec.lowpass);
        let od = circular_oracle(&x, &spec.highpass);
        for i in 0..8 {
            assert!((a[i] - oa[i]).abs() < 1e-12);
            assert!((d[i] - od[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_rejects_short_or_odd_input() {
        let sym = WaveletSpec::db4(BoundaryMode::Symmetric);
        match dwt_step(&[1.0; 5], &sym) {
            Err(Error::SignalTooShort { min, .. }) => assert_eq!(min, 8),
            other => panic!("unexpected {other:?}"),
        }
        let per = WaveletSpec::db4(BoundaryMode::Periodic);
        assert!(dwt_step(&[1.0; 7], &per).is_err());
        assert!(dwt_step(&[1.0], &per).is_err());
        assert!(dwt_step(&[1.0, 2.0], &per).is_ok());
    }

    #[test]
    fn wavedec_shapes_and_level_limit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let spec = WaveletSpec::db4(BoundaryMode::Periodic);
        let x = random_signal(&mut rng, 64);
        let c = wavedec(&x, &spec, 3).unwrap();
        let lens: Vec<usize> = c.details.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![32, 16, 8]);
        assert_eq!(c.approx.len(), 8);

        let one = wavedec(&x, &spec, 1).unwrap();
        let (a, d) = dwt_step(&x, &spec).unwrap();
        assert_eq!(one.approx, a);
        assert_eq!(one.details[0], d);

        match wavedec(&x, &spec, 7) {
            Err(Error::TooManyLevels { max, .. }) => assert_eq!(max, 6),
            other => panic!("unexpected {other:?}"),
        }
        let sym = WaveletSpec::db4(BoundaryMode::Symmetric);
        // 64 -> 35 -> 21 -> 14 -> 10 -> 8 -> 7
        assert_eq!(sym.max_level(64), 6);
        assert!(wavedec(&x, &sym, 0).is_err());
    }

    #[test]
    fn impulse_cascade_matches_oracle() {
        let spec = WaveletSpec::db4(BoundaryMode::Periodic);
        let mut x = vec![0.0; 32];
        x[0] = 1.0;
        let c = wavedec(&x, &spec, 2).unwrap();
        let a1 = circular_oracle(&x, &spec.lowpass);
        let d1 = circular_oracle(&x, &spec.highpass);
        let a2 = circular_oracle(&a1, &spec.lowpass);
        let d2 = circular_oracle(&a1, &spec.highpass);
        for (c, o) in c.details[0].iter().zip(&d1) {
            assert!((c - o).abs() < 1e-12);
        }
        for (c, o) in c.details[1].iter().zip(&d2) {
            assert!((c - o).abs() < 1e-12);
        }
        for (c, o) in c.approx.iter().zip(&a2) {
            assert!((c - o).abs() < 1e-12);
        }
    }

    #[test]
    fn perfect_reconstruction_both_modes() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for trial in 0..100 {
            let levels = 1 + trial % 3;
            for mode in [BoundaryMode::Periodic, BoundaryMode::Symmetric] {
                let spec = WaveletSpec::db4(mode);
                let mut n = rng.random_range(32..=512);
                if mode == BoundaryMode::Periodic {
                    n -= n % 8;
                }
                let x = random_signal(&mut rng, n);
                let c = wavedec(&x, &spec, levels).unwrap();
                let y = waverec(&c, &spec).unwrap();
                assert_eq!(y.len(), n);
                let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "{mode:?} n={n} J={levels}: {err}");
                if mode == BoundaryMode::Periodic {
                    let ex: f64 = x.iter().map(|v| v * v).sum();
                    assert!((c.energy() - ex).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn reconstruction_small_cases() {
        let spec = WaveletSpec::db4(BoundaryMode::Periodic);
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let y = waverec(&wavedec(&x, &spec, 1).unwrap(), &spec).unwrap();
        for (a, b) in x.iter().zip(&y) {
            assert!((a - b).abs() < 1e-12);
        }
        let zero = WaveletCoeffs {
            approx: vec![0.0; 4],
            details: vec![vec![0.0; 4]],
            original_length: 8,
            levels: 1,
        };
        assert_eq!(waverec(&zero, &spec).unwrap(), vec![0.0; 8]);
        let mut bad = zero.clone();
        bad.details[0].pop();
        assert!(matches!(waverec(&bad, &spec), Err(Error::LengthMismatch { .. })));
        let mut bad = zero;
        bad.levels = 2;
        assert!(waverec(&bad, &spec).is_err());
    }

    #[test]
    fn transform_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let spec = WaveletSpec::db4(BoundaryMode::Symmetric);
        let x = random_signal(&mut rng, 100);
        let y = random_signal(&mut rng, 100);
        let (alpha, beta) = (1.7, -0.4);
        let z: Vec<f64> = x.iter().zip(&y).map(|(a, b)| alpha * a + beta * b).collect();
        let cx = wavedec(&x, &spec, 3).unwrap();
        let cy = wavedec(&y, &spec, 3).unwrap();
        let cz = wavedec(&z, &spec, 3).unwrap();
        let flat = |c: &WaveletCoeffs| -> Vec<f64> {
            c.approx.iter().chain(c.details.iter().flatten()).copied().collect()
        };
        for ((a, b), c) in flat(&cx).iter().zip(flat(&cy)).zip(flat(&cz)) {
            assert!((alpha * a + beta * b - c).abs() < 1e-10);
        }
    }

    #[test]
    fn denoise_levels() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let spec = WaveletSpec::db4(BoundaryMode::Periodic);
        let x = random_signal(&mut rng, 64);
        let c = wavedec(&x, &spec, 3).unwrap();
        assert_eq!(denoise_lowpass(&c, 3).unwrap(), c);
        let all = denoise_lowpass(&c, 0).unwrap();
        let rows = feature_channels(&x, &spec, 3).unwrap();
        let approx_only = waverec(&all, &spec).unwrap();
        for (a, b) in approx_only.iter().zip(&rows[0]) {
            assert!((a - b).abs() < 1e-12);
        }
        let keep1 = denoise_lowpass(&c, 1).unwrap();
        assert!(keep1.details[0].iter().chain(&keep1.details[1]).all(|v| *v == 0.0));
        assert_eq!(keep1.details[2], c.details[2]);
        assert!(denoise_lowpass(&c, 4).is_err());
    }

    #[test]
    fn lowpass_denoising_improves_snr() {
        use rand_distr::{Distribution, Normal};
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let noise = Normal::new(0.0, 0.5).unwrap();
        let n = 256;
        let clean: Vec<f64> = (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * i as f64 / 128.0).sin())
            .collect();
        let noisy: Vec<f64> = clean.iter().map(|c| c + noise.sample(&mut rng)).collect();
        let spec = WaveletSpec::db4(BoundaryMode::Symmetric);
        let c = wavedec(&noisy, &spec, 3).unwrap();
        let den = waverec(&denoise_lowpass(&c, 1).unwrap(), &spec).unwrap();
        let mse = |a: &[f64]| a.iter().zip(&clean).map(|(x, y)| (x - y).powi(2)).sum::<f64>() / n as f64;
        assert!(mse(&den) < mse(&noisy), "{} vs {}", mse(&den), mse(&noisy));
    }

    #[test]
    fn feature_rows_are_additive_and_orthogonal() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for mode in [BoundaryMode::Periodic, BoundaryMode::Symmetric] {
            let spec = WaveletSpec::db4(mode);
            let x = random_signal(&mut rng, 64);
            let rows = feature_channels(&x, &spec, 2).unwrap();
            assert_eq!(rows.len(), 3);
            assert!(rows.iter().all(|r| r.len() == 64));
            for i in 0..64 {
                let s: f64 = rows.iter().map(|r| r[i]).sum();
                assert!((s - x[i]).abs() < 1e-9);
            }
            if mode == BoundaryMode::Periodic {
                let norm: f64 = x.iter().map(|v| v * v).sum();
                for a in 0..rows.len() {
                    for b in a + 1..rows.len() {
                        let dot: f64 = rows[a].iter().zip(&rows[b]).map(|(p, q)| p * q).sum();
                        assert!(dot.abs() < 1e-6 * norm);
                    }
                }
            }
        }
        let spec = WaveletSpec::db4(BoundaryMode::Symmetric);
        let rows = feature_channels(&[4.2; 64], &spec, 3).unwrap();
        for v in &rows[0] {
            assert!((v - 4.2).abs() < 1e-9);
        }
        assert!(rows[1..].iter().flatten().all(|v| v.abs() < 1e-9));
    }
}
