//! Feature families, target functions and the label model.
//!
//! The Fourier family is the bounded orthonormal system `e^{j 2 pi l x}` on
//! `[0, 1]`. Sampled families draw independent zero-mean unit-variance
//! coordinates per (point, feature) from a counter-based stream.

use std::f64::consts::{PI, SQRT_2};
use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::spectrum::{BiLevelParams, Level, SpectrumModel};

/// How one-sided bi-level indices map onto symmetric Fourier frequencies.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FourierIndexing {
    /// Index `l` and its mirror `-l` share `lambda_l`: favored `|l| <= p`,
    /// residual `p < |l| <= d`, `lambda_0` favored.
    #[default]
    Mirrored,
    /// Symmetric pairs counted twice: `p_half = round((n^r - 1) / 2)`,
    /// `d_half = (d - 1) / 2`.
    Halved,
}

impl std::str::FromStr for FourierIndexing {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mirrored" => Ok(Self::Mirrored),
            "halved" => Ok(Self::Halved),
            other => Err(Error::domain(format!("unknown fourier indexing `{other}`"))),
        }
    }
}

/// Fourier features `v_l(x) = e^{j 2 pi l x}` for `|l| <= d_half`, favored for `|l| <= p_half`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FourierMap {
    pub p_half: usize,
    pub d_half: usize,
}

impl FourierMap {
    pub fn new(p_half: usize, d_half: usize) -> Result<Self> {
        if d_half < p_half {
            return Err(Error::domain(format!(
                "max frequency {d_half} below favored frequency {p_half}"
            )));
        }
        Ok(Self { p_half, d_half })
    }

    pub fn for_bilevel(
        params: &BiLevelParams,
        support_half: usize,
        indexing: FourierIndexing,
    ) -> Result<Self> {
        params.validate()?;
        let (p_half, d_half) = match indexing {
            FourierIndexing::Mirrored => (support_half.max(params.p()), params.d()),
            FourierIndexing::Halved => {
                let leading = (params.n as f64).powf(params.r);
                let half = ((leading - 1.0) / 2.0).round().max(0.0) as usize;
                (support_half.max(half), (params.d() - 1) / 2)
            }
        };
        if d_half <= p_half {
            return Err(Error::domain(format!(
                "no residual frequencies: d_half = {d_half}, p_half = {p_half}"
            )));
        }
        Self::new(p_half, d_half)
    }

    pub fn favored_count(&self) -> usize {
        2 * self.p_half + 1
    }

    pub fn total_count(&self) -> usize {
        2 * self.d_half + 1
    }

    /// Symmetric two-level spectrum over all `2 d_half + 1` frequencies.
    pub fn bilevel_spectrum(&self, residual_eigenvalue: f64) -> Result<SpectrumModel> {
        SpectrumModel::from_levels(
            vec![
                Level {
                    value: 1.0,
                    count: self.favored_count(),
                },
                Level {
                    value: residual_eigenvalue,
                    count: self.total_count() - self.favored_count(),
                },
            ],
            self.favored_count(),
        )
    }

    /// `e^{j 2 pi l x}` for each requested frequency.
    pub fn evaluate_features(&self, x: f64, indices: &[i64]) -> Vec<Complex64> {
        indices
            .iter()
            .map(|&l| {
                let (s, c) = sin_cos_2pi(l as f64 * x);
                Complex64::new(c, s)
            })
            .collect()
    }

    /// Real orthonormal basis of the favored span:
    /// `[1, sqrt2 cos(2 pi x), sqrt2 sin(2 pi x), ..., sqrt2 sin(2 pi p_half x)]`.
    pub fn leading_real_basis(&self, x: f64) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.favored_count());
        out.push(1.0);
        for l in 1..=self.p_half {
            let (s, c) = sin_cos_2pi(l as f64 * x);
            out.push(SQRT_2 * c);
            out.push(SQRT_2 * s);
        }
        out
    }
}

/// `(sin 2 pi t, cos 2 pi t)` with the argument reduced to `[-1/2, 1/2]` first.
pub(crate) fn sin_cos_2pi(t: f64) -> (f64, f64) {
    let reduced = t - t.round();
    (2.0 * PI * reduced).sin_cos()
}

/// Position of frequency `l` among the favored eigen-indices `[0, 1, -1, 2, -2, ...]`.
pub fn leading_index(l: i64) -> usize {
    match l {
        0 => 0,
        l if l > 0 => (2 * l - 1) as usize,
        l => (2 * -l) as usize,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Gaussian,
    Rademacher,
}

impl std::str::FromStr for FeatureKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(Self::Gaussian),
            "rademacher" => Ok(Self::Rademacher),
            other => Err(Error::domain(format!("unknown feature kind `{other}`"))),
        }
    }
}

/// Independent zero-mean unit-variance coordinates `v_1(x), ..., v_d(x)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubGaussianFamily {
    pub kind: FeatureKind,
    pub d: usize,
}

// Each draw consumes exactly two u64 words (four 32-bit words), so draw
// (point, feature) sits at a fixed position in the point's ChaCha stream.
const WORDS_PER_DRAW: u128 = 4;

impl SubGaussianFamily {
    pub fn new(kind: FeatureKind, d: usize) -> Self {
        Self { kind, d }
    }

    fn draw(kind: FeatureKind, rng: &mut ChaCha8Rng) -> f64 {
        let a = rng.next_u64();
        let b = rng.next_u64();
        match kind {
            FeatureKind::Rademacher => {
                if a >> 63 == 1 {
                    1.0
                } else {
                    -1.0
                }
            }
            // Box-Muller with a fixed word budget; ziggurat samplers consume a
            // variable number of words and would break counter addressing.
            FeatureKind::Gaussian => {
                let u1 = ((a >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64);
                let u2 = (b >> 11) as f64 * (1.0 / (1u64 << 53) as f64);
                (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
            }
        }
    }

    /// `n_points x |block|` matrix of draws for features `block` (zero-based).
    pub fn sample_block(&self, n_points: usize, block: Range<usize>, seed: u64) -> Result<DMatrix<f64>> {
        self.sample_block_from(0, n_points, block, seed)
    }

    /// Like [`Self::sample_block`] for points `first_point..first_point + n_points`.
    pub fn sample_block_from(
        &self,
        first_point: usize,
        n_points: usize,
        block: Range<usize>,
        seed: u64,
    ) -> Result<DMatrix<f64>> {
        if block.end > self.d || block.start > block.end {
            return Err(Error::domain(format!(
                "feature block {block:?} outside [0, {})",
                self.d
            )));
        }
        let width = block.end - block.start;
        let mut out = DMatrix::zeros(n_points, width);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..n_points {
            rng.set_stream((first_point + i) as u64);
            rng.set_word_pos(block.start as u128 * WORDS_PER_DRAW);
            for j in 0..width {
                out[(i, j)] = Self::draw(self.kind, &mut rng);
            }
        }
        Ok(out)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "basis", rename_all = "lowercase")]
pub enum TargetBasis {
    /// Coefficients indexed by frequency `-h..=h`.
    Fourier { support_half: usize },
    /// Coefficients on the first leading sampled features; the sup is taken
    /// over a reference sample of feature vectors.
    Sampled { kind: FeatureKind, reference_seed: u64 },
}

/// `eta*` as a finite expansion over leading eigenfunctions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFunction {
    pub basis: TargetBasis,
    pub coefficients: Vec<Complex64>,
    /// Factor the raw draw was multiplied by during normalization.
    pub scale: f64,
}

impl TargetFunction {
    /// Fourier target from coefficients `c_{-h}, ..., c_h`.
    pub fn fourier(coefficients: Vec<Complex64>) -> Result<Self> {
        if coefficients.len() % 2 == 0 {
            return Err(Error::domain("fourier coefficients need odd length 2h + 1"));
        }
        let support_half = coefficients.len() / 2;
        Ok(Self {
            basis: TargetBasis::Fourier { support_half },
            coefficients,
            scale: 1.0,
        })
    }

    pub fn sampled(kind: FeatureKind, reference_seed: u64, coefficients: Vec<f64>) -> Self {
        Self {
            basis: TargetBasis::Sampled {
                kind,
                reference_seed,
            },
            coefficients: coefficients.into_iter().map(|c| Complex64::new(c, 0.0)).collect(),
            scale: 1.0,
        }
    }

    /// Number of leading eigen-indices the coefficients touch.
    pub fn leading_len(&self) -> usize {
        self.coefficients.len()
    }

    pub fn eval_complex(&self, x: f64) -> Complex64 {
        match self.basis {
            TargetBasis::Fourier { support_half } => {
                let h = support_half as i64;
                (-h..=h)
                    .zip(&self.coefficients)
                    .map(|(l, c)| {
                        let (s, co) = sin_cos_2pi(l as f64 * x);
                        c * Complex64::new(co, s)
                    })
                    .sum()
            }
            TargetBasis::Sampled { .. } => Complex64::new(f64::NAN, 0.0),
        }
    }

    /// `eta*(x)` for a Fourier target.
    pub fn eval(&self, x: f64) -> f64 {
        self.eval_complex(x).re
    }

    /// `eta*` at a point whose leading feature vector is `leading`.
    pub fn eval_features(&self, leading: &[f64]) -> f64 {
        self.coefficients
            .iter()
            .zip(leading)
            .map(|(c, v)| c.re * v)
            .sum()
    }

    /// Target with each eigen-coefficient scaled by `weights[leading index]`.
    pub fn weighted(&self, weights: &[f64]) -> Result<Self> {
        if weights.len() < self.leading_len() {
            return Err(Error::domain(format!(
                "target touches {} leading indices, weights cover {}",
                self.leading_len(),
                weights.len()
            )));
        }
        let coefficients = match self.basis {
            TargetBasis::Fourier { support_half } => {
                let h = support_half as i64;
                (-h..=h)
                    .zip(&self.coefficients)
                    .map(|(l, c)| c * weights[leading_index(l)])
                    .collect()
            }
            TargetBasis::Sampled { .. } => self
                .coefficients
                .iter()
                .zip(weights)
                .map(|(c, w)| c * *w)
                .collect(),
        };
        Ok(Self {
            basis: self.basis.clone(),
            coefficients,
            scale: self.scale,
        })
    }

    /// Real coefficients in the leading basis order, padded with zeros to `p`.
    ///
    /// Fourier targets map to `[1, sqrt2 cos, sqrt2 sin, ...]` as produced by
    /// [`FourierMap::leading_real_basis`].
    pub fn leading_coefficients(&self, p: usize) -> Result<Vec<f64>> {
        if self.leading_len() > p {
            return Err(Error::domain(format!(
                "target touches {} leading indices, only {p} available",
                self.leading_len()
            )));
        }
        let mut out = vec![0.0; p];
        match self.basis {
            TargetBasis::Fourier { support_half } => {
                let h = support_half;
                out[0] = self.coefficients[h].re;
                for l in 1..=h {
                    let c = self.coefficients[h + l];
                    out[2 * l - 1] = SQRT_2 * c.re;
                    out[2 * l] = -SQRT_2 * c.im;
                }
            }
            TargetBasis::Sampled { .. } => {
                for (o, c) in out.iter_mut().zip(&self.coefficients) {
                    *o = c.re;
                }
            }
        }
        Ok(out)
    }

    /// Reference feature vectors standing in for an evaluation grid.
    pub fn reference_features(kind: FeatureKind, reference_seed: u64, dim: usize, size: usize) -> DMatrix<f64> {
        SubGaussianFamily::new(kind, dim)
            .sample_block(size, 0..dim, reference_seed)
            .expect("block within family")
    }

    /// `max |eta*|` over `grid_size` equispaced points of `[0, 1)`, with each
    /// grid peak refined by golden-section search (Fourier), or over
    /// `grid_size` reference feature vectors (sampled).
    pub fn grid_sup(&self, grid_size: usize) -> f64 {
        match self.basis {
            TargetBasis::Fourier { .. } => self.fourier_sup(grid_size),
            TargetBasis::Sampled {
                kind,
                reference_seed,
            } => {
                let reference =
                    Self::reference_features(kind, reference_seed, self.leading_len(), grid_size);
                (0..grid_size)
                    .map(|i| {
                        let row: Vec<f64> = reference.row(i).iter().copied().collect();
                        self.eval_features(&row).abs()
                    })
                    .fold(0.0, f64::max)
            }
        }
    }

    fn fourier_sup(&self, grid_size: usize) -> f64 {
        let g = grid_size as f64;
        let abs_at = |x: f64| self.eval(x).abs();
        let values: Vec<f64> = (0..grid_size).map(|k| abs_at(k as f64 / g)).collect();
        let grid_max = values.iter().copied().fold(0.0, f64::max);
        if !(grid_max > 0.0) || grid_size < 3 {
            return grid_max;
        }
        let mut best = grid_max;
        for k in 0..grid_size {
            let prev = values[(k + grid_size - 1) % grid_size];
            let next = values[(k + 1) % grid_size];
            if values[k] >= prev && values[k] >= next && values[k] >= 0.5 * grid_max {
                best = best.max(golden_max(abs_at, (k as f64 - 1.0) / g, (k as f64 + 1.0) / g));
            }
        }
        best
    }

    pub fn max_imag_on_grid(&self, grid_size: usize) -> f64 {
        (0..grid_size)
            .map(|k| self.eval_complex(k as f64 / grid_size as f64).im.abs())
            .fold(0.0, f64::max)
    }

    /// Rescale so the grid sup of `|eta*|` sits just below 1.
    pub fn normalized(mut self, grid_size: usize) -> Self {
        let sup = self.grid_sup(grid_size);
        if sup > 0.0 {
            let factor = 1.0 / (sup * (1.0 + 1e-9));
            for c in &mut self.coefficients {
                *c *= factor;
            }
            self.scale *= factor;
        }
        self
    }
}

/// Maximum of a unimodal `f` on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let ratio = (5f64.sqrt() - 1.0) / 2.0;
    let mut a = hi - ratio * (hi - lo);
    let mut b = lo + ratio * (hi - lo);
    let (mut fa, mut fb) = (f(a), f(b));
    for _ in 0..80 {
        if fa < fb {
            lo = a;
            a = b;
            fa = fb;
            b = lo + ratio * (hi - lo);
            fb = f(b);
        } else {
            hi = b;
            b = a;
            fb = fa;
            a = hi - ratio * (hi - lo);
            fa = f(a);
        }
    }
    fa.max(fb)
}

/// Random Fourier target on frequencies `-support_half..=support_half` with
/// standard normal real/imaginary parts and conjugate symmetry.
pub fn sample_target(
    rng_seed: u64,
    support_half: usize,
    grid_size: usize,
    map: &FourierMap,
) -> Result<TargetFunction> {
    if support_half > map.p_half {
        return Err(Error::domain(format!(
            "target support {support_half} exceeds favored frequencies {}",
            map.p_half
        )));
    }
    let mut rng = seed::rng(rng_seed);
    let h = support_half;
    let mut coefficients = vec![Complex64::new(0.0, 0.0); 2 * h + 1];
    coefficients[h] = Complex64::new(rng.sample(StandardNormal), 0.0);
    for l in 1..=h {
        let c = Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal));
        coefficients[h + l] = c;
        coefficients[h - l] = c.conj();
    }
    Ok(TargetFunction::fourier(coefficients)?.normalized(grid_size))
}

/// Random target over the first `support` leading features of a sampled family.
pub fn sample_sampled_target(
    rng_seed: u64,
    kind: FeatureKind,
    support: usize,
    grid_size: usize,
) -> TargetFunction {
    let mut rng = seed::rng(rng_seed);
    let coefficients = (0..support).map(|_| rng.sample(StandardNormal)).collect();
    let reference_seed = seed::derive(rng_seed, &[seed::tag::REFERENCE]);
    TargetFunction::sampled(kind, reference_seed, coefficients).normalized(grid_size)
}

/// Labels drawn from `P(y = 1 | x) = (1 + eta*(x)) / 2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabeledSample {
    pub labels: Vec<f64>,
    pub eta: Vec<f64>,
    pub noise: Vec<f64>,
}

impl LabeledSample {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

pub fn labels_from_eta(eta: &[f64], rng_seed: u64) -> Result<LabeledSample> {
    if let Some((index, &value)) = eta
        .iter()
        .enumerate()
        .find(|(_, v)| !(v.abs() <= 1.0 + 1e-9))
    {
        return Err(Error::ModelViolation { index, value });
    }
    let mut rng = seed::rng(rng_seed);
    let labels: Vec<f64> = eta
        .iter()
        .map(|&e| {
            let u: f64 = rng.random();
            if u < (1.0 + e) / 2.0 {
                1.0
            } else {
                -1.0
            }
        })
        .collect();
    let noise = labels.iter().zip(eta).map(|(y, e)| y - e).collect();
    Ok(LabeledSample {
        labels,
        eta: eta.to_vec(),
        noise,
    })
}

/// Labels for Fourier sample points.
pub fn sample_labels(target: &TargetFunction, points: &[f64], rng_seed: u64) -> Result<LabeledSample> {
    let eta: Vec<f64> = points.iter().map(|&x| target.eval(x)).collect();
    labels_from_eta(&eta, rng_seed)
}

/// `n` points uniform on `[0, 1)`.
pub fn uniform_points(n: usize, rng_seed: u64) -> Vec<f64> {
    let mut rng = seed::rng(rng_seed);
    (0..n).map(|_| rng.random::<f64>()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map3() -> FourierMap {
        FourierMap::new(3, 50).unwrap()
    }

    #[test]
    fn features_at_simple_points() {
        let map = map3();
        let at0 = map.evaluate_features(0.0, &[-3, -1, 0, 2, 5]);
        assert!(at0.iter().all(|v| (v - Complex64::new(1.0, 0.0)).norm() < 1e-15));
        let half = map.evaluate_features(0.5, &[1])[0];
        assert!((half - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        let quarter = map.evaluate_features(0.25, &[2])[0];
        assert!((quarter - Complex64::new(-1.0, 0.0)).norm() < 1e-15);
        for v in map.evaluate_features(0.3137, &[-7, 4, 11]) {
            assert!((v.norm_sqr() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn bos_sum_is_exactly_p() {
        let map = FourierMap::new(6, 100).unwrap();
        for k in 0..97 {
            let x = k as f64 / 97.0;
            let basis = map.leading_real_basis(x);
            let total: f64 = basis.iter().map(|v| v * v).sum();
            assert!((total - map.favored_count() as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn mirrored_and_halved_index_maps() {
        let params = BiLevelParams::new(100, 3.2, 0.4, 0.4).unwrap();
        let m = FourierMap::for_bilevel(&params, 3, FourierIndexing::Mirrored).unwrap();
        assert_eq!((m.p_half, m.d_half), (6, 2_511_886));
        let h = FourierMap::for_bilevel(&params, 3, FourierIndexing::Halved).unwrap();
        assert_eq!((h.p_half, h.d_half), (3, 1_255_942));
        assert_eq!(h.total_count(), 2_511_885);
        let spectrum = h.bilevel_spectrum(params.residual_eigenvalue()).unwrap();
        assert_eq!(spectrum.p(), h.favored_count());
        assert_eq!(spectrum.len(), h.total_count());
    }

    #[test]
    fn leading_index_order() {
        let idx: Vec<usize> = [0, 1, -1, 2, -2, 3, -3].iter().map(|&l| leading_index(l)).collect();
        assert_eq!(idx, vec![0, 1, 2, 3, 4, 5, 6]);
    }

    #[test]
    fn sampled_target_is_real_and_bounded() {
        let target = sample_target(11, 3, 8192, &map3()).unwrap();
        assert_eq!(target.coefficients.len(), 7);
        assert!(target.max_imag_on_grid(8192) < 1e-12);
        let sup = target.grid_sup(8192);
        assert!(sup <= 1.0 && sup > 1.0 - 1e-8);
        let fine = (0..1_000_000).map(|k| target.eval(k as f64 / 1e6).abs()).fold(0.0, f64::max);
        assert!(fine <= 1.0, "dense sup {fine}");
        for (k, c) in target.coefficients.iter().enumerate() {
            assert_eq!(*c, target.coefficients[6 - k].conj());
        }
    }

    #[test]
    fn leading_coefficients_reproduce_eval() {
        let map = map3();
        let target = sample_target(8, 2, 1024, &map).unwrap();
        let coef = target.leading_coefficients(map.favored_count()).unwrap();
        for x in [0.0, 0.123, 0.5, 0.77] {
            let via_basis: f64 = coef.iter().zip(map.leading_real_basis(x)).map(|(c, v)| c * v).sum();
            assert!((via_basis - target.eval(x)).abs() < 1e-14);
        }
        assert!(target.leading_coefficients(4).is_err());
    }

    #[test]
    fn constant_target_rescales_to_one() {
        let mut coefficients = vec![Complex64::new(0.0, 0.0); 7];
        coefficients[3] = Complex64::new(0.5, 0.0);
        let target = TargetFunction::fourier(coefficients).unwrap().normalized(64);
        for k in 0..64 {
            assert!((target.eval(k as f64 / 64.0) - 1.0).abs() < 1e-8);
        }
        assert!((target.scale - 2.0).abs() < 1e-8);
    }

    #[test]
    fn target_is_deterministic() {
        let a = sample_target(5, 3, 512, &map3()).unwrap();
        let b = sample_target(5, 3, 512, &map3()).unwrap();
        assert_eq!(a, b);
        assert!(matches!(sample_target(5, 4, 512, &map3()), Err(Error::Domain(_))));
    }

    #[test]
    fn extreme_labels_are_deterministic() {
        let s = labels_from_eta(&[1.0; 50], 3).unwrap();
        assert!(s.labels.iter().all(|&y| y == 1.0));
        let s = labels_from_eta(&[-1.0; 50], 3).unwrap();
        assert!(s.labels.iter().all(|&y| y == -1.0));
        assert!(matches!(
            labels_from_eta(&[0.2, 1.0 + 1e-6], 3),
            Err(Error::ModelViolation { index: 1, .. })
        ));
    }

    #[test]
    fn neutral_labels_average_to_zero() {
        let s = labels_from_eta(&vec![0.0; 100_000], 17).unwrap();
        let mean = s.labels.iter().sum::<f64>() / s.len() as f64;
        assert!(mean.abs() < 0.02, "mean {mean}");
        assert!(s.noise.iter().all(|xi| xi.abs() <= 2.0));
    }

    #[test]
    fn labels_track_eta() {
        // deviation <= 4 / sqrt(m) at m = 1e5
        for (seed, eta) in [(1u64, 0.3), (2, -0.7), (3, 0.95)] {
            let s = labels_from_eta(&vec![eta; 100_000], seed).unwrap();
            let mean = s.labels.iter().sum::<f64>() / s.len() as f64;
            assert!((mean - eta).abs() <= 4.0 / (1e5f64).sqrt());
        }
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let fam = SubGaussianFamily::new(FeatureKind::Rademacher, 64);
        let block = fam.sample_block(20, 0..64, 9).unwrap();
        assert!(block.iter().all(|&v| v == 1.0 || v == -1.0));
    }

    #[test]
    fn gaussian_column_mean() {
        let fam = SubGaussianFamily::new(FeatureKind::Gaussian, 3);
        let block = fam.sample_block(100_000, 0..3, 4).unwrap();
        for j in 0..3 {
            let col = block.column(j);
            let mean = col.mean();
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / col.len() as f64;
            assert!(mean.abs() < 0.02, "mean {mean}");
            assert!((var - 1.0).abs() < 0.03, "var {var}");
        }
    }

    #[test]
    fn blocks_are_partition_independent() {
        let fam = SubGaussianFamily::new(FeatureKind::Gaussian, 100);
        let whole = fam.sample_block(7, 0..100, 21).unwrap();
        let mut start = 0;
        for width in [13, 1, 40, 46] {
            let part = fam.sample_block(7, start..start + width, 21).unwrap();
            for i in 0..7 {
                for j in 0..width {
                    assert_eq!(part[(i, j)], whole[(i, start + j)]);
                }
            }
            start += width;
        }
        let tail = fam.sample_block_from(3, 4, 10..20, 21).unwrap();
        assert_eq!(tail[(0, 0)], whole[(3, 10)]);
        assert!(fam.sample_block(2, 90..101, 21).is_err());
    }

    #[test]
    fn sampled_target_bias_weights() {
        let target = sample_sampled_target(3, FeatureKind::Rademacher, 4, 2048);
        assert!(target.grid_sup(2048) <= 1.0);
        let half = target.weighted(&[0.5; 4]).unwrap();
        assert!((half.grid_sup(2048) - 0.5 * target.grid_sup(2048)).abs() < 1e-15);
        assert!(target.weighted(&[1.0; 3]).is_err());
    }
}
