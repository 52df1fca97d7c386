//! Gram matrix assembly and the split `K = K_G + K_R`.

use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FourierMap, SubGaussianFamily};
use crate::seed;
use crate::spectrum::SpectrumModel;

/// Default cap on `d * n` explicit feature draws.
pub const DEFAULT_EXPLICIT_BUDGET: u128 = 50_000_000;

/// Kernel Gram matrix with its leading/residual split.
#[derive(Clone, Debug, PartialEq)]
pub struct GramDecomposition {
    pub k: DMatrix<f64>,
    pub k_g: DMatrix<f64>,
    pub k_r: DMatrix<f64>,
    /// `p x n` leading eigenfunctions evaluated at the sample points, in a real
    /// orthonormal basis of the leading span.
    pub leading_features: DMatrix<f64>,
}

impl GramDecomposition {
    pub fn n(&self) -> usize {
        self.k.nrows()
    }

    fn from_parts(k_g: DMatrix<f64>, k_r: DMatrix<f64>, leading_features: DMatrix<f64>) -> Self {
        let k = &k_g + &k_r;
        Self {
            k,
            k_g,
            k_r,
            leading_features,
        }
    }
}

/// `sum_{l=-m}^{m} e^{j 2 pi l delta} = sin(pi (2m+1) delta) / sin(pi delta)`.
pub fn dirichlet_sum(delta: f64, m: usize) -> f64 {
    let width = (2 * m + 1) as f64;
    // period 1 in delta
    let delta = delta - delta.round();
    let denom = (PI * delta).sin();
    if denom.abs() >= 1e-8 {
        // (2m+1) delta mod 2, keeping the rounding error of the product
        let t = width * delta;
        let err = width.mul_add(delta, -t);
        let reduced = (t - 2.0 * (t / 2.0).round()) + err;
        (PI * reduced).sin() / denom
    } else {
        let m = m as f64;
        let s2 = m * (m + 1.0) * (2.0 * m + 1.0) / 3.0;
        let s4 = m * (m + 1.0) * (2.0 * m + 1.0) * (3.0 * m * m + 3.0 * m - 1.0) / 15.0;
        let d2 = delta * delta;
        width - 2.0 * PI * PI * d2 * s2 + 2.0 * PI.powi(4) * d2 * d2 * s4 / 3.0
    }
}

/// Frequency band `lo < |l| <= hi` sharing one eigenvalue; `lo = None` includes `l = 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: Option<usize>,
    pub hi: usize,
    pub value: f64,
}

impl Band {
    fn kernel(&self, delta: f64) -> f64 {
        let upper = dirichlet_sum(delta, self.hi);
        let lower = self.lo.map_or(0.0, |lo| dirichlet_sum(delta, lo));
        self.value * (upper - lower)
    }
}

/// Shift-invariant kernel `k(x, y) = sum_l lambda_l e^{j 2 pi l (x - y)}` with
/// `lambda_{-l} = lambda_l`, stored as leading and residual frequency bands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FourierKernel {
    pub map: FourierMap,
    pub leading: Vec<Band>,
    pub residual: Vec<Band>,
}

impl FourierKernel {
    /// Bands from a spectrum ordered `[l = 0, +-1, +-2, ...]`.
    pub fn new(map: FourierMap, spectrum: &SpectrumModel) -> Result<Self> {
        if spectrum.len() != map.total_count() || spectrum.p() != map.favored_count() {
            return Err(Error::domain(format!(
                "spectrum (d = {}, p = {}) does not match the feature map (d = {}, p = {})",
                spectrum.len(),
                spectrum.p(),
                map.total_count(),
                map.favored_count()
            )));
        }
        let p = spectrum.p();
        let mut leading = Vec::new();
        let mut residual = Vec::new();
        let mut start = 0usize;
        let mut push = |start: usize, end: usize, value: f64| -> Result<()> {
            if end % 2 == 0 || (start > 0 && start % 2 == 0) {
                return Err(Error::domain(
                    "spectrum levels split a frequency pair l, -l",
                ));
            }
            let band = Band {
                lo: (start > 0).then(|| (start - 1) / 2),
                hi: (end - 1) / 2,
                value,
            };
            if end <= p {
                leading.push(band);
            } else {
                residual.push(band);
            }
            Ok(())
        };
        for level in spectrum.levels() {
            let end = start + level.count;
            if start < p && end > p {
                push(start, p, level.value)?;
                push(p, end, level.value)?;
            } else {
                push(start, end, level.value)?;
            }
            start = end;
        }
        Ok(Self {
            map,
            leading,
            residual,
        })
    }

    pub fn leading_at(&self, delta: f64) -> f64 {
        self.leading.iter().map(|b| b.kernel(delta)).sum()
    }

    pub fn residual_at(&self, delta: f64) -> f64 {
        self.residual.iter().map(|b| b.kernel(delta)).sum()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let delta = x - y;
        self.leading_at(delta) + self.residual_at(delta)
    }

    /// `[k(x, x_1), ..., k(x, x_n)]`.
    pub fn row(&self, x: f64, points: &[f64]) -> Vec<f64> {
        points.iter().map(|&xi| self.eval(x, xi)).collect()
    }

    /// `k(x, x) = sum_l lambda_l`.
    pub fn diagonal(&self) -> f64 {
        self.eval(0.0, 0.0)
    }
}

/// Closest pair of points on the circle `[0, 1)`, if closer than `threshold`.
fn find_duplicate(points: &[f64], threshold: f64) -> Option<(usize, usize, f64)> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a].total_cmp(&points[b]));
    let gap = |a: usize, b: usize| {
        let raw = (points[a] - points[b]).abs();
        raw.min((raw - raw.round()).abs())
    };
    let mut pairs: Vec<(usize, usize)> = order.windows(2).map(|w| (w[0], w[1])).collect();
    if order.len() > 2 {
        pairs.push((order[0], order[order.len() - 1]));
    }
    pairs
        .into_iter()
        .map(|(a, b)| (a.min(b), a.max(b), gap(a, b)))
        .filter(|&(_, _, g)| g < threshold)
        .min_by(|a, b| a.2.total_cmp(&b.2))
}

/// Fourier Gram in closed form through Dirichlet sums.
pub fn assemble_fourier_gram(
    map: &FourierMap,
    spectrum: &SpectrumModel,
    points: &[f64],
) -> Result<GramDecomposition> {
    if let Some((i, j, gap)) = find_duplicate(points, 1e-12) {
        return Err(Error::DuplicatePoints { i, j, gap });
    }
    let kernel = FourierKernel::new(*map, spectrum)?;
    Ok(assemble_from_kernel(&kernel, points))
}

/// Gram of a prepared kernel at distinct points.
pub fn assemble_from_kernel(kernel: &FourierKernel, points: &[f64]) -> GramDecomposition {
    let n = points.len();
    let rows: Vec<(Vec<f64>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            (0..=i)
                .map(|j| {
                    let delta = points[i] - points[j];
                    (kernel.leading_at(delta), kernel.residual_at(delta))
                })
                .unzip()
        })
        .collect();
    let mut k_g = DMatrix::zeros(n, n);
    let mut k_r = DMatrix::zeros(n, n);
    for (i, (g, r)) in rows.into_iter().enumerate() {
        for j in 0..=i {
            k_g[(i, j)] = g[j];
            k_g[(j, i)] = g[j];
            k_r[(i, j)] = r[j];
            k_r[(j, i)] = r[j];
        }
    }
    let p = kernel.map.favored_count();
    let mut features = DMatrix::zeros(p, n);
    for (i, &x) in points.iter().enumerate() {
        for (k, v) in kernel.map.leading_real_basis(x).into_iter().enumerate() {
            features[(k, i)] = v;
        }
    }
    GramDecomposition::from_parts(k_g, k_r, features)
}

/// Gram from explicitly drawn features: `K = sum_k lambda_k v_k v_k^T`.
///
/// Each entry accumulates over feature index in increasing order, so the
/// result does not depend on `block_size` or the worker count.
pub fn assemble_explicit_gram(
    family: &SubGaussianFamily,
    spectrum: &SpectrumModel,
    n: usize,
    rng_seed: u64,
    block_size: usize,
    budget: u128,
) -> Result<GramDecomposition> {
    let d = spectrum.len();
    if family.d != d {
        return Err(Error::domain(format!(
            "family has {} features, spectrum has {d}",
            family.d
        )));
    }
    let needed = d as u128 * n as u128;
    if needed > budget {
        return Err(Error::Budget { needed, budget });
    }
    if block_size == 0 {
        return Err(Error::domain("block_size must be positive"));
    }
    let p = spectrum.p();
    let mut acc_g: Vec<Vec<f64>> = (0..n).map(|i| vec![0.0; i + 1]).collect();
    let mut acc_r = acc_g.clone();
    let mut leading = DMatrix::zeros(p, n);
    let mut eigenvalues = Vec::with_capacity(block_size);
    let mut start = 0;
    while start < d {
        let end = (start + block_size).min(d);
        // rows of `block` are features, columns are points
        let block = family.sample_block(n, start..end, rng_seed)?.transpose();
        eigenvalues.clear();
        eigenvalues.extend((start..end).map(|k| spectrum.eigenvalue(k).unwrap()));
        for k in start..end.min(p) {
            for i in 0..n {
                leading[(k, i)] = block[(k - start, i)];
            }
        }
        acc_g
            .par_iter_mut()
            .zip(acc_r.par_iter_mut())
            .enumerate()
            .for_each(|(i, (row_g, row_r))| {
                for j in 0..=i {
                    let (vi, vj) = (block.column(i), block.column(j));
                    for (local, lambda) in eigenvalues.iter().enumerate() {
                        let term = lambda * vi[local] * vj[local];
                        if start + local < p {
                            row_g[j] += term;
                        } else {
                            row_r[j] += term;
                        }
                    }
                }
            });
        start = end;
    }
    let fill = |acc: Vec<Vec<f64>>| {
        let mut m = DMatrix::zeros(n, n);
        for (i, row) in acc.into_iter().enumerate() {
            for (j, v) in row.into_iter().enumerate() {
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    };
    Ok(GramDecomposition::from_parts(fill(acc_g), fill(acc_r), leading))
}

/// `scale * W` with `W ~ Wishart(dof, I_n)` via the Bartlett decomposition.
pub fn sample_wishart_residual(n: usize, dof: usize, scale: f64, rng_seed: u64) -> Result<DMatrix<f64>> {
    if dof < n {
        return Err(Error::domain(format!(
            "wishart dof {dof} below dimension {n} gives a singular residual"
        )));
    }
    if !(scale >= 0.0 && scale.is_finite()) {
        return Err(Error::domain(format!("wishart scale {scale} must be nonnegative")));
    }
    let mut rng = seed::rng(rng_seed);
    let mut l = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        let chi2 = ChiSquared::new((dof - i) as f64)
            .map_err(|e| Error::domain(format!("chi-squared: {e}")))?;
        l[(i, i)] = rng.sample(chi2).sqrt();
        for j in 0..i {
            l[(i, j)] = rng.sample(StandardNormal);
        }
    }
    let mut w = &l * l.transpose();
    w *= scale;
    Ok(w)
}

/// Gaussian features with explicit leading coordinates and a Wishart residual.
///
/// Needs a single residual level: `K_R = lambda_R * Wishart(d - p, I_n)`.
pub fn assemble_gaussian_wishart(spectrum: &SpectrumModel, n: usize, rng_seed: u64) -> Result<GramDecomposition> {
    let residual = spectrum.residual_levels();
    let [level] = residual.as_slice() else {
        return Err(Error::Unsupported(
            "wishart residual needs a single residual eigenvalue".into(),
        ));
    };
    let p = spectrum.p();
    let family = SubGaussianFamily::new(crate::features::FeatureKind::Gaussian, spectrum.len());
    let leading = family
        .sample_block(n, 0..p, seed::derive(rng_seed, &[seed::tag::FEATURES]))?
        .transpose();
    let mut weighted = leading.clone();
    for (k, lambda) in spectrum.leading().into_iter().enumerate() {
        weighted.row_mut(k).scale_mut(lambda);
    }
    let k_g = leading.transpose() * &weighted;
    let k_r = sample_wishart_residual(
        n,
        level.count,
        level.value,
        seed::derive(rng_seed, &[seed::tag::WISHART]),
    )?;
    Ok(GramDecomposition::from_parts(k_g, k_r, leading))
}

/// Dump `m` as an 8-byte little-endian `n` followed by row-major little-endian f64.
pub fn write_gram(path: &Path, m: &DMatrix<f64>) -> std::io::Result<()> {
    let n = m.nrows();
    let mut bytes = Vec::with_capacity(8 + 8 * n * n);
    bytes.extend_from_slice(&(n as u64).to_le_bytes());
    for i in 0..n {
        for j in 0..m.ncols() {
            bytes.extend_from_slice(&m[(i, j)].to_le_bytes());
        }
    }
    std::fs::File::create(path)?.write_all(&bytes)
}

pub fn read_gram(path: &Path) -> std::io::Result<DMatrix<f64>> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut bytes)?;
    let bad = || std::io::Error::new(std::io::ErrorKind::InvalidData, "truncated gram file");
    let header: [u8; 8] = bytes.get(..8).ok_or_else(bad)?.try_into().unwrap();
    let n = u64::from_le_bytes(header) as usize;
    if bytes.len() != 8 + 8 * n * n {
        return Err(bad());
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        let at = 8 + 8 * (i * n + j);
        f64::from_le_bytes(bytes[at..at + 8].try_into().unwrap())
    }))
}

/// `lambda_min / lambda_max` of a symmetric matrix.
pub fn min_eigen_ratio(m: &DMatrix<f64>) -> f64 {
    let eig = m.clone().symmetric_eigenvalues();
    let max = eig.max();
    eig.min() / max
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;
    use crate::spectrum::Level;
    use num_complex::Complex64;
    use proptest::prelude::*;

    fn brute_dirichlet(delta: f64, m: usize) -> f64 {
        let m = m as i64;
        (-m..=m).map(|l| (2.0 * PI * l as f64 * delta).cos()).sum()
    }

    #[test]
    fn dirichlet_examples() {
        assert_eq!(dirichlet_sum(0.0, 5), 11.0);
        assert!((dirichlet_sum(0.5, 1) + 1.0).abs() < 1e-15);
        let tiny = dirichlet_sum(1e-12, 1000);
        assert!((tiny - 2001.0).abs() / 2001.0 < 1e-6);
        assert_eq!(dirichlet_sum(3.0, 4), 9.0);
    }

    #[test]
    fn dirichlet_continuous_across_switch() {
        for m in [1usize, 10, 1000, 2_500_000] {
            for delta in [3.18e-9, 3.183e-9, 3.19e-9, 1e-9, 5e-9] {
                // (2m+1) delta stays small here, so the naive ratio is accurate
                let w = (2 * m + 1) as f64;
                let exact = (PI * w * delta).sin() / (PI * delta).sin();
                let got = dirichlet_sum(delta, m);
                assert!(((got - exact) / exact).abs() < 1e-9, "m={m} delta={delta}");
            }
        }
    }

    proptest! {
        #[test]
        fn dirichlet_matches_brute_force(delta in -3.0f64..3.0, m in 0usize..64) {
            let got = dirichlet_sum(delta, m);
            let want = brute_dirichlet(delta, m);
            prop_assert!((got - want).abs() <= 1e-10 * (2 * m + 1) as f64);
        }
    }

    fn two_level(map: FourierMap, lg: f64, lr: f64) -> SpectrumModel {
        SpectrumModel::from_levels(
            vec![
                Level { value: lg, count: map.favored_count() },
                Level { value: lr, count: map.total_count() - map.favored_count() },
            ],
            map.favored_count(),
        )
        .unwrap()
    }

    #[test]
    fn two_point_example() {
        let map = FourierMap::new(0, 1).unwrap();
        let gram = assemble_fourier_gram(&map, &two_level(map, 1.0, 1.0), &[0.0, 0.5]).unwrap();
        let want = DMatrix::from_row_slice(2, 2, &[3.0, -1.0, -1.0, 3.0]);
        assert!((&gram.k - want).abs().max() < 1e-14);
    }

    #[test]
    fn duplicates_are_flagged() {
        let map = FourierMap::new(1, 4).unwrap();
        let err = assemble_fourier_gram(&map, &two_level(map, 1.0, 0.5), &[0.1, 0.7, 0.1]);
        assert!(matches!(err, Err(Error::DuplicatePoints { i: 0, j: 2, .. })));
        let wrap = assemble_fourier_gram(&map, &two_level(map, 1.0, 0.5), &[0.0, 0.5, 1.0 - 1e-14]);
        assert!(matches!(wrap, Err(Error::DuplicatePoints { .. })));
    }

    fn brute_gram(lambdas: &[(i64, f64)], points: &[f64]) -> DMatrix<f64> {
        let n = points.len();
        DMatrix::from_fn(n, n, |i, j| {
            lambdas
                .iter()
                .map(|&(l, lam)| {
                    let phase = 2.0 * PI * l as f64 * (points[i] - points[j]);
                    (Complex64::new(0.0, phase).exp() * lam).re
                })
                .sum()
        })
    }

    #[test]
    fn closed_form_matches_brute_force() {
        let points = crate::features::uniform_points(5, 99);
        let map = FourierMap::new(3, 20).unwrap();
        let spectrum = two_level(map, 1.0, 0.37);
        let gram = assemble_fourier_gram(&map, &spectrum, &points).unwrap();
        let lambdas: Vec<(i64, f64)> = (-20i64..=20)
            .map(|l| (l, if l.abs() <= 3 { 1.0 } else { 0.37 }))
            .collect();
        let want = brute_gram(&lambdas, &points);
        let scale = want.abs().max();
        assert!((&gram.k - &want).abs().max() <= 1e-10 * scale);
        let leading: Vec<(i64, f64)> = (-3i64..=3).map(|l| (l, 1.0)).collect();
        assert!((&gram.k_g - brute_gram(&leading, &points)).abs().max() <= 1e-10 * scale);
        let diag = gram.k[(0, 0)];
        assert!((0..5).all(|i| gram.k[(i, i)] == diag));
    }

    #[test]
    fn multi_level_spectrum_bands() {
        let map = FourierMap::new(2, 6).unwrap();
        let spectrum = SpectrumModel::from_levels(
            vec![
                Level { value: 2.0, count: 3 },
                Level { value: 1.0, count: 4 },
                Level { value: 0.25, count: 6 },
            ],
            5,
        )
        .unwrap();
        let points = [0.05, 0.31, 0.77, 0.9];
        let gram = assemble_fourier_gram(&map, &spectrum, &points).unwrap();
        let lambdas: Vec<(i64, f64)> = (-6i64..=6)
            .map(|l| (l, [2.0, 2.0, 1.0, 1.0, 0.25, 0.25, 0.25][l.unsigned_abs() as usize]))
            .collect();
        assert!((&gram.k - brute_gram(&lambdas, &points)).abs().max() < 1e-12);
        let odd = SpectrumModel::from_levels(
            vec![Level { value: 1.0, count: 4 }, Level { value: 0.5, count: 9 }],
            5,
        )
        .unwrap();
        assert!(assemble_fourier_gram(&map, &odd, &points).is_err());
    }

    #[test]
    fn residual_zero_gives_k_g() {
        let map = FourierMap::new(2, 9).unwrap();
        let kernel = FourierKernel {
            map,
            leading: vec![Band { lo: None, hi: 2, value: 1.0 }],
            residual: vec![Band { lo: Some(2), hi: 9, value: 0.0 }],
        };
        let gram = assemble_from_kernel(&kernel, &[0.1, 0.2, 0.6]);
        assert_eq!(gram.k, gram.k_g);
    }

    #[test]
    fn fourier_gram_is_psd() {
        let map = FourierMap::new(6, 2_511_886).unwrap();
        let spectrum = two_level(map, 1.0, 100f64.powf(-2.4));
        let points = crate::features::uniform_points(100, 3);
        let gram = assemble_fourier_gram(&map, &spectrum, &points).unwrap();
        assert!(min_eigen_ratio(&gram.k) >= -1e-10);
        assert!(min_eigen_ratio(&gram.k_r) >= -1e-10);
        let diff = (&gram.k - (&gram.k_g + &gram.k_r)).abs().max();
        assert!(diff <= 1e-10 * gram.k.abs().max());
    }

    #[test]
    fn explicit_gram_without_residual_level() {
        let spectrum = SpectrumModel::from_levels(
            vec![Level { value: 1.0, count: 3 }, Level { value: 1e-300, count: 1 }],
            3,
        )
        .unwrap();
        let fam = SubGaussianFamily::new(FeatureKind::Rademacher, 4);
        let gram = assemble_explicit_gram(&fam, &spectrum, 6, 1, 2, DEFAULT_EXPLICIT_BUDGET).unwrap();
        assert!(gram.k_r.abs().max() <= 1e-299);
        assert_eq!(gram.leading_features.nrows(), 3);
    }

    #[test]
    fn explicit_gram_independent_of_block_size() {
        let spectrum = SpectrumModel::from_levels(
            vec![Level { value: 1.0, count: 5 }, Level { value: 0.01, count: 4995 }],
            5,
        )
        .unwrap();
        let fam = SubGaussianFamily::new(FeatureKind::Gaussian, 5000);
        let a = assemble_explicit_gram(&fam, &spectrum, 12, 8, 64, DEFAULT_EXPLICIT_BUDGET).unwrap();
        let b = assemble_explicit_gram(&fam, &spectrum, 12, 8, 4096, DEFAULT_EXPLICIT_BUDGET).unwrap();
        assert_eq!(a, b);
        assert!(matches!(
            assemble_explicit_gram(&fam, &spectrum, 12, 8, 64, 1000),
            Err(Error::Budget { needed: 60_000, budget: 1000 })
        ));
    }

    #[test]
    fn explicit_gram_flat_diagonal_concentrates() {
        let spectrum = SpectrumModel::from_levels(vec![Level { value: 1.0, count: 10_000 }], 1).unwrap();
        let fam = SubGaussianFamily::new(FeatureKind::Gaussian, 10_000);
        let gram = assemble_explicit_gram(&fam, &spectrum, 50, 2, 1024, DEFAULT_EXPLICIT_BUDGET).unwrap();
        let mean = gram.k.diagonal().mean() / 10_000.0;
        assert!((mean - 1.0).abs() < 0.05);
    }

    #[test]
    fn wishart_scalar_mean() {
        let mean = (0..100_000u64)
            .map(|s| sample_wishart_residual(1, 30, 2.0, s).unwrap()[(0, 0)])
            .sum::<f64>()
            / 1e5;
        assert!((mean - 60.0).abs() < 0.6, "mean {mean}");
    }

    #[test]
    fn wishart_edge_cases() {
        assert_eq!(sample_wishart_residual(3, 10, 0.0, 1).unwrap(), DMatrix::zeros(3, 3));
        assert!(sample_wishart_residual(5, 4, 1.0, 1).is_err());
        let w = sample_wishart_residual(5, 5, 1.0, 1).unwrap();
        assert!(min_eigen_ratio(&w) > 0.0);
    }

    #[test]
    fn gram_round_trips_through_file() {
        let dir = std::env::temp_dir().join(format!("svplab-gram-{}", std::process::id()));
        let m = DMatrix::from_fn(3, 3, |i, j| (i * 3 + j) as f64 + 0.125);
        write_gram(&dir, &m).unwrap();
        let bytes = std::fs::read(&dir).unwrap();
        assert_eq!(bytes.len(), 8 + 72);
        assert_eq!(&bytes[..8], &3u64.to_le_bytes());
        assert_eq!(&bytes[16..24], &1.125f64.to_le_bytes());
        assert_eq!(read_gram(&dir).unwrap(), m);
        std::fs::remove_file(&dir).unwrap();
    }
}
