use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Error, Result};

/// Added to the covariance diagonal when a set has fewer than `dim + 1` samples.
pub const COVARIANCE_RIDGE: f64 = 1e-6;
pub const MAX_DIVERSITY_PAIRS: usize = 10_000;

/// Feature vectors tagged with the clip they came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureSet {
    pub ids: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FeatureSet {
    pub fn push(&mut self, id: impl Into<String>, row: Vec<f64>) {
        self.ids.push(id.into());
        self.rows.push(row);
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        FeatureSet { ids: (0..rows.len()).map(|i| i.to_string()).collect(), rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.rows.first().map_or(0, Vec::len)
    }

    fn check(&self) -> Result<usize> {
        let dim = self.dim();
        if self.rows.is_empty() || dim == 0 {
            return Err(Error::Invalid("feature set is empty".into()));
        }
        if let Some(i) = self.rows.iter().position(|r| r.len() != dim) {
            return Err(Error::shape("feature vector", dim, self.rows[i].len()));
        }
        let bad: Vec<&str> = self
            .ids
            .iter()
            .zip(&self.rows)
            .filter(|(_, r)| r.iter().any(|v| !v.is_finite()))
            .map(|(id, _)| id.as_str())
            .collect();
        if !bad.is_empty() {
            return Err(Error::NonFinite(format!("features of clips {}", bad.join(", "))));
        }
        Ok(dim)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GaussianStats {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl GaussianStats {
    /// Sample mean and unbiased covariance.
    pub fn fit(set: &FeatureSet) -> Result<Self> {
        let dim = set.check()?;
        let n = set.len();
        let mut mean = DVector::zeros(dim);
        for r in &set.rows {
            mean += DVector::from_column_slice(r);
        }
        mean /= n as f64;
        let mut cov = DMatrix::zeros(dim, dim);
        for r in &set.rows {
            let d = DVector::from_column_slice(r) - &mean;
            cov.ger(1.0, &d, &d, 1.0);
        }
        cov /= (n.max(2) - 1) as f64;
        cov = (&cov + cov.transpose()) * 0.5;
        if n < dim + 1 {
            log::warn!("{n} samples for {dim} features; covariance regularized by {COVARIANCE_RIDGE}");
            for i in 0..dim {
                cov[(i, i)] += COVARIANCE_RIDGE;
            }
        }
        Ok(GaussianStats { mean, cov })
    }
}

fn checked_eigen(m: &DMatrix<f64>, what: &str) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    let asym = (m - m.transpose()).abs().max();
    let scale = m.abs().max().max(1.0);
    if asym > 1e-8 * scale {
        return Err(Error::Numeric(format!("{what} is not symmetric (deviation {asym:e})")));
    }
    let e = SymmetricEigen::new((m + m.transpose()) * 0.5);
    let min = e.eigenvalues.min();
    if min < -1e-8 * scale {
        return Err(Error::Numeric(format!("{what} has eigenvalue {min:e}")));
    }
    Ok(e)
}

/// Square root of a symmetric positive semidefinite matrix, negative
/// eigenvalues clipped to zero.
fn sqrt_psd(m: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    let e = checked_eigen(m, what)?;
    let d = DMatrix::from_diagonal(&e.eigenvalues.map(|v| v.max(0.0).sqrt()));
    Ok(&e.eigenvectors * d * e.eigenvectors.transpose())
}

/// `|mu1 - mu2|^2 + tr(S1 + S2 - 2 (S1^1/2 S2 S1^1/2)^1/2)`.
///
/// The trace of the inner root is the sum of singular values of
/// `S1^1/2 S2^1/2`, which avoids squaring small eigenvalues.
pub fn frechet_distance(a: &GaussianStats, b: &GaussianStats) -> Result<f64> {
    if a.mean.len() != b.mean.len() {
        return Err(Error::shape("frechet_distance", a.mean.len(), b.mean.len()));
    }
    let root_a = sqrt_psd(&a.cov, "covariance")?;
    let root_b = sqrt_psd(&b.cov, "covariance")?;
    let cross = (&root_a * &root_b).singular_values().sum();
    let d = (&a.mean - &b.mean).norm_squared() + a.cov.trace() + b.cov.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(Error::Numeric("Frechet distance is not finite".into()));
    }
    Ok(d.max(0.0))
}

pub fn fid(real: &FeatureSet, generated: &FeatureSet) -> Result<f64> {
    frechet_distance(&GaussianStats::fit(real)?, &GaussianStats::fit(generated)?)
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Mean Euclidean distance over all unordered pairs, or over
/// [`MAX_DIVERSITY_PAIRS`] pairs drawn with `seed` when there are more.
pub fn diversity(set: &FeatureSet, seed: u64) -> Result<f64> {
    let n = set.len();
    if n < 2 {
        return Err(Error::Invalid(format!("diversity needs at least 2 samples, got {n}")));
    }
    set.check()?;
    let pairs = n * (n - 1) / 2;
    let r = &set.rows;
    if pairs <= MAX_DIVERSITY_PAIRS {
        let mut total = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                total += distance(&r[i], &r[j]);
            }
        }
        return Ok(total / pairs as f64);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..MAX_DIVERSITY_PAIRS {
        let i = rng.random_range(0..n);
        let j = (i + rng.random_range(1..n)) % n;
        total += distance(&r[i], &r[j]);
    }
    Ok(total / MAX_DIVERSITY_PAIRS as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::{prop, prop_assert, prop_assert_eq, proptest, Strategy};
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(n: usize, mean: &[f64], std: f64, seed: u64) -> FeatureSet {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        FeatureSet::from_rows(
            (0..n)
                .map(|_| mean.iter().map(|m| { let z: f64 = StandardNormal.sample(&mut rng); m + std * z }).collect())
                .collect(),
        )
    }

    #[test]
    fn identical_sets() {
        let a = gaussian(200, &[0.0; 5], 1.0, 1);
        assert!(fid(&a, &a).unwrap().abs() < 1e-6);
    }

    #[test]
    fn covariance_keeps_off_diagonal_terms() {
        let set = FeatureSet::from_rows(vec![vec![1.0, 2.0], vec![3.0, 1.0], vec![2.0, 6.0]]);
        let s = GaussianStats::fit(&set).unwrap();
        // Deviations (-1, -1), (1, -2), (0, 3) over n - 1 = 2.
        assert_eq!(s.cov[(0, 1)], -0.5);
        assert_eq!(s.cov[(1, 0)], -0.5);
        assert_eq!(s.cov[(0, 0)], 1.0);
        assert_eq!(s.cov[(1, 1)], 7.0);
    }

    #[test]
    fn gaussian_mean_gap() {
        let a = gaussian(10_000, &[0.0, 0.0, 0.0], 1.0, 2);
        let b = gaussian(10_000, &[2.0, 0.0, 0.0], 1.0, 3);
        let d = fid(&a, &b).unwrap();
        assert!((d - 4.0).abs() < 0.2, "{d}");
    }

    #[test]
    fn gaussian_scale_gap() {
        let a = gaussian(20_000, &[0.0, 0.0], 1.0, 4);
        let b = gaussian(20_000, &[0.0, 0.0], 2.0, 5);
        let d = fid(&a, &b).unwrap();
        assert!((d - 2.0).abs() < 0.1, "{d}");
    }

    #[test]
    fn tiny_sets_are_regularized() {
        let a = gaussian(3, &[0.0; 8], 1.0, 6);
        assert!(fid(&a, &a).unwrap().abs() < 1e-6);
    }

    #[test]
    fn non_finite_features_name_clips() {
        let mut a = gaussian(4, &[0.0; 2], 1.0, 7);
        a.rows[2][1] = f64::NAN;
        a.ids[2] = "clip_x".into();
        match fid(&a, &a) {
            Err(Error::NonFinite(m)) => assert!(m.contains("clip_x")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn diversity_examples() {
        let same = FeatureSet::from_rows(vec![vec![1.0, 2.0]; 5]);
        assert_eq!(diversity(&same, 0).unwrap(), 0.0);
        let two = FeatureSet::from_rows(vec![vec![0.0, 0.0], vec![3.0, 4.0]]);
        assert_eq!(diversity(&two, 0).unwrap(), 5.0);
        assert!(diversity(&FeatureSet::from_rows(vec![vec![1.0]]), 0).is_err());
    }

    #[test]
    fn diversity_matches_monte_carlo() {
        let set = gaussian(10_000, &[0.0; 16], 1.0, 8);
        let d = diversity(&set, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = 200_000;
        let mc = (0..m)
            .map(|_| {
                (0..16).map(|_| 2.0 * rng.sample::<f64, _>(StandardNormal).powi(2)).sum::<f64>().sqrt()
            })
            .sum::<f64>()
            / m as f64;
        assert!((d - mc).abs() < 0.02 * mc, "{d} vs {mc}");
    }

    fn dyadic_set() -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec((-1024i32..1024).prop_map(|k| k as f64 / 64.0), 3), 2..12)
    }

    proptest! {
        #[test]
        fn fid_symmetric(a in dyadic_set(), b in dyadic_set()) {
            let (a, b) = (FeatureSet::from_rows(a), FeatureSet::from_rows(b));
            let ab = fid(&a, &b).unwrap();
            let ba = fid(&b, &a).unwrap();
            prop_assert!((ab - ba).abs() < 1e-6 * ab.max(1.0), "{} {}", ab, ba);
            prop_assert!(fid(&a, &a).unwrap() < 1e-6);
        }

        #[test]
        fn fid_mean_shift(a in dyadic_set(), c in prop::collection::vec(-8.0f64..8.0, 3)) {
            let shifted = FeatureSet::from_rows(a.iter().map(|r| r.iter().zip(&c).map(|(x, y)| x + y).collect()).collect());
            let a = FeatureSet::from_rows(a);
            let d = fid(&a, &shifted).unwrap();
            let want: f64 = c.iter().map(|v| v * v).sum();
            prop_assert!((d - want).abs() < 1e-6, "{} vs {}", d, want);
        }

        // Dyadic values keep every sum exact, so the shift cancels bit for bit.
        #[test]
        fn diversity_translation_invariant(a in dyadic_set(), c in prop::collection::vec(-64i32..64, 3)) {
            let shifted: Vec<Vec<f64>> = a.iter().map(|r| r.iter().zip(&c).map(|(x, &y)| x + y as f64).collect()).collect();
            prop_assert_eq!(
                diversity(&FeatureSet::from_rows(a), 3).unwrap(),
                diversity(&FeatureSet::from_rows(shifted), 3).unwrap()
            );
        }
    }
}
