use std::sync::atomic::{AtomicU64, Ordering};

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::RobustError;

static CSTEP_VIOLATIONS: AtomicU64 = AtomicU64::new(0);

/// Number of C-steps, process-wide, that increased the determinant.
pub fn cstep_violations() -> u64 {
    CSTEP_VIOLATIONS.load(Ordering::Relaxed)
}

#[derive(Debug, Clone, PartialEq)]
pub struct McdConfig {
    pub n_starts: usize,
    pub max_csteps: usize,
    /// Relative determinant change below which C-steps stop.
    pub tolerance: f64,
    pub seed: u64,
}

impl Default for McdConfig {
    fn default() -> Self {
        Self {
            n_starts: 500,
            max_csteps: 500,
            tolerance: 1e-12,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct McdEstimate {
    pub location: DVector<f64>,
    /// Consistency-corrected scatter.
    pub scatter: DMatrix<f64>,
    pub h: usize,
    /// Determinant of the raw covariance of the chosen h-subset.
    pub det_value: f64,
    /// Sorted indices of the chosen h-subset.
    pub support: Vec<usize>,
    pub regularized: bool,
    /// C-steps in this fit that increased the determinant.
    pub violations: u64,
}

/// Smallest valid support size, `⌈(n+d+1)/2⌉`.
pub fn default_support(n: usize, d: usize) -> usize {
    (n + d + 2) / 2
}

fn mean_cov(points: &[DVector<f64>], subset: &[usize]) -> (DVector<f64>, DMatrix<f64>) {
    let d = points[0].len();
    let k = subset.len() as f64;
    let mut mean = DVector::zeros(d);
    for &i in subset {
        mean += &points[i];
    }
    mean /= k;
    let mut cov = DMatrix::zeros(d, d);
    let mut dev = vec![0.0; d];
    for &i in subset {
        for (j, v) in dev.iter_mut().enumerate() {
            *v = points[i][j] - mean[j];
        }
        for c in 0..d {
            for r in c..d {
                cov[(r, c)] += dev[r] * dev[c];
            }
        }
    }
    for c in 0..d {
        for r in c..d {
            cov[(r, c)] /= k;
            cov[(c, r)] = cov[(r, c)];
        }
    }
    (mean, cov)
}

/// The `h` indices with smallest Mahalanobis distance, ties by index.
fn closest(points: &[DVector<f64>], mean: &DVector<f64>, precision: &DMatrix<f64>, h: usize) -> Vec<usize> {
    let d = mean.len();
    let mut dev = vec![0.0; d];
    let mut dist: Vec<(f64, usize)> = points
        .iter()
        .enumerate()
        .map(|(i, x)| {
            for (j, v) in dev.iter_mut().enumerate() {
                *v = x[j] - mean[j];
            }
            let mut q = 0.0;
            for c in 0..d {
                let mut col = 0.0;
                for r in 0..d {
                    col += precision[(r, c)] * dev[r];
                }
                q += col * dev[c];
            }
            (q, i)
        })
        .collect();
    let by_distance = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if h < dist.len() {
        dist.select_nth_unstable_by(h, by_distance);
    }
    let mut subset: Vec<usize> = dist[..h].iter().map(|&(_, i)| i).collect();
    subset.sort_unstable();
    subset
}

struct Trial {
    det: f64,
    subset: Vec<usize>,
    violations: u64,
}

fn run_start(points: &[DVector<f64>], h: usize, config: &McdConfig, start: usize) -> Trial {
    let (n, d) = (points.len(), points[0].len());
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    rng.set_stream(start as u64);
    let order: Vec<usize> = sample(&mut rng, n, n).into_vec();
    // grow the random initial subset until its covariance is nonsingular
    let mut k = (d + 1).min(n);
    let (mean, cov) = loop {
        let (mean, cov) = mean_cov(points, &order[..k]);
        if cov.determinant() > 0.0 || k >= n {
            break (mean, cov);
        }
        k += 1;
    };
    let Some(chol) = cov.cholesky() else {
        let subset = closest(points, &mean, &DMatrix::identity(d, d), h);
        let det = mean_cov(points, &subset).1.determinant();
        return Trial { det, subset, violations: 0 };
    };
    let mut subset = closest(points, &mean, &chol.inverse(), h);
    let (mut mean, mut cov) = mean_cov(points, &subset);
    let mut det = cov.determinant();
    let mut violations = 0;
    for _ in 0..config.max_csteps {
        if det <= 0.0 {
            break;
        }
        let Some(chol) = cov.clone().cholesky() else { break };
        let next = closest(points, &mean, &chol.inverse(), h);
        if next == subset {
            break;
        }
        let (next_mean, next_cov) = mean_cov(points, &next);
        let next_det = next_cov.determinant();
        if next_det > det * (1.0 + 1e-10) {
            violations += 1;
            CSTEP_VIOLATIONS.fetch_add(1, Ordering::Relaxed);
            tracing::error!(det, next_det, "C-step increased the determinant");
        }
        let converged = (det - next_det).abs() <= config.tolerance * det;
        subset = next;
        mean = next_mean;
        cov = next_cov;
        det = next_det;
        if converged {
            break;
        }
    }
    Trial { det, subset, violations }
}

fn consistency_factor(n: usize, h: usize, d: usize) -> f64 {
    if h >= n {
        return 1.0;
    }
    let alpha = h as f64 / n as f64;
    let q = ChiSquared::new(d as f64).expect("d > 0").inverse_cdf(alpha);
    alpha / ChiSquared::new(d as f64 + 2.0).expect("d > 0").cdf(q)
}

/// FastMCD: C-steps to convergence from `config.n_starts` random
/// `(d+1)`-point starts, keeping the subset of smallest determinant.
pub fn mcd_estimate(points: &[Vec<f64>], h: usize, config: &McdConfig) -> Result<McdEstimate, RobustError> {
    let n = points.len();
    let d = points.first().map_or(0, Vec::len);
    if d == 0 || n <= d {
        return Err(RobustError::TooFewPoints { n, d });
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(RobustError::Dimension {
            expected: d,
            found: p.len(),
        });
    }
    if h < default_support(n, d) || h > n {
        return Err(RobustError::SupportSize { h, n, d });
    }
    let pts: Vec<DVector<f64>> = points.iter().map(|p| DVector::from_column_slice(p)).collect();
    let best = (0..config.n_starts.max(1))
        .into_par_iter()
        .map(|s| (s, run_start(&pts, h, config, s)))
        .reduce_with(|a, b| {
            let keep_a = a.1.det < b.1.det || (a.1.det == b.1.det && a.0 <= b.0);
            let violations = a.1.violations + b.1.violations;
            let (s, mut t) = if keep_a { a } else { b };
            t.violations = violations;
            (s, t)
        })
        .expect("at least one start")
        .1;
    let (location, raw) = mean_cov(&pts, &best.subset);
    let mut scatter = raw * consistency_factor(n, h, d);
    let eig = scatter.clone().symmetric_eigenvalues();
    let regularized = !(eig.min() > 1e-12 * eig.max().max(0.0)) || eig.min() <= 0.0;
    if regularized {
        let trace = scatter.trace();
        let ridge = if trace > 0.0 { 1e-6 * trace / d as f64 } else { 1e-6 };
        tracing::warn!(ridge, "MCD scatter is singular; adding ridge");
        scatter += DMatrix::identity(d, d) * ridge;
    }
    Ok(McdEstimate {
        location,
        scatter,
        h,
        det_value: best.det,
        support: best.subset,
        regularized,
        violations: best.violations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn support_size_bounds() {
        assert_eq!(default_support(12, 2), 8);
        assert_eq!(default_support(11, 2), 7);
        let pts: Vec<Vec<f64>> = (0..12).map(|i| vec![i as f64, (i * i) as f64]).collect();
        assert!(mcd_estimate(&pts, 7, &McdConfig::default()).is_err());
        assert!(mcd_estimate(&pts, 13, &McdConfig::default()).is_err());
        assert!(mcd_estimate(&pts[..2], 2, &McdConfig::default()).is_err());
    }

    #[test]
    fn consistency_factor_is_one_at_full_support() {
        assert_eq!(consistency_factor(10, 10, 3), 1.0);
        assert!(consistency_factor(100, 51, 2) > 1.0);
    }
}
