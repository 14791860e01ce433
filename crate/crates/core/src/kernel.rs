//! Gaussian kernel and the biased squared maximum mean discrepancy.
//!
//! The kernel is `k(u, v) = exp(-‖u − v‖² / σ²)`, with no factor of two in
//! the denominator. The estimator is the V-statistic
//!
//! ```text
//! MMD²(A, B) = 1/N_A² Σ k(a_i, a_j) + 1/N_B² Σ k(b_i, b_j) − 2/(N_A·N_B) Σ k(a_i, b_j)
//! ```
//!
//! with self-pairs included, so it is nonnegative for any sample.
//!
//! Kernel sums are accumulated in fixed blocks of [`BLOCK_ROWS`] rows. Each
//! block is summed sequentially, blocks may run on any worker, and the block
//! totals are then added in block order. The result is therefore bit-identical
//! for any rayon pool size.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::embedding::EmbeddingSet;
use crate::error::{Error, Result};

/// Rows of the left operand handled by one accumulation block.
pub const BLOCK_ROWS: usize = 256;

/// Tolerance below zero accepted before clamping an estimate to zero.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

/// Kernel values below this count as underflowed for the saturation check.
const SATURATION_FLOOR: f64 = 1e-300;
const SATURATION_FRACTION: f64 = 0.99;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BandwidthMode {
    Fixed,
    MedianHeuristic,
}

impl BandwidthMode {
    pub fn as_str(self) -> &'static str {
        match self {
            BandwidthMode::Fixed => "fixed",
            BandwidthMode::MedianHeuristic => "median_heuristic",
        }
    }
}

/// Bandwidth policy for the Gaussian kernel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub mode: BandwidthMode,
    /// Only meaningful for [`BandwidthMode::Fixed`].
    pub sigma: f64,
}

impl Default for KernelConfig {
    /// Fixed σ = 1.
    fn default() -> Self {
        KernelConfig {
            mode: BandwidthMode::Fixed,
            sigma: 1.0,
        }
    }
}

impl KernelConfig {
    pub fn fixed(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(KernelConfig {
            mode: BandwidthMode::Fixed,
            sigma,
        })
    }

    pub fn median_heuristic() -> Self {
        KernelConfig {
            mode: BandwidthMode::MedianHeuristic,
            sigma: f64::NAN,
        }
    }

    /// Resolves σ for comparing `a` with `b`. The median heuristic pools both sets.
    pub fn resolve(&self, a: &EmbeddingSet, b: &EmbeddingSet) -> Result<f64> {
        match self.mode {
            BandwidthMode::Fixed => {
                check_sigma(self.sigma)?;
                Ok(self.sigma)
            }
            BandwidthMode::MedianHeuristic => median_heuristic_bandwidth(&a.pooled(b)?),
        }
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma.is_finite() && sigma > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidValue(format!(
            "bandwidth must be positive and finite, got {sigma}"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Uniform 1/N² weights; both sets must have the same N.
    BiasedEqualN,
    /// 1/N_A², 1/N_B² and 2/(N_A·N_B) weights for sets of different size.
    BiasedGeneral,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MmdResult {
    /// Estimate clamped to be nonnegative.
    pub value: f64,
    /// Estimate before clamping.
    pub raw_value: f64,
    pub n_a: usize,
    pub n_b: usize,
    pub dim: usize,
    pub resolved_sigma: f64,
    pub estimator: Estimator,
    /// More than 99% of cross pairs underflowed the kernel.
    pub saturated: bool,
}

/// `exp(-‖u − v‖² / σ²)`.
pub fn gaussian_kernel(u: &[f64], v: &[f64], sigma: f64) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::DimensionMismatch {
            context: "kernel arguments".into(),
            left: u.len(),
            right: v.len(),
        });
    }
    if u.is_empty() {
        return Err(Error::InvalidValue("kernel arguments must have d ≥ 1".into()));
    }
    if u.iter().chain(v).any(|x| !x.is_finite()) {
        return Err(Error::InvalidValue("non-finite kernel argument".into()));
    }
    check_sigma(sigma)?;
    Ok(kernel_value(u, v, sigma * sigma))
}

#[inline]
fn squared_distance(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum()
}

#[inline]
fn kernel_value(u: &[f64], v: &[f64], sigma2: f64) -> f64 {
    (-squared_distance(u, v) / sigma2).exp()
}

#[derive(Clone, Copy, Default)]
struct BlockSum {
    sum: f64,
    underflowed: usize,
}

/// Σ_i Σ_j k(x_i, y_j) in deterministic block-major order.
fn kernel_sum(x: &EmbeddingSet, y: &EmbeddingSet, sigma2: f64) -> BlockSum {
    let n_blocks = x.n().div_ceil(BLOCK_ROWS);
    let blocks: Vec<BlockSum> = (0..n_blocks)
        .into_par_iter()
        .map(|b| {
            let mut acc = BlockSum::default();
            for i in b * BLOCK_ROWS..((b + 1) * BLOCK_ROWS).min(x.n()) {
                let xi = x.row(i);
                let mut row = 0.0;
                for yj in y.rows() {
                    let k = kernel_value(xi, yj, sigma2);
                    if k < SATURATION_FLOOR {
                        acc.underflowed += 1;
                    }
                    row += k;
                }
                acc.sum += row;
            }
            acc
        })
        .collect();
    blocks.iter().fold(BlockSum::default(), |acc, b| BlockSum {
        sum: acc.sum + b.sum,
        underflowed: acc.underflowed + b.underflowed,
    })
}

/// Biased squared MMD between two embedding sets.
pub fn mmd2_biased(
    phi_a: &EmbeddingSet,
    phi_b: &EmbeddingSet,
    kernel: &KernelConfig,
    estimator: Estimator,
) -> Result<MmdResult> {
    if phi_a.dim() != phi_b.dim() {
        return Err(Error::DimensionMismatch {
            context: "mmd2 operands".into(),
            left: phi_a.dim(),
            right: phi_b.dim(),
        });
    }
    if estimator == Estimator::BiasedEqualN && phi_a.n() != phi_b.n() {
        return Err(Error::SampleCountMismatch {
            n_a: phi_a.n(),
            n_b: phi_b.n(),
        });
    }
    let sigma = kernel.resolve(phi_a, phi_b)?;
    mmd2_with_sigma(phi_a, phi_b, sigma, estimator)
}

/// As [`mmd2_biased`] with an already resolved bandwidth.
pub fn mmd2_with_sigma(
    phi_a: &EmbeddingSet,
    phi_b: &EmbeddingSet,
    sigma: f64,
    estimator: Estimator,
) -> Result<MmdResult> {
    check_sigma(sigma)?;
    if phi_a.dim() != phi_b.dim() {
        return Err(Error::DimensionMismatch {
            context: "mmd2 operands".into(),
            left: phi_a.dim(),
            right: phi_b.dim(),
        });
    }
    if estimator == Estimator::BiasedEqualN && phi_a.n() != phi_b.n() {
        return Err(Error::SampleCountMismatch {
            n_a: phi_a.n(),
            n_b: phi_b.n(),
        });
    }
    let sigma2 = sigma * sigma;
    let (na, nb) = (phi_a.n() as f64, phi_b.n() as f64);

    let aa = kernel_sum(phi_a, phi_a, sigma2);
    let bb = kernel_sum(phi_b, phi_b, sigma2);
    let ab = kernel_sum(phi_a, phi_b, sigma2);

    let raw = match estimator {
        Estimator::BiasedEqualN => (aa.sum + bb.sum - 2.0 * ab.sum) / (na * na),
        Estimator::BiasedGeneral => {
            aa.sum / (na * na) + bb.sum / (nb * nb) - 2.0 * ab.sum / (na * nb)
        }
    };
    if !raw.is_finite() || raw < -NEGATIVE_TOLERANCE {
        return Err(Error::InvalidValue(format!(
            "MMD² estimate {raw} violates nonnegativity"
        )));
    }

    let pairs = phi_a.n() * phi_b.n();
    let saturated = ab.underflowed as f64 > SATURATION_FRACTION * pairs as f64;
    if saturated {
        log::warn!(
            "kernel saturated: {} of {} cross pairs below {:e} at sigma = {}; \
             consider the median-heuristic bandwidth",
            ab.underflowed,
            pairs,
            SATURATION_FLOOR,
            sigma
        );
    }

    Ok(MmdResult {
        value: raw.max(0.0),
        raw_value: raw,
        n_a: phi_a.n(),
        n_b: phi_b.n(),
        dim: phi_a.dim(),
        resolved_sigma: sigma,
        estimator,
        saturated,
    })
}

/// σ with σ² equal to the median squared pairwise distance of `pooled`.
///
/// All distinct index pairs enter the median, zeros included; for an even
/// number of pairs the lower middle element is taken.
pub fn median_heuristic_bandwidth(pooled: &EmbeddingSet) -> Result<f64> {
    let n = pooled.n();
    if n < 2 {
        return Err(Error::DegenerateSet(format!(
            "median heuristic needs at least 2 samples, got {n}"
        )));
    }
    let mut d2: Vec<f64> = (0..n)
        .into_par_iter()
        .flat_map_iter(|i| {
            let xi = pooled.row(i);
            (i + 1..n).map(move |j| squared_distance(xi, pooled.row(j)))
        })
        .collect();
    let mid = (d2.len() - 1) / 2;
    let (_, median, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let median = *median;
    if median <= 0.0 {
        let all_zero = d2.iter().all(|&v| v == 0.0);
        return Err(Error::DegenerateSet(if all_zero {
            "all pairwise distances are zero".into()
        } else {
            "median pairwise distance is zero".into()
        }));
    }
    Ok(median.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(rows: &[&[f64]]) -> EmbeddingSet {
        EmbeddingSet::from_vecs(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn kernel_closed_forms() {
        assert_eq!(gaussian_kernel(&[3.7, -1.2], &[3.7, -1.2], 1.0).unwrap(), 1.0);
        let e1 = (-1.0f64).exp();
        assert!((gaussian_kernel(&[0.0], &[1.0], 1.0).unwrap() - 0.3678794412).abs() < 1e-10);
        assert!((gaussian_kernel(&[0.0, 0.0], &[2.0, 0.0], 2.0).unwrap() - e1).abs() < 1e-15);
    }

    #[test]
    fn kernel_errors() {
        assert!(matches!(
            gaussian_kernel(&[0.0], &[0.0, 1.0], 1.0),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            gaussian_kernel(&[f64::INFINITY], &[0.0], 1.0),
            Err(Error::InvalidValue(_))
        ));
        assert!(gaussian_kernel(&[0.0], &[0.0], 0.0).is_err());
        assert!(KernelConfig::fixed(-1.0).is_err());
    }

    #[test]
    fn singleton_and_duplicated_sets() {
        let expected = 2.0 * (1.0 - (-1.0f64).exp());
        let kernel = KernelConfig::default();
        let r = mmd2_biased(&set(&[&[0.0]]), &set(&[&[1.0]]), &kernel, Estimator::BiasedEqualN)
            .unwrap();
        assert!((r.value - 1.2642411177).abs() < 1e-10);
        assert!((r.value - expected).abs() < 1e-15);
        let r = mmd2_biased(
            &set(&[&[0.0], &[0.0]]),
            &set(&[&[1.0], &[1.0]]),
            &kernel,
            Estimator::BiasedEqualN,
        )
        .unwrap();
        assert!((r.value - expected).abs() < 1e-15);
        assert_eq!((r.n_a, r.n_b, r.dim, r.resolved_sigma), (2, 2, 1, 1.0));
    }

    #[test]
    fn identical_sets_in_any_order_give_zero() {
        let a = set(&[&[0.3, 1.0], &[2.0, -1.0], &[0.3, 1.0]]);
        let b = set(&[&[2.0, -1.0], &[0.3, 1.0], &[0.3, 1.0]]);
        let r = mmd2_biased(&a, &b, &KernelConfig::default(), Estimator::BiasedEqualN).unwrap();
        assert!(r.value <= 1e-12);
        let r = mmd2_biased(&a, &a, &KernelConfig::default(), Estimator::BiasedEqualN).unwrap();
        assert_eq!(r.raw_value, 0.0);
    }

    #[test]
    fn estimator_preconditions() {
        let a = set(&[&[0.0], &[1.0]]);
        let b = set(&[&[0.5]]);
        assert!(matches!(
            mmd2_biased(&a, &b, &KernelConfig::default(), Estimator::BiasedEqualN),
            Err(Error::SampleCountMismatch { n_a: 2, n_b: 1 })
        ));
        let r = mmd2_biased(&a, &b, &KernelConfig::default(), Estimator::BiasedGeneral).unwrap();
        // (2 + 2e^-1)/4 + 1 - 2·2e^-0.25/2
        let e = |x: f64| (-x).exp();
        let expected = (2.0 + 2.0 * e(1.0)) / 4.0 + 1.0 - 2.0 * (2.0 * e(0.25)) / 2.0;
        assert!((r.value - expected).abs() < 1e-15);
        let c = set(&[&[0.0, 1.0], &[1.0, 1.0]]);
        assert!(matches!(
            mmd2_biased(&a, &c, &KernelConfig::default(), Estimator::BiasedEqualN),
            Err(Error::DimensionMismatch { left: 1, right: 2, .. })
        ));
    }

    #[test]
    fn median_heuristic_examples() {
        assert_eq!(median_heuristic_bandwidth(&set(&[&[0.0], &[1.0]])).unwrap(), 1.0);
        assert_eq!(
            median_heuristic_bandwidth(&set(&[&[0.0], &[1.0], &[3.0]])).unwrap(),
            2.0
        );
        assert_eq!(
            median_heuristic_bandwidth(&set(&[&[0.0], &[0.0], &[2.0]])).unwrap(),
            2.0
        );
        // six pairs sorted {1, 1, 4, 4, 9, 16}: lower middle is 4
        assert_eq!(
            median_heuristic_bandwidth(&set(&[&[0.0], &[1.0], &[2.0], &[4.0]])).unwrap(),
            2.0
        );
    }

    #[test]
    fn median_heuristic_degenerate() {
        assert!(matches!(
            median_heuristic_bandwidth(&set(&[&[1.0, 2.0], &[1.0, 2.0]])),
            Err(Error::DegenerateSet(_))
        ));
        assert!(matches!(
            median_heuristic_bandwidth(&set(&[&[1.0]])),
            Err(Error::DegenerateSet(_))
        ));
    }

    #[test]
    fn saturation_is_flagged_not_altered() {
        let a = set(&[&[0.0], &[0.1]]);
        let b = set(&[&[100.0], &[100.1]]);
        let r = mmd2_biased(&a, &b, &KernelConfig::default(), Estimator::BiasedEqualN).unwrap();
        assert!(r.saturated);
        let e = (-0.01f64).exp();
        assert!((r.value - (2.0 + 2.0 * e) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn blocks_span_multiple_chunks() {
        // more rows than one block so the block fold is exercised
        let rows: Vec<Vec<f64>> = (0..600).map(|i| vec![(i as f64 * 0.37).sin()]).collect();
        let a = EmbeddingSet::from_vecs(&rows).unwrap();
        let b = a.translated(&[0.2]).unwrap();
        let fast = mmd2_biased(&a, &b, &KernelConfig::default(), Estimator::BiasedEqualN).unwrap();
        let mut s = 0.0;
        for x in a.rows() {
            for y in a.rows() {
                s += (-(x[0] - y[0]).powi(2)).exp();
            }
        }
        let mut c = 0.0;
        for x in a.rows() {
            for y in b.rows() {
                c += (-(x[0] - y[0]).powi(2)).exp();
            }
        }
        let naive = (2.0 * s - 2.0 * c) / 360000.0;
        assert!((fast.value - naive).abs() < 1e-10);
    }
}
