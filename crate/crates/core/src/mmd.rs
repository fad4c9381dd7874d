//! RBF kernel and the squared maximum mean discrepancy between two
//! equal-size samples, with analytic gradients with respect to one sample.
//!
//! Samples are `m x d` matrices, one point per row. All reductions run in a
//! fixed sequential order, so results are bitwise reproducible.

use ndarray::{Array2, ArrayView2, Axis};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MmdError {
    #[error("bandwidth must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("dimension mismatch: {0} vs {1}")]
    Dimension(usize, usize),
    #[error("sample sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("need at least 2 points per sample, got {0}")]
    TooFewPoints(usize),
    #[error("non-finite input")]
    NonFinite,
}

pub type Result<T> = std::result::Result<T, MmdError>;

/// Which finite-sample estimator [`mmd2`] computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Estimator {
    /// Within-sample U-statistics minus `2/m^2` times the cross sum.
    #[default]
    Unbiased,
    /// Cross sum added with weight `+1/m^2`, as printed in the original
    /// derivation. Kept only to audit that formula; it is not a divergence.
    Literal,
}

impl Estimator {
    fn cross_weight(self, m: usize) -> f64 {
        let m2 = (m * m) as f64;
        match self {
            Estimator::Unbiased => -2.0 / m2,
            Estimator::Literal => 1.0 / m2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MmdConfig {
    pub sigma: f64,
    pub estimator: Estimator,
}

impl MmdConfig {
    pub fn new(sigma: f64) -> Result<Self> {
        check_sigma(sigma)?;
        Ok(Self {
            sigma,
            estimator: Estimator::Unbiased,
        })
    }
}

/// `d/dz` of the kernel sums, one row per point of the differentiated sample.
pub type KernelGradient = Array2<f64>;

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(MmdError::BadSigma(sigma))
    }
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `exp(-|z - z'|^2 / (2 sigma^2))`.
pub fn rbf_kernel(z: &[f64], z2: &[f64], sigma: f64) -> Result<f64> {
    check_sigma(sigma)?;
    if z.len() != z2.len() {
        return Err(MmdError::Dimension(z.len(), z2.len()));
    }
    if z.iter().chain(z2).any(|v| !v.is_finite()) {
        return Err(MmdError::NonFinite);
    }
    Ok((-sq_dist(z, z2) / (2.0 * sigma * sigma)).exp())
}

fn check_pair(s: &ArrayView2<f64>, t: &ArrayView2<f64>) -> Result<()> {
    if s.ncols() != t.ncols() {
        return Err(MmdError::Dimension(s.ncols(), t.ncols()));
    }
    if s.nrows() != t.nrows() {
        return Err(MmdError::SizeMismatch(s.nrows(), t.nrows()));
    }
    if s.nrows() < 2 {
        return Err(MmdError::TooFewPoints(s.nrows()));
    }
    if s.iter().chain(t.iter()).any(|v| !v.is_finite()) {
        return Err(MmdError::NonFinite);
    }
    Ok(())
}

fn row<'a>(x: &ArrayView2<'a, f64>, i: usize) -> &'a [f64] {
    // callers pass standard-layout views
    (*x)
        .index_axis_move(Axis(0), i)
        .to_slice()
        .expect("sample rows must be contiguous")
}

/// Kernel sums needed by the estimator. The `*_grad` fields hold derivatives
/// with respect to the rows of the first sample.
pub(crate) struct KernelSums {
    pub within: f64,
    pub within_grad: Option<Array2<f64>>,
}

/// `(1/(m(m-1))) sum_{i != j} k(x_i, x_j)` and optionally its gradient.
pub(crate) fn within_term(x: &ArrayView2<f64>, sigma: f64, with_grad: bool) -> KernelSums {
    let (m, d) = x.dim();
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let inv_s2 = 1.0 / (sigma * sigma);
    let norm = 1.0 / (m * (m - 1)) as f64;
    let mut sum = 0.0;
    let mut grad = with_grad.then(|| Array2::<f64>::zeros((m, d)));
    for i in 0..m {
        let xi = row(x, i);
        for j in (i + 1)..m {
            let xj = row(x, j);
            let k = (-sq_dist(xi, xj) * inv2s2).exp();
            sum += 2.0 * k;
            if let Some(g) = grad.as_mut() {
                // each unordered pair appears twice in the double sum
                let c = 2.0 * norm * k * inv_s2;
                for t in 0..d {
                    let diff = xi[t] - xj[t];
                    g[[i, t]] -= c * diff;
                    g[[j, t]] += c * diff;
                }
            }
        }
    }
    KernelSums {
        within: sum * norm,
        within_grad: grad,
    }
}

/// `sum_{i,j} k(x_i, y_j)` and optionally its gradient with respect to `x`.
pub(crate) fn cross_term(
    x: &ArrayView2<f64>,
    y: &ArrayView2<f64>,
    sigma: f64,
    with_grad: bool,
) -> (f64, Option<Array2<f64>>) {
    let (m, d) = x.dim();
    let inv2s2 = 1.0 / (2.0 * sigma * sigma);
    let inv_s2 = 1.0 / (sigma * sigma);
    let mut sum = 0.0;
    let mut grad = with_grad.then(|| Array2::<f64>::zeros((m, d)));
    for i in 0..m {
        let xi = row(x, i);
        for j in 0..y.nrows() {
            let yj = row(y, j);
            let k = (-sq_dist(xi, yj) * inv2s2).exp();
            sum += k;
            if let Some(g) = grad.as_mut() {
                for t in 0..d {
                    g[[i, t]] -= k * inv_s2 * (xi[t] - yj[t]);
                }
            }
        }
    }
    (sum, grad)
}

/// Squared MMD between two samples of equal size `m >= 2`.
pub fn mmd2(s: ArrayView2<f64>, t: ArrayView2<f64>, cfg: &MmdConfig) -> Result<f64> {
    check_sigma(cfg.sigma)?;
    check_pair(&s, &t)?;
    let s = s.as_standard_layout();
    let t = t.as_standard_layout();
    let (s, t) = (s.view(), t.view());
    let m = s.nrows();
    let ss = within_term(&s, cfg.sigma, false).within;
    let tt = within_term(&t, cfg.sigma, false).within;
    let (st, _) = cross_term(&s, &t, cfg.sigma, false);
    Ok(ss + tt + cfg.estimator.cross_weight(m) * st)
}

/// Gradient of [`mmd2`]`(gen, other)` with respect to every point of `gen`.
pub fn mmd2_grad(
    gen: ArrayView2<f64>,
    other: ArrayView2<f64>,
    cfg: &MmdConfig,
) -> Result<KernelGradient> {
    Ok(mmd2_with_grad(gen, other, cfg)?.1)
}

/// Value and gradient of [`mmd2`] in one pass.
pub fn mmd2_with_grad(
    gen: ArrayView2<f64>,
    other: ArrayView2<f64>,
    cfg: &MmdConfig,
) -> Result<(f64, KernelGradient)> {
    check_sigma(cfg.sigma)?;
    check_pair(&gen, &other)?;
    let g = gen.as_standard_layout();
    let o = other.as_standard_layout();
    let (g, o) = (g.view(), o.view());
    let m = g.nrows();
    let w = cfg.estimator.cross_weight(m);
    let gg = within_term(&g, cfg.sigma, true);
    let oo = within_term(&o, cfg.sigma, false).within;
    let (go, go_grad) = cross_term(&g, &o, cfg.sigma, true);
    let mut grad = gg.within_grad.expect("requested");
    grad.scaled_add(w, &go_grad.expect("requested"));
    Ok((gg.within + oo + w * go, grad))
}

/// Median heuristic bandwidth: `sigma^2` is the median of pairwise squared
/// distances among all rows of the given batches. Falls back to 1 when the
/// median is zero (degenerate batch) or there are fewer than two rows.
pub fn median_heuristic(batches: &[ArrayView2<f64>]) -> f64 {
    let rows: Vec<Vec<f64>> = batches
        .iter()
        .flat_map(|b| b.axis_iter(Axis(0)).map(|r| r.to_vec()))
        .collect();
    let n = rows.len();
    if n < 2 {
        return 1.0;
    }
    let mut d2 = Vec::with_capacity(n * (n - 1) / 2);
    for i in 0..n {
        for j in (i + 1)..n {
            d2.push(sq_dist(&rows[i], &rows[j]));
        }
    }
    let len = d2.len();
    let mid = len / 2;
    let (_, upper, _) = d2.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    let med = if len % 2 == 1 {
        upper
    } else {
        let lower = d2[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    };
    if med > 0.0 && med.is_finite() {
        med.sqrt()
    } else {
        1.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn kernel_values() {
        assert_eq!(rbf_kernel(&[1.0, 2.0], &[1.0, 2.0], 0.7).unwrap(), 1.0);
        // |z - z'|^2 = 2 sigma^2
        let s = 1.5f64;
        let v = rbf_kernel(&[0.0], &[(2.0f64).sqrt() * s], s).unwrap();
        assert!((v - 0.367879441171442).abs() < 1e-12);
        let v = rbf_kernel(&[0.0, 0.0], &[3.0, 4.0], 1.0).unwrap();
        assert!((v - (-12.5f64).exp()).abs() < 1e-18);
        assert!((v - 3.7267e-6).abs() < 1e-9);
        assert!(rbf_kernel(&[0.0], &[f64::NAN], 1.0).is_err());
        assert!(rbf_kernel(&[0.0], &[0.0], 0.0).is_err());
        assert!(rbf_kernel(&[0.0], &[0.0, 1.0], 1.0).is_err());
    }

    #[test]
    fn closed_forms() {
        let cfg = MmdConfig::new(1.0).unwrap();
        let zero = array![[0.0], [0.0]];
        let two = array![[2.0], [2.0]];
        assert_eq!(mmd2(zero.view(), zero.view(), &cfg).unwrap(), 0.0);
        let v = mmd2(zero.view(), two.view(), &cfg).unwrap();
        assert!((v - 2.0 * (1.0 - (-2.0f64).exp())).abs() < 1e-12);
        assert!((v - 1.729329).abs() < 1e-6);
    }

    #[test]
    fn literal_estimator_adds_cross_term() {
        let cfg = MmdConfig {
            sigma: 1.0,
            estimator: Estimator::Literal,
        };
        let zero = array![[0.0], [0.0]];
        let two = array![[2.0], [2.0]];
        // 1 + 1 + (1/4) * 4 e^{-2}
        let v = mmd2(zero.view(), two.view(), &cfg).unwrap();
        assert!((v - (2.0 + (-2.0f64).exp())).abs() < 1e-12);
    }

    #[test]
    fn argument_errors() {
        let cfg = MmdConfig::new(1.0).unwrap();
        let a = array![[0.0], [1.0]];
        let b = array![[0.0], [1.0], [2.0]];
        let one = array![[0.0]];
        let wide = array![[0.0, 0.0], [1.0, 1.0]];
        assert_eq!(mmd2(a.view(), b.view(), &cfg), Err(MmdError::SizeMismatch(2, 3)));
        assert_eq!(mmd2(one.view(), one.view(), &cfg), Err(MmdError::TooFewPoints(1)));
        assert_eq!(mmd2(a.view(), wide.view(), &cfg), Err(MmdError::Dimension(1, 2)));
        assert!(mmd2_grad(a.view(), b.view(), &cfg).is_err());
        assert!(MmdConfig::new(-1.0).is_err());
    }

    #[test]
    fn identical_points_have_zero_gradient() {
        let cfg = MmdConfig::new(0.8).unwrap();
        let x = array![[1.0, -2.0], [1.0, -2.0], [1.0, -2.0]];
        let g = mmd2_grad(x.view(), x.view(), &cfg).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn median_heuristic_values() {
        let x = array![[0.0], [1.0], [3.0]];
        // squared distances 1, 9, 4 -> median 4
        assert!((median_heuristic(&[x.view()]) - 2.0).abs() < 1e-12);
        let y = array![[5.0], [5.0]];
        assert_eq!(median_heuristic(&[y.view()]), 1.0);
        let a = array![[0.0], [2.0]];
        let b = array![[0.0], [2.0]];
        // distances 4, 0, 4, 4, 0, 4 -> sorted 0 0 4 4 4 4 -> median 4
        assert!((median_heuristic(&[a.view(), b.view()]) - 2.0).abs() < 1e-12);
    }
}
