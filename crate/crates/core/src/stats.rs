//! Photon-number distributions and their factorial moments.
//!
//! A [`PhotonDistribution`] is the per-pulse photon-number statistics of an
//! emitter or a cluster of emitters, truncated to a finite support. Emitters
//! are independent, so the statistics of a cluster are the convolution of the
//! emitter statistics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the total probability of a distribution.
pub const NORMALIZATION_TOL: f64 = 1e-12;

/// Tail mass below which reference distributions are truncated. Far below
/// double-precision resolution of the total, so that high-order factorial
/// moments are unaffected by the cut.
pub const TAIL_MASS: f64 = 1e-20;

/// Highest factorial-moment order kept accurate by the truncation of dim
/// reference distributions: for means below one the cut is tightened to
/// `TAIL_MASS * mean^TAIL_ORDER`.
pub const TAIL_ORDER: i32 = 8;

fn tail_cut(mean: f64) -> f64 {
    TAIL_MASS * mean.min(1.0).powi(TAIL_ORDER)
}

/// Per-pulse photon-number probabilities `p[n]` for `n = 0..=n_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PhotonDistribution {
    probs: Vec<f64>,
}

impl TryFrom<Vec<f64>> for PhotonDistribution {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PhotonDistribution> for Vec<f64> {
    fn from(d: PhotonDistribution) -> Self {
        d.probs
    }
}

impl PhotonDistribution {
    /// Validates and wraps a probability vector.
    ///
    /// Entries within 1e-14 outside of `[0, 1]` are clamped; anything further
    /// out, or a total that differs from one by more than
    /// [`NORMALIZATION_TOL`], is rejected.
    pub fn new(mut probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Domain("distribution needs at least one entry".into()));
        }
        for (n, p) in probs.iter_mut().enumerate() {
            if !p.is_finite() || *p < -1e-14 || *p > 1.0 + 1e-14 {
                return Err(Error::Infeasible { name: format!("p{n}"), value: *p });
            }
            *p = p.clamp(0.0, 1.0);
        }
        let total: f64 = probs.iter().sum();
        if (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain(format!(
                "probabilities sum to {total:.15}, not 1"
            )));
        }
        Ok(Self { probs })
    }

    /// Wraps a vector that is a distribution up to rounding, renormalizing it.
    pub(crate) fn from_normalized(mut probs: Vec<f64>) -> Self {
        for p in probs.iter_mut() {
            *p = p.max(0.0);
        }
        let total: f64 = probs.iter().sum();
        if total > 0.0 {
            for p in probs.iter_mut() {
                *p /= total;
            }
        }
        Self { probs }
    }

    pub fn vacuum() -> Self {
        Self { probs: vec![1.0] }
    }

    /// Fock state `|n>`.
    pub fn fock(n: usize) -> Self {
        let mut probs = vec![0.0; n + 1];
        probs[n] = 1.0;
        Self { probs }
    }

    /// Poisson statistics of a coherent state, truncated at `n_max` and renormalized.
    pub fn poisson_truncated(mean: f64, n_max: usize) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!("Poisson mean {mean} must be >= 0")));
        }
        let mut probs = Vec::with_capacity(n_max + 1);
        let mut p = (-mean).exp();
        for n in 0..=n_max {
            if n > 0 {
                p *= mean / n as f64;
            }
            probs.push(p);
        }
        Ok(Self::from_normalized(probs))
    }

    /// Poisson statistics truncated where the remaining tail mass drops below [`TAIL_MASS`],
/// tightened for dim sources (see [`TAIL_ORDER`]).
    pub fn poisson(mean: f64) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!("Poisson mean {mean} must be >= 0")));
        }
        // past the mode the tail after n is bounded by p_n (n+1) / (n+1-mean)
        let mut p = (-mean).exp();
        let mut n = 0usize;
        loop {
            let next = (n + 1) as f64;
            if next > mean && p * next / (next - mean) <= tail_cut(mean) {
                break;
            }
            n += 1;
            p *= mean / n as f64;
        }
        Self::poisson_truncated(mean, n)
    }

    /// Thermal (geometric) statistics truncated at `n_max` and renormalized.
    pub fn thermal_truncated(mean: f64, n_max: usize) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!("thermal mean {mean} must be >= 0")));
        }
        let ratio = mean / (1.0 + mean);
        let mut probs = Vec::with_capacity(n_max + 1);
        let mut p = 1.0 / (1.0 + mean);
        for _ in 0..=n_max {
            probs.push(p);
            p *= ratio;
        }
        Ok(Self::from_normalized(probs))
    }

    /// Thermal statistics truncated where the tail mass drops below [`TAIL_MASS`],
/// tightened for dim sources (see [`TAIL_ORDER`]).
    pub fn thermal(mean: f64) -> Result<Self> {
        if !(mean >= 0.0) || !mean.is_finite() {
            return Err(Error::Domain(format!("thermal mean {mean} must be >= 0")));
        }
        if mean == 0.0 {
            return Ok(Self::vacuum());
        }
        // tail beyond n_max is ratio^(n_max+1)
        let ratio = mean / (1.0 + mean);
        let n_max = (tail_cut(mean).ln() / ratio.ln()).ceil().max(1.0) as usize;
        Self::thermal_truncated(mean, n_max)
    }

    /// Weighted mixture of distributions. Weights must be non-negative and sum to one.
    pub fn mixture(components: &[(f64, &PhotonDistribution)]) -> Result<Self> {
        let total: f64 = components.iter().map(|(w, _)| *w).sum();
        if components.iter().any(|(w, _)| *w < 0.0) || (total - 1.0).abs() > NORMALIZATION_TOL {
            return Err(Error::Domain("mixture weights must be >= 0 and sum to 1".into()));
        }
        let len = components.iter().map(|(_, d)| d.probs.len()).max().unwrap_or(1);
        let mut probs = vec![0.0; len];
        for (w, d) in components {
            for (acc, p) in probs.iter_mut().zip(&d.probs) {
                *acc += w * p;
            }
        }
        Self::new(probs)
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn n_max(&self) -> usize {
        self.probs.len() - 1
    }

    pub fn mean(&self) -> f64 {
        factorial_moment(self, 1)
    }

    /// Probability-generating function `E[z^n]`.
    pub fn pgf(&self, z: f64) -> f64 {
        // Horner from the top
        self.probs.iter().rev().fold(0.0, |acc, p| acc * z + p)
    }

    /// Drops trailing zero probabilities.
    pub fn trimmed(mut self) -> Self {
        while self.probs.len() > 1 && self.probs[self.probs.len() - 1] == 0.0 {
            self.probs.pop();
        }
        self
    }
}

/// Factorial moments `F_k = E[n (n-1) ... (n-k+1)]` for `k = 1..=k_max`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FactorialMoments {
    moments: Vec<f64>,
}

impl FactorialMoments {
    pub fn of(dist: &PhotonDistribution, k_max: usize) -> Self {
        Self { moments: (1..=k_max).map(|k| factorial_moment(dist, k)).collect() }
    }

    /// `F_k`; `F_0 = 1`.
    pub fn get(&self, k: usize) -> Option<f64> {
        match k {
            0 => Some(1.0),
            _ => self.moments.get(k - 1).copied(),
        }
    }

    pub fn k_max(&self) -> usize {
        self.moments.len()
    }
}

/// `E[n (n-1) ... (n-k+1)]` over the truncated support. Orders beyond the
/// support give zero.
pub fn factorial_moment(dist: &PhotonDistribution, k: usize) -> f64 {
    dist.probs
        .iter()
        .enumerate()
        .skip(k)
        .map(|(n, p)| p * falling_factorial(n, k))
        .sum()
}

/// `n (n-1) ... (n-k+1)` as a float.
pub fn falling_factorial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    ((n - k + 1)..=n).fold(1.0, |acc, j| acc * j as f64)
}

/// Normalized correlation function `g(k) = F_k / F_1^k`.
pub fn g_exact(dist: &PhotonDistribution, k: usize) -> Result<f64> {
    let mean = dist.mean();
    if !(mean > 0.0) {
        return Err(Error::Degenerate("normalized correlation of a zero-mean distribution".into()));
    }
    if k <= 1 {
        return Ok(1.0);
    }
    Ok(factorial_moment(dist, k) / mean.powi(k as i32))
}

/// Distribution of the sum of two independent photon numbers.
pub fn convolve(a: &PhotonDistribution, b: &PhotonDistribution) -> PhotonDistribution {
    let mut out = vec![0.0; a.probs.len() + b.probs.len() - 1];
    for (i, pa) in a.probs.iter().enumerate() {
        if *pa == 0.0 {
            continue;
        }
        for (j, pb) in b.probs.iter().enumerate() {
            out[i + j] += pa * pb;
        }
    }
    PhotonDistribution { probs: out }
}

/// Photon statistics of `m` independent identical emitters, by repeated squaring.
pub fn cluster_distribution(emitter: &PhotonDistribution, m: usize) -> Result<PhotonDistribution> {
    if m < 1 {
        return Err(Error::Domain("cluster needs at least one emitter".into()));
    }
    let mut result: Option<PhotonDistribution> = None;
    let mut base = emitter.clone();
    let mut remaining = m;
    loop {
        if remaining & 1 == 1 {
            result = Some(match result {
                None => base.clone(),
                Some(r) => convolve(&r, &base),
            });
        }
        remaining >>= 1;
        if remaining == 0 {
            break;
        }
        base = convolve(&base, &base);
    }
    Ok(result.expect("m >= 1"))
}

/// Photon statistics of independent, possibly different emitters.
pub fn convolve_all<'a, I>(emitters: I) -> PhotonDistribution
where
    I: IntoIterator<Item = &'a PhotonDistribution>,
{
    emitters
        .into_iter()
        .fold(PhotonDistribution::vacuum(), |acc, d| convolve(&acc, d))
}

/// Smallest emitter model on `{0, 1, 2, 3}` with the given mean, `g(2)` and `g(3)`.
///
/// The moment system is triangular on this support: `F3 = 6 p3`,
/// `F2 = 2 p2 + 6 p3`, `F1 = p1 + 2 p2 + 3 p3`.
pub fn solve_distribution(mean: f64, g2: f64, g3: f64) -> Result<PhotonDistribution> {
    if !(mean > 0.0) || !mean.is_finite() {
        return Err(Error::Domain(format!("mean {mean} must be > 0")));
    }
    if !(g2 >= 0.0) || !(g3 >= 0.0) || !g2.is_finite() || !g3.is_finite() {
        return Err(Error::Domain(format!("g2 = {g2}, g3 = {g3} must be >= 0")));
    }
    let f2 = g2 * mean * mean;
    let f3 = g3 * mean * mean * mean;
    let p3 = f3 / 6.0;
    let p2 = (f2 - 6.0 * p3) / 2.0;
    let p1 = mean - 2.0 * p2 - 3.0 * p3;
    let p0 = 1.0 - p1 - p2 - p3;
    let probs = [p0, p1, p2, p3];
    for (n, p) in probs.iter().enumerate().rev() {
        if *p < -1e-15 || *p > 1.0 + 1e-15 {
            return Err(Error::Infeasible { name: format!("p{n}"), value: *p });
        }
    }
    Ok(PhotonDistribution { probs: probs.iter().map(|p| p.clamp(0.0, 1.0)).collect() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_level(p1: f64) -> PhotonDistribution {
        PhotonDistribution::new(vec![1.0 - p1, p1]).unwrap()
    }

    #[test]
    fn factorial_moment_examples() {
        assert_eq!(factorial_moment(&PhotonDistribution::fock(1), 2), 0.0);
        let poisson = PhotonDistribution::poisson_truncated(0.5, 20).unwrap();
        assert_abs_diff_eq!(factorial_moment(&poisson, 2), 0.25, epsilon = 1e-9);
        let thermal = PhotonDistribution::thermal_truncated(0.5, 40).unwrap();
        assert_abs_diff_eq!(factorial_moment(&thermal, 3), 0.75, epsilon = 1e-6);
        assert_eq!(factorial_moment(&PhotonDistribution::fock(2), 3), 0.0);
    }

    #[test]
    fn g_exact_examples() {
        let poisson = PhotonDistribution::poisson(0.7).unwrap();
        for k in 1..=6 {
            assert_abs_diff_eq!(g_exact(&poisson, k).unwrap(), 1.0, epsilon = 1e-10);
        }
        assert_eq!(g_exact(&PhotonDistribution::fock(1), 2).unwrap(), 0.0);
        let thermal = PhotonDistribution::thermal(0.5).unwrap();
        assert_abs_diff_eq!(g_exact(&thermal, 3).unwrap(), 6.0, epsilon = 1e-6);
        assert!(matches!(g_exact(&PhotonDistribution::vacuum(), 2), Err(Error::Degenerate(_))));
    }

    #[test]
    fn convolve_examples() {
        let d = solve_distribution(0.2, 0.1, 0.01).unwrap();
        assert_eq!(convolve(&PhotonDistribution::vacuum(), &d), d);
        let two = convolve(&PhotonDistribution::fock(1), &PhotonDistribution::fock(1));
        assert_eq!(two.probs(), &[0.0, 0.0, 1.0]);
        let pair = convolve(&two_level(0.1), &two_level(0.1));
        assert_abs_diff_eq!(g_exact(&pair, 2).unwrap(), 0.5, epsilon = 1e-12);
    }

    #[test]
    fn cluster_examples() {
        let e = two_level(0.1);
        assert_eq!(cluster_distribution(&e, 1).unwrap(), e);
        let c2 = cluster_distribution(&e, 2).unwrap();
        for (a, b) in c2.probs().iter().zip([0.81, 0.18, 0.01]) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-15);
        }
        let e = solve_distribution(0.01, 0.01, 0.0).unwrap();
        let c14 = cluster_distribution(&e, 14).unwrap();
        assert_abs_diff_eq!(c14.mean(), 0.14, epsilon = 1e-12);
        assert_eq!(c14.n_max(), 42);
        assert!(cluster_distribution(&e, 0).is_err());
    }

    #[test]
    fn cluster_matches_iterated_convolution() {
        let e = solve_distribution(0.3, 0.2, 0.05).unwrap();
        let mut iter = e.clone();
        for m in 2..=17 {
            iter = convolve(&iter, &e);
            let fast = cluster_distribution(&e, m).unwrap();
            for (a, b) in fast.probs().iter().zip(iter.probs()) {
                assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn solve_distribution_examples() {
        let d = solve_distribution(0.1, 0.0, 0.0).unwrap();
        assert_abs_diff_eq!(d.probs()[1], 0.1, epsilon = 1e-15);
        assert_abs_diff_eq!(d.probs()[0], 0.9, epsilon = 1e-15);
        assert_eq!(d.probs()[2], 0.0);
        assert_eq!(d.probs()[3], 0.0);

        let d = solve_distribution(0.1, 0.01, 0.0).unwrap();
        assert_eq!(d.probs()[3], 0.0);
        assert_abs_diff_eq!(d.probs()[2], 5e-5, epsilon = 1e-18);
        assert_abs_diff_eq!(d.probs()[1], 0.1 - 1e-4, epsilon = 1e-16);
        assert_abs_diff_eq!(g_exact(&d, 2).unwrap(), 0.01, epsilon = 1e-10);
        assert_abs_diff_eq!(g_exact(&d, 3).unwrap(), 0.0, epsilon = 1e-10);

        match solve_distribution(0.5, 4.0, 0.0) {
            Err(Error::Infeasible { name, value }) => {
                assert_eq!(name, "p1");
                assert_abs_diff_eq!(value, -0.5, epsilon = 1e-12);
            }
            other => panic!("expected infeasibility, got {other:?}"),
        }
    }

    #[test]
    fn infeasibility_matches_brute_force_scan() {
        // Independent route: a distribution on {0..3} with the targets exists iff
        // some p3 on a grid yields non-negative p0..p2 from the lower-order
        // moments. The grid contains the unique solution p3 = F3 / 6 when it exists.
        for &(mean, g2, g3) in &[(0.5, 4.0, 0.0), (0.1, 0.01, 0.0), (0.9, 0.1, 0.0), (0.3, 2.0, 9.0)] {
            let f2 = g2 * mean * mean;
            let f3 = g3 * mean * mean * mean;
            let p3 = f3 / 6.0;
            let p2 = f2 / 2.0 - 3.0 * p3;
            let p1 = mean - 2.0 * p2 - 3.0 * p3;
            let p0 = 1.0 - p1 - p2 - p3;
            let feasible = [p0, p1, p2, p3].iter().all(|p| (-1e-15..=1.0).contains(p));
            assert_eq!(solve_distribution(mean, g2, g3).is_ok(), feasible, "{mean} {g2} {g3}");
        }
    }

    #[test]
    fn thermal_and_poisson_auto_truncation() {
        let t = PhotonDistribution::thermal(2.0).unwrap();
        let ratio: f64 = 2.0 / 3.0;
        assert!(ratio.powi(t.n_max() as i32 + 1) < TAIL_MASS);
        let p = PhotonDistribution::poisson(3.0).unwrap();
        assert_abs_diff_eq!(p.mean(), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn rejects_bad_vectors() {
        assert!(PhotonDistribution::new(vec![]).is_err());
        assert!(PhotonDistribution::new(vec![0.5, 0.4]).is_err());
        assert!(PhotonDistribution::new(vec![1.2, -0.2]).is_err());
        assert!(PhotonDistribution::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn pgf_matches_direct_sum() {
        let d = solve_distribution(0.4, 0.3, 0.1).unwrap();
        let z: f64 = 0.37;
        let direct: f64 = d.probs().iter().enumerate().map(|(n, p)| p * z.powi(n as i32)).sum();
        assert_abs_diff_eq!(d.pgf(z), direct, epsilon = 1e-15);
    }
}
