//! Choosing the maximal sample size `N*` and critical count `k*`.
//!
//! The fixed-sample test rejects when more than `k*` of `N*` subjects show the
//! side effect. Two routes produce `(N*, k*)`:
//!
//! * [`design_approx`] / [`design_local`]: normal-approximation formulas, with
//!   `[x]` the nearest integer (half away from zero) and both z-factors taken as
//!   upper-tail quantiles `Φ⁻¹(1−α)`, `Φ⁻¹(1−β)`.
//! * [`design_exact`]: a scan over `N` using exact binomial tails.
//!
//! Whatever the route, [`TestDesign`] stores the exact attained error
//! probabilities.

use serde::{Deserialize, Serialize};

use crate::distributions::{binom_tail, binom_tail_normal, upper_quantile, Probability};
use crate::error::{domain, Error, Result};

/// Default cap on `N` for [`design_exact`].
pub const DEFAULT_EXACT_CAP: u64 = 10_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DesignParams {
    pub alpha: Probability,
    pub beta: Probability,
    pub theta0: Probability,
    pub theta1: Probability,
}

impl DesignParams {
    pub fn new(alpha: f64, beta: f64, theta0: f64, theta1: f64) -> Result<Self> {
        let params = Self {
            alpha: Probability::new(alpha)?,
            beta: Probability::new(beta)?,
            theta0: Probability::new(theta0)?,
            theta1: Probability::new(theta1)?,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let (a, b, t0, t1) = self.values();
        if !(a > 0.0 && a < 1.0) || !(b > 0.0 && b < 1.0) {
            return Err(domain(format!("error levels must lie in (0, 1): alpha={a}, beta={b}")));
        }
        if !(t0 > 0.0 && t0 < t1 && t1 < 1.0) {
            return Err(domain(format!("need 0 < theta0 < theta1 < 1, got {t0}, {t1}")));
        }
        Ok(())
    }

    fn values(&self) -> (f64, f64, f64, f64) {
        (self.alpha.get(), self.beta.get(), self.theta0.get(), self.theta1.get())
    }
}

/// Local alternative `θ₁ = θ₀(1+δ)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalDesignParams {
    pub alpha: Probability,
    pub beta: Probability,
    pub theta0: Probability,
    pub delta: f64,
}

impl LocalDesignParams {
    pub fn new(alpha: f64, beta: f64, theta0: f64, delta: f64) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(domain(format!("delta must be positive, got {delta}")));
        }
        let params = Self {
            alpha: Probability::new(alpha)?,
            beta: Probability::new(beta)?,
            theta0: Probability::new(theta0)?,
            delta,
        };
        params.to_params()?;
        Ok(params)
    }

    pub fn theta1(&self) -> f64 {
        self.theta0.get() * (1.0 + self.delta)
    }

    pub fn to_params(&self) -> Result<DesignParams> {
        DesignParams::new(self.alpha.get(), self.beta.get(), self.theta0.get(), self.theta1())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DesignMode {
    Approximate,
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestDesign {
    pub n_star: u64,
    pub k_star: u64,
    /// `P_{θ₀}(S_{N*} > k*)`.
    pub attained_alpha: f64,
    /// `P_{θ₁}(S_{N*} ≤ k*)`.
    pub attained_beta: f64,
    pub mode: DesignMode,
    pub params: DesignParams,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

impl TestDesign {
    /// Design with given counts; attained errors are computed exactly.
    pub fn from_counts(n_star: u64, k_star: u64, params: DesignParams, mode: DesignMode) -> Result<Self> {
        params.validate()?;
        if n_star == 0 || k_star >= n_star {
            return Err(Error::DegenerateDesign { k: k_star as i64, max: n_star.saturating_sub(1) });
        }
        let attained_alpha = binom_tail(k_star, n_star, params.theta0.get())?;
        let attained_beta = 1.0 - binom_tail(k_star, n_star, params.theta1.get())?;
        Ok(Self { n_star, k_star, attained_alpha, attained_beta, mode, params, delta: None })
    }

    /// Number of side effects that stops the trial with rejection.
    pub fn stop_count(&self) -> u64 {
        self.k_star + 1
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.n_star == 0 || self.k_star >= self.n_star {
            return Err(Error::DegenerateDesign { k: self.k_star as i64, max: self.n_star.saturating_sub(1) });
        }
        Ok(())
    }
}

/// Attained error probabilities under the continuity-corrected normal
/// approximation to the binomial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttainedErrors {
    pub alpha: f64,
    pub beta: f64,
}

pub fn normal_attained_errors(design: &TestDesign) -> Result<AttainedErrors> {
    let (n, k) = (design.n_star, design.k_star);
    Ok(AttainedErrors {
        alpha: binom_tail_normal(k, n, design.params.theta0.get())?,
        beta: 1.0 - binom_tail_normal(k, n, design.params.theta1.get())?,
    })
}

/// Nearest integer, halves rounded away from zero.
fn nearest(x: f64) -> i64 {
    x.round() as i64
}

/// Unrounded critical value `N(z√(θ₀(1−θ₀)/N) + θ₀) − ½`.
fn critical_raw(n: f64, theta0: f64, z_alpha: f64) -> f64 {
    n * (z_alpha * (theta0 * (1.0 - theta0) / n).sqrt() + theta0) - 0.5
}

fn check_theta0(theta0: f64) -> Result<()> {
    if theta0 > 0.0 && theta0 < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("theta0 must lie in (0, 1), got {theta0}")))
    }
}

/// Critical count for a given maximal sample size.
pub fn k_for_n(n: u64, theta0: f64, alpha: f64) -> Result<u64> {
    if n == 0 {
        return Err(domain("maximal sample size must be at least 1"));
    }
    check_theta0(theta0)?;
    let z = upper_quantile(alpha)?;
    let k = nearest(critical_raw(n as f64, theta0, z));
    if k < 0 || k as u64 >= n {
        return Err(Error::DegenerateDesign { k, max: n - 1 });
    }
    Ok(k as u64)
}

/// Maximal sample size whose critical count is `k`: the smallest integer `N`
/// at which the unrounded critical value reaches `k`.
pub fn n_for_k(k: u64, theta0: f64, alpha: f64) -> Result<u64> {
    check_theta0(theta0)?;
    let z = upper_quantile(alpha)?;
    let target = k as f64;
    let g = |n: f64| critical_raw(n, theta0, z);

    // g(N) = θ₀N + z√(θ₀(1−θ₀))·√N − ½ is increasing in √N once past its
    // minimum; bracket the crossing, bisect, then settle on integers.
    let mut lo = 1.0f64;
    if z < 0.0 {
        let u_min = -z * (theta0 * (1.0 - theta0)).sqrt() / (2.0 * theta0);
        lo = lo.max(u_min * u_min);
    }
    let mut hi = lo.max(1.0);
    while g(hi) < target {
        hi *= 2.0;
        if hi > 1e18 {
            return Err(domain(format!("no sample size reaches critical count {k}")));
        }
    }
    if g(lo) < target {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < target {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo < 1e-9 * hi.max(1.0) {
                break;
            }
        }
    } else {
        hi = lo;
    }
    let mut n = hi.ceil().max(1.0) as u64;
    while n > 1 && g((n - 1) as f64) >= target {
        n -= 1;
    }
    while g(n as f64) < target {
        n += 1;
    }

    match k_for_n(n, theta0, alpha) {
        Ok(got) if got == k => Ok(n),
        got => {
            // rounding jumped past k; report the neighbours that do occur
            let above = got.ok().filter(|&v| v > k);
            let below = if n > 1 { k_for_n(n - 1, theta0, alpha).ok().filter(|&v| v < k) } else { None };
            Err(Error::Unattainable { k, below, above })
        }
    }
}

fn approx_n_star(z_alpha: f64, z_beta: f64, theta0: f64, theta1: f64) -> f64 {
    let num = z_alpha * (theta0 * (1.0 - theta0)).sqrt() + z_beta * (theta1 * (1.0 - theta1)).sqrt();
    let ratio = num / (theta1 - theta0);
    ratio * ratio
}

fn finish_approx(n_raw: f64, params: DesignParams) -> Result<TestDesign> {
    let n = nearest(n_raw);
    if n < 1 {
        return Err(Error::DegenerateDesign { k: 0, max: 0 });
    }
    let n = n as u64;
    let k = k_for_n(n, params.theta0.get(), params.alpha.get())?;
    TestDesign::from_counts(n, k, params, DesignMode::Approximate)
}

/// Normal-approximation design.
pub fn design_approx(params: DesignParams) -> Result<TestDesign> {
    params.validate()?;
    let (a, b, t0, t1) = params.values();
    let n_raw = approx_n_star(upper_quantile(a)?, upper_quantile(b)?, t0, t1);
    finish_approx(n_raw, params)
}

/// Normal-approximation design for the local alternative `θ₁ = θ₀(1+δ)`,
/// written in terms of `δ`.
pub fn design_local(local: LocalDesignParams) -> Result<TestDesign> {
    let params = local.to_params()?;
    let (a, b, t0) = (local.alpha.get(), local.beta.get(), local.theta0.get());
    let d = local.delta;
    let za = upper_quantile(a)?;
    let zb = upper_quantile(b)?;
    let root = za / d * ((1.0 - t0) / t0).sqrt() + zb * ((1.0 + d) / (d * d) * (1.0 / t0 - 1.0 - d)).sqrt();
    let mut design = finish_approx(root * root, params)?;
    design.delta = Some(d);
    Ok(design)
}

/// Smallest `N` (then smallest `k`) whose exact binomial errors meet both
/// nominal levels, searching up to `cap`.
pub fn design_exact(params: DesignParams) -> Result<TestDesign> {
    design_exact_capped(params, DEFAULT_EXACT_CAP)
}

pub fn design_exact_capped(params: DesignParams, cap: u64) -> Result<TestDesign> {
    params.validate()?;
    let (a, b, t0, t1) = params.values();
    // Smallest k with P_{θ₀}(S_N > k) ≤ α never decreases in N and grows by at
    // most one per step, so it can be carried along the scan.
    let mut k = 0u64;
    for n in 1..=cap {
        while binom_tail(k, n, t0)? > a {
            k += 1;
        }
        if k >= n {
            continue;
        }
        let miss = 1.0 - binom_tail(k, n, t1)?;
        if miss <= b {
            return TestDesign::from_counts(n, k, params, DesignMode::Exact);
        }
    }
    Err(Error::SearchBound { cap })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(a: f64, b: f64, t0: f64, t1: f64) -> DesignParams {
        DesignParams::new(a, b, t0, t1).unwrap()
    }

    #[test]
    fn approx_designs_match_reference_counts() {
        let cases = [(0.0715, 12811, 878), (0.078, 3321, 239), (0.0975, 584, 47)];
        for (t1, n, k) in cases {
            let d = design_approx(params(0.05, 0.1, 0.065, t1)).unwrap();
            assert!(d.n_star.abs_diff(n) <= 1, "theta1={t1}: {}", d.n_star);
            assert_eq!(d.k_star, k_for_n(d.n_star, 0.065, 0.05).unwrap());
            assert_eq!(d.k_star, k);
            assert_eq!(d.mode, DesignMode::Approximate);
        }
    }

    #[test]
    fn local_designs_match_reference_counts() {
        let cases = [(0.05, 50269, 3358), (0.01, 1_236_886, 80848), (0.25, 2162, 159)];
        for (delta, n, k) in cases {
            let d = design_local(LocalDesignParams::new(0.05, 0.1, 0.065, delta).unwrap()).unwrap();
            assert!(d.n_star.abs_diff(n) <= 1, "delta={delta}: {}", d.n_star);
            assert_eq!(d.k_star, k);
            assert_eq!(d.delta, Some(delta));
        }
    }

    #[test]
    fn local_equals_approx_with_scaled_alternative() {
        for delta in [0.5, 0.25, 0.2, 0.1, 0.05, 0.01] {
            let local = LocalDesignParams::new(0.05, 0.1, 0.065, delta).unwrap();
            let a = design_local(local).unwrap();
            let b = design_approx(local.to_params().unwrap()).unwrap();
            assert_eq!((a.n_star, a.k_star), (b.n_star, b.k_star));
        }
    }

    #[test]
    fn attained_errors_are_exact_tails() {
        let d = design_approx(params(0.05, 0.1, 0.065, 0.0715)).unwrap();
        assert_eq!(d.attained_alpha, binom_tail(d.k_star, d.n_star, 0.065).unwrap());
        assert_eq!(d.attained_beta, 1.0 - binom_tail(d.k_star, d.n_star, 0.0715).unwrap());
    }

    #[test]
    fn k_for_n_examples() {
        assert_eq!(k_for_n(19821, 0.005, 0.05).unwrap(), 115);
        assert_eq!(k_for_n(12811, 0.065, 0.05).unwrap(), 878);
        assert_eq!(k_for_n(1, 0.5, 0.5).unwrap(), 0);
        assert!(k_for_n(0, 0.5, 0.5).is_err());
        // N=1 with a strict level pushes k to 1 = N
        assert!(matches!(k_for_n(1, 0.5, 0.01), Err(Error::DegenerateDesign { .. })));
    }

    #[test]
    fn n_for_k_examples() {
        assert_eq!(n_for_k(52, 0.002, 0.05).unwrap(), 20934);
        let n = n_for_k(878, 0.065, 0.05).unwrap();
        assert_eq!(k_for_n(n, 0.065, 0.05).unwrap(), 878);
        assert_eq!(n_for_k(0, 0.5, 0.5).unwrap(), 1);
    }

    #[test]
    fn n_for_k_reports_skipped_counts() {
        // with θ₀ near 1 the rounded critical value advances by more than one per unit N
        let mut skipped = None;
        for k in 0..40 {
            if let Err(Error::Unattainable { below, above, .. }) = n_for_k(k, 0.97, 0.01) {
                skipped = Some((k, below, above));
                break;
            }
        }
        let (k, below, above) = skipped.expect("some count is skipped");
        assert!(below.is_none_or(|b| b < k));
        assert!(above.is_none_or(|a| a > k));
    }

    #[test]
    fn exact_design_meets_nominal_levels() {
        let d = design_exact(params(0.05, 0.1, 0.065, 0.0715)).unwrap();
        assert!(d.attained_alpha <= 0.05 && d.attained_beta <= 0.1);
        // independent scan with exact binomial tails gives the same pair
        assert_eq!((d.n_star, d.k_star), (12880, 883));
        assert_eq!(d.mode, DesignMode::Exact);
    }

    #[test]
    fn exact_design_matches_brute_force_enumeration() {
        for (a, b, t0, t1) in [(0.05, 0.05, 0.1, 0.5), (0.1, 0.2, 0.2, 0.6), (0.5, 0.5, 0.2, 0.8)] {
            let d = design_exact(params(a, b, t0, t1)).unwrap();
            let mut best = None;
            'outer: for n in 1..=60u64 {
                for k in 0..n {
                    if brute_tail(k, n, t0) <= a && 1.0 - brute_tail(k, n, t1) <= b {
                        best = Some((n, k));
                        break 'outer;
                    }
                }
            }
            assert_eq!(Some((d.n_star, d.k_star)), best);
        }
        let d = design_exact(params(0.05, 0.05, 0.1, 0.5)).unwrap();
        assert!(d.n_star <= 30);
    }

    fn brute_tail(k: u64, n: u64, theta: f64) -> f64 {
        let mut total = 0.0;
        for j in (k + 1)..=n {
            let mut c = 1.0f64;
            for i in 0..j {
                c = c * (n - i) as f64 / (i + 1) as f64;
            }
            total += c * theta.powi(j as i32) * (1.0 - theta).powi((n - j) as i32);
        }
        total
    }

    #[test]
    fn exact_search_respects_cap() {
        assert!(matches!(
            design_exact_capped(params(0.05, 0.1, 0.065, 0.0715), 100),
            Err(Error::SearchBound { cap: 100 })
        ));
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(DesignParams::new(0.05, 0.1, 0.1, 0.05).is_err());
        assert!(DesignParams::new(0.0, 0.1, 0.05, 0.1).is_err());
        assert!(DesignParams::new(0.05, 1.0, 0.05, 0.1).is_err());
        assert!(LocalDesignParams::new(0.05, 0.1, 0.5, 1.5).is_err());
        assert!(LocalDesignParams::new(0.05, 0.1, 0.5, -0.1).is_err());
    }

    #[test]
    fn critical_fraction_approaches_theta0() {
        let t0 = 0.065;
        let za = upper_quantile(0.05).unwrap();
        let mut prev_gap = f64::INFINITY;
        for delta in [0.5, 0.25, 0.1, 0.05, 0.01] {
            let d = design_local(LocalDesignParams::new(0.05, 0.1, t0, delta).unwrap()).unwrap();
            let frac = d.k_star as f64 / d.n_star as f64;
            let gap = (frac - t0).abs();
            assert!(gap < prev_gap);
            assert!(gap < 2.0 * za * (t0 * (1.0 - t0) / d.n_star as f64).sqrt());
            prev_gap = gap;
        }
    }

    #[test]
    fn n_star_shrinks_as_alternative_separates() {
        let mut prev = u64::MAX;
        for i in 1..=40 {
            let t1 = 0.065 + 0.002 * i as f64;
            let d = design_approx(params(0.05, 0.1, 0.065, t1)).unwrap();
            assert!(d.n_star <= prev);
            prev = d.n_star;
        }
    }
}
