//! Post-test estimation of θ.
//!
//! At termination the estimator is `S_{N*}/N*` when the trial completed
//! without rejection and `(k*+1)/M_{k*}` when it stopped early. Its first
//! two moments are
//!
//! ```text
//! E θ̂  = θ·P(S_{N*−1} ≤ k*−1) + (k*+1)·Σ_{j=k*+1..N*} P(M_{k*}=j)/j
//! E θ̂² = [(N*−1)θ²·P(S_{N*−2} ≤ k*−2) + θ·P(S_{N*−1} ≤ k*−1)]/N*
//!        + (k*+1)²·Σ_{j=k*+1..N*} P(M_{k*}=j)/j²
//! ```

use serde::{Deserialize, Serialize};

use crate::design::TestDesign;
use crate::distributions::{binom_cdf, binom_pmf, ln_negbin_pmf, negbin_pmf_ratio, upper_quantile};
use crate::error::{domain, Error, Result};
use crate::monitor::{MonitorState, Status};

/// Negative binomial masses below this fraction of the modal mass are dropped.
const TAIL_CUTOFF: f64 = 1e-30;

const VARIANCE_CLAMP_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointEstimate {
    pub theta_hat: f64,
    pub m_star: u64,
    pub rejected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PostTestEstimate {
    pub theta_hat: f64,
    pub m_star: u64,
    /// Nominal level `1 − γ`.
    pub ci_level: f64,
    pub ci_lower: f64,
    pub ci_upper: f64,
    /// Set when `θ̂ ∈ {0, 1}` and the interval collapses to a point.
    pub degenerate: bool,
}

impl PostTestEstimate {
    pub fn covers(&self, theta: f64) -> bool {
        self.ci_lower <= theta && theta <= self.ci_upper
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorMoments {
    pub mean: f64,
    pub second_moment: f64,
    pub variance: f64,
}

/// θ̂ from the terminal counters.
pub fn theta_hat(design: &TestDesign, s_n: u64, m_star: u64, rejected: bool) -> f64 {
    if rejected {
        design.stop_count() as f64 / m_star as f64
    } else {
        s_n as f64 / design.n_star as f64
    }
}

pub fn point_estimate(state: &MonitorState) -> Result<PointEstimate> {
    let m_star = match (state.status, state.m_star) {
        (Status::Running, _) => return Err(Error::NotTerminal),
        (_, Some(m)) => m,
        (_, None) => return Err(domain("terminal state without a stopping time")),
    };
    let rejected = state.status == Status::StoppedRejected;
    Ok(PointEstimate { theta_hat: theta_hat(&state.design, state.s_n, m_star, rejected), m_star, rejected })
}

/// Wald interval `θ̂ ± z_{γ/2}·√(θ̂(1−θ̂)/M*)`, clipped to `[0, 1]`.
pub fn confidence_interval(theta_hat: f64, m_star: u64, gamma: f64) -> Result<PostTestEstimate> {
    if !(0.0..=1.0).contains(&theta_hat) {
        return Err(domain(format!("theta_hat must lie in [0, 1], got {theta_hat}")));
    }
    if m_star == 0 {
        return Err(domain("m_star must be at least 1"));
    }
    if !(gamma > 0.0 && gamma < 1.0) {
        return Err(domain(format!("gamma must lie strictly inside (0, 1), got {gamma}")));
    }
    let z = upper_quantile(gamma / 2.0)?;
    let half = z * (theta_hat * (1.0 - theta_hat) / m_star as f64).sqrt();
    Ok(PostTestEstimate {
        theta_hat,
        m_star,
        ci_level: 1.0 - gamma,
        ci_lower: (theta_hat - half).max(0.0),
        ci_upper: (theta_hat + half).min(1.0),
        degenerate: theta_hat == 0.0 || theta_hat == 1.0,
    })
}

/// Point estimate and interval for a finished trial.
pub fn estimate(state: &MonitorState, gamma: f64) -> Result<PostTestEstimate> {
    let p = point_estimate(state)?;
    confidence_interval(p.theta_hat, p.m_star, gamma)
}

/// Visit `(j, P(M = j))` for `M ~ NB(r, θ)` over `r ≤ j ≤ n`.
///
/// Starts at the mode in log space and walks outward with the exact ratio,
/// so neither `θʳ` nor the far tails need to be representable.
pub(crate) fn for_each_negbin_mass(r: u64, n: u64, theta: f64, mut visit: impl FnMut(u64, f64)) -> Result<()> {
    if r == 0 || n < r {
        return Ok(());
    }
    let mode = ((r - 1) as f64 / theta).floor() as u64 + 1;
    let start = mode.clamp(r, n);
    let peak = ln_negbin_pmf(start, r, theta)?.exp();
    let floor = peak * TAIL_CUTOFF;

    visit(start, peak);
    let mut p = peak;
    for j in start..n {
        p *= negbin_pmf_ratio(j, r, theta);
        if p < floor {
            break;
        }
        visit(j + 1, p);
    }
    let mut p = peak;
    for j in (r..start).rev() {
        p /= negbin_pmf_ratio(j, r, theta);
        if p < floor {
            break;
        }
        visit(j, p);
    }
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    carry: f64,
}

impl CompensatedSum {
    pub(crate) fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.carry += (self.sum - t) + x;
        } else {
            self.carry += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub(crate) fn value(&self) -> f64 {
        self.sum + self.carry
    }
}

/// Exact mean, second moment and variance of θ̂ at `θ`.
pub fn estimator_moments(design: &TestDesign, theta: f64) -> Result<EstimatorMoments> {
    design.validate()?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain(format!("theta must lie strictly inside (0, 1), got {theta}")));
    }
    let (n, k) = (design.n_star, design.k_star);
    let nf = n as f64;
    let r = design.stop_count();
    let rf = r as f64;

    // not rejected: S_{N*}/N* on {S_{N*} ≤ k*}
    let (low1, low2) = if k >= 2 {
        let a = binom_cdf(k - 1, n - 1, theta)?;
        let b = binom_cdf(k - 2, n - 2, theta)?;
        (theta * a, ((nf - 1.0) * theta * theta * b + theta * a) / nf)
    } else {
        // the closed form indexes S_{N*−2} ≤ k*−2, so sum the few outcomes directly
        let (mut m1, mut m2) = (0.0, 0.0);
        for s in 0..=k {
            let p = binom_pmf(s, n, theta)?;
            let x = s as f64 / nf;
            m1 += p * x;
            m2 += p * x * x;
        }
        (m1, m2)
    };

    // rejected: (k*+1)/M_{k*} on {M_{k*} ≤ N*}
    let (mut inv1, mut inv2) = (CompensatedSum::default(), CompensatedSum::default());
    for_each_negbin_mass(r, n, theta, |j, p| {
        let inv = 1.0 / j as f64;
        inv1.add(p * inv);
        inv2.add(p * inv * inv);
    })?;

    let mean = low1 + rf * inv1.value();
    let second_moment = low2 + rf * rf * inv2.value();
    let mut variance = second_moment - mean * mean;
    if variance < 0.0 {
        if -variance > VARIANCE_CLAMP_REL * second_moment {
            log::warn!("estimator variance {variance:e} at theta={theta}; clamped to 0");
        }
        variance = 0.0;
    }
    Ok(EstimatorMoments { mean, second_moment, variance })
}

/// Limits of the estimator mean and variance as `δ → 0`: `(θ, 0)`.
pub fn moments_limit_check(theta: f64) -> Result<(f64, f64)> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain(format!("theta must lie strictly inside (0, 1), got {theta}")));
    }
    Ok((theta, 0.0))
}

/// Exact unconditional probability that the interval covers `θ`.
pub fn coverage_probability(design: &TestDesign, theta: f64, gamma: f64) -> Result<f64> {
    design.validate()?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain(format!("theta must lie strictly inside (0, 1), got {theta}")));
    }
    let n = design.n_star;
    let mut total = CompensatedSum::default();
    for s in 0..=design.k_star {
        let ci = confidence_interval(theta_hat(design, s, n, false), n, gamma)?;
        if ci.covers(theta) {
            total.add(binom_pmf(s, n, theta)?);
        }
    }
    let mut failure = None;
    for_each_negbin_mass(design.stop_count(), n, theta, |j, p| {
        match confidence_interval(theta_hat(design, 0, j, true), j, gamma) {
            Ok(ci) if ci.covers(theta) => total.add(p),
            Ok(_) => {}
            Err(e) => failure = Some(e),
        }
    })?;
    match failure {
        Some(e) => Err(e),
        None => Ok(total.value()),
    }
}

/// Exact Kolmogorov distance between the law of `√M*·(θ̂ − θ)/√(θ(1−θ))`
/// and the standard normal.
///
/// The law is discrete, so this is the floor that any simulated sup-distance
/// fluctuates around.
pub fn normality_distance(design: &TestDesign, theta: f64) -> Result<f64> {
    design.validate()?;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain(format!("theta must lie strictly inside (0, 1), got {theta}")));
    }
    let scale = (theta * (1.0 - theta)).sqrt();
    let standardize = |est: f64, m: u64| (m as f64).sqrt() * (est - theta) / scale;
    let n = design.n_star;
    let mut atoms = Vec::new();
    for s in 0..=design.k_star {
        atoms.push((standardize(theta_hat(design, s, n, false), n), binom_pmf(s, n, theta)?));
    }
    for_each_negbin_mass(design.stop_count(), n, theta, |j, p| {
        atoms.push((standardize(theta_hat(design, 0, j, true), j), p));
    })?;
    atoms.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut cdf = CompensatedSum::default();
    let mut worst = 0.0f64;
    let mut i = 0;
    while i < atoms.len() {
        let u = atoms[i].0;
        let phi = crate::distributions::normal_cdf(u);
        worst = worst.max((cdf.value() - phi).abs());
        while i < atoms.len() && atoms[i].0 == u {
            cdf.add(atoms[i].1);
            i += 1;
        }
        worst = worst.max((cdf.value() - phi).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::{DesignMode, DesignParams};

    fn design(n: u64, k: u64) -> TestDesign {
        let params = DesignParams::new(0.05, 0.1, 0.065, 0.0715).unwrap();
        TestDesign::from_counts(n, k, params, DesignMode::Approximate).unwrap()
    }

    /// Moments by walking all 2ᴺ outcome paths.
    fn enumerate(n: u64, k: u64, theta: f64) -> (f64, f64) {
        let (mut m1, mut m2) = (0.0, 0.0);
        for mask in 0u32..(1 << n) {
            let mut s = 0;
            let mut est = None;
            let mut prob = 1.0;
            for i in 0..n {
                let one = mask >> i & 1 == 1;
                prob *= if one { theta } else { 1.0 - theta };
                s += u64::from(one);
                if s == k + 1 {
                    est = Some((k + 1) as f64 / (i + 1) as f64);
                    // later coordinates are summed out
                    if mask >> (i + 1) != 0 {
                        prob = 0.0;
                    }
                    break;
                }
            }
            let x = est.unwrap_or(s as f64 / n as f64);
            m1 += prob * x;
            m2 += prob * x * x;
        }
        (m1, m2)
    }

    #[test]
    fn point_estimates_from_states() {
        let mut st = MonitorState::new(design(19821, 115)).unwrap();
        assert!(matches!(point_estimate(&st), Err(Error::NotTerminal)));
        st.n = 19821;
        st.s_n = 53;
        st.status = Status::CompletedNotRejected;
        st.m_star = Some(19821);
        let p = point_estimate(&st).unwrap();
        assert_eq!(p.theta_hat, 53.0 / 19821.0);
        assert!(!p.rejected);

        let mut st = MonitorState::new(design(3, 0)).unwrap();
        st.record(true).unwrap();
        assert_eq!(point_estimate(&st).unwrap().theta_hat, 1.0);

        let mut st = MonitorState::new(design(3, 1)).unwrap();
        for _ in 0..3 {
            st.record(false).unwrap();
        }
        assert_eq!(point_estimate(&st).unwrap().theta_hat, 0.0);
    }

    #[test]
    fn wald_interval() {
        let ci = confidence_interval(53.0 / 19821.0, 19821, 0.05).unwrap();
        assert!((ci.ci_lower - 0.001_955_014_2).abs() < 1e-9, "{}", ci.ci_lower);
        assert!((ci.ci_upper - 0.003_392_849_2).abs() < 1e-9, "{}", ci.ci_upper);
        assert!(!ci.degenerate);
        assert!((ci.ci_level - 0.95).abs() < 1e-15);

        let ci = confidence_interval(0.5, 1_000_000_000_000, 0.05).unwrap();
        assert!(ci.ci_upper - ci.ci_lower < 1e-5);
        assert!(((ci.ci_upper + ci.ci_lower) / 2.0 - 0.5).abs() < 1e-15);

        let ci = confidence_interval(0.0, 100, 0.05).unwrap();
        assert_eq!((ci.ci_lower, ci.ci_upper, ci.degenerate), (0.0, 0.0, true));
        let ci = confidence_interval(1.0, 1, 0.05).unwrap();
        assert_eq!((ci.ci_lower, ci.ci_upper, ci.degenerate), (1.0, 1.0, true));

        assert!(confidence_interval(0.2, 0, 0.05).is_err());
        assert!(confidence_interval(0.2, 10, 1.0).is_err());
        assert!(confidence_interval(1.2, 10, 0.05).is_err());
    }

    #[test]
    fn clipping_at_the_edges() {
        let ci = confidence_interval(0.01, 5, 0.05).unwrap();
        assert_eq!(ci.ci_lower, 0.0);
        assert!(ci.ci_upper > 0.01);
    }

    #[test]
    fn moments_match_path_enumeration() {
        for (n, k) in [(5, 2), (1, 0), (3, 0), (4, 1), (6, 5), (10, 2), (12, 4), (14, 1)] {
            for theta in [0.05, 0.3, 0.5, 0.77] {
                let m = estimator_moments(&design(n, k), theta).unwrap();
                let (m1, m2) = enumerate(n, k, theta);
                assert!((m.mean - m1).abs() < 1e-12, "({n},{k},{theta}) {} vs {m1}", m.mean);
                assert!((m.second_moment - m2).abs() < 1e-12, "({n},{k},{theta})");
                assert!((m.variance - (m2 - m1 * m1).max(0.0)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn large_design_moments() {
        let d = design(12811, 878);
        let m = estimator_moments(&d, 0.5).unwrap();
        assert!((m.mean - 0.500_284_414).abs() < 1e-8, "{}", m.mean);
        assert!((m.variance - 1.423_686e-4).abs() < 1e-9, "{}", m.variance);
        assert!((m.second_moment - 0.2504).abs() < 5e-5);
        let m = estimator_moments(&d, 0.1).unwrap();
        assert!((m.mean - 0.100_102_482).abs() < 1e-8);
        assert!((m.variance - 1.027_861e-5).abs() < 1e-10);
    }

    #[test]
    fn limits() {
        assert_eq!(moments_limit_check(0.1).unwrap(), (0.1, 0.0));
        assert_eq!(moments_limit_check(0.5).unwrap(), (0.5, 0.0));
        assert!(moments_limit_check(0.0).is_err());
    }

    #[test]
    fn negbin_walk_covers_the_mass() {
        // P(M ≤ n) by walking must equal the incomplete beta value
        for (r, n, theta) in [(1, 10, 0.3), (5, 40, 0.2), (879, 12811, 0.065), (879, 12811, 0.5)] {
            let mut total = CompensatedSum::default();
            for_each_negbin_mass(r, n, theta, |_, p| total.add(p)).unwrap();
            let want = crate::distributions::negbin_cdf(n, r, theta).unwrap();
            assert!((total.value() - want).abs() < 1e-12, "{r} {n} {theta}: {} vs {want}", total.value());
        }
    }

    #[test]
    fn normality_distance_reflects_the_lattice() {
        let d = design(3321, 239);
        for (theta, want) in [(0.05, 0.0206), (0.065, 0.0181), (0.08, 0.0097), (0.2, 0.0115)] {
            let got = normality_distance(&d, theta).unwrap();
            assert!((got - want).abs() < 1e-4, "{theta}: {got}");
        }
    }

    #[test]
    fn exact_coverage_is_near_nominal() {
        let c = coverage_probability(&design(3321, 239), 0.2, 0.05).unwrap();
        assert!((c - 0.9498).abs() < 1e-3, "{c}");
        // small design against brute force over terminal outcomes
        let d = design(6, 1);
        let theta = 0.3;
        let mut brute = 0.0;
        for s in 0..=1 {
            if confidence_interval(s as f64 / 6.0, 6, 0.2).unwrap().covers(theta) {
                brute += binom_pmf(s, 6, theta).unwrap();
            }
        }
        for j in 2..=6 {
            if confidence_interval(2.0 / j as f64, j, 0.2).unwrap().covers(theta) {
                brute += crate::distributions::negbin_pmf(j, 2, theta).unwrap();
            }
        }
        assert!((coverage_probability(&d, theta, 0.2).unwrap() - brute).abs() < 1e-14);
    }
}
