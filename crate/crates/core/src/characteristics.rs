//! Operating characteristics of the curtailed test.
//!
//! With `M*` the terminal sample size (the index of the `(k*+1)`-th side
//! effect, capped at `N*`):
//!
//! ```text
//! power(θ)  = I_θ(k*+1, N*−k*)
//! E(M*)     = N*·I_{1−θ}(N*−k*, k*+1) + (k*+1)/θ · I_θ(k*+2, N*−k*)
//! E(M*²)    = N*²·I_{1−θ}(N*−k*, k*+1) + (k*+1)(k*+2)/θ² · I_θ(k*+3, N*−k*)
//!             − (k*+1)/θ · I_θ(k*+2, N*−k*)
//! ```
//!
//! The power coincides with the fixed-sample tail `P_θ(S_{N*} > k*)`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::TestDesign;
use crate::distributions::special::inc_beta;
use crate::error::{domain, Result};

/// Grid generators clip θ into `[GRID_EPS, 1 − GRID_EPS]`.
pub const GRID_EPS: f64 = 1e-9;

/// Negative variances smaller than this fraction of `E(M*²)` are rounding noise.
const VARIANCE_CLAMP_REL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub theta: f64,
    pub power: f64,
    pub asn: f64,
    pub m_second_moment: f64,
    pub m_variance: f64,
    pub sd: f64,
    pub cv: f64,
    pub rel_savings: f64,
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta < 1.0 {
        Ok(())
    } else {
        Err(domain(format!("theta must lie strictly inside (0, 1), got {theta}")))
    }
}

/// The incomplete beta terms shared by every characteristic.
struct Terms {
    n: f64,
    r: f64,
    /// `P(M_{k*} > N*)`
    no_stop: f64,
    /// `I_θ(k*+1, N*−k*)`
    power: f64,
    /// `I_θ(k*+2, N*−k*)`
    shifted1: f64,
}

impl Terms {
    fn new(design: &TestDesign, theta: f64) -> Result<Self> {
        design.validate()?;
        check_theta(theta)?;
        let (n, k) = (design.n_star, design.k_star);
        let b = (n - k) as f64;
        let r = (k + 1) as f64;
        Ok(Self {
            n: n as f64,
            r,
            no_stop: inc_beta(1.0 - theta, b, r)?,
            power: inc_beta(theta, r, b)?,
            shifted1: inc_beta(theta, r + 1.0, b)?,
        })
    }
}

/// `P_θ(reject H₀)`.
pub fn power(design: &TestDesign, theta: f64) -> Result<f64> {
    design.validate()?;
    check_theta(theta)?;
    inc_beta(theta, design.stop_count() as f64, (design.n_star - design.k_star) as f64)
}

/// Average sample number `E_θ(M*)`.
pub fn asn(design: &TestDesign, theta: f64) -> Result<f64> {
    let t = Terms::new(design, theta)?;
    Ok(t.n * t.no_stop + t.r / theta * t.shifted1)
}

/// `(N* − E_θ(M*)) / N*`, evaluated without subtracting two near-equal numbers.
pub fn relative_savings(design: &TestDesign, theta: f64) -> Result<f64> {
    let t = Terms::new(design, theta)?;
    Ok(savings_from_terms(&t, theta))
}

fn savings_from_terms(t: &Terms, theta: f64) -> f64 {
    let saved = t.n * t.power - t.r / theta * t.shifted1;
    (saved / t.n).max(0.0)
}

/// All characteristics of `M*` at `θ`.
pub fn m_moments(design: &TestDesign, theta: f64) -> Result<OperatingCharacteristics> {
    let t = Terms::new(design, theta)?;
    let shifted2 = inc_beta(theta, t.r + 2.0, t.n - t.r + 1.0)?;
    let asn = t.n * t.no_stop + t.r / theta * t.shifted1;
    let second = t.n * t.n * t.no_stop + t.r * (t.r + 1.0) / (theta * theta) * shifted2 - t.r / theta * t.shifted1;
    let mut variance = second - asn * asn;
    if variance < 0.0 {
        if -variance <= VARIANCE_CLAMP_REL * second {
            log::debug!("clamping variance {variance:e} of M* to 0 at theta={theta}");
        } else {
            log::warn!("variance of M* is {variance:e} at theta={theta}; clamped to 0");
        }
        variance = 0.0;
    }
    let sd = variance.sqrt();
    Ok(OperatingCharacteristics {
        theta,
        power: t.power,
        asn,
        m_second_moment: second,
        m_variance: variance,
        sd,
        cv: sd / asn,
        rel_savings: savings_from_terms(&t, theta),
    })
}

/// Limit of the relative savings under local alternatives: `(1 − θ₀/θ)⁺`.
pub fn savings_limit(theta0: f64, theta: f64) -> Result<f64> {
    check_theta(theta0)?;
    check_theta(theta)?;
    Ok((1.0 - theta0 / theta).max(0.0))
}

/// Limit of the power under local alternatives: `0`, `α` or `1`.
pub fn power_limit(theta0: f64, theta: f64, alpha: f64) -> Result<f64> {
    check_theta(theta0)?;
    check_theta(theta)?;
    check_theta(alpha)?;
    Ok(if theta < theta0 {
        0.0
    } else if theta == theta0 {
        alpha
    } else {
        1.0
    })
}

/// Characteristics over a θ grid, evaluated in parallel, in grid order.
pub fn oc_curve(design: &TestDesign, theta_grid: &[f64]) -> Result<Vec<OperatingCharacteristics>> {
    theta_grid.par_iter().map(|&theta| m_moments(design, theta)).collect()
}

/// Clip a θ value into the open unit interval used by grid generators.
pub fn clip_theta(theta: f64) -> f64 {
    theta.clamp(GRID_EPS, 1.0 - GRID_EPS)
}

/// `steps + 1` evenly spaced θ values from `lo` to `hi`, clipped.
pub fn linear_grid(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    if steps == 0 {
        return vec![clip_theta(lo)];
    }
    (0..=steps)
        .map(|i| clip_theta(lo + (hi - lo) * i as f64 / steps as f64))
        .collect()
}
