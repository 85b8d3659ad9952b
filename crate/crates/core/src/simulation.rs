//! Seeded Monte Carlo replications of the curtailed trial.
//!
//! Replication `r` draws from ChaCha8 keyed by the master seed on stream `r`,
//! so results do not depend on scheduling or on which other replications run.

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::characteristics::{m_moments, relative_savings, savings_limit, OperatingCharacteristics};
use crate::design::TestDesign;
use crate::distributions::normal_cdf;
use crate::error::{domain, Result};
use crate::estimation::{confidence_interval, theta_hat, CompensatedSum};
use crate::monitor::{MonitorState, Status};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub design: TestDesign,
    pub theta_true: f64,
    pub replications: u64,
    pub seed: u64,
    #[serde(default = "default_gamma")]
    pub ci_gamma: f64,
}

fn default_gamma() -> f64 {
    0.05
}

impl SimConfig {
    pub fn new(design: TestDesign, theta_true: f64, replications: u64, seed: u64) -> Self {
        Self { design, theta_true, replications, seed, ci_gamma: default_gamma() }
    }

    pub fn validate(&self) -> Result<()> {
        self.design.validate()?;
        if !(0.0..=1.0).contains(&self.theta_true) {
            return Err(domain(format!("theta_true must lie in [0, 1], got {}", self.theta_true)));
        }
        if self.replications == 0 {
            return Err(domain("replications must be at least 1"));
        }
        if !(self.ci_gamma > 0.0 && self.ci_gamma < 1.0) {
            return Err(domain(format!("ci_gamma must lie strictly inside (0, 1), got {}", self.ci_gamma)));
        }
        Ok(())
    }
}

/// Terminal summary of one simulated trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub rejected: bool,
    pub m_star: u64,
    pub s_n: u64,
    pub theta_hat: f64,
    pub covered: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McStandardErrors {
    pub reject_rate: f64,
    pub mean_m_star: f64,
    pub coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimReport {
    pub theta_true: f64,
    pub replications: u64,
    pub seed: u64,
    pub reject_rate: f64,
    pub mean_m_star: f64,
    pub sd_m_star: f64,
    pub coverage: f64,
    /// Sup-distance between the standardized estimator and `Φ`; absent at θ ∈ {0, 1}.
    pub normality_sup_distance: Option<f64>,
    pub mc_standard_errors: McStandardErrors,
}

/// Exact characteristics next to their simulated counterparts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalOc {
    pub report: SimReport,
    pub exact: OperatingCharacteristics,
    /// `(reject_rate − power) / SE`, with SE taken at the exact power.
    pub reject_z: f64,
    /// `(mean_m_star − asn) / SE`, with SE taken at the exact sd.
    pub asn_z: f64,
}

impl EmpiricalOc {
    pub fn within(&self, k_se: f64) -> bool {
        self.reject_z.abs() <= k_se && self.asn_z.abs() <= k_se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SavingsRow {
    pub n_star: u64,
    pub k_star: u64,
    pub delta: Option<f64>,
    pub theta: f64,
    pub rel_savings: f64,
    pub savings_limit: f64,
}

/// `P(draw = 1) = θ` exactly: a 64-bit uniform integer compared with `θ·2⁶⁴`.
#[derive(Debug, Clone, Copy)]
struct Bernoulli {
    threshold: u128,
}

impl Bernoulli {
    fn new(theta: f64) -> Self {
        // θ·2⁶⁴ is exact in binary; u < x for integer u iff u < ⌈x⌉
        let threshold = (theta * 18_446_744_073_709_551_616.0).ceil() as u128;
        Self { threshold }
    }

    #[inline]
    fn draw(&self, rng: &mut ChaCha8Rng) -> bool {
        u128::from(rng.next_u64()) < self.threshold
    }
}

fn replication_rng(seed: u64, replication: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replication);
    rng
}

fn run_one(config: &SimConfig, bern: Bernoulli, replication: u64) -> Result<TrialOutcome> {
    let mut rng = replication_rng(config.seed, replication);
    let mut state = MonitorState::new(config.design.clone())?;
    while state.record(bern.draw(&mut rng))? == Status::Running {}
    let rejected = state.status == Status::StoppedRejected;
    let m_star = state.n;
    let est = theta_hat(&config.design, state.s_n, m_star, rejected);
    let ci = confidence_interval(est, m_star, config.ci_gamma)?;
    Ok(TrialOutcome { rejected, m_star, s_n: state.s_n, theta_hat: est, covered: ci.covers(config.theta_true) })
}

/// All replications, in replication order.
pub fn simulate_trials(config: &SimConfig) -> Result<Vec<TrialOutcome>> {
    config.validate()?;
    let bern = Bernoulli::new(config.theta_true);
    (0..config.replications).into_par_iter().map(|r| run_one(config, bern, r)).collect()
}

/// Kolmogorov distance between a sample and the standard normal cdf.
pub fn normal_sup_distance(sample: &mut [f64]) -> f64 {
    sample.sort_by(f64::total_cmp);
    let n = sample.len() as f64;
    sample
        .iter()
        .enumerate()
        .map(|(i, &u)| {
            let f = normal_cdf(u);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Aggregate trial outcomes in order.
pub fn summarize(config: &SimConfig, trials: &[TrialOutcome]) -> SimReport {
    let r = trials.len() as f64;
    let (mut rejects, mut covered) = (0u64, 0u64);
    let (mut m1, mut m2) = (CompensatedSum::default(), CompensatedSum::default());
    for t in trials {
        rejects += u64::from(t.rejected);
        covered += u64::from(t.covered);
        let m = t.m_star as f64;
        m1.add(m);
        m2.add(m * m);
    }
    let reject_rate = rejects as f64 / r;
    let coverage = covered as f64 / r;
    let mean = m1.value() / r;
    let var = if trials.len() > 1 { ((m2.value() - r * mean * mean) / (r - 1.0)).max(0.0) } else { 0.0 };
    let sd = var.sqrt();

    let theta = config.theta_true;
    let normality_sup_distance = (theta > 0.0 && theta < 1.0).then(|| {
        let scale = (theta * (1.0 - theta)).sqrt();
        let mut u: Vec<f64> =
            trials.iter().map(|t| (t.m_star as f64).sqrt() * (t.theta_hat - theta) / scale).collect();
        normal_sup_distance(&mut u)
    });

    let rate_se = |p: f64| (p * (1.0 - p) / r).sqrt();
    SimReport {
        theta_true: theta,
        replications: trials.len() as u64,
        seed: config.seed,
        reject_rate,
        mean_m_star: mean,
        sd_m_star: sd,
        coverage,
        normality_sup_distance,
        mc_standard_errors: McStandardErrors {
            reject_rate: rate_se(reject_rate),
            mean_m_star: sd / r.sqrt(),
            coverage: rate_se(coverage),
        },
    }
}

/// Run the replications and report rejection rate, `M*` moments and coverage.
pub fn simulate(config: &SimConfig) -> Result<SimReport> {
    let trials = simulate_trials(config)?;
    Ok(summarize(config, &trials))
}

/// Simulated power and ASN against the closed forms, in standard-error units.
pub fn empirical_oc(config: &SimConfig) -> Result<EmpiricalOc> {
    let theta = config.theta_true;
    if !(theta > 0.0 && theta < 1.0) {
        return Err(domain(format!("theta_true must lie strictly inside (0, 1), got {theta}")));
    }
    let report = simulate(config)?;
    let exact = m_moments(&config.design, theta)?;
    let r = report.replications as f64;
    let z = |diff: f64, se: f64| if se > 0.0 { diff / se } else if diff == 0.0 { 0.0 } else { f64::INFINITY };
    Ok(EmpiricalOc {
        report,
        exact,
        reject_z: z(report.reject_rate - exact.power, (exact.power * (1.0 - exact.power) / r).sqrt()),
        asn_z: z(report.mean_m_star - exact.asn, exact.sd / r.sqrt()),
    })
}

/// Exact relative savings next to their local-alternative limit.
pub fn savings_curve_data(designs: &[TestDesign], theta0: f64, theta_grid: &[f64]) -> Result<Vec<SavingsRow>> {
    let mut rows = Vec::with_capacity(designs.len() * theta_grid.len());
    for d in designs {
        for &theta in theta_grid {
            rows.push(SavingsRow {
                n_star: d.n_star,
                k_star: d.k_star,
                delta: d.delta,
                theta,
                rel_savings: relative_savings(d, theta)?,
                savings_limit: savings_limit(theta0, theta)?,
            });
        }
    }
    Ok(rows)
}
