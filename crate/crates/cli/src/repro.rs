//! Recompute the reference tables and the surveillance example, reporting
//! every cell next to its reference value and tolerance.

use std::fs;
use std::path::Path;

use curtail::characteristics::{linear_grid, m_moments, oc_curve};
use curtail::design::{
    design_approx, design_local, k_for_n, n_for_k, normal_attained_errors, DesignMode, DesignParams,
    LocalDesignParams, TestDesign,
};
use curtail::estimation::{confidence_interval, coverage_probability, estimator_moments, point_estimate};
use curtail::monitor::{replay, Decision, Observation};
use curtail::reference::{self, surveillance as sv, within_last_digit, ALPHA, BETA, THETA0};
use curtail::simulation::{savings_curve_data, simulate, SimConfig};
use serde::Serialize;

use crate::args::{Format, ReproCmd, Target};
use crate::commands::write_oc_csv;
use crate::failure::{self, Failure, Outcome};
use crate::output::{human, json, table};

type Result<T> = std::result::Result<T, Failure>;

#[derive(Debug, Clone, Serialize)]
pub struct Cell {
    pub target: &'static str,
    pub cell: String,
    pub computed: f64,
    pub reference: Option<f64>,
    pub tolerance: String,
    pub pass: bool,
}

#[derive(Serialize)]
struct Report<'a> {
    cells: &'a [Cell],
    passed: usize,
    failed: usize,
}

struct Sheet {
    target: &'static str,
    cells: Vec<Cell>,
}

impl Sheet {
    fn new(target: &'static str) -> Self {
        Self { target, cells: Vec::new() }
    }

    fn push(&mut self, cell: impl Into<String>, computed: f64, reference: Option<f64>, tolerance: &str, pass: bool) {
        self.cells.push(Cell {
            target: self.target,
            cell: cell.into(),
            computed,
            reference,
            tolerance: tolerance.into(),
            pass,
        });
    }
}

fn params(theta1: f64) -> Result<DesignParams> {
    Ok(DesignParams::new(ALPHA, BETA, THETA0, theta1)?)
}

fn fixed(n: u64, k: u64, theta1: f64) -> Result<TestDesign> {
    Ok(TestDesign::from_counts(n, k, params(theta1)?, DesignMode::Approximate)?)
}

fn local(delta: f64) -> Result<TestDesign> {
    Ok(design_local(LocalDesignParams::new(ALPHA, BETA, THETA0, delta)?)?)
}

/// The reference design of the stopping-time and estimator tables.
fn table_design() -> Result<TestDesign> {
    fixed(12811, 878, 0.0715)
}

/// One unit in the second significant figure of `printed`.
fn two_sig_figs(computed: f64, printed: f64) -> bool {
    let unit = 10f64.powf(printed.abs().log10().floor() - 1.0);
    (computed - printed).abs() <= unit * (1.0 + 1e-9)
}

fn table1() -> Result<Sheet> {
    let mut s = Sheet::new("table1");
    let d = table_design()?;
    for row in &reference::STOPPING_TIME {
        let oc = m_moments(&d, row.theta)?;
        let t = row.theta;
        s.push(format!("asn@{t}"), oc.asn, Some(row.asn), "±1", (oc.asn - row.asn).abs() <= 1.0);
        s.push(format!("sd@{t}"), oc.sd, Some(row.sd), "1e-3 rel", (oc.sd - row.sd).abs() <= 1e-3 * row.sd);
        // the printed CV keeps 4 decimals, coarser than 1e-3 relative
        let cv_ok = (oc.cv - row.cv).abs() <= 1e-3 * row.cv
            || reference::round_to(oc.cv, reference::CV_DECIMALS) == row.cv;
        s.push(format!("cv@{t}"), oc.cv, Some(row.cv), "1e-3 rel or printed 4 dp", cv_ok);
    }
    Ok(s)
}

fn table2() -> Result<Sheet> {
    let mut s = Sheet::new("table2");
    let d = table_design()?;
    for row in &reference::ESTIMATOR {
        let m = estimator_moments(&d, row.theta)?;
        let t = row.theta;
        let mean_ok = within_last_digit(m.mean, row.mean, reference::ESTIMATOR_MEAN_DECIMALS);
        s.push(format!("mean@{t}"), m.mean, Some(row.mean), "±1 in 4th dp", mean_ok);
        let var_ok = two_sig_figs(m.variance, row.variance);
        s.push(format!("var@{t}"), m.variance, Some(row.variance), "2 sig figs", var_ok);
    }
    Ok(s)
}

fn table3() -> Result<Sheet> {
    let mut s = Sheet::new("table3");
    let designs = reference::LADDER_DESIGNS
        .iter()
        .zip([0.0715, 0.06825, 0.06565])
        .map(|(&(n, k), t1)| fixed(n, k, t1))
        .collect::<Result<Vec<_>>>()?;
    for row in &reference::LADDER {
        for (i, d) in designs.iter().enumerate() {
            let (t, delta) = (row.theta, reference::LADDER_DELTAS[i]);
            let m = estimator_moments(d, t)?;
            let mean_ok = within_last_digit(m.mean, row.mean[i], reference::LADDER_MEAN_DECIMALS);
            s.push(format!("mean@{t},delta={delta}"), m.mean, Some(row.mean[i]), "±1 in 6th dp", mean_ok);
            let var_ok = (m.variance - row.variance[i]).abs() <= 1e-4 * row.variance[i];
            s.push(format!("var@{t},delta={delta}"), m.variance, Some(row.variance[i]), "1e-4 rel", var_ok);
        }
    }
    Ok(s)
}

fn table4(seed: u64, reps: u64) -> Result<Sheet> {
    let mut s = Sheet::new("table4");
    let tol = 3.0 * (0.95f64 * 0.05 / reps as f64).sqrt();
    let designs = [fixed(3321, 239, 0.078)?, fixed(12811, 878, 0.0715)?];
    let tolerance = format!("|x - 0.95| <= {tol:.4}");
    for (theta, printed) in reference::COVERAGE {
        for (i, d) in designs.iter().enumerate() {
            let rep = simulate(&SimConfig::new(d.clone(), theta, reps, seed))?;
            let exact = coverage_probability(d, theta, 0.05)?;
            let label = format!("coverage@{theta},N*={} (exact {exact:.4})", d.n_star);
            s.push(label, rep.coverage, Some(printed[i]), &tolerance, (rep.coverage - 0.95).abs() <= tol);
        }
    }
    Ok(s)
}

/// Power and ASN curves of the reference design.
fn fig2(out_dir: Option<&Path>) -> Result<Sheet> {
    let mut s = Sheet::new("fig2");
    let d = table_design()?;
    let grid = linear_grid(0.0, 1.0, 1000);
    let oc = oc_curve(&d, &grid)?;
    let power_drops = oc.windows(2).filter(|w| w[1].power < w[0].power).count();
    s.push("power nondecreasing (violations)", power_drops as f64, Some(0.0), "exact", power_drops == 0);
    let asn_rises = oc.windows(2).filter(|w| w[1].asn > w[0].asn * (1.0 + 1e-12)).count();
    s.push("asn nonincreasing (violations)", asn_rises as f64, Some(0.0), "exact", asn_rises == 0);
    let at = |t: f64| m_moments(&d, t);
    let p0 = at(THETA0)?.power;
    s.push("power@theta0", p0, Some(ALPHA), "±0.01", (p0 - ALPHA).abs() <= 0.01);
    let p1 = at(0.0715)?.power;
    s.push("power@theta1", p1, Some(1.0 - BETA), "±0.01", (p1 - (1.0 - BETA)).abs() <= 0.01);
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        write_oc_csv(fs::File::create(dir.join("fig2.csv"))?, &d, &grid, false)?;
    }
    Ok(s)
}

/// Relative savings along the δ ladder against their limit.
fn fig3(out_dir: Option<&Path>) -> Result<Sheet> {
    let mut s = Sheet::new("fig3");
    let reference_counts = [(0.5, 584, 47), (0.25, 2162, 159), (0.1, 12811, 878)];
    let mut ladder = Vec::new();
    for (delta, n_ref, k_ref) in reference_counts {
        let d = local(delta)?;
        let ok = d.n_star.abs_diff(n_ref) <= 1
            && k_for_n(d.n_star, THETA0, ALPHA)? == d.k_star
            && (d.n_star != n_ref || d.k_star == k_ref);
        s.push(format!("N*@delta={delta} (k*={})", d.k_star), d.n_star as f64, Some(n_ref as f64), "±1", ok);
        ladder.push(d);
    }
    let grid = linear_grid(THETA0, 0.5, 435);
    let rows = savings_curve_data(&ladder, THETA0, &grid)?;
    for theta in [0.1, 0.2, 0.3, 0.4, 0.5] {
        let gaps: Vec<f64> = savings_curve_data(&ladder, THETA0, &[theta])?
            .iter()
            .map(|row| (row.rel_savings - row.savings_limit).abs())
            .collect();
        let shrinking = gaps.windows(2).all(|w| w[1] < w[0]);
        s.push(format!("gap shrinks down the ladder@{theta}"), gaps[2], None, "monotone in delta", shrinking);
    }
    if let Some(dir) = out_dir {
        fs::create_dir_all(dir)?;
        let mut w = csv::Writer::from_path(dir.join("fig3.csv"))?;
        for row in &rows {
            w.serialize(row)?;
        }
        w.flush()?;
    }
    Ok(s)
}

/// Side effects at every 373rd dose and the last, 53 in 19821 doses.
pub fn surveillance_log() -> Vec<Observation> {
    let mut positions: Vec<u64> = (1..sv::EVENTS).map(|i| i * 373).collect();
    positions.push(sv::DOSES);
    (1..=sv::DOSES)
        .map(|seq| Observation::new(seq, format!("V{seq:05}"), positions.binary_search(&seq).is_ok()))
        .collect()
}

fn covid() -> Result<Sheet> {
    let mut s = Sheet::new("covid-example");
    let tol = 5e-4;

    let k1 = k_for_n(sv::DOSES, sv::I_THETA0, ALPHA)?;
    s.push("scenario i k*", k1 as f64, Some(sv::I_K_STAR as f64), "exact", k1 == sv::I_K_STAR);
    let p1 = DesignParams::new(ALPHA, BETA, sv::I_THETA0, sv::I_THETA1)?;
    let d1 = TestDesign::from_counts(sv::DOSES, k1, p1, DesignMode::Approximate)?;
    let e1 = normal_attained_errors(&d1)?;
    s.push("scenario i alpha", e1.alpha, Some(sv::I_ALPHA), "±5e-4", (e1.alpha - sv::I_ALPHA).abs() <= tol);
    s.push("scenario i beta", e1.beta, Some(sv::I_BETA), "±5e-4", (e1.beta - sv::I_BETA).abs() <= tol);

    let n2 = n_for_k(sv::II_K_STAR, sv::II_THETA0, ALPHA)?;
    s.push("scenario ii N*", n2 as f64, Some(sv::II_N_STAR as f64), "±1", n2.abs_diff(sv::II_N_STAR) <= 1);
    let p2 = DesignParams::new(ALPHA, BETA, sv::II_THETA0, sv::II_THETA1)?;
    let d2 = TestDesign::from_counts(n2, sv::II_K_STAR, p2, DesignMode::Approximate)?;
    let e2 = normal_attained_errors(&d2)?;
    s.push("scenario ii alpha", e2.alpha, Some(sv::II_ALPHA), "±5e-4", (e2.alpha - sv::II_ALPHA).abs() <= tol);
    s.push("scenario ii beta", e2.beta, Some(sv::II_BETA), "±5e-4", (e2.beta - sv::II_BETA).abs() <= tol);

    let log = surveillance_log();
    for (label, d, expected) in [("scenario i", d1, Decision::NotRejectH0), ("scenario ii", d2, Decision::RejectH0)] {
        let (state, _) = replay(d, &log)?;
        let est = point_estimate(&state)?;
        let ok = state.decision() == expected
            && state.m_star == Some(sv::DOSES)
            && reference::round_to(est.theta_hat, 4) == sv::THETA_HAT;
        s.push(format!("{label} theta_hat ({})", state.decision()), est.theta_hat, Some(sv::THETA_HAT), "4 dp", ok);
    }

    let ci = confidence_interval(sv::EVENTS as f64 / sv::DOSES as f64, sv::DOSES, 0.05)?;
    s.push("ci lower", ci.ci_lower, Some(sv::CI.0), "±1e-6", (ci.ci_lower - sv::CI.0).abs() <= 1e-6);
    s.push("ci upper", ci.ci_upper, Some(sv::CI.1), "±1e-6", (ci.ci_upper - sv::CI.1).abs() <= 1e-6);
    Ok(s)
}

/// Designs behind all the tables, checked first under `all`.
fn designs() -> Result<Sheet> {
    let mut s = Sheet::new("designs");
    let cases = [
        ("theta1=0.0715", design_approx(params(0.0715)?)?, 12811),
        ("delta=0.2", local(0.2)?, 3321),
        ("delta=0.05", local(0.05)?, 50269),
        ("delta=0.01", local(0.01)?, 1236886),
    ];
    for (label, d, n_ref) in cases {
        let ok = d.n_star.abs_diff(n_ref) <= 1 && k_for_n(d.n_star, THETA0, ALPHA)? == d.k_star;
        s.push(format!("N*@{label} (k*={})", d.k_star), d.n_star as f64, Some(n_ref as f64), "±1", ok);
    }
    Ok(s)
}

pub fn cells(cmd: &ReproCmd) -> Result<Vec<Cell>> {
    let out = cmd.out_dir.as_deref();
    let sheets = match cmd.target {
        Target::Table1 => vec![table1()?],
        Target::Table2 => vec![table2()?],
        Target::Table3 => vec![table3()?],
        Target::Table4 => vec![table4(cmd.seed, cmd.reps)?],
        Target::Fig2 => vec![fig2(out)?],
        Target::Fig3 => vec![fig3(out)?],
        Target::CovidExample => vec![covid()?],
        Target::All => vec![
            designs()?,
            table1()?,
            table2()?,
            table3()?,
            table4(cmd.seed, cmd.reps)?,
            fig2(out)?,
            fig3(out)?,
            covid()?,
        ],
    };
    Ok(sheets.into_iter().flat_map(|s| s.cells).collect())
}

pub fn run(cmd: &ReproCmd) -> Outcome {
    if cmd.reps == 0 {
        return Err(Failure::usage("reps must be at least 1"));
    }
    let cells = cells(cmd)?;
    let failed = cells.iter().filter(|c| !c.pass).count();
    match cmd.format {
        Format::Json => json(&Report { cells: &cells, passed: cells.len() - failed, failed })?,
        Format::Table => {
            let rows: Vec<Vec<String>> = cells
                .iter()
                .map(|c| {
                    vec![
                        c.target.to_string(),
                        c.cell.clone(),
                        human(c.computed),
                        c.reference.map_or_else(|| "-".into(), human),
                        c.tolerance.clone(),
                        if c.pass { "pass" } else { "FAIL" }.to_string(),
                    ]
                })
                .collect();
            table(&["target", "cell", "computed", "reference", "tolerance", "result"], &rows)?;
            println!("{} of {} cells pass", cells.len() - failed, cells.len());
        }
    }
    Ok(if failed == 0 { failure::OK } else { failure::REPRO_FAILED })
}
