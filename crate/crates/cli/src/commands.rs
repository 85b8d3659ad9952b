use std::fs;
use std::io::{self, BufReader, Write};
use std::path::Path;

use curtail::characteristics::{linear_grid, oc_curve};
use curtail::design::{
    design_approx, design_exact, design_local, k_for_n, n_for_k, DesignMode, DesignParams, LocalDesignParams,
    TestDesign,
};
use curtail::estimation::{estimate, estimator_moments};
use curtail::monitor::{read_events, MonitorState, Observation};
use curtail::simulation::{empirical_oc, SimConfig};
use serde::Serialize;

use crate::args::{
    DesignArgs, DesignCmd, EstimateCmd, Format, InitCmd, ObserveCmd, OcCmd, RunConfig, SimulateCmd, StatusCmd,
};
use crate::failure::{self, Failure, Outcome};
use crate::output::{human, json, key_values};
use crate::repro;

impl DesignArgs {
    pub fn resolve(&self) -> Result<TestDesign, Failure> {
        let (a, b, t0) = (self.alpha, self.beta, self.theta0);
        let local = match (self.theta1, self.delta) {
            (Some(_), None) => None,
            (None, Some(delta)) => Some(LocalDesignParams::new(a, b, t0, delta)?),
            _ => return Err(Failure::usage("exactly one of theta1 and delta is required")),
        };
        let params = match (&local, self.theta1) {
            (Some(l), _) => l.to_params()?,
            (None, Some(t1)) => DesignParams::new(a, b, t0, t1)?,
            (None, None) => unreachable!(),
        };
        if self.exact && (self.n_star.is_some() || self.k_star.is_some()) {
            return Err(Failure::usage("exact search cannot be combined with fixed counts"));
        }
        let mut design = match (self.n_star, self.k_star) {
            (Some(n), Some(k)) => TestDesign::from_counts(n, k, params, DesignMode::Approximate)?,
            (Some(n), None) => TestDesign::from_counts(n, k_for_n(n, t0, a)?, params, DesignMode::Approximate)?,
            (None, Some(k)) => TestDesign::from_counts(n_for_k(k, t0, a)?, k, params, DesignMode::Approximate)?,
            (None, None) if self.exact => design_exact(params)?,
            (None, None) => match local {
                Some(l) => design_local(l)?,
                None => design_approx(params)?,
            },
        };
        design.delta = self.delta;
        Ok(design)
    }
}

fn design_rows(d: &TestDesign) -> Vec<(&'static str, String)> {
    let mut rows = vec![
        ("N*", d.n_star.to_string()),
        ("k*", d.k_star.to_string()),
        ("attained alpha", human(d.attained_alpha)),
        ("attained beta", human(d.attained_beta)),
        ("theta0", human(d.params.theta0.get())),
        ("theta1", human(d.params.theta1.get())),
    ];
    if let Some(delta) = d.delta {
        rows.push(("delta", human(delta)));
    }
    rows.push(("mode", format!("{:?}", d.mode).to_lowercase()));
    rows
}

pub fn design(cmd: &DesignCmd) -> Outcome {
    let d = cmd.design.resolve()?;
    match cmd.format {
        Format::Json => json(&d)?,
        Format::Table => key_values(&design_rows(&d))?,
    }
    Ok(failure::OK)
}

impl OcCmd {
    pub fn grid(&self) -> Result<Vec<f64>, Failure> {
        if !self.thetas.is_empty() {
            if let Some(bad) = self.thetas.iter().find(|t| !(**t > 0.0 && **t < 1.0)) {
                return Err(Failure::usage(format!("theta {bad} must lie strictly inside (0, 1)")));
            }
            return Ok(self.thetas.clone());
        }
        let (lo, hi) = (self.from, self.to);
        if !((0.0..=1.0).contains(&lo) && (0.0..=1.0).contains(&hi) && lo <= hi) {
            return Err(Failure::usage(format!("grid [{lo}, {hi}] must satisfy 0 <= from <= to <= 1")));
        }
        if self.steps == 0 && lo != hi {
            return Err(Failure::usage("a grid with distinct ends needs at least one step"));
        }
        Ok(linear_grid(lo, hi, self.steps))
    }
}

#[derive(Serialize)]
struct OcRow {
    theta: f64,
    power: f64,
    asn: f64,
    sd: f64,
    cv: f64,
    rel_savings: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    est_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    est_second_moment: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    est_variance: Option<f64>,
}

/// Write operating characteristics as CSV with full double precision.
pub fn write_oc_csv<W: Write>(writer: W, design: &TestDesign, grid: &[f64], moments: bool) -> Result<(), Failure> {
    let oc = oc_curve(design, grid)?;
    let mut out = csv::Writer::from_writer(writer);
    for row in oc {
        let m = if moments { Some(estimator_moments(design, row.theta)?) } else { None };
        out.serialize(OcRow {
            theta: row.theta,
            power: row.power,
            asn: row.asn,
            sd: row.sd,
            cv: row.cv,
            rel_savings: row.rel_savings,
            est_mean: m.map(|m| m.mean),
            est_second_moment: m.map(|m| m.second_moment),
            est_variance: m.map(|m| m.variance),
        })?;
    }
    out.flush()?;
    Ok(())
}

pub fn oc(cmd: &OcCmd) -> Outcome {
    let grid = cmd.grid()?;
    let d = cmd.design.resolve()?;
    match &cmd.output {
        Some(path) => write_oc_csv(fs::File::create(path)?, &d, &grid, cmd.moments)?,
        None => write_oc_csv(io::stdout().lock(), &d, &grid, cmd.moments)?,
    }
    Ok(failure::OK)
}

/// Replace `path` in one step so a crash never leaves a torn snapshot.
fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    fs::write(&tmp, bytes)?;
    fs::rename(&tmp, path)
}

fn load(path: &Path) -> Result<MonitorState, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::general(e).context(path.display()))?;
    MonitorState::restore(&bytes).map_err(|e| Failure::from(e).context(path.display()))
}

fn state_rows(s: &MonitorState) -> Vec<(&'static str, String)> {
    vec![
        ("decision", s.decision().to_string()),
        ("n", s.n.to_string()),
        ("s_n", s.s_n.to_string()),
        ("m_star", s.m_star.map_or_else(|| "-".into(), |m| m.to_string())),
        ("N*", s.design.n_star.to_string()),
        ("k*", s.design.k_star.to_string()),
    ]
}

#[derive(Serialize)]
struct StatusView<'a> {
    decision: String,
    state: &'a MonitorState,
}

pub fn monitor_init(cmd: &InitCmd) -> Outcome {
    if cmd.snapshot.exists() && !cmd.force {
        return Err(Failure::general(format!("{} exists; pass --force to overwrite", cmd.snapshot.display())));
    }
    let state = MonitorState::new(cmd.design.resolve()?)?;
    write_atomic(&cmd.snapshot, &state.persist()?)?;
    show_status(&state, cmd.format)?;
    Ok(failure::OK)
}

fn show_status(state: &MonitorState, format: Format) -> io::Result<()> {
    match format {
        Format::Json => json(&StatusView { decision: state.decision().to_string(), state }),
        Format::Table => key_values(&state_rows(state)),
    }
}

#[derive(Serialize)]
struct ObserveView<'a> {
    decision: String,
    consumed: usize,
    unprocessed: usize,
    skipped: usize,
    state: &'a MonitorState,
}

pub fn monitor_observe(cmd: &ObserveCmd) -> Outcome {
    let mut state = load(&cmd.snapshot)?;
    let events = if cmd.events.as_os_str() == "-" {
        read_events(io::stdin().lock())?
    } else {
        let file = fs::File::open(&cmd.events).map_err(|e| Failure::general(e).context(cmd.events.display()))?;
        read_events(BufReader::new(file)).map_err(|e| Failure::from(e).context(cmd.events.display()))?
    };
    let (seen, fresh): (Vec<Observation>, Vec<Observation>) = if cmd.skip_seen {
        events.into_iter().partition(|o| o.seq <= state.n)
    } else {
        (Vec::new(), events)
    };
    let report = state.observe(&fresh)?;
    write_atomic(&cmd.snapshot, &state.persist()?)?;

    match cmd.format {
        Format::Json => json(&ObserveView {
            decision: report.decision.to_string(),
            consumed: report.consumed,
            unprocessed: report.unprocessed,
            skipped: seen.len(),
            state: &state,
        })?,
        Format::Table => {
            // the decision alone on stdout, for scripts
            println!("{}", report.decision);
            eprintln!(
                "applied {} events, n={} s_n={} m_star={}",
                report.consumed,
                state.n,
                state.s_n,
                state.m_star.map_or_else(|| "-".into(), |m| m.to_string())
            );
        }
    }
    if report.unprocessed > 0 {
        eprintln!("warning: {} events after the stop were not applied", report.unprocessed);
    }
    Ok(match report.decision {
        curtail::monitor::Decision::RejectH0 => failure::REJECT,
        _ => failure::OK,
    })
}

pub fn monitor_status(cmd: &StatusCmd) -> Outcome {
    show_status(&load(&cmd.snapshot)?, cmd.format)?;
    Ok(failure::OK)
}

pub fn estimate_cmd(cmd: &EstimateCmd) -> Outcome {
    let state = load(&cmd.snapshot)?;
    let est = estimate(&state, cmd.gamma)?;
    match cmd.format {
        Format::Json => json(&est)?,
        Format::Table => key_values(&[
            ("theta_hat", human(est.theta_hat)),
            ("m_star", est.m_star.to_string()),
            ("level", human(est.ci_level)),
            ("ci_lower", human(est.ci_lower)),
            ("ci_upper", human(est.ci_upper)),
            ("degenerate", est.degenerate.to_string()),
        ])?,
    }
    Ok(failure::OK)
}

pub fn simulate_cmd(cmd: &SimulateCmd) -> Outcome {
    let mut config = SimConfig::new(cmd.design.resolve()?, cmd.theta, cmd.reps, cmd.seed);
    config.ci_gamma = cmd.gamma;
    config.validate()?;
    let check = empirical_oc(&config)?;
    match cmd.format {
        Format::Json => json(&check)?,
        Format::Table => {
            let (r, e, se) = (&check.report, &check.exact, &check.report.mc_standard_errors);
            key_values(&[
                ("theta", human(r.theta_true)),
                ("replications", r.replications.to_string()),
                ("seed", r.seed.to_string()),
                ("reject rate", format!("{} (se {}, exact {})", human(r.reject_rate), human(se.reject_rate), human(e.power))),
                ("mean M*", format!("{} (se {}, exact {})", human(r.mean_m_star), human(se.mean_m_star), human(e.asn))),
                ("sd M*", format!("{} (exact {})", human(r.sd_m_star), human(e.sd))),
                ("coverage", format!("{} (se {})", human(r.coverage), human(se.coverage))),
                ("normality distance", r.normality_sup_distance.map_or_else(|| "-".into(), human)),
                ("z reject / asn", format!("{:.2} / {:.2}", check.reject_z, check.asn_z)),
            ])?
        }
    }
    Ok(failure::OK)
}

pub fn run_config(path: &Path) -> Outcome {
    let text = fs::read_to_string(path).map_err(|e| Failure::general(e).context(path.display()))?;
    let config: RunConfig = serde_json::from_str(&text)
        .map_err(|e| Failure::usage(format!("{}: invalid run document: {e}", path.display())))?;
    dispatch_config(&config)
}

pub fn dispatch_config(config: &RunConfig) -> Outcome {
    match config {
        RunConfig::Design(c) => design(c),
        RunConfig::Oc(c) => oc(c),
        RunConfig::MonitorInit(c) => monitor_init(c),
        RunConfig::MonitorObserve(c) => monitor_observe(c),
        RunConfig::MonitorStatus(c) => monitor_status(c),
        RunConfig::Estimate(c) => estimate_cmd(c),
        RunConfig::Simulate(c) => simulate_cmd(c),
        RunConfig::Repro(c) => repro::run(c),
    }
}
