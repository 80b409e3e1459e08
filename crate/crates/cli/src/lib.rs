//! Implementation of the `relbody` command line: scenario loading with a
//! bundled registry, run orchestration, CSV trajectory tables, and TOML
//! run summaries. The binary in `main.rs` only parses arguments and maps
//! results onto exit codes.

use relbody::{
    bcos3_consistency_check, body_frame_residual, two_body_bcos_contradiction,
    validate_initial_conditions, Formulation, IntegrateError, IntegratorSettings, InvariantReport,
    ModelError, Scenario, TerminationReason, Trajectory,
};
use serde::Serialize;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

/// Scenarios compiled into the binary, runnable by bare name.
pub const BUNDLED: &[(&str, &str)] = &[
    ("two_body_kepler", include_str!("../../../scenarios/two_body_kepler.toml")),
    ("bcos3_antipodal", include_str!("../../../scenarios/bcos3_antipodal.toml")),
    ("bcos3_unequal_masses", include_str!("../../../scenarios/bcos3_unequal_masses.toml")),
    ("rs2_random_n5", include_str!("../../../scenarios/rs2_random_n5.toml")),
    ("body_frame_identity", include_str!("../../../scenarios/body_frame_identity.toml")),
];

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("scenario not found: {0:?} is neither a readable file nor a bundled scenario name")]
    ScenarioNotFound(String),
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: std::io::Error },
    #[error("scenario {path} does not parse:\n{message}")]
    Parse { path: String, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Integrate(#[from] IntegrateError),
    #[error("initial conditions invalid:\n{0}")]
    InvalidInitialConditions(String),
    #[error("unknown formulation {0:?}; expected NCME, RS1, RS2, or BCOS_REDUCED")]
    UnknownFormulation(String),
}

/// All CliErrors are input errors by the exit-code contract.
pub const EXIT_INPUT_ERROR: u8 = 1;

pub fn exit_code_for(termination: TerminationReason) -> u8 {
    match termination {
        TerminationReason::ReachedTEnd => 0,
        TerminationReason::CollisionGuard => 2,
        TerminationReason::MaxSteps => 3,
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunFlags {
    /// Replaces the formulation named in the scenario file.
    pub formulation: Option<Formulation>,
    /// Adds per-sample invariant columns to the trajectory table.
    pub csv_invariants: bool,
    /// Skips per-sample invariant reports; the summary then covers only
    /// the final sample.
    pub skip_reports: bool,
}

pub fn parse_formulation(name: &str) -> Result<Formulation, CliError> {
    match name {
        "NCME" => Ok(Formulation::Ncme),
        "RS1" => Ok(Formulation::Rs1),
        "RS2" => Ok(Formulation::Rs2),
        "BCOS_REDUCED" => Ok(Formulation::BcosReduced),
        other => Err(CliError::UnknownFormulation(other.to_string())),
    }
}

/// Loads a scenario from a file path, falling back to the bundled
/// registry when the argument names no existing file.
pub fn load_scenario(arg: &str) -> Result<Scenario, CliError> {
    let path = Path::new(arg);
    let (label, text) = if path.is_file() {
        let text = fs::read_to_string(path)
            .map_err(|source| CliError::Read { path: path.to_path_buf(), source })?;
        (arg.to_string(), text)
    } else if let Some((name, text)) = BUNDLED.iter().find(|(name, _)| *name == arg) {
        (format!("bundled:{name}"), text.to_string())
    } else {
        return Err(CliError::ScenarioNotFound(arg.to_string()));
    };
    let scenario: Scenario = toml::from_str(&text)
        .map_err(|e| CliError::Parse { path: label, message: e.to_string() })?;
    scenario.validate()?;
    Ok(scenario)
}

#[derive(Debug)]
pub struct RunArtifacts {
    pub name: String,
    pub termination: TerminationReason,
    pub csv_path: PathBuf,
    pub summary_path: PathBuf,
    pub samples: usize,
}

/// Integrates one scenario and writes `<name>.csv` and
/// `<name>.summary.toml` under `out_dir`.
pub fn run_scenario_file(
    arg: &str,
    out_dir: &Path,
    flags: &RunFlags,
) -> Result<RunArtifacts, CliError> {
    let mut scenario = load_scenario(arg)?;
    if let Some(f) = flags.formulation {
        scenario.formulation = f;
        scenario.validate()?;
    }
    let settings = IntegratorSettings::from_scenario(&scenario)?;
    let trajectory = relbody::propagate(&scenario, &settings, !flags.skip_reports)?;

    fs::create_dir_all(out_dir)
        .map_err(|source| CliError::Write { path: out_dir.to_path_buf(), source })?;
    let csv_path = out_dir.join(format!("{}.csv", scenario.name));
    write_csv(&csv_path, &trajectory, flags.csv_invariants)
        .map_err(|source| CliError::Write { path: csv_path.clone(), source })?;

    let summary = build_summary(&scenario, &trajectory)?;
    let summary_path = out_dir.join(format!("{}.summary.toml", scenario.name));
    let text = toml::to_string(&summary).expect("summary serializes");
    fs::write(&summary_path, text)
        .map_err(|source| CliError::Write { path: summary_path.clone(), source })?;

    Ok(RunArtifacts {
        name: scenario.name,
        termination: trajectory.termination,
        csv_path,
        summary_path,
        samples: trajectory.samples.len(),
    })
}

/// One row per sample: t, then per key its position and velocity
/// components, formatted with shortest round-trip notation so identical
/// runs produce identical bytes.
fn write_csv(path: &Path, traj: &Trajectory, with_reports: bool) -> std::io::Result<()> {
    let file = fs::File::create(path)?;
    let mut out = std::io::BufWriter::new(file);

    let mut header = String::from("t");
    for key in &traj.keys {
        let stub = key.stub();
        for c in ["x", "y", "z"] {
            let _ = write!(header, ",r{stub}_{c}");
        }
        for c in ["x", "y", "z"] {
            let _ = write!(header, ",v{stub}_{c}");
        }
    }
    if with_reports {
        header.push_str(",identity_residual,t_sum_residual,restless_pairs,accelerating_bodies,bound_ok");
    }
    writeln!(out, "{header}")?;

    let mut row = String::new();
    for (si, sample) in traj.samples.iter().enumerate() {
        row.clear();
        let _ = write!(row, "{}", sample.time);
        for ki in 0..traj.keys.len() {
            let r = traj.position(si, ki);
            let v = traj.velocity(si, ki);
            let _ = write!(row, ",{},{},{},{},{},{}", r.x, r.y, r.z, v.x, v.y, v.z);
        }
        if with_reports {
            match &sample.report {
                Some(rep) => {
                    let _ = write!(
                        row,
                        ",{},{},{},{},{}",
                        rep.identity_residual,
                        rep.t_sum_residual,
                        rep.restless_pairs.len(),
                        rep.accelerating_bodies,
                        u8::from(rep.bound_ok)
                    );
                }
                None => row.push_str(",,,,,"),
            }
        }
        writeln!(out, "{row}")?;
    }
    out.flush()
}

#[derive(Serialize)]
struct ReportSummary {
    time: f64,
    identity_lhs: f64,
    identity_rhs: f64,
    identity_residual: f64,
    t_sum: f64,
    t_sum_closed: f64,
    t_sum_residual: f64,
    restless_pairs: Vec<String>,
    accelerating_bodies: usize,
    restless_threshold: f64,
    bound_ok: bool,
    negativity_ok: bool,
}

impl From<&InvariantReport> for ReportSummary {
    fn from(r: &InvariantReport) -> Self {
        ReportSummary {
            time: r.time,
            identity_lhs: r.identity_lhs,
            identity_rhs: r.identity_rhs,
            identity_residual: r.identity_residual,
            t_sum: r.t_sum,
            t_sum_closed: r.t_sum_closed,
            t_sum_residual: r.t_sum_residual,
            restless_pairs: r.restless_pairs.iter().map(|p| p.stub()).collect(),
            accelerating_bodies: r.accelerating_bodies,
            restless_threshold: r.restless_threshold,
            bound_ok: r.bound_ok,
            negativity_ok: r.negativity_ok,
        }
    }
}

#[derive(Serialize)]
struct InvariantStats {
    /// Worst identity residual across all reported samples.
    max_identity_residual: f64,
    max_t_sum_residual: f64,
    min_restless_pairs: usize,
    min_accelerating_bodies: usize,
    bound_ok_everywhere: bool,
    negativity_ok_everywhere: bool,
}

#[derive(Serialize)]
struct BcosSummary {
    verdict: String,
    /// Magnitude of G(m2 r2/|r2|^3 + m3 r3/|r3|^3) at t = 0; zero exactly
    /// when pinning the origin on body 1 is self-consistent.
    constraint_residual: f64,
    mass_mismatch: f64,
    geometry_residual: f64,
    /// G m_k / |r_k - r_1|^2 per companion: the acceleration each one
    /// demands of the supposedly motionless origin body.
    companion_contradictions: Vec<f64>,
}

#[derive(Serialize)]
struct BodyFrameSummary {
    max_residual: f64,
    acceleration_scale: f64,
}

#[derive(Serialize)]
struct Summary {
    name: String,
    formulation: String,
    termination: String,
    samples: usize,
    steps: u64,
    t_final: f64,
    collision_guard_eps: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    invariants: Option<InvariantStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    final_report: Option<ReportSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bcos: Option<BcosSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    body_frame: Option<BodyFrameSummary>,
}

fn build_summary(scenario: &Scenario, traj: &Trajectory) -> Result<Summary, CliError> {
    let reported: Vec<&InvariantReport> =
        traj.samples.iter().filter_map(|s| s.report.as_ref()).collect();

    let invariants = if reported.is_empty() {
        None
    } else {
        Some(InvariantStats {
            max_identity_residual: reported
                .iter()
                .map(|r| r.identity_residual)
                .fold(0.0, f64::max),
            max_t_sum_residual: reported.iter().map(|r| r.t_sum_residual).fold(0.0, f64::max),
            min_restless_pairs: reported.iter().map(|r| r.restless_pairs.len()).min().unwrap_or(0),
            min_accelerating_bodies: reported
                .iter()
                .map(|r| r.accelerating_bodies)
                .min()
                .unwrap_or(0),
            bound_ok_everywhere: reported.iter().all(|r| r.bound_ok),
            negativity_ok_everywhere: reported.iter().all(|r| r.negativity_ok),
        })
    };

    // The final sample's report, computing it on the spot when per-sample
    // reporting was off.
    let final_report = match traj.final_sample().report.as_ref() {
        Some(r) => Some(ReportSummary::from(r)),
        None if scenario.bodies.len() >= 2 => {
            let idx = traj.samples.len() - 1;
            let report = match traj.absolute_state_at(idx) {
                Some(state) => InvariantReport::from_state(&state),
                None => InvariantReport::from_relative(
                    &traj.relative_state_at(idx).expect("non-absolute trajectory is relative"),
                ),
            }
            .map_err(IntegrateError::from)?;
            Some(ReportSummary::from(&report))
        }
        None => None,
    };

    let bcos = bcos_summary(scenario);

    let body_frame = if scenario.formulation == Formulation::Ncme && scenario.bodies.len() >= 2 {
        let idx = traj.samples.len() - 1;
        let state = traj.absolute_state_at(idx).expect("NCME trajectory is absolute");
        let check =
            body_frame_residual(&state, 0.0).map_err(IntegrateError::Singularity)?;
        Some(BodyFrameSummary {
            max_residual: check.residuals.iter().copied().fold(0.0, f64::max),
            acceleration_scale: check.acceleration_scale,
        })
    } else {
        None
    };

    Ok(Summary {
        name: scenario.name.clone(),
        formulation: scenario.formulation.as_str().to_string(),
        termination: traj.termination.to_string(),
        samples: traj.samples.len(),
        steps: traj.steps,
        t_final: traj.final_sample().time,
        collision_guard_eps: traj.collision_guard_eps,
        invariants,
        final_report,
        bcos,
        body_frame,
    })
}

fn bcos_summary(scenario: &Scenario) -> Option<BcosSummary> {
    if scenario.formulation != Formulation::BcosReduced || scenario.bodies.len() != 3 {
        return None;
    }
    let g = scenario.g;
    let r1 = scenario.bodies[0].position;
    let r2 = scenario.bodies[1].position - r1;
    let r3 = scenario.bodies[2].position - r1;
    let (m2, m3) = (scenario.bodies[1].mass, scenario.bodies[2].mass);
    let check = bcos3_consistency_check(m2, m3, r2, r3);
    Some(BcosSummary {
        verdict: format!("{:?}", check.verdict),
        constraint_residual: g * check.constraint_residual,
        mass_mismatch: check.mass_mismatch,
        geometry_residual: check.geometry_residual,
        companion_contradictions: vec![
            two_body_bcos_contradiction(m2, r2, g),
            two_body_bcos_contradiction(m3, r3, g),
        ],
    })
}

/// Validates a scenario without integrating. Returns the printable report;
/// an invalid initial state is an error carrying the same text.
pub fn check_scenario_file(arg: &str) -> Result<String, CliError> {
    let scenario = load_scenario(arg)?;
    let state = scenario.initial_state();
    let validation = validate_initial_conditions(&state);

    let mut out = String::new();
    let _ = writeln!(
        out,
        "scenario {}: {} bodies, formulation {}",
        scenario.name,
        scenario.bodies.len(),
        scenario.formulation
    );
    let _ = writeln!(out, "initial conditions: {validation}");

    if scenario.formulation == Formulation::BcosReduced {
        match scenario.bodies.len() {
            2 => {
                let g = scenario.g;
                let r2 = scenario.bodies[1].position - scenario.bodies[0].position;
                let demand = two_body_bcos_contradiction(scenario.bodies[1].mass, r2, g);
                let _ = writeln!(
                    out,
                    "pinned-origin two-body check: companion demands origin acceleration {demand} (> 0, so the pinned system contradicts itself)"
                );
            }
            3 => {
                if let Some(b) = bcos_summary(&scenario) {
                    let _ = writeln!(out, "pinned-origin consistency: {}", b.verdict);
                    let _ = writeln!(out, "  constraint residual: {}", b.constraint_residual);
                    let _ = writeln!(out, "  mass mismatch: {}", b.mass_mismatch);
                    let _ = writeln!(out, "  geometry residual: {}", b.geometry_residual);
                    for (i, c) in b.companion_contradictions.iter().enumerate() {
                        let _ = writeln!(
                            out,
                            "  companion {} demands origin acceleration {c}",
                            i + 2
                        );
                    }
                }
            }
            _ => {}
        }
    }

    if !validation.is_ok() {
        return Err(CliError::InvalidInitialConditions(out));
    }
    Ok(out)
}

/// Runs several scenarios concurrently on a small worker pool. Results
/// come back in input order.
pub fn sweep(
    scenarios: &[String],
    out_dir: &Path,
    jobs: Option<usize>,
    flags: &RunFlags,
) -> Vec<(String, Result<RunArtifacts, CliError>)> {
    let n = scenarios.len();
    if n == 0 {
        return Vec::new();
    }
    let jobs = jobs.unwrap_or(n).clamp(1, n);
    let next = AtomicUsize::new(0);
    let results: Vec<Mutex<Option<Result<RunArtifacts, CliError>>>> =
        (0..n).map(|_| Mutex::new(None)).collect();

    std::thread::scope(|scope| {
        for _ in 0..jobs {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let result = run_scenario_file(&scenarios[i], out_dir, flags);
                *results[i].lock().expect("result slot") = Some(result);
            });
        }
    });

    scenarios
        .iter()
        .cloned()
        .zip(results.into_iter().map(|m| m.into_inner().expect("slot").expect("worker filled slot")))
        .collect()
}
