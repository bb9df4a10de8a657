//! End-to-end runs driven by a [`RunConfig`]: the pieces behind each CLI verb,
//! returning serializable reports. File layout and exit codes are the CLI's
//! business.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisOptions, AnalysisReport, BisectionResult, Certificate, LkfMatrices, Verdict};
use crate::config::{CertSource, CertifySpec, RunConfig, SweepSpec, SweepVariable};
use crate::error::{Error, Result};
use crate::model::{DelaySpec, DwellSpec, LpvDelaySystem, ParamBox, PlantFile};
use crate::sim::{
    self, disagreement, empirical_l2_gain, gen_pwc_trajectory, lyapunov_trace, DelayFn, Disturbance, InitialHistory,
    MonotonicityReport, PlantLoop, SimConfig, Trajectory,
};
use crate::synthesis::{self, GainSchedule, SynthVerdict, SynthesisCertificate, SynthesisReport};

pub fn analyze(cfg: &RunConfig) -> Result<AnalysisReport> {
    let pf = cfg.plant_file()?;
    analysis::check_stability(&pf.system, &pf.delay, &pf.dwell, &cfg.analysis)
}

pub fn synthesize(cfg: &RunConfig) -> Result<SynthesisReport> {
    let pf = cfg.plant_file()?;
    synthesis::synthesize(&pf.system, &pf.delay, &pf.dwell, &cfg.synthesis)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DisagreementSummary {
    pub initial: f64,
    #[serde(rename = "final")]
    pub last: f64,
    /// `initial / final`
    pub reduction: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimSummary {
    pub closed_loop: bool,
    pub full_network: bool,
    pub samples: usize,
    pub final_time: f64,
    pub diverged: bool,
    pub blowup_time: Option<f64>,
    pub final_state_norm: f64,
    pub max_state_norm: f64,
    /// Only for zero initial conditions, nonzero disturbance and no divergence.
    pub empirical_l2_gain: Option<f64>,
    pub certified_gamma: Option<f64>,
    pub disagreement: Option<DisagreementSummary>,
}

pub struct SimOutcome {
    pub trajectory: Trajectory,
    pub summary: SimSummary,
    /// Per-sample disagreement norm for network runs.
    pub disagreement: Option<Vec<f64>>,
}

fn hold_spacing(spacing: Option<f64>, dwell: &DwellSpec) -> Result<DwellSpec> {
    let s = spacing.unwrap_or(dwell.t_dwell());
    if s < dwell.t_dwell() * (1.0 - 1e-12) {
        return Err(Error::Config(format!(
            "parameter hold {s} is shorter than the dwell time {}",
            dwell.t_dwell()
        )));
    }
    DwellSpec::new(s, dwell.kappa())
}

pub fn simulate(cfg: &RunConfig, gain: Option<&GainSchedule>) -> Result<SimOutcome> {
    let spec = cfg
        .simulation
        .as_ref()
        .ok_or_else(|| Error::Config("config has no simulation section".into()))?;
    let gain = if spec.closed_loop {
        Some(gain.ok_or_else(|| Error::Config("closed-loop simulation needs a gain schedule".into()))?)
    } else {
        None
    };
    let pf = cfg.plant_file()?;
    let hold = hold_spacing(spec.spacing, &pf.dwell)?;
    let sc = &spec.sim;
    let (tr, agents) = if spec.full_network {
        let mut model = cfg
            .network_model()?
            .ok_or_else(|| Error::Config("full_network simulation needs a network section".into()))?;
        if let Some(g) = gain {
            model = model.with_gain(g.clone())?;
        }
        let sigma_box = ParamBox::interval(0.0, 1.0)?;
        let traj = gen_pwc_trajectory(sc.seed, &hold, &sigma_box, sc.horizon, spec.hold)?;
        let agents = model.network().agents();
        (sim::simulate(&model, &traj, sc)?, Some(agents))
    } else {
        let traj = gen_pwc_trajectory(sc.seed, &hold, pf.system.params(), sc.horizon, spec.hold)?;
        (sim::simulate_plant(&pf.system, &pf.delay, &pf.dwell, gain, &traj, sc)?, None)
    };

    let norms = tr.state_norms();
    let zero_start = tr.states[0].iter().all(|v| *v == 0.0) && tr.pre_states.iter().flatten().all(|v| *v == 0.0);
    let l2 = if zero_start && sc.disturbance != Disturbance::Zero && !tr.diverged {
        empirical_l2_gain(&tr).ok()
    } else {
        None
    };
    let dis = agents.map(|n| disagreement(&tr, n)).transpose()?;
    let summary = SimSummary {
        closed_loop: gain.is_some(),
        full_network: spec.full_network,
        samples: tr.len(),
        final_time: *tr.times.last().unwrap(),
        diverged: tr.diverged,
        blowup_time: tr.blowup_time,
        final_state_norm: *norms.last().unwrap(),
        max_state_norm: norms.iter().copied().fold(0.0, f64::max),
        empirical_l2_gain: l2,
        certified_gamma: gain.and_then(|g| g.gamma),
        disagreement: dis.as_ref().map(|d| {
            let (first, last) = (d[0], *d.last().unwrap());
            DisagreementSummary {
                initial: first,
                last,
                reduction: first / last,
            }
        }),
    };
    Ok(SimOutcome {
        trajectory: tr,
        summary,
        disagreement: dis,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    pub solver_failure: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub kind: String,
    pub rows: Vec<SweepRow>,
    pub bisection: Option<BisectionResult>,
    /// Full analysis (refinement audit included) at the bisection result.
    pub final_check: Option<AnalysisReport>,
    /// The final check failed or its refinement audit was flagged.
    pub flagged: bool,
}

fn status_name(v: &Verdict) -> &'static str {
    match v {
        Verdict::Certified { .. } => "certified",
        Verdict::NotCertified { .. } => "not_certified",
        Verdict::SolverFailure { .. } => "solver_failure",
    }
}

fn bisection_rows(b: &BisectionResult) -> Vec<SweepRow> {
    b.steps
        .iter()
        .map(|s| SweepRow {
            value: s.value,
            status: if s.certified { "certified" } else { "not_certified" }.into(),
            solver_failure: s.solver_failure,
        })
        .collect()
}

fn with_upper(sys: &LpvDelaySystem, axis: usize, v: f64) -> Result<LpvDelaySystem> {
    if axis >= sys.params().dim() {
        return Err(Error::Config(format!("sweep axis {axis} but the plant has {} parameters", sys.params().dim())));
    }
    sys.with_params(sys.params().with_upper(axis, v)?)
}

fn final_check(sys: &LpvDelaySystem, delay: &DelaySpec, dwell: &DwellSpec, opts: &AnalysisOptions) -> Result<(AnalysisReport, bool)> {
    let rep = analysis::check_stability(sys, delay, dwell, opts)?;
    let flagged = match rep.verdict.certificate() {
        Some(c) => c.residuals.flagged,
        None => true,
    };
    Ok((rep, flagged))
}

/// Bisection probes skip the refinement audit; the returned bound gets a full
/// check with the configured options.
pub fn sweep(cfg: &RunConfig) -> Result<SweepReport> {
    let spec = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("config has no sweep section".into()))?;
    let pf = cfg.plant_file()?;
    let probe_opts = AnalysisOptions {
        refine_check: false,
        ..cfg.analysis.clone()
    };
    match spec {
        SweepSpec::ParamBound { axis, lo, hi, tol } => {
            with_upper(&pf.system, *axis, *hi)?;
            let family = |v: f64| with_upper(&pf.system, *axis, v);
            let b = analysis::max_param_bound(&family, &pf.delay, &pf.dwell, *lo, *hi, *tol, &probe_opts)?;
            let (rep, flagged) = final_check(&family(b.value)?, &pf.delay, &pf.dwell, &cfg.analysis)?;
            Ok(SweepReport {
                kind: "param_bound".into(),
                rows: bisection_rows(&b),
                bisection: Some(b),
                final_check: Some(rep),
                flagged,
            })
        }
        SweepSpec::DwellTime { lo, hi, rel_tol } => {
            let b = analysis::min_dwell_time(&pf.system, &pf.delay, pf.dwell.kappa(), *lo, *hi, *rel_tol, &probe_opts)?;
            let dwell = DwellSpec::new(b.value, pf.dwell.kappa())?;
            let (rep, flagged) = final_check(&pf.system, &pf.delay, &dwell, &cfg.analysis)?;
            Ok(SweepReport {
                kind: "dwell_time".into(),
                rows: bisection_rows(&b),
                bisection: Some(b),
                final_check: Some(rep),
                flagged,
            })
        }
        SweepSpec::Cells { variable, values } => {
            if values.is_empty() {
                return Err(Error::Config("sweep has no values".into()));
            }
            let cell = |v: f64| -> Result<SweepRow> {
                let mut p: PlantFile = pf.clone();
                match variable {
                    SweepVariable::H => p.delay = DelaySpec::new(v, p.delay.mu())?,
                    SweepVariable::Mu => p.delay = DelaySpec::new(p.delay.h(), v)?,
                    SweepVariable::TDwell => p.dwell = DwellSpec::new(v, p.dwell.kappa())?,
                    SweepVariable::Kappa => p.dwell = DwellSpec::new(p.dwell.t_dwell(), v)?,
                    SweepVariable::RhoBar => p.system = with_upper(&p.system, 0, v)?,
                }
                let rep = analysis::check_stability(&p.system, &p.delay, &p.dwell, &cfg.analysis)?;
                Ok(SweepRow {
                    value: v,
                    status: status_name(&rep.verdict).into(),
                    solver_failure: matches!(rep.verdict, Verdict::SolverFailure { .. }),
                })
            };
            let rows = values.par_iter().map(|v| cell(*v)).collect::<Result<Vec<_>>>()?;
            Ok(SweepReport {
                kind: "cells".into(),
                rows,
                bisection: None,
                final_check: None,
                flagged: false,
            })
        }
    }
}

/// Certificate under audit.
pub enum Audited<'a> {
    Analysis(&'a Certificate),
    Synthesis {
        gains: &'a GainSchedule,
        certificate: &'a SynthesisCertificate,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceSummary {
    pub seed: u64,
    pub switches: usize,
    pub v_initial: f64,
    pub v_final: f64,
    pub diverged: bool,
    pub monotonicity: MonotonicityReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertifyReport {
    pub source: CertSource,
    pub dt: f64,
    pub horizon: f64,
    pub spacing: f64,
    pub rel_tol: f64,
    pub traces: Vec<TraceSummary>,
    pub all_ok: bool,
}

/// Trace `V` along `spec.trajectories` random runs with `w = 0`.
pub fn audit_certificate(pf: &PlantFile, audited: &Audited, spec: &CertifySpec) -> Result<CertifyReport> {
    let (lkf, gain, source): (&dyn LkfMatrices, Option<&GainSchedule>, CertSource) = match audited {
        Audited::Analysis(c) => (*c, None, CertSource::Analysis),
        Audited::Synthesis { gains, certificate } => (*certificate, Some(*gains), CertSource::Synthesis),
    };
    if spec.trajectories == 0 {
        return Err(Error::Config("certify needs at least one trajectory".into()));
    }
    let h = pf.delay.h();
    let dt = spec.dt.unwrap_or(if h > 0.0 { (h / 50.0).min(1e-3) } else { 1e-3 });
    let hold = hold_spacing(spec.spacing, &pf.dwell)?;
    let n = pf.system.n();
    let x0 = spec.x0.clone().unwrap_or_else(|| vec![1.0; n]);
    let delay_fn = spec.delay_fn.clone().unwrap_or(DelayFn::Constant { d: h });
    let model = PlantLoop {
        sys: &pf.system,
        delay: pf.delay,
        dwell: pf.dwell,
        gain,
    };
    let one = |k: usize| -> Result<TraceSummary> {
        let seed = spec.seed + k as u64;
        let traj = gen_pwc_trajectory(seed, &hold, pf.system.params(), spec.horizon, spec.hold)?;
        let cfg = SimConfig {
            dt,
            horizon: spec.horizon,
            history: InitialHistory::constant(&x0),
            delay_fn: delay_fn.clone(),
            disturbance: Disturbance::Zero,
            seed,
            blowup_norm: 1e8,
        };
        let tr = sim::simulate(&model, &traj, &cfg)?;
        let trace = lyapunov_trace(&tr, lkf, 1)?;
        Ok(TraceSummary {
            seed,
            switches: traj.switch_times().len(),
            v_initial: trace.values[0],
            v_final: *trace.values.last().unwrap(),
            diverged: tr.diverged,
            monotonicity: trace.check_monotone(spec.rel_tol),
        })
    };
    let traces = (0..spec.trajectories).into_par_iter().map(one).collect::<Result<Vec<_>>>()?;
    let all_ok = traces.iter().all(|t| t.monotonicity.ok() && !t.diverged);
    Ok(CertifyReport {
        source,
        dt,
        horizon: spec.horizon,
        spacing: hold.t_dwell(),
        rel_tol: spec.rel_tol,
        traces,
        all_ok,
    })
}

#[allow(clippy::large_enum_variant)]
pub enum CertifyOutcome {
    Audited {
        report: CertifyReport,
        analysis: Option<AnalysisReport>,
        synthesis: Option<SynthesisReport>,
    },
    /// No certificate to audit.
    Missing { detail: String, solver_failure: bool },
}

/// Produce a certificate per `cfg.certify.source` and audit it.
pub fn certify(cfg: &RunConfig) -> Result<CertifyOutcome> {
    let pf = cfg.plant_file()?;
    match cfg.certify.source {
        CertSource::Analysis => {
            let rep = analysis::check_stability(&pf.system, &pf.delay, &pf.dwell, &cfg.analysis)?;
            match &rep.verdict {
                Verdict::Certified { certificate } => {
                    let report = audit_certificate(&pf, &Audited::Analysis(certificate), &cfg.certify)?;
                    Ok(CertifyOutcome::Audited {
                        report,
                        analysis: Some(rep),
                        synthesis: None,
                    })
                }
                other => Ok(CertifyOutcome::Missing {
                    detail: rep.solver_detail.clone(),
                    solver_failure: matches!(other, Verdict::SolverFailure { .. }),
                }),
            }
        }
        CertSource::Synthesis => {
            let rep = synthesis::synthesize(&pf.system, &pf.delay, &pf.dwell, &cfg.synthesis)?;
            match &rep.verdict {
                SynthVerdict::Feasible { gains, certificate } => {
                    let report = audit_certificate(&pf, &Audited::Synthesis { gains, certificate }, &cfg.certify)?;
                    Ok(CertifyOutcome::Audited {
                        report,
                        analysis: None,
                        synthesis: Some(rep),
                    })
                }
                other => Ok(CertifyOutcome::Missing {
                    detail: rep.solver_detail.clone(),
                    solver_failure: matches!(other, SynthVerdict::SolverFailure { .. }),
                }),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{CertifySpec, SimulationSpec};
    use crate::lmi::{CertDegrees, Degrees, GridPlan};
    use crate::model::{SystemMatrices, SystemParts};
    use crate::sim::Hold;
    use nalgebra::dmatrix;

    fn scalar_config(a: f64) -> RunConfig {
        let sys = LpvDelaySystem::new(SystemParts::constant(
            SystemMatrices {
                a: dmatrix![a],
                ad: dmatrix![0.2],
                b: dmatrix![1.0],
                c: dmatrix![1.0],
                cd: dmatrix![0.0],
                d: dmatrix![0.0],
                e: dmatrix![1.0],
                f: dmatrix![0.0],
            },
            ParamBox::interval(0.0, 1.0).unwrap(),
        ))
        .unwrap();
        RunConfig {
            name: "scalar".into(),
            plant: Some(PlantFile {
                system: sys,
                delay: DelaySpec::new(0.2, 0.0).unwrap(),
                dwell: DwellSpec::new(0.5, 0.1).unwrap(),
            }),
            network: None,
            analysis: AnalysisOptions {
                grid: GridPlan::new(2, 2).unwrap(),
                degrees: CertDegrees::uniform(Degrees::new(0, 0)),
                ..Default::default()
            },
            synthesis: Default::default(),
            simulation: Some(SimulationSpec {
                sim: SimConfig {
                    dt: 1e-3,
                    horizon: 2.0,
                    history: InitialHistory::constant(&[0.0]),
                    delay_fn: DelayFn::Constant { d: 0.2 },
                    disturbance: Disturbance::unit_step(),
                    seed: 1,
                    blowup_norm: 1e8,
                },
                hold: Hold::Exact,
                spacing: None,
                closed_loop: false,
                full_network: false,
            }),
            sweep: Some(SweepSpec::Cells {
                variable: SweepVariable::H,
                values: vec![0.1, 0.2],
            }),
            certify: CertifySpec {
                trajectories: 2,
                horizon: 2.0,
                ..Default::default()
            },
        }
    }

    #[test]
    fn stable_scalar_runs_end_to_end() {
        let cfg = scalar_config(-2.0);
        assert!(analyze(&cfg).unwrap().verdict.is_certified());
        let out = simulate(&cfg, None).unwrap();
        assert!(!out.summary.diverged);
        assert!(out.summary.empirical_l2_gain.is_some());
        let sw = sweep(&cfg).unwrap();
        assert_eq!(sw.rows.len(), 2);
        assert!(sw.rows.iter().all(|r| r.status == "certified"));
        match certify(&cfg).unwrap() {
            CertifyOutcome::Audited { report, .. } => {
                assert_eq!(report.traces.len(), 2);
                assert!(report.all_ok, "{report:?}");
            }
            CertifyOutcome::Missing { detail, .. } => panic!("{detail}"),
        }
    }

    #[test]
    fn closed_loop_without_gain_is_a_config_error() {
        let mut cfg = scalar_config(-2.0);
        cfg.simulation.as_mut().unwrap().closed_loop = true;
        assert!(matches!(simulate(&cfg, None), Err(Error::Config(_))));
    }

    #[test]
    fn hold_shorter_than_dwell_rejected() {
        let mut cfg = scalar_config(-2.0);
        cfg.simulation.as_mut().unwrap().spacing = Some(0.1);
        assert!(matches!(simulate(&cfg, None), Err(Error::Config(_))));
    }

    #[test]
    fn unstable_scalar_has_nothing_to_audit() {
        let cfg = scalar_config(1.0);
        assert!(matches!(certify(&cfg).unwrap(), CertifyOutcome::Missing { solver_failure: false, .. }));
    }
}
