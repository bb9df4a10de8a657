use std::path::Path;

use lpvdt::analysis::{AnalysisReport, Verdict};
use lpvdt::config::RunConfig;
use lpvdt::lmi::{CertDegrees, Degrees, GainStructure, GridPlan};
use lpvdt::synthesis::{GammaMode, GainSchedule, SynthVerdict, SynthesisReport};
use lpvdt::workflow::{self, Audited, CertifyOutcome};
use lpvdt::Error;
use serde_json::{json, Value};

use crate::rundir::RunDir;
use crate::{Cli, GridFlags, StructureFlag, Verb};

pub const EXIT_OK: u8 = 0;
pub const EXIT_NEGATIVE: u8 = 1;
pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_SOLVER: u8 = 3;

struct Outcome {
    code: u8,
    status: &'static str,
    summary: Value,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Solver(_) | Error::Singular { .. } => EXIT_SOLVER,
        Error::Precondition(_) => EXIT_NEGATIVE,
        Error::Config(_) | Error::Domain(_) | Error::Dimension(_) | Error::Io(_) | Error::Json(_) => EXIT_CONFIG,
    }
}

fn error_status(code: u8) -> &'static str {
    match code {
        EXIT_SOLVER => "solver_failure",
        EXIT_NEGATIVE => "precondition_failed",
        _ => "config_error",
    }
}

fn io(e: std::io::Error) -> Error {
    Error::Io(e)
}

pub fn run(cli: &Cli) -> u8 {
    let (verb, config) = match &cli.verb {
        Verb::Analyze { config, .. } => ("analyze", config),
        Verb::Synthesize { config, .. } => ("synthesize", config),
        Verb::Simulate { config, .. } => ("simulate", config),
        Verb::Sweep { config, .. } => ("sweep", config),
        Verb::Certify { config, .. } => ("certify", config),
    };
    let loaded = RunConfig::load(config);
    let name = match &loaded {
        Ok(c) if !c.name.is_empty() => c.name.clone(),
        _ => config.file_stem().map_or("run".into(), |s| s.to_string_lossy().into_owned()),
    };
    let mut rd = match RunDir::create(&cli.out, cli.run_dir.as_deref(), verb, config, &name) {
        Ok(rd) => rd,
        Err(e) => {
            eprintln!("error: cannot create run directory: {e}");
            return EXIT_CONFIG;
        }
    };
    let result = loaded.and_then(|cfg| {
        let _ = rd.write_text("config.json", &(cfg.to_json() + "\n"));
        dispatch(&cli.verb, cfg, &mut rd)
    });
    let out = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("error: {e}");
            let code = exit_code(&e);
            Outcome {
                code,
                status: error_status(code),
                summary: json!({ "error": e.to_string() }),
            }
        }
    };
    match rd.finish(out.code, out.status, out.summary) {
        Ok(path) => println!("{}: {} ({})", verb, out.status, path.display()),
        Err(e) => {
            eprintln!("error: cannot write manifest: {e}");
            return out.code.max(EXIT_CONFIG);
        }
    }
    out.code
}

fn apply_grid(cfg: &mut RunConfig, g: &GridFlags) -> Result<(), Error> {
    for plan in [&mut cfg.analysis.grid, &mut cfg.synthesis.grid] {
        if let Some(n) = g.n_tau {
            plan.n_tau = n;
        }
        if let Some(n) = g.n_rho {
            plan.n_rho = n;
        }
        GridPlan::new(plan.n_tau, plan.n_rho)?;
    }
    if g.deg_tau.is_some() || g.deg_rho.is_some() {
        let base = cfg.analysis.degrees.p;
        let d = Degrees::new(g.deg_tau.unwrap_or(base.deg_tau), g.deg_rho.unwrap_or(base.deg_rho));
        cfg.analysis.degrees = CertDegrees::uniform(d);
        let s = &mut cfg.synthesis.degrees;
        s.p = d;
        s.q = d;
        s.r = d;
    }
    if let Some(t) = g.tol {
        if !(t > 0.0) {
            return Err(Error::Config(format!("tolerance {t} must be positive")));
        }
        cfg.analysis.solver.tol = t;
        cfg.synthesis.solver.tol = t;
    }
    Ok(())
}

fn dispatch(verb: &Verb, mut cfg: RunConfig, rd: &mut RunDir) -> Result<Outcome, Error> {
    match verb {
        Verb::Analyze { grid, no_refine, .. } => {
            apply_grid(&mut cfg, grid)?;
            if *no_refine {
                cfg.analysis.refine_check = false;
            }
            analyze(&cfg, rd)
        }
        Verb::Synthesize {
            grid,
            structure,
            gamma,
            no_refine,
            ..
        } => {
            apply_grid(&mut cfg, grid)?;
            if let Some(s) = structure {
                cfg.synthesis.structure = match s {
                    StructureFlag::Free => GainStructure::Free,
                    StructureFlag::TauRhoSplit => GainStructure::TauRhoSplit,
                };
            }
            if let Some(g) = gamma {
                cfg.synthesis.gamma = GammaMode::Fixed { gamma: *g };
            }
            if *no_refine {
                cfg.synthesis.refine_check = false;
            }
            synthesize(&cfg, rd)
        }
        Verb::Simulate {
            gain, seed, horizon, dt, ..
        } => {
            if let Some(sim) = cfg.simulation.as_mut() {
                if let Some(s) = seed {
                    sim.sim.seed = *s;
                }
                if let Some(h) = horizon {
                    sim.sim.horizon = *h;
                }
                if let Some(d) = dt {
                    sim.sim.dt = *d;
                }
            }
            let gs = gain.as_deref().map(load_gain).transpose()?;
            simulate(&cfg, gs.as_ref(), rd)
        }
        Verb::Sweep { grid, .. } => {
            apply_grid(&mut cfg, grid)?;
            sweep(&cfg, rd)
        }
        Verb::Certify {
            from,
            grid,
            seed,
            trajectories,
            ..
        } => {
            apply_grid(&mut cfg, grid)?;
            if let Some(s) = seed {
                cfg.certify.seed = *s;
            }
            if let Some(n) = trajectories {
                cfg.certify.trajectories = *n;
            }
            certify(&cfg, from.as_deref(), rd)
        }
    }
}

fn load_gain(p: &Path) -> Result<GainSchedule, Error> {
    GainSchedule::load(p).map_err(|e| Error::Config(format!("gain file {}: {e}", p.display())))
}

fn residual_json(r: &lpvdt::analysis::ResidualSummary) -> Value {
    json!({
        "worst_on_grid": r.worst_on_grid,
        "worst_on_grid_tag": r.worst_on_grid_tag,
        "worst_off_grid": r.worst_off_grid,
        "refinement_violation": r.refinement_violation,
        "flagged": r.flagged,
    })
}

fn analysis_outcome(rep: &AnalysisReport) -> Outcome {
    match &rep.verdict {
        Verdict::Certified { certificate } => {
            let flagged = certificate.residuals.flagged;
            if flagged {
                eprintln!(
                    "warning: refined-grid violation {:e} exceeds the audit threshold",
                    certificate.residuals.refinement_violation.unwrap_or(f64::NAN)
                );
            }
            Outcome {
                code: EXIT_OK,
                status: if flagged { "certified_flagged" } else { "certified" },
                summary: json!({
                    "residuals": residual_json(&certificate.residuals),
                    "solve_seconds": rep.solve_seconds,
                }),
            }
        }
        Verdict::NotCertified { detail } => Outcome {
            code: EXIT_NEGATIVE,
            status: "not_certified",
            summary: json!({ "detail": detail }),
        },
        Verdict::SolverFailure { detail } => Outcome {
            code: EXIT_SOLVER,
            status: "solver_failure",
            summary: json!({ "detail": detail }),
        },
    }
}

fn analyze(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome, Error> {
    let rep = workflow::analyze(cfg)?;
    rd.write_json("report.json", &rep).map_err(io)?;
    if let Some(c) = rep.verdict.certificate() {
        rd.write_json("certificate.json", c).map_err(io)?;
    }
    Ok(analysis_outcome(&rep))
}

fn synthesis_outcome(rep: &SynthesisReport) -> Outcome {
    match &rep.verdict {
        SynthVerdict::Feasible { gains, certificate } => {
            let flagged = certificate.residuals.flagged;
            if flagged {
                eprintln!("warning: refined-grid violation exceeds the audit threshold");
            }
            Outcome {
                code: EXIT_OK,
                status: if flagged { "feasible_flagged" } else { "feasible" },
                summary: json!({
                    "gamma": gains.gamma,
                    "gamma_sq": rep.gamma_sq,
                    "u_tilde_blocks": gains.u_tilde.term_count(),
                    "residuals": residual_json(&certificate.residuals),
                    "solve_seconds": rep.solve_seconds,
                }),
            }
        }
        SynthVerdict::Infeasible { detail } => Outcome {
            code: EXIT_NEGATIVE,
            status: "infeasible",
            summary: json!({ "detail": detail }),
        },
        SynthVerdict::SolverFailure { detail } => Outcome {
            code: EXIT_SOLVER,
            status: "solver_failure",
            summary: json!({ "detail": detail }),
        },
    }
}

fn synthesize(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome, Error> {
    let rep = workflow::synthesize(cfg)?;
    rd.write_json("report.json", &rep).map_err(io)?;
    if let Some(g) = rep.verdict.gains() {
        rd.write_text("gains.json", &(g.to_json() + "\n")).map_err(io)?;
    }
    Ok(synthesis_outcome(&rep))
}

fn simulate(cfg: &RunConfig, gain: Option<&GainSchedule>, rd: &mut RunDir) -> Result<Outcome, Error> {
    let out = workflow::simulate(cfg, gain)?;
    rd.write_with("trajectory.csv", |w| {
        out.trajectory.write_csv(w).map_err(|e| std::io::Error::other(e.to_string()))
    })
    .map_err(io)?;
    if let Some(d) = &out.disagreement {
        rd.write_with("disagreement.csv", |w| {
            writeln!(w, "t,disagreement")?;
            for (t, v) in out.trajectory.times.iter().zip(d) {
                writeln!(w, "{t:?},{v:?}")?;
            }
            Ok(())
        })
        .map_err(io)?;
    }
    rd.write_json("summary.json", &out.summary).map_err(io)?;
    let s = &out.summary;
    Ok(Outcome {
        code: if s.diverged { EXIT_NEGATIVE } else { EXIT_OK },
        status: if s.diverged { "diverged" } else { "bounded" },
        summary: serde_json::to_value(s)?,
    })
}

fn sweep(cfg: &RunConfig, rd: &mut RunDir) -> Result<Outcome, Error> {
    let rep = workflow::sweep(cfg)?;
    rd.write_with("sweep.csv", |w| {
        writeln!(w, "value,status,solver_failure")?;
        for r in &rep.rows {
            writeln!(w, "{:?},{},{}", r.value, r.status, r.solver_failure)?;
        }
        Ok(())
    })
    .map_err(io)?;
    rd.write_json("report.json", &rep).map_err(io)?;
    let (code, status) = if rep.flagged {
        (EXIT_NEGATIVE, "flagged")
    } else if rep.rows.iter().any(|r| r.solver_failure) {
        (EXIT_OK, "completed_with_solver_failures")
    } else {
        (EXIT_OK, "completed")
    };
    Ok(Outcome {
        code,
        status,
        summary: json!({
            "kind": rep.kind,
            "bound": rep.bisection.as_ref().map(|b| b.value),
            "never_infeasible": rep.bisection.as_ref().map(|b| b.never_infeasible),
            "cells": rep.rows.len(),
            "flagged": rep.flagged,
        }),
    })
}

fn certify(cfg: &RunConfig, from: Option<&Path>, rd: &mut RunDir) -> Result<Outcome, Error> {
    let pf = cfg.plant_file()?;
    let report = match from {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?;
            if let Ok(rep) = serde_json::from_str::<AnalysisReport>(&text) {
                match rep.verdict.certificate() {
                    Some(c) => workflow::audit_certificate(&pf, &Audited::Analysis(c), &cfg.certify)?,
                    None => return Ok(nothing_to_audit(&rep.solver_detail, false)),
                }
            } else if let Ok(rep) = serde_json::from_str::<SynthesisReport>(&text) {
                match &rep.verdict {
                    SynthVerdict::Feasible { gains, certificate } => {
                        workflow::audit_certificate(&pf, &Audited::Synthesis { gains, certificate }, &cfg.certify)?
                    }
                    _ => return Ok(nothing_to_audit(&rep.solver_detail, false)),
                }
            } else {
                return Err(Error::Config(format!("{} is not an analysis or synthesis report", p.display())));
            }
        }
        None => match workflow::certify(cfg)? {
            CertifyOutcome::Audited {
                report,
                analysis,
                synthesis,
            } => {
                if let Some(a) = analysis {
                    rd.write_json("analysis_report.json", &a).map_err(io)?;
                }
                if let Some(s) = synthesis {
                    rd.write_json("synthesis_report.json", &s).map_err(io)?;
                    if let Some(g) = s.verdict.gains() {
                        rd.write_text("gains.json", &(g.to_json() + "\n")).map_err(io)?;
                    }
                }
                report
            }
            CertifyOutcome::Missing { detail, solver_failure } => return Ok(nothing_to_audit(&detail, solver_failure)),
        },
    };
    rd.write_json("report.json", &report).map_err(io)?;
    let worst_flow = report
        .traces
        .iter()
        .map(|t| t.monotonicity.worst_flow_increase)
        .fold(f64::NEG_INFINITY, f64::max);
    let worst_jump = report
        .traces
        .iter()
        .map(|t| t.monotonicity.worst_jump_increase)
        .fold(f64::NEG_INFINITY, f64::max);
    Ok(Outcome {
        code: if report.all_ok { EXIT_OK } else { EXIT_NEGATIVE },
        status: if report.all_ok { "audit_passed" } else { "audit_failed" },
        summary: json!({
            "trajectories": report.traces.len(),
            "worst_flow_increase": worst_flow,
            "worst_jump_increase": worst_jump,
            "rel_tol": report.rel_tol,
        }),
    })
}

fn nothing_to_audit(detail: &str, solver_failure: bool) -> Outcome {
    Outcome {
        code: if solver_failure { EXIT_SOLVER } else { EXIT_NEGATIVE },
        status: if solver_failure { "solver_failure" } else { "no_certificate" },
        summary: json!({ "detail": detail }),
    }
}
