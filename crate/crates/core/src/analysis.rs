//! Stability certification on a grid, plus bisection on the parameter bound
//! and on the dwell time.
//!
//! An infeasible SDP means "not certified": both the gridding and the
//! polynomial ansatz make the test sufficient only.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lmi::{self, CertAnsatz, CertDegrees, GridPlan, DEFAULT_MARGIN};
use crate::model::{DelaySpec, DwellSpec, LpvDelaySystem, ParamBox, PlantEval};
use crate::poly::MatrixPoly;
use crate::sdp::{self, SdpProblem, SolveStatus, SolverConfig, VerifyReport};

/// Refined-grid violations above this are flagged in reports.
pub const REFINEMENT_FLAG: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalysisOptions {
    pub grid: GridPlan,
    pub degrees: CertDegrees,
    pub margin: f64,
    pub solver: SolverConfig,
    /// Re-check the certificate on the 2× refined grid.
    pub refine_check: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            grid: GridPlan { n_tau: 10, n_rho: 10 },
            degrees: CertDegrees::default(),
            margin: DEFAULT_MARGIN,
            solver: SolverConfig::default(),
            refine_check: true,
        }
    }
}

/// Worst residuals of an accepted solution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualSummary {
    pub constraints: usize,
    /// Smallest `λ_min` of a margin-shifted cone matrix on the solve grid.
    pub worst_on_grid: f64,
    pub worst_on_grid_tag: String,
    /// Same on the refined grid (margin 0), if checked.
    pub worst_off_grid: Option<f64>,
    pub worst_off_grid_tag: Option<String>,
    /// `max(0, −worst_off_grid)`
    pub refinement_violation: Option<f64>,
    /// Refined-grid violation above [`REFINEMENT_FLAG`].
    pub flagged: bool,
}

impl ResidualSummary {
    pub fn from_report(report: &VerifyReport) -> Self {
        let pick = |off: bool| {
            report
                .entries
                .iter()
                .filter(|e| e.off_grid == off)
                .min_by(|a, b| a.min_eig.total_cmp(&b.min_eig))
        };
        let on = pick(false);
        let off = pick(true);
        let violation = off.map(|e| (-e.min_eig).max(0.0));
        Self {
            constraints: report.entries.len() - report.off_grid_count(),
            worst_on_grid: on.map_or(f64::INFINITY, |e| e.min_eig),
            worst_on_grid_tag: on.map_or_else(String::new, |e| e.tag.clone()),
            worst_off_grid: off.map(|e| e.min_eig),
            worst_off_grid_tag: off.map(|e| e.tag.clone()),
            refinement_violation: violation,
            flagged: violation.is_some_and(|v| v > REFINEMENT_FLAG),
        }
    }
}

/// A solved Lyapunov–Krasovskii certificate and its validity domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub p: MatrixPoly,
    pub q: MatrixPoly,
    pub r: MatrixPoly,
    pub delay: DelaySpec,
    pub dwell: DwellSpec,
    pub params: ParamBox,
    pub grid: GridPlan,
    pub degrees: CertDegrees,
    pub residuals: ResidualSummary,
}

/// Matrices of a quadratic Lyapunov–Krasovskii functional at `(τ, ρ)`.
pub trait LkfMatrices: Sync {
    fn delay(&self) -> &DelaySpec;

    fn dwell(&self) -> &DwellSpec;

    /// `(P, Q, R)` at `(τ, ρ)`, with `τ` already saturated.
    fn pqr(&self, tau: f64, rho: &[f64]) -> Result<[DMatrix<f64>; 3]>;
}

impl LkfMatrices for Certificate {
    fn delay(&self) -> &DelaySpec {
        &self.delay
    }

    fn dwell(&self) -> &DwellSpec {
        &self.dwell
    }

    fn pqr(&self, tau: f64, rho: &[f64]) -> Result<[DMatrix<f64>; 3]> {
        Ok([self.p.eval(tau, rho)?, self.q.eval(tau, rho)?, self.r.eval(tau, rho)?])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Verdict {
    Certified { certificate: Box<Certificate> },
    NotCertified { detail: String },
    SolverFailure { detail: String },
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::Certified { .. })
    }

    pub fn certificate(&self) -> Option<&Certificate> {
        match self {
            Verdict::Certified { certificate } => Some(certificate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub verdict: Verdict,
    pub variables: usize,
    pub constraints: usize,
    pub solver_detail: String,
    pub iterations: u32,
    pub assemble_seconds: f64,
    pub solve_seconds: f64,
    pub verify_seconds: f64,
}

/// Re-evaluate a solved ansatz on the refined grid and merge the residuals.
#[allow(clippy::too_many_arguments)]
fn audit(
    plant: &dyn PlantEval,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    problem: &SdpProblem,
    cert: &CertAnsatz,
    plan: &GridPlan,
    x: &[f64],
    refine: bool,
) -> Result<VerifyReport> {
    if !refine {
        return Ok(sdp::verify(problem, x, None));
    }
    let fine = lmi::build_grid(&plan.refined(), dwell, plant.params())?;
    let finer = lmi::analysis_constraints(plant, delay, dwell, &fine, cert, 0.0)?;
    Ok(sdp::verify(problem, x, Some(&finer)))
}

/// Grid-relaxed stability test. Never returns "unstable": an infeasible SDP is
/// reported as [`Verdict::NotCertified`].
pub fn check_stability(plant: &dyn PlantEval, delay: &DelaySpec, dwell: &DwellSpec, opts: &AnalysisOptions) -> Result<AnalysisReport> {
    let t0 = Instant::now();
    let ap = lmi::assemble_analysis(plant, delay, dwell, &opts.grid, &opts.degrees, opts.margin)?;
    let t1 = Instant::now();
    let sol = opts.solver.solve(&ap.problem)?;
    let t2 = Instant::now();
    let verdict = match sol.status {
        SolveStatus::Infeasible => Verdict::NotCertified {
            detail: format!("SDP infeasible ({})", sol.detail),
        },
        SolveStatus::NumericalFailure => Verdict::SolverFailure { detail: sol.detail.clone() },
        SolveStatus::Optimal => {
            let x = sol.assignment.as_deref().expect("optimal solution carries an assignment");
            let report = audit(plant, delay, dwell, &ap.problem, &ap.cert, &opts.grid, x, opts.refine_check)?;
            let residuals = ResidualSummary::from_report(&report);
            if residuals.flagged {
                log::warn!(
                    "certificate violates the refined grid by {:e} at '{}'",
                    residuals.refinement_violation.unwrap_or(0.0),
                    residuals.worst_off_grid_tag.as_deref().unwrap_or("")
                );
            }
            Verdict::Certified {
                certificate: Box::new(Certificate {
                    p: ap.cert.p.realize(x),
                    q: ap.cert.q.realize(x),
                    r: ap.cert.r.realize(x),
                    delay: *delay,
                    dwell: *dwell,
                    params: plant.params().clone(),
                    grid: opts.grid,
                    degrees: opts.degrees,
                    residuals,
                }),
            }
        }
    };
    let t3 = Instant::now();
    Ok(AnalysisReport {
        verdict,
        variables: ap.problem.variables.len(),
        constraints: ap.problem.constraints.len(),
        solver_detail: sol.detail,
        iterations: sol.iterations,
        assemble_seconds: (t1 - t0).as_secs_f64(),
        solve_seconds: (t2 - t1).as_secs_f64(),
        verify_seconds: (t3 - t2).as_secs_f64(),
    })
}

/// One probe of a bisection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionStep {
    pub value: f64,
    pub certified: bool,
    pub solver_failure: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BisectionResult {
    /// Largest certified bound (parameter search) or smallest certified dwell
    /// time (dwell search).
    pub value: f64,
    /// The far end of the search interval was itself certified.
    pub never_infeasible: bool,
    pub steps: Vec<BisectionStep>,
    /// Probes where the solver failed; counted as not certified.
    pub solver_failures: usize,
}

fn probe(f: &dyn Fn(f64) -> Result<Verdict>, value: f64, steps: &mut Vec<BisectionStep>) -> Result<bool> {
    let v = f(value)?;
    let failure = matches!(v, Verdict::SolverFailure { .. });
    if failure {
        log::warn!("solver failure at {value}; treated as not certified");
    }
    let ok = v.is_certified();
    log::info!("bisection probe {value:.6e}: {}", if ok { "certified" } else { "not certified" });
    steps.push(BisectionStep {
        value,
        certified: ok,
        solver_failure: failure,
    });
    Ok(ok)
}

fn finish(value: f64, never_infeasible: bool, steps: Vec<BisectionStep>) -> BisectionResult {
    let solver_failures = steps.iter().filter(|s| s.solver_failure).count();
    BisectionResult {
        value,
        never_infeasible,
        steps,
        solver_failures,
    }
}

/// Largest `ρ̄ ∈ [lo, hi]` (to `tol`) for which `family(ρ̄)` is certified.
/// Requires a certificate at `lo`.
pub fn max_param_bound(
    family: &(dyn Fn(f64) -> Result<LpvDelaySystem> + Sync),
    delay: &DelaySpec,
    dwell: &DwellSpec,
    lo: f64,
    hi: f64,
    tol: f64,
    opts: &AnalysisOptions,
) -> Result<BisectionResult> {
    if !(lo < hi) || !(tol > 0.0) {
        return Err(Error::Config(format!("bad search interval [{lo}, {hi}] or tolerance {tol}")));
    }
    let check = |v: f64| -> Result<Verdict> { Ok(check_stability(&family(v)?, delay, dwell, opts)?.verdict) };
    let mut steps = Vec::new();
    if !probe(&check, lo, &mut steps)? {
        return Err(Error::Precondition(format!("lower end {lo} of the search is not certified")));
    }
    if probe(&check, hi, &mut steps)? {
        return Ok(finish(hi, true, steps));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > tol {
        let mid = 0.5 * (a + b);
        if probe(&check, mid, &mut steps)? {
            a = mid;
        } else {
            b = mid;
        }
    }
    Ok(finish(a, false, steps))
}

/// Smallest dwell time in `[lo, hi]` certified for `sys` with weight `kappa`.
/// Bisection is geometric when `lo > 0` and stops once `hi − lo ≤ rel_tol·hi`.
/// Requires a certificate at `hi`.
pub fn min_dwell_time(
    plant: &dyn PlantEval,
    delay: &DelaySpec,
    kappa: f64,
    lo: f64,
    hi: f64,
    rel_tol: f64,
    opts: &AnalysisOptions,
) -> Result<BisectionResult> {
    if !(lo < hi) || !(lo >= 0.0) || !(rel_tol > 0.0) {
        return Err(Error::Config(format!("bad search interval [{lo}, {hi}] or tolerance {rel_tol}")));
    }
    let check = |td: f64| -> Result<Verdict> { Ok(check_stability(plant, delay, &DwellSpec::new(td, kappa)?, opts)?.verdict) };
    let mut steps = Vec::new();
    if !probe(&check, hi, &mut steps)? {
        return Err(Error::Precondition(format!("upper end {hi} of the dwell search is not certified")));
    }
    if lo > 0.0 && probe(&check, lo, &mut steps)? {
        return Ok(finish(lo, true, steps));
    }
    let (mut a, mut b) = (lo, hi);
    while b - a > rel_tol * b {
        let mid = if a > 0.0 { (a * b).sqrt() } else { 0.5 * (a + b) };
        if probe(&check, mid, &mut steps)? {
            b = mid;
        } else {
            a = mid;
        }
    }
    Ok(finish(b, false, steps))
}

/// Per-dwell-time verdicts and the non-monotone pairs.
pub type DwellProbe = (Vec<(f64, bool)>, Vec<(f64, f64)>);

/// Certified / not certified at each dwell time, plus the pairs
/// `(T_D, T_D′)`, `T_D < T_D′`, where `T_D` is certified but `T_D′` is not.
/// Such pairs are grid artifacts.
pub fn dwell_monotonicity_probe(
    plant: &dyn PlantEval,
    delay: &DelaySpec,
    kappa: f64,
    dwell_times: &[f64],
    opts: &AnalysisOptions,
) -> Result<DwellProbe> {
    let mut sorted = dwell_times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut status = Vec::with_capacity(sorted.len());
    for td in sorted {
        let v = check_stability(plant, delay, &DwellSpec::new(td, kappa)?, opts)?.verdict;
        status.push((td, v.is_certified()));
    }
    let mut violations = Vec::new();
    for (i, (a, ok_a)) in status.iter().enumerate() {
        for (b, ok_b) in &status[i + 1..] {
            if *ok_a && !*ok_b {
                violations.push((*a, *b));
            }
        }
    }
    Ok((status, violations))
}
