//! Clock-dependent gain-scheduled state feedback with an L2-gain bound.
//!
//! The controller is `u(t) = K(min{t − t_k, T_D}, ρ(t_k)) x(t)` with
//! `K(τ, ρ) = Ũ(τ, ρ) X̃(ρ)⁻¹`.
//!
//! Direction of the change of variables: after the slack variable `X` is
//! introduced, the congruence with `X̃ = X⁻¹` in every state slot maps the
//! closed-loop term `(A + BK)` to `(A + BK)X̃ = AX̃ + B(KX̃)`. The solved block
//! is `AX̃ + BŨ`, so `Ũ = KX̃` and `K = ŨX̃⁻¹`.

use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::analysis::{self, AnalysisOptions, AnalysisReport, LkfMatrices, ResidualSummary};
use crate::error::{Error, Result};
use crate::lmi::{self, GainStructure, GammaSq, GridPlan, SynthDegrees, DEFAULT_MARGIN};
use crate::model::{DelaySpec, DwellSpec, LpvDelaySystem, ParamBox, PlantEval, SystemMatrices};
use crate::poly::MatrixPoly;
use crate::sdp::{self, SolveStatus, SolverConfig};

/// Default cap on `cond(X̃)` at grid points.
pub const DEFAULT_MAX_CONDITION: f64 = 1e10;

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum GammaMode {
    #[default]
    Minimize,
    Fixed {
        gamma: f64,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthesisOptions {
    pub grid: GridPlan,
    pub degrees: SynthDegrees,
    pub structure: GainStructure,
    pub gamma: GammaMode,
    pub margin: f64,
    pub solver: SolverConfig,
    pub refine_check: bool,
    pub max_condition: f64,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            grid: GridPlan { n_tau: 5, n_rho: 5 },
            degrees: SynthDegrees::default(),
            structure: GainStructure::Free,
            gamma: GammaMode::Minimize,
            margin: DEFAULT_MARGIN,
            solver: SolverConfig::default(),
            refine_check: true,
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }
}

fn default_max_condition() -> f64 {
    DEFAULT_MAX_CONDITION
}

/// `K(τ, ρ) = Ũ(τ, ρ) X̃(ρ)⁻¹`, with `τ` saturated at `T_D`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GainSchedule {
    pub u_tilde: MatrixPoly,
    pub x_tilde: MatrixPoly,
    pub t_dwell: f64,
    /// Certified L2 bound; absent for schedules not produced by synthesis.
    pub gamma: Option<f64>,
    pub params: ParamBox,
    #[serde(default)]
    pub structure: GainStructure,
    #[serde(default = "default_max_condition")]
    pub max_condition: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl GainSchedule {
    /// Zero feedback, as a schedule with `Ũ = 0`, `X̃ = I`.
    pub fn zero(q: usize, n: usize, params: ParamBox, t_dwell: f64) -> Self {
        let s = params.dim();
        Self {
            u_tilde: MatrixPoly::zero(q, n, s, false),
            x_tilde: MatrixPoly::constant(DMatrix::identity(n, n), s),
            t_dwell,
            gamma: None,
            params,
            structure: GainStructure::Free,
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.x_tilde.rows();
        if self.x_tilde.cols() != n || self.u_tilde.cols() != n {
            return Err(Error::Dimension(format!(
                "Ũ is {}x{}, X̃ is {}x{}",
                self.u_tilde.rows(),
                self.u_tilde.cols(),
                n,
                self.x_tilde.cols()
            )));
        }
        if !self.x_tilde.is_tau_independent() {
            return Err(Error::Domain("X̃ must not depend on the clock".into()));
        }
        let s = self.params.dim();
        if self.u_tilde.params() != s || self.x_tilde.params() != s {
            return Err(Error::Dimension("gain schedule parameter count does not match its box".into()));
        }
        if !(self.t_dwell > 0.0) {
            return Err(Error::Domain(format!("dwell time {} must be positive", self.t_dwell)));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0 && g.is_finite()) {
                return Err(Error::Domain(format!("gamma = {g} must be positive")));
            }
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.x_tilde.rows()
    }

    pub fn q(&self) -> usize {
        self.u_tilde.rows()
    }

    pub fn gain(&self, tau: f64, rho: &[f64]) -> Result<DMatrix<f64>> {
        reconstruct_gain(self, tau, rho)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let g: Self = serde_json::from_str(text)?;
        g.validate()?;
        Ok(g)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("gain serialization cannot fail")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

/// `K = Ũ(min{τ, T_D}, ρ) X̃(ρ)⁻¹`. Errors when `X̃(ρ)` is singular or worse
/// conditioned than the schedule's cap.
pub fn reconstruct_gain(gs: &GainSchedule, tau: f64, rho: &[f64]) -> Result<DMatrix<f64>> {
    if !(tau >= 0.0) {
        return Err(Error::Domain(format!("clock value {tau} is negative")));
    }
    let tau = tau.min(gs.t_dwell);
    let u = gs.u_tilde.eval(tau, rho)?;
    let x = gs.x_tilde.eval(tau, rho)?;
    let cond = condition_number(&x);
    if !(cond <= gs.max_condition) {
        return Err(Error::Singular {
            rho: rho.to_vec(),
            condition: cond,
        });
    }
    // K X̃ = Ũ  ⇔  X̃ᵀ Kᵀ = Ũᵀ
    let kt = x.transpose().lu().solve(&u.transpose()).ok_or(Error::Singular {
        rho: rho.to_vec(),
        condition: cond,
    })?;
    Ok(kt.transpose())
}

/// The plant in feedback with a gain schedule; clock-dependent through `K`.
pub struct ClosedLoop<'a> {
    pub sys: &'a LpvDelaySystem,
    pub gains: &'a GainSchedule,
}

impl<'a> ClosedLoop<'a> {
    pub fn new(sys: &'a LpvDelaySystem, gains: &'a GainSchedule) -> Result<Self> {
        gains.validate()?;
        if gains.n() != sys.n() || gains.q() != sys.q() {
            return Err(Error::Dimension(format!(
                "gain is {}x{}, plant needs {}x{}",
                gains.q(),
                gains.n(),
                sys.q(),
                sys.n()
            )));
        }
        if gains.params != *sys.params() {
            return Err(Error::Domain("gain schedule box differs from the plant box".into()));
        }
        Ok(Self { sys, gains })
    }
}

impl PlantEval for ClosedLoop<'_> {
    fn n(&self) -> usize {
        self.sys.n()
    }

    fn params(&self) -> &ParamBox {
        self.sys.params()
    }

    fn matrices(&self, tau: f64, rho: &[f64]) -> Result<SystemMatrices> {
        let mut m = self.sys.eval(rho)?;
        let k = self.gains.gain(tau, rho)?;
        m.a += &m.b * &k;
        m.c += &m.d * &k;
        Ok(m)
    }
}

/// Analysis-mode audit of the closed loop `A + BK(τ, ρ)`.
pub fn certify_closed_loop(
    sys: &LpvDelaySystem,
    gains: &GainSchedule,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    opts: &AnalysisOptions,
) -> Result<AnalysisReport> {
    let cl = ClosedLoop::new(sys, gains)?;
    analysis::check_stability(&cl, delay, dwell, opts)
}

/// Transformed certificate `(P̃, Q̃, R̃, X̃)`; the functional's matrices are
/// `X̃⁻ᵀ(·)X̃⁻¹`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisCertificate {
    pub p_tilde: MatrixPoly,
    pub q_tilde: MatrixPoly,
    pub r_tilde: MatrixPoly,
    pub x_tilde: MatrixPoly,
    pub delay: DelaySpec,
    pub dwell: DwellSpec,
    pub params: ParamBox,
    pub residuals: ResidualSummary,
}

impl LkfMatrices for SynthesisCertificate {
    fn delay(&self) -> &DelaySpec {
        &self.delay
    }

    fn dwell(&self) -> &DwellSpec {
        &self.dwell
    }

    fn pqr(&self, tau: f64, rho: &[f64]) -> Result<[DMatrix<f64>; 3]> {
        let x = self.x_tilde.eval(tau, rho)?;
        let xinv = x.clone().try_inverse().ok_or(Error::Singular {
            rho: rho.to_vec(),
            condition: condition_number(&x),
        })?;
        let t = |m: DMatrix<f64>| {
            let v = xinv.transpose() * m * &xinv;
            (&v + v.transpose()) * 0.5
        };
        Ok([
            t(self.p_tilde.eval(tau, rho)?),
            t(self.q_tilde.eval(tau, rho)?),
            t(self.r_tilde.eval(tau, rho)?),
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum SynthVerdict {
    Feasible {
        gains: Box<GainSchedule>,
        certificate: Box<SynthesisCertificate>,
    },
    Infeasible {
        detail: String,
    },
    SolverFailure {
        detail: String,
    },
}

impl SynthVerdict {
    pub fn gains(&self) -> Option<&GainSchedule> {
        match self {
            SynthVerdict::Feasible { gains, .. } => Some(gains),
            _ => None,
        }
    }

    pub fn certificate(&self) -> Option<&SynthesisCertificate> {
        match self {
            SynthVerdict::Feasible { certificate, .. } => Some(certificate),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub verdict: SynthVerdict,
    /// Optimal (or fixed) `γ²`.
    pub gamma_sq: Option<f64>,
    pub variables: usize,
    pub constraints: usize,
    pub solver_detail: String,
    pub iterations: u32,
    pub assemble_seconds: f64,
    pub solve_seconds: f64,
    pub verify_seconds: f64,
}

/// Solve the gridded synthesis LMIs; on success reconstructs the schedule and
/// checks `X̃` conditioning at every parameter grid point.
pub fn synthesize(sys: &LpvDelaySystem, delay: &DelaySpec, dwell: &DwellSpec, opts: &SynthesisOptions) -> Result<SynthesisReport> {
    let fixed = match opts.gamma {
        GammaMode::Minimize => None,
        GammaMode::Fixed { gamma } => {
            if !(gamma > 0.0 && gamma.is_finite()) {
                return Err(Error::Config(format!("fixed gamma {gamma} must be positive")));
            }
            Some(gamma * gamma)
        }
    };
    let t0 = Instant::now();
    let sp = lmi::assemble_synthesis(sys, delay, dwell, &opts.grid, &opts.degrees, opts.structure, fixed, opts.margin)?;
    let t1 = Instant::now();
    let sol = opts.solver.solve(&sp.problem)?;
    let t2 = Instant::now();
    let mut gamma_sq = None;
    let verdict = match sol.status {
        SolveStatus::Infeasible => SynthVerdict::Infeasible {
            detail: format!("SDP infeasible ({})", sol.detail),
        },
        SolveStatus::NumericalFailure => SynthVerdict::SolverFailure { detail: sol.detail.clone() },
        SolveStatus::Optimal => {
            let x = sol.assignment.as_deref().expect("optimal solution carries an assignment");
            let g2 = match sp.ans.gamma_sq {
                GammaSq::Fixed(g) => g,
                GammaSq::Var(v) => x[v.0],
            };
            gamma_sq = Some(g2);
            let report = if opts.refine_check {
                let fine = lmi::build_grid(&opts.grid.refined(), dwell, sys.params())?;
                let finer = lmi::synthesis_constraints(sys, delay, dwell, &fine, &sp.ans, 0.0)?;
                sdp::verify(&sp.problem, x, Some(&finer))
            } else {
                sdp::verify(&sp.problem, x, None)
            };
            let residuals = ResidualSummary::from_report(&report);
            if residuals.flagged {
                log::warn!(
                    "synthesis certificate violates the refined grid by {:e} at '{}'",
                    residuals.refinement_violation.unwrap_or(0.0),
                    residuals.worst_off_grid_tag.as_deref().unwrap_or("")
                );
            }
            let gains = GainSchedule {
                u_tilde: sp.ans.u.realize(x),
                x_tilde: sp.ans.x.realize(x),
                t_dwell: dwell.t_dwell(),
                gamma: Some(g2.max(0.0).sqrt()),
                params: sys.params().clone(),
                structure: opts.structure,
                max_condition: opts.max_condition,
            };
            for rho in &sp.grid.rhos {
                reconstruct_gain(&gains, 0.0, rho)?;
            }
            let certificate = SynthesisCertificate {
                p_tilde: sp.ans.cert.p.realize(x),
                q_tilde: sp.ans.cert.q.realize(x),
                r_tilde: sp.ans.cert.r.realize(x),
                x_tilde: gains.x_tilde.clone(),
                delay: *delay,
                dwell: *dwell,
                params: sys.params().clone(),
                residuals,
            };
            SynthVerdict::Feasible {
                gains: Box::new(gains),
                certificate: Box::new(certificate),
            }
        }
    };
    let t3 = Instant::now();
    Ok(SynthesisReport {
        verdict,
        gamma_sq,
        variables: sp.problem.variables.len(),
        constraints: sp.problem.constraints.len(),
        solver_detail: sol.detail,
        iterations: sol.iterations,
        assemble_seconds: (t1 - t0).as_secs_f64(),
        solve_seconds: (t2 - t1).as_secs_f64(),
        verify_seconds: (t3 - t2).as_secs_f64(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::model::SystemParts;
    use nalgebra::dmatrix;
    use proptest::prelude::*;

    fn schedule(u: MatrixPoly, x: MatrixPoly, t_dwell: f64) -> GainSchedule {
        GainSchedule {
            u_tilde: u,
            x_tilde: x,
            t_dwell,
            gamma: Some(1.0),
            params: ParamBox::interval(0.0, 1.0).unwrap(),
            structure: GainStructure::Free,
            max_condition: DEFAULT_MAX_CONDITION,
        }
    }

    #[test]
    fn identity_x_gives_u_directly() {
        let u = MatrixPoly::from_terms(1, 2, 1, false, [(vec![0, 0], dmatrix![1.0, 2.0]), (vec![1, 0], dmatrix![3.0, -1.0])]).unwrap();
        let gs = schedule(u.clone(), MatrixPoly::constant(DMatrix::identity(2, 2), 1), 0.5);
        let k = reconstruct_gain(&gs, 0.25, &[0.3]).unwrap();
        assert_eq!(k, u.eval(0.25, &[0.3]).unwrap());
    }

    #[test]
    fn clock_saturates_at_dwell() {
        let u = MatrixPoly::from_terms(1, 2, 1, false, [(vec![1, 0], dmatrix![3.0, -1.0])]).unwrap();
        let gs = schedule(u, MatrixPoly::constant(dmatrix![2.0, 1.0; 0.0, 1.0], 1), 0.5);
        assert_eq!(reconstruct_gain(&gs, 1.0, &[0.3]).unwrap(), reconstruct_gain(&gs, 0.5, &[0.3]).unwrap());
        assert!(reconstruct_gain(&gs, -0.1, &[0.3]).is_err());
    }

    #[test]
    fn singular_x_is_reported() {
        let u = MatrixPoly::constant(dmatrix![1.0, 1.0], 1);
        let gs = schedule(u, MatrixPoly::constant(dmatrix![1.0, 1.0; 1.0, 1.0], 1), 0.5);
        assert!(matches!(reconstruct_gain(&gs, 0.0, &[0.0]), Err(Error::Singular { .. })));
    }

    proptest! {
        #[test]
        fn gain_times_x_reproduces_u(
            u in prop::array::uniform4(-5.0f64..5.0),
            x in prop::array::uniform4(-2.0f64..2.0),
            tau in 0.0f64..1.0,
        ) {
            let xm = dmatrix![x[0] + 3.0, x[1]; x[2], x[3] + 3.0];
            let um = dmatrix![u[0], u[1]; u[2], u[3]];
            let gs = schedule(MatrixPoly::constant(um.clone(), 1), MatrixPoly::constant(xm.clone(), 1), 1.0);
            let k = reconstruct_gain(&gs, tau, &[0.5]).unwrap();
            prop_assert!((k * xm - um).amax() < 1e-12);
        }
    }

    #[test]
    fn split_structure_stays_affine_after_reconstruction() {
        let ua = dmatrix![1.0, -2.0];
        let ub = dmatrix![0.5, 0.25];
        let u = MatrixPoly::from_terms(1, 2, 1, false, [(vec![1, 0], ua.clone()), (vec![0, 1], ub.clone())]).unwrap();
        let x = dmatrix![2.0, 0.5; -0.3, 1.5];
        let gs = schedule(u, MatrixPoly::constant(x.clone(), 1), 1.0);
        for (tau, rho) in [(0.0, 0.0), (0.3, 0.7), (1.0, 1.0), (0.5, 0.2)] {
            let kx = reconstruct_gain(&gs, tau, &[rho]).unwrap() * &x;
            let expect = &ua * tau + &ub * rho;
            assert!((kx - expect).amax() < 1e-14);
        }
    }

    #[test]
    fn zero_gain_closed_loop_is_the_plant() {
        let sys = examples::example1_system(0.5).unwrap();
        let gs = GainSchedule::zero(1, 2, sys.params().clone(), 1e-4);
        let cl = ClosedLoop::new(&sys, &gs).unwrap();
        assert_eq!(cl.matrices(0.0, &[0.2]).unwrap(), sys.eval(&[0.2]).unwrap());
    }

    #[test]
    fn zero_gain_on_unstable_plant_is_not_certified() {
        let pf = examples::example2_plant().unwrap();
        let gs = GainSchedule::zero(1, 2, pf.system.params().clone(), pf.dwell.t_dwell());
        let opts = AnalysisOptions {
            grid: GridPlan::new(3, 3).unwrap(),
            ..AnalysisOptions::default()
        };
        let rep = certify_closed_loop(&pf.system, &gs, &pf.delay, &pf.dwell, &opts).unwrap();
        assert!(!rep.verdict.is_certified());
    }

    #[test]
    fn unactuated_unstable_plant_is_infeasible() {
        let m = SystemMatrices {
            a: dmatrix![1.0, 0.0; 0.0, -1.0],
            ad: DMatrix::zeros(2, 2),
            b: DMatrix::zeros(2, 1),
            c: dmatrix![1.0, 0.0],
            cd: DMatrix::zeros(1, 2),
            d: DMatrix::zeros(1, 1),
            e: dmatrix![1.0; 0.0],
            f: DMatrix::zeros(1, 1),
        };
        let sys = LpvDelaySystem::new(SystemParts::constant(m, ParamBox::interval(0.0, 1.0).unwrap())).unwrap();
        let delay = DelaySpec::new(0.1, 0.5).unwrap();
        let dwell = DwellSpec::new(0.1, 0.01).unwrap();
        let opts = SynthesisOptions {
            grid: GridPlan::new(2, 2).unwrap(),
            ..SynthesisOptions::default()
        };
        let rep = synthesize(&sys, &delay, &dwell, &opts).unwrap();
        assert!(matches!(rep.verdict, SynthVerdict::Infeasible { .. }), "{:?}", rep.verdict);
    }

    #[test]
    fn gain_schedule_json_round_trip() {
        let u = MatrixPoly::from_terms(1, 2, 1, false, [(vec![1, 1], dmatrix![0.1, 0.2])]).unwrap();
        let gs = schedule(u, MatrixPoly::constant(DMatrix::identity(2, 2), 1), 0.01);
        let back = GainSchedule::from_json(&gs.to_json()).unwrap();
        assert_eq!(back, gs);
    }

    #[test]
    fn synthesis_certificate_undoes_the_congruence() {
        let x = dmatrix![2.0, 1.0; 0.0, 1.0];
        let p = dmatrix![3.0, 1.0; 1.0, 2.0];
        let xp = x.transpose() * &p * &x;
        let xp = (&xp + xp.transpose()) * 0.5;
        let c = |m: DMatrix<f64>| MatrixPoly::from_terms(2, 2, 1, true, [(vec![0, 0], m)]).unwrap();
        let sc = SynthesisCertificate {
            p_tilde: c(xp.clone()),
            q_tilde: c(xp.clone()),
            r_tilde: c(xp),
            x_tilde: MatrixPoly::constant(x, 1),
            delay: DelaySpec::new(0.1, 0.1).unwrap(),
            dwell: DwellSpec::new(0.1, 0.1).unwrap(),
            params: ParamBox::interval(0.0, 1.0).unwrap(),
            residuals: ResidualSummary {
                constraints: 0,
                worst_on_grid: 0.0,
                worst_on_grid_tag: String::new(),
                worst_off_grid: None,
                worst_off_grid_tag: None,
                refinement_violation: None,
                flagged: false,
            },
        };
        let [pp, _, _] = sc.pqr(0.0, &[0.0]).unwrap();
        assert!((pp - p).amax() < 1e-12);
    }
}
