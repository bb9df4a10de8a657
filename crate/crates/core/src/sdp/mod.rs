//! Backend-neutral semidefinite programs.
//!
//! A problem is a list of scalar unknowns `x`, a linear objective and a list
//! of matrix constraints `F(x) = F₀ + Σ x_v F_v` with a sense:
//!
//! * [`Sense::NegativeDefinite`]: `F(x) + margin·I ⪯ 0`
//! * [`Sense::PositiveSemidefinite`]: `F(x) − margin·I ⪰ 0`
//!
//! Both reduce to the canonical cone membership `G(x) ⪰ 0` with
//! `G = −F − margin·I` or `G = F − margin·I`. [`verify`] reports `λ_min(G)`
//! for every constraint.
//!
//! Symmetric matrices handed to a conic backend are packed with [`svec`]:
//! the upper triangle in column-major order, off-diagonal entries scaled by
//! `√2`, so that `⟨svec(A), svec(B)⟩ = tr(AB)`.

mod clarabel_backend;
mod expr;
pub mod format;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

pub use clarabel_backend::ClarabelBackend;
pub use expr::{AffineMatrix, VarId};

use crate::error::{Error, Result};

pub const DEFAULT_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sense {
    NegativeDefinite,
    PositiveSemidefinite,
}

/// `(row, col, value)` with `row ≥ col`.
pub type SymEntry = (usize, usize, f64);

/// A symmetric affine matrix constraint in lower-triangular triplet form.
#[derive(Clone, Debug, PartialEq)]
pub struct LmiConstraint {
    pub dim: usize,
    pub constant: Vec<SymEntry>,
    pub coefficients: Vec<(VarId, Vec<SymEntry>)>,
    pub sense: Sense,
    pub margin: f64,
    pub tag: String,
}

fn lower_entries(m: &DMatrix<f64>) -> Vec<SymEntry> {
    let mut out = Vec::new();
    for j in 0..m.ncols() {
        for i in j..m.nrows() {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            if v != 0.0 {
                out.push((i, j, v));
            }
        }
    }
    out
}

fn fill_symmetric(out: &mut DMatrix<f64>, entries: &[SymEntry], scale: f64) {
    for &(i, j, v) in entries {
        out[(i, j)] += scale * v;
        if i != j {
            out[(j, i)] += scale * v;
        }
    }
}

impl LmiConstraint {
    /// Convert a square affine expression. The symmetric part is kept.
    pub fn from_affine(expr: &AffineMatrix, sense: Sense, margin: f64, tag: impl Into<String>) -> Self {
        assert_eq!(expr.nrows(), expr.ncols(), "LMI expression must be square");
        let coefficients = expr
            .terms()
            .map(|(v, m)| (v, lower_entries(m)))
            .filter(|(_, e)| !e.is_empty())
            .collect();
        Self {
            dim: expr.nrows(),
            constant: lower_entries(expr.constant_part()),
            coefficients,
            sense,
            margin,
            tag: tag.into(),
        }
    }

    /// `F(x)` as a dense symmetric matrix (without the margin shift).
    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        fill_symmetric(&mut out, &self.constant, 1.0);
        for (v, e) in &self.coefficients {
            fill_symmetric(&mut out, e, x[v.0]);
        }
        out
    }

    /// Canonical cone matrix `G(x)`, which must be PSD.
    pub fn canonical(&self, x: &[f64]) -> DMatrix<f64> {
        let f = self.eval(x);
        let shift = DMatrix::identity(self.dim, self.dim) * self.margin;
        match self.sense {
            Sense::NegativeDefinite => -f - shift,
            Sense::PositiveSemidefinite => f - shift,
        }
    }

    /// `λ_min(G(x))`.
    pub fn min_eigenvalue(&self, x: &[f64]) -> f64 {
        min_eigenvalue(&self.canonical(x))
    }

    pub fn max_var(&self) -> Option<VarId> {
        self.coefficients.iter().map(|(v, _)| *v).max()
    }
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone())
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Position of `(row, col)` (either triangle) inside [`svec`] output.
pub fn svec_index(row: usize, col: usize) -> usize {
    let (r, c) = if row <= col { (row, col) } else { (col, row) };
    c * (c + 1) / 2 + r
}

/// Scaled upper-triangular column-major vectorization.
pub fn svec(m: &DMatrix<f64>) -> Vec<f64> {
    let n = m.nrows();
    let mut out = vec![0.0; n * (n + 1) / 2];
    for c in 0..n {
        for r in 0..=c {
            let v = if r == c {
                m[(r, c)]
            } else {
                std::f64::consts::SQRT_2 * 0.5 * (m[(r, c)] + m[(c, r)])
            };
            out[svec_index(r, c)] = v;
        }
    }
    out
}

/// Incrementally builds the unknown list of a problem.
#[derive(Clone, Debug, Default)]
pub struct ProblemBuilder {
    names: Vec<String>,
}

impl ProblemBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>) -> VarId {
        self.names.push(name.into());
        VarId(self.names.len() - 1)
    }

    pub fn var_count(&self) -> usize {
        self.names.len()
    }

    pub fn finish(self, constraints: Vec<LmiConstraint>, objective: Vec<(VarId, f64)>) -> Result<SdpProblem> {
        let p = SdpProblem {
            variables: self.names,
            constraints,
            objective,
        };
        p.validate()?;
        Ok(p)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpProblem {
    pub variables: Vec<String>,
    pub constraints: Vec<LmiConstraint>,
    /// Minimize `Σ c_v x_v`; empty means a pure feasibility problem.
    pub objective: Vec<(VarId, f64)>,
}

impl SdpProblem {
    pub fn validate(&self) -> Result<()> {
        let n = self.variables.len();
        for c in &self.constraints {
            if let Some(v) = c.max_var() {
                if v.0 >= n {
                    return Err(Error::Config(format!(
                        "constraint '{}' references undeclared variable {}",
                        c.tag, v.0
                    )));
                }
            }
            let bad = |e: &&SymEntry| e.0 >= c.dim || e.1 > e.0;
            if c.constant.iter().find(bad).is_some()
                || c.coefficients.iter().any(|(_, es)| es.iter().find(bad).is_some())
            {
                return Err(Error::Config(format!(
                    "constraint '{}' has an entry outside its lower triangle",
                    c.tag
                )));
            }
            if c.margin < 0.0 || !c.margin.is_finite() {
                return Err(Error::Config(format!("constraint '{}' has invalid margin", c.tag)));
            }
        }
        if let Some((v, _)) = self.objective.iter().find(|(v, _)| v.0 >= n) {
            return Err(Error::Config(format!("objective references undeclared variable {}", v.0)));
        }
        Ok(())
    }

    pub fn objective_value(&self, x: &[f64]) -> f64 {
        self.objective.iter().map(|(v, c)| c * x[v.0]).sum()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    NumericalFailure,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SdpSolution {
    pub status: SolveStatus,
    /// Present iff `status == Optimal`.
    pub assignment: Option<Vec<f64>>,
    pub objective_value: Option<f64>,
    /// Backend status text, kept for reports.
    pub detail: String,
    pub iterations: u32,
}

impl SdpSolution {
    pub fn failure(status: SolveStatus, detail: impl Into<String>) -> Self {
        debug_assert_ne!(status, SolveStatus::Optimal);
        Self {
            status,
            assignment: None,
            objective_value: None,
            detail: detail.into(),
            iterations: 0,
        }
    }
}

/// A conic backend able to solve an [`SdpProblem`].
pub trait SdpBackend: Send + Sync {
    fn name(&self) -> &'static str;

    /// Raw backend call; the returned assignment has not been checked yet.
    fn solve_raw(&self, p: &SdpProblem, tol: f64) -> Result<SdpSolution>;
}

/// Solver selection, read from run configurations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub backend: String,
    pub tol: f64,
    pub max_iter: u32,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            backend: "clarabel".into(),
            tol: DEFAULT_TOL,
            max_iter: 200,
        }
    }
}

impl SolverConfig {
    pub fn backend(&self) -> Result<Box<dyn SdpBackend>> {
        match self.backend.as_str() {
            "clarabel" => Ok(Box::new(ClarabelBackend { max_iter: self.max_iter })),
            other => Err(Error::Config(format!("unknown solver backend '{other}'"))),
        }
    }

    /// Solve with the configured backend and check the assignment.
    pub fn solve(&self, p: &SdpProblem) -> Result<SdpSolution> {
        solve_with(self.backend()?.as_ref(), p, self.tol)
    }
}

/// Solve with the default backend.
pub fn solve(p: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    solve_with(&ClarabelBackend::default(), p, tol)
}

/// Residual scale for a constraint: `1 + max |G(x)|`.
fn residual_scale(g: &DMatrix<f64>) -> f64 {
    1.0 + g.amax()
}

/// Run `backend` and downgrade any optimal answer whose cone residuals exceed
/// `tol` (relative to the constraint's own magnitude) to a numerical failure.
pub fn solve_with(backend: &dyn SdpBackend, p: &SdpProblem, tol: f64) -> Result<SdpSolution> {
    p.validate()?;
    let mut sol = backend.solve_raw(p, tol)?;
    if sol.status != SolveStatus::Optimal {
        sol.assignment = None;
        sol.objective_value = None;
        return Ok(sol);
    }
    let Some(x) = sol.assignment.as_ref() else {
        return Ok(SdpSolution::failure(
            SolveStatus::NumericalFailure,
            "backend reported success without an assignment",
        ));
    };
    if x.iter().any(|v| !v.is_finite()) {
        return Ok(SdpSolution::failure(SolveStatus::NumericalFailure, "non-finite assignment"));
    }
    for c in &p.constraints {
        let g = c.canonical(x);
        let lam = min_eigenvalue(&g);
        if lam < -tol * residual_scale(&g) {
            log::warn!(
                "backend '{}' returned an assignment violating '{}' (λ_min = {lam:e})",
                backend.name(),
                c.tag
            );
            return Ok(SdpSolution::failure(
                SolveStatus::NumericalFailure,
                format!("residual check failed on '{}': λ_min = {lam:e}", c.tag),
            ));
        }
    }
    sol.objective_value = Some(p.objective_value(x));
    Ok(sol)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResidualEntry {
    pub tag: String,
    /// `λ_min` of the canonical (margin-shifted) cone matrix.
    pub min_eig: f64,
    /// `1 + max |G(x)|`
    pub scale: f64,
    pub off_grid: bool,
}

/// Per-constraint residuals, sorted worst first.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub entries: Vec<ResidualEntry>,
}

impl VerifyReport {
    pub fn worst(&self) -> Option<&ResidualEntry> {
        self.entries.first()
    }

    /// `max(0, −λ_min)` over all entries.
    pub fn worst_violation(&self) -> f64 {
        self.entries.iter().map(|e| (-e.min_eig).max(0.0)).fold(0.0, f64::max)
    }

    /// Worst violation among the entries selected by `off_grid`.
    pub fn worst_violation_where(&self, off_grid: bool) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.off_grid == off_grid)
            .map(|e| (-e.min_eig).max(0.0))
            .fold(0.0, f64::max)
    }

    pub fn off_grid_count(&self) -> usize {
        self.entries.iter().filter(|e| e.off_grid).count()
    }
}

/// Exact eigenvalue check of every constraint at the assignment; `finer`
/// constraints (from a refined grid) are appended labelled "off-grid check".
pub fn verify(p: &SdpProblem, x: &[f64], finer: Option<&[LmiConstraint]>) -> VerifyReport {
    use rayon::prelude::*;
    let entry = |c: &LmiConstraint, off_grid: bool| {
        let g = c.canonical(x);
        ResidualEntry {
            tag: if off_grid {
                format!("off-grid check: {}", c.tag)
            } else {
                c.tag.clone()
            },
            min_eig: min_eigenvalue(&g),
            scale: residual_scale(&g),
            off_grid,
        }
    };
    let mut entries: Vec<ResidualEntry> = p.constraints.par_iter().map(|c| entry(c, false)).collect();
    if let Some(f) = finer {
        entries.extend(f.par_iter().map(|c| entry(c, true)).collect::<Vec<_>>());
    }
    entries.sort_by(|a, b| a.min_eig.total_cmp(&b.min_eig));
    VerifyReport { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    fn one_var(builder: &mut ProblemBuilder) -> VarId {
        builder.add_var("x")
    }

    #[test]
    fn svec_preserves_inner_products() {
        let a = dmatrix![1.0, 2.0, 3.0; 2.0, 5.0, -1.0; 3.0, -1.0, 4.0];
        let b = dmatrix![0.5, -2.0, 1.0; -2.0, 1.0, 0.0; 1.0, 0.0, 2.0];
        let ip: f64 = svec(&a).iter().zip(svec(&b)).map(|(x, y)| x * y).sum();
        assert!((ip - (&a * &b).trace()).abs() < 1e-12);
        assert_eq!(svec_index(0, 0), 0);
        assert_eq!(svec_index(0, 1), 1);
        assert_eq!(svec_index(1, 1), 2);
        assert_eq!(svec_index(2, 0), 3);
    }

    #[test]
    fn scalar_times_identity_above_identity_is_feasible() {
        let mut b = ProblemBuilder::new();
        let x = one_var(&mut b);
        let e = AffineMatrix::var(x, DMatrix::identity(2, 2)) - AffineMatrix::identity(2);
        let p = b
            .finish(vec![LmiConstraint::from_affine(&e, Sense::PositiveSemidefinite, 0.0, "xI ⪰ I")], vec![])
            .unwrap();
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!(s.assignment.unwrap()[0] >= 1.0 - 1e-7);
    }

    #[test]
    fn contradictory_cones_are_infeasible() {
        let mut b = ProblemBuilder::new();
        let x = one_var(&mut b);
        let up = AffineMatrix::var(x, DMatrix::identity(2, 2)) - AffineMatrix::identity(2);
        let down = AffineMatrix::var(x, -DMatrix::identity(2, 2)) - AffineMatrix::identity(2);
        let p = b
            .finish(
                vec![
                    LmiConstraint::from_affine(&up, Sense::PositiveSemidefinite, 0.0, "xI ⪰ I"),
                    LmiConstraint::from_affine(&down, Sense::PositiveSemidefinite, 0.0, "-xI ⪰ I"),
                ],
                vec![],
            )
            .unwrap();
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, SolveStatus::Infeasible);
        assert!(s.assignment.is_none());
    }

    #[test]
    fn minimizing_gamma_squared_hits_the_analytic_optimum() {
        let mut b = ProblemBuilder::new();
        let g = b.add_var("gamma_sq");
        let e = AffineMatrix::var(g, DMatrix::identity(1, 1)) - AffineMatrix::constant(dmatrix![4.0]);
        let p = b
            .finish(vec![LmiConstraint::from_affine(&e, Sense::PositiveSemidefinite, 0.0, "γ²−4 ⪰ 0")], vec![(g, 1.0)])
            .unwrap();
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        assert!((s.objective_value.unwrap() - 4.0).abs() < 1e-6);
    }

    #[test]
    fn verify_reports_trivial_and_violated_constraints() {
        let mut b = ProblemBuilder::new();
        let x = one_var(&mut b);
        let zero = AffineMatrix::zeros(2, 2);
        // [[x, 1], [1, x]] ⪰ 0 has eigenvalues x ± 1
        let m = AffineMatrix::var(x, DMatrix::identity(2, 2)) + AffineMatrix::constant(dmatrix![0.0, 1.0; 1.0, 0.0]);
        let p = b
            .finish(
                vec![
                    LmiConstraint::from_affine(&zero, Sense::PositiveSemidefinite, 0.0, "0 ⪰ 0"),
                    LmiConstraint::from_affine(&m, Sense::PositiveSemidefinite, 0.0, "pair"),
                ],
                vec![],
            )
            .unwrap();
        let r = verify(&p, &[0.25], None);
        assert_eq!(r.worst().unwrap().tag, "pair");
        assert!((r.worst().unwrap().min_eig - (0.25 - 1.0)).abs() < 1e-12);
        assert_eq!(r.entries[1].min_eig, 0.0);
        assert!((r.worst_violation() - 0.75).abs() < 1e-12);
    }

    #[test]
    fn strict_constraint_keeps_its_margin() {
        let mut b = ProblemBuilder::new();
        let x = one_var(&mut b);
        let e = AffineMatrix::var(x, DMatrix::identity(3, 3));
        let p = b
            .finish(vec![LmiConstraint::from_affine(&e, Sense::NegativeDefinite, 1e-6, "xI ≺ 0")], vec![])
            .unwrap();
        let s = solve(&p, DEFAULT_TOL).unwrap();
        assert_eq!(s.status, SolveStatus::Optimal);
        let x = s.assignment.unwrap();
        assert!(x[0] < 0.0);
        let r = verify(&p, &x, None);
        assert!(r.worst().unwrap().min_eig >= -DEFAULT_TOL);
    }

    #[test]
    fn undeclared_variables_are_rejected() {
        let b = ProblemBuilder::new();
        let e = AffineMatrix::var(VarId(3), DMatrix::identity(1, 1));
        let r = b.finish(vec![LmiConstraint::from_affine(&e, Sense::PositiveSemidefinite, 0.0, "bad")], vec![]);
        assert!(r.is_err());
    }

    #[test]
    fn unknown_backend_is_a_config_error() {
        let cfg = SolverConfig {
            backend: "mosek".into(),
            ..Default::default()
        };
        assert!(matches!(cfg.backend(), Err(Error::Config(_))));
    }
}
