use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT,
};

use super::{svec_index, SdpBackend, SdpProblem, SdpSolution, Sense, SolveStatus};
use crate::error::{Error, Result};

/// Interior-point backend built on Clarabel's PSD triangle cone.
///
/// Each constraint `G(x) = G₀ + Σ x_v G_v ⪰ 0` becomes
/// `svec(G₀) − (−Σ x_v svec(G_v)) ∈ S₊`, i.e. `A x + s = b` with
/// `A = −[svec(G_v)]`, `b = svec(G₀)`.
#[derive(Clone, Debug)]
pub struct ClarabelBackend {
    pub max_iter: u32,
}

impl Default for ClarabelBackend {
    fn default() -> Self {
        Self { max_iter: 200 }
    }
}

const SQRT2: f64 = std::f64::consts::SQRT_2;

fn packed_value(i: usize, j: usize, v: f64) -> f64 {
    if i == j {
        v
    } else {
        SQRT2 * v
    }
}

impl SdpBackend for ClarabelBackend {
    fn name(&self) -> &'static str {
        "clarabel"
    }

    fn solve_raw(&self, p: &SdpProblem, tol: f64) -> Result<SdpSolution> {
        let n = p.variables.len();
        let mut columns: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut b = Vec::new();
        let mut cones = Vec::with_capacity(p.constraints.len());
        let mut offset = 0;
        for c in &p.constraints {
            let sign = match c.sense {
                Sense::NegativeDefinite => -1.0,
                Sense::PositiveSemidefinite => 1.0,
            };
            let len = c.dim * (c.dim + 1) / 2;
            let mut rhs = vec![0.0; len];
            for &(i, j, v) in &c.constant {
                rhs[svec_index(i, j)] += packed_value(i, j, sign * v);
            }
            for d in 0..c.dim {
                rhs[svec_index(d, d)] -= c.margin;
            }
            b.extend(rhs);
            for (var, entries) in &c.coefficients {
                for &(i, j, v) in entries {
                    columns[var.0].push((offset + svec_index(i, j), -packed_value(i, j, sign * v)));
                }
            }
            cones.push(SupportedConeT::PSDTriangleConeT(c.dim));
            offset += len;
        }
        let m = offset;

        let mut colptr = Vec::with_capacity(n + 1);
        let mut rowval = Vec::new();
        let mut nzval = Vec::new();
        colptr.push(0);
        for mut col in columns {
            col.sort_by_key(|e| e.0);
            // merge duplicates produced by repeated (i, j) entries
            let mut last: Option<usize> = None;
            for (r, v) in col {
                if last == Some(r) {
                    *nzval.last_mut().unwrap() += v;
                } else {
                    rowval.push(r);
                    nzval.push(v);
                    last = Some(r);
                }
            }
            colptr.push(rowval.len());
        }
        let a = CscMatrix::new(m, n, colptr, rowval, nzval);
        let pmat = CscMatrix::<f64>::zeros((n, n));
        let mut q = vec![0.0; n];
        for (v, c) in &p.objective {
            q[v.0] += c;
        }

        let settings = DefaultSettingsBuilder::default()
            .verbose(false)
            .max_iter(self.max_iter)
            .tol_feas(tol)
            .tol_gap_abs(tol)
            .tol_gap_rel(tol)
            .build()
            .map_err(|e| Error::Solver(format!("invalid clarabel settings: {e:?}")))?;
        let mut solver = DefaultSolver::new(&pmat, &q, &a, &b, &cones, settings)
            .map_err(|e| Error::Solver(format!("clarabel rejected the problem: {e:?}")))?;
        solver.solve();

        let status = solver.solution.status;
        let detail = format!("{status:?}");
        let iterations = solver.solution.iterations;
        let mapped = match status {
            SolverStatus::Solved | SolverStatus::AlmostSolved => SolveStatus::Optimal,
            SolverStatus::PrimalInfeasible | SolverStatus::AlmostPrimalInfeasible => SolveStatus::Infeasible,
            _ => SolveStatus::NumericalFailure,
        };
        log::debug!("clarabel: {detail} after {iterations} iterations ({n} vars, {m} rows)");
        Ok(SdpSolution {
            status: mapped,
            assignment: (mapped == SolveStatus::Optimal).then(|| solver.solution.x.clone()),
            objective_value: None,
            detail,
            iterations,
        })
    }
}
