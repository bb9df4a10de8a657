//! Built-in plants: the second-order benchmark used for stability analysis,
//! a controlled second-order plant for synthesis, and the six-agent
//! consensus network.

use nalgebra::{dmatrix, DMatrix};

use crate::error::Result;
use crate::model::{DelaySpec, DwellSpec, LpvDelaySystem, ParamBox, PlantFile, SystemParts};
use crate::poly::MatrixPoly;

fn affine(m0: DMatrix<f64>, m1: DMatrix<f64>) -> Result<MatrixPoly> {
    let (r, c) = m0.shape();
    MatrixPoly::from_terms(r, c, 1, false, [(vec![0, 0], m0), (vec![0, 1], m1)])
}

fn constant(m: DMatrix<f64>) -> MatrixPoly {
    MatrixPoly::constant(m, 1)
}

/// `A = [[0, 1], [−2−ρ, −1]]`, `A_d = [[−1, 0], [−1−ρ, −1]]` on `[0, ρ̄]`,
/// no inputs or outputs (all zero, one column/row each).
pub fn example1_system(rho_bar: f64) -> Result<LpvDelaySystem> {
    let z = |r, c| constant(DMatrix::zeros(r, c));
    LpvDelaySystem::new(SystemParts {
        a: affine(dmatrix![0.0, 1.0; -2.0, -1.0], dmatrix![0.0, 0.0; -1.0, 0.0])?,
        ad: affine(dmatrix![-1.0, 0.0; -1.0, -1.0], dmatrix![0.0, 0.0; -1.0, 0.0])?,
        b: z(2, 1),
        c: z(1, 2),
        cd: z(1, 2),
        d: z(1, 1),
        e: z(2, 1),
        f: z(1, 1),
        params: ParamBox::interval(0.0, rho_bar)?,
    })
}

pub fn example1_plant(rho_bar: f64) -> Result<PlantFile> {
    Ok(PlantFile {
        system: example1_system(rho_bar)?,
        delay: DelaySpec::new(0.5, 0.5)?,
        dwell: DwellSpec::new(1e-4, 0.005)?,
    })
}

/// Open-loop unstable plant with scalar input and scalar disturbance.
pub fn example2_system(rho_bar: f64) -> Result<LpvDelaySystem> {
    LpvDelaySystem::new(SystemParts {
        a: affine(dmatrix![2.0, -0.5; -1.0, -2.0], dmatrix![-1.0, -0.5; 0.0, 0.1])?,
        ad: affine(dmatrix![-1.0, 0.0; 0.05, -1.0], dmatrix![0.0, 0.0; -0.45, 0.0])?,
        b: constant(dmatrix![1.0; 0.0]),
        e: constant(dmatrix![0.01; 0.01]),
        c: constant(dmatrix![0.0, 1.0]),
        cd: constant(dmatrix![0.0, 1.0]),
        d: constant(DMatrix::zeros(1, 1)),
        f: constant(DMatrix::zeros(1, 1)),
        params: ParamBox::interval(0.0, rho_bar)?,
    })
}

pub fn example2_plant() -> Result<PlantFile> {
    Ok(PlantFile {
        system: example2_system(1.0)?,
        delay: DelaySpec::new(0.2, 0.9)?,
        dwell: DwellSpec::new(0.01, 1e-8)?,
    })
}

/// Per-agent matrices of the consensus network.
#[derive(Clone, Debug, PartialEq)]
pub struct AgentMatrices {
    pub a: DMatrix<f64>,
    pub ad: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub cd: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

pub fn consensus_agent() -> AgentMatrices {
    let b = dmatrix![1.0, 0.0; 0.0, 0.6];
    AgentMatrices {
        a: dmatrix![0.0, 1.0; -1.0, 0.0],
        ad: dmatrix![0.0, 1.0; -1.0, 0.0],
        e: &b * 0.05,
        b,
        c: DMatrix::identity(2, 2),
        cd: DMatrix::identity(2, 2),
        d: DMatrix::zeros(2, 2),
        f: DMatrix::identity(2, 2) * 0.1,
    }
}

/// Ring topology on six agents.
pub fn laplacian_ring6() -> DMatrix<f64> {
    circulant6(&[1.0, -0.5, 0.0, 0.0, 0.0, -0.5])
}

/// Six agents, each linked to all but the opposite agent.
pub fn laplacian_dense6() -> DMatrix<f64> {
    circulant6(&[1.0, -0.25, -0.25, 0.0, -0.25, -0.25])
}

fn circulant6(first_row: &[f64; 6]) -> DMatrix<f64> {
    DMatrix::from_fn(6, 6, |i, j| first_row[(j + 6 - i) % 6])
}

/// Eigenvalue-scalarized agent: `A = 𝒜`, `A_d = ρ𝒜_d`, `C_d = ρ𝒞_d`, the rest
/// constant, on `[0, ρ̄]`.
pub fn consensus_scalarized(agent: &AgentMatrices, rho_bar: f64) -> Result<LpvDelaySystem> {
    let zero = |m: &DMatrix<f64>| DMatrix::zeros(m.nrows(), m.ncols());
    LpvDelaySystem::new(SystemParts {
        a: constant(agent.a.clone()),
        ad: affine(zero(&agent.ad), agent.ad.clone())?,
        b: constant(agent.b.clone()),
        c: constant(agent.c.clone()),
        cd: affine(zero(&agent.cd), agent.cd.clone())?,
        d: constant(agent.d.clone()),
        e: constant(agent.e.clone()),
        f: constant(agent.f.clone()),
        params: ParamBox::interval(0.0, rho_bar)?,
    })
}

pub fn example3_plant() -> Result<PlantFile> {
    Ok(PlantFile {
        system: consensus_scalarized(&consensus_agent(), 2.0)?,
        delay: DelaySpec::new(0.2, 0.9)?,
        dwell: DwellSpec::new(0.1, 0.01)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplacians_match_printed_rows() {
        let l1 = laplacian_ring6();
        assert_eq!(l1.row(1).iter().copied().collect::<Vec<_>>(), vec![-0.5, 1.0, -0.5, 0.0, 0.0, 0.0]);
        let l2 = laplacian_dense6();
        assert_eq!(l2.row(3).iter().copied().collect::<Vec<_>>(), vec![0.0, -0.25, -0.25, 1.0, -0.25, -0.25]);
        assert_eq!(l2.row(5).iter().copied().collect::<Vec<_>>(), vec![-0.25, -0.25, 0.0, -0.25, -0.25, 1.0]);
    }

    #[test]
    fn scalarized_consensus_at_rho() {
        let sys = consensus_scalarized(&consensus_agent(), 2.0).unwrap();
        let m = sys.eval(&[1.5]).unwrap();
        assert_eq!(m.ad, dmatrix![0.0, 1.5; -1.5, 0.0]);
        assert_eq!(m.cd, DMatrix::identity(2, 2) * 1.5);
        assert_eq!(m.e, dmatrix![0.05, 0.0; 0.0, 0.03]);
    }
}
