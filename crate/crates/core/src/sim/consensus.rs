//! Networked agents coupled through a switching Laplacian
//! `L(t) = σ(t)L₁ + (1 − σ(t))L₂`.
//!
//! When `L₁` and `L₂` are symmetric and commute they share an eigenbasis, and
//! in that basis the network splits into copies of one agent whose delayed
//! coupling is scaled by an eigenvalue `ρ` of `L(t)`. Synthesis runs on that
//! scalarized system; the distributed gain is then
//! `I ⊗ K_a(τ) + L(t) ⊗ K_b(τ)` with `K(τ, ρ) = K_a(τ) + ρK_b(τ)`.

use nalgebra::{DMatrix, SymmetricEigen};

use super::{Dims, LoopMatrices, LoopModel, Trajectory};
use crate::error::{Error, Result};
use crate::examples::{consensus_scalarized, AgentMatrices};
use crate::model::{DelaySpec, DwellSpec, LpvDelaySystem};
use crate::synthesis::GainSchedule;

const LAPLACIAN_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct ConsensusNetwork {
    agent: AgentMatrices,
    l1: DMatrix<f64>,
    l2: DMatrix<f64>,
}

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |a, v| a.max(v.abs()))
}

impl ConsensusNetwork {
    pub fn new(agent: AgentMatrices, l1: DMatrix<f64>, l2: DMatrix<f64>) -> Result<Self> {
        let n = l1.nrows();
        if n == 0 || !l1.is_square() || l2.shape() != l1.shape() {
            return Err(Error::Dimension("Laplacians must be square and of equal size".into()));
        }
        let scale = max_abs(&l1).max(max_abs(&l2)).max(1.0);
        for (name, l) in [("L1", &l1), ("L2", &l2)] {
            if max_abs(&(l - l.transpose())) > LAPLACIAN_TOL * scale {
                return Err(Error::Config(format!("{name} is not symmetric")));
            }
            if l.row_iter().any(|r| r.sum().abs() > LAPLACIAN_TOL * scale) {
                return Err(Error::Config(format!("{name} has nonzero row sums")));
            }
        }
        let comm = &l1 * &l2 - &l2 * &l1;
        if max_abs(&comm) > LAPLACIAN_TOL * scale * scale {
            return Err(Error::Config(format!(
                "Laplacians do not commute (|L1 L2 − L2 L1| = {:e}); scalarization is invalid",
                max_abs(&comm)
            )));
        }
        let na = agent.a.nrows();
        let shapes_ok = agent.a.is_square()
            && agent.ad.shape() == (na, na)
            && agent.b.nrows() == na
            && agent.e.nrows() == na
            && agent.c.ncols() == na
            && agent.cd.shape() == agent.c.shape()
            && agent.d.shape() == (agent.c.nrows(), agent.b.ncols())
            && agent.f.shape() == (agent.c.nrows(), agent.e.ncols());
        if !shapes_ok {
            return Err(Error::Dimension("agent matrices have inconsistent shapes".into()));
        }
        Ok(Self { agent, l1, l2 })
    }

    pub fn agents(&self) -> usize {
        self.l1.nrows()
    }

    pub fn agent(&self) -> &AgentMatrices {
        &self.agent
    }

    pub fn laplacian(&self, sigma: f64) -> DMatrix<f64> {
        &self.l1 * sigma + &self.l2 * (1.0 - sigma)
    }

    /// Common eigenvectors (columns) and the eigenvalue pairs `(λ₁, λ₂)`.
    pub fn joint_eigen(&self) -> (DMatrix<f64>, Vec<(f64, f64)>) {
        // a generic combination separates every joint eigenspace
        let eig = SymmetricEigen::new(&self.l1 + &self.l2 * std::f64::consts::FRAC_1_SQRT_2);
        let v = eig.eigenvectors;
        let pairs = v
            .column_iter()
            .map(|c| {
                let c = c.into_owned();
                ((c.transpose() * &self.l1 * &c)[0], (c.transpose() * &self.l2 * &c)[0])
            })
            .collect();
        (v, pairs)
    }

    /// Smallest and largest eigenvalue of `L(t)` over all `σ ∈ [0, 1]`.
    pub fn eigen_bounds(&self) -> (f64, f64) {
        let (_, pairs) = self.joint_eigen();
        pairs.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (a, b)| {
            (lo.min(a.min(*b)), hi.max(a.max(*b)))
        })
    }
}

/// Scalarized LPV system on `[0, λ̄]` plus the full network model.
pub fn build_consensus(net: &ConsensusNetwork, delay: DelaySpec, dwell: DwellSpec) -> Result<(LpvDelaySystem, NetworkLoop)> {
    let (lo, hi) = net.eigen_bounds();
    if lo < -1e-9 {
        return Err(Error::Config(format!("Laplacian eigenvalue {lo} is negative")));
    }
    let sys = consensus_scalarized(&net.agent, hi)?;
    let model = NetworkLoop {
        net: net.clone(),
        delay,
        dwell,
        gains: None,
    };
    Ok((sys, model))
}

/// Network dynamics, parameterized by `σ ∈ [0, 1]`.
#[derive(Clone, Debug)]
pub struct NetworkLoop {
    net: ConsensusNetwork,
    delay: DelaySpec,
    dwell: DwellSpec,
    gains: Option<GainSchedule>,
}

impl NetworkLoop {
    /// Attach the schedule synthesized on the scalarized system; it must be
    /// affine in `ρ`.
    pub fn with_gain(mut self, gs: GainSchedule) -> Result<Self> {
        let na = self.net.agent.a.nrows();
        let qa = self.net.agent.b.ncols();
        if gs.n() != na || gs.q() != qa {
            return Err(Error::Dimension(format!(
                "gain is {}×{}, agents need {qa}×{na}",
                gs.q(),
                gs.n()
            )));
        }
        if (gs.t_dwell - self.dwell.t_dwell()).abs() > 1e-12 * self.dwell.t_dwell() {
            return Err(Error::Config("gain schedule dwell time differs from the network's".into()));
        }
        let top = gs.params.upper()[0];
        for k in 0..=4 {
            let tau = self.dwell.t_dwell() * k as f64 / 4.0;
            let ka = gs.gain(tau, &[0.0])?;
            let kb = gs.gain(tau, &[1.0])? - &ka;
            let direct = gs.gain(tau, &[top])?;
            let err = max_abs(&(&ka + &kb * top - &direct));
            if err > 1e-8 * max_abs(&direct).max(1.0) {
                return Err(Error::Config(format!(
                    "gain is not affine in rho (mismatch {err:e} at tau = {tau}); distributed form unavailable"
                )));
            }
        }
        self.gains = Some(gs);
        Ok(self)
    }

    pub fn network(&self) -> &ConsensusNetwork {
        &self.net
    }

    /// `(K_a(τ), K_b(τ))`
    pub fn split_gain(&self, tau: f64) -> Result<Option<(DMatrix<f64>, DMatrix<f64>)>> {
        match &self.gains {
            None => Ok(None),
            Some(gs) => {
                let ka = gs.gain(tau, &[0.0])?;
                let kb = gs.gain(tau, &[1.0])? - &ka;
                Ok(Some((ka, kb)))
            }
        }
    }
}

impl LoopModel for NetworkLoop {
    fn dims(&self) -> Dims {
        let n = self.net.agents();
        let a = &self.net.agent;
        Dims {
            n: n * a.a.nrows(),
            m: n * a.e.ncols(),
            q: n * a.b.ncols(),
            r: n * a.c.nrows(),
            s: 1,
        }
    }

    fn delay(&self) -> &DelaySpec {
        &self.delay
    }

    fn t_dwell(&self) -> f64 {
        self.dwell.t_dwell()
    }

    fn matrices(&self, tau: f64, rho: &[f64]) -> Result<LoopMatrices> {
        let sigma = rho[0];
        if !(-1e-12..=1.0 + 1e-12).contains(&sigma) {
            return Err(Error::Domain(format!("sigma = {sigma} outside [0, 1]")));
        }
        let n = self.net.agents();
        let a = &self.net.agent;
        let eye = DMatrix::<f64>::identity(n, n);
        let l = self.net.laplacian(sigma);
        let k = match self.split_gain(tau)? {
            Some((ka, kb)) => eye.kronecker(&ka) + l.kronecker(&kb),
            None => DMatrix::zeros(n * a.b.ncols(), n * a.a.nrows()),
        };
        let ib = eye.kronecker(&a.b);
        let id = eye.kronecker(&a.d);
        Ok(LoopMatrices {
            a_cl: eye.kronecker(&a.a) + &ib * &k,
            ad: l.kronecker(&a.ad),
            e: eye.kronecker(&a.e),
            c_cl: eye.kronecker(&a.c) + &id * &k,
            cd: l.kronecker(&a.cd),
            f: eye.kronecker(&a.f),
            k,
        })
    }
}

/// `‖x_i − x̄‖` summed over agents (2-norm of the stacked deviations).
pub fn disagreement(tr: &Trajectory, agents: usize) -> Result<Vec<f64>> {
    let n = tr.dims.n;
    if agents == 0 || !n.is_multiple_of(agents) {
        return Err(Error::Dimension(format!("state dimension {n} is not a multiple of {agents} agents")));
    }
    let na = n / agents;
    Ok(tr
        .states
        .iter()
        .map(|x| {
            let mean: Vec<f64> = (0..na)
                .map(|j| (0..agents).map(|i| x[i * na + j]).sum::<f64>() / agents as f64)
                .collect();
            (0..agents)
                .flat_map(|i| (0..na).map(move |j| (i, j)))
                .map(|(i, j)| (x[i * na + j] - mean[j]).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples::{consensus_agent, laplacian_dense6, laplacian_ring6};
    use crate::lmi::GainStructure;
    use crate::model::{ParamBox, PwcTrajectory};
    use crate::poly::MatrixPoly;
    use crate::sim::{simulate, DelayFn, Disturbance, InitialHistory, SimConfig};
    use nalgebra::dmatrix;

    fn shipped() -> ConsensusNetwork {
        ConsensusNetwork::new(consensus_agent(), laplacian_ring6(), laplacian_dense6()).unwrap()
    }

    #[test]
    fn shipped_laplacians_commute_with_spectrum_in_0_2() {
        let net = shipped();
        let (lo, hi) = net.eigen_bounds();
        assert!(lo.abs() < 1e-12);
        assert!((hi - 2.0).abs() < 1e-12);
        let (v, pairs) = net.joint_eigen();
        for (i, (l1, l2)) in pairs.iter().enumerate() {
            let c = v.column(i).into_owned();
            assert!((&laplacian_ring6() * &c - &c * *l1).norm() < 1e-10);
            assert!((&laplacian_dense6() * &c - &c * *l2).norm() < 1e-10);
        }
    }

    #[test]
    fn two_agent_eigenvalues() {
        let l = dmatrix![1.0, -1.0; -1.0, 1.0];
        let net = ConsensusNetwork::new(consensus_agent(), l.clone(), l).unwrap();
        let (lo, hi) = net.eigen_bounds();
        assert!(lo.abs() < 1e-14 && (hi - 2.0).abs() < 1e-14);
    }

    #[test]
    fn non_commuting_laplacians_rejected() {
        let l1 = dmatrix![1.0, -1.0, 0.0; -1.0, 1.0, 0.0; 0.0, 0.0, 0.0];
        let l2 = dmatrix![0.0, 0.0, 0.0; 0.0, 1.0, -1.0; 0.0, -1.0, 1.0];
        assert!(matches!(ConsensusNetwork::new(consensus_agent(), l1, l2), Err(Error::Config(_))));
    }

    #[test]
    fn bad_row_sums_rejected() {
        let l = dmatrix![1.0, 0.0; 0.0, 1.0];
        assert!(ConsensusNetwork::new(consensus_agent(), l.clone(), l).is_err());
    }

    #[test]
    fn scalarized_box_is_spectrum() {
        let (sys, model) = build_consensus(&shipped(), DelaySpec::new(0.2, 0.9).unwrap(), DwellSpec::new(0.1, 0.01).unwrap()).unwrap();
        assert!((sys.params().upper()[0] - 2.0).abs() < 1e-12);
        assert_eq!(model.dims().n, 12);
    }

    fn split_schedule(t_dwell: f64) -> GainSchedule {
        let ua = dmatrix![-0.4, 0.1; 0.0, -0.3];
        let ub = dmatrix![-0.2, 0.0; 0.05, -0.5];
        let u = MatrixPoly::from_terms(2, 2, 1, false, [(vec![1, 0], ua), (vec![0, 1], ub)]).unwrap();
        let x = MatrixPoly::constant(dmatrix![2.0, 0.3; 0.3, 1.0], 1);
        GainSchedule {
            u_tilde: u,
            x_tilde: x,
            t_dwell,
            gamma: None,
            params: ParamBox::interval(0.0, 2.0).unwrap(),
            structure: GainStructure::TauRhoSplit,
            max_condition: 1e10,
        }
    }

    fn cfg(x0: Vec<f64>) -> SimConfig {
        SimConfig {
            dt: 1e-3,
            horizon: 3.0,
            history: InitialHistory::Constant { x0 },
            delay_fn: DelayFn::Sinusoid {
                offset: 0.1,
                amplitude: 0.09,
                omega: 0.9,
                phase: 0.0,
            },
            disturbance: Disturbance::Zero,
            seed: 0,
            blowup_norm: 1e8,
        }
    }

    #[test]
    fn eigen_coordinates_match_scalarized_runs() {
        let delay = DelaySpec::new(0.2, 0.9).unwrap();
        let dwell = DwellSpec::new(0.1, 0.01).unwrap();
        let net = shipped();
        let (sys, model) = build_consensus(&net, delay, dwell).unwrap();
        let gs = split_schedule(0.1);
        let model = model.with_gain(gs.clone()).unwrap();
        let sigma = 0.3;
        // switch times matter for the clock, so both runs use the same ones
        let times = vec![0.0, 0.5, 1.2];
        let net_traj = PwcTrajectory::new(times.clone(), vec![vec![sigma]; 3]).unwrap();
        let x0: Vec<f64> = (0..12).map(|i| ((i * 7 % 5) as f64 - 2.0) * 0.3).collect();
        let full = simulate(&model, &net_traj, &cfg(x0.clone())).unwrap();
        let (v, pairs) = net.joint_eigen();
        let vt = v.transpose().kronecker(&DMatrix::<f64>::identity(2, 2));
        let xi0 = &vt * nalgebra::DVector::from_vec(x0);
        for (i, (l1, l2)) in pairs.iter().enumerate() {
            let lam = sigma * l1 + (1.0 - sigma) * l2;
            let traj = PwcTrajectory::new(times.clone(), vec![vec![lam.max(0.0)]; 3]).unwrap();
            let single = crate::sim::simulate_plant(
                &sys,
                &delay,
                &dwell,
                Some(&gs),
                &traj,
                &cfg(vec![xi0[2 * i], xi0[2 * i + 1]]),
            )
            .unwrap();
            assert_eq!(single.len(), full.len());
            for (k, x) in full.states.iter().enumerate().step_by(97) {
                let xi = &vt * nalgebra::DVector::from_column_slice(x);
                for j in 0..2 {
                    assert!((xi[2 * i + j] - single.states[k][j]).abs() < 1e-9, "mode {i} at t = {}", full.times[k]);
                }
            }
        }
    }

    #[test]
    fn zero_laplacian_decouples_identical_agents() {
        let mut agent = consensus_agent();
        agent.a = DMatrix::identity(2, 2) * -1.0;
        let l = DMatrix::zeros(3, 3);
        let net = ConsensusNetwork::new(agent, l.clone(), l).unwrap();
        let (_, model) = build_consensus(&net, DelaySpec::new(0.2, 0.9).unwrap(), DwellSpec::new(0.1, 0.01).unwrap()).unwrap();
        let traj = PwcTrajectory::new(vec![0.0], vec![vec![0.5]]).unwrap();
        let tr = simulate(&model, &traj, &cfg(vec![1.0, -1.0, 1.0, -1.0, 1.0, -1.0])).unwrap();
        let last = tr.states.last().unwrap();
        let expect = (-3.0f64).exp();
        for (i, v) in last.iter().enumerate() {
            let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
            assert!((v - sign * expect).abs() < 1e-9);
        }
        assert!(disagreement(&tr, 3).unwrap().iter().all(|d| d.abs() < 1e-12));
    }

    #[test]
    fn disagreement_hand_cases() {
        let mut tr = crate::sim::Trajectory {
            dims: Dims { n: 4, m: 1, q: 1, r: 1, s: 1 },
            times: vec![0.0, 1.0],
            states: vec![vec![1.0, 2.0, -1.0, -2.0], vec![3.0, 3.0, 3.0, 3.0]],
            derivs: vec![],
            derivs_left: vec![],
            inputs: vec![],
            outputs: vec![],
            disturbance: vec![],
            param: vec![],
            clock: vec![],
            delay: vec![],
            pre_times: vec![],
            pre_states: vec![],
            pre_derivs: vec![],
            switch_times: vec![0.0],
            t_dwell: 1.0,
            diverged: false,
            blowup_time: None,
        };
        let d = disagreement(&tr, 2).unwrap();
        assert!((d[0] - 2f64.sqrt() * 5f64.sqrt()).abs() < 1e-14);
        assert_eq!(d[1], 0.0);
        assert!(disagreement(&tr, 3).is_err());
        tr.dims.n = 3;
        assert!(disagreement(&tr, 2).is_err());
    }

    #[test]
    fn non_affine_gain_rejected() {
        let mut gs = split_schedule(0.1);
        gs.u_tilde = MatrixPoly::from_terms(2, 2, 1, false, [(vec![0, 2], DMatrix::identity(2, 2))]).unwrap();
        let (_, model) = build_consensus(&shipped(), DelaySpec::new(0.2, 0.9).unwrap(), DwellSpec::new(0.1, 0.01).unwrap()).unwrap();
        assert!(model.with_gain(gs).is_err());
    }
}
