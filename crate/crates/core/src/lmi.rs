//! Gridded relaxations of the dwell-time LMIs.
//!
//! Analysis certificate `(P, Q, R)` with `e = exp(−κh)`:
//!
//! ```text
//! Γ(τ,ρ) = [ Sym[PA] + Ṗ + Q − eR   PA_d + eR              hAᵀR   ]
//!          [ *                      −(1−μ)eQ − eR          hA_dᵀR ]  ≺ 0
//!          [ *                      *                      −R     ]
//! ```
//!
//! on `[0, T_D] × 𝒫`, the stationary block `Γ(T_D⁺, ρ)` (same matrix at
//! `τ = T_D` with `Ṗ` dropped, since the certificate is frozen after the
//! dwell time), and for every pair `(ρ, η)` the jump conditions
//!
//! ```text
//! P(T_D,ρ) − P(0,η) ⪰ 0,  Q(T_D,ρ) − Q(0,η) ⪰ 0,  R(T_D,ρ) − R(0,η) ⪰ 0,
//! κQ(T_D,ρ) − Q̇(0,η) ⪰ 0,  κR(T_D,ρ) − Ṙ(0,η) ⪰ 0.
//! ```
//!
//! Synthesis uses the transformed unknowns `P̃, Q̃, R̃` (symmetric, in `(τ,ρ)`),
//! `Ũ` (`q×n`, in `(τ,ρ)`) and `X̃` (`n×n`, in `ρ` only) in the 7×7 block
//! [`gamma_synthesis`], with the same stationary and jump structure. The
//! state-feedback gain is `K = Ũ X̃⁻¹`: congruence of the closed-loop block
//! with `diag(X̃, …)` turns `(A + BK)X̃` into `AX̃ + BŨ` exactly when `Ũ = KX̃`.
//!
//! `≺ 0` is imposed as `F + margin·I ⪯ 0`; positivity of `P, Q, R` (resp. the
//! tilde variables) is imposed with the same margin at every flow grid point.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DelaySpec, DwellSpec, LpvDelaySystem, ParamBox, PlantEval, SystemMatrices};
use crate::poly::{ansatz, Ansatz, MonomialSet};
use crate::sdp::{AffineMatrix, LmiConstraint, ProblemBuilder, SdpProblem, Sense, VarId};

/// Strictness shift used for `≺ 0` and `≻ 0`.
pub const DEFAULT_MARGIN: f64 = 1e-6;

/// Highest clock or parameter degree accepted for an ansatz.
pub const MAX_DEGREE: u32 = 6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridPlan {
    pub n_tau: usize,
    pub n_rho: usize,
}

impl GridPlan {
    pub fn new(n_tau: usize, n_rho: usize) -> Result<Self> {
        let p = Self { n_tau, n_rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_tau < 2 || self.n_rho < 2 {
            return Err(Error::Config(format!(
                "grid needs at least 2 points per axis, got n_tau = {}, n_rho = {}",
                self.n_tau, self.n_rho
            )));
        }
        Ok(())
    }

    /// Twice as dense: the old points plus all midpoints.
    pub fn refined(&self) -> Self {
        Self {
            n_tau: 2 * self.n_tau - 1,
            n_rho: 2 * self.n_rho - 1,
        }
    }
}

/// Grid points for the flow, stationary and jump conditions.
#[derive(Clone, Debug, PartialEq)]
pub struct Grid {
    pub taus: Vec<f64>,
    /// Cartesian product of the per-axis grids, lexicographic.
    pub rhos: Vec<Vec<f64>>,
    /// Ordered pairs `(i, j)` into `rhos`, meaning `(ρ_i, η_j)`.
    pub pairs: Vec<(usize, usize)>,
}

impl Grid {
    pub fn flow_points(&self) -> impl Iterator<Item = (f64, &[f64])> + '_ {
        self.taus
            .iter()
            .flat_map(move |t| self.rhos.iter().map(move |r| (*t, r.as_slice())))
    }
}

pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    (0..n)
        .map(|k| {
            if k == n - 1 {
                hi
            } else {
                lo + (hi - lo) * k as f64 / (n - 1) as f64
            }
        })
        .collect()
}

pub fn build_grid(plan: &GridPlan, dwell: &DwellSpec, params: &ParamBox) -> Result<Grid> {
    plan.validate()?;
    let taus = linspace(0.0, dwell.t_dwell(), plan.n_tau);
    let axes: Vec<Vec<f64>> = params
        .lower()
        .iter()
        .zip(params.upper())
        .map(|(l, u)| linspace(*l, *u, plan.n_rho))
        .collect();
    let mut rhos: Vec<Vec<f64>> = vec![Vec::new()];
    for axis in &axes {
        rhos = rhos
            .into_iter()
            .flat_map(|prefix| {
                axis.iter().map(move |v| {
                    let mut p = prefix.clone();
                    p.push(*v);
                    p
                })
            })
            .collect();
    }
    let k = rhos.len();
    let pairs = (0..k).flat_map(|i| (0..k).map(move |j| (i, j))).collect();
    Ok(Grid { taus, rhos, pairs })
}

/// Clock and parameter degree caps of one ansatz.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Degrees {
    pub deg_tau: u32,
    pub deg_rho: u32,
}

impl Default for Degrees {
    fn default() -> Self {
        Self { deg_tau: 1, deg_rho: 1 }
    }
}

impl Degrees {
    pub fn new(deg_tau: u32, deg_rho: u32) -> Self {
        Self { deg_tau, deg_rho }
    }

    fn check(&self, what: &str) -> Result<()> {
        if self.deg_tau > MAX_DEGREE || self.deg_rho > MAX_DEGREE {
            return Err(Error::Config(format!(
                "ansatz {what} degree ({}, {}) exceeds the cap {MAX_DEGREE}",
                self.deg_tau, self.deg_rho
            )));
        }
        Ok(())
    }

    fn set(&self) -> MonomialSet {
        MonomialSet::Full {
            deg_tau: self.deg_tau,
            deg_rho: self.deg_rho,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CertDegrees {
    pub p: Degrees,
    pub q: Degrees,
    pub r: Degrees,
}

impl CertDegrees {
    pub fn uniform(d: Degrees) -> Self {
        Self { p: d, q: d, r: d }
    }
}

/// Symbolic Lyapunov–Krasovskii certificate `(P, Q, R)`.
#[derive(Clone, Debug)]
pub struct CertAnsatz {
    pub p: Ansatz,
    pub q: Ansatz,
    pub r: Ansatz,
}

pub fn cert_ansatz(builder: &mut ProblemBuilder, n: usize, params: usize, degrees: &CertDegrees, tilde: bool) -> Result<CertAnsatz> {
    degrees.p.check("P")?;
    degrees.q.check("Q")?;
    degrees.r.check("R")?;
    let (pn, qn, rn) = if tilde { ("Pt", "Qt", "Rt") } else { ("P", "Q", "R") };
    Ok(CertAnsatz {
        p: ansatz(builder, pn, n, n, params, &degrees.p.set(), true)?,
        q: ansatz(builder, qn, n, n, params, &degrees.q.set(), true)?,
        r: ansatz(builder, rn, n, n, params, &degrees.r.set(), true)?,
    })
}

/// Numeric values needed to assemble a flow block at one point.
struct CertValues {
    p: AffineMatrix,
    pd: AffineMatrix,
    q: AffineMatrix,
    r: AffineMatrix,
}

impl CertAnsatz {
    fn values(&self, tau: f64, rho: &[f64], stationary: bool) -> CertValues {
        let n = self.p.rows();
        CertValues {
            p: self.p.eval(tau, rho),
            pd: if stationary {
                AffineMatrix::zeros(n, n)
            } else {
                self.p.eval_d_dtau(tau, rho)
            },
            q: self.q.eval(tau, rho),
            r: self.r.eval(tau, rho),
        }
    }
}

fn rho_label(rho: &[f64]) -> String {
    let parts: Vec<String> = rho.iter().map(|v| format!("{v:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

fn check_point(params: &ParamBox, dwell: &DwellSpec, tau: f64, rho: &[f64]) -> Result<()> {
    params.check(rho)?;
    if !(0.0..=dwell.t_dwell()).contains(&tau) {
        return Err(Error::Domain(format!("clock value {tau} outside [0, {}]", dwell.t_dwell())));
    }
    Ok(())
}

/// The analysis block from plant matrices and symbolic `P, Ṗ, Q, R`.
pub fn gamma_analysis_blocks(
    m: &SystemMatrices,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    p: &AffineMatrix,
    pd: &AffineMatrix,
    q: &AffineMatrix,
    r: &AffineMatrix,
) -> Result<AffineMatrix> {
    let n = m.n();
    if p.shape() != (n, n) || q.shape() != (n, n) || r.shape() != (n, n) || pd.shape() != (n, n) {
        return Err(Error::Dimension(format!(
            "certificate blocks are {:?}, plant state dimension is {n}",
            p.shape()
        )));
    }
    let h = delay.h();
    let e = (-dwell.kappa() * h).exp();
    let g11 = p.rmul(&m.a).sym() + pd + q - &(r * e);
    let g12 = p.rmul(&m.ad) + r * e;
    let g13 = r.lmul(&(m.a.transpose() * h));
    let g22 = q * (-(1.0 - delay.mu()) * e) - r * e;
    let g23 = r.lmul(&(m.ad.transpose() * h));
    let g33 = -r;
    Ok(AffineMatrix::symmetric_blocks(
        &[n, n, n],
        &[
            vec![Some(g11), Some(g12), Some(g13)],
            vec![Some(g22), Some(g23)],
            vec![Some(g33)],
        ],
    ))
}

/// Flow condition `Γ(τ,ρ) ≺ 0` at one grid point.
pub fn gamma_analysis(
    plant: &dyn PlantEval,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    cert: &CertAnsatz,
    tau: f64,
    rho: &[f64],
    margin: f64,
) -> Result<LmiConstraint> {
    check_point(plant.params(), dwell, tau, rho)?;
    let m = plant.matrices(tau, rho)?;
    let v = cert.values(tau, rho, false);
    let g = gamma_analysis_blocks(&m, delay, dwell, &v.p, &v.pd, &v.q, &v.r)?;
    Ok(LmiConstraint::from_affine(
        &g,
        Sense::NegativeDefinite,
        margin,
        format!("flow tau={tau:.6e} rho={}", rho_label(rho)),
    ))
}

/// `Γ(T_D⁺, ρ) ≺ 0`: the flow block at `τ = T_D` without `Ṗ`.
pub fn gamma_stationary(
    plant: &dyn PlantEval,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    cert: &CertAnsatz,
    rho: &[f64],
    margin: f64,
) -> Result<LmiConstraint> {
    let tau = dwell.t_dwell();
    check_point(plant.params(), dwell, tau, rho)?;
    let m = plant.matrices(tau, rho)?;
    let v = cert.values(tau, rho, true);
    let g = gamma_analysis_blocks(&m, delay, dwell, &v.p, &v.pd, &v.q, &v.r)?;
    Ok(LmiConstraint::from_affine(
        &g,
        Sense::NegativeDefinite,
        margin,
        format!("stationary rho={}", rho_label(rho)),
    ))
}

/// The five jump conditions for the pair `(ρ, η)`.
pub fn jump_conditions(cert: &CertAnsatz, dwell: &DwellSpec, rho: &[f64], eta: &[f64]) -> Vec<LmiConstraint> {
    let td = dwell.t_dwell();
    let k = dwell.kappa();
    let label = format!("rho={} eta={}", rho_label(rho), rho_label(eta));
    let psd = |e: AffineMatrix, what: &str| {
        LmiConstraint::from_affine(&e, Sense::PositiveSemidefinite, 0.0, format!("jump {what} {label}"))
    };
    let (p, q, r) = (&cert.p, &cert.q, &cert.r);
    vec![
        psd(&p.eval(td, rho) - &p.eval(0.0, eta), p.name()),
        psd(&q.eval(td, rho) - &q.eval(0.0, eta), q.name()),
        psd(&r.eval(td, rho) - &r.eval(0.0, eta), r.name()),
        psd(&(q.eval(td, rho) * k) - &q.eval_d_dtau(0.0, eta), &format!("d{}", q.name())),
        psd(&(r.eval(td, rho) * k) - &r.eval_d_dtau(0.0, eta), &format!("d{}", r.name())),
    ]
}

fn positivity(cert: &CertAnsatz, tau: f64, rho: &[f64], margin: f64) -> Vec<LmiConstraint> {
    [&cert.p, &cert.q, &cert.r]
        .into_iter()
        .map(|a| {
            LmiConstraint::from_affine(
                &a.eval(tau, rho),
                Sense::PositiveSemidefinite,
                margin,
                format!("positive {} tau={tau:.6e} rho={}", a.name(), rho_label(rho)),
            )
        })
        .collect()
}

/// Per-point constraint generator shared by the analysis and synthesis
/// assemblies. Order: flow points (τ-major), stationary points, the five jump
/// families (each over all pairs), then positivity (per flow point P, Q, R).
fn gridded_constraints<F, S>(grid: &Grid, cert: &CertAnsatz, dwell: &DwellSpec, margin: f64, flow: F, stationary: S) -> Result<Vec<LmiConstraint>>
where
    F: Fn(f64, &[f64]) -> Result<LmiConstraint> + Sync,
    S: Fn(&[f64]) -> Result<LmiConstraint> + Sync,
{
    if grid.taus.is_empty() || grid.rhos.is_empty() {
        return Err(Error::Config("empty grid".into()));
    }
    let points: Vec<(f64, &[f64])> = grid.flow_points().collect();
    let mut out: Vec<LmiConstraint> = points
        .par_iter()
        .map(|(t, r)| flow(*t, r))
        .collect::<Result<_>>()?;
    out.extend(
        grid.rhos
            .par_iter()
            .map(|r| stationary(r))
            .collect::<Result<Vec<_>>>()?,
    );
    let jumps: Vec<Vec<LmiConstraint>> = grid
        .pairs
        .par_iter()
        .map(|(i, j)| jump_conditions(cert, dwell, &grid.rhos[*i], &grid.rhos[*j]))
        .collect();
    for family in 0..5 {
        out.extend(jumps.iter().map(|j| j[family].clone()));
    }
    let pos: Vec<Vec<LmiConstraint>> = points
        .par_iter()
        .map(|(t, r)| positivity(cert, *t, r, margin))
        .collect();
    out.extend(pos.into_iter().flatten());
    Ok(out)
}

/// All analysis constraints on `grid`.
pub fn analysis_constraints(
    plant: &dyn PlantEval,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    grid: &Grid,
    cert: &CertAnsatz,
    margin: f64,
) -> Result<Vec<LmiConstraint>> {
    if cert.p.rows() != plant.n() {
        return Err(Error::Dimension(format!(
            "certificate is {0}x{0}, plant has n = {1}",
            cert.p.rows(),
            plant.n()
        )));
    }
    gridded_constraints(
        grid,
        cert,
        dwell,
        margin,
        |t, r| gamma_analysis(plant, delay, dwell, cert, t, r, margin),
        |r| gamma_stationary(plant, delay, dwell, cert, r, margin),
    )
}

/// Assembled analysis SDP with the symbolic certificate it was built from.
#[derive(Clone, Debug)]
pub struct AnalysisProblem {
    pub problem: SdpProblem,
    pub cert: CertAnsatz,
    pub grid: Grid,
}

pub fn assemble_analysis(
    plant: &dyn PlantEval,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    plan: &GridPlan,
    degrees: &CertDegrees,
    margin: f64,
) -> Result<AnalysisProblem> {
    let grid = build_grid(plan, dwell, plant.params())?;
    let mut b = ProblemBuilder::new();
    let cert = cert_ansatz(&mut b, plant.n(), plant.params().dim(), degrees, false)?;
    let cons = analysis_constraints(plant, delay, dwell, &grid, &cert, margin)?;
    Ok(AnalysisProblem {
        problem: b.finish(cons, Vec::new())?,
        cert,
        grid,
    })
}

/// How the control unknown `Ũ` depends on `(τ, ρ)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainStructure {
    /// Full monomial set up to the `u` degree caps.
    #[default]
    Free,
    /// Exactly `τŨ_a + Σ ρ_i Ũ_i`.
    TauRhoSplit,
}

/// Degree caps of the synthesis unknowns. `x.deg_tau` must be 0.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthDegrees {
    pub p: Degrees,
    pub q: Degrees,
    pub r: Degrees,
    pub u: Degrees,
    pub x: Degrees,
}

impl Default for SynthDegrees {
    fn default() -> Self {
        Self {
            p: Degrees::default(),
            q: Degrees::default(),
            r: Degrees::default(),
            u: Degrees::default(),
            x: Degrees::new(0, 1),
        }
    }
}

/// `γ²` as a constant or as an SDP unknown.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaSq {
    Fixed(f64),
    Var(VarId),
}

impl GammaSq {
    fn block(&self, m: usize) -> AffineMatrix {
        match self {
            GammaSq::Fixed(g) => AffineMatrix::constant(DMatrix::identity(m, m) * -g),
            GammaSq::Var(v) => AffineMatrix::var(*v, -DMatrix::identity(m, m)),
        }
    }
}

/// Symbolic synthesis unknowns.
#[derive(Clone, Debug)]
pub struct SynthAnsatz {
    pub cert: CertAnsatz,
    pub u: Ansatz,
    pub x: Ansatz,
    pub gamma_sq: GammaSq,
}

pub fn synth_ansatz(
    builder: &mut ProblemBuilder,
    sys: &LpvDelaySystem,
    degrees: &SynthDegrees,
    structure: GainStructure,
    gamma_sq: Option<f64>,
) -> Result<SynthAnsatz> {
    let (n, q, s) = (sys.n(), sys.q(), sys.params().dim());
    if degrees.x.deg_tau != 0 {
        return Err(Error::Config("X̃ must be clock-independent (x.deg_tau = 0)".into()));
    }
    degrees.u.check("U")?;
    degrees.x.check("X")?;
    let cert = cert_ansatz(
        builder,
        n,
        s,
        &CertDegrees {
            p: degrees.p,
            q: degrees.q,
            r: degrees.r,
        },
        true,
    )?;
    let uset = match structure {
        GainStructure::Free => degrees.u.set(),
        GainStructure::TauRhoSplit => MonomialSet::tau_rho_split(s),
    };
    let u = ansatz(builder, "Ut", q, n, s, &uset, false)?;
    let x = ansatz(builder, "Xt", n, n, s, &degrees.x.set(), false)?;
    let gamma_sq = match gamma_sq {
        Some(g) if g < 0.0 => return Err(Error::Domain(format!("gamma^2 = {g} is negative"))),
        Some(g) => GammaSq::Fixed(g),
        None => GammaSq::Var(builder.add_var("gamma_sq")),
    };
    Ok(SynthAnsatz { cert, u, x, gamma_sq })
}

/// The 7×7 synthesis block (sizes `n, n, n, m, r, n, n`) from plant matrices
/// and symbolic `P̃, P̃̇, Q̃, R̃, Ũ, X̃`.
#[allow(clippy::too_many_arguments)]
pub fn gamma_synthesis_blocks(
    m: &SystemMatrices,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    p: &AffineMatrix,
    pd: &AffineMatrix,
    q: &AffineMatrix,
    r: &AffineMatrix,
    u: &AffineMatrix,
    x: &AffineMatrix,
    gamma_sq: &GammaSq,
) -> Result<AffineMatrix> {
    let n = m.n();
    let (mm, rr, qq) = (m.e.ncols(), m.c.nrows(), m.b.ncols());
    for (name, blk, shape) in [
        ("Pt", p, (n, n)),
        ("dPt", pd, (n, n)),
        ("Qt", q, (n, n)),
        ("Rt", r, (n, n)),
        ("Ut", u, (qq, n)),
        ("Xt", x, (n, n)),
    ] {
        if blk.shape() != shape {
            return Err(Error::Dimension(format!("{name} is {:?}, expected {shape:?}", blk.shape())));
        }
    }
    let h = delay.h();
    let e = (-dwell.kappa() * h).exp();
    let c = |mat: &DMatrix<f64>| Some(AffineMatrix::constant(mat.clone()));

    let b11 = -(x.sym());
    let b12 = p + &x.lmul(&m.a) + u.lmul(&m.b);
    let b13 = x.lmul(&m.ad);
    let b17 = x + &(r * h);
    let upsilon = pd + q - (r * e) - p;
    let b25 = (x.lmul(&m.c) + u.lmul(&m.d)).transpose();
    let b33 = q * (-(1.0 - delay.mu()) * e) - r * e;
    let b35 = x.transpose().rmul(&m.cd.transpose());
    let sizes = [n, n, n, mm, rr, n, n];
    Ok(AffineMatrix::symmetric_blocks(
        &sizes,
        &[
            vec![Some(b11), Some(b12), Some(b13), c(&m.e), None, Some(x.clone()), Some(b17)],
            vec![Some(upsilon), Some(r * e), None, Some(b25), None, Some(-p)],
            vec![Some(b33), None, Some(b35), None, None],
            vec![Some(gamma_sq.block(mm)), c(&m.f.transpose()), None, None],
            vec![c(&-DMatrix::identity(rr, rr)), None, None],
            vec![Some(-p), Some(r * -h)],
            vec![Some(r * (-1.0 - 2.0 * h))],
        ],
    ))
}

fn synthesis_block(
    sys: &LpvDelaySystem,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    ans: &SynthAnsatz,
    tau: f64,
    rho: &[f64],
    stationary: bool,
) -> Result<AffineMatrix> {
    check_point(sys.params(), dwell, tau, rho)?;
    let m = sys.eval(rho)?;
    let v = ans.cert.values(tau, rho, stationary);
    gamma_synthesis_blocks(
        &m,
        delay,
        dwell,
        &v.p,
        &v.pd,
        &v.q,
        &v.r,
        &ans.u.eval(tau, rho),
        &ans.x.eval(tau, rho),
        &ans.gamma_sq,
    )
}

/// Flow condition `Γ̃(τ,ρ) ≺ 0` at one grid point.
pub fn gamma_synthesis(
    sys: &LpvDelaySystem,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    ans: &SynthAnsatz,
    tau: f64,
    rho: &[f64],
    margin: f64,
) -> Result<LmiConstraint> {
    let g = synthesis_block(sys, delay, dwell, ans, tau, rho, false)?;
    Ok(LmiConstraint::from_affine(
        &g,
        Sense::NegativeDefinite,
        margin,
        format!("flow tau={tau:.6e} rho={}", rho_label(rho)),
    ))
}

/// `Γ̃(T_D⁺, ρ) ≺ 0` with `P̃̇` dropped from `Υ̃`.
pub fn synthesis_stationary(
    sys: &LpvDelaySystem,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    ans: &SynthAnsatz,
    rho: &[f64],
    margin: f64,
) -> Result<LmiConstraint> {
    let g = synthesis_block(sys, delay, dwell, ans, dwell.t_dwell(), rho, true)?;
    Ok(LmiConstraint::from_affine(
        &g,
        Sense::NegativeDefinite,
        margin,
        format!("stationary rho={}", rho_label(rho)),
    ))
}

/// Stationary block at `ρ` followed by the five tilde jump conditions.
pub fn synthesis_boundary(
    sys: &LpvDelaySystem,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    ans: &SynthAnsatz,
    rho: &[f64],
    eta: &[f64],
    margin: f64,
) -> Result<Vec<LmiConstraint>> {
    let mut out = vec![synthesis_stationary(sys, delay, dwell, ans, rho, margin)?];
    out.extend(jump_conditions(&ans.cert, dwell, rho, eta));
    Ok(out)
}

/// All synthesis constraints on `grid`.
pub fn synthesis_constraints(
    sys: &LpvDelaySystem,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    grid: &Grid,
    ans: &SynthAnsatz,
    margin: f64,
) -> Result<Vec<LmiConstraint>> {
    gridded_constraints(
        grid,
        &ans.cert,
        dwell,
        margin,
        |t, r| gamma_synthesis(sys, delay, dwell, ans, t, r, margin),
        |r| synthesis_stationary(sys, delay, dwell, ans, r, margin),
    )
}

#[derive(Clone, Debug)]
pub struct SynthesisProblem {
    pub problem: SdpProblem,
    pub ans: SynthAnsatz,
    pub grid: Grid,
}

/// Assemble the synthesis SDP. With `gamma_sq = None`, `γ²` is an unknown
/// and the objective minimizes it.
#[allow(clippy::too_many_arguments)]
pub fn assemble_synthesis(
    sys: &LpvDelaySystem,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    plan: &GridPlan,
    degrees: &SynthDegrees,
    structure: GainStructure,
    gamma_sq: Option<f64>,
    margin: f64,
) -> Result<SynthesisProblem> {
    let grid = build_grid(plan, dwell, sys.params())?;
    let mut b = ProblemBuilder::new();
    let ans = synth_ansatz(&mut b, sys, degrees, structure, gamma_sq)?;
    let cons = synthesis_constraints(sys, delay, dwell, &grid, &ans, margin)?;
    let objective = match ans.gamma_sq {
        GammaSq::Var(v) => vec![(v, 1.0)],
        GammaSq::Fixed(_) => Vec::new(),
    };
    Ok(SynthesisProblem {
        problem: b.finish(cons, objective)?,
        ans,
        grid,
    })
}
