//! Plant, parameter set, delay class and dwell-time specification.
//!
//! The plant is
//!
//! ```text
//! ẋ(t) = A(ρ)x(t) + A_d(ρ)x(t − d(t)) + B(ρ)u(t) + E(ρ)w(t)
//! z(t) = C(ρ)x(t) + C_d(ρ)x(t − d(t)) + D(ρ)u(t) + F(ρ)w(t)
//! ```
//!
//! with `ρ(t)` piecewise constant in a box, jumps at least `T_D` apart, and
//! `0 ≤ d(t) ≤ h`, `ḋ ≤ μ < 1`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::poly::MatrixPoly;

/// Axis-aligned parameter box `Π [lower_i, upper_i]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ParamBoxRepr", into = "ParamBoxRepr")]
pub struct ParamBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct ParamBoxRepr {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl TryFrom<ParamBoxRepr> for ParamBox {
    type Error = Error;

    fn try_from(r: ParamBoxRepr) -> Result<Self> {
        ParamBox::new(r.lower, r.upper)
    }
}

impl From<ParamBox> for ParamBoxRepr {
    fn from(b: ParamBox) -> Self {
        ParamBoxRepr {
            lower: b.lower,
            upper: b.upper,
        }
    }
}

impl ParamBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::Domain(format!(
                "parameter box needs matching non-empty bounds, got {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !l.is_finite() || !u.is_finite() || l > u {
                return Err(Error::Domain(format!("invalid bounds [{l}, {u}] on axis {i}")));
            }
        }
        Ok(Self { lower, upper })
    }

    /// `[lo, hi]` in one dimension.
    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        Self::new(vec![lo], vec![hi])
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn contains(&self, rho: &[f64]) -> bool {
        // a few ulps of slack so grid points computed as lo + k·step stay inside
        rho.len() == self.dim()
            && rho.iter().zip(self.lower.iter().zip(&self.upper)).all(|(r, (l, u))| {
                let slack = 1e-12 * (1.0 + l.abs().max(u.abs()));
                *r >= l - slack && *r <= u + slack
            })
    }

    pub fn check(&self, rho: &[f64]) -> Result<()> {
        if self.contains(rho) {
            Ok(())
        } else {
            Err(Error::Domain(format!(
                "rho = {rho:?} outside box {:?}..{:?}",
                self.lower, self.upper
            )))
        }
    }

    pub fn with_upper(&self, axis: usize, value: f64) -> Result<Self> {
        let mut upper = self.upper.clone();
        upper[axis] = value;
        Self::new(self.lower.clone(), upper)
    }
}

/// Delay class: `0 ≤ d(t) ≤ h`, `ḋ(t) ≤ μ < 1`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DelaySpecRepr", into = "DelaySpecRepr")]
pub struct DelaySpec {
    h: f64,
    mu: f64,
}

#[derive(Serialize, Deserialize)]
struct DelaySpecRepr {
    h: f64,
    mu: f64,
}

impl TryFrom<DelaySpecRepr> for DelaySpec {
    type Error = Error;

    fn try_from(r: DelaySpecRepr) -> Result<Self> {
        DelaySpec::new(r.h, r.mu)
    }
}

impl From<DelaySpec> for DelaySpecRepr {
    fn from(d: DelaySpec) -> Self {
        DelaySpecRepr { h: d.h, mu: d.mu }
    }
}

impl DelaySpec {
    pub fn new(h: f64, mu: f64) -> Result<Self> {
        if !(h >= 0.0 && h.is_finite()) {
            return Err(Error::Domain(format!("delay bound h = {h} must be finite and ≥ 0")));
        }
        if !(0.0..1.0).contains(&mu) {
            return Err(Error::Domain(format!("delay-rate bound mu = {mu} must lie in [0, 1)")));
        }
        Ok(Self { h, mu })
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
}

/// Minimum dwell time `T_D` and exponential weight `κ`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DwellSpecRepr", into = "DwellSpecRepr")]
pub struct DwellSpec {
    t_dwell: f64,
    kappa: f64,
}

#[derive(Serialize, Deserialize)]
struct DwellSpecRepr {
    t_dwell: f64,
    kappa: f64,
}

impl TryFrom<DwellSpecRepr> for DwellSpec {
    type Error = Error;

    fn try_from(r: DwellSpecRepr) -> Result<Self> {
        DwellSpec::new(r.t_dwell, r.kappa)
    }
}

impl From<DwellSpec> for DwellSpecRepr {
    fn from(d: DwellSpec) -> Self {
        DwellSpecRepr {
            t_dwell: d.t_dwell,
            kappa: d.kappa,
        }
    }
}

impl DwellSpec {
    pub fn new(t_dwell: f64, kappa: f64) -> Result<Self> {
        if !(t_dwell > 0.0 && t_dwell.is_finite()) {
            return Err(Error::Domain(format!("dwell time {t_dwell} must be positive")));
        }
        if !(kappa > 0.0 && kappa.is_finite()) {
            return Err(Error::Domain(format!("kappa = {kappa} must be positive")));
        }
        Ok(Self { t_dwell, kappa })
    }

    pub fn t_dwell(&self) -> f64 {
        self.t_dwell
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `τ = min{t − t_k, T_D}`
    pub fn clock(&self, since_switch: f64) -> f64 {
        since_switch.clamp(0.0, self.t_dwell)
    }
}

/// The eight plant matrices at one parameter value.
#[derive(Clone, Debug, PartialEq)]
pub struct SystemMatrices {
    pub a: DMatrix<f64>,
    pub ad: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub cd: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

impl SystemMatrices {
    pub fn n(&self) -> usize {
        self.a.nrows()
    }

    pub fn max_abs(&self) -> f64 {
        [&self.a, &self.ad, &self.b, &self.c, &self.cd, &self.d, &self.e, &self.f]
            .iter()
            .map(|m| m.amax())
            .fold(0.0, f64::max)
    }
}

/// Polynomial LPV plant with a delayed state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "SystemRepr", into = "SystemRepr")]
pub struct LpvDelaySystem {
    n: usize,
    m: usize,
    q: usize,
    r: usize,
    a: MatrixPoly,
    ad: MatrixPoly,
    b: MatrixPoly,
    c: MatrixPoly,
    cd: MatrixPoly,
    d: MatrixPoly,
    e: MatrixPoly,
    f: MatrixPoly,
    params: ParamBox,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemRepr {
    n: usize,
    m: usize,
    q: usize,
    r: usize,
    params: ParamBox,
    matrices: MatricesRepr,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
#[allow(non_snake_case)]
struct MatricesRepr {
    A: MatrixPoly,
    Ad: MatrixPoly,
    B: MatrixPoly,
    C: MatrixPoly,
    Cd: MatrixPoly,
    D: MatrixPoly,
    E: MatrixPoly,
    F: MatrixPoly,
}

impl TryFrom<SystemRepr> for LpvDelaySystem {
    type Error = Error;

    fn try_from(r: SystemRepr) -> Result<Self> {
        let m = r.matrices;
        LpvDelaySystem::new(SystemParts {
            a: m.A,
            ad: m.Ad,
            b: m.B,
            c: m.C,
            cd: m.Cd,
            d: m.D,
            e: m.E,
            f: m.F,
            params: r.params,
        })
        .and_then(|s| {
            if (s.n, s.m, s.q, s.r) != (r.n, r.m, r.q, r.r) {
                Err(Error::Dimension(format!(
                    "declared dimensions (n,m,q,r) = ({},{},{},{}) do not match matrices ({},{},{},{})",
                    r.n, r.m, r.q, r.r, s.n, s.m, s.q, s.r
                )))
            } else {
                Ok(s)
            }
        })
    }
}

impl From<LpvDelaySystem> for SystemRepr {
    fn from(s: LpvDelaySystem) -> Self {
        SystemRepr {
            n: s.n,
            m: s.m,
            q: s.q,
            r: s.r,
            params: s.params,
            matrices: MatricesRepr {
                A: s.a,
                Ad: s.ad,
                B: s.b,
                C: s.c,
                Cd: s.cd,
                D: s.d,
                E: s.e,
                F: s.f,
            },
        }
    }
}

/// Constructor input for [`LpvDelaySystem`].
#[derive(Clone, Debug)]
pub struct SystemParts {
    pub a: MatrixPoly,
    pub ad: MatrixPoly,
    pub b: MatrixPoly,
    pub c: MatrixPoly,
    pub cd: MatrixPoly,
    pub d: MatrixPoly,
    pub e: MatrixPoly,
    pub f: MatrixPoly,
    pub params: ParamBox,
}

impl SystemParts {
    /// Parameter-independent plant.
    pub fn constant(m: SystemMatrices, params: ParamBox) -> Self {
        let s = params.dim();
        let c = |x: DMatrix<f64>| MatrixPoly::constant(x, s);
        Self {
            a: c(m.a),
            ad: c(m.ad),
            b: c(m.b),
            c: c(m.c),
            cd: c(m.cd),
            d: c(m.d),
            e: c(m.e),
            f: c(m.f),
            params,
        }
    }
}

impl LpvDelaySystem {
    pub fn new(p: SystemParts) -> Result<Self> {
        let n = p.a.rows();
        let q = p.b.cols();
        let m = p.e.cols();
        let r = p.c.rows();
        let s = p.params.dim();
        let expect = [
            ("A", &p.a, n, n),
            ("Ad", &p.ad, n, n),
            ("B", &p.b, n, q),
            ("E", &p.e, n, m),
            ("C", &p.c, r, n),
            ("Cd", &p.cd, r, n),
            ("D", &p.d, r, q),
            ("F", &p.f, r, m),
        ];
        for (name, poly, rows, cols) in expect {
            if (poly.rows(), poly.cols()) != (rows, cols) {
                return Err(Error::Dimension(format!(
                    "{name} is {}x{}, expected {rows}x{cols}",
                    poly.rows(),
                    poly.cols()
                )));
            }
            if poly.params() != s {
                return Err(Error::Dimension(format!(
                    "{name} uses {} parameters, box has {s}",
                    poly.params()
                )));
            }
            if !poly.is_tau_independent() {
                return Err(Error::Domain(format!("plant matrix {name} depends on the clock")));
            }
        }
        if n == 0 {
            return Err(Error::Dimension("state dimension must be positive".into()));
        }
        Ok(Self {
            n,
            m,
            q,
            r,
            a: p.a,
            ad: p.ad,
            b: p.b,
            c: p.c,
            cd: p.cd,
            d: p.d,
            e: p.e,
            f: p.f,
            params: p.params,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn q(&self) -> usize {
        self.q
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn params(&self) -> &ParamBox {
        &self.params
    }

    pub fn parts(&self) -> SystemParts {
        SystemParts {
            a: self.a.clone(),
            ad: self.ad.clone(),
            b: self.b.clone(),
            c: self.c.clone(),
            cd: self.cd.clone(),
            d: self.d.clone(),
            e: self.e.clone(),
            f: self.f.clone(),
            params: self.params.clone(),
        }
    }

    /// Same plant on a different parameter box.
    pub fn with_params(&self, params: ParamBox) -> Result<Self> {
        let mut p = self.parts();
        p.params = params;
        Self::new(p)
    }

    pub fn eval(&self, rho: &[f64]) -> Result<SystemMatrices> {
        self.params.check(rho)?;
        self.eval_unchecked(rho)
    }

    /// Evaluate without the box check; used by simulations of audits outside
    /// the certified box.
    pub fn eval_unchecked(&self, rho: &[f64]) -> Result<SystemMatrices> {
        Ok(SystemMatrices {
            a: self.a.eval(0.0, rho)?,
            ad: self.ad.eval(0.0, rho)?,
            b: self.b.eval(0.0, rho)?,
            c: self.c.eval(0.0, rho)?,
            cd: self.cd.eval(0.0, rho)?,
            d: self.d.eval(0.0, rho)?,
            e: self.e.eval(0.0, rho)?,
            f: self.f.eval(0.0, rho)?,
        })
    }
}

/// Anything that yields plant matrices at a clock/parameter point: the open
/// plant (clock-independent) or a closed loop under a clock-dependent gain.
pub trait PlantEval: Sync {
    fn n(&self) -> usize;

    fn params(&self) -> &ParamBox;

    fn matrices(&self, tau: f64, rho: &[f64]) -> Result<SystemMatrices>;
}

impl PlantEval for LpvDelaySystem {
    fn n(&self) -> usize {
        self.n
    }

    fn params(&self) -> &ParamBox {
        &self.params
    }

    fn matrices(&self, _tau: f64, rho: &[f64]) -> Result<SystemMatrices> {
        self.eval(rho)
    }
}

/// All eight plant matrices at `rho`.
pub fn eval_system(sys: &LpvDelaySystem, rho: &[f64]) -> Result<SystemMatrices> {
    sys.eval(rho)
}

/// Right-continuous piecewise-constant parameter trajectory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PwcTrajectory {
    switch_times: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PwcTrajectory {
    /// Checks `t_0 = 0`, strictly increasing switch times and equal lengths.
    pub fn new(switch_times: Vec<f64>, values: Vec<Vec<f64>>) -> Result<Self> {
        if switch_times.is_empty() || switch_times.len() != values.len() {
            return Err(Error::Domain("trajectory needs one value per switch time".into()));
        }
        if switch_times[0] != 0.0 {
            return Err(Error::Domain("first switch time must be 0".into()));
        }
        if switch_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Domain("switch times must be strictly increasing".into()));
        }
        let s = values[0].len();
        if values.iter().any(|v| v.len() != s) {
            return Err(Error::Domain("parameter values of mixed length".into()));
        }
        Ok(Self { switch_times, values })
    }

    /// Checks the dwell constraint and box membership as well.
    pub fn admissible(switch_times: Vec<f64>, values: Vec<Vec<f64>>, dwell: &DwellSpec, params: &ParamBox) -> Result<Self> {
        let tr = Self::new(switch_times, values)?;
        tr.check_admissible(dwell, params)?;
        Ok(tr)
    }

    pub fn check_admissible(&self, dwell: &DwellSpec, params: &ParamBox) -> Result<()> {
        let slack = 1e-12 * dwell.t_dwell().max(1.0);
        if let Some(w) = self
            .switch_times
            .windows(2)
            .find(|w| w[1] - w[0] < dwell.t_dwell() - slack)
        {
            return Err(Error::Domain(format!(
                "switches at {} and {} are closer than the dwell time {}",
                w[0],
                w[1],
                dwell.t_dwell()
            )));
        }
        for v in &self.values {
            params.check(v)?;
        }
        Ok(())
    }

    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn values(&self) -> &[Vec<f64>] {
        &self.values
    }

    /// Index `k` with `t ∈ [t_k, t_{k+1})`.
    pub fn segment(&self, t: f64) -> Result<usize> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("trajectory queried at t = {t} < 0")));
        }
        Ok(self.switch_times.partition_point(|s| *s <= t) - 1)
    }

    pub fn value(&self, t: f64) -> Result<&[f64]> {
        Ok(&self.values[self.segment(t)?])
    }

    /// Time elapsed since the last switch.
    pub fn since_switch(&self, t: f64) -> Result<f64> {
        Ok(t - self.switch_times[self.segment(t)?])
    }
}

/// `α_k` for the segment containing `t`.
pub fn trajectory_value(traj: &PwcTrajectory, t: f64) -> Result<Vec<f64>> {
    traj.value(t).map(<[f64]>::to_vec)
}

/// Declarative plant file: system, delay class and dwell specification.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantFile {
    pub system: LpvDelaySystem,
    pub delay: DelaySpec,
    pub dwell: DwellSpec,
}

impl PlantFile {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plant serialization cannot fail")
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use nalgebra::dmatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn example_one_plant_at_zero() {
        let sys = examples::example1_system(0.76).unwrap();
        let m = eval_system(&sys, &[0.0]).unwrap();
        assert_eq!(m.a, dmatrix![0.0, 1.0; -2.0, -1.0]);
        assert_eq!(m.ad, dmatrix![-1.0, 0.0; -1.0, -1.0]);
    }

    #[test]
    fn example_two_plant_at_one() {
        let sys = examples::example2_system(1.0).unwrap();
        let m = eval_system(&sys, &[1.0]).unwrap();
        // 2 − ρ, −0.5 − 0.5ρ; −1, −2 + 0.1ρ
        assert_eq!(m.a, dmatrix![1.0, -1.0; -1.0, -1.9]);
        assert_eq!(m.ad, dmatrix![-1.0, 0.0; 0.05 - 0.45, -1.0]);
    }

    #[test]
    fn constant_system_ignores_rho() {
        let m = SystemMatrices {
            a: dmatrix![-1.0],
            ad: dmatrix![0.5],
            b: dmatrix![1.0],
            c: dmatrix![1.0],
            cd: dmatrix![0.0],
            d: dmatrix![0.0],
            e: dmatrix![1.0],
            f: dmatrix![0.0],
        };
        let sys = LpvDelaySystem::new(SystemParts::constant(m.clone(), ParamBox::interval(-3.0, 3.0).unwrap())).unwrap();
        for rho in [-3.0, 0.1, 2.9] {
            assert_eq!(eval_system(&sys, &[rho]).unwrap(), m);
        }
    }

    #[test]
    fn eval_outside_box_is_a_domain_error() {
        let sys = examples::example1_system(0.5).unwrap();
        assert!(matches!(eval_system(&sys, &[0.6]), Err(Error::Domain(_))));
    }

    #[test]
    fn eval_is_affine_for_degree_one_plants() {
        let sys = examples::example2_system(1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let (r1, r2, l): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let mix = eval_system(&sys, &[l * r1 + (1.0 - l) * r2]).unwrap();
            let a = eval_system(&sys, &[r1]).unwrap();
            let b = eval_system(&sys, &[r2]).unwrap();
            let pairs = [(&mix.a, &a.a, &b.a), (&mix.ad, &a.ad, &b.ad), (&mix.b, &a.b, &b.b)];
            for (m, x, y) in pairs {
                assert!((m - (x * l + y * (1.0 - l))).amax() < 1e-13);
            }
        }
    }

    #[test]
    fn trajectory_lookup() {
        let tr = PwcTrajectory::new(vec![0.0, 1.0], vec![vec![0.3], vec![0.8]]).unwrap();
        assert_eq!(trajectory_value(&tr, 0.5).unwrap(), vec![0.3]);
        assert_eq!(trajectory_value(&tr, 1.0).unwrap(), vec![0.8]);
        assert!(matches!(trajectory_value(&tr, -0.1), Err(Error::Domain(_))));
    }

    #[test]
    fn trajectory_lookup_matches_linear_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut times = vec![0.0];
        for _ in 0..9 {
            let last = *times.last().unwrap();
            times.push(last + rng.random_range(0.1..1.0));
        }
        let values: Vec<Vec<f64>> = (0..10).map(|_| vec![rng.random()]).collect();
        let tr = PwcTrajectory::new(times.clone(), values.clone()).unwrap();
        let end = times[9] + 1.0;
        for k in 0..2000 {
            let t = end * k as f64 / 1999.0;
            let mut idx = 0;
            for (i, s) in times.iter().enumerate() {
                if *s <= t {
                    idx = i;
                }
            }
            assert_eq!(trajectory_value(&tr, t).unwrap(), values[idx]);
        }
    }

    #[test]
    fn clock_stays_within_dwell() {
        let dwell = DwellSpec::new(0.3, 0.1).unwrap();
        let tr = PwcTrajectory::new(vec![0.0, 0.5, 1.7], vec![vec![0.0], vec![1.0], vec![0.5]]).unwrap();
        for k in 0..500 {
            let t = k as f64 * 0.01;
            let tau = dwell.clock(tr.since_switch(t).unwrap());
            assert!((0.0..=0.3).contains(&tau));
        }
    }

    #[test]
    fn dwell_violation_is_reported() {
        let dwell = DwellSpec::new(0.5, 0.1).unwrap();
        let b = ParamBox::interval(0.0, 1.0).unwrap();
        let r = PwcTrajectory::admissible(vec![0.0, 0.2], vec![vec![0.0], vec![1.0]], &dwell, &b);
        assert!(r.is_err());
    }

    #[test]
    fn spec_validation() {
        assert!(DelaySpec::new(0.5, 1.0).is_err());
        assert!(DelaySpec::new(-0.1, 0.0).is_err());
        assert!(DwellSpec::new(0.0, 1.0).is_err());
        assert!(DwellSpec::new(1.0, 0.0).is_err());
        assert!(ParamBox::new(vec![1.0], vec![0.0]).is_err());
        assert!(ParamBox::new(vec![], vec![]).is_err());
    }

    #[test]
    fn plant_file_round_trip() {
        let pf = PlantFile {
            system: examples::example2_system(1.0).unwrap(),
            delay: DelaySpec::new(0.2, 0.9).unwrap(),
            dwell: DwellSpec::new(0.01, 1e-8).unwrap(),
        };
        let once = PlantFile::from_json(&pf.to_json()).unwrap();
        assert_eq!(once, pf);
        let twice = PlantFile::from_json(&once.to_json()).unwrap();
        assert_eq!(twice, once);
    }

    #[test]
    fn plant_file_rejects_clock_dependent_entries() {
        let mut parts = examples::example1_system(0.5).unwrap().parts();
        parts.a.add_term(vec![1, 0], DMatrix::identity(2, 2)).unwrap();
        assert!(LpvDelaySystem::new(parts).is_err());
    }
}
