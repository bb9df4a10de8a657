//! Fixed-step simulation of the delay system in open or closed loop.
//!
//! The integrator is classical RK4. Delayed states come from a dense history:
//! every accepted node stores `x` together with the one-sided derivatives on
//! both sides, and lookups between nodes use cubic Hermite interpolation.
//! Steps are split at parameter switches, at `t_k + T_D` (where the clock
//! saturates), at the instant where `t − d(t)` crosses 0 and at disturbance
//! discontinuities, so each step sees smooth dynamics.
//!
//! When `d(t)` is shorter than the current step, the delayed query falls
//! inside the step being computed and is extrapolated to first order from the
//! last node.

mod consensus;
mod lyapunov;
mod pwc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{DelaySpec, DwellSpec, LpvDelaySystem, PwcTrajectory};
use crate::synthesis::GainSchedule;

pub use consensus::{build_consensus, disagreement, ConsensusNetwork, NetworkLoop};
pub use lyapunov::{jensen_check, lyapunov_trace, JensenCase, JensenReport, LyapunovTrace, MonotonicityReport};
pub use pwc::{gen_pwc_trajectory, Hold};

/// Time-varying delay `d(t)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DelayFn {
    Constant { d: f64 },
    /// `offset + amplitude·sin(omega·t + phase)`
    Sinusoid {
        offset: f64,
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
    },
}

impl DelayFn {
    pub fn eval(&self, t: f64) -> f64 {
        match *self {
            DelayFn::Constant { d } => d,
            DelayFn::Sinusoid {
                offset,
                amplitude,
                omega,
                phase,
            } => offset + amplitude * (omega * t + phase).sin(),
        }
    }

    /// Check `0 ≤ d ≤ h` and `ḋ ≤ μ` by sampling `[0, horizon]`.
    pub fn validate(&self, delay: &DelaySpec, horizon: f64) -> Result<()> {
        let n = ((horizon / 1e-3).ceil() as usize).clamp(1000, 1_000_000);
        let step = horizon.max(1e-9) / n as f64;
        let slack = 1e-9;
        for k in 0..=n {
            let t = k as f64 * step;
            let d = self.eval(t);
            if !(d >= -slack && d <= delay.h() + slack) {
                return Err(Error::Config(format!("delay d({t}) = {d} outside [0, {}]", delay.h())));
            }
            if k < n {
                let rate = (self.eval(t + step) - d) / step;
                if rate > delay.mu() + 1e-6 {
                    return Err(Error::Config(format!(
                        "delay rate {rate} at t = {t} exceeds mu = {}",
                        delay.mu()
                    )));
                }
            }
        }
        Ok(())
    }

    /// First `t > 0` with `t − d(t) = 0`, if `d(0) > 0`.
    fn history_crossing(&self) -> Option<f64> {
        let d0 = self.eval(0.0);
        if d0 <= 0.0 {
            return None;
        }
        let g = |t: f64| t - self.eval(t);
        let mut hi = d0.max(1e-12);
        while g(hi) < 0.0 {
            hi *= 2.0;
            if hi > 1e9 {
                return None;
            }
        }
        let mut lo = 0.0;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(mid) < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Some(hi)
    }
}

/// Exogenous input `w(t)`, the same signal on every channel.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Disturbance {
    Zero,
    /// `amplitude` for `t ≥ start`
    Step {
        #[serde(default = "one")]
        amplitude: f64,
        #[serde(default)]
        start: f64,
    },
    /// `amplitude` on `[start, end)`
    Pulse { amplitude: f64, start: f64, end: f64 },
    /// `amplitude·sin(omega·t)` on `[0, end)`
    Sine { amplitude: f64, omega: f64, end: f64 },
    /// Piecewise-constant uniform noise in `[−amplitude, amplitude]`, new
    /// value every `hold`, zero after `end`. Channels draw independently.
    Noise { amplitude: f64, hold: f64, end: f64, seed: u64 },
}

fn one() -> f64 {
    1.0
}

impl Disturbance {
    /// Unit step at `t = 0`.
    pub fn unit_step() -> Self {
        Disturbance::Step {
            amplitude: 1.0,
            start: 0.0,
        }
    }

    fn breakpoints(&self, horizon: f64) -> Vec<f64> {
        match *self {
            Disturbance::Zero => vec![],
            Disturbance::Step { start, .. } => vec![start],
            Disturbance::Pulse { start, end, .. } => vec![start, end],
            Disturbance::Sine { end, .. } => vec![end],
            Disturbance::Noise { hold, end, .. } => {
                let stop = end.min(horizon);
                let mut v = Vec::new();
                let mut k = 1;
                while (k as f64) * hold < stop {
                    v.push(k as f64 * hold);
                    k += 1;
                }
                v.push(end);
                v
            }
        }
    }
}

/// Evaluates a [`Disturbance`] for `m` channels; noise values are drawn once.
#[derive(Clone, Debug)]
pub struct DisturbanceSignal {
    kind: Disturbance,
    m: usize,
    noise: Vec<DVector<f64>>,
}

impl DisturbanceSignal {
    pub fn new(kind: &Disturbance, m: usize, horizon: f64) -> Result<Self> {
        let noise = match *kind {
            Disturbance::Noise { amplitude, hold, end, seed } => {
                if !(hold > 0.0) {
                    return Err(Error::Config("noise hold must be positive".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let count = (end.min(horizon) / hold).ceil().max(0.0) as usize + 1;
                (0..count)
                    .map(|_| DVector::from_fn(m, |_, _| amplitude * rng.random_range(-1.0..=1.0)))
                    .collect()
            }
            _ => Vec::new(),
        };
        Ok(Self {
            kind: kind.clone(),
            m,
            noise,
        })
    }

    pub fn eval(&self, t: f64) -> DVector<f64> {
        let c = |v: f64| DVector::from_element(self.m, v);
        match self.kind {
            Disturbance::Zero => c(0.0),
            Disturbance::Step { amplitude, start } => c(if t >= start { amplitude } else { 0.0 }),
            Disturbance::Pulse { amplitude, start, end } => c(if t >= start && t < end { amplitude } else { 0.0 }),
            Disturbance::Sine { amplitude, omega, end } => c(if t < end { amplitude * (omega * t).sin() } else { 0.0 }),
            Disturbance::Noise { hold, end, .. } => {
                if t >= end || t < 0.0 {
                    c(0.0)
                } else {
                    let k = ((t / hold).floor() as usize).min(self.noise.len() - 1);
                    self.noise[k].clone()
                }
            }
        }
    }
}

/// Initial function `φ` on `[−h, 0]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialHistory {
    Constant { x0: Vec<f64> },
    /// Piecewise-linear through the samples; times ascending, covering `[−h, 0]`.
    Sampled { times: Vec<f64>, values: Vec<Vec<f64>> },
}

impl InitialHistory {
    pub fn constant(x0: &[f64]) -> Self {
        InitialHistory::Constant { x0: x0.to_vec() }
    }

    fn dim(&self) -> usize {
        match self {
            InitialHistory::Constant { x0 } => x0.len(),
            InitialHistory::Sampled { values, .. } => values.first().map_or(0, Vec::len),
        }
    }

    fn validate(&self, n: usize, h: f64) -> Result<()> {
        if self.dim() != n {
            return Err(Error::Config(format!("initial history has dimension {}, state has {n}", self.dim())));
        }
        if let InitialHistory::Sampled { times, values } = self {
            if times.len() != values.len() || times.is_empty() {
                return Err(Error::Config("sampled history needs one value per time".into()));
            }
            if values.iter().any(|v| v.len() != n) {
                return Err(Error::Config("sampled history values of mixed length".into()));
            }
            if times.windows(2).any(|w| !(w[1] > w[0])) {
                return Err(Error::Config("sampled history times must increase".into()));
            }
            if times[0] > -h + 1e-12 || *times.last().unwrap() != 0.0 {
                return Err(Error::Config(format!("sampled history must cover [{}, 0]", -h)));
            }
        }
        Ok(())
    }

    fn eval(&self, s: f64) -> DVector<f64> {
        match self {
            InitialHistory::Constant { x0 } => DVector::from_column_slice(x0),
            InitialHistory::Sampled { times, values } => {
                let k = times.partition_point(|t| *t <= s);
                if k == 0 {
                    return DVector::from_column_slice(&values[0]);
                }
                if k == times.len() {
                    return DVector::from_column_slice(&values[k - 1]);
                }
                let (t0, t1) = (times[k - 1], times[k]);
                let l = (s - t0) / (t1 - t0);
                DVector::from_column_slice(&values[k - 1]) * (1.0 - l) + DVector::from_column_slice(&values[k]) * l
            }
        }
    }

    fn derivative(&self, s: f64) -> DVector<f64> {
        match self {
            InitialHistory::Constant { x0 } => DVector::zeros(x0.len()),
            InitialHistory::Sampled { times, values } => {
                let k = times.partition_point(|t| *t <= s).clamp(1, times.len() - 1);
                if times.len() < 2 {
                    return DVector::zeros(values[0].len());
                }
                let (t0, t1) = (times[k - 1], times[k]);
                (DVector::from_column_slice(&values[k]) - DVector::from_column_slice(&values[k - 1])) / (t1 - t0)
            }
        }
    }
}

fn default_blowup() -> f64 {
    1e8
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub dt: f64,
    pub horizon: f64,
    pub history: InitialHistory,
    pub delay_fn: DelayFn,
    pub disturbance: Disturbance,
    #[serde(default)]
    pub seed: u64,
    /// State norm treated as divergence.
    #[serde(default = "default_blowup")]
    pub blowup_norm: f64,
}

impl SimConfig {
    pub fn validate(&self, n: usize, delay: &DelaySpec) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Config(format!("dt = {} must be positive", self.dt)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(Error::Config(format!("horizon = {} must be positive", self.horizon)));
        }
        if !(self.blowup_norm > 0.0) {
            return Err(Error::Config("blowup_norm must be positive".into()));
        }
        self.history.validate(n, delay.h())?;
        self.delay_fn.validate(delay, self.horizon)
    }
}

/// Loop matrices at one `(τ, ρ)`:
/// `ẋ = A_cl x + A_d x_d + E w`, `u = K x`, `z = C_cl x + C_d x_d + F w`.
#[derive(Clone, Debug, PartialEq)]
pub struct LoopMatrices {
    pub a_cl: DMatrix<f64>,
    pub ad: DMatrix<f64>,
    pub e: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub c_cl: DMatrix<f64>,
    pub cd: DMatrix<f64>,
    pub f: DMatrix<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dims {
    pub n: usize,
    pub m: usize,
    pub q: usize,
    pub r: usize,
    pub s: usize,
}

/// Anything the integrator can run: a plant with optional gain, or a network.
pub trait LoopModel: Sync {
    fn dims(&self) -> Dims;

    fn delay(&self) -> &DelaySpec;

    fn t_dwell(&self) -> f64;

    /// Matrices for parameter value `rho` at clock `tau ∈ [0, T_D]`.
    fn matrices(&self, tau: f64, rho: &[f64]) -> Result<LoopMatrices>;
}

/// `Σ_s` under `u = K(τ, ρ)x`, or open loop when `gain` is `None`.
pub struct PlantLoop<'a> {
    pub sys: &'a LpvDelaySystem,
    pub delay: DelaySpec,
    pub dwell: DwellSpec,
    pub gain: Option<&'a GainSchedule>,
}

impl LoopModel for PlantLoop<'_> {
    fn dims(&self) -> Dims {
        Dims {
            n: self.sys.n(),
            m: self.sys.m(),
            q: self.sys.q(),
            r: self.sys.r(),
            s: self.sys.params().dim(),
        }
    }

    fn delay(&self) -> &DelaySpec {
        &self.delay
    }

    fn t_dwell(&self) -> f64 {
        self.dwell.t_dwell()
    }

    fn matrices(&self, tau: f64, rho: &[f64]) -> Result<LoopMatrices> {
        let m = self.sys.eval(rho)?;
        let k = match self.gain {
            Some(g) => g.gain(tau, rho)?,
            None => DMatrix::zeros(self.sys.q(), self.sys.n()),
        };
        Ok(LoopMatrices {
            a_cl: &m.a + &m.b * &k,
            c_cl: &m.c + &m.d * &k,
            ad: m.ad,
            e: m.e,
            cd: m.cd,
            f: m.f,
            k,
        })
    }
}

/// Sampled run. All per-sample arrays have the same length as `times`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub dims: Dims,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// `ẋ` at each sample, right-hand limit (integrator's own evaluation).
    pub derivs: Vec<Vec<f64>>,
    /// Left-hand limit of `ẋ`; differs from `derivs` where the dynamics switch.
    pub derivs_left: Vec<Vec<f64>>,
    pub inputs: Vec<Vec<f64>>,
    pub outputs: Vec<Vec<f64>>,
    pub disturbance: Vec<Vec<f64>>,
    pub param: Vec<Vec<f64>>,
    pub clock: Vec<f64>,
    pub delay: Vec<f64>,
    /// Initial function sampled on `[−h, 0)`.
    pub pre_times: Vec<f64>,
    pub pre_states: Vec<Vec<f64>>,
    pub pre_derivs: Vec<Vec<f64>>,
    pub switch_times: Vec<f64>,
    pub t_dwell: f64,
    pub diverged: bool,
    pub blowup_time: Option<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn state_norms(&self) -> Vec<f64> {
        self.states.iter().map(|x| x.iter().map(|v| v * v).sum::<f64>().sqrt()).collect()
    }

    /// Column order: `t, x…, u…, z…, w…, rho…, tau`.
    pub fn csv_header(&self) -> String {
        let d = &self.dims;
        let mut cols = vec!["t".to_string()];
        let mut add = |p: &str, k: usize| cols.extend((1..=k).map(|i| format!("{p}{i}")));
        add("x", d.n);
        add("u", d.q);
        add("z", d.r);
        add("w", d.m);
        add("rho", d.s);
        cols.push("tau".into());
        cols.join(",")
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{}", self.csv_header())?;
        for i in 0..self.len() {
            let mut row = vec![self.times[i]];
            row.extend(&self.states[i]);
            row.extend(&self.inputs[i]);
            row.extend(&self.outputs[i]);
            row.extend(&self.disturbance[i]);
            row.extend(&self.param[i]);
            row.push(self.clock[i]);
            let line: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }
}

struct History<'a> {
    phi: &'a InitialHistory,
    h: f64,
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
    dx_right: Vec<DVector<f64>>,
    dx_left: Vec<DVector<f64>>,
}

fn hermite(t0: f64, t1: f64, x0: &DVector<f64>, d0: &DVector<f64>, x1: &DVector<f64>, d1: &DVector<f64>, s: f64) -> DVector<f64> {
    let h = t1 - t0;
    let u = (s - t0) / h;
    let u2 = u * u;
    let u3 = u2 * u;
    let h00 = 2.0 * u3 - 3.0 * u2 + 1.0;
    let h10 = u3 - 2.0 * u2 + u;
    let h01 = -2.0 * u3 + 3.0 * u2;
    let h11 = u3 - u2;
    x0 * h00 + d0 * (h10 * h) + x1 * h01 + d1 * (h11 * h)
}

impl History<'_> {
    fn at(&self, s: f64) -> Result<DVector<f64>> {
        let eps = 1e-12 * (1.0 + s.abs());
        if s < -self.h - eps {
            return Err(Error::Config(format!("delayed lookup at {s} before the initial interval [{}, 0]", -self.h)));
        }
        if s < 0.0 {
            return Ok(self.phi.eval(s));
        }
        let last = self.times.len() - 1;
        let t_last = self.times[last];
        if s >= t_last - eps {
            let ds = (s - t_last).max(0.0);
            return Ok(if ds == 0.0 || self.dx_right.len() <= last {
                self.states[last].clone()
            } else {
                &self.states[last] + &self.dx_right[last] * ds
            });
        }
        let k = self.times.partition_point(|t| *t <= s);
        let j = k - 1;
        if (s - self.times[j]).abs() <= eps {
            return Ok(self.states[j].clone());
        }
        if (self.times[k] - s).abs() <= eps {
            return Ok(self.states[k].clone());
        }
        Ok(hermite(
            self.times[j],
            self.times[k],
            &self.states[j],
            &self.dx_right[j],
            &self.states[k],
            &self.dx_left[k],
            s,
        ))
    }
}

/// Sorted, deduplicated step grid: multiples of `dt` plus the breakpoints.
fn step_grid(dt: f64, horizon: f64, breakpoints: &[f64]) -> Vec<f64> {
    let mut pts: Vec<f64> = breakpoints.iter().copied().filter(|b| *b > 0.0 && *b < horizon).collect();
    pts.sort_by(f64::total_cmp);
    let count = (horizon / dt).round() as usize;
    let mut grid = Vec::with_capacity(count + pts.len() + 2);
    let mut bi = 0;
    let merge = 1e-9 * dt;
    for k in 0..=count + 1 {
        let t = (k as f64 * dt).min(horizon);
        while bi < pts.len() && pts[bi] <= t + merge {
            grid.push(pts[bi]);
            bi += 1;
        }
        if grid.last().is_none_or(|l| t - l > merge) {
            grid.push(t);
        }
        if t >= horizon {
            break;
        }
    }
    if *grid.last().unwrap() < horizon - merge {
        grid.push(horizon);
    }
    grid.dedup_by(|b, a| *b - *a <= merge);
    grid
}

/// `(ẋ, loop matrices, x_d, w)` at one stage.
type RhsEval = (DVector<f64>, LoopMatrices, DVector<f64>, DVector<f64>);

/// Integrate `model` along `traj` (`ρ(t)`) under `cfg`.
pub fn simulate(model: &dyn LoopModel, traj: &PwcTrajectory, cfg: &SimConfig) -> Result<Trajectory> {
    let dims = model.dims();
    cfg.validate(dims.n, model.delay())?;
    let td = model.t_dwell();
    let h = model.delay().h();
    if traj.values().iter().any(|v| v.len() != dims.s) {
        return Err(Error::Config(format!("parameter trajectory values must have length {}", dims.s)));
    }
    let wsig = DisturbanceSignal::new(&cfg.disturbance, dims.m, cfg.horizon)?;

    let mut bps: Vec<f64> = Vec::new();
    for &tk in traj.switch_times() {
        bps.push(tk);
        bps.push(tk + td);
    }
    bps.extend(cfg.disturbance.breakpoints(cfg.horizon));
    if let Some(c) = cfg.delay_fn.history_crossing() {
        bps.push(c);
    }
    let grid = step_grid(cfg.dt, cfg.horizon, &bps);

    let mut hist = History {
        phi: &cfg.history,
        h,
        times: vec![0.0],
        states: vec![cfg.history.eval(0.0)],
        dx_right: Vec::new(),
        dx_left: vec![cfg.history.derivative(0.0)],
    };

    let clock_at = |t: f64, seg: usize| (t - traj.switch_times()[seg]).clamp(0.0, td);

    let mut out = Trajectory {
        dims,
        times: Vec::with_capacity(grid.len()),
        states: Vec::with_capacity(grid.len()),
        derivs: Vec::with_capacity(grid.len()),
        derivs_left: Vec::new(),
        inputs: Vec::with_capacity(grid.len()),
        outputs: Vec::with_capacity(grid.len()),
        disturbance: Vec::with_capacity(grid.len()),
        param: Vec::with_capacity(grid.len()),
        clock: Vec::with_capacity(grid.len()),
        delay: Vec::with_capacity(grid.len()),
        pre_times: Vec::new(),
        pre_states: Vec::new(),
        pre_derivs: Vec::new(),
        switch_times: traj.switch_times().iter().copied().filter(|t| *t <= cfg.horizon).collect(),
        t_dwell: td,
        diverged: false,
        blowup_time: None,
    };
    if h > 0.0 {
        let k = (h / cfg.dt).ceil().max(1.0) as usize;
        for i in 0..k {
            let s = -h + h * i as f64 / k as f64;
            out.pre_times.push(s);
            out.pre_states.push(cfg.history.eval(s).as_slice().to_vec());
            out.pre_derivs.push(cfg.history.derivative(s).as_slice().to_vec());
        }
    }

    // ẋ at (t, x) on segment `seg`; also returns the loop matrices and x_d
    let rhs = |hist: &History, t: f64, x: &DVector<f64>, seg: usize| -> Result<RhsEval> {
        let rho = &traj.values()[seg];
        let m = model.matrices(clock_at(t, seg), rho)?;
        let xd = hist.at(t - cfg.delay_fn.eval(t))?;
        let w = wsig.eval(t);
        let dx = &m.a_cl * x + &m.ad * &xd + &m.e * &w;
        Ok((dx, m, xd, w))
    };

    let record = |out: &mut Trajectory, t: f64, x: &DVector<f64>, dx: &DVector<f64>, m: &LoopMatrices, xd: &DVector<f64>, w: &DVector<f64>, seg: usize| {
        let u = &m.k * x;
        let z = &m.c_cl * x + &m.cd * xd + &m.f * w;
        out.times.push(t);
        out.states.push(x.as_slice().to_vec());
        out.derivs.push(dx.as_slice().to_vec());
        out.inputs.push(u.as_slice().to_vec());
        out.outputs.push(z.as_slice().to_vec());
        out.disturbance.push(w.as_slice().to_vec());
        out.param.push(traj.values()[seg].clone());
        out.clock.push(clock_at(t, seg));
        out.delay.push(cfg.delay_fn.eval(t));
    };

    for i in 0..grid.len() {
        let t = grid[i];
        let seg = traj.segment(t)?;
        let x = hist.states[i].clone();
        let (k1, m, xd, w) = rhs(&hist, t, &x, seg)?;
        hist.dx_right.push(k1.clone());
        record(&mut out, t, &x, &k1, &m, &xd, &w, seg);
        if i + 1 == grid.len() {
            break;
        }
        let dt = grid[i + 1] - t;
        let k2 = rhs(&hist, t + 0.5 * dt, &(&x + &k1 * (0.5 * dt)), seg)?.0;
        let k3 = rhs(&hist, t + 0.5 * dt, &(&x + &k2 * (0.5 * dt)), seg)?.0;
        let k4 = rhs(&hist, t + dt, &(&x + &k3 * dt), seg)?.0;
        let xn = &x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0);
        let norm = xn.norm();
        if !norm.is_finite() || norm > cfg.blowup_norm {
            out.diverged = true;
            out.blowup_time = Some(grid[i + 1]);
            log::info!("divergence at t = {} (|x| = {norm:e})", grid[i + 1]);
            break;
        }
        let tn = grid[i + 1];
        // derivative at the new node, still on this step's segment
        hist.times.push(tn);
        hist.states.push(xn.clone());
        let left = rhs(&hist, tn, &xn, seg)?.0;
        hist.dx_left.push(left);
    }
    out.derivs_left = hist.dx_left[..out.len()].iter().map(|v| v.as_slice().to_vec()).collect();
    Ok(out)
}

/// Open- or closed-loop simulation of a plant.
pub fn simulate_plant(
    sys: &LpvDelaySystem,
    delay: &DelaySpec,
    dwell: &DwellSpec,
    gain: Option<&GainSchedule>,
    traj: &PwcTrajectory,
    cfg: &SimConfig,
) -> Result<Trajectory> {
    if let Some(g) = gain {
        crate::synthesis::ClosedLoop::new(sys, g)?;
    }
    let model = PlantLoop {
        sys,
        delay: *delay,
        dwell: *dwell,
        gain,
    };
    simulate(&model, traj, cfg)
}

/// `∫‖z‖² / ∫‖w‖²` by the trapezoidal rule, square-rooted. Requires a zero
/// initial function.
pub fn empirical_l2_gain(tr: &Trajectory) -> Result<f64> {
    let zero_start = tr.states.first().is_some_and(|x| x.iter().all(|v| *v == 0.0))
        && tr.pre_states.iter().all(|x| x.iter().all(|v| *v == 0.0));
    if !zero_start {
        return Err(Error::Domain("L2-gain estimate needs a zero initial condition".into()));
    }
    let sq = |v: &Vec<f64>| v.iter().map(|a| a * a).sum::<f64>();
    let z: Vec<f64> = tr.outputs.iter().map(sq).collect();
    let w: Vec<f64> = tr.disturbance.iter().map(sq).collect();
    let ez = trapezoid(&tr.times, &z);
    let ew = trapezoid(&tr.times, &w);
    if !(ew > 0.0) {
        return Err(Error::Domain("disturbance has zero energy".into()));
    }
    Ok((ez / ew).sqrt())
}

pub fn trapezoid(t: &[f64], y: &[f64]) -> f64 {
    t.windows(2)
        .zip(y.windows(2))
        .map(|(tt, yy)| 0.5 * (tt[1] - tt[0]) * (yy[0] + yy[1]))
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::examples;
    use crate::model::{ParamBox, SystemMatrices, SystemParts};
    use nalgebra::dmatrix;

    fn scalar_loop(a: f64, ad: f64, e: f64) -> (LpvDelaySystem, DelaySpec, DwellSpec) {
        let sys = LpvDelaySystem::new(SystemParts::constant(
            SystemMatrices {
                a: dmatrix![a],
                ad: dmatrix![ad],
                b: dmatrix![0.0],
                c: dmatrix![1.0],
                cd: dmatrix![0.0],
                d: dmatrix![0.0],
                e: dmatrix![e],
                f: dmatrix![0.0],
            },
            ParamBox::interval(0.0, 1.0).unwrap(),
        ))
        .unwrap();
        (sys, DelaySpec::new(0.5, 0.0).unwrap(), DwellSpec::new(1.0, 0.1).unwrap())
    }

    fn cfg(dt: f64, horizon: f64, x0: f64, dist: Disturbance) -> SimConfig {
        SimConfig {
            dt,
            horizon,
            history: InitialHistory::constant(&[x0]),
            delay_fn: DelayFn::Constant { d: 0.5 },
            disturbance: dist,
            seed: 0,
            blowup_norm: 1e8,
        }
    }

    fn constant_traj() -> PwcTrajectory {
        PwcTrajectory::new(vec![0.0], vec![vec![0.5]]).unwrap()
    }

    #[test]
    fn exponential_decay_matches() {
        let (sys, delay, dwell) = scalar_loop(-1.0, 0.0, 0.0);
        let tr = simulate_plant(&sys, &delay, &dwell, None, &constant_traj(), &cfg(1e-3, 1.0, 1.0, Disturbance::Zero)).unwrap();
        let x1 = tr.states.last().unwrap()[0];
        assert!((x1 - (-1.0f64).exp()).abs() < 1e-6);
        assert_eq!(*tr.times.last().unwrap(), 1.0);
    }

    #[test]
    fn rk4_is_fourth_order() {
        let (sys, delay, dwell) = scalar_loop(-1.0, 0.0, 0.0);
        let err = |dt: f64| {
            let tr = simulate_plant(&sys, &delay, &dwell, None, &constant_traj(), &cfg(dt, 2.0, 1.0, Disturbance::Zero)).unwrap();
            (tr.states.last().unwrap()[0] - (-2.0f64).exp()).abs()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        let ratio = e1 / e2;
        assert!((ratio - 16.0).abs() < 1.5, "ratio {ratio}");
    }

    #[test]
    fn zero_everything_stays_zero() {
        let (sys, delay, dwell) = scalar_loop(-1.0, 0.3, 1.0);
        let tr = simulate_plant(&sys, &delay, &dwell, None, &constant_traj(), &cfg(1e-2, 2.0, 0.0, Disturbance::Zero)).unwrap();
        assert!(tr.states.iter().all(|x| x[0] == 0.0));
    }

    #[test]
    fn constant_delay_lookup_hits_nodes_exactly() {
        let (sys, delay, dwell) = scalar_loop(-1.0, 0.5, 0.0);
        let c = cfg(0.01, 2.0, 1.0, Disturbance::Zero);
        let tr = simulate_plant(&sys, &delay, &dwell, None, &constant_traj(), &c).unwrap();
        let hist = History {
            phi: &c.history,
            h: 0.5,
            times: tr.times.clone(),
            states: tr.states.iter().map(|v| DVector::from_column_slice(v)).collect(),
            dx_right: tr.derivs.iter().map(|v| DVector::from_column_slice(v)).collect(),
            dx_left: tr.derivs.iter().map(|v| DVector::from_column_slice(v)).collect(),
        };
        for i in 60..150 {
            let s = tr.times[i + 50] - 0.5;
            assert_eq!(hist.at(s).unwrap()[0], tr.states[i][0]);
        }
    }

    #[test]
    fn hermite_reproduces_cubics() {
        let f = |t: f64| 1.0 + 2.0 * t - t * t + 0.5 * t * t * t;
        let df = |t: f64| 2.0 - 2.0 * t + 1.5 * t * t;
        let v = |a: f64| DVector::from_element(1, a);
        for s in [0.3, 0.5, 0.9] {
            let y = hermite(0.2, 1.0, &v(f(0.2)), &v(df(0.2)), &v(f(1.0)), &v(df(1.0)), s);
            assert!((y[0] - f(s)).abs() < 1e-13);
        }
    }

    #[test]
    fn lookup_before_history_is_a_config_error() {
        let phi = InitialHistory::constant(&[1.0]);
        let hist = History {
            phi: &phi,
            h: 0.5,
            times: vec![0.0],
            states: vec![DVector::from_element(1, 1.0)],
            dx_right: vec![],
            dx_left: vec![DVector::zeros(1)],
        };
        assert!(matches!(hist.at(-0.6), Err(Error::Config(_))));
        assert_eq!(hist.at(-0.2).unwrap()[0], 1.0);
    }

    #[test]
    fn open_loop_example_two_diverges() {
        let pf = examples::example2_plant().unwrap();
        let traj = gen_pwc_trajectory(7, &DwellSpec::new(0.05, 1e-8).unwrap(), pf.system.params(), 10.0, Hold::Exact).unwrap();
        let c = SimConfig {
            dt: 1e-3,
            horizon: 10.0,
            history: InitialHistory::constant(&[-2.0, 1.0]),
            delay_fn: DelayFn::Sinusoid {
                offset: 0.1,
                amplitude: 0.09,
                omega: 0.9,
                phase: 0.0,
            },
            disturbance: Disturbance::unit_step(),
            seed: 7,
            blowup_norm: 1e3,
        };
        let tr = simulate_plant(&pf.system, &pf.delay, &pf.dwell, None, &traj, &c).unwrap();
        assert!(tr.diverged);
        assert!(tr.blowup_time.unwrap() < 10.0);
    }

    #[test]
    fn steps_split_at_switches() {
        let (sys, delay, dwell) = scalar_loop(-1.0, 0.0, 0.0);
        let traj = PwcTrajectory::new(vec![0.0, 0.3333], vec![vec![0.1], vec![0.9]]).unwrap();
        let tr = simulate_plant(&sys, &delay, &dwell, None, &traj, &cfg(0.1, 1.0, 1.0, Disturbance::Zero)).unwrap();
        assert!(tr.times.contains(&0.3333));
        let i = tr.times.iter().position(|t| *t == 0.3333).unwrap();
        assert_eq!(tr.param[i], vec![0.9]);
        assert_eq!(tr.param[i - 1], vec![0.1]);
        assert!(tr.clock.iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn delay_validation() {
        let delay = DelaySpec::new(0.2, 0.9).unwrap();
        let ok = DelayFn::Sinusoid {
            offset: 0.1,
            amplitude: 0.09,
            omega: 0.9,
            phase: 0.0,
        };
        assert!(ok.validate(&delay, 30.0).is_ok());
        let too_long = DelayFn::Constant { d: 0.3 };
        assert!(too_long.validate(&delay, 1.0).is_err());
        let too_fast = DelayFn::Sinusoid {
            offset: 0.1,
            amplitude: 0.09,
            omega: 20.0,
            phase: 0.0,
        };
        assert!(too_fast.validate(&delay, 1.0).is_err());
    }

    #[test]
    fn l2_gain_of_static_maps() {
        let mut tr = Trajectory {
            dims: Dims { n: 1, m: 1, q: 0, r: 1, s: 1 },
            times: (0..101).map(|k| k as f64 * 0.01).collect(),
            states: vec![vec![0.0]; 101],
            derivs: vec![vec![0.0]; 101],
            derivs_left: vec![vec![0.0]; 101],
            inputs: vec![vec![]; 101],
            outputs: vec![],
            disturbance: (0..101).map(|k| vec![(k as f64 * 0.07).sin()]).collect(),
            param: vec![vec![0.0]; 101],
            clock: vec![0.0; 101],
            delay: vec![0.0; 101],
            pre_times: vec![],
            pre_states: vec![],
            pre_derivs: vec![],
            switch_times: vec![0.0],
            t_dwell: 1.0,
            diverged: false,
            blowup_time: None,
        };
        tr.outputs = tr.disturbance.clone();
        assert!((empirical_l2_gain(&tr).unwrap() - 1.0).abs() < 1e-14);
        tr.outputs = tr.disturbance.iter().map(|w| vec![2.0 * w[0]]).collect();
        assert!((empirical_l2_gain(&tr).unwrap() - 2.0).abs() < 1e-14);
        tr.disturbance = vec![vec![0.0]; 101];
        assert!(empirical_l2_gain(&tr).is_err());
    }

    #[test]
    fn first_order_lag_gain_below_one() {
        let (sys, delay, dwell) = scalar_loop(-1.0, 0.0, 1.0);
        let c = cfg(
            1e-2,
            40.0,
            0.0,
            Disturbance::Noise {
                amplitude: 1.0,
                hold: 0.2,
                end: 20.0,
                seed: 3,
            },
        );
        let tr = simulate_plant(&sys, &delay, &dwell, None, &constant_traj(), &c).unwrap();
        let g = empirical_l2_gain(&tr).unwrap();
        assert!(g > 0.0 && g <= 1.0, "gain {g}");
    }

    #[test]
    fn csv_columns() {
        let (sys, delay, dwell) = scalar_loop(-1.0, 0.0, 1.0);
        let tr = simulate_plant(&sys, &delay, &dwell, None, &constant_traj(), &cfg(0.1, 0.3, 1.0, Disturbance::unit_step())).unwrap();
        let mut buf = Vec::new();
        tr.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "t,x1,u1,z1,w1,rho1,tau");
        assert_eq!(lines.count(), tr.len());
    }

    #[test]
    fn step_grid_contains_breakpoints_once() {
        let g = step_grid(0.1, 1.0, &[0.25, 0.3, 0.3 + 1e-15, 2.0]);
        assert!(g.contains(&0.25));
        assert_eq!(g.iter().filter(|t| (**t - 0.3).abs() < 1e-9).count(), 1);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
    }
}
