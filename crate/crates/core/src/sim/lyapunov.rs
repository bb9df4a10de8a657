//! Numeric evaluation of the Lyapunov–Krasovskii functional along a
//! simulated trajectory, and a randomized check of the Jensen bound used to
//! handle its derivative.
//!
//! ```text
//! V = xᵀP x + ∫_{t−d(t)}^{t} e^{κ(s−t)} xᵀQ x ds
//!           + h ∫_{−h}^{0} ∫_{t+θ}^{t} e^{κ(s−t)} ẋᵀR ẋ ds dθ
//! ```
//!
//! with `P, Q, R` at the current `(τ, ρ)`. Swapping the order of integration
//! turns the double integral into `h ∫_{t−h}^{t} e^{κ(s−t)} (s − t + h) ẋᵀRẋ ds`.
//! Both integrals use the trapezoidal rule on the stored samples; `ẋ` comes
//! from the integrator's own derivative evaluations, with separate left and
//! right limits at nodes where the dynamics switch.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Trajectory;
use crate::analysis::LkfMatrices;
use crate::error::{Error, Result};

/// Minimum number of samples per delay interval `h`.
pub const MIN_SAMPLES_PER_DELAY: f64 = 50.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LyapunovTrace {
    pub times: Vec<f64>,
    /// `V` with the matrices of the segment that starts at or before `t`.
    pub values: Vec<f64>,
    /// `(t_k, V(t_k⁻), V(t_k⁺))` at each switch after `t = 0`.
    pub jumps: Vec<(f64, f64, f64)>,
    /// Index into `times` where each segment starts.
    pub segment_starts: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MonotonicityReport {
    pub flow_checks: usize,
    pub flow_violations: usize,
    /// Largest `(V(t_{i+1}) − V(t_i)) / V(t_i)` between switches.
    pub worst_flow_increase: f64,
    pub worst_flow_time: f64,
    pub jump_checks: usize,
    pub jump_violations: usize,
    /// Largest `(V(t_k⁺) − V(t_k⁻)) / V(t_k⁻)`.
    pub worst_jump_increase: f64,
    pub rel_tol: f64,
}

impl MonotonicityReport {
    pub fn ok(&self) -> bool {
        self.flow_violations == 0 && self.jump_violations == 0
    }
}

impl LyapunovTrace {
    /// Check non-increase between and across switches; an increase counts
    /// when it exceeds `rel_tol·V` plus a floor of `1e-12·max V`.
    pub fn check_monotone(&self, rel_tol: f64) -> MonotonicityReport {
        let vmax = self.values.iter().copied().fold(0.0, f64::max);
        let floor = 1e-12 * vmax;
        let mut rep = MonotonicityReport {
            flow_checks: 0,
            flow_violations: 0,
            worst_flow_increase: f64::NEG_INFINITY,
            worst_flow_time: f64::NAN,
            jump_checks: 0,
            jump_violations: 0,
            worst_jump_increase: f64::NEG_INFINITY,
            rel_tol,
        };
        let rel = |prev: f64, next: f64| (next - prev) / prev.abs().max(floor).max(f64::MIN_POSITIVE);
        let step = |rep: &mut MonotonicityReport, prev: f64, next: f64, t: f64| {
            rep.flow_checks += 1;
            let r = rel(prev, next);
            if r > rep.worst_flow_increase {
                rep.worst_flow_increase = r;
                rep.worst_flow_time = t;
            }
            if next - prev > rel_tol * prev.abs() + floor {
                rep.flow_violations += 1;
            }
        };
        for (k, &start) in self.segment_starts.iter().enumerate() {
            let end = self.segment_starts.get(k + 1).copied().unwrap_or(self.times.len());
            for i in start + 1..end {
                step(&mut rep, self.values[i - 1], self.values[i], self.times[i]);
            }
            if let Some(&(t, vm, _)) = self.jumps.get(k) {
                if end > start {
                    step(&mut rep, self.values[end - 1], vm, t);
                }
            }
        }
        for &(_, vm, vp) in &self.jumps {
            rep.jump_checks += 1;
            rep.worst_jump_increase = rep.worst_jump_increase.max(rel(vm, vp));
            if vp - vm > rel_tol * vm.abs() + floor {
                rep.jump_violations += 1;
            }
        }
        rep
    }
}

struct Samples<'a> {
    t: Vec<f64>,
    x: Vec<&'a [f64]>,
    dr: Vec<&'a [f64]>,
    dl: Vec<&'a [f64]>,
}

fn quad(v: &[f64], m: &DMatrix<f64>) -> f64 {
    let n = v.len();
    let mut s = 0.0;
    for i in 0..n {
        let mut row = 0.0;
        for j in 0..n {
            row += m[(i, j)] * v[j];
        }
        s += v[i] * row;
    }
    s
}

fn lerp(a: &[f64], b: &[f64], l: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x + (y - x) * l).collect()
}

impl Samples<'_> {
    /// Both integral terms at sample index `i` (top end uses left limits).
    fn integrals(&self, i: usize, d: f64, h: f64, kappa: f64, q: &DMatrix<f64>, r: &DMatrix<f64>) -> (f64, f64) {
        let t = self.t[i];
        let fq = |s: f64, x: &[f64]| (kappa * (s - t)).exp() * quad(x, q);
        let fr = |s: f64, dx: &[f64]| (kappa * (s - t)).exp() * (s - t + h) * quad(dx, r);
        let window = |a: f64, with_r: bool| -> f64 {
            if !(t > a) {
                return 0.0;
            }
            // first node strictly above a
            let j = self.t.partition_point(|s| *s <= a).max(1);
            let mut total = 0.0;
            let (t0, t1) = (self.t[j - 1], self.t[j]);
            let l = ((a - t0) / (t1 - t0)).clamp(0.0, 1.0);
            let (va, v1) = if with_r {
                let da = lerp(self.dr[j - 1], self.dl[j], l);
                (fr(a, &da), fr(t1, self.dl[j]))
            } else {
                let xa = lerp(self.x[j - 1], self.x[j], l);
                (fq(a, &xa), fq(t1, self.x[j]))
            };
            total += 0.5 * (t1 - a) * (va + v1);
            for k in j..i {
                let (s0, s1) = (self.t[k], self.t[k + 1]);
                let (f0, f1) = if with_r {
                    (fr(s0, self.dr[k]), fr(s1, self.dl[k + 1]))
                } else {
                    (fq(s0, self.x[k]), fq(s1, self.x[k + 1]))
                };
                total += 0.5 * (s1 - s0) * (f0 + f1);
            }
            total
        };
        (window(t - d, false), h * window(t - h, true))
    }
}

/// `V(t)` at every `stride`-th sample and on both sides of every switch.
pub fn lyapunov_trace(tr: &Trajectory, lkf: &dyn LkfMatrices, stride: usize) -> Result<LyapunovTrace> {
    trace_with(tr, lkf, lkf.dwell().kappa(), stride)
}

pub(crate) fn trace_with(tr: &Trajectory, lkf: &dyn LkfMatrices, kappa: f64, stride: usize) -> Result<LyapunovTrace> {
    let h = lkf.delay().h();
    let td = lkf.dwell().t_dwell();
    if tr.len() < 2 {
        return Err(Error::Domain("trajectory has fewer than two samples".into()));
    }
    if (td - tr.t_dwell).abs() > 1e-12 * td {
        return Err(Error::Domain(format!(
            "trajectory clock saturates at {} but the certificate uses T_D = {td}",
            tr.t_dwell
        )));
    }
    let max_gap = tr.times.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    if h > 0.0 && max_gap > h / MIN_SAMPLES_PER_DELAY * (1.0 + 1e-9) {
        return Err(Error::Domain(format!(
            "history too coarse for quadrature: step {max_gap} exceeds h/{MIN_SAMPLES_PER_DELAY} = {}",
            h / MIN_SAMPLES_PER_DELAY
        )));
    }
    if h > 0.0 && tr.pre_times.first().is_none_or(|t0| *t0 > -h + 1e-12) {
        return Err(Error::Domain("trajectory lacks the initial function on [−h, 0]".into()));
    }
    let pre = tr.pre_times.len();
    let derivs_left = tr.derivs_left.as_slice();
    let samples = Samples {
        t: tr.pre_times.iter().chain(&tr.times).copied().collect(),
        x: tr.pre_states.iter().chain(&tr.states).map(Vec::as_slice).collect(),
        dr: tr.pre_derivs.iter().chain(&tr.derivs).map(Vec::as_slice).collect(),
        dl: tr.pre_derivs.iter().chain(derivs_left).map(Vec::as_slice).collect(),
    };
    let stride = stride.max(1);

    let value = |i: usize, tau: f64, rho: &[f64]| -> Result<f64> {
        let [p, q, r] = lkf.pqr(tau.min(td), rho)?;
        let (iq, ir) = samples.integrals(pre + i, tr.delay[i], h, kappa, &q, &r);
        Ok(quad(&tr.states[i], &p) + iq + ir)
    };

    let switch_idx: Vec<usize> = tr
        .switch_times
        .iter()
        .filter_map(|ts| tr.times.iter().position(|t| t == ts))
        .collect();
    let mut out = LyapunovTrace {
        times: Vec::new(),
        values: Vec::new(),
        jumps: Vec::new(),
        segment_starts: Vec::new(),
    };
    for i in 0..tr.len() {
        let is_switch = switch_idx.contains(&i);
        if is_switch {
            out.segment_starts.push(out.times.len());
            if i > 0 {
                let prev_switch = tr.times[..i]
                    .iter()
                    .rev()
                    .find(|t| tr.switch_times.contains(t))
                    .copied()
                    .unwrap_or(0.0);
                let tau_minus = (tr.times[i] - prev_switch).min(td);
                let vm = value(i, tau_minus, &tr.param[i - 1])?;
                let vp = value(i, tr.clock[i], &tr.param[i])?;
                out.jumps.push((tr.times[i], vm, vp));
            }
        }
        if is_switch || i % stride == 0 || i + 1 == tr.len() {
            out.times.push(tr.times[i]);
            out.values.push(value(i, tr.clock[i], &tr.param[i])?);
        }
    }
    Ok(out)
}

/// One randomized instance of `(∫ẋ)ᵀR(∫ẋ) ≤ h∫ẋᵀRẋ` over `[0, h]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JensenCase {
    pub n: usize,
    pub degree: usize,
    pub h: f64,
    pub lhs: f64,
    pub rhs: f64,
    /// `rhs − lhs`
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JensenReport {
    pub cases: Vec<JensenCase>,
    /// Cases with `margin < −tol·rhs`.
    pub violations: usize,
    pub tol: f64,
    pub min_relative_margin: f64,
}

const SIMPSON_INTERVALS: usize = 2000;

/// Both sides of the Jensen bound for `ẋ = f(s)` on `[0, h]`, composite Simpson.
pub fn jensen_sides(f: &dyn Fn(f64) -> DVector<f64>, r: &DMatrix<f64>, h: f64) -> (f64, f64) {
    let n = SIMPSON_INTERVALS;
    let step = h / n as f64;
    let mut int_x = DVector::zeros(r.nrows());
    let mut int_q = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n {
            1.0
        } else if k % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let v = f(k as f64 * step);
        int_q += w * quad(v.as_slice(), r);
        int_x += v * w;
    }
    int_x *= step / 3.0;
    int_q *= step / 3.0;
    (quad(int_x.as_slice(), r), h * int_q)
}

/// Random polynomial `ẋ` (dimension 1–3, degree 0–3), random `R ≻ 0` and
/// random `h ∈ [0.05, 2]`, `count` cases.
pub fn jensen_check(seed: u64, count: usize) -> JensenReport {
    let tol = 1e-9;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cases = Vec::with_capacity(count);
    for _ in 0..count {
        let n = rng.random_range(1..=3);
        let degree = rng.random_range(0..=3);
        let h = rng.random_range(0.05..=2.0);
        let coeffs: Vec<DVector<f64>> = (0..=degree)
            .map(|_| DVector::from_fn(n, |_, _| rng.random_range(-2.0..=2.0)))
            .collect();
        let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..=1.0));
        let r = &m * m.transpose() + DMatrix::identity(n, n) * 0.1;
        let f = |s: f64| {
            coeffs
                .iter()
                .rev()
                .fold(DVector::zeros(n), |acc: DVector<f64>, c| acc * s + c)
        };
        let (lhs, rhs) = jensen_sides(&f, &r, h);
        cases.push(JensenCase {
            n,
            degree,
            h,
            lhs,
            rhs,
            margin: rhs - lhs,
        });
    }
    let violations = cases.iter().filter(|c| c.margin < -tol * c.rhs).count();
    let min_relative_margin = cases.iter().map(|c| c.margin / c.rhs).fold(f64::INFINITY, f64::min);
    JensenReport {
        cases,
        violations,
        tol,
        min_relative_margin,
    }
}
