//! Matrix polynomials in the clock `τ` and the parameter vector `ρ`.
//!
//! A monomial is stored as an exponent vector of length `1 + s`: entry 0 is
//! the power of the clock, entries `1..=s` the powers of `ρ_1..ρ_s`. The same
//! type carries plant entries (always degree 0 in `τ`) and realized decision
//! variables. [`Ansatz`] is the symbolic counterpart whose coefficients are
//! SDP unknowns.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sdp::{AffineMatrix, ProblemBuilder, VarId};

pub type Exponent = Vec<u32>;

/// `Σ coeff · τ^e₀ · Π ρ_i^e_i`
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MatrixPolyRepr", into = "MatrixPolyRepr")]
pub struct MatrixPoly {
    rows: usize,
    cols: usize,
    params: usize,
    symmetric: bool,
    terms: BTreeMap<Exponent, DMatrix<f64>>,
}

/// Evaluate a single monomial.
pub fn monomial_value(exp: &[u32], tau: f64, rho: &[f64]) -> f64 {
    let mut v = tau.powi(exp[0] as i32);
    for (r, e) in rho.iter().zip(&exp[1..]) {
        v *= r.powi(*e as i32);
    }
    v
}

/// All exponents with clock degree `≤ deg_tau` and total parameter degree
/// `≤ deg_rho`, in lexicographic order.
pub fn monomials(params: usize, deg_tau: u32, deg_rho: u32) -> Vec<Exponent> {
    fn rho_parts(params: usize, budget: u32) -> Vec<Vec<u32>> {
        if params == 0 {
            return vec![vec![]];
        }
        let mut out = Vec::new();
        for e in 0..=budget {
            for mut rest in rho_parts(params - 1, budget - e) {
                rest.insert(0, e);
                out.push(rest);
            }
        }
        out
    }
    let mut out = Vec::new();
    for t in 0..=deg_tau {
        for mut r in rho_parts(params, deg_rho) {
            r.insert(0, t);
            out.push(r);
        }
    }
    out.sort();
    out
}

impl MatrixPoly {
    pub fn zero(rows: usize, cols: usize, params: usize, symmetric: bool) -> Self {
        Self {
            rows,
            cols,
            params,
            symmetric,
            terms: BTreeMap::new(),
        }
    }

    /// Degree-0 polynomial.
    pub fn constant(m: DMatrix<f64>, params: usize) -> Self {
        let mut p = Self::zero(m.nrows(), m.ncols(), params, false);
        p.terms.insert(vec![0; params + 1], m);
        p
    }

    /// Builder used by plant definitions: `terms` pairs exponents with coefficients.
    pub fn from_terms(
        rows: usize,
        cols: usize,
        params: usize,
        symmetric: bool,
        terms: impl IntoIterator<Item = (Exponent, DMatrix<f64>)>,
    ) -> Result<Self> {
        let mut p = Self::zero(rows, cols, params, symmetric);
        if symmetric && rows != cols {
            return Err(Error::Dimension(format!(
                "symmetric polynomial must be square, got {rows}x{cols}"
            )));
        }
        for (e, m) in terms {
            p.add_term(e, m)?;
        }
        Ok(p)
    }

    /// Add `coeff · monomial(exp)`; coefficients of repeated exponents accumulate.
    pub fn add_term(&mut self, exp: Exponent, coeff: DMatrix<f64>) -> Result<()> {
        if exp.len() != self.params + 1 {
            return Err(Error::Dimension(format!(
                "exponent {exp:?} has length {}, expected {}",
                exp.len(),
                self.params + 1
            )));
        }
        if coeff.shape() != (self.rows, self.cols) {
            return Err(Error::Dimension(format!(
                "coefficient is {}x{}, polynomial is {}x{}",
                coeff.nrows(),
                coeff.ncols(),
                self.rows,
                self.cols
            )));
        }
        if self.symmetric && (&coeff - coeff.transpose()).amax() > 0.0 {
            return Err(Error::Domain(format!(
                "non-symmetric coefficient for exponent {exp:?} in a symmetric polynomial"
            )));
        }
        match self.terms.get_mut(&exp) {
            Some(c) => *c += coeff,
            None => {
                self.terms.insert(exp, coeff);
            }
        }
        Ok(())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn params(&self) -> usize {
        self.params
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn terms(&self) -> impl Iterator<Item = (&Exponent, &DMatrix<f64>)> {
        self.terms.iter()
    }

    pub fn term_count(&self) -> usize {
        self.terms.len()
    }

    pub fn coefficient(&self, exp: &[u32]) -> Option<&DMatrix<f64>> {
        self.terms.get(exp)
    }

    pub fn degree_tau(&self) -> u32 {
        self.terms.keys().map(|e| e[0]).max().unwrap_or(0)
    }

    pub fn degree_rho(&self) -> u32 {
        self.terms
            .keys()
            .map(|e| e[1..].iter().sum())
            .max()
            .unwrap_or(0)
    }

    pub fn is_tau_independent(&self) -> bool {
        self.terms
            .iter()
            .all(|(e, m)| e[0] == 0 || m.iter().all(|x| *x == 0.0))
    }

    pub fn eval(&self, tau: f64, rho: &[f64]) -> Result<DMatrix<f64>> {
        if rho.len() != self.params {
            return Err(Error::Dimension(format!(
                "rho has length {}, polynomial expects {}",
                rho.len(),
                self.params
            )));
        }
        let mut out = DMatrix::zeros(self.rows, self.cols);
        for (e, m) in &self.terms {
            out += m * monomial_value(e, tau, rho);
        }
        Ok(out)
    }

    /// Formal partial derivative in the clock variable.
    pub fn d_dtau(&self) -> Self {
        let mut out = Self::zero(self.rows, self.cols, self.params, self.symmetric);
        for (e, m) in &self.terms {
            if e[0] == 0 {
                continue;
            }
            let mut de = e.clone();
            de[0] -= 1;
            // exponents stay unique: distinct e map to distinct de
            out.terms.insert(de, m * f64::from(e[0]));
        }
        out
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if (self.rows, self.cols, self.params) != (other.rows, other.cols, other.params) {
            return Err(Error::Dimension("adding polynomials of different shape".into()));
        }
        let mut out = self.clone();
        out.symmetric = self.symmetric && other.symmetric;
        for (e, m) in &other.terms {
            match out.terms.get_mut(e) {
                Some(c) => *c += m,
                None => {
                    out.terms.insert(e.clone(), m.clone());
                }
            }
        }
        Ok(out)
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut out = self.clone();
        for m in out.terms.values_mut() {
            *m *= s;
        }
        out
    }

    /// Largest absolute coefficient entry.
    pub fn max_abs_coefficient(&self) -> f64 {
        self.terms.values().map(|m| m.amax()).fold(0.0, f64::max)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixPolyRepr {
    rows: usize,
    cols: usize,
    params: usize,
    #[serde(default)]
    symmetric: bool,
    terms: Vec<TermRepr>,
}

#[derive(Serialize, Deserialize)]
struct TermRepr {
    exponent: Exponent,
    coeffs: Vec<Vec<f64>>,
}

pub(crate) fn matrix_from_rows(rows: &[Vec<f64>], nrows: usize, ncols: usize) -> Result<DMatrix<f64>> {
    if rows.len() != nrows || rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::Dimension(format!(
            "expected a {nrows}x{ncols} row-major table"
        )));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

pub(crate) fn matrix_to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| m[(i, j)]).collect())
        .collect()
}

impl TryFrom<MatrixPolyRepr> for MatrixPoly {
    type Error = Error;

    fn try_from(r: MatrixPolyRepr) -> Result<Self> {
        let mut p = MatrixPoly::zero(r.rows, r.cols, r.params, r.symmetric);
        if r.symmetric && r.rows != r.cols {
            return Err(Error::Dimension("symmetric polynomial must be square".into()));
        }
        for t in r.terms {
            if p.terms.contains_key(&t.exponent) {
                return Err(Error::Config(format!("duplicate exponent {:?}", t.exponent)));
            }
            let m = matrix_from_rows(&t.coeffs, r.rows, r.cols)?;
            p.add_term(t.exponent, m)?;
        }
        Ok(p)
    }
}

impl From<MatrixPoly> for MatrixPolyRepr {
    fn from(p: MatrixPoly) -> Self {
        MatrixPolyRepr {
            rows: p.rows,
            cols: p.cols,
            params: p.params,
            symmetric: p.symmetric,
            terms: p
                .terms
                .iter()
                .map(|(e, m)| TermRepr {
                    exponent: e.clone(),
                    coeffs: matrix_to_rows(m),
                })
                .collect(),
        }
    }
}

/// Which monomials an ansatz allocates coefficient blocks for.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MonomialSet {
    /// Clock degree up to `deg_tau`, total parameter degree up to `deg_rho`.
    Full { deg_tau: u32, deg_rho: u32 },
    /// Exactly the given exponents.
    Explicit(Vec<Exponent>),
}

impl MonomialSet {
    pub fn exponents(&self, params: usize) -> Vec<Exponent> {
        match self {
            MonomialSet::Full { deg_tau, deg_rho } => monomials(params, *deg_tau, *deg_rho),
            MonomialSet::Explicit(v) => v.clone(),
        }
    }

    /// `τ·M_τ + Σ ρ_i·M_i`, the clock/parameter split used for distributed gains.
    pub fn tau_rho_split(params: usize) -> Self {
        let mut v = Vec::with_capacity(params + 1);
        let mut e = vec![0; params + 1];
        e[0] = 1;
        v.push(e);
        for i in 0..params {
            let mut e = vec![0; params + 1];
            e[i + 1] = 1;
            v.push(e);
        }
        MonomialSet::Explicit(v)
    }
}

/// One coefficient matrix of an ansatz, expressed through scalar unknowns.
#[derive(Clone, Debug)]
pub struct CoefficientSlot {
    pub exponent: Exponent,
    /// `(variable, row, col)`; for symmetric slots `(row, col)` lies in the
    /// lower triangle and the unknown also fills the mirrored entry.
    pub entries: Vec<(VarId, usize, usize)>,
}

/// Matrix polynomial template whose coefficients are SDP unknowns.
#[derive(Clone, Debug)]
pub struct Ansatz {
    name: String,
    rows: usize,
    cols: usize,
    params: usize,
    symmetric: bool,
    slots: Vec<CoefficientSlot>,
}

/// Allocate one free coefficient block per monomial up to the degree caps.
pub fn ansatz(
    builder: &mut ProblemBuilder,
    name: &str,
    rows: usize,
    cols: usize,
    params: usize,
    set: &MonomialSet,
    symmetric: bool,
) -> Result<Ansatz> {
    if symmetric && rows != cols {
        return Err(Error::Dimension(format!(
            "symmetric ansatz {name} must be square, got {rows}x{cols}"
        )));
    }
    let exps = set.exponents(params);
    let mut seen = std::collections::BTreeSet::new();
    let mut slots = Vec::with_capacity(exps.len());
    for e in exps {
        if e.len() != params + 1 {
            return Err(Error::Dimension(format!("exponent {e:?} for {name} has wrong length")));
        }
        if !seen.insert(e.clone()) {
            return Err(Error::Config(format!("duplicate monomial {e:?} in ansatz {name}")));
        }
        let mut entries = Vec::new();
        for j in 0..cols {
            let start = if symmetric { j } else { 0 };
            for i in start..rows {
                let v = builder.add_var(format!("{name}{e:?}[{i},{j}]"));
                entries.push((v, i, j));
            }
        }
        slots.push(CoefficientSlot { exponent: e, entries });
    }
    Ok(Ansatz {
        name: name.to_string(),
        rows,
        cols,
        params,
        symmetric,
        slots,
    })
}

impl Ansatz {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn slots(&self) -> &[CoefficientSlot] {
        &self.slots
    }

    pub fn scalar_count(&self) -> usize {
        self.slots.iter().map(|s| s.entries.len()).sum()
    }

    pub fn variables(&self) -> impl Iterator<Item = VarId> + '_ {
        self.slots.iter().flat_map(|s| s.entries.iter().map(|e| e.0))
    }

    pub fn is_tau_independent(&self) -> bool {
        self.slots.iter().all(|s| s.exponent[0] == 0)
    }

    fn slot_matrix(&self, slot: &CoefficientSlot, weight: f64) -> AffineMatrix {
        let mut out = AffineMatrix::zeros(self.rows, self.cols);
        if weight == 0.0 {
            return out;
        }
        for &(v, i, j) in &slot.entries {
            let mut basis = DMatrix::zeros(self.rows, self.cols);
            basis[(i, j)] = weight;
            if self.symmetric {
                basis[(j, i)] = weight;
            }
            out = &out + &AffineMatrix::var(v, basis);
        }
        out
    }

    /// Symbolic value at `(τ, ρ)`.
    pub fn eval(&self, tau: f64, rho: &[f64]) -> AffineMatrix {
        assert_eq!(rho.len(), self.params, "ansatz {} evaluated with wrong rho length", self.name);
        let mut out = AffineMatrix::zeros(self.rows, self.cols);
        for s in &self.slots {
            out = &out + &self.slot_matrix(s, monomial_value(&s.exponent, tau, rho));
        }
        out
    }

    /// Symbolic clock derivative at `(τ, ρ)`.
    pub fn eval_d_dtau(&self, tau: f64, rho: &[f64]) -> AffineMatrix {
        assert_eq!(rho.len(), self.params);
        let mut out = AffineMatrix::zeros(self.rows, self.cols);
        for s in &self.slots {
            let e0 = s.exponent[0];
            if e0 == 0 {
                continue;
            }
            let mut de = s.exponent.clone();
            de[0] -= 1;
            let w = f64::from(e0) * monomial_value(&de, tau, rho);
            out = &out + &self.slot_matrix(s, w);
        }
        out
    }

    /// Numeric polynomial for a solver assignment.
    pub fn realize(&self, x: &[f64]) -> MatrixPoly {
        let mut p = MatrixPoly::zero(self.rows, self.cols, self.params, self.symmetric);
        for s in &self.slots {
            let mut m = DMatrix::zeros(self.rows, self.cols);
            for &(v, i, j) in &s.entries {
                m[(i, j)] = x[v.0];
                if self.symmetric {
                    m[(j, i)] = x[v.0];
                }
            }
            p.terms.insert(s.exponent.clone(), m);
        }
        p
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn poly_tau(m: DMatrix<f64>, e: Exponent) -> MatrixPoly {
        let (r, c) = m.shape();
        MatrixPoly::from_terms(r, c, e.len() - 1, false, [(e, m)]).unwrap()
    }

    #[test]
    fn constant_identity_evaluates_to_identity() {
        let p = MatrixPoly::constant(DMatrix::identity(2, 2), 1);
        assert_eq!(p.eval(3.7, &[-1.2]).unwrap(), DMatrix::identity(2, 2));
    }

    #[test]
    fn single_clock_monomial() {
        let p = poly_tau(dmatrix![1.0, 0.0; 0.0, 2.0], vec![1, 0]);
        assert_eq!(p.eval(0.5, &[0.3]).unwrap(), dmatrix![0.5, 0.0; 0.0, 1.0]);
    }

    #[test]
    fn eval_rejects_wrong_rho_length() {
        let p = MatrixPoly::constant(DMatrix::identity(2, 2), 1);
        assert!(matches!(p.eval(0.0, &[1.0, 2.0]), Err(Error::Dimension(_))));
    }

    /// Sum over terms written out without any shared helper.
    fn naive_eval(p: &MatrixPoly, tau: f64, rho: &[f64]) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(p.rows(), p.cols());
        for (e, m) in p.terms() {
            let mut w = 1.0;
            for _ in 0..e[0] {
                w *= tau;
            }
            for (k, r) in rho.iter().enumerate() {
                for _ in 0..e[k + 1] {
                    w *= r;
                }
            }
            out += m * w;
        }
        out
    }

    fn random_poly(rng: &mut ChaCha8Rng, params: usize, deg_tau: u32, deg_rho: u32) -> MatrixPoly {
        let terms = monomials(params, deg_tau, deg_rho)
            .into_iter()
            .map(|e| (e, DMatrix::from_fn(2, 3, |_, _| rng.random_range(-1.0..1.0))));
        MatrixPoly::from_terms(2, 3, params, false, terms).unwrap()
    }

    #[test]
    fn degree_two_eval_matches_naive_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_poly(&mut rng, 2, 2, 2);
        for _ in 0..20 {
            let tau = rng.random_range(-2.0..2.0);
            let rho = [rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)];
            let diff = (p.eval(tau, &rho).unwrap() - naive_eval(&p, tau, &rho)).amax();
            assert!(diff < 1e-12, "diff {diff}");
        }
    }

    #[test]
    fn d_dtau_of_constant_is_zero() {
        let p = MatrixPoly::constant(dmatrix![1.0, 2.0; 3.0, 4.0], 1);
        let d = p.d_dtau();
        assert_eq!(d.term_count(), 0);
        assert_eq!(d.eval(1.0, &[1.0]).unwrap(), DMatrix::zeros(2, 2));
    }

    #[test]
    fn d_dtau_of_linear_term_is_its_coefficient() {
        let m = dmatrix![1.0, 2.0; 3.0, 4.0];
        let d = poly_tau(m.clone(), vec![1, 0]).d_dtau();
        assert_eq!(d.coefficient(&[0, 0]), Some(&m));
        assert_eq!(d.term_count(), 1);
    }

    #[test]
    fn d_dtau_by_hand() {
        // τ²·M + τρ·N → 2τ·M + ρ·N
        let m = dmatrix![1.0, 0.0; 0.0, 3.0];
        let n = dmatrix![0.0, 1.0; 1.0, 0.0];
        let p = MatrixPoly::from_terms(2, 2, 1, true, [(vec![2, 0], m.clone()), (vec![1, 1], n.clone())]).unwrap();
        let d = p.d_dtau();
        assert_eq!(d.coefficient(&[1, 0]), Some(&(&m * 2.0)));
        assert_eq!(d.coefficient(&[0, 1]), Some(&n));
        assert_eq!(d.term_count(), 2);
        assert!(d.is_symmetric());
    }

    #[test]
    fn symmetric_flag_survives_addition() {
        let a = MatrixPoly::from_terms(2, 2, 1, true, [(vec![0, 1], DMatrix::identity(2, 2))]).unwrap();
        let b = MatrixPoly::from_terms(2, 2, 1, true, [(vec![1, 1], DMatrix::identity(2, 2))]).unwrap();
        assert!(a.add(&b).unwrap().is_symmetric());
        assert!(a.add(&b).unwrap().d_dtau().is_symmetric());
    }

    #[test]
    fn symmetric_polynomial_rejects_asymmetric_coefficient() {
        let r = MatrixPoly::from_terms(2, 2, 1, true, [(vec![0, 0], dmatrix![1.0, 2.0; 0.0, 1.0])]);
        assert!(r.is_err());
    }

    #[test]
    fn ansatz_block_counts() {
        let mut b = ProblemBuilder::new();
        let a = ansatz(&mut b, "P", 2, 2, 1, &MonomialSet::Full { deg_tau: 0, deg_rho: 0 }, true).unwrap();
        assert_eq!(a.slots().len(), 1);
        assert_eq!(a.scalar_count(), 3);

        let a = ansatz(&mut b, "P", 2, 2, 1, &MonomialSet::Full { deg_tau: 1, deg_rho: 1 }, true).unwrap();
        let exps: Vec<_> = a.slots().iter().map(|s| s.exponent.clone()).collect();
        assert_eq!(exps, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);

        let a = ansatz(&mut b, "U", 1, 2, 1, &MonomialSet::Full { deg_tau: 1, deg_rho: 1 }, false).unwrap();
        assert_eq!(a.slots().len(), 4);
        assert_eq!(a.scalar_count(), 8);
        assert_eq!(b.var_count(), 3 + 12 + 8);
    }

    #[test]
    fn ansatz_realize_matches_symbolic_eval() {
        let mut b = ProblemBuilder::new();
        let a = ansatz(&mut b, "P", 2, 2, 1, &MonomialSet::Full { deg_tau: 2, deg_rho: 1 }, true).unwrap();
        let x: Vec<f64> = (0..b.var_count()).map(|i| (i as f64 * 0.37).sin()).collect();
        let p = a.realize(&x);
        for (tau, rho) in [(0.0, 0.0), (0.3, 0.7), (1.5, -0.2)] {
            assert!((a.eval(tau, &[rho]).eval(&x) - p.eval(tau, &[rho]).unwrap()).amax() < 1e-14);
            assert!((a.eval_d_dtau(tau, &[rho]).eval(&x) - p.d_dtau().eval(tau, &[rho]).unwrap()).amax() < 1e-14);
        }
    }

    #[test]
    fn split_monomials() {
        let s = MonomialSet::tau_rho_split(1);
        assert_eq!(s.exponents(1), vec![vec![1, 0], vec![0, 1]]);
    }

    #[test]
    fn json_round_trip_is_value_identical() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let p = random_poly(&mut rng, 1, 1, 2);
        let s = serde_json::to_string(&p).unwrap();
        let q: MatrixPoly = serde_json::from_str(&s).unwrap();
        assert_eq!(p, q);
    }

    proptest! {
        #[test]
        fn d_dtau_matches_central_difference(
            coeffs in prop::collection::vec(-1.0f64..1.0, 9 * 4),
            tau in -1.0f64..1.0,
            rho in -1.0f64..1.0,
        ) {
            let exps = monomials(1, 2, 2);
            let terms = exps.iter().cloned().enumerate().map(|(k, e)| {
                let c = &coeffs[4 * k..4 * k + 4];
                (e, DMatrix::from_row_slice(2, 2, c))
            });
            let p = MatrixPoly::from_terms(2, 2, 1, false, terms).unwrap();
            let delta = 1e-4;
            let fd = (p.eval(tau + delta, &[rho]).unwrap() - p.eval(tau - delta, &[rho]).unwrap()) / (2.0 * delta);
            let exact = p.d_dtau().eval(tau, &[rho]).unwrap();
            let rel = (&fd - &exact).amax() / exact.amax().max(1.0);
            prop_assert!(rel < 1e-6, "relative error {}", rel);
        }
    }
}
