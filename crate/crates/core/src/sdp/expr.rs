//! Matrix expressions that are affine in the scalar SDP unknowns.

use std::collections::BTreeMap;
use std::ops::{Add, Mul, Neg, Sub};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Handle of a scalar decision variable inside an [`SdpProblem`](super::SdpProblem).
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct VarId(pub usize);

/// `constant + Σ x_v · coeff_v`, every coefficient sharing the same shape.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMatrix {
    constant: DMatrix<f64>,
    terms: BTreeMap<VarId, DMatrix<f64>>,
}

impl AffineMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::constant(DMatrix::zeros(rows, cols))
    }

    pub fn constant(m: DMatrix<f64>) -> Self {
        Self {
            constant: m,
            terms: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::constant(DMatrix::identity(n, n))
    }

    /// A single unknown times a fixed basis matrix.
    pub fn var(v: VarId, basis: DMatrix<f64>) -> Self {
        let mut terms = BTreeMap::new();
        let shape = basis.shape();
        terms.insert(v, basis);
        Self {
            constant: DMatrix::zeros(shape.0, shape.1),
            terms,
        }
    }

    pub fn nrows(&self) -> usize {
        self.constant.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.constant.ncols()
    }

    pub fn shape(&self) -> (usize, usize) {
        self.constant.shape()
    }

    pub fn constant_part(&self) -> &DMatrix<f64> {
        &self.constant
    }

    pub fn terms(&self) -> impl Iterator<Item = (VarId, &DMatrix<f64>)> {
        self.terms.iter().map(|(v, m)| (*v, m))
    }

    pub fn is_constant(&self) -> bool {
        self.terms.values().all(|m| m.iter().all(|x| *x == 0.0))
    }

    fn map(&self, f: impl Fn(&DMatrix<f64>) -> DMatrix<f64>) -> Self {
        Self {
            constant: f(&self.constant),
            terms: self.terms.iter().map(|(v, m)| (*v, f(m))).collect(),
        }
    }

    pub fn scale(&self, s: f64) -> Self {
        self.map(|m| m * s)
    }

    /// `m · self`
    pub fn lmul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(m.ncols(), self.nrows(), "lmul shape mismatch");
        self.map(|c| m * c)
    }

    /// `self · m`
    pub fn rmul(&self, m: &DMatrix<f64>) -> Self {
        assert_eq!(self.ncols(), m.nrows(), "rmul shape mismatch");
        self.map(|c| c * m)
    }

    pub fn transpose(&self) -> Self {
        self.map(|m| m.transpose())
    }

    /// `self + selfᵀ`
    pub fn sym(&self) -> Self {
        self + &self.transpose()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut out = self.constant.clone();
        for (v, m) in &self.terms {
            out += m * x[v.0];
        }
        out
    }

    /// Largest entry of `|M − Mᵀ|` over the constant part and every coefficient.
    pub fn asymmetry(&self) -> f64 {
        std::iter::once(&self.constant)
            .chain(self.terms.values())
            .map(|m| (m - m.transpose()).amax())
            .fold(0.0, f64::max)
    }

    /// Assemble a symmetric block matrix from its upper triangle. `upper[i][j]`
    /// (for `j ≥ i`) holds block `(i, j)`; `None` is a zero block. Block sizes
    /// come from `sizes`.
    pub fn symmetric_blocks(sizes: &[usize], upper: &[Vec<Option<AffineMatrix>>]) -> Self {
        let k = sizes.len();
        assert_eq!(upper.len(), k);
        let offsets: Vec<usize> = sizes
            .iter()
            .scan(0, |acc, s| {
                let o = *acc;
                *acc += s;
                Some(o)
            })
            .collect();
        let dim: usize = sizes.iter().sum();
        let mut out = AffineMatrix::zeros(dim, dim);
        for i in 0..k {
            assert_eq!(upper[i].len(), k - i, "row {i} of upper triangle has wrong length");
            for (jj, blk) in upper[i].iter().enumerate() {
                let j = i + jj;
                let Some(blk) = blk else { continue };
                assert_eq!(blk.shape(), (sizes[i], sizes[j]), "block ({i},{j}) shape");
                out.place(offsets[i], offsets[j], blk);
                if i != j {
                    out.place(offsets[j], offsets[i], &blk.transpose());
                }
            }
        }
        out
    }

    fn place(&mut self, r0: usize, c0: usize, blk: &AffineMatrix) {
        let (r, c) = blk.shape();
        let (nr, nc) = self.shape();
        self.constant
            .view_mut((r0, c0), (r, c))
            .copy_from(&blk.constant);
        for (v, m) in &blk.terms {
            let target = self
                .terms
                .entry(*v)
                .or_insert_with(|| DMatrix::zeros(nr, nc));
            target.view_mut((r0, c0), (r, c)).copy_from(m);
        }
    }
}

impl Add<&AffineMatrix> for &AffineMatrix {
    type Output = AffineMatrix;

    fn add(self, rhs: &AffineMatrix) -> AffineMatrix {
        assert_eq!(self.shape(), rhs.shape(), "add shape mismatch");
        let mut out = self.clone();
        out.constant += &rhs.constant;
        for (v, m) in &rhs.terms {
            match out.terms.get_mut(v) {
                Some(t) => *t += m,
                None => {
                    out.terms.insert(*v, m.clone());
                }
            }
        }
        out
    }
}

impl Add for AffineMatrix {
    type Output = AffineMatrix;

    fn add(self, rhs: AffineMatrix) -> AffineMatrix {
        &self + &rhs
    }
}

impl Add<&AffineMatrix> for AffineMatrix {
    type Output = AffineMatrix;

    fn add(self, rhs: &AffineMatrix) -> AffineMatrix {
        &self + rhs
    }
}

impl Add<AffineMatrix> for &AffineMatrix {
    type Output = AffineMatrix;

    fn add(self, rhs: AffineMatrix) -> AffineMatrix {
        self + &rhs
    }
}

impl Sub<&AffineMatrix> for AffineMatrix {
    type Output = AffineMatrix;

    fn sub(self, rhs: &AffineMatrix) -> AffineMatrix {
        &self - rhs
    }
}

impl Sub<AffineMatrix> for &AffineMatrix {
    type Output = AffineMatrix;

    fn sub(self, rhs: AffineMatrix) -> AffineMatrix {
        self - &rhs
    }
}

impl Sub<&AffineMatrix> for &AffineMatrix {
    type Output = AffineMatrix;

    fn sub(self, rhs: &AffineMatrix) -> AffineMatrix {
        self + &(-rhs)
    }
}

impl Sub for AffineMatrix {
    type Output = AffineMatrix;

    fn sub(self, rhs: AffineMatrix) -> AffineMatrix {
        &self - &rhs
    }
}

impl Neg for &AffineMatrix {
    type Output = AffineMatrix;

    fn neg(self) -> AffineMatrix {
        self.scale(-1.0)
    }
}

impl Neg for AffineMatrix {
    type Output = AffineMatrix;

    fn neg(self) -> AffineMatrix {
        self.scale(-1.0)
    }
}

impl Mul<f64> for &AffineMatrix {
    type Output = AffineMatrix;

    fn mul(self, s: f64) -> AffineMatrix {
        self.scale(s)
    }
}

impl Mul<f64> for AffineMatrix {
    type Output = AffineMatrix;

    fn mul(self, s: f64) -> AffineMatrix {
        self.scale(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::dmatrix;

    #[test]
    fn eval_is_affine() {
        let a = AffineMatrix::var(VarId(0), dmatrix![1.0, 2.0; 3.0, 4.0])
            + AffineMatrix::constant(dmatrix![1.0, 0.0; 0.0, 1.0]);
        assert_eq!(a.eval(&[2.0]), dmatrix![3.0, 4.0; 6.0, 9.0]);
        let t = a.lmul(&dmatrix![0.0, 1.0; 1.0, 0.0]);
        assert_eq!(t.eval(&[1.0]), dmatrix![3.0, 5.0; 2.0, 2.0]);
    }

    #[test]
    fn blocks_mirror_the_upper_triangle() {
        let x = AffineMatrix::var(VarId(0), dmatrix![1.0, 2.0]);
        let m = AffineMatrix::symmetric_blocks(
            &[1, 2],
            &[
                vec![Some(AffineMatrix::identity(1)), Some(x)],
                vec![Some(AffineMatrix::identity(2) * -1.0)],
            ],
        );
        let v = m.eval(&[3.0]);
        assert_eq!(v, dmatrix![1.0, 3.0, 6.0; 3.0, -1.0, 0.0; 6.0, 0.0, -1.0]);
        assert_eq!(m.asymmetry(), 0.0);
    }
}
