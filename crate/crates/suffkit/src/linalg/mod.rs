//! Dense complex-matrix primitives: tensor products, partial traces,
//! Hermitian eigendecomposition, PSD projection, and simultaneous
//! diagonalization of commuting families.
//!
//! Everything downstream (POVM optimizers, channel feasibility, morphism
//! construction) is built on the operations in this module. All values are
//! immutable after construction and every operation is a pure function.

mod eig;

pub use eig::{eig_hermitian, simultaneous_diagonalization, DiagOutcome};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SuffError};

/// Centralized numeric tolerances. Construction-time checks are tight
/// (1e-10/1e-12); iterative solvers default to 1e-8.
pub mod tol {
    /// Hermiticity defect allowed at construction.
    pub const HERMITIAN: f64 = 1e-12;
    /// Minimum eigenvalue allowed for a density matrix.
    pub const DENSITY_EIG: f64 = -1e-10;
    /// Trace defect allowed for a density matrix.
    pub const DENSITY_TRACE: f64 = 1e-10;
    /// Eigendecomposition reconstruction target.
    pub const EIG_RECON: f64 = 1e-10;
    /// Commutator norm below which operators are treated as commuting.
    pub const COMMUTE: f64 = 1e-9;
    /// Off-diagonal residual accepted for a simultaneous diagonalization.
    pub const SIMDIAG: f64 = 1e-8;
    /// Default tolerance for iterative solvers.
    pub const SOLVER: f64 = 1e-8;
    /// Maximum dimension of any tensor-product result.
    pub const DIM_CAP: usize = 64;
}

/// Dense complex matrix, row-major storage.
#[derive(Debug, Clone, PartialEq)]
pub struct ComplexMatrix {
    rows: usize,
    cols: usize,
    entries: Vec<Complex64>,
}

impl ComplexMatrix {
    pub fn new(rows: usize, cols: usize, entries: Vec<Complex64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(SuffError::Shape(format!("degenerate shape {rows}x{cols}")));
        }
        if entries.len() != rows * cols {
            return Err(SuffError::Shape(format!(
                "entry count {} != {rows}x{cols}",
                entries.len()
            )));
        }
        if entries.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(SuffError::Invalid("non-finite matrix entry".into()));
        }
        Ok(Self { rows, cols, entries })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            entries: vec![Complex64::new(0.0, 0.0); rows * cols],
        }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(1.0, 0.0);
        }
        m
    }

    /// Diagonal matrix from real entries.
    pub fn diag(values: &[f64]) -> Self {
        let mut m = Self::zeros(values.len(), values.len());
        for (i, &v) in values.iter().enumerate() {
            m[(i, i)] = Complex64::new(v, 0.0);
        }
        m
    }

    /// Rank-one projector |v⟩⟨v| / ⟨v|v⟩.
    pub fn projector(v: &[Complex64]) -> Self {
        let d = v.len();
        let norm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        let mut m = Self::zeros(d, d);
        for i in 0..d {
            for j in 0..d {
                m[(i, j)] = v[i] * v[j].conj() / norm2;
            }
        }
        m
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.entries
    }

    pub fn adjoint(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    pub fn transpose(&self) -> Self {
        let mut out = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)];
            }
        }
        out
    }

    pub fn trace(&self) -> Complex64 {
        debug_assert!(self.is_square());
        (0..self.rows).map(|i| self[(i, i)]).sum()
    }

    pub fn add(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a + b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        debug_assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        let entries = self
            .entries
            .iter()
            .zip(&other.entries)
            .map(|(a, b)| a - b)
            .collect();
        Self {
            rows: self.rows,
            cols: self.cols,
            entries,
        }
    }

    pub fn scale(&self, factor: Complex64) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            entries: self.entries.iter().map(|z| z * factor).collect(),
        }
    }

    pub fn scale_re(&self, factor: f64) -> Self {
        self.scale(Complex64::new(factor, 0.0))
    }

    pub fn mul(&self, other: &Self) -> Self {
        debug_assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    /// Largest absolute entry.
    pub fn max_norm(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn fro_norm(&self) -> f64 {
        self.entries
            .iter()
            .map(|z| z.norm_sqr())
            .sum::<f64>()
            .sqrt()
    }

    /// Hermiticity defect ‖M − M†‖_max.
    pub fn hermiticity_defect(&self) -> f64 {
        self.sub(&self.adjoint()).max_norm()
    }

    /// (M + M†)/2.
    pub fn symmetrize(&self) -> Self {
        self.add(&self.adjoint()).scale_re(0.5)
    }

    /// Tr[self · other].
    pub fn trace_product(&self, other: &Self) -> Complex64 {
        debug_assert_eq!(self.cols, other.rows);
        let mut acc = Complex64::new(0.0, 0.0);
        for i in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(i, k)] * other[(k, i)];
            }
        }
        acc
    }

    /// AB − BA.
    pub fn commutator(&self, other: &Self) -> Self {
        self.mul(other).sub(&other.mul(self))
    }
}

impl std::ops::Index<(usize, usize)> for ComplexMatrix {
    type Output = Complex64;
    fn index(&self, (i, j): (usize, usize)) -> &Complex64 {
        &self.entries[i * self.cols + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for ComplexMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Complex64 {
        &mut self.entries[i * self.cols + j]
    }
}

/// Shared JSON encoding: nested arrays of [re, im] pairs, row-major.
impl Serialize for ComplexMatrix {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = (0..self.rows)
            .map(|i| (0..self.cols).map(|j| [self[(i, j)].re, self[(i, j)].im]).collect())
            .collect();
        rows.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ComplexMatrix {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(deserializer)?;
        let nrows = rows.len();
        if nrows == 0 {
            return Err(serde::de::Error::custom("empty matrix"));
        }
        let ncols = rows[0].len();
        if ncols == 0 || rows.iter().any(|r| r.len() != ncols) {
            return Err(serde::de::Error::custom("ragged matrix rows"));
        }
        let entries = rows
            .into_iter()
            .flatten()
            .map(|[re, im]| Complex64::new(re, im))
            .collect();
        ComplexMatrix::new(nrows, ncols, entries).map_err(serde::de::Error::custom)
    }
}

/// Square matrix verified Hermitian at construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct HermitianOperator {
    matrix: ComplexMatrix,
}

impl HermitianOperator {
    pub fn new(matrix: ComplexMatrix) -> Result<Self> {
        if !matrix.is_square() {
            return Err(SuffError::Shape(format!(
                "hermitian operator must be square, got {}x{}",
                matrix.rows(),
                matrix.cols()
            )));
        }
        let defect = matrix.hermiticity_defect();
        if defect > tol::HERMITIAN {
            return Err(SuffError::Invalid(format!(
                "hermiticity defect {defect:.3e} exceeds {:.0e}",
                tol::HERMITIAN
            )));
        }
        // Exact hermitization so downstream arithmetic never accumulates
        // the construction defect.
        Ok(Self {
            matrix: matrix.symmetrize(),
        })
    }

    /// Symmetrizes first; accepts any square matrix whose Hermitian part
    /// is wanted (used by solvers that average round-off away).
    pub fn from_symmetrized(matrix: &ComplexMatrix) -> Result<Self> {
        Self::new(matrix.symmetrize())
    }

    pub fn zeros(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::zeros(dim, dim),
        }
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            matrix: ComplexMatrix::identity(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.matrix.rows()
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        &self.matrix
    }

    pub fn eigenvalues(&self) -> Result<Vec<f64>> {
        Ok(eig_hermitian(self)?.0)
    }

    pub fn min_eigenvalue(&self) -> Result<f64> {
        Ok(self.eigenvalues()?[0])
    }

    /// Σ |λ_k|.
    pub fn trace_norm(&self) -> Result<f64> {
        Ok(self.eigenvalues()?.iter().map(|l| l.abs()).sum())
    }

    /// Real Hilbert-Schmidt parametrization: diagonal entries followed by
    /// √2·(Re, Im) of the strict upper triangle. Preserves Tr[AB] as the
    /// Euclidean inner product of the vectors.
    pub fn to_real_vec(&self) -> Vec<f64> {
        let d = self.dim();
        let mut v = Vec::with_capacity(d * d);
        for i in 0..d {
            v.push(self.matrix[(i, i)].re);
        }
        let s = std::f64::consts::SQRT_2;
        for i in 0..d {
            for j in (i + 1)..d {
                v.push(s * self.matrix[(i, j)].re);
                v.push(s * self.matrix[(i, j)].im);
            }
        }
        v
    }

    pub fn from_real_vec(dim: usize, v: &[f64]) -> Self {
        debug_assert_eq!(v.len(), dim * dim);
        let mut m = ComplexMatrix::zeros(dim, dim);
        for i in 0..dim {
            m[(i, i)] = Complex64::new(v[i], 0.0);
        }
        let s = std::f64::consts::SQRT_2;
        let mut k = dim;
        for i in 0..dim {
            for j in (i + 1)..dim {
                let re = v[k] / s;
                let im = v[k + 1] / s;
                k += 2;
                m[(i, j)] = Complex64::new(re, im);
                m[(j, i)] = Complex64::new(re, -im);
            }
        }
        Self { matrix: m }
    }
}

impl TryFrom<ComplexMatrix> for HermitianOperator {
    type Error = SuffError;
    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::new(m)
    }
}

impl From<HermitianOperator> for ComplexMatrix {
    fn from(h: HermitianOperator) -> ComplexMatrix {
        h.matrix
    }
}

/// Hermitian, unit trace, PSD within `tol::DENSITY_EIG`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ComplexMatrix", into = "ComplexMatrix")]
pub struct DensityMatrix {
    op: HermitianOperator,
}

impl DensityMatrix {
    pub fn new(op: HermitianOperator) -> Result<Self> {
        let tr = op.matrix().trace();
        if (tr.re - 1.0).abs() > tol::DENSITY_TRACE || tr.im.abs() > tol::DENSITY_TRACE {
            return Err(SuffError::Invalid(format!(
                "density matrix trace {tr} not 1"
            )));
        }
        let min = op.min_eigenvalue()?;
        if min < tol::DENSITY_EIG {
            return Err(SuffError::Invalid(format!(
                "density matrix min eigenvalue {min:.3e}"
            )));
        }
        Ok(Self { op })
    }

    pub fn from_matrix(matrix: ComplexMatrix) -> Result<Self> {
        Self::new(HermitianOperator::new(matrix)?)
    }

    pub fn maximally_mixed(dim: usize) -> Self {
        Self {
            op: HermitianOperator::new(ComplexMatrix::identity(dim).scale_re(1.0 / dim as f64))
                .expect("identity is hermitian"),
        }
    }

    pub fn pure(v: &[Complex64]) -> Self {
        Self {
            op: HermitianOperator::new(ComplexMatrix::projector(v)).expect("projector is hermitian"),
        }
    }

    pub fn dim(&self) -> usize {
        self.op.dim()
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.op
    }

    pub fn matrix(&self) -> &ComplexMatrix {
        self.op.matrix()
    }
}

impl TryFrom<ComplexMatrix> for DensityMatrix {
    type Error = SuffError;
    fn try_from(m: ComplexMatrix) -> Result<Self> {
        Self::from_matrix(m)
    }
}

impl From<DensityMatrix> for ComplexMatrix {
    fn from(d: DensityMatrix) -> ComplexMatrix {
        d.op.matrix().clone()
    }
}

/// ‖ρ − σ‖₁ for Hermitian arguments.
pub fn trace_distance(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<f64> {
    HermitianOperator::from_symmetrized(&a.sub(b))?.trace_norm()
}

/// Which subsystem `partial_trace` removes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TracedSide {
    A,
    B,
}

/// Kronecker product. Capped at `tol::DIM_CAP` in each result dimension.
pub fn tensor_product(a: &ComplexMatrix, b: &ComplexMatrix) -> Result<ComplexMatrix> {
    let rows = a.rows() * b.rows();
    let cols = a.cols() * b.cols();
    if rows > tol::DIM_CAP || cols > tol::DIM_CAP {
        return Err(SuffError::Capacity(format!(
            "tensor product dimension {rows}x{cols} exceeds cap {}",
            tol::DIM_CAP
        )));
    }
    let mut out = ComplexMatrix::zeros(rows, cols);
    for i in 0..a.rows() {
        for j in 0..a.cols() {
            let aij = a[(i, j)];
            if aij.norm_sqr() == 0.0 {
                continue;
            }
            for k in 0..b.rows() {
                for l in 0..b.cols() {
                    out[(i * b.rows() + k, j * b.cols() + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    Ok(out)
}

/// Partial trace of a square matrix on a `dim_a`·`dim_b` space.
/// Trace is preserved: Tr[result] = Tr[m].
pub fn partial_trace(
    m: &ComplexMatrix,
    dim_a: usize,
    dim_b: usize,
    traced: TracedSide,
) -> Result<ComplexMatrix> {
    if !m.is_square() || m.rows() != dim_a * dim_b {
        return Err(SuffError::Shape(format!(
            "partial trace expects {0}x{0} with {0} = {dim_a}*{dim_b}, got {1}x{2}",
            dim_a * dim_b,
            m.rows(),
            m.cols()
        )));
    }
    match traced {
        TracedSide::B => {
            let mut out = ComplexMatrix::zeros(dim_a, dim_a);
            for a1 in 0..dim_a {
                for a2 in 0..dim_a {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for b in 0..dim_b {
                        acc += m[(a1 * dim_b + b, a2 * dim_b + b)];
                    }
                    out[(a1, a2)] = acc;
                }
            }
            Ok(out)
        }
        TracedSide::A => {
            let mut out = ComplexMatrix::zeros(dim_b, dim_b);
            for b1 in 0..dim_b {
                for b2 in 0..dim_b {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for a in 0..dim_a {
                        acc += m[(a * dim_b + b1, a * dim_b + b2)];
                    }
                    out[(b1, b2)] = acc;
                }
            }
            Ok(out)
        }
    }
}

/// Nearest PSD matrix in Frobenius norm: eigenvalues clipped at zero.
pub fn psd_project(h: &HermitianOperator) -> Result<HermitianOperator> {
    let (vals, vecs) = eig_hermitian(h)?;
    let clipped: Vec<f64> = vals.iter().map(|&l| l.max(0.0)).collect();
    reassemble(&clipped, &vecs)
}

/// U diag(f(λ)) U† for a spectral function f.
pub fn spectral_map(h: &HermitianOperator, f: impl Fn(f64) -> f64) -> Result<HermitianOperator> {
    let (vals, vecs) = eig_hermitian(h)?;
    let mapped: Vec<f64> = vals.iter().map(|&l| f(l)).collect();
    reassemble(&mapped, &vecs)
}

fn reassemble(vals: &[f64], vecs: &ComplexMatrix) -> Result<HermitianOperator> {
    let d = vecs.rows();
    let mut dm = ComplexMatrix::zeros(d, d);
    for (i, &v) in vals.iter().enumerate() {
        dm[(i, i)] = Complex64::new(v, 0.0);
    }
    HermitianOperator::from_symmetrized(&vecs.mul(&dm).mul(&vecs.adjoint()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    pub(crate) fn random_matrix(rng: &mut StdRng, rows: usize, cols: usize) -> ComplexMatrix {
        let entries = (0..rows * cols)
            .map(|_| c(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5))
            .collect();
        ComplexMatrix::new(rows, cols, entries).unwrap()
    }

    pub(crate) fn random_hermitian(rng: &mut StdRng, dim: usize) -> HermitianOperator {
        let m = random_matrix(rng, dim, dim);
        HermitianOperator::new(m.symmetrize()).unwrap()
    }

    #[test]
    fn tensor_identity_case() {
        let i2 = ComplexMatrix::identity(2);
        let i4 = tensor_product(&i2, &i2).unwrap();
        assert_eq!(i4, ComplexMatrix::identity(4));
    }

    #[test]
    fn tensor_diagonal_product() {
        let a = ComplexMatrix::diag(&[1.0, 0.0]);
        let b = ComplexMatrix::diag(&[0.0, 1.0]);
        let t = tensor_product(&a, &b).unwrap();
        assert_eq!(t, ComplexMatrix::diag(&[0.0, 1.0, 0.0, 0.0]));
    }

    #[test]
    fn tensor_matches_index_formula_oracle() {
        let mut rng = StdRng::seed_from_u64(7);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 2, 2);
        let t = tensor_product(&a, &b).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                for k in 0..2 {
                    for l in 0..2 {
                        let expect = a[(i, j)] * b[(k, l)];
                        let got = t[(i * 2 + k, j * 2 + l)];
                        assert!((expect - got).norm() == 0.0);
                    }
                }
            }
        }
    }

    #[test]
    fn tensor_associativity_exact() {
        let mut rng = StdRng::seed_from_u64(8);
        let a = random_matrix(&mut rng, 2, 2);
        let b = random_matrix(&mut rng, 2, 2);
        let cmat = random_matrix(&mut rng, 2, 2);
        let left = tensor_product(&tensor_product(&a, &b).unwrap(), &cmat).unwrap();
        let right = tensor_product(&a, &tensor_product(&b, &cmat).unwrap()).unwrap();
        // Entries are triple products evaluated in different association
        // orders, so equality holds to the last ulp, not bitwise.
        assert!(left.sub(&right).max_norm() < 1e-15);
    }

    #[test]
    fn tensor_capacity_error() {
        let big = ComplexMatrix::identity(16);
        let err = tensor_product(&big, &ComplexMatrix::identity(8)).unwrap_err();
        assert!(matches!(err, SuffError::Capacity(_)));
    }

    #[test]
    fn partial_trace_product_factorization() {
        let mut rng = StdRng::seed_from_u64(9);
        let a = random_matrix(&mut rng, 3, 3);
        let b = random_matrix(&mut rng, 2, 2);
        let t = tensor_product(&a, &b).unwrap();
        let reduced = partial_trace(&t, 3, 2, TracedSide::B).unwrap();
        let expect = a.scale(b.trace());
        assert!(reduced.sub(&expect).max_norm() < 1e-12);
        // Trace preservation.
        assert!((reduced.trace() - t.trace()).norm() < 1e-12);
    }

    #[test]
    fn partial_trace_maximally_entangled_marginal() {
        // Ψ⁺ for d=2, traced over A, gives I/2.
        let v = [c(1.0, 0.0), c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)];
        let psi = ComplexMatrix::projector(&v);
        let reduced = partial_trace(&psi, 2, 2, TracedSide::A).unwrap();
        let expect = ComplexMatrix::identity(2).scale_re(0.5);
        assert!(reduced.sub(&expect).max_norm() < 1e-12);
    }

    #[test]
    fn partial_trace_matches_double_index_summation_oracle() {
        let mut rng = StdRng::seed_from_u64(10);
        let h = random_hermitian(&mut rng, 4);
        let m = h.matrix();
        let got = partial_trace(m, 2, 2, TracedSide::B).unwrap();
        // Explicit oracle: out[a1,a2] = Σ_b m[2*a1+b, 2*a2+b].
        for a1 in 0..2 {
            for a2 in 0..2 {
                let expect = m[(2 * a1, 2 * a2)] + m[(2 * a1 + 1, 2 * a2 + 1)];
                assert!((got[(a1, a2)] - expect).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn partial_trace_shape_error() {
        let m = ComplexMatrix::identity(5);
        assert!(partial_trace(&m, 2, 2, TracedSide::B).is_err());
    }

    #[test]
    fn psd_project_fixed_point() {
        let mut rng = StdRng::seed_from_u64(11);
        let h = random_hermitian(&mut rng, 3);
        let psd = psd_project(&h).unwrap();
        let again = psd_project(&psd).unwrap();
        assert!(psd.matrix().sub(again.matrix()).max_norm() < 1e-10);
        // A PSD input is a fixed point up to 1e-12.
        let sq = HermitianOperator::from_symmetrized(&h.matrix().mul(h.matrix())).unwrap();
        let proj = psd_project(&sq).unwrap();
        assert!(proj.matrix().sub(sq.matrix()).max_norm() < 1e-12);
    }

    #[test]
    fn psd_project_clips_eigenvalues() {
        let h = HermitianOperator::new(ComplexMatrix::diag(&[1.0, -1.0])).unwrap();
        let p = psd_project(&h).unwrap();
        assert!(p.matrix().sub(&ComplexMatrix::diag(&[1.0, 0.0])).max_norm() < 1e-14);
    }

    #[test]
    fn psd_project_optimality_sampling_oracle() {
        let mut rng = StdRng::seed_from_u64(12);
        let h = random_hermitian(&mut rng, 3);
        let p = psd_project(&h).unwrap();
        assert!(p.min_eigenvalue().unwrap() >= -1e-12);
        let dist = h.matrix().sub(p.matrix()).fro_norm();
        for _ in 0..100 {
            let q = random_hermitian(&mut rng, 3);
            let q = psd_project(&q).unwrap();
            let other = h.matrix().sub(q.matrix()).fro_norm();
            assert!(dist <= other + 1e-12);
        }
    }

    #[test]
    fn density_matrix_rejects_negative() {
        let m = ComplexMatrix::diag(&[1.5, -0.5]);
        assert!(DensityMatrix::from_matrix(m).is_err());
    }

    #[test]
    fn real_vec_roundtrip_preserves_inner_product() {
        let mut rng = StdRng::seed_from_u64(13);
        let a = random_hermitian(&mut rng, 3);
        let b = random_hermitian(&mut rng, 3);
        let va = a.to_real_vec();
        let vb = b.to_real_vec();
        let dot: f64 = va.iter().zip(&vb).map(|(x, y)| x * y).sum();
        let tr = a.matrix().trace_product(b.matrix()).re;
        assert!((dot - tr).abs() < 1e-12);
        let back = HermitianOperator::from_real_vec(3, &va);
        assert!(back.matrix().sub(a.matrix()).max_norm() < 1e-14);
    }

    #[test]
    fn serde_complex_matrix_roundtrip() {
        let mut rng = StdRng::seed_from_u64(14);
        let m = random_matrix(&mut rng, 2, 3);
        let json = serde_json::to_string(&m).unwrap();
        let back: ComplexMatrix = serde_json::from_str(&json).unwrap();
        assert_eq!(m, back);
    }
}
