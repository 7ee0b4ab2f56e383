//! Informationally complete POVMs with self-adjoint dual operators and
//! the reconstruction identity T = Σ_i Tr[T F^i] θ^i.

use num_complex::Complex64;

use crate::error::{Result, SuffError};
use crate::linalg::{spectral_map, ComplexMatrix, HermitianOperator};
use crate::quantum::Povm;
use crate::solver::{cholesky, cholesky_solve, rank_of_vectors, CHOL_JITTER};

pub const RECON_TOL: f64 = 1e-8;
pub const FRAME_DIM_CAP: usize = 8;

/// IC-POVM with duals; together they reconstruct every operator.
#[derive(Debug, Clone)]
pub struct ICFrame {
    dim: usize,
    povm: Povm,
    duals: Vec<HermitianOperator>,
}

impl ICFrame {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn povm(&self) -> &Povm {
        &self.povm
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        self.povm.elements()
    }

    pub fn duals(&self) -> &[HermitianOperator] {
        &self.duals
    }
}

/// The deterministic rank-one spanning family {|j⟩, (|j⟩+|k⟩)/√2,
/// (|j⟩+i|k⟩)/√2 : j<k}, exactly d² vectors.
fn spanning_projectors(d: usize) -> Vec<ComplexMatrix> {
    let mut out = Vec::with_capacity(d * d);
    let zero = Complex64::new(0.0, 0.0);
    for j in 0..d {
        let mut v = vec![zero; d];
        v[j] = Complex64::new(1.0, 0.0);
        out.push(ComplexMatrix::projector(&v));
    }
    let s = std::f64::consts::FRAC_1_SQRT_2;
    for j in 0..d {
        for k in j + 1..d {
            let mut v = vec![zero; d];
            v[j] = Complex64::new(s, 0.0);
            v[k] = Complex64::new(s, 0.0);
            out.push(ComplexMatrix::projector(&v));
            let mut w = vec![zero; d];
            w[j] = Complex64::new(s, 0.0);
            w[k] = Complex64::new(0.0, s);
            out.push(ComplexMatrix::projector(&w));
        }
    }
    out
}

/// Deterministic IC-POVM: F^i = G^{-1/2} Π_i G^{-1/2} for the spanning
/// projectors Π_i and G = Σ_i Π_i, so Σ_i F^i = I by construction and
/// every element stays rank one.
pub fn build_ic_povm(d: usize) -> Result<ICFrame> {
    if !(2..=FRAME_DIM_CAP).contains(&d) {
        return Err(SuffError::Capacity(format!(
            "IC frame dimension {d} outside [2, {FRAME_DIM_CAP}]"
        )));
    }
    let projectors = spanning_projectors(d);
    let mut g = ComplexMatrix::zeros(d, d);
    for p in &projectors {
        g = g.add(p);
    }
    let g_op = HermitianOperator::from_symmetrized(&g)?;
    let g_inv_half = spectral_map(&g_op, |l| {
        if l > 1e-12 {
            1.0 / l.sqrt()
        } else {
            0.0
        }
    })?;
    let elements: Vec<HermitianOperator> = projectors
        .iter()
        .map(|p| {
            HermitianOperator::from_symmetrized(
                &g_inv_half.matrix().mul(p).mul(g_inv_half.matrix()),
            )
        })
        .collect::<Result<_>>()?;
    let vecs: Vec<Vec<f64>> = elements.iter().map(|e| e.to_real_vec()).collect();
    let rank = rank_of_vectors(&vecs, 1e-9)?;
    if rank != d * d {
        return Err(SuffError::Numerical {
            what: format!("frame rank {rank} below {}", d * d),
            residual: (d * d - rank) as f64,
        });
    }
    let povm = Povm::new(elements)?;
    let duals = dual_frame(&povm)?;
    Ok(ICFrame { dim: d, povm, duals })
}

/// Duals of a spanning frame via the normal equations of the frame
/// superoperator S = Σ_i |F^i⟩⟩⟨⟨F^i|, solved by jittered Cholesky.
pub fn dual_frame(povm: &Povm) -> Result<Vec<HermitianOperator>> {
    let d = povm.dim();
    let n = d * d;
    let vecs: Vec<Vec<f64>> = povm.elements().iter().map(|e| e.to_real_vec()).collect();
    let rank = rank_of_vectors(&vecs, 1e-9)?;
    if rank != n {
        return Err(SuffError::Precondition(format!(
            "frame is not informationally complete: rank {rank} < {n}"
        )));
    }
    let mut s = vec![vec![0.0; n]; n];
    for v in &vecs {
        for a in 0..n {
            for b in 0..n {
                s[a][b] += v[a] * v[b];
            }
        }
    }
    let l = cholesky(&s, CHOL_JITTER)?;
    let duals: Vec<HermitianOperator> = vecs
        .iter()
        .map(|v| HermitianOperator::from_real_vec(d, &cholesky_solve(&l, v)))
        .collect();
    // Reconstruction identity on the operator basis.
    for m in 0..n {
        let mut basis = vec![0.0; n];
        basis[m] = 1.0;
        let e = HermitianOperator::from_real_vec(d, &basis);
        let mut acc = ComplexMatrix::zeros(d, d);
        for (f, theta) in povm.elements().iter().zip(&duals) {
            let coeff = e.matrix().trace_product(f.matrix()).re;
            acc = acc.add(&theta.matrix().scale_re(coeff));
        }
        let defect = acc.sub(e.matrix()).max_norm();
        if defect > RECON_TOL {
            return Err(SuffError::Numerical {
                what: format!("reconstruction identity fails on basis element {m}"),
                residual: defect,
            });
        }
    }
    Ok(duals)
}

/// Σ_i Tr[t F^i] θ^i.
pub fn reconstruct(t: &HermitianOperator, frame: &ICFrame) -> Result<HermitianOperator> {
    if t.dim() != frame.dim() {
        return Err(SuffError::Shape("operator dimension mismatch".into()));
    }
    let d = frame.dim();
    let mut acc = ComplexMatrix::zeros(d, d);
    for (f, theta) in frame.elements().iter().zip(frame.duals()) {
        let coeff = t.matrix().trace_product(f.matrix()).re;
        acc = acc.add(&theta.matrix().scale_re(coeff));
    }
    HermitianOperator::from_symmetrized(&acc)
}
