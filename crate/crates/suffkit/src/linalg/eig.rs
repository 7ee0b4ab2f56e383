//! Hermitian eigendecomposition by cyclic Jacobi rotations.
//!
//! Jacobi is chosen over faster methods for determinism: no pivoting
//! randomness, so repeated runs give identical certificates.

use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use super::{tol, ComplexMatrix, HermitianOperator};
use crate::error::{Result, SuffError};

const MAX_SWEEPS: usize = 100;

/// Eigendecomposition of a Hermitian operator.
///
/// Returns eigenvalues in ascending order and a unitary whose columns are
/// the matching eigenvectors, so that U diag(λ) U† reconstructs the input
/// within `tol::EIG_RECON`.
pub fn eig_hermitian(h: &HermitianOperator) -> Result<(Vec<f64>, ComplexMatrix)> {
    let d = h.dim();
    let mut a = h.matrix().clone();
    let mut v = ComplexMatrix::identity(d);
    let scale = a.max_norm().max(1.0);
    let target = 1e-15 * scale;

    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for p in 0..d {
            for q in (p + 1)..d {
                off = off.max(a[(p, q)].norm());
            }
        }
        if off <= target {
            break;
        }
        for p in 0..d {
            for q in (p + 1)..d {
                let g = a[(p, q)];
                if g.norm() <= target {
                    continue;
                }
                // Phase factor making the off-diagonal entry real positive,
                // then a standard real Jacobi rotation on the 2x2 block.
                let u = g.conj() / g.norm();
                let alpha = a[(p, p)].re;
                let beta = a[(q, q)].re;
                let tau = (beta - alpha) / (2.0 * g.norm());
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                // Column rotation J: J[p][p]=c, J[p][q]=s, J[q][p]=-u·s, J[q][q]=u·c.
                let jpp = Complex64::new(c, 0.0);
                let jpq = Complex64::new(s, 0.0);
                let jqp = -u * s;
                let jqq = u * c;
                // A ← J† A J applied in place on rows/cols p,q.
                for k in 0..d {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = akp * jpp + akq * jqp;
                    a[(k, q)] = akp * jpq + akq * jqq;
                }
                for k in 0..d {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = jpp.conj() * apk + jqp.conj() * aqk;
                    a[(q, k)] = jpq.conj() * apk + jqq.conj() * aqk;
                }
                for k in 0..d {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = vkp * jpp + vkq * jqp;
                    v[(k, q)] = vkp * jpq + vkq * jqq;
                }
            }
        }
    }

    let mut off = 0.0f64;
    for p in 0..d {
        for q in (p + 1)..d {
            off = off.max(a[(p, q)].norm());
        }
    }
    if off > 1e-12 * scale {
        return Err(SuffError::Numerical {
            what: "jacobi eigensolver did not converge".into(),
            residual: off,
        });
    }

    // Sort ascending, permuting eigenvector columns along.
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| a[(i, i)].re.partial_cmp(&a[(j, j)].re).unwrap());
    let vals: Vec<f64> = order.iter().map(|&i| a[(i, i)].re).collect();
    let mut vecs = ComplexMatrix::zeros(d, d);
    for (new, &old) in order.iter().enumerate() {
        for k in 0..d {
            vecs[(k, new)] = v[(k, old)];
        }
    }
    Ok((vals, vecs))
}

/// Outcome of a simultaneous diagonalization attempt.
#[derive(Debug, Clone)]
pub enum DiagOutcome {
    /// Unitary basis diagonalizing every family member within `tol::SIMDIAG`.
    Basis(ComplexMatrix),
    /// First non-commuting pair and its commutator max-norm.
    NonCommuting { first: usize, second: usize, norm: f64 },
}

/// Simultaneous diagonalization of a family of Hermitian operators.
///
/// Diagonalizes a random real-coefficient combination of the family and
/// verifies; a generic combination splits degeneracies, with up to three
/// seeded retries.
pub fn simultaneous_diagonalization(family: &[HermitianOperator]) -> Result<DiagOutcome> {
    if family.is_empty() {
        return Err(SuffError::Invalid("empty family".into()));
    }
    let d = family[0].dim();
    if family.iter().any(|m| m.dim() != d) {
        return Err(SuffError::Shape("family members differ in dimension".into()));
    }
    for i in 0..family.len() {
        for j in (i + 1)..family.len() {
            let norm = family[i].matrix().commutator(family[j].matrix()).max_norm();
            if norm > tol::COMMUTE {
                return Ok(DiagOutcome::NonCommuting {
                    first: i,
                    second: j,
                    norm,
                });
            }
        }
    }

    let mut rng = StdRng::seed_from_u64(0x51f_fd1a);
    let mut last_residual = f64::INFINITY;
    for _attempt in 0..3 {
        let mut combo = ComplexMatrix::zeros(d, d);
        for m in family {
            let coeff: f64 = rng.gen::<f64>() + 0.1;
            combo = combo.add(&m.matrix().scale_re(coeff));
        }
        let combo = HermitianOperator::from_symmetrized(&combo)?;
        let (_, basis) = eig_hermitian(&combo)?;
        let residual = family
            .iter()
            .map(|m| off_diagonal_norm(&basis.adjoint().mul(m.matrix()).mul(&basis)))
            .fold(0.0f64, f64::max);
        if residual < tol::SIMDIAG {
            return Ok(DiagOutcome::Basis(basis));
        }
        last_residual = residual;
    }
    Err(SuffError::Numerical {
        what: "simultaneous diagonalization failed after 3 seeded retries".into(),
        residual: last_residual,
    })
}

fn off_diagonal_norm(m: &ComplexMatrix) -> f64 {
    let d = m.rows();
    let mut acc = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            if i != j {
                acc = acc.max(m[(i, j)].norm());
            }
        }
    }
    acc
}
