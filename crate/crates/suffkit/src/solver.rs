//! Shared convex-feasibility machinery: dense real linear algebra
//! (Cholesky with jitter, least squares, numerical rank) and a Dykstra
//! alternating-projection solver between a product-of-PSD-cones and an
//! affine subspace, used by the POVM-fitting and CPTP-feasibility
//! operations.

use crate::error::{Result, SuffError};
use crate::linalg::{psd_project, HermitianOperator};

pub const CHOL_JITTER: f64 = 1e-12;

/// Cholesky factorization of a symmetric positive (semi)definite matrix
/// with diagonal jitter; returns the lower factor.
pub fn cholesky(g: &[Vec<f64>], jitter: f64) -> Result<Vec<Vec<f64>>> {
    let n = g.len();
    let mut l = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..=i {
            let mut s = g[i][j];
            for k in 0..j {
                s -= l[i][k] * l[j][k];
            }
            if i == j {
                let d = s + jitter;
                if d <= 0.0 {
                    return Err(SuffError::Numerical {
                        what: "Cholesky pivot not positive".into(),
                        residual: d,
                    });
                }
                l[i][i] = d.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Solve L Lᵀ x = b given the lower Cholesky factor.
pub fn cholesky_solve(l: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = l.len();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l[i][k] * y[k];
        }
        y[i] = s / l[i][i];
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in i + 1..n {
            s -= l[k][i] * x[k];
        }
        x[i] = s / l[i][i];
    }
    x
}

/// Least-squares coefficients c minimizing ‖Σ_r c_r v_r − target‖₂ via the
/// jittered normal equations.
pub fn least_squares_decompose(vectors: &[Vec<f64>], target: &[f64]) -> Result<Vec<f64>> {
    let m = vectors.len();
    let mut g = vec![vec![0.0; m]; m];
    let mut rhs = vec![0.0; m];
    for i in 0..m {
        for j in 0..=i {
            let dot: f64 = vectors[i].iter().zip(&vectors[j]).map(|(a, b)| a * b).sum();
            g[i][j] = dot;
            g[j][i] = dot;
        }
        rhs[i] = vectors[i].iter().zip(target).map(|(a, b)| a * b).sum();
    }
    let scale = g.iter().map(|r| r.iter().fold(0.0f64, |a, &x| a.max(x.abs()))).fold(0.0f64, f64::max);
    let l = cholesky(&g, CHOL_JITTER * scale.max(1.0))?;
    Ok(cholesky_solve(&l, &rhs))
}

/// Number of singular values of the stacked family above `tol`.
///
/// Uses the symmetric embedding [[0, A],[Aᵀ, 0]], whose spectrum is ±σ_i
/// padded with zeros; this keeps small singular values at full absolute
/// precision, unlike the squared Gram route.
pub fn rank_of_vectors(vectors: &[Vec<f64>], tol: f64) -> Result<usize> {
    if vectors.is_empty() {
        return Ok(0);
    }
    let k = vectors.len();
    let n = vectors[0].len();
    if vectors.iter().any(|v| v.len() != n) {
        return Err(SuffError::Shape("ragged vector family".into()));
    }
    let m = k + n;
    let mut emb = crate::linalg::ComplexMatrix::zeros(m, m);
    for (i, v) in vectors.iter().enumerate() {
        for (j, &x) in v.iter().enumerate() {
            emb[(i, k + j)] = num_complex::Complex64::new(x, 0.0);
            emb[(k + j, i)] = num_complex::Complex64::new(x, 0.0);
        }
    }
    let h = HermitianOperator::from_symmetrized(&emb)?;
    let eigs = h.eigenvalues()?;
    Ok(eigs.iter().filter(|&&l| l > tol).count())
}

/// One scalar equality constraint ⟨normal, x⟩ = target over the
/// concatenated real parametrization of all blocks.
pub struct AffineConstraint {
    pub normal: Vec<f64>,
    pub target: f64,
}

pub struct DykstraProblem {
    /// Hermitian block dimensions; every block is constrained PSD.
    pub block_dims: Vec<usize>,
    pub constraints: Vec<AffineConstraint>,
}

pub enum DykstraOutcome {
    /// PSD blocks meeting the affine constraints within the reached residual.
    Feasible {
        blocks: Vec<HermitianOperator>,
        residual: f64,
    },
    /// Residual stalled: closest-pair normal (affine point minus cone
    /// point) and the affine-side point, for separating-functional
    /// extraction by the caller.
    Infeasible {
        normal_blocks: Vec<HermitianOperator>,
        affine_blocks: Vec<HermitianOperator>,
        residual: f64,
    },
}

pub const STALL_WINDOW: usize = 500;
/// Relative improvement over a full window below this declares a stall.
/// An absolute 1e-12-per-window rule would only fire after ~10⁶
/// iterations on gapped instances, whose residual decays like c/k toward
/// the positive set distance.
pub const STALL_RELATIVE: f64 = 1e-7;

struct AffineProjector<'a> {
    constraints: &'a [AffineConstraint],
    chol: Vec<Vec<f64>>,
}

impl<'a> AffineProjector<'a> {
    fn new(constraints: &'a [AffineConstraint]) -> Result<Self> {
        let m = constraints.len();
        let mut g = vec![vec![0.0; m]; m];
        for i in 0..m {
            for j in 0..=i {
                let dot: f64 = constraints[i]
                    .normal
                    .iter()
                    .zip(&constraints[j].normal)
                    .map(|(a, b)| a * b)
                    .sum();
                g[i][j] = dot;
                g[j][i] = dot;
            }
        }
        let scale = g
            .iter()
            .map(|r| r.iter().fold(0.0f64, |a, &x| a.max(x.abs())))
            .fold(0.0f64, f64::max);
        let chol = cholesky(&g, CHOL_JITTER * scale.max(1.0))?;
        Ok(Self { constraints, chol })
    }

    fn project(&self, x: &mut [f64]) {
        let m = self.constraints.len();
        let mut viol = vec![0.0; m];
        for (i, c) in self.constraints.iter().enumerate() {
            let dot: f64 = c.normal.iter().zip(x.iter()).map(|(a, b)| a * b).sum();
            viol[i] = dot - c.target;
        }
        let lambda = cholesky_solve(&self.chol, &viol);
        for (i, c) in self.constraints.iter().enumerate() {
            for (xv, nv) in x.iter_mut().zip(&c.normal) {
                *xv -= lambda[i] * nv;
            }
        }
    }
}

fn split_blocks(dims: &[usize], x: &[f64]) -> Vec<HermitianOperator> {
    let mut out = Vec::with_capacity(dims.len());
    let mut off = 0;
    for &d in dims {
        let n = d * d;
        out.push(HermitianOperator::from_real_vec(d, &x[off..off + n]));
        off += n;
    }
    out
}

fn join_blocks(blocks: &[HermitianOperator]) -> Vec<f64> {
    let mut out = Vec::new();
    for b in blocks {
        out.extend(b.to_real_vec());
    }
    out
}

fn psd_project_vec(dims: &[usize], x: &[f64]) -> Result<Vec<f64>> {
    let blocks = split_blocks(dims, x);
    let mut out = Vec::with_capacity(x.len());
    for b in &blocks {
        out.extend(psd_project(b)?.to_real_vec());
    }
    Ok(out)
}

/// Dykstra alternating projections between the PSD product cone and the
/// affine subspace of `problem`. Converges to the closest pair; when the
/// sets intersect the residual goes to zero.
pub fn dykstra_solve(
    problem: &DykstraProblem,
    initial: &[HermitianOperator],
    tol: f64,
    max_iters: usize,
) -> Result<DykstraOutcome> {
    let dims = &problem.block_dims;
    let total: usize = dims.iter().map(|d| d * d).sum();
    let mut x = join_blocks(initial);
    if x.len() != total {
        return Err(SuffError::Shape("initial point has wrong block shapes".into()));
    }
    for c in &problem.constraints {
        if c.normal.len() != total {
            return Err(SuffError::Shape("constraint normal has wrong length".into()));
        }
    }
    let projector = AffineProjector::new(&problem.constraints)?;

    let mut p = vec![0.0; total]; // cone correction
    let mut q = vec![0.0; total]; // affine correction
    let mut window: std::collections::VecDeque<f64> = std::collections::VecDeque::new();
    let mut last_cone = x.clone();
    let mut last_affine = x.clone();
    let mut last_res = f64::INFINITY;

    for _ in 0..max_iters {
        let mut z: Vec<f64> = x.iter().zip(&p).map(|(a, b)| a + b).collect();
        let y = psd_project_vec(dims, &z)?;
        for i in 0..total {
            p[i] = z[i] - y[i];
        }
        z = y.iter().zip(&q).map(|(a, b)| a + b).collect();
        let mut x2 = z.clone();
        projector.project(&mut x2);
        for i in 0..total {
            q[i] = z[i] - x2[i];
        }
        let res: f64 = y
            .iter()
            .zip(&x2)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        last_cone = y;
        last_affine = x2.clone();
        last_res = res;
        x = x2;
        if res <= tol {
            return Ok(DykstraOutcome::Feasible {
                blocks: split_blocks(dims, &last_cone),
                residual: res,
            });
        }
        window.push_back(res);
        if window.len() > STALL_WINDOW {
            let old = window.pop_front().unwrap();
            if old - res < STALL_RELATIVE * res.max(1e-9) {
                let normal: Vec<f64> = last_affine
                    .iter()
                    .zip(&last_cone)
                    .map(|(a, b)| a - b)
                    .collect();
                return Ok(DykstraOutcome::Infeasible {
                    normal_blocks: split_blocks(dims, &normal),
                    affine_blocks: split_blocks(dims, &last_affine),
                    residual: res,
                });
            }
        }
    }
    // Sublinearly converging (degenerate) instances can exhaust the cap
    // while still shrinking the residual; hand the iterates back so the
    // caller can attempt a rescue or extract a certificate, exactly as
    // on a detected stall.
    let normal: Vec<f64> = last_affine
        .iter()
        .zip(&last_cone)
        .map(|(a, b)| a - b)
        .collect();
    Ok(DykstraOutcome::Infeasible {
        normal_blocks: split_blocks(dims, &normal),
        affine_blocks: split_blocks(dims, &last_affine),
        residual: last_res,
    })
}
