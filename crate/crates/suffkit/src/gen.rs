//! Seeded random instance generators: classical models via
//! Dirichlet-uniform vectors, quantum states via normalized Wishart
//! matrices, POVMs and channels via random isometries. Every consumer
//! derives an independent substream from (seed, stream index) so
//! parallelism cannot change results.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::classical::ClassicalModel;
use crate::linalg::{spectral_map, ComplexMatrix, DensityMatrix, HermitianOperator};

/// Deterministic substream for one (seed, stream) pair.
pub fn rng_for(seed: u64, stream: u64) -> ChaCha12Rng {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Standard normal via Box-Muller.
pub fn normal(rng: &mut ChaCha12Rng) -> f64 {
    let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.gen::<f64>();
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

fn complex_normal(rng: &mut ChaCha12Rng) -> Complex64 {
    Complex64::new(normal(rng), normal(rng))
}

/// Flat Dirichlet sample (uniform on the simplex).
pub fn dirichlet_uniform(rng: &mut ChaCha12Rng, n: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..n)
        .map(|_| -rng.gen_range(f64::MIN_POSITIVE..1.0).ln())
        .collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|x| x / sum).collect()
}

pub fn random_classical_model(rng: &mut ChaCha12Rng, nt: usize, nd: usize) -> ClassicalModel {
    let labels = (0..nt).map(|i| format!("t{i}")).collect();
    let probs = (0..nt).map(|_| dirichlet_uniform(rng, nd)).collect();
    ClassicalModel::new(labels, nd, probs).expect("generated model is valid")
}

/// Complex Ginibre matrix with iid standard complex normal entries.
pub fn ginibre(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> ComplexMatrix {
    let entries = (0..rows * cols).map(|_| complex_normal(rng)).collect();
    ComplexMatrix::new(rows, cols, entries).expect("shape is consistent")
}

/// Full-rank random state G G† / Tr[G G†].
pub fn random_density(rng: &mut ChaCha12Rng, d: usize) -> DensityMatrix {
    let g = ginibre(rng, d, d);
    let w = g.mul(&g.adjoint());
    let t = w.trace().re;
    DensityMatrix::from_matrix(w.scale_re(1.0 / t)).expect("Wishart state is valid")
}

/// Random pure state projector.
pub fn random_pure(rng: &mut ChaCha12Rng, d: usize) -> DensityMatrix {
    let v: Vec<Complex64> = (0..d).map(|_| complex_normal(rng)).collect();
    let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
    let v: Vec<Complex64> = v.into_iter().map(|c| c / norm).collect();
    DensityMatrix::pure(&v)
}

/// Gram-Schmidt orthonormalization of Ginibre columns: Haar-ish isometry
/// with `cols` orthonormal columns in dimension `rows`.
pub fn random_isometry(rng: &mut ChaCha12Rng, rows: usize, cols: usize) -> ComplexMatrix {
    assert!(cols <= rows, "isometry needs rows >= cols");
    let g = ginibre(rng, rows, cols);
    let mut basis: Vec<Vec<Complex64>> = Vec::with_capacity(cols);
    for j in 0..cols {
        let mut v: Vec<Complex64> = (0..rows).map(|i| g[(i, j)]).collect();
        for b in &basis {
            let overlap: Complex64 = b.iter().zip(&v).map(|(x, y)| x.conj() * y).sum();
            for (vi, bi) in v.iter_mut().zip(b) {
                *vi -= overlap * bi;
            }
        }
        let norm: f64 = v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt();
        for vi in v.iter_mut() {
            *vi /= norm;
        }
        basis.push(v);
    }
    let mut m = ComplexMatrix::zeros(rows, cols);
    for (j, b) in basis.iter().enumerate() {
        for (i, &x) in b.iter().enumerate() {
            m[(i, j)] = x;
        }
    }
    m
}

pub fn random_unitary(rng: &mut ChaCha12Rng, d: usize) -> ComplexMatrix {
    random_isometry(rng, d, d)
}

/// Random POVM with `n` full-rank elements: Wishart pieces renormalized by
/// S^{-1/2}(·)S^{-1/2}.
pub fn random_povm(rng: &mut ChaCha12Rng, d: usize, n: usize) -> Vec<HermitianOperator> {
    let pieces: Vec<ComplexMatrix> = (0..n)
        .map(|_| {
            let g = ginibre(rng, d, d);
            g.mul(&g.adjoint())
        })
        .collect();
    let mut s = ComplexMatrix::zeros(d, d);
    for p in &pieces {
        s = s.add(p);
    }
    let s_op = HermitianOperator::from_symmetrized(&s).expect("sum of Wisharts is Hermitian");
    let s_inv_half = spectral_map(&s_op, |l| 1.0 / l.max(1e-14).sqrt())
        .expect("renormalizer exists for full-rank sum");
    pieces
        .into_iter()
        .map(|p| {
            let m = s_inv_half.matrix().mul(&p).mul(s_inv_half.matrix());
            HermitianOperator::from_symmetrized(&m).expect("renormalized element is Hermitian")
        })
        .collect()
}

/// Kraus operators of a random channel from a Haar-ish isometry
/// V: ℋ_in → ℋ_out ⊗ ℋ_env with K_k = (I ⊗ ⟨k|) V.
pub fn random_kraus(
    rng: &mut ChaCha12Rng,
    dim_in: usize,
    dim_out: usize,
    env: usize,
) -> Vec<ComplexMatrix> {
    let v = random_isometry(rng, dim_out * env, dim_in);
    // Row index of V is (out, env) in row-major pairing out*env + k.
    (0..env)
        .map(|k| {
            let mut m = ComplexMatrix::zeros(dim_out, dim_in);
            for o in 0..dim_out {
                for j in 0..dim_in {
                    m[(o, j)] = v[(o * env + k, j)];
                }
            }
            m
        })
        .collect()
}
