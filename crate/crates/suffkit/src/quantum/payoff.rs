//! POVM payoff optimization core: maximize Σ_i Tr[R^i P^i] over POVMs
//! (P^i), with a certified dual upper bound Tr[Y], Y ⪰ R^i for all i.

use crate::error::Result;
use crate::linalg::{psd_project, spectral_map, ComplexMatrix, HermitianOperator};

pub const ASCENT_ETA: f64 = 0.5;
pub const ASCENT_CAP: usize = 5000;
const CHECK_EVERY: usize = 10;
/// Projected-ascent iterations before switching to the fixed-point
/// polish; the plain ascent can stall at non-optimal fixed points.
const ASCENT_PHASE: usize = 300;
/// Extra PSD margin added by the shift so the polish map stays
/// invertible; cancels out of value, bound, and gap.
const SHIFT_MARGIN: f64 = 1e-6;

pub struct LinearMaxOutcome {
    pub value: f64,
    pub elements: Vec<HermitianOperator>,
    pub dual_bound: f64,
    pub gap: f64,
}

fn primal_value(r: &[HermitianOperator], p: &[HermitianOperator]) -> f64 {
    r.iter()
        .zip(p)
        .map(|(ri, pi)| ri.matrix().trace_product(pi.matrix()).re)
        .sum()
}

/// Smallest-trace identity lift of sym(Σ_i P^i R^i) dominating every R^i.
fn dual_bound(r: &[HermitianOperator], p: &[HermitianOperator]) -> Result<(f64, f64)> {
    let d = r[0].dim();
    let mut acc = ComplexMatrix::zeros(d, d);
    for (ri, pi) in r.iter().zip(p) {
        acc = acc.add(&pi.matrix().mul(ri.matrix()));
    }
    let y = HermitianOperator::from_symmetrized(&acc)?;
    let mut lift = 0.0f64;
    for ri in r {
        let diff = HermitianOperator::from_symmetrized(&ri.matrix().sub(y.matrix()))?;
        let eigs = diff.eigenvalues()?;
        lift = lift.max(*eigs.last().expect("nonempty spectrum"));
    }
    let bound = y.matrix().trace().re + lift.max(0.0) * d as f64;
    Ok((bound, lift.max(0.0)))
}

/// Projected block ascent with symmetric renormalization; claims
/// optimality only through the returned dual gap.
pub fn povm_linear_max(
    r: &[HermitianOperator],
    tol: f64,
    max_iters: usize,
) -> Result<LinearMaxOutcome> {
    let nx = r.len();
    let d = r[0].dim();

    // Shift every payoff operator strictly PSD; value and bound shift by
    // c·d each, the gap is invariant.
    let mut c = 0.0f64;
    for ri in r {
        c = c.max(-ri.min_eigenvalue()?);
    }
    c += SHIFT_MARGIN;
    let shifted: Vec<HermitianOperator> = r
        .iter()
        .map(|ri| {
            let m = ri
                .matrix()
                .add(&ComplexMatrix::identity(d).scale_re(c));
            HermitianOperator::from_symmetrized(&m)
        })
        .collect::<Result<_>>()?;

    let mut p: Vec<HermitianOperator> = (0..nx)
        .map(|_| {
            HermitianOperator::from_symmetrized(
                &ComplexMatrix::identity(d).scale_re(1.0 / nx as f64),
            )
            .expect("scaled identity is Hermitian")
        })
        .collect();

    let unshift = c * d as f64;
    let mut best: Option<LinearMaxOutcome> = None;
    let mut iters = 0usize;
    loop {
        if iters % CHECK_EVERY == 0 || iters >= max_iters {
            let value = primal_value(&shifted, &p) - unshift;
            let (bound, _) = dual_bound(&shifted, &p)?;
            let bound = bound - unshift;
            let gap = (bound - value).max(0.0);
            let better = best.as_ref().map(|b| gap < b.gap).unwrap_or(true);
            if better {
                best = Some(LinearMaxOutcome {
                    value,
                    elements: p.clone(),
                    dual_bound: bound,
                    gap,
                });
            }
            let done = best.as_ref().map(|b| b.gap <= tol).unwrap_or(false);
            if done || iters >= max_iters {
                return Ok(best.expect("at least one iterate evaluated"));
            }
        }
        if iters < ASCENT_PHASE {
            // Ascent step then renormalization back onto Σ P = I.
            let q: Vec<HermitianOperator> = shifted
                .iter()
                .zip(&p)
                .map(|(ri, pi)| {
                    let stepped = HermitianOperator::from_symmetrized(
                        &pi.matrix().add(&ri.matrix().scale_re(ASCENT_ETA)),
                    )?;
                    psd_project(&stepped)
                })
                .collect::<Result<_>>()?;
            p = renormalize(&q, d)?;
        } else {
            // Fixed-point polish: P^i ← Λ^{-1/2} R^i P^i R^i Λ^{-1/2}
            // with Λ = Σ_i R^i P^i R^i. Its fixed points satisfy the
            // optimality conditions; correctness is still claimed only
            // through the dual gap.
            let pieces: Vec<ComplexMatrix> = shifted
                .iter()
                .zip(&p)
                .map(|(ri, pi)| ri.matrix().mul(pi.matrix()).mul(ri.matrix()))
                .collect();
            let mut lam = ComplexMatrix::zeros(d, d);
            for piece in &pieces {
                lam = lam.add(piece);
            }
            let lam_op = HermitianOperator::from_symmetrized(&lam)?;
            let lam_inv_half = spectral_map(&lam_op, |l| 1.0 / l.max(1e-14).sqrt())?;
            let q: Vec<HermitianOperator> = pieces
                .iter()
                .map(|piece| {
                    HermitianOperator::from_symmetrized(
                        &lam_inv_half.matrix().mul(piece).mul(lam_inv_half.matrix()),
                    )
                })
                .collect::<Result<_>>()?;
            // Guard against drift of Σ P from the identity.
            p = renormalize(&q, d)?;
        }
        iters += 1;
    }
}

pub(crate) fn renormalize(q: &[HermitianOperator], d: usize) -> Result<Vec<HermitianOperator>> {
    let mut s = ComplexMatrix::zeros(d, d);
    for qi in q {
        s = s.add(qi.matrix());
    }
    let s_op = HermitianOperator::from_symmetrized(&s)?;
    // Pseudo-inverse square root: inverting near-zero eigenvalues of Σ q
    // amplifies roundoff past the POVM validation tolerance.
    let s_inv_half = spectral_map(&s_op, |l| if l > 1e-10 { 1.0 / l.sqrt() } else { 0.0 })?;
    let mut p: Vec<HermitianOperator> = q
        .iter()
        .map(|qi| {
            HermitianOperator::from_symmetrized(
                &s_inv_half.matrix().mul(qi.matrix()).mul(s_inv_half.matrix()),
            )
        })
        .collect::<Result<_>>()?;
    // Spread the exact identity defect (a PSD projector onto the null
    // space of Σ q, plus roundoff) uniformly so Σ P = I holds exactly.
    let mut sum = ComplexMatrix::zeros(d, d);
    for pi in &p {
        sum = sum.add(pi.matrix());
    }
    let defect = ComplexMatrix::identity(d).sub(&sum).scale_re(1.0 / q.len() as f64);
    for pi in &mut p {
        *pi = HermitianOperator::from_symmetrized(&pi.matrix().add(&defect))?;
    }
    Ok(p)
}

/// Exact binary optimum: value = Tr[R²] + Tr[(R¹−R²)₊] with the
/// positive-part spectral projector as the first POVM element.
pub fn binary_closed_form(
    r1: &HermitianOperator,
    r2: &HermitianOperator,
) -> Result<(f64, Vec<HermitianOperator>)> {
    let d = r1.dim();
    let diff = HermitianOperator::from_symmetrized(&r1.matrix().sub(r2.matrix()))?;
    let positive_trace: f64 = diff.eigenvalues()?.into_iter().filter(|&l| l > 0.0).sum();
    let value = r2.matrix().trace().re + positive_trace;
    let p1 = spectral_map(&diff, |l| if l > 0.0 { 1.0 } else { 0.0 })?;
    let p2 = HermitianOperator::from_symmetrized(
        &ComplexMatrix::identity(d).sub(p1.matrix()),
    )?;
    Ok((value, vec![p1, p2]))
}
