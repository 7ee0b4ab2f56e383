//! Choi representations of channels, CPTP feasibility between families
//! of states, the abelian-output measure-and-prepare extension, and the
//! teleportation-based extension of statistical morphisms via Bell bases.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SuffError};
use crate::linalg::{
    partial_trace, psd_project, spectral_map, tensor_product, trace_distance, ComplexMatrix,
    DensityMatrix, HermitianOperator, TracedSide,
};
use crate::quantum::{fit_povm_with_initial, FitOutcome, Povm, SeparatingFunctional};
use crate::solver::{
    dykstra_solve, rank_of_vectors, AffineConstraint, DykstraOutcome, DykstraProblem,
};

pub const CHOI_PSD_TOL: f64 = 1e-8;
pub const CHOI_TP_TOL: f64 = 1e-8;
pub const SUPEROP_TP_TOL: f64 = 1e-8;
const CPTP_CAP: usize = 100_000;

/// Choi matrix J = (id ⊗ ℰ)(Ψ⁺) with Ψ⁺ normalized to trace 1, so
/// Tr[J] = 1 and Tr_out J = I_in / d_in for a trace-preserving map.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "ChoiRaw", into = "ChoiRaw")]
pub struct ChoiMatrix {
    dim_in: usize,
    dim_out: usize,
    j: HermitianOperator,
}

#[derive(Serialize, Deserialize)]
struct ChoiRaw {
    dim_in: usize,
    dim_out: usize,
    matrix: ComplexMatrix,
}

impl TryFrom<ChoiRaw> for ChoiMatrix {
    type Error = SuffError;
    fn try_from(raw: ChoiRaw) -> Result<Self> {
        ChoiMatrix::new(raw.dim_in, raw.dim_out, HermitianOperator::new(raw.matrix)?)
    }
}

impl From<ChoiMatrix> for ChoiRaw {
    fn from(c: ChoiMatrix) -> Self {
        ChoiRaw {
            dim_in: c.dim_in,
            dim_out: c.dim_out,
            matrix: c.j.matrix().clone(),
        }
    }
}

impl ChoiMatrix {
    pub fn new(dim_in: usize, dim_out: usize, j: HermitianOperator) -> Result<Self> {
        if dim_in == 0 || dim_out == 0 || j.dim() != dim_in * dim_out {
            return Err(SuffError::Shape(format!(
                "Choi matrix dimension {} does not match {dim_in}·{dim_out}",
                j.dim()
            )));
        }
        let min = j.min_eigenvalue()?;
        if min < -CHOI_PSD_TOL {
            return Err(SuffError::Invalid(format!(
                "Choi matrix has eigenvalue {min:.3e}"
            )));
        }
        let marginal = partial_trace(j.matrix(), dim_in, dim_out, TracedSide::B)?;
        let defect = marginal
            .sub(&ComplexMatrix::identity(dim_in).scale_re(1.0 / dim_in as f64))
            .max_norm();
        if defect > CHOI_TP_TOL {
            return Err(SuffError::Invalid(format!(
                "Choi input marginal deviates from I/d by {defect:.3e}"
            )));
        }
        Ok(Self { dim_in, dim_out, j })
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    pub fn operator(&self) -> &HermitianOperator {
        &self.j
    }

    /// ℰ(X) = d_in · Tr_in[(Xᵀ ⊗ I) J] on an arbitrary Hermitian input.
    pub fn apply_op(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        if x.dim() != self.dim_in {
            return Err(SuffError::Shape(format!(
                "input dimension {} does not match {}",
                x.dim(),
                self.dim_in
            )));
        }
        let lifted = tensor_product(
            &x.matrix().transpose(),
            &ComplexMatrix::identity(self.dim_out),
        )?;
        let traced = partial_trace(
            &lifted.mul(self.j.matrix()),
            self.dim_in,
            self.dim_out,
            TracedSide::A,
        )?;
        HermitianOperator::from_symmetrized(&traced.scale_re(self.dim_in as f64))
    }
}

/// Apply the channel to a state; the output trace must be 1 within 1e-8
/// and is renormalized exactly before validation.
pub fn apply_choi(j: &ChoiMatrix, rho: &DensityMatrix) -> Result<DensityMatrix> {
    let out = j.apply_op(rho.operator())?;
    let trace = out.matrix().trace().re;
    if (trace - 1.0).abs() > 1e-8 {
        return Err(SuffError::Numerical {
            what: "channel output trace deviates from 1".into(),
            residual: (trace - 1.0).abs(),
        });
    }
    DensityMatrix::new(HermitianOperator::from_symmetrized(
        &psd_project(&out)?.matrix().scale_re(1.0 / trace),
    )?)
}

/// Statistical morphism in the real Hilbert-Schmidt parametrization; the
/// dual ℒ* is the matrix transpose.
#[derive(Debug, Clone)]
pub struct Superoperator {
    dim_in: usize,
    dim_out: usize,
    /// Rows indexed by output components, columns by input components.
    matrix: Vec<Vec<f64>>,
    trace_preserving: bool,
}

impl Superoperator {
    pub fn new(
        dim_in: usize,
        dim_out: usize,
        matrix: Vec<Vec<f64>>,
        trace_preserving: bool,
    ) -> Result<Self> {
        let n_in = dim_in * dim_in;
        let n_out = dim_out * dim_out;
        if matrix.len() != n_out || matrix.iter().any(|row| row.len() != n_in) {
            return Err(SuffError::Shape(format!(
                "superoperator table must be {n_out}×{n_in}"
            )));
        }
        let sup = Self {
            dim_in,
            dim_out,
            matrix,
            trace_preserving,
        };
        if trace_preserving {
            let dual_id = sup.dual_apply(&HermitianOperator::identity(dim_out))?;
            let defect = dual_id
                .matrix()
                .sub(&ComplexMatrix::identity(dim_in))
                .max_norm();
            if defect > SUPEROP_TP_TOL {
                return Err(SuffError::Invalid(format!(
                    "dual does not fix the identity: defect {defect:.3e}"
                )));
            }
        }
        Ok(sup)
    }

    /// Build the table by evaluating the action on a Hermitian basis; the
    /// trace-preserving flag is detected from ℒ*(I).
    pub fn from_action(
        dim_in: usize,
        dim_out: usize,
        mut f: impl FnMut(&HermitianOperator) -> Result<HermitianOperator>,
    ) -> Result<Self> {
        let n_in = dim_in * dim_in;
        let n_out = dim_out * dim_out;
        let mut matrix = vec![vec![0.0; n_in]; n_out];
        for m in 0..n_in {
            let mut v = vec![0.0; n_in];
            v[m] = 1.0;
            let img = f(&HermitianOperator::from_real_vec(dim_in, &v))?;
            if img.dim() != dim_out {
                return Err(SuffError::Shape("action output dimension mismatch".into()));
            }
            for (row, &x) in matrix.iter_mut().zip(&img.to_real_vec()) {
                row[m] = x;
            }
        }
        let probe = Self {
            dim_in,
            dim_out,
            matrix,
            trace_preserving: false,
        };
        let dual_id = probe.dual_apply(&HermitianOperator::identity(dim_out))?;
        let tp = dual_id
            .matrix()
            .sub(&ComplexMatrix::identity(dim_in))
            .max_norm()
            <= SUPEROP_TP_TOL;
        Self::new(dim_in, dim_out, probe.matrix, tp)
    }

    pub fn identity(dim: usize) -> Self {
        let n = dim * dim;
        let mut matrix = vec![vec![0.0; n]; n];
        for (m, row) in matrix.iter_mut().enumerate() {
            row[m] = 1.0;
        }
        Self {
            dim_in: dim,
            dim_out: dim,
            matrix,
            trace_preserving: true,
        }
    }

    pub fn dim_in(&self) -> usize {
        self.dim_in
    }

    pub fn dim_out(&self) -> usize {
        self.dim_out
    }

    /// Real matrix over the Hilbert–Schmidt parametrization coordinates.
    pub fn matrix(&self) -> &[Vec<f64>] {
        &self.matrix
    }

    pub fn is_trace_preserving(&self) -> bool {
        self.trace_preserving
    }

    pub fn apply(&self, x: &HermitianOperator) -> Result<HermitianOperator> {
        if x.dim() != self.dim_in {
            return Err(SuffError::Shape("superoperator input dimension".into()));
        }
        let v = x.to_real_vec();
        let out: Vec<f64> = self
            .matrix
            .iter()
            .map(|row| row.iter().zip(&v).map(|(a, b)| a * b).sum())
            .collect();
        Ok(HermitianOperator::from_real_vec(self.dim_out, &out))
    }

    /// ℒ*(Y) defined by Tr[ℒ(X) Y] = Tr[X ℒ*(Y)].
    pub fn dual_apply(&self, y: &HermitianOperator) -> Result<HermitianOperator> {
        if y.dim() != self.dim_out {
            return Err(SuffError::Shape("superoperator dual input dimension".into()));
        }
        let v = y.to_real_vec();
        let n_in = self.dim_in * self.dim_in;
        let mut out = vec![0.0; n_in];
        for (row, &vi) in self.matrix.iter().zip(&v) {
            for (o, &r) in out.iter_mut().zip(row) {
                *o += r * vi;
            }
        }
        Ok(HermitianOperator::from_real_vec(self.dim_in, &out))
    }

    /// Complex-linear extension of the action via the Hermitian split.
    pub fn apply_complex(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (h1, h2) = hermitian_split(a)?;
        let r1 = self.apply(&h1)?;
        let r2 = self.apply(&h2)?;
        Ok(r1
            .matrix()
            .add(&r2.matrix().scale(Complex64::new(0.0, 1.0))))
    }

    /// Complex-linear extension of the dual.
    pub fn dual_apply_complex(&self, a: &ComplexMatrix) -> Result<ComplexMatrix> {
        let (h1, h2) = hermitian_split(a)?;
        let r1 = self.dual_apply(&h1)?;
        let r2 = self.dual_apply(&h2)?;
        Ok(r1
            .matrix()
            .add(&r2.matrix().scale(Complex64::new(0.0, 1.0))))
    }
}

/// A = H₁ + iH₂ with both parts Hermitian.
fn hermitian_split(a: &ComplexMatrix) -> Result<(HermitianOperator, HermitianOperator)> {
    let h1 = HermitianOperator::from_symmetrized(&a.add(&a.adjoint()).scale_re(0.5))?;
    let h2 = HermitianOperator::from_symmetrized(
        &a.sub(&a.adjoint()).scale(Complex64::new(0.0, -0.5)),
    )?;
    Ok((h1, h2))
}

/// Maximally entangled state Ψ⁺ = d⁻¹ Σ_{ij} |i⟩⟨j| ⊗ |i⟩⟨j|.
pub fn psi_plus(d: usize) -> DensityMatrix {
    let zero = Complex64::new(0.0, 0.0);
    let amp = Complex64::new(1.0 / (d as f64).sqrt(), 0.0);
    let mut v = vec![zero; d * d];
    for i in 0..d {
        v[i * d + i] = amp;
    }
    DensityMatrix::pure(&v)
}

/// Generalized Bell projectors with the Weyl shift/phase corrections.
#[derive(Debug, Clone)]
pub struct BellBasis {
    dim: usize,
    pub projectors: Vec<HermitianOperator>,
    pub unitaries: Vec<ComplexMatrix>,
    pub psi_plus: DensityMatrix,
}

impl BellBasis {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// B^{(a,b)} = (X^a Z^b ⊗ I) Ψ⁺ (X^a Z^b ⊗ I)†, indexed by a·d + b.
pub fn build_bell_basis(d: usize) -> Result<BellBasis> {
    if d < 2 {
        return Err(SuffError::Invalid("Bell basis needs dimension ≥ 2".into()));
    }
    let one = Complex64::new(1.0, 0.0);
    let mut shift = ComplexMatrix::zeros(d, d);
    let mut phase = ComplexMatrix::zeros(d, d);
    for j in 0..d {
        shift[((j + 1) % d, j)] = one;
        let angle = std::f64::consts::TAU * j as f64 / d as f64;
        phase[(j, j)] = Complex64::new(angle.cos(), angle.sin());
    }
    let psi = psi_plus(d);
    let id = ComplexMatrix::identity(d);
    let mut unitaries = Vec::with_capacity(d * d);
    let mut projectors = Vec::with_capacity(d * d);
    let mut xa = id.clone();
    for _a in 0..d {
        let mut u = xa.clone();
        for _b in 0..d {
            let lifted = tensor_product(&u, &id)?;
            let b = lifted.mul(psi.matrix()).mul(&lifted.adjoint());
            projectors.push(HermitianOperator::from_symmetrized(&b)?);
            unitaries.push(u.clone());
            u = u.mul(&phase);
        }
        xa = shift.mul(&xa);
    }
    Ok(BellBasis {
        dim: d,
        projectors,
        unitaries,
        psi_plus: psi,
    })
}

/// J = Σ_k |φ_k⟩⟨φ_k| with |φ_k⟩ = (I ⊗ K_k)|Ω⟩ / √d_in.
pub fn choi_from_kraus(kraus: &[ComplexMatrix]) -> Result<ChoiMatrix> {
    if kraus.is_empty() {
        return Err(SuffError::Invalid("empty Kraus family".into()));
    }
    let dim_out = kraus[0].rows();
    let dim_in = kraus[0].cols();
    if kraus.iter().any(|k| k.rows() != dim_out || k.cols() != dim_in) {
        return Err(SuffError::Shape("Kraus operator shape mismatch".into()));
    }
    let scale = 1.0 / (dim_in as f64).sqrt();
    let n = dim_in * dim_out;
    let mut j = ComplexMatrix::zeros(n, n);
    for k in kraus {
        let mut phi = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..dim_in {
            for o in 0..dim_out {
                phi[i * dim_out + o] = k[(o, i)] * scale;
            }
        }
        for a in 0..n {
            for b in 0..n {
                j[(a, b)] += phi[a] * phi[b].conj();
            }
        }
    }
    ChoiMatrix::new(dim_in, dim_out, HermitianOperator::from_symmetrized(&j)?)
}

/// J = (id ⊗ ℒ)(Ψ⁺), block (j,k) = ℒ(|j⟩⟨k|)/d.
pub fn choi_of_superoperator(sup: &Superoperator) -> Result<ChoiMatrix> {
    let din = sup.dim_in();
    let dout = sup.dim_out();
    let mut j = ComplexMatrix::zeros(din * dout, din * dout);
    for a in 0..din {
        for b in 0..din {
            let mut e = ComplexMatrix::zeros(din, din);
            e[(a, b)] = Complex64::new(1.0, 0.0);
            let img = sup.apply_complex(&e)?.scale_re(1.0 / din as f64);
            for o1 in 0..dout {
                for o2 in 0..dout {
                    j[(a * dout + o1, b * dout + o2)] = img[(o1, o2)];
                }
            }
        }
    }
    ChoiMatrix::new(din, dout, HermitianOperator::from_symmetrized(&j)?)
}

/// Inverse of `choi_of_superoperator` under the fixed convention.
pub fn superoperator_of_choi(choi: &ChoiMatrix) -> Result<Superoperator> {
    Superoperator::from_action(choi.dim_in(), choi.dim_out(), |x| choi.apply_op(x))
}

/// Human-readable obstruction: a pair whose trace distance grows.
#[derive(Debug, Clone)]
pub struct MonotonicityWitness {
    pub theta: usize,
    pub theta_prime: usize,
    pub input_distance: f64,
    pub output_distance: f64,
}

#[derive(Debug)]
pub enum CptpOutcome {
    Feasible(ChoiMatrix),
    Infeasible {
        residual: f64,
        witness: Option<MonotonicityWitness>,
    },
}

fn monotonicity_witness(
    inputs: &[DensityMatrix],
    outputs: &[DensityMatrix],
    tol: f64,
) -> Result<Option<MonotonicityWitness>> {
    let mut best: Option<MonotonicityWitness> = None;
    for a in 0..inputs.len() {
        for b in a + 1..inputs.len() {
            let din = trace_distance(inputs[a].matrix(), inputs[b].matrix())?;
            let dout = trace_distance(outputs[a].matrix(), outputs[b].matrix())?;
            if dout > din + tol {
                let better = best
                    .as_ref()
                    .map(|w| dout - din > w.output_distance - w.input_distance)
                    .unwrap_or(true);
                if better {
                    best = Some(MonotonicityWitness {
                        theta: a,
                        theta_prime: b,
                        input_distance: din,
                        output_distance: dout,
                    });
                }
            }
        }
    }
    Ok(best)
}

/// Search for a CPTP map with ℰ(ρ_θ) = σ_θ by alternating projections on
/// the Choi matrix; infeasibility is advisory and reported together with
/// a trace-distance monotonicity violation when one exists.
pub fn find_cptp_map(
    inputs: &[DensityMatrix],
    outputs: &[DensityMatrix],
    tol: f64,
) -> Result<CptpOutcome> {
    if inputs.is_empty() || inputs.len() != outputs.len() {
        return Err(SuffError::Shape("state lists must be nonempty and equal".into()));
    }
    let din = inputs[0].dim();
    let dout = outputs[0].dim();
    if inputs.iter().any(|r| r.dim() != din) || outputs.iter().any(|s| s.dim() != dout) {
        return Err(SuffError::Shape("state dimension mismatch within a list".into()));
    }
    let hin: Vec<HermitianOperator> = inputs.iter().map(|r| r.operator().clone()).collect();
    let hout: Vec<HermitianOperator> = outputs.iter().map(|s| s.operator().clone()).collect();
    match find_cptp_map_hermitian(&hin, &hout, din, dout, tol)? {
        CptpOutcome::Feasible(j) => Ok(CptpOutcome::Feasible(j)),
        CptpOutcome::Infeasible { residual, .. } => Ok(CptpOutcome::Infeasible {
            residual,
            witness: monotonicity_witness(inputs, outputs, tol)?,
        }),
    }
}

/// Same feasibility problem posed on arbitrary Hermitian action pairs
/// ℰ(A_k) = B_k; no monotonicity witness applies at this generality.
pub fn find_cptp_map_hermitian(
    inputs: &[HermitianOperator],
    outputs: &[HermitianOperator],
    din: usize,
    dout: usize,
    tol: f64,
) -> Result<CptpOutcome> {
    if inputs.is_empty() || inputs.len() != outputs.len() {
        return Err(SuffError::Shape("operator lists must be nonempty and equal".into()));
    }
    if tol <= 0.0 {
        return Err(SuffError::Invalid("tol must be positive".into()));
    }
    if inputs.iter().any(|r| r.dim() != din) || outputs.iter().any(|s| s.dim() != dout) {
        return Err(SuffError::Shape("operator dimension mismatch within a list".into()));
    }

    let n_in = din * din;
    let n_out = dout * dout;
    let mut constraints = Vec::with_capacity(n_in + inputs.len() * n_out);
    // Tr_out J = I/d_in, component-wise against a Hermitian input basis.
    for m in 0..n_in {
        let mut v = vec![0.0; n_in];
        v[m] = 1.0;
        let e = HermitianOperator::from_real_vec(din, &v);
        let lifted = tensor_product(e.matrix(), &ComplexMatrix::identity(dout))?;
        constraints.push(AffineConstraint {
            normal: HermitianOperator::from_symmetrized(&lifted)?.to_real_vec(),
            target: e.matrix().trace().re / din as f64,
        });
    }
    // Action constraints d_in · Tr[(ρ_θᵀ ⊗ F_m) J] = Tr[F_m σ_θ].
    for (rho, sigma) in inputs.iter().zip(outputs) {
        let rho_t = rho.matrix().transpose();
        for m in 0..n_out {
            let mut v = vec![0.0; n_out];
            v[m] = 1.0;
            let f = HermitianOperator::from_real_vec(dout, &v);
            let lifted = tensor_product(&rho_t, f.matrix())?;
            constraints.push(AffineConstraint {
                normal: HermitianOperator::from_symmetrized(&lifted)?.to_real_vec(),
                target: f.matrix().trace_product(sigma.matrix()).re / din as f64,
            });
        }
    }
    let problem = DykstraProblem {
        block_dims: vec![din * dout],
        constraints,
    };
    let initial = vec![HermitianOperator::from_symmetrized(
        &ComplexMatrix::identity(din * dout).scale_re(1.0 / (din * dout) as f64),
    )?];
    let inner_tol = (tol * 0.1).min(1e-9);

    let verify = |j: ChoiMatrix| -> Result<Option<ChoiMatrix>> {
        for (rho, sigma) in inputs.iter().zip(outputs) {
            let image = j.apply_op(rho)?;
            if trace_distance(image.matrix(), sigma.matrix())? > tol {
                return Ok(None);
            }
        }
        Ok(Some(j))
    };

    // Conjugating by (d_in · Tr_out J)^{-1/2} ⊗ I restores the exact
    // trace-preservation marginal while keeping positivity.
    fn repair_choi_marginal(
        din: usize,
        dout: usize,
        j: &HermitianOperator,
    ) -> Result<ChoiMatrix> {
        let marginal = HermitianOperator::from_symmetrized(&partial_trace(
            j.matrix(),
            din,
            dout,
            TracedSide::B,
        )?)?;
        let scaled = HermitianOperator::from_symmetrized(
            &marginal.matrix().scale_re(din as f64),
        )?;
        let inv_half =
            spectral_map(&scaled, |l| if l > 1e-12 { 1.0 / l.sqrt() } else { 0.0 })?;
        let lifted = tensor_product(inv_half.matrix(), &ComplexMatrix::identity(dout))?;
        let repaired = HermitianOperator::from_symmetrized(
            &lifted.mul(j.matrix()).mul(&lifted),
        )?;
        ChoiMatrix::new(din, dout, repaired)
    }

    // Slowly converging feasible instances stall with Dykstra's
    // correction memory saturated; restarting from the repaired iterate
    // resets the corrections and usually finishes the descent.
    let mut start = initial;
    let mut last_residual = f64::INFINITY;
    for attempt in 0..3 {
        match dykstra_solve(&problem, &start, inner_tol, CPTP_CAP)? {
            DykstraOutcome::Feasible { blocks, residual } => {
                let j =
                    ChoiMatrix::new(din, dout, blocks.into_iter().next().expect("one block"))?;
                return match verify(j)? {
                    Some(j) => Ok(CptpOutcome::Feasible(j)),
                    None => Err(SuffError::Numerical {
                        what: "solver converged but the channel misses a target state".into(),
                        residual,
                    }),
                };
            }
            DykstraOutcome::Infeasible {
                affine_blocks,
                residual,
                ..
            } => {
                // A stall close to feasibility may still yield a valid
                // map: PSD-project the affine iterate, restore the input
                // marginal exactly, and accept only if the action
                // verifies.
                let projected =
                    psd_project(&affine_blocks.into_iter().next().expect("one block"))?;
                if let Ok(j) = repair_choi_marginal(din, dout, &projected) {
                    if let Some(j) = verify(j)? {
                        return Ok(CptpOutcome::Feasible(j));
                    }
                }
                if residual >= last_residual * 0.5 && attempt > 0 {
                    // Restarting no longer helps; report the reached residual.
                    return Ok(CptpOutcome::Infeasible {
                        residual,
                        witness: None,
                    });
                }
                last_residual = residual;
                start = vec![projected];
            }
        }
    }
    Ok(CptpOutcome::Infeasible {
        residual: last_residual,
        witness: None,
    })
}

/// Abelian-range extension ℰ(ρ) = Σ_i Tr[Π̃^i ρ] Π^i as a Choi matrix
/// J = d_in⁻¹ Σ_i (Π̃^i)ᵀ ⊗ Π^i.
pub fn measure_prepare_extension(
    realizing_povm: &Povm,
    output_projectors: &[HermitianOperator],
) -> Result<ChoiMatrix> {
    if realizing_povm.len() != output_projectors.len() {
        return Err(SuffError::Shape(format!(
            "{} POVM elements but {} projectors",
            realizing_povm.len(),
            output_projectors.len()
        )));
    }
    if output_projectors.is_empty() {
        return Err(SuffError::Invalid("empty projector family".into()));
    }
    let dout = output_projectors[0].dim();
    if output_projectors.iter().any(|p| p.dim() != dout) {
        return Err(SuffError::Shape("projector dimension mismatch".into()));
    }
    let mut sum = ComplexMatrix::zeros(dout, dout);
    for (i, p) in output_projectors.iter().enumerate() {
        if (p.matrix().trace().re - 1.0).abs() > 1e-8
            || p.matrix().mul(p.matrix()).sub(p.matrix()).max_norm() > 1e-8
        {
            return Err(SuffError::Precondition(format!(
                "output operator {i} is not a rank-one projector"
            )));
        }
        for (jj, q) in output_projectors.iter().enumerate() {
            if jj != i && p.matrix().trace_product(q.matrix()).re.abs() > 1e-8 {
                return Err(SuffError::Precondition(format!(
                    "projectors {i} and {jj} are not orthogonal"
                )));
            }
        }
        sum = sum.add(p.matrix());
    }
    if sum.sub(&ComplexMatrix::identity(dout)).max_norm() > 1e-8 {
        return Err(SuffError::Precondition(
            "projector family does not sum to the identity".into(),
        ));
    }
    let din = realizing_povm.dim();
    let mut j = ComplexMatrix::zeros(din * dout, din * dout);
    for (tilde, pi) in realizing_povm.elements().iter().zip(output_projectors) {
        j = j.add(&tensor_product(&tilde.matrix().transpose(), pi.matrix())?);
    }
    ChoiMatrix::new(
        din,
        dout,
        HermitianOperator::from_symmetrized(&j.scale_re(1.0 / din as f64))?,
    )
}

/// Result of the teleportation construction: either the extending CPTP
/// map, or the separating functional showing no realizing POVM exists.
#[derive(Debug)]
pub enum ExtensionOutcome {
    Extended(ChoiMatrix),
    NotExtendable(SeparatingFunctional),
}

/// Extend a trace-preserving morphism defined on the whole input
/// operator space; equivalent to `teleportation_extension_on_span` with
/// the full Hermitian input basis.
pub fn teleportation_extension(
    morphism: &Superoperator,
    ancilla_span: &[DensityMatrix],
    tol: f64,
) -> Result<ExtensionOutcome> {
    let din = morphism.dim_in();
    let n_in = din * din;
    let basis: Vec<HermitianOperator> = (0..n_in)
        .map(|m| {
            let mut v = vec![0.0; n_in];
            v[m] = 1.0;
            HermitianOperator::from_real_vec(din, &v)
        })
        .collect();
    teleportation_extension_on_span(morphism, ancilla_span, &basis, tol)
}

/// Extend a trace-preserving morphism ℒ, required to be reproduced only
/// on the span of `input_span`, to a CPTP map by teleporting through a
/// Bell measurement fitted on β⊗γ.
pub fn teleportation_extension_on_span(
    morphism: &Superoperator,
    ancilla_span: &[DensityMatrix],
    input_span: &[HermitianOperator],
    tol: f64,
) -> Result<ExtensionOutcome> {
    if !morphism.is_trace_preserving() {
        return Err(SuffError::Precondition(
            "teleportation extension needs a trace-preserving morphism".into(),
        ));
    }
    if tol <= 0.0 {
        return Err(SuffError::Invalid("tol must be positive".into()));
    }
    let d = morphism.dim_out();
    let din = morphism.dim_in();
    if ancilla_span.iter().any(|w| w.dim() != d) {
        return Err(SuffError::Shape(format!(
            "ancilla states must live in dimension {d}"
        )));
    }
    let vecs: Vec<Vec<f64>> = ancilla_span
        .iter()
        .map(|w| w.operator().to_real_vec())
        .collect();
    let rank = rank_of_vectors(&vecs, 1e-9)?;
    if rank != d * d {
        return Err(SuffError::Precondition(format!(
            "ancilla span rank {rank} below {}",
            d * d
        )));
    }
    if input_span.is_empty() || input_span.iter().any(|s| s.dim() != din) {
        return Err(SuffError::Shape(format!(
            "input span states must live in dimension {din}"
        )));
    }
    let bell = build_bell_basis(d)?;

    // The realizing POVM must satisfy Tr[B̃^i (ω ⊗ σ)] = Tr[B^i (ω ⊗ ℒσ)]
    // on the product span; the closed form (id ⊗ ℒ*)(B^i) always
    // satisfies the statistics, so when it is positive the fit is skipped.
    let images: Vec<HermitianOperator> = input_span
        .iter()
        .map(|e| morphism.apply(e))
        .collect::<Result<_>>()?;
    let mut span_states = Vec::with_capacity(ancilla_span.len() * input_span.len());
    let mut pushed: Vec<Vec<HermitianOperator>> = Vec::with_capacity(ancilla_span.len());
    for w in ancilla_span {
        let mut row = Vec::with_capacity(input_span.len());
        for (e, img) in input_span.iter().zip(&images) {
            span_states.push(HermitianOperator::from_symmetrized(&tensor_product(
                w.matrix(),
                e.matrix(),
            )?)?);
            row.push(HermitianOperator::from_symmetrized(&tensor_product(
                w.matrix(),
                img.matrix(),
            )?)?);
        }
        pushed.push(row);
    }
    let targets: Vec<Vec<f64>> = bell
        .projectors
        .iter()
        .map(|b| {
            pushed
                .iter()
                .flatten()
                .map(|lifted| b.matrix().trace_product(lifted.matrix()).re)
                .collect()
        })
        .collect();

    let candidates: Vec<HermitianOperator> = bell
        .projectors
        .iter()
        .map(|b| dual_on_second_factor(morphism, b, d))
        .collect::<Result<_>>()?;
    let mut worst_eig = 0.0f64;
    for c in &candidates {
        worst_eig = worst_eig.min(c.min_eigenvalue()?);
    }
    let realizing = if worst_eig >= -1e-9 {
        Povm::new(candidates)?
    } else {
        let warm: Vec<HermitianOperator> = candidates
            .iter()
            .map(psd_project)
            .collect::<Result<_>>()?;
        match fit_povm_with_initial(&span_states, &targets, tol, Some(warm))? {
            FitOutcome::Feasible(povm) => povm,
            FitOutcome::Infeasible(sep) => return Ok(ExtensionOutcome::NotExtendable(sep)),
        }
    };

    // ℰ(ρ) = Σ_i U^i Tr_{βγ}[(I ⊗ B̃^i)(Ψ⁺ ⊗ ρ)] U^{i†}.
    let id_alpha = ComplexMatrix::identity(d);
    let ext = Superoperator::from_action(din, d, |h| {
        let big = tensor_product(bell.psi_plus.matrix(), h.matrix())?;
        let mut acc = ComplexMatrix::zeros(d, d);
        for (b_tilde, u) in realizing.elements().iter().zip(&bell.unitaries) {
            let lifted = tensor_product(&id_alpha, b_tilde.matrix())?;
            let m = partial_trace(&lifted.mul(&big), d, d * din, TracedSide::B)?;
            // Tr_{βγ} leaves Ū^i ℒ(ρ) Ū^{i†}/d²; the correction is Uᵀ.
            let ut = u.transpose();
            acc = acc.add(&ut.mul(&m).mul(&ut.adjoint()));
        }
        HermitianOperator::from_symmetrized(&acc)
    })?;

    for (e, img) in input_span.iter().zip(&images) {
        let got = ext.apply(e)?;
        let defect = trace_distance(got.matrix(), img.matrix())?;
        if defect > tol {
            return Err(SuffError::Numerical {
                what: "extension deviates from the morphism on the input space".into(),
                residual: defect,
            });
        }
    }
    Ok(ExtensionOutcome::Extended(choi_of_superoperator(&ext)?))
}

/// (id ⊗ ℒ*)(B) for B on ℋ_d ⊗ ℋ_out, block by block.
fn dual_on_second_factor(
    morphism: &Superoperator,
    b: &HermitianOperator,
    d: usize,
) -> Result<HermitianOperator> {
    let q = morphism.dim_out();
    let din = morphism.dim_in();
    let mut out = ComplexMatrix::zeros(d * din, d * din);
    for j in 0..d {
        for k in 0..d {
            let mut block = ComplexMatrix::zeros(q, q);
            for o1 in 0..q {
                for o2 in 0..q {
                    block[(o1, o2)] = b.matrix()[(j * q + o1, k * q + o2)];
                }
            }
            let pushed = morphism.dual_apply_complex(&block)?;
            for g1 in 0..din {
                for g2 in 0..din {
                    out[(j * din + g1, k * din + g2)] = pushed[(g1, g2)];
                }
            }
        }
    }
    HermitianOperator::from_symmetrized(&out)
}
