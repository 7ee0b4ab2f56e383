//! Quantum statistical models, POVM payoff optimization with dual
//! certificates, abelian detection and quantum-classical conversion,
//! model composition and completeness, and the POVM-fitting solver for
//! tests on restricted state spaces.

mod fit;
mod payoff;

pub use fit::{fit_povm_to_statistics, fit_povm_with_initial, FitOutcome, SeparatingFunctional};
pub use payoff::{binary_closed_form, povm_linear_max, LinearMaxOutcome, ASCENT_CAP};

use serde::{Deserialize, Serialize};

use crate::classical::{ClassicalModel, DecisionProblem};
use crate::error::{Result, SuffError};
use crate::linalg::{
    simultaneous_diagonalization, tensor_product, ComplexMatrix, DensityMatrix, DiagOutcome,
    HermitianOperator,
};
use crate::solver::rank_of_vectors;

pub const POVM_PSD_TOL: f64 = 1e-9;
pub const POVM_SUM_TOL: f64 = 1e-8;
pub const ABELIAN_TOL: f64 = 1e-9;
pub const RANK_TOL: f64 = 1e-9;

/// Parameterized family of density matrices (Θ, ℋ, ρ).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(try_from = "QuantumModelRaw", into = "QuantumModelRaw")]
pub struct QuantumModel {
    theta_labels: Vec<String>,
    dim: usize,
    states: Vec<DensityMatrix>,
}

#[derive(Serialize, Deserialize)]
struct QuantumModelRaw {
    theta: Vec<String>,
    dim: usize,
    states: Vec<ComplexMatrix>,
}

impl TryFrom<QuantumModelRaw> for QuantumModel {
    type Error = SuffError;
    fn try_from(raw: QuantumModelRaw) -> Result<Self> {
        let states = raw
            .states
            .into_iter()
            .map(DensityMatrix::from_matrix)
            .collect::<Result<Vec<_>>>()?;
        QuantumModel::new(raw.theta, raw.dim, states)
    }
}

impl From<QuantumModel> for QuantumModelRaw {
    fn from(m: QuantumModel) -> Self {
        QuantumModelRaw {
            theta: m.theta_labels,
            dim: m.dim,
            states: m.states.into_iter().map(|s| s.matrix().clone()).collect(),
        }
    }
}

impl QuantumModel {
    pub fn new(
        theta_labels: Vec<String>,
        dim: usize,
        states: Vec<DensityMatrix>,
    ) -> Result<Self> {
        if theta_labels.is_empty() {
            return Err(SuffError::Invalid("|Θ| must be ≥ 1".into()));
        }
        if states.len() != theta_labels.len() {
            return Err(SuffError::Shape(format!(
                "{} labels but {} states",
                theta_labels.len(),
                states.len()
            )));
        }
        if states.iter().any(|s| s.dim() != dim) {
            return Err(SuffError::Shape("state dimension mismatch".into()));
        }
        Ok(Self {
            theta_labels,
            dim,
            states,
        })
    }

    pub fn theta_labels(&self) -> &[String] {
        &self.theta_labels
    }

    pub fn theta_size(&self) -> usize {
        self.theta_labels.len()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn states(&self) -> &[DensityMatrix] {
        &self.states
    }
}

/// Positive-operator–valued measure.
#[derive(Debug, Clone)]
pub struct Povm {
    dim: usize,
    elements: Vec<HermitianOperator>,
}

impl Povm {
    pub fn new(elements: Vec<HermitianOperator>) -> Result<Self> {
        if elements.is_empty() {
            return Err(SuffError::Invalid("POVM needs at least one element".into()));
        }
        let dim = elements[0].dim();
        if elements.iter().any(|e| e.dim() != dim) {
            return Err(SuffError::Shape("POVM element dimension mismatch".into()));
        }
        let mut sum = ComplexMatrix::zeros(dim, dim);
        for e in &elements {
            let min = e.min_eigenvalue()?;
            if min < -POVM_PSD_TOL {
                return Err(SuffError::Invalid(format!(
                    "POVM element has eigenvalue {min}"
                )));
            }
            sum = sum.add(e.matrix());
        }
        let defect = sum.sub(&ComplexMatrix::identity(dim)).max_norm();
        if defect > POVM_SUM_TOL {
            return Err(SuffError::Invalid(format!(
                "POVM sums to identity only within {defect}"
            )));
        }
        Ok(Self { dim, elements })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.elements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    pub fn elements(&self) -> &[HermitianOperator] {
        &self.elements
    }

    /// Outcome distribution Tr[P^i ρ].
    pub fn probabilities(&self, rho: &DensityMatrix) -> Vec<f64> {
        self.elements
            .iter()
            .map(|e| e.matrix().trace_product(rho.matrix()).re)
            .collect()
    }
}

/// Family of self-adjoint operators, not necessarily positive.
#[derive(Debug, Clone)]
pub struct OperatorFamily {
    pub dim: usize,
    pub members: Vec<HermitianOperator>,
}

impl OperatorFamily {
    pub fn new(members: Vec<HermitianOperator>) -> Result<Self> {
        if members.is_empty() {
            return Err(SuffError::Invalid("empty operator family".into()));
        }
        let dim = members[0].dim();
        if members.iter().any(|m| m.dim() != dim) {
            return Err(SuffError::Shape("operator family dimension mismatch".into()));
        }
        Ok(Self { dim, members })
    }
}

/// Certified payoff optimum: value ≤ dual_bound, gap = dual_bound − value.
#[derive(Debug, Clone)]
pub struct PayoffSolution {
    pub value: f64,
    pub povm: Povm,
    pub dual_bound: f64,
    pub gap: f64,
}

fn payoff_operators(
    model: &QuantumModel,
    problem: &DecisionProblem,
) -> Result<Vec<HermitianOperator>> {
    if problem.theta_size() != model.theta_size() {
        return Err(SuffError::Shape(format!(
            "payoff table has {} parameter rows, model has {}",
            problem.theta_size(),
            model.theta_size()
        )));
    }
    let nt = model.theta_size() as f64;
    let d = model.dim();
    (0..problem.decision_size())
        .map(|i| {
            let mut acc = ComplexMatrix::zeros(d, d);
            for (theta, rho) in model.states().iter().enumerate() {
                acc = acc.add(&rho.matrix().scale_re(problem.payoff(theta, i) / nt));
            }
            HermitianOperator::from_symmetrized(&acc)
        })
        .collect()
}

/// Optimal expected payoff over all POVMs, with certificate. Binary
/// decisions use the exact closed form (gap 0); larger decision sets use
/// the certified iterative solver.
pub fn optimal_quantum_payoff(
    model: &QuantumModel,
    problem: &DecisionProblem,
    tol: f64,
) -> Result<PayoffSolution> {
    if tol <= 0.0 {
        return Err(SuffError::Invalid("tol must be positive".into()));
    }
    let r = payoff_operators(model, problem)?;
    if r.len() == 2 {
        let (value, elements) = binary_closed_form(&r[0], &r[1])?;
        return Ok(PayoffSolution {
            value,
            povm: Povm::new(elements)?,
            dual_bound: value,
            gap: 0.0,
        });
    }
    let out = povm_linear_max(&r, tol, ASCENT_CAP)?;
    Ok(PayoffSolution {
        value: out.value,
        povm: Povm::new(out.elements)?,
        dual_bound: out.dual_bound,
        gap: out.gap,
    })
}

/// Iterative solver regardless of |X|, for cross-validation of the
/// binary closed form.
pub fn optimal_quantum_payoff_iterative(
    model: &QuantumModel,
    problem: &DecisionProblem,
    tol: f64,
) -> Result<PayoffSolution> {
    let r = payoff_operators(model, problem)?;
    let out = povm_linear_max(&r, tol, ASCENT_CAP)?;
    Ok(PayoffSolution {
        value: out.value,
        povm: Povm::new(out.elements)?,
        dual_bound: out.dual_bound,
        gap: out.gap,
    })
}

/// All pairwise commutators vanish within 1e-9 max-norm.
pub fn is_abelian(model: &QuantumModel) -> (bool, f64) {
    let mut worst = 0.0f64;
    for (i, a) in model.states().iter().enumerate() {
        for b in model.states().iter().skip(i + 1) {
            worst = worst.max(a.matrix().commutator(b.matrix()).max_norm());
        }
    }
    (worst <= ABELIAN_TOL, worst)
}

/// Diagonalize an abelian family simultaneously and read off the
/// classical model p_θ(δ) = ⟨φ_δ|ρ_θ|φ_δ⟩.
pub fn abelian_to_classical(model: &QuantumModel) -> Result<ClassicalModel> {
    let (abelian, worst) = is_abelian(model);
    if !abelian {
        return Err(SuffError::Precondition(format!(
            "model is not abelian: worst commutator norm {worst:.3e}"
        )));
    }
    let ops: Vec<HermitianOperator> =
        model.states().iter().map(|s| s.operator().clone()).collect();
    let basis = match simultaneous_diagonalization(&ops)? {
        DiagOutcome::Basis(u) => u,
        DiagOutcome::NonCommuting { norm, .. } => {
            return Err(SuffError::Precondition(format!(
                "simultaneous diagonalization failed: commutator norm {norm:.3e}"
            )));
        }
    };
    let d = model.dim();
    let probs: Vec<Vec<f64>> = model
        .states()
        .iter()
        .map(|rho| {
            let rotated = basis.adjoint().mul(rho.matrix()).mul(&basis);
            (0..d).map(|k| rotated[(k, k)].re).collect()
        })
        .collect();
    ClassicalModel::new(model.theta_labels().to_vec(), d, probs)
}

/// Diagonal embedding ρ_θ = diag(p_θ).
pub fn classical_to_quantum(model: &ClassicalModel) -> Result<QuantumModel> {
    let states = model
        .probs()
        .iter()
        .map(|p| DensityMatrix::from_matrix(ComplexMatrix::diag(p)))
        .collect::<Result<Vec<_>>>()?;
    QuantumModel::new(model.theta_labels().to_vec(), model.delta_size(), states)
}

/// Composition T×R: parameter set Ξ×Θ, states τ_ξ ⊗ ρ_θ.
pub fn compose_models(t: &QuantumModel, r: &QuantumModel) -> Result<QuantumModel> {
    let mut labels = Vec::with_capacity(t.theta_size() * r.theta_size());
    let mut states = Vec::with_capacity(labels.capacity());
    for (xi, tau) in t.theta_labels().iter().zip(t.states()) {
        for (theta, rho) in r.theta_labels().iter().zip(r.states()) {
            labels.push(format!("{xi}×{theta}"));
            states.push(DensityMatrix::from_matrix(tensor_product(
                tau.matrix(),
                rho.matrix(),
            )?)?);
        }
    }
    QuantumModel::new(labels, t.dim() * r.dim(), states)
}

/// True iff the vectorized states span the full operator space.
pub fn is_complete_model(model: &QuantumModel) -> Result<(bool, usize)> {
    let vecs: Vec<Vec<f64>> = model
        .states()
        .iter()
        .map(|s| s.operator().to_real_vec())
        .collect();
    let rank = rank_of_vectors(&vecs, RANK_TOL)?;
    Ok((rank == model.dim() * model.dim(), rank))
}
