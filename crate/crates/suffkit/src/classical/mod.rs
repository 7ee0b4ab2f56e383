//! Classical statistical models, decision problems, payoff optimization,
//! and transition-matrix sufficiency with Farkas witness extraction.
//!
//! The two branches of [`check_ordering`] correspond exactly to the two
//! sides of the Blackwell-Sherman-Stein equivalence: a column-stochastic
//! kernel certifies sufficiency, and on infeasibility a decision problem
//! with a strictly positive payoff gap witnesses the failure of the
//! information ordering.

mod simplex;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SuffError};
use simplex::{solve_feasibility, FeasibilityOutcome, FeasibilitySystem};

const PROB_CLAMP: f64 = -1e-12;
const PROB_SUM_TOL: f64 = 1e-10;
const COLUMN_SUM_TOL: f64 = 1e-8;

/// Finite-parameter family of probability vectors (Θ, Δ, (p_θ)).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ClassicalModelRaw", into = "ClassicalModelRaw")]
pub struct ClassicalModel {
    theta_labels: Vec<String>,
    delta_size: usize,
    probs: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct ClassicalModelRaw {
    theta: Vec<String>,
    delta_size: usize,
    probs: Vec<Vec<f64>>,
}

impl TryFrom<ClassicalModelRaw> for ClassicalModel {
    type Error = SuffError;
    fn try_from(raw: ClassicalModelRaw) -> Result<Self> {
        ClassicalModel::new(raw.theta, raw.delta_size, raw.probs)
    }
}

impl From<ClassicalModel> for ClassicalModelRaw {
    fn from(m: ClassicalModel) -> Self {
        ClassicalModelRaw {
            theta: m.theta_labels,
            delta_size: m.delta_size,
            probs: m.probs,
        }
    }
}

impl ClassicalModel {
    /// Entries in [-1e-12, 0) are clamped to zero and the vector is
    /// renormalized, so serialized rounding cannot poison the LP.
    pub fn new(theta_labels: Vec<String>, delta_size: usize, probs: Vec<Vec<f64>>) -> Result<Self> {
        if theta_labels.is_empty() || delta_size == 0 {
            return Err(SuffError::Invalid("|Θ| and |Δ| must both be ≥ 1".into()));
        }
        if probs.len() != theta_labels.len() {
            return Err(SuffError::Shape(format!(
                "{} labels but {} probability vectors",
                theta_labels.len(),
                probs.len()
            )));
        }
        let mut cleaned = Vec::with_capacity(probs.len());
        for p in probs {
            if p.len() != delta_size {
                return Err(SuffError::Shape(format!(
                    "probability vector length {} != |Δ| = {delta_size}",
                    p.len()
                )));
            }
            let mut v: Vec<f64> = Vec::with_capacity(delta_size);
            for x in p {
                if !x.is_finite() || x < PROB_CLAMP {
                    return Err(SuffError::Invalid(format!("bad probability entry {x}")));
                }
                v.push(x.max(0.0));
            }
            let sum: f64 = v.iter().sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(SuffError::Invalid(format!(
                    "probability vector sums to {sum}, not 1"
                )));
            }
            for x in v.iter_mut() {
                *x /= sum;
            }
            cleaned.push(v);
        }
        Ok(Self {
            theta_labels,
            delta_size,
            probs: cleaned,
        })
    }

    pub fn theta_size(&self) -> usize {
        self.theta_labels.len()
    }

    pub fn theta_labels(&self) -> &[String] {
        &self.theta_labels
    }

    pub fn delta_size(&self) -> usize {
        self.delta_size
    }

    pub fn prob(&self, theta: usize, delta: usize) -> f64 {
        self.probs[theta][delta]
    }

    pub fn probs(&self) -> &[Vec<f64>] {
        &self.probs
    }
}

/// Finite decision set with payoff table ℓ(θ, i).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "DecisionProblemRaw", into = "DecisionProblemRaw")]
pub struct DecisionProblem {
    decision_size: usize,
    payoff: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct DecisionProblemRaw {
    decisions: usize,
    payoff: Vec<Vec<f64>>,
}

impl TryFrom<DecisionProblemRaw> for DecisionProblem {
    type Error = SuffError;
    fn try_from(raw: DecisionProblemRaw) -> Result<Self> {
        DecisionProblem::new(raw.decisions, raw.payoff)
    }
}

impl From<DecisionProblem> for DecisionProblemRaw {
    fn from(p: DecisionProblem) -> Self {
        DecisionProblemRaw {
            decisions: p.decision_size,
            payoff: p.payoff,
        }
    }
}

impl DecisionProblem {
    pub fn new(decision_size: usize, payoff: Vec<Vec<f64>>) -> Result<Self> {
        if decision_size == 0 {
            return Err(SuffError::Invalid("|X| must be ≥ 1".into()));
        }
        for row in &payoff {
            if row.len() != decision_size {
                return Err(SuffError::Shape(format!(
                    "payoff row length {} != |X| = {decision_size}",
                    row.len()
                )));
            }
            if row.iter().any(|x| !x.is_finite()) {
                return Err(SuffError::Invalid("non-finite payoff entry".into()));
            }
        }
        Ok(Self {
            decision_size,
            payoff,
        })
    }

    pub fn decision_size(&self) -> usize {
        self.decision_size
    }

    pub fn theta_size(&self) -> usize {
        self.payoff.len()
    }

    pub fn payoff(&self, theta: usize, decision: usize) -> f64 {
        self.payoff[theta][decision]
    }
}

/// Conditional probabilities t(i | δ): columns indexed by δ are
/// probability vectors over decisions.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomizedDecisionFunction {
    cond_probs: Vec<Vec<f64>>, // [decision][delta]
}

impl RandomizedDecisionFunction {
    pub fn new(cond_probs: Vec<Vec<f64>>) -> Result<Self> {
        if cond_probs.is_empty() || cond_probs[0].is_empty() {
            return Err(SuffError::Invalid("empty decision function".into()));
        }
        let delta = cond_probs[0].len();
        if cond_probs.iter().any(|r| r.len() != delta) {
            return Err(SuffError::Shape("ragged decision function".into()));
        }
        for d in 0..delta {
            let sum: f64 = cond_probs.iter().map(|r| r[d]).sum();
            if (sum - 1.0).abs() > PROB_SUM_TOL {
                return Err(SuffError::Invalid(format!(
                    "column {d} sums to {sum}, not 1"
                )));
            }
            if cond_probs.iter().any(|r| r[d] < 0.0) {
                return Err(SuffError::Invalid("negative conditional probability".into()));
            }
        }
        Ok(Self { cond_probs })
    }

    /// Deterministic function δ ↦ decision.
    pub fn deterministic(decision_size: usize, choices: &[usize]) -> Result<Self> {
        let mut cond = vec![vec![0.0; choices.len()]; decision_size];
        for (d, &i) in choices.iter().enumerate() {
            if i >= decision_size {
                return Err(SuffError::Invalid(format!("decision {i} out of range")));
            }
            cond[i][d] = 1.0;
        }
        Self::new(cond)
    }

    pub fn decision_size(&self) -> usize {
        self.cond_probs.len()
    }

    pub fn delta_size(&self) -> usize {
        self.cond_probs[0].len()
    }

    pub fn prob(&self, decision: usize, delta: usize) -> f64 {
        self.cond_probs[decision][delta]
    }
}

/// Column-stochastic |Δ′| × |Δ| kernel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct TransitionMatrix {
    matrix: Vec<Vec<f64>>, // [delta'][delta]
}

impl TryFrom<Vec<Vec<f64>>> for TransitionMatrix {
    type Error = SuffError;
    fn try_from(matrix: Vec<Vec<f64>>) -> Result<Self> {
        TransitionMatrix::new(matrix)
    }
}

impl From<TransitionMatrix> for Vec<Vec<f64>> {
    fn from(m: TransitionMatrix) -> Self {
        m.matrix
    }
}

impl TransitionMatrix {
    pub fn new(matrix: Vec<Vec<f64>>) -> Result<Self> {
        if matrix.is_empty() || matrix[0].is_empty() {
            return Err(SuffError::Invalid("empty transition matrix".into()));
        }
        let cols = matrix[0].len();
        if matrix.iter().any(|r| r.len() != cols) {
            return Err(SuffError::Shape("ragged transition matrix".into()));
        }
        for col in 0..cols {
            let mut sum = 0.0;
            for row in &matrix {
                if row[col] < -1e-10 {
                    return Err(SuffError::Invalid(format!(
                        "negative transition entry {}",
                        row[col]
                    )));
                }
                sum += row[col];
            }
            if (sum - 1.0).abs() > COLUMN_SUM_TOL {
                return Err(SuffError::Invalid(format!(
                    "transition column {col} sums to {sum}"
                )));
            }
        }
        Ok(Self { matrix })
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = vec![vec![0.0; dim]; dim];
        for (i, row) in m.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        Self { matrix: m }
    }

    pub fn rows(&self) -> usize {
        self.matrix.len()
    }

    pub fn cols(&self) -> usize {
        self.matrix[0].len()
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.matrix[row][col]
    }

    /// M applied to a probability vector.
    pub fn apply(&self, p: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(p).map(|(m, x)| m * x).sum())
            .collect()
    }

    /// Garbled model (M p_θ)_θ.
    pub fn garble(&self, model: &ClassicalModel) -> Result<ClassicalModel> {
        let probs = model.probs().iter().map(|p| self.apply(p)).collect();
        ClassicalModel::new(model.theta_labels().to_vec(), self.rows(), probs)
    }
}

/// Farkas certificate of LP infeasibility for [`find_transition_matrix`].
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DualCertificate {
    /// Multipliers on the action constraints M p_θ = q_θ, indexed [θ][δ′].
    pub y: Vec<Vec<f64>>,
    /// Multipliers on the column-stochasticity constraints, indexed [δ].
    pub z: Vec<f64>,
    /// Strictly positive Farkas slack yᵀb.
    pub slack: f64,
}

pub enum TransitionOutcome {
    Feasible(TransitionMatrix),
    Infeasible(DualCertificate),
}

/// Verdict of the BSS ordering check with its certificate.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "status")]
pub enum SufficiencyVerdict {
    Sufficient {
        transition: TransitionMatrix,
    },
    NotSufficient {
        witness: DecisionProblem,
        gap: f64,
    },
}

/// Payoff vector v^θ = Σ_i ℓ(θ,i) Σ_δ t(i|δ) p_θ(δ).
pub fn payoff_vector(
    model: &ClassicalModel,
    problem: &DecisionProblem,
    rdf: &RandomizedDecisionFunction,
) -> Result<Vec<f64>> {
    check_shapes(model, problem)?;
    if rdf.delta_size() != model.delta_size() || rdf.decision_size() != problem.decision_size() {
        return Err(SuffError::Shape("decision function shape mismatch".into()));
    }
    let mut v = Vec::with_capacity(model.theta_size());
    for theta in 0..model.theta_size() {
        let mut acc = 0.0;
        for i in 0..problem.decision_size() {
            let mut inner = 0.0;
            for delta in 0..model.delta_size() {
                inner += rdf.prob(i, delta) * model.prob(theta, delta);
            }
            acc += problem.payoff(theta, i) * inner;
        }
        v.push(acc);
    }
    Ok(v)
}

/// Expected payoff (1/|Θ|) Σ_θ v^θ for a given decision function.
pub fn expected_payoff(
    model: &ClassicalModel,
    problem: &DecisionProblem,
    rdf: &RandomizedDecisionFunction,
) -> Result<f64> {
    let v = payoff_vector(model, problem, rdf)?;
    Ok(v.iter().sum::<f64>() / model.theta_size() as f64)
}

/// Optimal expected payoff under the uniform prior, together with a
/// deterministic decision function attaining it.
///
/// value = (1/|Θ|) Σ_δ max_i Σ_θ ℓ(θ,i) p_θ(δ); the maximum over
/// randomized decision functions is attained at a vertex.
pub fn optimal_expected_payoff(
    model: &ClassicalModel,
    problem: &DecisionProblem,
) -> Result<(f64, RandomizedDecisionFunction)> {
    check_shapes(model, problem)?;
    let mut value = 0.0;
    let mut choices = Vec::with_capacity(model.delta_size());
    for delta in 0..model.delta_size() {
        let mut best = f64::NEG_INFINITY;
        let mut best_i = 0;
        for i in 0..problem.decision_size() {
            let score: f64 = (0..model.theta_size())
                .map(|theta| problem.payoff(theta, i) * model.prob(theta, delta))
                .sum();
            if score > best {
                best = score;
                best_i = i;
            }
        }
        value += best;
        choices.push(best_i);
    }
    value /= model.theta_size() as f64;
    let rdf = RandomizedDecisionFunction::deterministic(problem.decision_size(), &choices)?;
    Ok((value, rdf))
}

fn check_shapes(model: &ClassicalModel, problem: &DecisionProblem) -> Result<()> {
    if problem.theta_size() != model.theta_size() {
        return Err(SuffError::Shape(format!(
            "payoff table has {} parameter rows, model has {}",
            problem.theta_size(),
            model.theta_size()
        )));
    }
    Ok(())
}

fn check_same_theta(e: &ClassicalModel, f: &ClassicalModel) -> Result<()> {
    if e.theta_labels() != f.theta_labels() {
        return Err(SuffError::Precondition(
            "models are not governed by the same parameter set".into(),
        ));
    }
    Ok(())
}

/// Search for a column-stochastic M with M p_θ = q_θ for all θ.
///
/// Phase-1 simplex over the system {M ≥ 0, columns sum to 1, M p_θ = q_θ};
/// infeasibility comes back with the Farkas multipliers of the action and
/// column constraints.
pub fn find_transition_matrix(
    e: &ClassicalModel,
    f: &ClassicalModel,
    tol: f64,
) -> Result<TransitionOutcome> {
    check_same_theta(e, f)?;
    if tol <= 0.0 {
        return Err(SuffError::Invalid("tol must be positive".into()));
    }
    let nd = e.delta_size();
    let ndp = f.delta_size();
    let nt = e.theta_size();
    let nvar = ndp * nd; // M[δ'][δ] at index δ'·nd + δ

    let mut a: Vec<Vec<f64>> = Vec::new();
    let mut b: Vec<f64> = Vec::new();
    // Action constraints first: one row per (θ, δ′).
    for theta in 0..nt {
        for dp in 0..ndp {
            let mut row = vec![0.0; nvar];
            for d in 0..nd {
                row[dp * nd + d] = e.prob(theta, d);
            }
            a.push(row);
            b.push(f.prob(theta, dp));
        }
    }
    // Column-stochasticity: one row per δ.
    for d in 0..nd {
        let mut row = vec![0.0; nvar];
        for dp in 0..ndp {
            row[dp * nd + d] = 1.0;
        }
        a.push(row);
        b.push(1.0);
    }

    match solve_feasibility(&FeasibilitySystem { a, b })? {
        FeasibilityOutcome::Feasible(x) => {
            let mut m = vec![vec![0.0; nd]; ndp];
            for dp in 0..ndp {
                for d in 0..nd {
                    m[dp][d] = x[dp * nd + d];
                }
            }
            let m = TransitionMatrix::new(m)?;
            // Never report Feasible past the caller's tolerance.
            for theta in 0..nt {
                let mapped = m.apply(&e.probs()[theta]);
                let residual: f64 = mapped
                    .iter()
                    .zip(&f.probs()[theta])
                    .map(|(x, y)| (x - y).abs())
                    .sum();
                if residual > tol {
                    return Err(SuffError::Numerical {
                        what: format!("LP solution violates action constraint for θ={theta}"),
                        residual,
                    });
                }
            }
            Ok(TransitionOutcome::Feasible(m))
        }
        FeasibilityOutcome::Infeasible { y, slack } => {
            let mut ycert = vec![vec![0.0; ndp]; nt];
            for theta in 0..nt {
                for dp in 0..ndp {
                    ycert[theta][dp] = y[theta * ndp + dp];
                }
            }
            let z = y[nt * ndp..].to_vec();
            Ok(TransitionOutcome::Infeasible(DualCertificate {
                y: ycert,
                z,
                slack,
            }))
        }
    }
}

/// Build the witness decision problem from a Farkas certificate.
///
/// X = Δ′ and ℓ(θ, i) = |Θ| · y_{θ,i} after rescaling the certificate so
/// its largest entry has absolute value 1. The gap is re-evaluated from
/// scratch; a non-positive gap signals a solver bug and errors out.
pub fn witness_from_certificate(
    cert: &DualCertificate,
    e: &ClassicalModel,
    f: &ClassicalModel,
) -> Result<(DecisionProblem, f64)> {
    check_same_theta(e, f)?;
    let nt = e.theta_size();
    let ndp = f.delta_size();
    if cert.y.len() != nt || cert.y.iter().any(|r| r.len() != ndp) {
        return Err(SuffError::Shape("certificate shape mismatch".into()));
    }
    let scale = cert
        .y
        .iter()
        .flatten()
        .map(|v| v.abs())
        .fold(0.0f64, f64::max);
    if scale <= 0.0 {
        return Err(SuffError::CertificateInvalid("all-zero certificate".into()));
    }
    let payoff: Vec<Vec<f64>> = cert
        .y
        .iter()
        .map(|row| row.iter().map(|v| nt as f64 * v / scale).collect())
        .collect();
    let problem = DecisionProblem::new(ndp, payoff)?;
    let (val_f, _) = optimal_expected_payoff(f, &problem)?;
    let (val_e, _) = optimal_expected_payoff(e, &problem)?;
    let gap = val_f - val_e;
    if gap <= 1e-10 {
        return Err(SuffError::CertificateInvalid(format!(
            "re-evaluated witness gap {gap:.3e} is not positive"
        )));
    }
    Ok((problem, gap))
}

/// BSS ordering check: transition-matrix feasibility, with a witness
/// decision problem extracted on the infeasible branch.
pub fn check_ordering(e: &ClassicalModel, f: &ClassicalModel) -> Result<SufficiencyVerdict> {
    check_ordering_tol(e, f, crate::linalg::tol::SOLVER)
}

pub fn check_ordering_tol(
    e: &ClassicalModel,
    f: &ClassicalModel,
    tol: f64,
) -> Result<SufficiencyVerdict> {
    match find_transition_matrix(e, f, tol)? {
        TransitionOutcome::Feasible(m) => Ok(SufficiencyVerdict::Sufficient { transition: m }),
        TransitionOutcome::Infeasible(cert) => {
            let (witness, gap) = witness_from_certificate(&cert, e, f)?;
            Ok(SufficiencyVerdict::NotSufficient { witness, gap })
        }
    }
}
