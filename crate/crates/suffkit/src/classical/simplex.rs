//! Phase-1 primal simplex for equality-form feasibility systems
//! {A x = b, x ≥ 0}, with Bland's rule for guaranteed termination and a
//! Farkas dual certificate on the infeasible branch.

use crate::error::{Result, SuffError};

/// Dense equality-form feasibility problem.
pub struct FeasibilitySystem {
    /// Row-major m×n constraint matrix.
    pub a: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

pub enum FeasibilityOutcome {
    /// A nonnegative solution of A x = b.
    Feasible(Vec<f64>),
    /// Farkas certificate y: yᵀA ≤ ε componentwise while yᵀb = slack > 0.
    Infeasible { y: Vec<f64>, slack: f64 },
}

const PIVOT_EPS: f64 = 1e-11;
const FEAS_EPS: f64 = 1e-9;

/// Solve the phase-1 problem min Σ artificials over {A x + a = b, x, a ≥ 0}.
///
/// Bland's rule (lowest eligible index enters, lowest-index basic leaves on
/// ratio ties) makes the run deterministic and cycle-free.
pub fn solve_feasibility(sys: &FeasibilitySystem) -> Result<FeasibilityOutcome> {
    let m = sys.a.len();
    let n = if m > 0 { sys.a[0].len() } else { 0 };
    if sys.b.len() != m || sys.a.iter().any(|r| r.len() != n) {
        return Err(SuffError::Shape("inconsistent LP dimensions".into()));
    }

    // Flip rows so the right-hand side is nonnegative; remember the signs
    // to map the dual certificate back to the original orientation.
    let mut signs = vec![1.0f64; m];
    // Tableau layout: n structural columns, m artificial columns, then rhs.
    let width = n + m + 1;
    let mut tab: Vec<Vec<f64>> = Vec::with_capacity(m + 1);
    for i in 0..m {
        let s = if sys.b[i] < 0.0 { -1.0 } else { 1.0 };
        signs[i] = s;
        let mut row = vec![0.0; width];
        for j in 0..n {
            row[j] = s * sys.a[i][j];
        }
        row[n + i] = 1.0;
        row[width - 1] = s * sys.b[i];
        tab.push(row);
    }
    // Objective row: reduced costs for min Σ artificials, with the basis of
    // artificials priced out (z_j - c_j form: start from -Σ rows).
    let mut obj = vec![0.0; width];
    for j in 0..width {
        let mut acc = 0.0;
        for row in tab.iter().take(m) {
            acc += row[j];
        }
        obj[j] = -acc;
    }
    for i in 0..m {
        obj[n + i] = 0.0; // artificials are basic, reduced cost zero
    }
    let mut basis: Vec<usize> = (n..n + m).collect();

    let max_iters = 50 * (m + n + 1) * (m + 1);
    let mut iters = 0usize;
    loop {
        // Bland: entering column = lowest index with negative reduced cost.
        let mut entering = None;
        for j in 0..n + m {
            if obj[j] < -PIVOT_EPS {
                entering = Some(j);
                break;
            }
        }
        let Some(col) = entering else { break };
        // Ratio test with lowest-index tie break on the leaving variable.
        let mut leave: Option<(usize, f64)> = None;
        for (i, row) in tab.iter().enumerate() {
            if row[col] > PIVOT_EPS {
                let ratio = row[width - 1] / row[col];
                match leave {
                    None => leave = Some((i, ratio)),
                    Some((bi, br)) => {
                        if ratio < br - PIVOT_EPS
                            || ((ratio - br).abs() <= PIVOT_EPS && basis[i] < basis[bi])
                        {
                            leave = Some((i, ratio));
                        }
                    }
                }
            }
        }
        let Some((pivot_row, _)) = leave else {
            // Unbounded phase-1 cannot happen (objective bounded below by 0).
            return Err(SuffError::Numerical {
                what: "phase-1 simplex lost boundedness".into(),
                residual: obj[width - 1].abs(),
            });
        };
        // Pivot.
        let piv = tab[pivot_row][col];
        for v in tab[pivot_row].iter_mut() {
            *v /= piv;
        }
        for i in 0..m {
            if i != pivot_row && tab[i][col].abs() > 0.0 {
                let f = tab[i][col];
                for j in 0..width {
                    tab[i][j] -= f * tab[pivot_row][j];
                }
            }
        }
        if obj[col].abs() > 0.0 {
            let f = obj[col];
            for j in 0..width {
                obj[j] -= f * tab[pivot_row][j];
            }
        }
        basis[pivot_row] = col;
        iters += 1;
        if iters > max_iters {
            return Err(SuffError::Numerical {
                what: "phase-1 simplex iteration cap exceeded".into(),
                residual: -obj[width - 1],
            });
        }
    }

    // Phase-1 optimum is -obj[rhs] (objective row carries z - c).
    let optimum = -obj[width - 1];
    if optimum <= FEAS_EPS {
        let mut x = vec![0.0; n];
        for (i, &bj) in basis.iter().enumerate() {
            if bj < n {
                x[bj] = tab[i][width - 1].max(0.0);
            }
        }
        Ok(FeasibilityOutcome::Feasible(x))
    } else {
        // Simplex multipliers: the artificial column i is the unit column
        // e_i with cost 1 in the flipped system, so its final reduced cost
        // obj[n+i] = 1 - y_i.
        let mut y = vec![0.0; m];
        for i in 0..m {
            y[i] = (1.0 - obj[n + i]) * signs[i];
        }
        // yᵀ b equals the phase-1 optimum by duality; recompute directly.
        let slack: f64 = y.iter().zip(&sys.b).map(|(yi, bi)| yi * bi).sum();
        Ok(FeasibilityOutcome::Infeasible { y, slack })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn feasible_simple_system() {
        // x1 + x2 = 1, x1 - x2 = 0  ->  x = (0.5, 0.5)
        let sys = FeasibilitySystem {
            a: vec![vec![1.0, 1.0], vec![1.0, -1.0]],
            b: vec![1.0, 0.0],
        };
        match solve_feasibility(&sys).unwrap() {
            FeasibilityOutcome::Feasible(x) => {
                assert!((x[0] - 0.5).abs() < 1e-10);
                assert!((x[1] - 0.5).abs() < 1e-10);
            }
            _ => panic!("expected feasible"),
        }
    }

    #[test]
    fn infeasible_with_farkas_certificate() {
        // x1 + x2 = 1, x1 + x2 = 2 is inconsistent.
        let sys = FeasibilitySystem {
            a: vec![vec![1.0, 1.0], vec![1.0, 1.0]],
            b: vec![1.0, 2.0],
        };
        match solve_feasibility(&sys).unwrap() {
            FeasibilityOutcome::Infeasible { y, slack } => {
                assert!(slack > 1e-9);
                // Farkas: yᵀA ≤ 0 componentwise.
                for j in 0..2 {
                    let dot: f64 = y.iter().enumerate().map(|(i, yi)| yi * sys.a[i][j]).sum();
                    assert!(dot <= 1e-9);
                }
                let yb: f64 = y.iter().zip(&sys.b).map(|(a, b)| a * b).sum();
                assert!((yb - slack).abs() < 1e-12 && yb > 0.0);
            }
            _ => panic!("expected infeasible"),
        }
    }

    #[test]
    fn nonnegative_only_infeasibility() {
        // x1 - x2 = -1 with x >= 0 is feasible (x2 = 1). x1 = -1 alone is not.
        let sys = FeasibilitySystem {
            a: vec![vec![1.0]],
            b: vec![-1.0],
        };
        match solve_feasibility(&sys).unwrap() {
            FeasibilityOutcome::Infeasible { y, .. } => {
                let dot = y[0] * 1.0;
                assert!(dot <= 1e-9);
                assert!(y[0] * -1.0 > 0.0);
            }
            _ => panic!("expected infeasible"),
        }
    }
}
