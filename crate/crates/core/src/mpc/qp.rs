//! Strictly convex box-constrained QP, solved with a primal active-set method.
//!
//! minimize 0.5 u' P u + q' u   subject to   lb <= u <= ub

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Clone, Debug, PartialEq)]
pub struct QpSolution {
    pub u: DVector<f64>,
    pub iterations: usize,
    pub converged: bool,
    /// Infinity norm of the projected gradient.
    pub kkt_residual: f64,
    /// 0.5 u' P u + q' u
    pub objective: f64,
}

#[derive(Clone, Copy, Debug)]
pub struct QpSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 500 }
    }
}

/// Projected gradient of the objective at `u`: zero where a bound blocks
/// descent.
pub fn projected_gradient(p: &DMatrix<f64>, q: &DVector<f64>, u: &DVector<f64>, lb: &DVector<f64>, ub: &DVector<f64>) -> DVector<f64> {
    let g = p * u + q;
    DVector::from_fn(u.len(), |i, _| {
        if u[i] <= lb[i] {
            g[i].min(0.0)
        } else if u[i] >= ub[i] {
            g[i].max(0.0)
        } else {
            g[i]
        }
    })
}

fn objective(p: &DMatrix<f64>, q: &DVector<f64>, u: &DVector<f64>) -> f64 {
    0.5 * u.dot(&(p * u)) + q.dot(u)
}

/// Minimizer over the free variables with the others fixed at their bounds.
fn free_minimizer(p: &DMatrix<f64>, q: &DVector<f64>, u: &DVector<f64>, free: &[usize], fixed: &[usize]) -> Option<DVector<f64>> {
    let nf = free.len();
    let pff = DMatrix::from_fn(nf, nf, |a, b| p[(free[a], free[b])]);
    let rhs = DVector::from_fn(nf, |a, _| {
        -q[free[a]] - fixed.iter().map(|&j| p[(free[a], j)] * u[j]).sum::<f64>()
    });
    pff.cholesky().map(|c| c.solve(&rhs))
}

pub fn solve_box_qp(
    p: &DMatrix<f64>,
    q: &DVector<f64>,
    lb: &DVector<f64>,
    ub: &DVector<f64>,
    settings: &QpSettings,
) -> QpSolution {
    let n = q.len();
    let finish = |u: DVector<f64>, iterations: usize| {
        let kkt = projected_gradient(p, q, &u, lb, ub).amax();
        QpSolution {
            objective: objective(p, q, &u),
            converged: kkt < settings.tolerance,
            kkt_residual: kkt,
            iterations,
            u,
        }
    };

    // Warm start: clamp the unconstrained minimizer.
    let mut u = match p.clone().cholesky() {
        Some(c) => c.solve(&(-q)),
        None => return finish(lb.zip_map(ub, |l, h| 0.0f64.clamp(l, h)), 0),
    };
    let mut set = vec![Bound::Free; n];
    for i in 0..n {
        if u[i] <= lb[i] {
            u[i] = lb[i];
            set[i] = Bound::Lower;
        } else if u[i] >= ub[i] {
            u[i] = ub[i];
            set[i] = Bound::Upper;
        }
    }

    // Multiplier sign test, scaled to the problem.
    let mult_tol = 1e-3 * settings.tolerance;
    for it in 1..=settings.max_iterations {
        let free: Vec<usize> = (0..n).filter(|&i| set[i] == Bound::Free).collect();
        let fixed: Vec<usize> = (0..n).filter(|&i| set[i] != Bound::Free).collect();
        let target = if free.is_empty() {
            Some(DVector::zeros(0))
        } else {
            free_minimizer(p, q, &u, &free, &fixed)
        };
        let Some(target) = target else {
            return finish(u, it);
        };

        // Longest feasible step toward the subspace minimizer.
        let mut alpha = 1.0;
        let mut blocking = None;
        for (a, &i) in free.iter().enumerate() {
            let d = target[a] - u[i];
            if d < 0.0 && target[a] < lb[i] {
                let s = (lb[i] - u[i]) / d;
                if s < alpha {
                    alpha = s;
                    blocking = Some((i, Bound::Lower));
                }
            } else if d > 0.0 && target[a] > ub[i] {
                let s = (ub[i] - u[i]) / d;
                if s < alpha {
                    alpha = s;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
        for (a, &i) in free.iter().enumerate() {
            u[i] += alpha * (target[a] - u[i]);
        }
        if let Some((i, b)) = blocking {
            set[i] = b;
            u[i] = if b == Bound::Lower { lb[i] } else { ub[i] };
            continue;
        }

        // Subspace optimum reached; release the bound with the worst multiplier.
        let g = p * &u + q;
        let mut worst = None;
        let mut worst_val = mult_tol;
        for &i in &fixed {
            let violation = match set[i] {
                Bound::Lower => -g[i],
                Bound::Upper => g[i],
                Bound::Free => unreachable!(),
            };
            if violation > worst_val {
                worst_val = violation;
                worst = Some(i);
            }
        }
        match worst {
            Some(i) => set[i] = Bound::Free,
            None => return finish(u, it),
        }
    }
    finish(u, settings.max_iterations)
}
