//! Dense convex QP with box constraints, solved by a primal active-set method.
//!
//! ```text
//! minimize   1/2 x' H x + g' x
//! subject to lower <= x <= upper
//! ```
//!
//! `H` must be positive definite. Each iteration factors the free block with
//! Cholesky; bounds in the working set are held at their exact values.

use nalgebra::{DMatrix, DVector};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Bound {
    Free,
    Lower,
    Upper,
}

#[derive(Clone, Debug)]
pub struct BoxQpSolution {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// False when the iteration cap was hit or a factorization failed; `x` is
    /// still feasible.
    pub converged: bool,
}

const TOL: f64 = 1e-12;

fn project(x: &DVector<f64>, lower: &DVector<f64>, upper: &DVector<f64>) -> DVector<f64> {
    x.zip_zip_map(lower, upper, |v, l, u| v.clamp(l, u))
}

/// Solves the QP starting from `x0` projected onto the box.
pub fn solve_box_qp(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
    x0: &DVector<f64>,
) -> BoxQpSolution {
    let n = g.len();
    debug_assert!(lower.iter().zip(upper.iter()).all(|(l, u)| l <= u));
    let mut x = project(x0, lower, upper);

    // start with every bound that x sits on and the gradient pushes against
    let grad = h * &x + g;
    let mut set: Vec<Bound> = (0..n)
        .map(|i| {
            if x[i] <= lower[i] && grad[i] > 0.0 {
                x[i] = lower[i];
                Bound::Lower
            } else if x[i] >= upper[i] && grad[i] < 0.0 {
                x[i] = upper[i];
                Bound::Upper
            } else {
                Bound::Free
            }
        })
        .collect();

    let max_iter = 10 * n + 10;
    for iter in 1..=max_iter {
        let free: Vec<usize> = (0..n).filter(|&i| set[i] == Bound::Free).collect();

        // minimizer over the free variables with the others fixed
        let mut target = x.clone();
        if !free.is_empty() {
            let hff = DMatrix::from_fn(free.len(), free.len(), |a, b| h[(free[a], free[b])]);
            let hx = h * &x;
            let rhs = DVector::from_fn(free.len(), |a, _| {
                let i = free[a];
                let fixed_part: f64 = hx[i] - free.iter().map(|&j| h[(i, j)] * x[j]).sum::<f64>();
                -(g[i] + fixed_part)
            });
            let Some(chol) = hff.cholesky() else {
                return BoxQpSolution { x, iterations: iter, converged: false };
            };
            let sol = chol.solve(&rhs);
            for (a, &i) in free.iter().enumerate() {
                target[i] = sol[a];
            }
        }

        // longest feasible step towards the free minimizer
        let mut alpha = 1.0;
        let mut blocking = None;
        for &i in &free {
            let d = target[i] - x[i];
            if d < 0.0 && target[i] < lower[i] {
                let a = (lower[i] - x[i]) / d;
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, Bound::Lower));
                }
            } else if d > 0.0 && target[i] > upper[i] {
                let a = (upper[i] - x[i]) / d;
                if a < alpha {
                    alpha = a;
                    blocking = Some((i, Bound::Upper));
                }
            }
        }
        let alpha = alpha.max(0.0);
        for &i in &free {
            x[i] += alpha * (target[i] - x[i]);
            x[i] = x[i].clamp(lower[i], upper[i]);
        }

        if let Some((i, b)) = blocking {
            x[i] = if b == Bound::Lower { lower[i] } else { upper[i] };
            set[i] = b;
            continue;
        }

        // stationary on the working set; release the worst-signed multiplier
        let grad = h * &x + g;
        let mut worst = None;
        let mut worst_val = TOL;
        for i in 0..n {
            let violation = match set[i] {
                Bound::Lower => -grad[i],
                Bound::Upper => grad[i],
                Bound::Free => continue,
            };
            if violation > worst_val {
                worst_val = violation;
                worst = Some(i);
            }
        }
        match worst {
            Some(i) => set[i] = Bound::Free,
            None => return BoxQpSolution { x, iterations: iter, converged: true },
        }
    }
    BoxQpSolution { x, iterations: max_iter, converged: false }
}

/// Infinity norm of the projected gradient step `x - P(x - grad)`.
pub fn projected_gradient_norm(
    x: &DVector<f64>,
    grad: &DVector<f64>,
    lower: &DVector<f64>,
    upper: &DVector<f64>,
) -> f64 {
    (0..x.len()).map(|i| (x[i] - (x[i] - grad[i]).clamp(lower[i], upper[i])).abs()).fold(0.0, f64::max)
}
