//! Gauss-Newton projection onto `c(x) = 0`, ignoring bounds and
//! inequalities.

use super::ldl::SymbolicLdl;
use super::problem::NlpProblem;

/// Result of [`project_eq`].
#[derive(Clone, Debug)]
pub struct Projection {
    pub x: Vec<f64>,
    /// Infinity norm of `c(x)`.
    pub residual: f64,
    pub iters: usize,
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

/// Damped least-change Newton steps: each step solves
/// `min |dx|² + |J dx + c|² / γ` through the quasi-definite system
/// `[I Jᵀ; J -γI]`, with `γ` adapted Levenberg-Marquardt style. Stops at
/// `tol` or after `max_iter` steps.
pub fn project_eq(problem: &dyn NlpProblem, x0: &[f64], tol: f64, max_iter: usize) -> Projection {
    let (n, m) = (problem.n(), problem.n_eq());
    let jac = problem.eq_jacobian_structure().to_vec();
    let mut entries: Vec<(usize, usize)> = (0..n + m).map(|i| (i, i)).collect();
    entries.extend(jac.iter().map(|&(r, c)| (n + r, c)));
    let sym = SymbolicLdl::new(n + m, &entries);
    let mut x = x0.to_vec();
    let mut c = vec![0.0; m];
    problem.eq_values(&x, &mut c);
    let mut res = inf_norm(&c);
    let mut gamma = 1e-10;
    let mut jv = vec![0.0; jac.len()];
    let mut iters = 0;
    while res > tol && iters < max_iter {
        iters += 1;
        problem.eq_jacobian_values(&x, &mut jv);
        let mut values = vec![0.0; entries.len()];
        values[n + m..].copy_from_slice(&jv);
        let mut shift = vec![1.0; n + m];
        let mut improved = false;
        for _ in 0..12 {
            shift[n..].iter_mut().for_each(|v| *v = -gamma);
            let Ok(f) = sym.factor(&values, &shift) else {
                gamma *= 100.0;
                continue;
            };
            let mut rhs = vec![0.0; n + m];
            for (r, ci) in c.iter().enumerate() {
                rhs[n + r] = -ci;
            }
            f.solve_in_place(&mut rhs);
            let xt: Vec<f64> = x.iter().zip(&rhs[..n]).map(|(a, d)| a + d).collect();
            let mut ct = vec![0.0; m];
            problem.eq_values(&xt, &mut ct);
            let rt = inf_norm(&ct);
            if rt.is_finite() && rt < res {
                x = xt;
                c = ct;
                res = rt;
                gamma = (gamma * 0.1).max(1e-14);
                improved = true;
                break;
            }
            gamma *= 100.0;
        }
        if !improved {
            break;
        }
    }
    Projection { x, residual: res, iters }
}
