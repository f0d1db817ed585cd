use std::path::PathBuf;

use thiserror::Error;

/// A smooth constrained program
///
/// ```txt
///   min f(x)  s.t.  c(x) = 0,  g(x) >= 0,  lower <= x <= upper
/// ```
///
/// Jacobian and Hessian sparsity patterns must not change between calls.
/// Hessian entries are the lower triangle (`row >= col`) of
/// `obj_factor * ∇²f + Σ eq_weights[i] ∇²c_i + Σ ineq_weights[j] ∇²g_j`.
pub trait NlpProblem: Sync {
    fn n(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn n_ineq(&self) -> usize;
    fn lower_bounds(&self) -> &[f64];
    fn upper_bounds(&self) -> &[f64];

    fn objective(&self, x: &[f64]) -> f64;
    fn gradient(&self, x: &[f64], g: &mut [f64]);

    fn eq_values(&self, x: &[f64], out: &mut [f64]);
    fn ineq_values(&self, x: &[f64], out: &mut [f64]);

    /// `(row, col)` pairs.
    fn eq_jacobian_structure(&self) -> &[(usize, usize)];
    fn eq_jacobian_values(&self, x: &[f64], out: &mut [f64]);
    fn ineq_jacobian_structure(&self) -> &[(usize, usize)];
    fn ineq_jacobian_values(&self, x: &[f64], out: &mut [f64]);

    /// `None` when second derivatives are unavailable; the solver then
    /// falls back to a quasi-Newton approximation.
    fn hessian_structure(&self) -> Option<&[(usize, usize)]> {
        None
    }
    fn hessian_values(
        &self,
        _x: &[f64],
        _obj_factor: f64,
        _eq_weights: &[f64],
        _ineq_weights: &[f64],
        _out: &mut [f64],
    ) {
    }

    fn var_name(&self, i: usize) -> String {
        format!("x[{i}]")
    }
    fn eq_name(&self, i: usize) -> String {
        format!("eq[{i}]")
    }
    fn ineq_name(&self, i: usize) -> String {
        format!("ineq[{i}]")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HessianMode {
    Exact,
    QuasiNewton,
}

#[derive(Clone, Debug)]
pub struct NlpOptions {
    /// Tolerance on each of the three KKT residual norms.
    pub tol: f64,
    pub max_iter: usize,
    /// Initial barrier parameter.
    pub mu0: f64,
    pub multistart: usize,
    pub seed: u64,
    pub hessian_mode: HessianMode,
    /// Per-iteration CSV trace destination.
    pub trace: Option<PathBuf>,
    /// Relative half-width of the uniform perturbation applied to the
    /// primal start of every multistart attempt after the first.
    pub perturbation: f64,
}

impl Default for NlpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            mu0: 0.1,
            multistart: 1,
            seed: 0,
            hessian_mode: HessianMode::Exact,
            trace: None,
            perturbation: 0.1,
        }
    }
}

impl NlpOptions {
    pub fn validate(&self) -> Result<(), NlpError> {
        if !(self.tol > 0.0) {
            return Err(NlpError::InvalidOptions(format!("tol must be positive, got {}", self.tol)));
        }
        if self.max_iter == 0 {
            return Err(NlpError::InvalidOptions("max_iter must be at least 1".into()));
        }
        if self.multistart == 0 {
            return Err(NlpError::InvalidOptions("multistart must be at least 1".into()));
        }
        if !(self.mu0 > 0.0) {
            return Err(NlpError::InvalidOptions(format!("mu0 must be positive, got {}", self.mu0)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum SolveStatus {
    Solved,
    MaxIter,
    Infeasible,
    /// Non-finite evaluation or a breakdown of the linear algebra.
    NumericalFailure(String),
}

impl SolveStatus {
    pub fn is_solved(&self) -> bool {
        matches!(self, SolveStatus::Solved)
    }
}

/// Infinity norms of the first-order optimality conditions.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktNorms {
    pub stationarity: f64,
    pub feasibility: f64,
    pub complementarity: f64,
}

impl KktNorms {
    pub fn max(&self) -> f64 {
        self.stationarity.max(self.feasibility).max(self.complementarity)
    }
}

#[derive(Clone, Debug)]
pub struct NlpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Multipliers of `c(x) = 0` (Lagrangian `f - λᵀc - μᵀg - ...`).
    pub lambda_eq: Vec<f64>,
    /// Multipliers of `g(x) >= 0`, nonnegative.
    pub mu_ineq: Vec<f64>,
    pub z_lower: Vec<f64>,
    pub z_upper: Vec<f64>,
    pub status: SolveStatus,
    pub kkt: KktNorms,
    pub iters: usize,
    pub wall_seconds: f64,
    /// Final barrier parameter.
    pub barrier: f64,
}

#[derive(Debug, Error)]
pub enum NlpError {
    #[error("invalid solver options: {0}")]
    InvalidOptions(String),
    #[error("start point has length {got}, problem has {expected} variables")]
    StartLength { expected: usize, got: usize },
    #[error("sparsity contract violated: {0}")]
    Sparsity(String),
    #[error("inconsistent bounds on {name}: lower {lower} > upper {upper}")]
    Bounds { name: String, lower: f64, upper: f64 },
    #[error("failed to write trace: {0}")]
    Trace(#[from] std::io::Error),
}

/// Checks dimensions and index ranges declared by a problem.
pub fn check_contract(p: &dyn NlpProblem) -> Result<(), NlpError> {
    let n = p.n();
    if p.lower_bounds().len() != n || p.upper_bounds().len() != n {
        return Err(NlpError::Sparsity("bound vectors do not match n".into()));
    }
    for i in 0..n {
        let (l, u) = (p.lower_bounds()[i], p.upper_bounds()[i]);
        if l > u || l.is_nan() || u.is_nan() {
            return Err(NlpError::Bounds {
                name: p.var_name(i),
                lower: l,
                upper: u,
            });
        }
    }
    let check = |what: &str, s: &[(usize, usize)], rows: usize, cols: usize| {
        for &(r, c) in s {
            if r >= rows || c >= cols {
                return Err(NlpError::Sparsity(format!(
                    "{what} entry ({r}, {c}) outside {rows}x{cols}"
                )));
            }
        }
        Ok(())
    };
    check("equality jacobian", p.eq_jacobian_structure(), p.n_eq(), n)?;
    check("inequality jacobian", p.ineq_jacobian_structure(), p.n_ineq(), n)?;
    if let Some(h) = p.hessian_structure() {
        check("hessian", h, n, n)?;
        if let Some(&(r, c)) = h.iter().find(|&&(r, c)| r < c) {
            return Err(NlpError::Sparsity(format!(
                "hessian entry ({r}, {c}) is above the diagonal"
            )));
        }
    }
    Ok(())
}
