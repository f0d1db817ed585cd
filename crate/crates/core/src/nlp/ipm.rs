//! Primal-dual interior-point method with slack variables, a monotone
//! barrier schedule, inertia correction and an l1 merit line search.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::time::Instant;

use log::debug;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ldl::{sym_matvec, DynamicRegularization, LdlFactor, SymbolicLdl};
use super::problem::{
    check_contract, HessianMode, KktNorms, NlpError, NlpOptions, NlpProblem, NlpSolution,
    SolveStatus,
};

/// Bounds at or beyond this magnitude are treated as absent.
pub const INFINITE_BOUND: f64 = 1e19;

const KAPPA_EPS: f64 = 10.0;
const KAPPA_MU: f64 = 0.2;
const THETA_MU: f64 = 1.5;
const KAPPA_SIGMA: f64 = 1e10;
const ARMIJO: f64 = 1e-4;
const RHO_MERIT: f64 = 0.1;
const BOUND_PUSH: f64 = 1e-2;
const S_MAX: f64 = 100.0;

/// Primal start plus optional dual estimates.
#[derive(Clone, Debug, Default)]
pub struct StartPoint {
    pub x: Vec<f64>,
    pub lambda_eq: Option<Vec<f64>>,
    pub mu_ineq: Option<Vec<f64>>,
    pub z_lower: Option<Vec<f64>>,
    pub z_upper: Option<Vec<f64>>,
}

impl StartPoint {
    pub fn primal(x: Vec<f64>) -> Self {
        Self {
            x,
            ..Default::default()
        }
    }
}

/// Every attempt of a multistart run, plus the index of the selected one.
#[derive(Clone, Debug)]
pub struct MultistartResult {
    pub best: usize,
    pub attempts: Vec<NlpSolution>,
    pub starts: Vec<Vec<f64>>,
}

impl MultistartResult {
    pub fn best(&self) -> &NlpSolution {
        &self.attempts[self.best]
    }

    pub fn into_best(mut self) -> NlpSolution {
        self.attempts.swap_remove(self.best)
    }
}

fn finite(b: f64) -> bool {
    b.abs() < INFINITE_BOUND
}

/// Default primal start: the midpoint of finite boxes, one unit inside
/// one-sided boxes, zero for free variables.
pub fn default_start(problem: &dyn NlpProblem) -> Vec<f64> {
    problem
        .lower_bounds()
        .iter()
        .zip(problem.upper_bounds())
        .map(|(&l, &u)| match (finite(l), finite(u)) {
            (true, true) => 0.5 * (l + u),
            (true, false) => l + 1.0,
            (false, true) => u - 1.0,
            (false, false) => 0.0,
        })
        .collect()
}

/// Infinity norms of stationarity, feasibility and complementarity for
/// `f - λᵀc - μᵀg - z_lᵀ(x - l) - z_uᵀ(u - x)`.
///
/// Sign violations of `mu_ineq`, `z_lower`, `z_upper` count as
/// complementarity error; bound and `g >= 0` violations as infeasibility.
pub fn kkt_residual(
    problem: &dyn NlpProblem,
    x: &[f64],
    lambda_eq: &[f64],
    mu_ineq: &[f64],
    z_lower: &[f64],
    z_upper: &[f64],
) -> KktNorms {
    let n = problem.n();
    let (lo, up) = (problem.lower_bounds(), problem.upper_bounds());
    let mut r = vec![0.0; n];
    problem.gradient(x, &mut r);
    let mut c = vec![0.0; problem.n_eq()];
    problem.eq_values(x, &mut c);
    let mut g = vec![0.0; problem.n_ineq()];
    problem.ineq_values(x, &mut g);

    let es = problem.eq_jacobian_structure();
    let mut ev = vec![0.0; es.len()];
    problem.eq_jacobian_values(x, &mut ev);
    for (&(row, col), v) in es.iter().zip(&ev) {
        r[col] -= v * lambda_eq[row];
    }
    let is = problem.ineq_jacobian_structure();
    let mut iv = vec![0.0; is.len()];
    problem.ineq_jacobian_values(x, &mut iv);
    for (&(row, col), v) in is.iter().zip(&iv) {
        r[col] -= v * mu_ineq[row];
    }
    for i in 0..n {
        r[i] -= z_lower[i];
        r[i] += z_upper[i];
    }
    let stationarity = inf_norm(&r);

    let mut feasibility = inf_norm(&c);
    let mut complementarity: f64 = 0.0;
    for (gj, mj) in g.iter().zip(mu_ineq) {
        feasibility = feasibility.max(-gj);
        complementarity = complementarity.max((gj * mj).abs()).max(-mj);
    }
    for i in 0..n {
        if finite(lo[i]) {
            feasibility = feasibility.max(lo[i] - x[i]);
            complementarity = complementarity.max((z_lower[i] * (x[i] - lo[i])).abs());
        } else {
            complementarity = complementarity.max(z_lower[i].abs());
        }
        if finite(up[i]) {
            feasibility = feasibility.max(x[i] - up[i]);
            complementarity = complementarity.max((z_upper[i] * (up[i] - x[i])).abs());
        } else {
            complementarity = complementarity.max(z_upper[i].abs());
        }
        complementarity = complementarity.max(-z_lower[i]).max(-z_upper[i]);
    }
    KktNorms {
        stationarity,
        feasibility: feasibility.max(0.0),
        complementarity,
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn one_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x.abs()).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Solves from `start` (or the default start when absent).
pub fn solve(
    problem: &dyn NlpProblem,
    options: &NlpOptions,
    start: Option<&[f64]>,
) -> Result<NlpSolution, NlpError> {
    let x = match start {
        Some(s) => s.to_vec(),
        None => default_start(problem),
    };
    solve_from(problem, options, &StartPoint::primal(x))
}

/// Solves from a primal-dual start point.
pub fn solve_from(
    problem: &dyn NlpProblem,
    options: &NlpOptions,
    start: &StartPoint,
) -> Result<NlpSolution, NlpError> {
    options.validate()?;
    check_contract(problem)?;
    if start.x.len() != problem.n() {
        return Err(NlpError::StartLength {
            expected: problem.n(),
            got: start.x.len(),
        });
    }
    let check_len = |v: &Option<Vec<f64>>, expected: usize| match v {
        Some(v) if v.len() != expected => Err(NlpError::StartLength {
            expected,
            got: v.len(),
        }),
        _ => Ok(()),
    };
    check_len(&start.lambda_eq, problem.n_eq())?;
    check_len(&start.mu_ineq, problem.n_ineq())?;
    check_len(&start.z_lower, problem.n())?;
    check_len(&start.z_upper, problem.n())?;
    let trace = match &options.trace {
        Some(path) => {
            let mut w = BufWriter::new(File::create(path)?);
            writeln!(
                w,
                "iter,objective,barrier,stationarity,feasibility,complementarity,step"
            )?;
            Some(w)
        }
        None => None,
    };
    let layout = Layout::new(problem, options.hessian_mode);
    let mut solver = Solver {
        p: problem,
        lay: &layout,
        opt: options,
        trace,
    };
    solver.run(start)
}

/// Runs `options.multistart` solves: the first from `start` (or the
/// default start), the rest from uniformly perturbed, box-clipped copies.
/// Attempts are independent and run in parallel when enabled.
pub fn multistart_solve(
    problem: &dyn NlpProblem,
    options: &NlpOptions,
    start: Option<&StartPoint>,
) -> Result<MultistartResult, NlpError> {
    options.validate()?;
    check_contract(problem)?;
    let base = match start {
        Some(s) => s.clone(),
        None => StartPoint::primal(default_start(problem)),
    };
    let starts: Vec<StartPoint> = (0..options.multistart)
        .map(|k| {
            if k == 0 {
                base.clone()
            } else {
                let mut s = base.clone();
                s.x = perturb(problem, &base.x, options.perturbation, options.seed, k);
                s
            }
        })
        .collect();
    let results = crate::exec::par_map(&starts, |k, s| {
        let mut o = options.clone();
        if k > 0 {
            o.trace = None;
        }
        solve_from(problem, &o, s)
    });
    let attempts = results.into_iter().collect::<Result<Vec<_>, _>>()?;
    let best = select_best(&attempts);
    Ok(MultistartResult {
        best,
        attempts,
        starts: starts.into_iter().map(|s| s.x).collect(),
    })
}

/// Best solved attempt by objective (ties to the lowest index), else the
/// attempt with the smallest KKT residual.
pub fn select_best(attempts: &[NlpSolution]) -> usize {
    let solved = attempts
        .iter()
        .enumerate()
        .filter(|(_, a)| a.status.is_solved())
        .min_by(|a, b| a.1.objective.total_cmp(&b.1.objective));
    if let Some((i, _)) = solved {
        return i;
    }
    attempts
        .iter()
        .enumerate()
        .min_by(|a, b| {
            let ka = if a.1.kkt.max().is_nan() { f64::INFINITY } else { a.1.kkt.max() };
            let kb = if b.1.kkt.max().is_nan() { f64::INFINITY } else { b.1.kkt.max() };
            ka.total_cmp(&kb)
        })
        .map(|(i, _)| i)
        .unwrap_or(0)
}

fn perturb(problem: &dyn NlpProblem, x: &[f64], width: f64, seed: u64, k: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(k as u64));
    let (lo, up) = (problem.lower_bounds(), problem.upper_bounds());
    x.iter()
        .enumerate()
        .map(|(i, &xi)| {
            let scale = xi.abs().max(0.1);
            let v = xi + width * scale * rng.gen_range(-1.0..=1.0);
            v.clamp(lo[i], up[i])
        })
        .collect()
}

/// Fixed sparsity layout of the slack-augmented problem
/// `X = (x, s)`, `C(X) = (c(x), g(x) - s)`.
struct Layout {
    n: usize,
    me: usize,
    mi: usize,
    lo: Vec<f64>,
    up: Vec<f64>,
    eq_jac: Vec<(usize, usize)>,
    ineq_jac: Vec<(usize, usize)>,
    hess: Vec<(usize, usize)>,
    kkt: Vec<(usize, usize)>,
    symbolic: SymbolicLdl,
    dual_signs: Vec<i8>,
    quasi_newton: bool,
}

impl Layout {
    fn new(p: &dyn NlpProblem, mode: HessianMode) -> Self {
        let (n, me, mi) = (p.n(), p.n_eq(), p.n_ineq());
        let nn = n + mi;
        let mut lo = vec![0.0; nn];
        let mut up = vec![f64::INFINITY; nn];
        for i in 0..n {
            let (mut l, mut u) = (p.lower_bounds()[i], p.upper_bounds()[i]);
            if l == u {
                let d = 1e-8 * l.abs().max(1.0);
                l -= d;
                u += d;
            }
            lo[i] = if finite(l) { l } else { f64::NEG_INFINITY };
            up[i] = if finite(u) { u } else { f64::INFINITY };
        }
        let quasi_newton = mode == HessianMode::QuasiNewton || p.hessian_structure().is_none();
        let hess: Vec<(usize, usize)> = if quasi_newton {
            (0..n).flat_map(|i| (0..=i).map(move |j| (i, j))).collect()
        } else {
            p.hessian_structure().unwrap_or(&[]).to_vec()
        };
        let eq_jac = p.eq_jacobian_structure().to_vec();
        let ineq_jac = p.ineq_jacobian_structure().to_vec();
        let mut kkt = hess.clone();
        kkt.extend(eq_jac.iter().map(|&(r, c)| (nn + r, c)));
        kkt.extend(ineq_jac.iter().map(|&(r, c)| (nn + me + r, c)));
        kkt.extend((0..mi).map(|j| (nn + me + j, n + j)));
        let mut dual_signs = vec![0i8; nn];
        dual_signs.extend(std::iter::repeat_n(-1i8, me + mi));
        // Inequality rows follow their slack; equality rows follow every
        // variable they touch.
        let mut after = vec![Vec::new(); nn + me + mi];
        for &(r, c) in &eq_jac {
            after[nn + r].push(c);
        }
        for j in 0..mi {
            after[nn + me + j].push(n + j);
        }
        for a in &mut after {
            a.sort_unstable();
            a.dedup();
        }
        let symbolic = SymbolicLdl::constrained(nn + me + mi, &kkt, &after);
        Self {
            n,
            me,
            mi,
            lo,
            up,
            eq_jac,
            ineq_jac,
            hess,
            kkt,
            symbolic,
            dual_signs,
            quasi_newton,
        }
    }

    fn nn(&self) -> usize {
        self.n + self.mi
    }

    fn mm(&self) -> usize {
        self.me + self.mi
    }

    fn has_lo(&self, i: usize) -> bool {
        self.lo[i].is_finite()
    }

    fn has_up(&self, i: usize) -> bool {
        self.up[i].is_finite()
    }

    /// `Jᵀ v` over the augmented variables.
    fn jt_mul(&self, jac: &[f64], v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nn()];
        let ne = self.eq_jac.len();
        for (k, &(r, c)) in self.eq_jac.iter().enumerate() {
            out[c] += jac[k] * v[r];
        }
        for (k, &(r, c)) in self.ineq_jac.iter().enumerate() {
            out[c] += jac[ne + k] * v[self.me + r];
        }
        for j in 0..self.mi {
            out[self.n + j] -= v[self.me + j];
        }
        out
    }
}

/// Function values at an augmented point.
#[derive(Clone)]
struct Values {
    f: f64,
    c: Vec<f64>,
}

/// Values and first derivatives at an augmented point.
#[derive(Clone)]
struct Point {
    v: Values,
    grad: Vec<f64>,
    jac: Vec<f64>,
}

struct Iterate {
    x: Vec<f64>,
    y: Vec<f64>,
    zl: Vec<f64>,
    zu: Vec<f64>,
}

struct Step {
    dx: Vec<f64>,
    dy: Vec<f64>,
    dzl: Vec<f64>,
    dzu: Vec<f64>,
}

struct Factored {
    factor: LdlFactor,
    values: Vec<f64>,
    shift: Vec<f64>,
}

struct Solver<'a> {
    p: &'a dyn NlpProblem,
    lay: &'a Layout,
    opt: &'a NlpOptions,
    trace: Option<BufWriter<File>>,
}

impl<'a> Solver<'a> {
    fn values(&self, xx: &[f64]) -> Result<Values, String> {
        let lay = self.lay;
        let x = &xx[..lay.n];
        let f = self.p.objective(x);
        if !f.is_finite() {
            return Err("objective".into());
        }
        let mut c = vec![0.0; lay.mm()];
        self.p.eq_values(x, &mut c[..lay.me]);
        let mut g = vec![0.0; lay.mi];
        self.p.ineq_values(x, &mut g);
        for j in 0..lay.mi {
            c[lay.me + j] = g[j] - xx[lay.n + j];
        }
        if let Some(i) = c.iter().position(|v| !v.is_finite()) {
            return Err(self.row_name(i));
        }
        Ok(Values { f, c })
    }

    fn row_name(&self, i: usize) -> String {
        if i < self.lay.me {
            self.p.eq_name(i)
        } else {
            self.p.ineq_name(i - self.lay.me)
        }
    }

    fn point(&self, xx: &[f64]) -> Result<Point, String> {
        let v = self.values(xx)?;
        self.derivatives(xx, v)
    }

    fn derivatives(&self, xx: &[f64], v: Values) -> Result<Point, String> {
        let lay = self.lay;
        let x = &xx[..lay.n];
        let mut grad = vec![0.0; lay.nn()];
        self.p.gradient(x, &mut grad[..lay.n]);
        if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
            return Err(format!("objective gradient w.r.t. {}", self.p.var_name(i)));
        }
        let ne = lay.eq_jac.len();
        let mut jac = vec![0.0; ne + lay.ineq_jac.len()];
        self.p.eq_jacobian_values(x, &mut jac[..ne]);
        self.p.ineq_jacobian_values(x, &mut jac[ne..]);
        if let Some(k) = jac.iter().position(|g| !g.is_finite()) {
            let row = if k < ne {
                lay.eq_jac[k].0
            } else {
                lay.me + lay.ineq_jac[k - ne].0
            };
            return Err(format!("jacobian of {}", self.row_name(row)));
        }
        Ok(Point { v, grad, jac })
    }

    fn hessian(&self, xx: &[f64], y: &[f64], out: &mut [f64]) -> Result<(), String> {
        let lay = self.lay;
        let ye: Vec<f64> = y[..lay.me].iter().map(|v| -v).collect();
        let yi: Vec<f64> = y[lay.me..].iter().map(|v| -v).collect();
        self.p.hessian_values(&xx[..lay.n], 1.0, &ye, &yi, out);
        if out.iter().any(|v| !v.is_finite()) {
            return Err("lagrangian hessian".into());
        }
        Ok(())
    }

    fn dual_residual(&self, pt: &Point, it: &Iterate) -> Vec<f64> {
        let jty = self.lay.jt_mul(&pt.jac, &it.y);
        (0..self.lay.nn())
            .map(|i| pt.grad[i] - jty[i] - it.zl[i] + it.zu[i])
            .collect()
    }

    /// Scaled optimality error of the barrier problem.
    fn barrier_error(&self, pt: &Point, it: &Iterate, mu: f64) -> f64 {
        let lay = self.lay;
        let rd = self.dual_residual(pt, it);
        let zsum = one_norm(&it.zl) + one_norm(&it.zu);
        let nz = 2 * lay.nn();
        let sd = (S_MAX.max((one_norm(&it.y) + zsum) / (lay.mm() + nz).max(1) as f64)) / S_MAX;
        let sc = (S_MAX.max(zsum / nz.max(1) as f64)) / S_MAX;
        let mut comp: f64 = 0.0;
        for i in 0..lay.nn() {
            if lay.has_lo(i) {
                comp = comp.max(((it.x[i] - lay.lo[i]) * it.zl[i] - mu).abs());
            }
            if lay.has_up(i) {
                comp = comp.max(((lay.up[i] - it.x[i]) * it.zu[i] - mu).abs());
            }
        }
        (inf_norm(&rd) / sd).max(inf_norm(&pt.v.c)).max(comp / sc)
    }

    fn original_norms(&self, it: &Iterate) -> KktNorms {
        let lay = self.lay;
        let (zl, zu) = self.original_bound_duals(it);
        kkt_residual(
            self.p,
            &it.x[..lay.n],
            &it.y[..lay.me],
            &it.zl[lay.n..],
            &zl,
            &zu,
        )
    }

    fn original_bound_duals(&self, it: &Iterate) -> (Vec<f64>, Vec<f64>) {
        let n = self.lay.n;
        (it.zl[..n].to_vec(), it.zu[..n].to_vec())
    }

    /// True when the iterate is significantly infeasible but stationary for
    /// `½‖C‖²` over the box (projected gradient small relative to `‖C‖`).
    fn infeasible_stationary(&self, pt: &Point, it: &Iterate) -> bool {
        let lay = self.lay;
        let cn = inf_norm(&pt.v.c);
        if cn <= 1e-4_f64.max(self.opt.tol) {
            return false;
        }
        let g = lay.jt_mul(&pt.jac, &pt.v.c);
        let mut worst: f64 = 0.0;
        for i in 0..lay.nn() {
            let near_lo = lay.has_lo(i) && it.x[i] - lay.lo[i] <= 1e-6 * (1.0 + lay.lo[i].abs());
            let near_up = lay.has_up(i) && lay.up[i] - it.x[i] <= 1e-6 * (1.0 + lay.up[i].abs());
            // descent direction is -g; blocked if it points out of the box
            if (near_lo && g[i] > 0.0) || (near_up && g[i] < 0.0) {
                continue;
            }
            worst = worst.max(g[i].abs());
        }
        worst <= 1e-7 * cn
    }

    fn barrier_value(&self, x: &[f64], f: f64, mu: f64) -> f64 {
        let lay = self.lay;
        let mut phi = f;
        for i in 0..lay.nn() {
            if lay.has_lo(i) {
                phi -= mu * (x[i] - lay.lo[i]).ln();
            }
            if lay.has_up(i) {
                phi -= mu * (lay.up[i] - x[i]).ln();
            }
        }
        phi
    }

    fn sigma(&self, it: &Iterate) -> Vec<f64> {
        let lay = self.lay;
        (0..lay.nn())
            .map(|i| {
                let mut s = 0.0;
                if lay.has_lo(i) {
                    s += it.zl[i] / (it.x[i] - lay.lo[i]);
                }
                if lay.has_up(i) {
                    s += it.zu[i] / (lay.up[i] - it.x[i]);
                }
                s
            })
            .collect()
    }

    fn kkt_values(&self, hess: &[f64], jac: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.lay.kkt.len());
        v.extend_from_slice(hess);
        v.extend_from_slice(jac);
        v.extend(std::iter::repeat_n(-1.0, self.lay.mi));
        v
    }

    fn try_factor(&self, values: &[f64], shift: &[f64]) -> Option<LdlFactor> {
        let reg = DynamicRegularization {
            signs: self.lay.dual_signs.clone(),
            eps: 1e-13,
            delta: 1e-9,
        };
        self.lay
            .symbolic
            .factor_regularized(values, shift, Some(&reg))
            .ok()
    }

    fn inertia_ok(&self, f: &LdlFactor) -> bool {
        let i = f.inertia();
        i.positive == self.lay.nn() && i.negative == self.lay.mm()
    }

    /// Factors `[W + Σ + δw I, Jᵀ; J, -δc I]`, raising `δw` until the
    /// inertia is `(nn, mm, 0)`.
    fn factor_kkt(
        &self,
        values: Vec<f64>,
        sigma: &[f64],
        mu: f64,
        dw_last: &mut f64,
        dw_min: f64,
    ) -> Result<Factored, String> {
        let lay = self.lay;
        let dc = 1e-10 * mu.powf(0.25);
        let shift_for = |dw: f64| -> Vec<f64> {
            let mut s: Vec<f64> = sigma.iter().map(|v| v + dw).collect();
            s.extend(std::iter::repeat_n(-dc, lay.mm()));
            s
        };
        if dw_min == 0.0 {
            let shift = shift_for(0.0);
            if let Some(f) = self.try_factor(&values, &shift) {
                if self.inertia_ok(&f) {
                    return Ok(Factored {
                        factor: f,
                        values,
                        shift,
                    });
                }
            }
        }
        let mut dw = if *dw_last == 0.0 {
            1e-4
        } else {
            (*dw_last / 3.0).max(1e-20)
        };
        dw = dw.max(dw_min);
        let grow = if *dw_last == 0.0 { 100.0 } else { 8.0 };
        while dw < 1e40 {
            let shift = shift_for(dw);
            if let Some(f) = self.try_factor(&values, &shift) {
                if self.inertia_ok(&f) {
                    *dw_last = dw;
                    return Ok(Factored {
                        factor: f,
                        values,
                        shift,
                    });
                }
            }
            dw *= grow;
        }
        Err("inertia correction failed".into())
    }

    /// Solve with iterative refinement against the unregularized matrix.
    fn kkt_solve(&self, fk: &Factored, rhs: &[f64]) -> Vec<f64> {
        let dim = rhs.len();
        let mut x = rhs.to_vec();
        fk.factor.solve_in_place(&mut x);
        let bnorm = inf_norm(rhs).max(1e-300);
        let residual = |x: &[f64]| -> Vec<f64> {
            let kx = sym_matvec(dim, &self.lay.kkt, &fk.values, &fk.shift, x);
            rhs.iter().zip(&kx).map(|(b, k)| b - k).collect()
        };
        let mut r = residual(&x);
        let mut rn = inf_norm(&r);
        for _ in 0..10 {
            if rn <= 1e-15 * bnorm || !rn.is_finite() {
                break;
            }
            let mut d = r.clone();
            fk.factor.solve_in_place(&mut d);
            let cand: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + b).collect();
            let rc = residual(&cand);
            let rcn = inf_norm(&rc);
            if !(rcn < 0.9 * rn) {
                if rcn < rn {
                    x = cand;
                }
                break;
            }
            x = cand;
            r = rc;
            rn = rcn;
        }
        x
    }

    /// Bound-dual steps from the primal step.
    fn bound_dual_step(&self, it: &Iterate, dx: &[f64], mu: f64) -> (Vec<f64>, Vec<f64>) {
        let lay = self.lay;
        let nn = lay.nn();
        let mut dzl = vec![0.0; nn];
        let mut dzu = vec![0.0; nn];
        for i in 0..nn {
            if lay.has_lo(i) {
                let d = it.x[i] - lay.lo[i];
                dzl[i] = mu / d - it.zl[i] - it.zl[i] / d * dx[i];
            }
            if lay.has_up(i) {
                let d = lay.up[i] - it.x[i];
                dzu[i] = mu / d - it.zu[i] + it.zu[i] / d * dx[i];
            }
        }
        (dzl, dzu)
    }

    /// Largest step in (0, 1] keeping bounds strictly interior.
    fn max_primal_step(&self, x: &[f64], dx: &[f64], tau: f64) -> f64 {
        let lay = self.lay;
        let mut a: f64 = 1.0;
        for i in 0..lay.nn() {
            if lay.has_lo(i) && dx[i] < 0.0 {
                a = a.min(-tau * (x[i] - lay.lo[i]) / dx[i]);
            }
            if lay.has_up(i) && dx[i] > 0.0 {
                a = a.min(tau * (lay.up[i] - x[i]) / dx[i]);
            }
        }
        a
    }

    fn max_dual_step(&self, it: &Iterate, dzl: &[f64], dzu: &[f64], tau: f64) -> f64 {
        let lay = self.lay;
        let mut a: f64 = 1.0;
        for i in 0..lay.nn() {
            if lay.has_lo(i) && dzl[i] < 0.0 {
                a = a.min(-tau * it.zl[i] / dzl[i]);
            }
            if lay.has_up(i) && dzu[i] < 0.0 {
                a = a.min(-tau * it.zu[i] / dzu[i]);
            }
        }
        a
    }

    fn initial_iterate(&self, start: &StartPoint) -> Result<(Iterate, Point), String> {
        let lay = self.lay;
        let (n, nn) = (lay.n, lay.nn());
        let mut x = vec![0.0; nn];
        for i in 0..n {
            let (l, u) = (lay.lo[i], lay.up[i]);
            let mut v = start.x[i];
            let width = if l.is_finite() && u.is_finite() {
                u - l
            } else {
                f64::INFINITY
            };
            if l.is_finite() {
                let push = (BOUND_PUSH * l.abs().max(1.0)).min(BOUND_PUSH * width);
                v = v.max(l + push);
            }
            if u.is_finite() {
                let push = (BOUND_PUSH * u.abs().max(1.0)).min(BOUND_PUSH * width);
                v = v.min(u - push);
            }
            x[i] = v;
        }
        let mut g = vec![0.0; lay.mi];
        self.p.ineq_values(&x[..n], &mut g);
        if let Some(j) = g.iter().position(|v| !v.is_finite()) {
            return Err(self.p.ineq_name(j));
        }
        for j in 0..lay.mi {
            x[n + j] = g[j].max(BOUND_PUSH);
        }
        let pt = self.point(&x)?;

        let mut zl: Vec<f64> = (0..nn).map(|i| if lay.has_lo(i) { 1.0 } else { 0.0 }).collect();
        let mut zu: Vec<f64> = (0..nn).map(|i| if lay.has_up(i) { 1.0 } else { 0.0 }).collect();
        let floor = 1e-2 * self.opt.mu0;
        if let Some(z) = &start.z_lower {
            for i in 0..n {
                if lay.has_lo(i) {
                    zl[i] = z[i].max(floor);
                }
            }
        }
        if let Some(z) = &start.z_upper {
            for i in 0..n {
                if lay.has_up(i) {
                    zu[i] = z[i].max(floor);
                }
            }
        }
        if let Some(m) = &start.mu_ineq {
            for j in 0..lay.mi {
                zl[n + j] = m[j].max(floor);
            }
        }

        let y = match (&start.lambda_eq, &start.mu_ineq) {
            (Some(l), Some(m)) => l.iter().chain(m).copied().collect(),
            _ => {
                let mut y = self.least_squares_duals(&pt, &zl, &zu);
                if let Some(l) = &start.lambda_eq {
                    y[..lay.me].copy_from_slice(l);
                }
                if let Some(m) = &start.mu_ineq {
                    y[lay.me..].copy_from_slice(m);
                }
                y
            }
        };
        Ok((Iterate { x, y, zl, zu }, pt))
    }

    /// Multipliers minimizing the dual residual; zero when that estimate is
    /// unreasonably large or the system cannot be factored.
    fn least_squares_duals(&self, pt: &Point, zl: &[f64], zu: &[f64]) -> Vec<f64> {
        let lay = self.lay;
        let (nn, mm) = (lay.nn(), lay.mm());
        let hz = vec![0.0; lay.hess.len()];
        let values = self.kkt_values(&hz, &pt.jac);
        let mut shift = vec![1.0; nn];
        shift.extend(std::iter::repeat_n(0.0, mm));
        let Some(factor) = self.try_factor(&values, &shift) else {
            return vec![0.0; mm];
        };
        let fk = Factored {
            factor,
            values,
            shift,
        };
        let mut rhs: Vec<f64> = (0..nn).map(|i| -(pt.grad[i] - zl[i] + zu[i])).collect();
        rhs.extend(std::iter::repeat_n(0.0, mm));
        let sol = self.kkt_solve(&fk, &rhs);
        let y: Vec<f64> = sol[nn..].iter().map(|q| -q).collect();
        if y.iter().all(|v| v.is_finite()) && inf_norm(&y) <= 1e3 {
            y
        } else {
            vec![0.0; mm]
        }
    }

    fn write_trace(&mut self, iter: usize, f: f64, mu: f64, k: &KktNorms, step: f64) {
        if let Some(w) = &mut self.trace {
            let _ = writeln!(
                w,
                "{iter},{f:.12e},{mu:.6e},{:.6e},{:.6e},{:.6e},{step:.6e}",
                k.stationarity, k.feasibility, k.complementarity
            );
        }
    }

    fn run(&mut self, start: &StartPoint) -> Result<NlpSolution, NlpError> {
        let timer = Instant::now();
        let lay = self.lay;
        let (n, nn, mm) = (lay.n, lay.nn(), lay.mm());
        let tol = self.opt.tol;
        let mu_min = tol / 10.0;

        let fail = |status: SolveStatus, x: Vec<f64>, iters: usize, mu: f64| NlpSolution {
            objective: f64::NAN,
            lambda_eq: vec![0.0; lay.me],
            mu_ineq: vec![0.0; lay.mi],
            z_lower: vec![0.0; n],
            z_upper: vec![0.0; n],
            x,
            status,
            kkt: KktNorms {
                stationarity: f64::INFINITY,
                feasibility: f64::INFINITY,
                complementarity: f64::INFINITY,
            },
            iters,
            wall_seconds: timer.elapsed().as_secs_f64(),
            barrier: mu,
        };

        let (mut it, mut pt) = match self.initial_iterate(start) {
            Ok(v) => v,
            Err(name) => {
                return Ok(fail(
                    SolveStatus::NumericalFailure(format!("non-finite value in {name}")),
                    start.x.clone(),
                    0,
                    self.opt.mu0,
                ))
            }
        };
        let mut hess = vec![0.0; lay.hess.len()];
        let mut bfgs = if lay.quasi_newton {
            Some(DenseBfgs::new(n))
        } else {
            None
        };
        let eval_hess = |s: &Self, it: &Iterate, hess: &mut [f64], bfgs: &Option<DenseBfgs>| {
            match bfgs {
                Some(b) => {
                    b.lower_values(hess);
                    Ok(())
                }
                None => s.hessian(&it.x, &it.y, hess),
            }
        };
        if let Err(name) = eval_hess(self, &it, &mut hess, &bfgs) {
            return Ok(fail(
                SolveStatus::NumericalFailure(format!("non-finite value in {name}")),
                it.x[..n].to_vec(),
                0,
                self.opt.mu0,
            ));
        }

        let mut mu = self.opt.mu0;
        let mut nu: f64 = 1.0;
        let mut dw_last = 0.0;
        let mut step_len = 0.0;
        let mut status = SolveStatus::MaxIter;
        let mut iters = 0;
        let mut tiny_steps = 0;
        let mut stuck_infeasible = 0;
        let mut stalled = 0;
        let mut kkt = self.original_norms(&it);

        'outer: for iter in 0..=self.opt.max_iter {
            iters = iter;
            kkt = self.original_norms(&it);
            self.write_trace(iter, pt.v.f, mu, &kkt, step_len);
            if kkt.max() <= tol {
                status = SolveStatus::Solved;
                break;
            }
            if iter == self.opt.max_iter {
                break;
            }
            if stalled >= 10 {
                // no progress on a violated constraint set: a stationary
                // point of the infeasibility measure
                status = SolveStatus::Infeasible;
                break;
            }
            if self.infeasible_stationary(&pt, &it) {
                stuck_infeasible += 1;
                if stuck_infeasible >= 5 {
                    status = SolveStatus::Infeasible;
                    break;
                }
            } else {
                stuck_infeasible = 0;
            }

            while mu > mu_min && self.barrier_error(&pt, &it, mu) <= KAPPA_EPS * mu {
                mu = mu_min.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
            }
            if tiny_steps >= 2 && mu > mu_min {
                mu = mu_min.max((KAPPA_MU * mu).min(mu.powf(THETA_MU)));
                tiny_steps = 0;
            }

            let sigma = self.sigma(&it);
            let mut rhs = vec![0.0; nn + mm];
            let jty = lay.jt_mul(&pt.jac, &it.y);
            let mut grad_phi = pt.grad.clone();
            for i in 0..nn {
                if lay.has_lo(i) {
                    grad_phi[i] -= mu / (it.x[i] - lay.lo[i]);
                }
                if lay.has_up(i) {
                    grad_phi[i] += mu / (lay.up[i] - it.x[i]);
                }
                rhs[i] = -(grad_phi[i] - jty[i]);
            }
            for r in 0..mm {
                rhs[nn + r] = -pt.v.c[r];
            }
            let theta = one_norm(&pt.v.c);
            let phi0 = self.barrier_value(&it.x, pt.v.f, mu);

            let mut dw_min = 0.0;
            let mut accepted = None;
            for attempt in 0..6 {
                let fk = match self.factor_kkt(
                    self.kkt_values(&hess, &pt.jac),
                    &sigma,
                    mu,
                    &mut dw_last,
                    dw_min,
                ) {
                    Ok(f) => f,
                    Err(msg) => {
                        status = SolveStatus::NumericalFailure(msg);
                        break 'outer;
                    }
                };
                let sol = self.kkt_solve(&fk, &rhs);
                if sol.iter().any(|v| !v.is_finite()) {
                    status = SolveStatus::NumericalFailure("non-finite newton step".into());
                    break 'outer;
                }
                let dx = sol[..nn].to_vec();
                let dy: Vec<f64> = sol[nn..].iter().map(|q| -q).collect();
                let (dzl, dzu) = self.bound_dual_step(&it, &dx, mu);
                let step = Step { dx, dy, dzl, dzu };

                let rel = (0..nn)
                    .map(|i| step.dx[i].abs() / (1.0 + it.x[i].abs()))
                    .fold(0.0, f64::max);
                if rel < 10.0 * f64::EPSILON && theta <= tol {
                    tiny_steps += 1;
                    accepted = Some((step, 1.0, None));
                    break;
                }

                // Penalty parameter and directional derivative.
                let dphi = dot(&grad_phi, &step.dx);
                let mut wd = sym_matvec(nn + mm, &lay.kkt, &fk.values, &fk.shift, &{
                    let mut v = step.dx.clone();
                    v.extend(std::iter::repeat_n(0.0, mm));
                    v
                });
                wd.truncate(nn);
                let curv = dot(&wd, &step.dx);
                // below roundoff the violation carries no information and
                // a penalty update would only amplify noise
                if theta > 0.1 * tol {
                    let need = (dphi + 0.5 * curv.max(0.0)) / ((1.0 - RHO_MERIT) * theta);
                    if nu < need {
                        nu = 1.5 * need + 1e-6;
                    }
                }
                let merit0 = phi0 + nu * theta;
                let dmerit = dphi - nu * theta;
                let slack = 10.0 * f64::EPSILON * merit0.abs().max(1.0);

                let tau = 0.995f64.max(1.0 - mu);
                let amax = self.max_primal_step(&it.x, &step.dx, tau);
                let mut alpha = amax;
                
                let mut result = None;
                for ls in 0..60 {
                    let xt: Vec<f64> = (0..nn).map(|i| it.x[i] + alpha * step.dx[i]).collect();
                    if let Ok(vt) = self.values(&xt) {
                        let mt = self.barrier_value(&xt, vt.f, mu) + nu * one_norm(&vt.c);
                        if mt.is_finite() && mt <= merit0 + ARMIJO * alpha * dmerit + slack {
                            result = Some((alpha, Some((xt, vt))));
                            break;
                        }
                        if ls == 0 && one_norm(&vt.c) >= theta && theta > 0.0 {
                            // Second-order correction.
                            let mut rs = rhs.clone();
                            for r in 0..mm {
                                rs[nn + r] = -(alpha * pt.v.c[r] + vt.c[r]);
                            }
                            let ds = self.kkt_solve(&fk, &rs);
                            let dxs = &ds[..nn];
                            let asoc = self.max_primal_step(&it.x, dxs, tau);
                            let xs: Vec<f64> = (0..nn).map(|i| it.x[i] + asoc * dxs[i]).collect();
                            if let Ok(vs) = self.values(&xs) {
                                let ms = self.barrier_value(&xs, vs.f, mu) + nu * one_norm(&vs.c);
                                if ms.is_finite() && ms <= merit0 + ARMIJO * alpha * dmerit + slack
                                {
                                    result = Some((alpha, Some((xs, vs))));
                                    break;
                                }
                            }
                        }
                    }
                    alpha *= 0.5;
                    if alpha < 1e-14 * amax.max(1e-300) || alpha < 1e-20 {
                        break;
                    }
                }
                match result {
                    Some((a, trial)) => {
                        accepted = Some((step, a, trial));
                        break;
                    }
                    None => {
                        if theta > tol {
                            let g = lay.jt_mul(&pt.jac, &pt.v.c);
                            let gx = inf_norm(&g[..n]);
                            if gx <= 1e-6 * inf_norm(&pt.v.c) && inf_norm(&g[n..]) <= 1e-6 * inf_norm(&pt.v.c).max(1.0) {
                                status = SolveStatus::Infeasible;
                                break 'outer;
                            }
                        }
                        debug!("line search failed (attempt {attempt}), raising regularization");
                        dw_min = (dw_last * 10.0f64).max(1e-4).max(dw_min * 100.0);
                    }
                }
            }
            let Some((step, alpha, trial)) = accepted else {
                if theta > tol {
                    let g = lay.jt_mul(&pt.jac, &pt.v.c);
                    if inf_norm(&g[..n]) <= 1e-4 * inf_norm(&pt.v.c) {
                        status = SolveStatus::Infeasible;
                        break;
                    }
                }
                status = SolveStatus::NumericalFailure("line search failed".into());
                break;
            };

            let tau = 0.995f64.max(1.0 - mu);
            let az = self.max_dual_step(&it, &step.dzl, &step.dzu, tau);
            let x_new: Vec<f64>;
            let v_new: Values;
            match trial {
                Some((xt, vt)) => {
                    x_new = xt;
                    v_new = vt;
                }
                None => {
                    x_new = (0..nn).map(|i| it.x[i] + alpha * step.dx[i]).collect();
                    v_new = match self.values(&x_new) {
                        Ok(v) => v,
                        Err(name) => {
                            status = SolveStatus::NumericalFailure(format!(
                                "non-finite value in {name}"
                            ));
                            break;
                        }
                    };
                }
            }
            let pt_new = match self.derivatives(&x_new, v_new) {
                Ok(p) => p,
                Err(name) => {
                    status = SolveStatus::NumericalFailure(format!("non-finite value in {name}"));
                    break;
                }
            };
            let y_new: Vec<f64> = (0..mm).map(|r| it.y[r] + alpha * step.dy[r]).collect();
            let mut zl = it.zl.clone();
            let mut zu = it.zu.clone();
            for i in 0..nn {
                if lay.has_lo(i) {
                    let d = x_new[i] - lay.lo[i];
                    let z = it.zl[i] + az * step.dzl[i];
                    zl[i] = z.clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
                }
                if lay.has_up(i) {
                    let d = lay.up[i] - x_new[i];
                    let z = it.zu[i] + az * step.dzu[i];
                    zu[i] = z.clamp(mu / (KAPPA_SIGMA * d), KAPPA_SIGMA * mu / d);
                }
            }
            if let Some(b) = &mut bfgs {
                let s: Vec<f64> = (0..n).map(|i| x_new[i] - it.x[i]).collect();
                let g_old = lay.jt_mul(&pt.jac, &y_new);
                let g_new = lay.jt_mul(&pt_new.jac, &y_new);
                let yv: Vec<f64> = (0..n)
                    .map(|i| (pt_new.grad[i] - g_new[i]) - (pt.grad[i] - g_old[i]))
                    .collect();
                b.update(&s, &yv);
            }
            step_len = alpha;
            if alpha < 1e-8 && theta > 100.0 * tol {
                stalled += 1;
            } else {
                stalled = 0;
            }
            it = Iterate {
                x: x_new,
                y: y_new,
                zl,
                zu,
            };
            pt = pt_new;
            if let Err(name) = eval_hess(self, &it, &mut hess, &bfgs) {
                status = SolveStatus::NumericalFailure(format!("non-finite value in {name}"));
                break;
            }
        }

        if let Some(w) = &mut self.trace {
            w.flush()?;
        }
        let (z_lower, z_upper) = self.original_bound_duals(&it);
        let x = it.x[..n].to_vec();
        let objective = self.p.objective(&x);
        if status.is_solved() && !(kkt.max() <= tol) {
            status = SolveStatus::MaxIter;
        }
        Ok(NlpSolution {
            objective,
            lambda_eq: it.y[..lay.me].to_vec(),
            mu_ineq: it.zl[n..].to_vec(),
            z_lower,
            z_upper,
            x,
            status,
            kkt,
            iters,
            wall_seconds: timer.elapsed().as_secs_f64(),
            barrier: mu,
        })
    }
}

/// Dense damped BFGS approximation of the Lagrangian Hessian.
struct DenseBfgs {
    n: usize,
    b: Vec<f64>,
}

impl DenseBfgs {
    fn new(n: usize) -> Self {
        let mut b = vec![0.0; n * n];
        for i in 0..n {
            b[i * n + i] = 1.0;
        }
        Self { n, b }
    }

    fn lower_values(&self, out: &mut [f64]) {
        let mut k = 0;
        for i in 0..self.n {
            for j in 0..=i {
                out[k] = self.b[i * self.n + j];
                k += 1;
            }
        }
    }

    fn update(&mut self, s: &[f64], y: &[f64]) {
        let n = self.n;
        if inf_norm(s) < 1e-14 {
            return;
        }
        let bs: Vec<f64> = (0..n).map(|i| dot(&self.b[i * n..(i + 1) * n], s)).collect();
        let sbs = dot(s, &bs);
        if sbs <= 0.0 {
            return;
        }
        let sy = dot(s, y);
        let theta = if sy >= 0.2 * sbs {
            1.0
        } else {
            0.8 * sbs / (sbs - sy)
        };
        let r: Vec<f64> = (0..n).map(|i| theta * y[i] + (1.0 - theta) * bs[i]).collect();
        let sr = dot(s, &r);
        if sr <= 0.0 {
            return;
        }
        for i in 0..n {
            for j in 0..n {
                self.b[i * n + j] += r[i] * r[j] / sr - bs[i] * bs[j] / sbs;
            }
        }
    }
}
