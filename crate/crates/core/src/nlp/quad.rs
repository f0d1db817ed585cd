//! Sparse quadratic polynomials and an [`NlpProblem`] assembled from them.
//!
//! Every function in the pricing models (power balance, stationarity,
//! complementarity penalties) is at most bilinear in the decision variables,
//! so a problem written as a list of [`QuadExpr`] rows gets exact first
//! derivatives and a constant Lagrangian Hessian for free.

use std::collections::BTreeMap;

use super::problem::NlpProblem;

/// Affine expression `constant + sum(coef * x[var])`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct LinExpr {
    pub constant: f64,
    pub terms: Vec<(usize, f64)>,
}

impl LinExpr {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .fold(self.constant, |acc, &(v, c)| acc + c * x[v])
    }
}

/// `constant + sum(coef * x[a]) + sum(coef * x[a] * x[b])`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct QuadExpr {
    pub constant: f64,
    pub linear: Vec<(usize, f64)>,
    /// Product terms, stored with `a <= b`.
    pub quadratic: Vec<(usize, usize, f64)>,
}

impl QuadExpr {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn constant(c: f64) -> Self {
        Self {
            constant: c,
            ..Self::default()
        }
    }

    pub fn var(v: usize) -> Self {
        Self {
            linear: vec![(v, 1.0)],
            ..Self::default()
        }
    }

    pub fn add_const(&mut self, c: f64) -> &mut Self {
        self.constant += c;
        self
    }

    pub fn add_lin(&mut self, v: usize, c: f64) -> &mut Self {
        if c != 0.0 {
            self.linear.push((v, c));
        }
        self
    }

    pub fn add_quad(&mut self, a: usize, b: usize, c: f64) -> &mut Self {
        if c != 0.0 {
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            self.quadratic.push((a, b, c));
        }
        self
    }

    pub fn add_expr(&mut self, other: &QuadExpr, scale: f64) -> &mut Self {
        self.constant += scale * other.constant;
        for &(v, c) in &other.linear {
            self.add_lin(v, scale * c);
        }
        for &(a, b, c) in &other.quadratic {
            self.add_quad(a, b, scale * c);
        }
        self
    }

    /// Adds `scale * lin * x[var]`.
    pub fn add_lin_times_var(&mut self, lin: &LinExpr, var: usize, scale: f64) -> &mut Self {
        self.add_lin(var, scale * lin.constant);
        for &(v, c) in &lin.terms {
            self.add_quad(v, var, scale * c);
        }
        self
    }

    pub fn scaled(mut self, s: f64) -> Self {
        self.constant *= s;
        self.linear.iter_mut().for_each(|t| t.1 *= s);
        self.quadratic.iter_mut().for_each(|t| t.2 *= s);
        self
    }

    /// Merges duplicate terms and drops exact zeros.
    pub fn compress(&mut self) {
        let mut lin: BTreeMap<usize, f64> = BTreeMap::new();
        for &(v, c) in &self.linear {
            *lin.entry(v).or_default() += c;
        }
        self.linear = lin.into_iter().filter(|t| t.1 != 0.0).collect();
        let mut quad: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for &(a, b, c) in &self.quadratic {
            *quad.entry((a, b)).or_default() += c;
        }
        self.quadratic = quad
            .into_iter()
            .filter(|t| t.1 != 0.0)
            .map(|((a, b), c)| (a, b, c))
            .collect();
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let lin = self
            .linear
            .iter()
            .fold(self.constant, |acc, &(v, c)| acc + c * x[v]);
        self.quadratic
            .iter()
            .fold(lin, |acc, &(a, b, c)| acc + c * x[a] * x[b])
    }

    /// Replaces fixed variables by their values and renumbers the rest;
    /// `index[v]` is the new index of a free variable.
    pub fn substitute(&self, fixed: &[Option<f64>], index: &[usize]) -> QuadExpr {
        let mut out = QuadExpr::constant(self.constant);
        for &(v, c) in &self.linear {
            match fixed[v] {
                Some(x) => out.constant += c * x,
                None => out.linear.push((index[v], c)),
            }
        }
        for &(a, b, c) in &self.quadratic {
            match (fixed[a], fixed[b]) {
                (Some(xa), Some(xb)) => out.constant += c * xa * xb,
                (Some(xa), None) => out.linear.push((index[b], c * xa)),
                (None, Some(xb)) => out.linear.push((index[a], c * xb)),
                (None, None) => out.quadratic.push((index[a], index[b], c)),
            }
        }
        out.compress();
        out
    }

    /// Variables appearing in the expression, sorted and unique.
    pub fn support(&self) -> Vec<usize> {
        let mut vars: Vec<usize> = self
            .linear
            .iter()
            .map(|t| t.0)
            .chain(self.quadratic.iter().flat_map(|t| [t.0, t.1]))
            .collect();
        vars.sort_unstable();
        vars.dedup();
        vars
    }

    /// Partial derivatives, one affine expression per variable in the support.
    pub fn partials(&self) -> BTreeMap<usize, LinExpr> {
        let mut out: BTreeMap<usize, LinExpr> = BTreeMap::new();
        for &(v, c) in &self.linear {
            out.entry(v).or_default().constant += c;
        }
        for &(a, b, c) in &self.quadratic {
            if a == b {
                out.entry(a).or_default().terms.push((a, 2.0 * c));
            } else {
                out.entry(a).or_default().terms.push((b, c));
                out.entry(b).or_default().terms.push((a, c));
            }
        }
        out
    }

    pub fn gradient_into(&self, x: &[f64], scale: f64, g: &mut [f64]) {
        for &(v, c) in &self.linear {
            g[v] += scale * c;
        }
        for &(a, b, c) in &self.quadratic {
            if a == b {
                g[a] += scale * 2.0 * c * x[a];
            } else {
                g[a] += scale * c * x[b];
                g[b] += scale * c * x[a];
            }
        }
    }
}

#[derive(Clone, Debug)]
enum JacTerm {
    Const { slot: usize, coef: f64 },
    Times { slot: usize, coef: f64, var: usize },
}

/// Compiled Jacobian of a block of rows: fixed sparsity, cheap evaluation.
#[derive(Clone, Debug, Default)]
struct CompiledJacobian {
    structure: Vec<(usize, usize)>,
    terms: Vec<JacTerm>,
}

impl CompiledJacobian {
    fn compile(rows: &[QuadExpr]) -> Self {
        let mut structure = Vec::new();
        let mut terms = Vec::new();
        for (r, row) in rows.iter().enumerate() {
            let support = row.support();
            let base = structure.len();
            structure.extend(support.iter().map(|&v| (r, v)));
            let slot = |v: usize| base + support.binary_search(&v).expect("support");
            for &(v, c) in &row.linear {
                terms.push(JacTerm::Const { slot: slot(v), coef: c });
            }
            for &(a, b, c) in &row.quadratic {
                if a == b {
                    terms.push(JacTerm::Times { slot: slot(a), coef: 2.0 * c, var: a });
                } else {
                    terms.push(JacTerm::Times { slot: slot(a), coef: c, var: b });
                    terms.push(JacTerm::Times { slot: slot(b), coef: c, var: a });
                }
            }
        }
        Self { structure, terms }
    }

    fn values(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for t in &self.terms {
            match *t {
                JacTerm::Const { slot, coef } => out[slot] += coef,
                JacTerm::Times { slot, coef, var } => out[slot] += coef * x[var],
            }
        }
    }
}

/// Source of a Hessian contribution.
#[derive(Clone, Copy, Debug)]
enum HessSource {
    Objective,
    Eq(usize),
    Ineq(usize),
}

/// A smooth program whose objective and constraints are all [`QuadExpr`]s.
///
/// Inequalities follow the `g(x) >= 0` convention.
#[derive(Clone, Debug)]
pub struct QuadNlp {
    pub objective: QuadExpr,
    pub eq: Vec<QuadExpr>,
    pub ineq: Vec<QuadExpr>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub var_names: Vec<String>,
    pub eq_names: Vec<String>,
    pub ineq_names: Vec<String>,
    eq_jac: CompiledJacobian,
    ineq_jac: CompiledJacobian,
    hess_structure: Vec<(usize, usize)>,
    hess_terms: Vec<(usize, HessSource, f64)>,
}

/// Incremental builder for [`QuadNlp`].
#[derive(Clone, Debug, Default)]
pub struct QuadNlpBuilder {
    lower: Vec<f64>,
    upper: Vec<f64>,
    var_names: Vec<String>,
    objective: QuadExpr,
    eq: Vec<QuadExpr>,
    eq_names: Vec<String>,
    ineq: Vec<QuadExpr>,
    ineq_names: Vec<String>,
}

impl QuadNlpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_var(&mut self, name: impl Into<String>, lower: f64, upper: f64) -> usize {
        self.lower.push(lower);
        self.upper.push(upper);
        self.var_names.push(name.into());
        self.lower.len() - 1
    }

    pub fn n_vars(&self) -> usize {
        self.lower.len()
    }

    pub fn var_name(&self, v: usize) -> &str {
        &self.var_names[v]
    }

    pub fn set_bounds(&mut self, v: usize, lower: f64, upper: f64) {
        self.lower[v] = lower;
        self.upper[v] = upper;
    }

    pub fn objective_mut(&mut self) -> &mut QuadExpr {
        &mut self.objective
    }

    pub fn add_eq(&mut self, name: impl Into<String>, expr: QuadExpr) -> usize {
        self.eq.push(expr);
        self.eq_names.push(name.into());
        self.eq.len() - 1
    }

    pub fn add_ineq(&mut self, name: impl Into<String>, expr: QuadExpr) -> usize {
        self.ineq.push(expr);
        self.ineq_names.push(name.into());
        self.ineq.len() - 1
    }

    pub fn build(self) -> QuadNlp {
        QuadNlp::new(
            self.objective,
            self.eq,
            self.ineq,
            self.lower,
            self.upper,
            self.var_names,
            self.eq_names,
            self.ineq_names,
        )
    }
}

impl QuadNlp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        mut objective: QuadExpr,
        mut eq: Vec<QuadExpr>,
        mut ineq: Vec<QuadExpr>,
        lower: Vec<f64>,
        upper: Vec<f64>,
        var_names: Vec<String>,
        eq_names: Vec<String>,
        ineq_names: Vec<String>,
    ) -> Self {
        assert_eq!(lower.len(), upper.len());
        assert_eq!(lower.len(), var_names.len());
        assert_eq!(eq.len(), eq_names.len());
        assert_eq!(ineq.len(), ineq_names.len());
        objective.compress();
        eq.iter_mut().for_each(QuadExpr::compress);
        ineq.iter_mut().for_each(QuadExpr::compress);
        let eq_jac = CompiledJacobian::compile(&eq);
        let ineq_jac = CompiledJacobian::compile(&ineq);

        let mut slots: BTreeMap<(usize, usize), usize> = BTreeMap::new();
        let mut raw: Vec<((usize, usize), HessSource, f64)> = Vec::new();
        let mut push = |src: HessSource, e: &QuadExpr| {
            for &(a, b, c) in &e.quadratic {
                // lower triangle (row >= col)
                let coef = if a == b { 2.0 * c } else { c };
                raw.push(((b, a), src, coef));
            }
        };
        push(HessSource::Objective, &objective);
        for (r, e) in eq.iter().enumerate() {
            push(HessSource::Eq(r), e);
        }
        for (r, e) in ineq.iter().enumerate() {
            push(HessSource::Ineq(r), e);
        }
        for (key, _, _) in &raw {
            let next = slots.len();
            slots.entry(*key).or_insert(next);
        }
        // Re-number in sorted order so the structure is deterministic.
        let hess_structure: Vec<(usize, usize)> = slots.keys().copied().collect();
        let index: BTreeMap<(usize, usize), usize> = hess_structure
            .iter()
            .enumerate()
            .map(|(i, k)| (*k, i))
            .collect();
        let hess_terms = raw
            .into_iter()
            .map(|(key, src, coef)| (index[&key], src, coef))
            .collect();

        Self {
            objective,
            eq,
            ineq,
            lower,
            upper,
            var_names,
            eq_names,
            ineq_names,
            eq_jac,
            ineq_jac,
            hess_structure,
            hess_terms,
        }
    }
}

/// A [`QuadNlp`] with some variables fixed and removed.
#[derive(Clone, Debug)]
pub struct Restricted {
    pub nlp: QuadNlp,
    /// Original index of each kept variable.
    pub kept: Vec<usize>,
    /// Original indices of dropped rows (no free variable left).
    pub dropped_eq: Vec<usize>,
    pub dropped_ineq: Vec<usize>,
}

impl Restricted {
    /// Full-space point from a reduced one.
    pub fn expand(&self, fixed: &[Option<f64>], y: &[f64]) -> Vec<f64> {
        let mut x: Vec<f64> = fixed.iter().map(|f| f.unwrap_or(0.0)).collect();
        for (k, &v) in self.kept.iter().enumerate() {
            x[v] = y[k];
        }
        x
    }
}

impl QuadNlp {
    /// Substitutes `fixed` values and drops those variables. Rows left
    /// without free variables are dropped and reported.
    pub fn restrict(&self, fixed: &[Option<f64>]) -> Restricted {
        assert_eq!(fixed.len(), self.lower.len());
        let mut index = vec![usize::MAX; fixed.len()];
        let mut kept = Vec::new();
        for (v, f) in fixed.iter().enumerate() {
            if f.is_none() {
                index[v] = kept.len();
                kept.push(v);
            }
        }
        let mut b = QuadNlpBuilder::new();
        for &v in &kept {
            b.add_var(self.var_names[v].clone(), self.lower[v], self.upper[v]);
        }
        *b.objective_mut() = self.objective.substitute(fixed, &index);
        let (mut dropped_eq, mut dropped_ineq) = (Vec::new(), Vec::new());
        for (r, e) in self.eq.iter().enumerate() {
            let e = e.substitute(fixed, &index);
            if e.linear.is_empty() && e.quadratic.is_empty() {
                dropped_eq.push(r);
            } else {
                b.add_eq(self.eq_names[r].clone(), e);
            }
        }
        for (r, e) in self.ineq.iter().enumerate() {
            let e = e.substitute(fixed, &index);
            if e.linear.is_empty() && e.quadratic.is_empty() {
                dropped_ineq.push(r);
            } else {
                b.add_ineq(self.ineq_names[r].clone(), e);
            }
        }
        Restricted {
            nlp: b.build(),
            kept,
            dropped_eq,
            dropped_ineq,
        }
    }
}

impl NlpProblem for QuadNlp {
    fn n(&self) -> usize {
        self.lower.len()
    }
    fn n_eq(&self) -> usize {
        self.eq.len()
    }
    fn n_ineq(&self) -> usize {
        self.ineq.len()
    }
    fn lower_bounds(&self) -> &[f64] {
        &self.lower
    }
    fn upper_bounds(&self) -> &[f64] {
        &self.upper
    }
    fn objective(&self, x: &[f64]) -> f64 {
        self.objective.eval(x)
    }
    fn gradient(&self, x: &[f64], g: &mut [f64]) {
        g.iter_mut().for_each(|v| *v = 0.0);
        self.objective.gradient_into(x, 1.0, g);
    }
    fn eq_values(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.eq) {
            *o = e.eval(x);
        }
    }
    fn ineq_values(&self, x: &[f64], out: &mut [f64]) {
        for (o, e) in out.iter_mut().zip(&self.ineq) {
            *o = e.eval(x);
        }
    }
    fn eq_jacobian_structure(&self) -> &[(usize, usize)] {
        &self.eq_jac.structure
    }
    fn eq_jacobian_values(&self, x: &[f64], out: &mut [f64]) {
        self.eq_jac.values(x, out)
    }
    fn ineq_jacobian_structure(&self) -> &[(usize, usize)] {
        &self.ineq_jac.structure
    }
    fn ineq_jacobian_values(&self, x: &[f64], out: &mut [f64]) {
        self.ineq_jac.values(x, out)
    }
    fn hessian_structure(&self) -> Option<&[(usize, usize)]> {
        Some(&self.hess_structure)
    }
    fn hessian_values(
        &self,
        _x: &[f64],
        obj_factor: f64,
        eq_weights: &[f64],
        ineq_weights: &[f64],
        out: &mut [f64],
    ) {
        out.iter_mut().for_each(|v| *v = 0.0);
        for &(slot, src, coef) in &self.hess_terms {
            let w = match src {
                HessSource::Objective => obj_factor,
                HessSource::Eq(r) => eq_weights[r],
                HessSource::Ineq(r) => ineq_weights[r],
            };
            out[slot] += w * coef;
        }
    }
    fn var_name(&self, i: usize) -> String {
        self.var_names[i].clone()
    }
    fn eq_name(&self, i: usize) -> String {
        self.eq_names[i].clone()
    }
    fn ineq_name(&self, i: usize) -> String {
        self.ineq_names[i].clone()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> QuadExpr {
        let mut e = QuadExpr::constant(1.5);
        e.add_lin(0, 2.0).add_lin(2, -1.0);
        e.add_quad(0, 1, 3.0).add_quad(2, 2, 0.5).add_quad(1, 0, -1.0);
        e
    }

    #[test]
    fn eval_and_gradient_match_finite_differences() {
        let e = sample();
        let x = [0.3, -1.2, 2.0];
        let mut g = vec![0.0; 3];
        e.gradient_into(&x, 1.0, &mut g);
        for v in 0..3 {
            let h = 1e-6;
            let mut xp = x;
            let mut xm = x;
            xp[v] += h;
            xm[v] -= h;
            let fd = (e.eval(&xp) - e.eval(&xm)) / (2.0 * h);
            assert!((fd - g[v]).abs() < 1e-8, "var {v}: {fd} vs {}", g[v]);
        }
    }

    #[test]
    fn partials_agree_with_gradient() {
        let e = sample();
        let x = [0.7, 0.1, -0.4];
        let mut g = vec![0.0; 3];
        e.gradient_into(&x, 1.0, &mut g);
        for (v, d) in e.partials() {
            assert!((d.eval(&x) - g[v]).abs() < 1e-14);
        }
    }

    #[test]
    fn compress_merges_symmetric_products() {
        let mut e = sample();
        e.compress();
        assert_eq!(e.quadratic, vec![(0, 1, 2.0), (2, 2, 0.5)]);
    }

    #[test]
    fn lin_times_var_builds_products() {
        let lin = LinExpr {
            constant: 2.0,
            terms: vec![(0, 3.0)],
        };
        let mut e = QuadExpr::new();
        e.add_lin_times_var(&lin, 1, -1.0);
        let x = [2.0, 5.0];
        assert_eq!(e.eval(&x), -(2.0 + 3.0 * 2.0) * 5.0);
    }

    #[test]
    fn hessian_is_lower_triangular_and_weighted() {
        let mut b = QuadNlpBuilder::new();
        let x = b.add_var("x", f64::NEG_INFINITY, f64::INFINITY);
        let y = b.add_var("y", f64::NEG_INFINITY, f64::INFINITY);
        b.objective_mut().add_quad(x, x, 1.0).add_quad(x, y, 2.0);
        let mut c = QuadExpr::new();
        c.add_quad(y, y, 3.0);
        b.add_eq("c", c);
        let p = b.build();
        let s = p.hessian_structure().unwrap().to_vec();
        assert!(s.iter().all(|&(r, c)| r >= c));
        let mut vals = vec![0.0; s.len()];
        p.hessian_values(&[0.0, 0.0], 2.0, &[0.5], &[], &mut vals);
        let get = |r, c| s.iter().position(|&k| k == (r, c)).map(|i| vals[i]);
        assert_eq!(get(0, 0), Some(4.0));
        assert_eq!(get(1, 0), Some(4.0));
        assert_eq!(get(1, 1), Some(3.0));
    }
}
