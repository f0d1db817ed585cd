//! Equilibrium contract prices.
//!
//! Each DG's pricing problem is an MPEC: maximize its margin subject to the
//! DisCo's KKT system (stationarity, balance, `h_in(w) - s = 0`,
//! `0 <= μ ⟂ s >= 0`). The EPEC stacks the strong-stationarity conditions of
//! every DG's MPEC around one shared follower block and minimizes the sum of
//! complementarity products `C_pen`; a point with `C_pen = 0` that satisfies
//! all rows is an equilibrium candidate.
//!
//! Money in the stacked program is in average €/h (period weights
//! `hours / total_hours`); reports convert back to €.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::disco::{
    self, add_linexpr, build_period_block, solve_disco, stationarity_rows, voltage_scale,
    AlphaTerm, ContractOffer, DiscoError, DiscoSolution, Dispatch, DualSet, LowerOptions,
    PeriodBlock,
};
use crate::exec::par_map;
use crate::model::{ModelError, Scenario};
use crate::nlp::{
    project_eq, solve_from, LinExpr, NlpError, NlpOptions, NlpProblem, QuadExpr, QuadNlp,
    QuadNlpBuilder, SolveStatus, StartPoint,
};
use crate::powerflow::VoltageProfile;

const INF: f64 = f64::INFINITY;

#[derive(Debug, Error)]
pub enum EpecError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Disco(#[from] DiscoError),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error("scenario has no DG units")]
    NoDg,
    #[error("invalid option: {0}")]
    Options(String),
}

#[derive(Clone, Debug)]
pub struct EpecOptions {
    pub nlp: NlpOptions,
    /// Number of starting points.
    pub multistart: usize,
    /// Acceptance threshold on `C_pen`.
    pub epsilon_comp: f64,
    /// Upper bound on every α (€/MWh); `None` means 10 × the highest
    /// market price.
    pub alpha_cap: Option<f64>,
    pub lower: LowerOptions,
}

impl Default for EpecOptions {
    fn default() -> Self {
        Self {
            nlp: NlpOptions {
                max_iter: 300,
                ..NlpOptions::default()
            },
            multistart: 8,
            epsilon_comp: 1e-6,
            alpha_cap: None,
            lower: LowerOptions::default(),
        }
    }
}

impl EpecOptions {
    pub fn validate(&self) -> Result<(), EpecError> {
        self.nlp.validate()?;
        if self.multistart == 0 {
            return Err(EpecError::Options("multistart must be at least 1".into()));
        }
        if !(self.epsilon_comp > 0.0) {
            return Err(EpecError::Options("epsilon_comp must be positive".into()));
        }
        if let Some(c) = self.alpha_cap {
            if !(c > 0.0 && c.is_finite()) {
                return Err(EpecError::Options("alpha_cap must be positive".into()));
            }
        }
        Ok(())
    }

    pub fn cap(&self, s: &Scenario) -> f64 {
        self.alpha_cap.unwrap_or_else(|| {
            10.0 * s
                .periods
                .iter()
                .map(|p| p.market_price)
                .fold(0.0, f64::max)
        })
    }
}

/// Variable indices of the follower block.
#[derive(Clone, Debug)]
pub struct LowerLayout {
    /// Price variable per DG, `None` when the price is fixed.
    pub alpha: Vec<Option<usize>>,
    pub blocks: Vec<PeriodBlock>,
    /// Equality duals (balance then pinned voltage) per period.
    pub lambda: Vec<Vec<usize>>,
    /// Inequality duals per period, in block row order.
    pub mu: Vec<Vec<usize>>,
    /// Slacks per period, paired with `mu`.
    pub s: Vec<Vec<usize>>,
}

impl LowerLayout {
    /// `y1 = (w, λ)` over all periods.
    pub fn y1(&self) -> Vec<usize> {
        let mut v = Vec::new();
        for (t, b) in self.blocks.iter().enumerate() {
            v.extend(b.w());
            v.extend(&self.lambda[t]);
        }
        v
    }

    pub fn mu_all(&self) -> Vec<usize> {
        self.mu.iter().flatten().copied().collect()
    }

    pub fn s_all(&self) -> Vec<usize> {
        self.s.iter().flatten().copied().collect()
    }
}

/// Slack values `s_j(t) = h_in_j(w(t))`, one per lower-level inequality.
#[derive(Clone, Debug, PartialEq)]
pub struct SlackVector {
    pub s: Vec<Vec<f64>>,
}

/// Follower primal-dual point.
#[derive(Clone, Debug, PartialEq)]
pub struct PrimalDualPoint {
    /// `(w, λ)` values in [`LowerLayout::y1`] order.
    pub y1: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub s: SlackVector,
}

/// One DG's (or one owner's) MPEC with the follower KKT system embedded.
#[derive(Clone, Debug)]
pub struct MpecSystem {
    /// Units whose prices are decision variables.
    pub dgs: Vec<usize>,
    /// Variables and bounds; no rows.
    pub vars: QuadNlpBuilder,
    pub layout: LowerLayout,
    /// Margin `Σ_t ω_t (α_i - c_i) P_dg_i(t)` summed over `dgs` (€/h),
    /// to be maximized.
    pub objective: QuadExpr,
    /// Follower stationarity (V rows divided by the voltage scale) and
    /// equality rows.
    pub h_e: Vec<QuadExpr>,
    pub h_e_names: Vec<String>,
    /// Follower inequality rows; `h_in - s = 0` is imposed.
    pub h_in: Vec<QuadExpr>,
    pub h_in_names: Vec<String>,
    /// `(s_j, μ_j)` variable pairs, aligned with `h_in`.
    pub comp_pairs: Vec<(usize, usize)>,
}

/// Builds the follower KKT block over all periods into `b`.
fn build_lower(
    s: &Scenario,
    alpha: &[Option<usize>],
    fixed: &[f64],
    opts: LowerOptions,
    b: &mut QuadNlpBuilder,
) -> (LowerLayout, Vec<QuadExpr>, Vec<String>, Vec<QuadExpr>, Vec<String>) {
    let kv = voltage_scale(s);
    let terms: Vec<AlphaTerm> = alpha
        .iter()
        .zip(fixed)
        .map(|(a, &f)| match a {
            Some(v) => AlphaTerm::Var(*v),
            None => AlphaTerm::Fixed(f),
        })
        .collect();
    let mut layout = LowerLayout {
        alpha: alpha.to_vec(),
        blocks: Vec::new(),
        lambda: Vec::new(),
        mu: Vec::new(),
        s: Vec::new(),
    };
    let (mut h_e, mut h_e_names, mut h_in, mut h_in_names) =
        (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    for t in 0..s.periods.len() {
        let block = build_period_block(s, t, &terms, opts, b);
        let lambda: Vec<usize> = block
            .eq_names
            .iter()
            .map(|n| b.add_var(format!("lambda:{n}"), -INF, INF))
            .collect();
        let mu: Vec<usize> = block
            .ineq_names
            .iter()
            .map(|n| b.add_var(format!("mu:{n}"), 0.0, INF))
            .collect();
        let sl: Vec<usize> = block
            .ineq_names
            .iter()
            .map(|n| b.add_var(format!("s:{n}"), 0.0, INF))
            .collect();
        let rows = stationarity_rows(&block, &lambda, &mu);
        let w = block.w();
        for (k, (mut row, var)) in rows.into_iter().zip(&w).enumerate() {
            if k < block.v.len() {
                row = row.scaled(1.0 / kv);
            }
            h_e.push(row);
            h_e_names.push(format!("stat:{}", b_name(b, *var)));
        }
        for (e, n) in block.eq.iter().zip(&block.eq_names) {
            h_e.push(e.clone());
            h_e_names.push(n.clone());
        }
        for (e, n) in block.ineq.iter().zip(&block.ineq_names) {
            h_in.push(e.clone());
            h_in_names.push(n.clone());
        }
        layout.blocks.push(block);
        layout.lambda.push(lambda);
        layout.mu.push(mu);
        layout.s.push(sl);
    }
    (layout, h_e, h_e_names, h_in, h_in_names)
}

fn b_name(b: &QuadNlpBuilder, v: usize) -> String {
    b.var_name(v).to_string()
}

/// MPEC for the units in `dgs`; prices of the other units are fixed at the
/// corresponding entries of `fixed`.
pub fn build_player_mpec(
    s: &Scenario,
    dgs: &[usize],
    fixed: &ContractOffer,
    cap: f64,
    opts: LowerOptions,
) -> Result<MpecSystem, EpecError> {
    s.validate()?;
    fixed.validate(s)?;
    if s.dgs.is_empty() {
        return Err(EpecError::NoDg);
    }
    let mut b = QuadNlpBuilder::new();
    let alpha: Vec<Option<usize>> = (0..s.dgs.len())
        .map(|i| {
            dgs.contains(&i)
                .then(|| b.add_var(format!("alpha[{}]", s.dgs[i].id), 0.0, cap))
        })
        .collect();
    let (layout, h_e, h_e_names, h_in, h_in_names) =
        build_lower(s, &alpha, &fixed.alpha, opts, &mut b);
    let total = s.total_hours();
    let mut objective = QuadExpr::new();
    for &i in dgs {
        let a = alpha[i].expect("controlled unit has a price variable");
        for (t, per) in s.periods.iter().enumerate() {
            let w = per.hours / total;
            let p = layout.blocks[t].p_dg[i];
            objective.add_quad(a, p, w);
            objective.add_lin(p, -w * s.dgs[i].cost);
        }
    }
    objective.compress();
    let comp_pairs = layout.s_all().into_iter().zip(layout.mu_all()).collect();
    Ok(MpecSystem {
        dgs: dgs.to_vec(),
        vars: b,
        layout,
        objective,
        h_e,
        h_e_names,
        h_in,
        h_in_names,
        comp_pairs,
    })
}

/// MPEC of unit `i` with rival prices taken from `rivals` (entry `i` is
/// ignored).
pub fn build_mpec(
    s: &Scenario,
    i: usize,
    rivals: &ContractOffer,
    opts: &EpecOptions,
) -> Result<MpecSystem, EpecError> {
    build_player_mpec(s, &[i], rivals, opts.cap(s), opts.lower)
}

/// One owner pricing every unit to maximize the summed margin.
pub fn build_single_owner_mpec(s: &Scenario, opts: &EpecOptions) -> Result<MpecSystem, EpecError> {
    let all: Vec<usize> = (0..s.dgs.len()).collect();
    let dummy = ContractOffer::new(s.dgs.iter().map(|d| d.cost).collect());
    build_player_mpec(s, &all, &dummy, opts.cap(s), opts.lower)
}

impl MpecSystem {
    /// Relaxed MPEC as a plain NLP: `min -f` subject to the follower rows
    /// and `μ_j s_j <= eps`.
    pub fn relaxed_nlp(&self, eps: f64) -> QuadNlp {
        let mut b = self.vars.clone();
        *b.objective_mut() = self.objective.clone().scaled(-1.0);
        self.push_follower_rows(&mut b);
        for (j, &(sv, mv)) in self.comp_pairs.iter().enumerate() {
            let mut e = QuadExpr::constant(eps);
            e.add_quad(sv, mv, -1.0);
            b.add_ineq(format!("comp:{}", self.h_in_names[j]), e);
        }
        b.build()
    }

    fn push_follower_rows(&self, b: &mut QuadNlpBuilder) {
        for (e, n) in self.h_e.iter().zip(&self.h_e_names) {
            b.add_eq(n.clone(), e.clone());
        }
        for (j, (e, n)) in self.h_in.iter().zip(&self.h_in_names).enumerate() {
            let mut r = e.clone();
            r.add_lin(self.comp_pairs[j].0, -1.0);
            b.add_eq(format!("slack:{n}"), r);
        }
    }

    /// Primal start in this system's variable order built from a dispatch
    /// solution.
    pub fn start_from_disco(&self, s: &Scenario, sol: &DiscoSolution) -> Vec<f64> {
        let mut x = vec![0.0; self.vars.n_vars()];
        fill_lower(&self.layout, s, sol, &mut x);
        x
    }

    /// Follower KKT residual (inf-norm of `h_e`, `h_in - s`, and
    /// `min(s, μ)`) at `x`.
    pub fn follower_residual(&self, x: &[f64]) -> f64 {
        let mut r: f64 = 0.0;
        for e in &self.h_e {
            r = r.max(e.eval(x).abs());
        }
        for (j, e) in self.h_in.iter().enumerate() {
            let (sv, mv) = self.comp_pairs[j];
            r = r.max((e.eval(x) - x[sv]).abs());
            r = r.max(x[sv].min(x[mv]).abs());
        }
        r
    }
}

/// Writes α, w, λ, μ and s from a dispatch solution into `x`.
fn fill_lower(layout: &LowerLayout, s: &Scenario, sol: &DiscoSolution, x: &mut [f64]) {
    for (i, a) in layout.alpha.iter().enumerate() {
        if let Some(v) = a {
            x[*v] = sol.offer.alpha[i];
        }
    }
    for (t, block) in layout.blocks.iter().enumerate() {
        for (k, &v) in block.v.iter().enumerate() {
            x[v] = sol.dispatch.v.v[t][k];
        }
        for (i, &v) in block.p_dg.iter().enumerate() {
            x[v] = sol.dispatch.p_dg[t][i];
        }
        x[block.p_sb] = sol.dispatch.p_sb[t];
        let nb = s.network.n_buses();
        for (r, &v) in layout.lambda[t].iter().enumerate() {
            x[v] = if r < nb {
                sol.duals.lambda[t][r]
            } else {
                sol.duals.lambda_pin[t][r - nb]
            };
        }
        for (r, &kind) in block.kinds.iter().enumerate() {
            x[layout.mu[t][r]] = sol.duals.get(t, kind).max(0.0);
        }
        for (r, e) in block.ineq.iter().enumerate() {
            x[layout.s[t][r]] = e.eval(x).max(0.0);
        }
    }
}

/// Multiplier variable indices of one player's stationarity block.
#[derive(Clone, Debug)]
pub struct PlayerBlock {
    pub dgs: Vec<usize>,
    /// Duals of `h_e` (free).
    pub mu_bar: Vec<usize>,
    /// Duals of `h_in - s` (free).
    pub mu_under: Vec<usize>,
    /// Duals of `-μ_j s_j >= 0`.
    pub phi: Vec<usize>,
    /// Duals of `s >= 0`.
    pub sigma: Vec<usize>,
    /// Duals of `μ >= 0`.
    pub psi: Vec<usize>,
}

/// Multiplier values of one player.
#[derive(Clone, Debug, PartialEq)]
pub struct StationarityMultipliers {
    pub dgs: Vec<usize>,
    pub mu_bar: Vec<f64>,
    pub mu_under: Vec<f64>,
    pub phi: Vec<f64>,
    pub sigma: Vec<f64>,
    pub psi: Vec<f64>,
}

/// The stacked penalty program.
#[derive(Clone, Debug)]
pub struct EpecNlp {
    pub nlp: QuadNlp,
    pub layout: LowerLayout,
    pub players: Vec<PlayerBlock>,
    /// Number of shared variables (α and the follower block).
    pub n_shared: usize,
}

/// Stacks strong-stationarity blocks for the given players (each a set of
/// units pricing jointly) around one follower block.
pub fn build_game_nlp(
    s: &Scenario,
    players: &[Vec<usize>],
    opts: &EpecOptions,
) -> Result<EpecNlp, EpecError> {
    if s.dgs.is_empty() {
        return Err(EpecError::NoDg);
    }
    let controlled: Vec<usize> = players.iter().flatten().copied().collect();
    let fixed = ContractOffer::new(s.dgs.iter().map(|d| d.cost).collect());
    let base = build_player_mpec(s, &controlled, &fixed, opts.cap(s), opts.lower)?;
    let mut b = base.vars.clone();
    let n_shared = b.n_vars();
    base.push_follower_rows(&mut b);

    let he_parts: Vec<BTreeMap<usize, LinExpr>> = base.h_e.iter().map(|e| e.partials()).collect();
    let hin_parts: Vec<BTreeMap<usize, LinExpr>> =
        base.h_in.iter().map(|e| e.partials()).collect();
    let mut he_by_var: BTreeMap<usize, Vec<(usize, &LinExpr)>> = BTreeMap::new();
    for (r, parts) in he_parts.iter().enumerate() {
        for (v, l) in parts {
            he_by_var.entry(*v).or_default().push((r, l));
        }
    }
    let mut hin_by_var: BTreeMap<usize, Vec<(usize, &LinExpr)>> = BTreeMap::new();
    for (r, parts) in hin_parts.iter().enumerate() {
        for (v, l) in parts {
            hin_by_var.entry(*v).or_default().push((r, l));
        }
    }

    let layout = base.layout.clone();
    let y1 = layout.y1();
    let nj = base.comp_pairs.len();
    let mut blocks = Vec::new();
    let mut c_pen = QuadExpr::new();
    for &(sv, mv) in &base.comp_pairs {
        c_pen.add_quad(sv, mv, 1.0);
    }
    for dgs in players {
        let tag = player_tag(s, dgs);
        let mu_bar: Vec<usize> = base
            .h_e_names
            .iter()
            .map(|n| b.add_var(format!("mubar[{tag}]:{n}"), -INF, INF))
            .collect();
        let mu_under: Vec<usize> = base
            .h_in_names
            .iter()
            .map(|n| b.add_var(format!("muunder[{tag}]:{n}"), -INF, INF))
            .collect();
        let pos = |prefix: &str, b: &mut QuadNlpBuilder| -> Vec<usize> {
            base.h_in_names
                .iter()
                .map(|n| b.add_var(format!("{prefix}[{tag}]:{n}"), 0.0, INF))
                .collect()
        };
        let phi = pos("phi", &mut b);
        let sigma = pos("sigma", &mut b);
        let psi = pos("psi", &mut b);

        let mut f = QuadExpr::new();
        for &i in dgs {
            let a = layout.alpha[i].expect("player unit has a price variable");
            for (t, per) in s.periods.iter().enumerate() {
                let w = per.hours / s.total_hours();
                let pv = layout.blocks[t].p_dg[i];
                f.add_quad(a, pv, w);
                f.add_lin(pv, -w * s.dgs[i].cost);
            }
        }
        let f_parts = f.partials();

        let grad_row = |v: usize, with_hin: bool| -> QuadExpr {
            let mut row = QuadExpr::new();
            if let Some(l) = f_parts.get(&v) {
                add_linexpr(&mut row, l, -1.0);
            }
            if let Some(list) = he_by_var.get(&v) {
                for &(r, l) in list {
                    row.add_lin_times_var(l, mu_bar[r], -1.0);
                }
            }
            if with_hin {
                if let Some(list) = hin_by_var.get(&v) {
                    for &(r, l) in list {
                        row.add_lin_times_var(l, mu_under[r], -1.0);
                    }
                }
            }
            row
        };

        for &i in dgs {
            let a = layout.alpha[i].unwrap();
            b.add_eq(format!("stat[{tag}]:alpha[{}]", s.dgs[i].id), grad_row(a, false));
        }
        for &v in &y1 {
            let name = format!("stat[{tag}]:{}", b.var_name(v));
            b.add_eq(name, grad_row(v, true));
        }
        for j in 0..nj {
            let (sv, mv) = base.comp_pairs[j];
            let mut row = grad_row(mv, false);
            row.add_quad(phi[j], sv, 1.0);
            row.add_lin(psi[j], -1.0);
            b.add_eq(format!("stat[{tag}]:{}", b.var_name(mv)), row);
            let mut row = QuadExpr::new();
            row.add_lin(mu_under[j], 1.0);
            row.add_quad(phi[j], mv, 1.0);
            row.add_lin(sigma[j], -1.0);
            b.add_eq(format!("stat[{tag}]:{}", b.var_name(sv)), row);
            c_pen.add_quad(sigma[j], sv, 1.0);
            c_pen.add_quad(psi[j], mv, 1.0);
        }
        blocks.push(PlayerBlock {
            dgs: dgs.clone(),
            mu_bar,
            mu_under,
            phi,
            sigma,
            psi,
        });
    }
    c_pen.compress();
    *b.objective_mut() = c_pen;
    Ok(EpecNlp {
        nlp: b.build(),
        layout,
        players: blocks,
        n_shared,
    })
}

fn player_tag(s: &Scenario, dgs: &[usize]) -> String {
    dgs.iter()
        .map(|&i| s.dgs[i].id.as_str())
        .collect::<Vec<_>>()
        .join("+")
}

/// EPEC with one player per unit.
pub fn build_epec_nlp(s: &Scenario, opts: &EpecOptions) -> Result<EpecNlp, EpecError> {
    let players: Vec<Vec<usize>> = (0..s.dgs.len()).map(|i| vec![i]).collect();
    build_game_nlp(s, &players, opts)
}

/// Single-owner program (one player holding every unit).
pub fn build_single_owner_nlp(s: &Scenario, opts: &EpecOptions) -> Result<EpecNlp, EpecError> {
    build_game_nlp(s, &[(0..s.dgs.len()).collect()], opts)
}

impl EpecNlp {
    /// `C_pen` at `x`.
    pub fn c_pen(&self, x: &[f64]) -> f64 {
        self.nlp.objective(x)
    }

    /// Largest single complementarity product at `x`.
    pub fn max_product(&self, x: &[f64]) -> f64 {
        let (sv, mv) = (self.layout.s_all(), self.layout.mu_all());
        let mut m: f64 = 0.0;
        for j in 0..sv.len() {
            m = m.max(x[sv[j]] * x[mv[j]]);
            for p in &self.players {
                m = m.max(x[p.sigma[j]] * x[sv[j]]).max(x[p.psi[j]] * x[mv[j]]);
            }
        }
        m
    }

    /// Infinity norm of the constraint residual at `x`.
    pub fn feasibility(&self, x: &[f64]) -> f64 {
        let mut c = vec![0.0; self.nlp.n_eq()];
        self.nlp.eq_values(x, &mut c);
        let mut r = c.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let waived = self.waived(x);
        for (i, &xi) in x.iter().enumerate() {
            if !waived[i] {
                r = r.max(self.nlp.lower[i] - xi).max(xi - self.nlp.upper[i]);
            }
        }
        r
    }

    /// Sign bounds of σ and ψ on biactive pairs (`s_j = μ_j = 0` exactly)
    /// are not enforced: at a price kink the rival's multipliers there may
    /// have either sign.
    fn waived(&self, x: &[f64]) -> Vec<bool> {
        let mut w = vec![false; x.len()];
        let (sv, mv) = (self.layout.s_all(), self.layout.mu_all());
        for j in 0..sv.len() {
            if x[sv[j]] == 0.0 && x[mv[j]] == 0.0 {
                for p in &self.players {
                    w[p.sigma[j]] = true;
                    w[p.psi[j]] = true;
                }
            }
        }
        w
    }

    /// Largest negative σ or ψ on a biactive pair (0 when strongly
    /// stationary).
    pub fn biactive_sign_violation(&self, x: &[f64]) -> f64 {
        let waived = self.waived(x);
        waived
            .iter()
            .enumerate()
            .filter(|(_, w)| **w)
            .fold(0.0f64, |m, (i, _)| m.max(-x[i]))
    }

    /// Start point from a dispatch solution: follower block copied,
    /// stationarity multipliers zero.
    pub fn start_from_disco(&self, s: &Scenario, sol: &DiscoSolution) -> Vec<f64> {
        let mut x = vec![0.0; self.nlp.n()];
        fill_lower(&self.layout, s, sol, &mut x);
        x
    }
}

/// Fixes each complementarity pair on the side the point suggests and
/// re-solves the remaining smooth system near `x`. A pair counts as zero
/// on a side when that side is the smaller one, is below the largest
/// player multiplier paired with it, or is below `delta`.
pub fn polish(game: &EpecNlp, x: &[f64], delta: f64, nlp: &NlpOptions) -> Option<Vec<f64>> {
    let sv = game.layout.s_all();
    let mv = game.layout.mu_all();
    let mut fixed: Vec<Option<f64>> = vec![None; x.len()];
    let mut free = Vec::new();
    for j in 0..sv.len() {
        let (sj, mj) = (x[sv[j]].max(0.0), x[mv[j]].max(0.0));
        let sig = game.players.iter().map(|p| x[p.sigma[j]]).fold(0.0, f64::max);
        let psi = game.players.iter().map(|p| x[p.psi[j]]).fold(0.0, f64::max);
        let zs = sj <= mj || sj <= sig || sj <= delta;
        let zm = mj < sj || mj <= psi || mj <= delta;
        if zs {
            fixed[sv[j]] = Some(0.0);
        }
        if zm {
            fixed[mv[j]] = Some(0.0);
        }
        for p in &game.players {
            if zs && !zm {
                fixed[p.psi[j]] = Some(0.0);
            }
            if zm && !zs {
                fixed[p.sigma[j]] = Some(0.0);
            }
            if zs && zm {
                free.push(p.sigma[j]);
                free.push(p.psi[j]);
            }
        }
    }
    let mut base = game.nlp.clone();
    for v in free {
        base.lower[v] = -INF;
    }
    let mut cur = x.to_vec();
    for _ in 0..20 {
        let red = base.restrict(&fixed);
        let y0: Vec<f64> = red
            .kept
            .iter()
            .enumerate()
            .map(|(k, &v)| cur[v].max(red.nlp.lower[k]).min(red.nlp.upper[k]))
            .collect();
        let pr = project_eq(&red.nlp, &y0, 1e-11, 60);
        if pr.residual > 1e-9 {
            return None;
        }
        // variables that left their box are pinned to the bound
        let mut clean = true;
        for (k, &v) in red.kept.iter().enumerate() {
            let (l, u) = (red.nlp.lower[k], red.nlp.upper[k]);
            let y = pr.x[k];
            if y < l - 1e-12 {
                fixed[v] = Some(l);
                clean = false;
            } else if y > u + 1e-12 {
                fixed[v] = Some(u);
                clean = false;
            }
        }
        cur = red.expand(&fixed, &pr.x);
        if clean {
            for (v, c) in cur.iter_mut().enumerate() {
                *c = c.clamp(base.lower[v], base.upper[v]);
            }
            return (game.feasibility(&cur) <= nlp.tol.max(1e-9)).then_some(cur);
        }
    }
    None
}

/// Per-unit margin `Σ_t hours_t (α_i - c_i) P_dg_i(t)` (€).
pub fn profit(s: &Scenario, alpha: &[f64], dispatch: &Dispatch) -> Vec<f64> {
    s.dgs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            s.periods
                .iter()
                .enumerate()
                .map(|(t, p)| p.hours * (alpha[i] - d.cost) * dispatch.p_dg[t][i])
                .sum()
        })
        .collect()
}

/// Rebuilds a `DiscoSolution` from the follower block of `x`.
pub fn disco_from_point(s: &Scenario, layout: &LowerLayout, offer: &ContractOffer, x: &[f64]) -> DiscoSolution {
    let nt = s.periods.len();
    let mut duals = DualSet::zeros(s);
    let mut p_dg = Vec::with_capacity(nt);
    let mut p_sb = Vec::with_capacity(nt);
    let mut v = Vec::with_capacity(nt);
    let nb = s.network.n_buses();
    for (t, block) in layout.blocks.iter().enumerate() {
        v.push(block.v.iter().map(|&i| x[i]).collect::<Vec<_>>());
        p_dg.push(block.p_dg.iter().map(|&i| x[i]).collect::<Vec<_>>());
        p_sb.push(x[block.p_sb]);
        let lam: Vec<f64> = layout.lambda[t].iter().map(|&i| x[i]).collect();
        duals.lambda[t] = lam[..nb].to_vec();
        duals.lambda_pin[t] = lam[nb..].to_vec();
        for (r, &kind) in block.kinds.iter().enumerate() {
            duals.set(t, kind, x[layout.mu[t][r]]);
        }
    }
    let dispatch = Dispatch {
        p_dg,
        p_sb,
        v: VoltageProfile { v },
    };
    disco::finish(s, offer, dispatch, duals, 0.0, 0, 0.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EquilibriumStatus {
    Accepted,
    NotFound,
}

/// Outcome of one start.
#[derive(Clone, Debug)]
pub struct Attempt {
    pub start_id: usize,
    pub alpha0: Vec<f64>,
    pub alpha: Vec<f64>,
    pub c_pen: f64,
    pub feasibility: f64,
    pub nlp_status: SolveStatus,
    pub iters: usize,
    pub accepted: bool,
    /// Whether the point came from the active-set polish.
    pub polished: bool,
    pub reason: String,
    /// Relative gain of the best screened unilateral deviation, when
    /// screened.
    pub deviation_gain: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct Diagnostics {
    pub n_vars: usize,
    pub n_cons: usize,
    pub iters: usize,
    pub wall_seconds: f64,
    pub start_id: usize,
    pub attempts: Vec<Attempt>,
}

#[derive(Clone, Debug)]
pub struct EpecSolution {
    pub alpha: ContractOffer,
    pub point: PrimalDualPoint,
    pub multipliers: Vec<StationarityMultipliers>,
    pub c_pen: f64,
    /// Largest single complementarity product.
    pub max_product: f64,
    pub feasibility: f64,
    pub status: EquilibriumStatus,
    pub diagnostics: Diagnostics,
    /// Dispatch, duals and payments embedded in the solution.
    pub disco: DiscoSolution,
    pub profits: Vec<f64>,
    /// Distinct accepted price vectors (the chosen one included).
    pub distinct: Vec<Vec<f64>>,
    /// Whether any price sits at the cap.
    pub cap_active: bool,
    /// Relative gain of the best screened unilateral deviation from the
    /// chosen point; `None` when it was not screened (not accepted).
    pub deviation_gain: Option<f64>,
    /// Largest negative rival multiplier on a biactive pair.
    pub biactive_sign_violation: f64,
}

impl EpecSolution {
    pub fn accepted(&self) -> bool {
        self.status == EquilibriumStatus::Accepted
    }
}

/// Starting prices. Unit `i` draws from `[c_i, c_i + span_i]` with
/// `span_i = max(β_max - c_i, 0) + 2`; start 0 takes the quarter point of
/// every range, further starts are seeded uniform draws. The default
/// starts refine start 0 with [`seed_prices`], or every start when one
/// owner holds several units.
pub fn start_prices(s: &Scenario, k: usize, seed: u64) -> Vec<f64> {
    let beta = s
        .periods
        .iter()
        .map(|p| p.market_price)
        .fold(f64::NEG_INFINITY, f64::max);
    let span = |c: f64| (beta - c).max(0.0) + 2.0;
    if k == 0 {
        return s.dgs.iter().map(|d| d.cost + 0.25 * span(d.cost)).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9e37_79b9_7f4a_7c15).wrapping_add(k as u64));
    s.dgs
        .iter()
        .map(|d| d.cost + rng.gen::<f64>() * span(d.cost))
        .collect()
}

/// Relative profit gain above which a candidate fails the deviation screen.
pub const NASH_SCREEN_TOL: f64 = 1e-3;

/// Price offsets tried by [`deviation_gain`].
const SCREEN_OFFSETS: [f64; 13] = [
    0.05, 0.1, 0.2, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0, 3.5, 4.0, 4.5, 5.0,
];

/// Largest relative gain any player gets by moving one of its prices by
/// up to ±5 €/MWh, rivals fixed. Player profit at the candidate is taken
/// from `dispatch`; deviations are re-solved with the DisCo. Deviations
/// that make the DisCo infeasible are skipped.
pub fn deviation_gain(
    s: &Scenario,
    players: &[Vec<usize>],
    alpha: &[f64],
    dispatch: &Dispatch,
    cap: f64,
    nlp: &NlpOptions,
) -> Result<f64, EpecError> {
    let base = profit(s, alpha, dispatch);
    let mut jobs = Vec::new();
    for (p, units) in players.iter().enumerate() {
        for &i in units {
            for d in SCREEN_OFFSETS {
                for sign in [-1.0, 1.0] {
                    let a = alpha[i] + sign * d;
                    if (0.0..=cap).contains(&a) {
                        jobs.push((p, i, a));
                    }
                }
            }
        }
    }
    let gains = par_map(&jobs, |_, &(p, i, a)| -> Result<f64, EpecError> {
        let mut dev = alpha.to_vec();
        dev[i] = a;
        let sol = match solve_disco(s, &ContractOffer::new(dev.clone()), nlp) {
            Ok(sol) => sol,
            Err(DiscoError::Infeasible { .. }) | Err(DiscoError::NotSolved { .. }) => {
                return Ok(f64::NEG_INFINITY)
            }
            Err(e) => return Err(e.into()),
        };
        let pr = profit(s, &dev, &sol.dispatch);
        let units = &players[p];
        let now: f64 = units.iter().map(|&k| base[k]).sum();
        let then: f64 = units.iter().map(|&k| pr[k]).sum();
        Ok((then - now) / now.abs().max(1.0))
    });
    let mut best = f64::NEG_INFINITY;
    for g in gains {
        best = best.max(g?);
    }
    Ok(best.max(0.0))
}

/// Summed margin of `units` (€) at prices `alpha`, or `None` when the
/// DisCo cannot be solved there.
pub fn player_profit(
    s: &Scenario,
    units: &[usize],
    alpha: &[f64],
    nlp: &NlpOptions,
) -> Result<Option<f64>, EpecError> {
    match solve_disco(s, &ContractOffer::new(alpha.to_vec()), nlp) {
        Ok(sol) => {
            let pr = profit(s, alpha, &sol.dispatch);
            Ok(Some(units.iter().map(|&k| pr[k]).sum()))
        }
        Err(DiscoError::Infeasible { .. }) | Err(DiscoError::NotSolved { .. }) => Ok(None),
        Err(e) => Err(e.into()),
    }
}

/// Maximizes `eval` over `[lo, hi]`: a scan with `step`, then a
/// golden-section refinement around the best grid point. `current` is
/// kept unless something strictly better turns up.
fn line_search<F>(eval: F, current: f64, lo: f64, hi: f64, step: f64) -> Result<(f64, f64), EpecError>
where
    F: Fn(f64) -> Result<f64, EpecError> + Sync,
{
    let n = ((hi - lo) / step).ceil().max(1.0) as usize;
    let grid: Vec<f64> = (0..=n).map(|k| (lo + k as f64 * step).min(hi)).collect();
    let vals = par_map(&grid, |_, &a| eval(a));
    let mut best = (current, eval(current)?);
    for (a, v) in grid.iter().zip(vals) {
        let v = v?;
        if v > best.1 {
            best = (*a, v);
        }
    }
    let (mut a, mut b) = ((best.0 - step).max(lo), (best.0 + step).min(hi));
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut c, mut d) = (b - g * (b - a), a + g * (b - a));
    let (mut fc, mut fd) = (eval(c)?, eval(d)?);
    while b - a > 1e-6 {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = eval(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = eval(d)?;
        }
    }
    for (x, v) in [(c, fc), (d, fd)] {
        if v > best.1 {
            best = (x, v);
        }
    }
    Ok(best)
}

/// Best price for unit `i` with all other prices fixed, judged by the
/// summed margin of `units`: a scan of `[lo, hi]` with `step`, then a
/// golden-section refinement around the best grid point.
#[allow(clippy::too_many_arguments)]
pub fn scan_price(
    s: &Scenario,
    units: &[usize],
    i: usize,
    alpha: &[f64],
    lo: f64,
    hi: f64,
    step: f64,
    nlp: &NlpOptions,
) -> Result<(f64, f64), EpecError> {
    let eval = |a: f64| -> Result<f64, EpecError> {
        let mut x = alpha.to_vec();
        x[i] = a;
        Ok(player_profit(s, units, &x, nlp)?.unwrap_or(f64::NEG_INFINITY))
    };
    line_search(eval, alpha[i], lo, hi, step)
}

/// Best common shift of all prices in `units` (others fixed) within
/// `[-width, width]`, judged by their summed margin. Returns the shift and
/// the margin.
pub fn scan_shift(
    s: &Scenario,
    units: &[usize],
    alpha: &[f64],
    width: f64,
    cap: f64,
    nlp: &NlpOptions,
) -> Result<(f64, f64), EpecError> {
    let eval = |d: f64| -> Result<f64, EpecError> {
        let mut x = alpha.to_vec();
        for &k in units {
            x[k] = (x[k] + d).clamp(0.0, cap);
        }
        Ok(player_profit(s, units, &x, nlp)?.unwrap_or(f64::NEG_INFINITY))
    };
    line_search(eval, 0.0, -width, width, 0.25)
}

/// Price range scanned for unit `i`: from its cost up to 1.5 × the highest
/// market price (at least cost + 5), within the cap.
pub fn scan_range(s: &Scenario, i: usize, cap: f64) -> (f64, f64) {
    let beta = s
        .periods
        .iter()
        .map(|p| p.market_price)
        .fold(0.0, f64::max);
    let c = s.dgs[i].cost;
    (c.min(cap), (1.5 * beta).max(c + 5.0).min(cap))
}

/// Coarse Gauss-Seidel best-response pass used to seed starts. Owners of
/// several units also try a common shift of their prices each sweep.
pub fn seed_prices(
    s: &Scenario,
    players: &[Vec<usize>],
    start: &[f64],
    cap: f64,
    nlp: &NlpOptions,
    sweeps: usize,
) -> Result<Vec<f64>, EpecError> {
    let mut alpha = start.to_vec();
    for _ in 0..sweeps {
        let mut moved: f64 = 0.0;
        for units in players {
            for &i in units {
                let (lo, hi) = scan_range(s, i, cap);
                let (a, _) = scan_price(s, units, i, &alpha, lo, hi, 0.5, nlp)?;
                moved = moved.max((a - alpha[i]).abs());
                alpha[i] = a;
            }
            // units of one owner can gain together where no single
            // price move pays
            if units.len() > 1 {
                let (d, _) = scan_shift(s, units, &alpha, 5.0, cap, nlp)?;
                for &k in units {
                    let a = (alpha[k] + d).clamp(0.0, cap);
                    moved = moved.max((a - alpha[k]).abs());
                    alpha[k] = a;
                }
            }
        }
        if moved <= 1e-3 {
            break;
        }
    }
    Ok(alpha)
}

/// Solves the stacked program from the given price starts.
fn solve_game(
    s: &Scenario,
    players: &[Vec<usize>],
    opts: &EpecOptions,
    starts: &[Vec<f64>],
) -> Result<EpecSolution, EpecError> {
    opts.validate()?;
    s.validate()?;
    let timer = Instant::now();
    let game = build_game_nlp(s, players, opts)?;
    let cap = opts.cap(s);
    let disco_opts = NlpOptions {
        trace: None,
        multistart: 1,
        ..opts.nlp.clone()
    };
    let ids: Vec<usize> = (0..starts.len()).collect();
    let runs = par_map(&ids, |_, &k| -> Result<(Attempt, Vec<f64>), EpecError> {
        let a0: Vec<f64> = starts[k].iter().map(|a| a.clamp(0.0, cap)).collect();
        let offer = ContractOffer::new(a0.clone());
        let base = solve_disco(s, &offer, &disco_opts)?;
        let x0 = game.start_from_disco(s, &base);
        let mut o = opts.nlp.clone();
        o.multistart = 1;
        if k != 0 {
            o.trace = None;
        }
        let try_polish = |x: &[f64]| {
            [0.0, 1e-6, 1e-4, 1e-3].iter().find_map(|&d| {
                polish(&game, x, d, &opts.nlp).filter(|xp| game.c_pen(xp) <= opts.epsilon_comp)
            })
        };
        // a start that already sits on an equilibrium only needs the
        // active-set projection
        let (x, nlp_status, iters, was_polished) = match try_polish(&x0) {
            Some(xp) => (xp, SolveStatus::Solved, 0, true),
            None => {
                let sol = solve_from(&game.nlp, &o, &StartPoint::primal(x0))?;
                match try_polish(&sol.x) {
                    Some(xp) => (xp, sol.status, sol.iters, true),
                    None => (sol.x, sol.status, sol.iters, false),
                }
            }
        };
        let c_pen = game.c_pen(&x);
        let feas = game.feasibility(&x);
        let alpha: Vec<f64> = game
            .layout
            .alpha
            .iter()
            .zip(&a0)
            .map(|(v, a)| v.map(|v| x[v]).unwrap_or(*a))
            .collect();
        let cap_hit = alpha.iter().any(|a| *a >= cap - 1e-6);
        let (accepted, reason) = if !c_pen.is_finite() {
            (false, "non-finite".to_string())
        } else if c_pen > opts.epsilon_comp {
            (false, format!("c_pen {c_pen:.3e} above threshold"))
        } else if feas > opts.nlp.tol.max(1e-6) {
            (false, format!("residual {feas:.3e} above tolerance"))
        } else if cap_hit {
            (false, "price at cap".to_string())
        } else {
            (true, String::new())
        };
        Ok((
            Attempt {
                start_id: k,
                alpha0: a0,
                alpha,
                c_pen,
                feasibility: feas,
                nlp_status,
                iters,
                accepted,
                polished: was_polished,
                reason,
                deviation_gain: None,
            },
            x,
        ))
    });
    let mut attempts = Vec::new();
    let mut points = Vec::new();
    for r in runs {
        match r {
            Ok((a, x)) => {
                attempts.push(a);
                points.push(Some(x));
            }
            Err(EpecError::Disco(e)) => {
                attempts.push(Attempt {
                    start_id: attempts.len(),
                    alpha0: starts[attempts.len()].clone(),
                    alpha: vec![],
                    c_pen: f64::INFINITY,
                    feasibility: f64::INFINITY,
                    nlp_status: SolveStatus::NumericalFailure(e.to_string()),
                    iters: 0,
                    accepted: false,
                    polished: false,
                    reason: format!("start dispatch failed: {e}"),
                    deviation_gain: None,
                });
                points.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let mut order: Vec<usize> = attempts
        .iter()
        .filter(|a| points[a.start_id].is_some())
        .map(|a| a.start_id)
        .collect();
    order.sort_by(|&a, &b| {
        let (a, b) = (&attempts[a], &attempts[b]);
        b.accepted
            .cmp(&a.accepted)
            .then(a.c_pen.total_cmp(&b.c_pen))
            .then(a.start_id.cmp(&b.start_id))
    });
    if order.is_empty() {
        return Err(EpecError::Options("no start produced a dispatch".to_string()));
    }
    // a single decision maker takes its most profitable stationary point
    if players.len() == 1 {
        let total = |k: usize| {
            let offer = ContractOffer::new(attempts[k].alpha.clone());
            let own = disco_from_point(s, &game.layout, &offer, points[k].as_ref().unwrap());
            profit(s, &offer.alpha, &own.dispatch).iter().sum::<f64>()
        };
        let n_acc = order.iter().take_while(|&&k| attempts[k].accepted).count();
        let mut scored: Vec<(f64, usize)> = order[..n_acc].iter().map(|&k| (total(k), k)).collect();
        scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for (j, (_, k)) in scored.into_iter().enumerate() {
            order[j] = k;
        }
    }
    // accepted candidates are screened for profitable unilateral
    // deviations, best first, until one passes
    let mut chosen = order[0];
    for &k in &order {
        if !attempts[k].accepted {
            break;
        }
        let x = points[k].as_ref().unwrap();
        let offer = ContractOffer::new(attempts[k].alpha.clone());
        let own = disco_from_point(s, &game.layout, &offer, x);
        let gain = deviation_gain(s, players, &offer.alpha, &own.dispatch, cap, &disco_opts)?;
        attempts[k].deviation_gain = Some(gain);
        if gain <= NASH_SCREEN_TOL {
            chosen = k;
            break;
        }
    }
    let status = if attempts[chosen].accepted {
        EquilibriumStatus::Accepted
    } else {
        EquilibriumStatus::NotFound
    };
    let mut distinct: Vec<Vec<f64>> = Vec::new();
    for a in attempts.iter().filter(|a| a.accepted) {
        if !distinct
            .iter()
            .any(|d| d.iter().zip(&a.alpha).all(|(x, y)| (x - y).abs() <= 1e-4))
        {
            distinct.push(a.alpha.clone());
        }
    }
    let x = points[chosen].clone().unwrap();
    let attempts_gain = attempts[chosen].deviation_gain;
    let alpha = ContractOffer::new(attempts[chosen].alpha.clone());
    let disco = disco_from_point(s, &game.layout, &alpha, &x);
    let profits = profit(s, &alpha.alpha, &disco.dispatch);
    let point = PrimalDualPoint {
        y1: game.layout.y1().iter().map(|&v| x[v]).collect(),
        mu: game.layout.mu.iter().map(|m| m.iter().map(|&v| x[v]).collect()).collect(),
        s: SlackVector {
            s: game.layout.s.iter().map(|m| m.iter().map(|&v| x[v]).collect()).collect(),
        },
    };
    let multipliers = game
        .players
        .iter()
        .map(|p| {
            let g = |v: &Vec<usize>| v.iter().map(|&i| x[i]).collect::<Vec<_>>();
            StationarityMultipliers {
                dgs: p.dgs.clone(),
                mu_bar: g(&p.mu_bar),
                mu_under: g(&p.mu_under),
                phi: g(&p.phi),
                sigma: g(&p.sigma),
                psi: g(&p.psi),
            }
        })
        .collect();
    let cap_active = alpha.alpha.iter().any(|a| *a >= cap - 1e-6);
    Ok(EpecSolution {
        c_pen: attempts[chosen].c_pen,
        max_product: game.max_product(&x),
        feasibility: attempts[chosen].feasibility,
        alpha,
        point,
        multipliers,
        status,
        diagnostics: Diagnostics {
            n_vars: game.nlp.n(),
            n_cons: game.nlp.n_eq() + game.nlp.n_ineq(),
            iters: attempts.iter().map(|a| a.iters).sum(),
            wall_seconds: timer.elapsed().as_secs_f64(),
            start_id: chosen,
            attempts,
        },
        disco,
        profits,
        distinct,
        cap_active,
        deviation_gain: attempts_gain,
        biactive_sign_violation: game.biactive_sign_violation(&x),
    })
}

fn default_starts(
    s: &Scenario,
    players: &[Vec<usize>],
    opts: &EpecOptions,
) -> Result<Vec<Vec<f64>>, EpecError> {
    opts.validate()?;
    s.validate()?;
    if s.dgs.is_empty() {
        return Err(EpecError::NoDg);
    }
    let mut starts: Vec<Vec<f64>> = (0..opts.multistart)
        .map(|k| start_prices(s, k, opts.nlp.seed))
        .collect();
    let quiet = NlpOptions {
        trace: None,
        multistart: 1,
        ..opts.nlp.clone()
    };
    // a single owner's profit has several local maxima (withholding one
    // unit can pay off through another), so every start is refined
    let seeded = if players.len() == 1 && players[0].len() > 1 {
        starts.len()
    } else {
        1
    };
    let refined = par_map(&starts[..seeded], |_, a| {
        seed_prices(s, players, a, opts.cap(s), &quiet, 10)
    });
    for (k, r) in refined.into_iter().enumerate() {
        starts[k] = r?;
    }
    Ok(starts)
}

/// Equilibrium prices with one player per unit.
pub fn solve_epec(s: &Scenario, opts: &EpecOptions) -> Result<EpecSolution, EpecError> {
    let players: Vec<Vec<usize>> = (0..s.dgs.len()).map(|i| vec![i]).collect();
    let starts = default_starts(s, &players, opts)?;
    solve_game(s, &players, opts, &starts)
}

/// Like [`solve_epec`] with explicit starting prices.
pub fn solve_epec_from(
    s: &Scenario,
    opts: &EpecOptions,
    starts: &[Vec<f64>],
) -> Result<EpecSolution, EpecError> {
    let players: Vec<Vec<usize>> = (0..s.dgs.len()).map(|i| vec![i]).collect();
    solve_game(s, &players, opts, starts)
}

/// Prices set by a single owner of every unit.
pub fn solve_single_owner(s: &Scenario, opts: &EpecOptions) -> Result<EpecSolution, EpecError> {
    let players = vec![(0..s.dgs.len()).collect::<Vec<_>>()];
    let starts = default_starts(s, &players, opts)?;
    solve_game(s, &players, opts, &starts)
}

/// Like [`solve_single_owner`] with explicit starting prices.
pub fn solve_single_owner_from(
    s: &Scenario,
    opts: &EpecOptions,
    starts: &[Vec<f64>],
) -> Result<EpecSolution, EpecError> {
    solve_game(s, &[(0..s.dgs.len()).collect()], opts, starts)
}

/// Structured text dump of an equilibrium.
pub fn dump(s: &Scenario, sol: &EpecSolution) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "scenario = {}", s.label);
    let _ = writeln!(out, "status = {:?}", sol.status);
    let _ = writeln!(out, "c_pen = {:e}", sol.c_pen);
    let _ = writeln!(out, "max_product = {:e}", sol.max_product);
    let _ = writeln!(out, "feasibility = {:e}", sol.feasibility);
    let _ = writeln!(out, "cap_active = {}", sol.cap_active);
    let _ = writeln!(out, "deviation_gain = {:?}", sol.deviation_gain);
    let _ = writeln!(out, "biactive_sign_violation = {:e}", sol.biactive_sign_violation);
    let d = &sol.diagnostics;
    let _ = writeln!(out, "variables = {}", d.n_vars);
    let _ = writeln!(out, "constraints = {}", d.n_cons);
    let _ = writeln!(out, "iterations = {}", d.iters);
    let _ = writeln!(out, "wall_seconds = {:.3}", d.wall_seconds);
    let _ = writeln!(out, "start_id = {}", d.start_id);
    for (i, dg) in s.dgs.iter().enumerate() {
        let _ = writeln!(out, "[{}]", dg.id);
        let _ = writeln!(out, "alpha = {:?}", sol.alpha.alpha[i]);
        let _ = writeln!(out, "energy_mwh = {:?}", sol.disco.dg_energy[i]);
        let _ = writeln!(out, "profit_eur = {:?}", sol.profits[i]);
    }
    let _ = writeln!(out, "[attempts]");
    for a in &d.attempts {
        let _ = writeln!(
            out,
            "{} alpha0={:?} alpha={:?} c_pen={:e} residual={:e} status={:?} polished={} accepted={} gain={:?} {}",
            a.start_id, a.alpha0, a.alpha, a.c_pen, a.feasibility, a.nlp_status, a.polished, a.accepted, a.deviation_gain, a.reason
        );
    }
    if sol.distinct.len() > 1 {
        let _ = writeln!(out, "[distinct]");
        for v in &sol.distinct {
            let _ = writeln!(out, "{v:?}");
        }
    }
    out
}

/// Price/energy/profit table (one row per unit).
pub fn prices_csv(s: &Scenario, sol: &EpecSolution) -> String {
    let mut out = String::from("dg,alpha_eur_mwh,energy_mwh,profit_eur\n");
    for (i, dg) in s.dgs.iter().enumerate() {
        let _ = writeln!(
            out,
            "{},{:.2},{:.0},{:.0}",
            dg.id, sol.alpha.alpha[i], sol.disco.dg_energy[i], sol.profits[i]
        );
    }
    out
}
