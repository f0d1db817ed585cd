//! The DisCo dispatch problem: multi-period cost-minimizing OPF for fixed
//! contract prices, its duals, KKT residuals and payment reports.
//!
//! Units: voltages in p.u.; DG and substation powers in MW; balance rows
//! in MW; per-period objective in €/h. Voltage-limit rows are multiplied by
//! `voltage_scale` (base MVA times the mean line admittance) so that their
//! duals are of the same order as the price duals; `DualSet` reports them
//! in those scaled units.

use std::fmt::Write as _;

use thiserror::Error;

use crate::exec::par_map;
use crate::model::{ModelError, Scenario};
use crate::nlp::{
    self, kkt_residual, LinExpr, NlpError, NlpOptions, NlpProblem, NlpSolution, QuadExpr,
    QuadNlp, QuadNlpBuilder, SolveStatus, StartPoint,
};
use crate::powerflow::{self, VoltageProfile};

const INF: f64 = f64::INFINITY;

#[derive(Debug, Error)]
pub enum DiscoError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Nlp(#[from] NlpError),
    #[error("offer has {got} prices for {expected} DG units")]
    OfferLength { expected: usize, got: usize },
    #[error("contract price for {dg} must be finite and nonnegative, got {alpha}")]
    OfferValue { dg: String, alpha: f64 },
    #[error("period {period} is infeasible: demand exceeds deliverable power")]
    Infeasible { period: usize },
    #[error("period {period}: dispatch solve failed ({status:?}, residual {residual:e})")]
    NotSolved {
        period: usize,
        status: SolveStatus,
        residual: f64,
    },
}

/// Contract price α_i per DG unit (€/MWh).
#[derive(Clone, Debug, PartialEq)]
pub struct ContractOffer {
    pub alpha: Vec<f64>,
}

impl ContractOffer {
    pub fn new(alpha: Vec<f64>) -> Self {
        Self { alpha }
    }

    pub fn validate(&self, s: &Scenario) -> Result<(), DiscoError> {
        if self.alpha.len() != s.dgs.len() {
            return Err(DiscoError::OfferLength {
                expected: s.dgs.len(),
                got: self.alpha.len(),
            });
        }
        for (a, d) in self.alpha.iter().zip(&s.dgs) {
            if !(a.is_finite() && *a >= 0.0) {
                return Err(DiscoError::OfferValue {
                    dg: d.id.clone(),
                    alpha: *a,
                });
            }
        }
        Ok(())
    }
}

/// Which lower-level constraint families to include.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LowerOptions {
    pub line_limits: bool,
}

impl Default for LowerOptions {
    fn default() -> Self {
        Self { line_limits: true }
    }
}

/// Row scale applied to voltage-limit and pinned-voltage rows.
pub fn voltage_scale(s: &Scenario) -> f64 {
    s.network.base_mva * s.network.mean_admittance()
}

/// Kind of one lower-level inequality row `g >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum IneqKind {
    LineHi(usize),
    LineLo(usize),
    VHi(usize),
    VLo(usize),
    SbHi,
    SbLo,
    DgHi(usize),
    DgLo(usize),
}

/// The contract price seen by the lower level: a number, or a variable of
/// an enclosing program.
#[derive(Clone, Copy, Debug)]
pub enum AlphaTerm {
    Fixed(f64),
    Var(usize),
}

/// One period of the lower level, expressed over variables of a builder.
#[derive(Clone, Debug)]
pub struct PeriodBlock {
    pub t: usize,
    pub v: Vec<usize>,
    pub p_dg: Vec<usize>,
    pub p_sb: usize,
    /// `β P_sb + Σ α_i P_dg_i` (€/h).
    pub objective: QuadExpr,
    /// Balance rows (one per bus) followed by pinned-voltage rows.
    pub eq: Vec<QuadExpr>,
    pub eq_names: Vec<String>,
    pub pinned: Vec<usize>,
    pub ineq: Vec<QuadExpr>,
    pub ineq_names: Vec<String>,
    pub kinds: Vec<IneqKind>,
}

impl PeriodBlock {
    /// Lower-level primal variables `w` in block order (V, P_dg, P_sb).
    pub fn w(&self) -> Vec<usize> {
        let mut w = self.v.clone();
        w.extend(&self.p_dg);
        w.push(self.p_sb);
        w
    }
}

/// Adds the variables of period `t` to `b` and returns its rows. Variables
/// are free; all limits are inequality rows.
pub fn build_period_block(
    s: &Scenario,
    t: usize,
    alpha: &[AlphaTerm],
    opts: LowerOptions,
    b: &mut QuadNlpBuilder,
) -> PeriodBlock {
    let net = &s.network;
    let base = net.base_mva;
    let kv = voltage_scale(s);
    let per = &s.periods[t];
    let tag = format!("t{}", t + 1);
    let v: Vec<usize> = net
        .buses
        .iter()
        .map(|bus| b.add_var(format!("V[{}][{tag}]", bus.id), -INF, INF))
        .collect();
    let p_dg: Vec<usize> = s
        .dgs
        .iter()
        .map(|d| b.add_var(format!("Pdg[{}][{tag}]", d.id), -INF, INF))
        .collect();
    let p_sb = b.add_var(format!("Psb[{tag}]"), -INF, INF);

    let mut objective = QuadExpr::new();
    objective.add_lin(p_sb, per.market_price);
    for (i, &a) in alpha.iter().enumerate() {
        match a {
            AlphaTerm::Fixed(price) => objective.add_lin(p_dg[i], price),
            AlphaTerm::Var(av) => objective.add_quad(av, p_dg[i], 1.0),
        };
    }

    let sub = net.substation_index();
    let dg_bus = s.dg_buses();
    let mut eq: Vec<QuadExpr> = (0..net.n_buses())
        .map(|k| QuadExpr::constant(base * per.demand[k]))
        .collect();
    eq[sub].add_lin(p_sb, -1.0);
    for (i, &k) in dg_bus.iter().enumerate() {
        eq[k].add_lin(p_dg[i], -1.0);
    }
    let flow_expr = |from: usize, to: usize, z: f64, scale: f64| {
        // scale * V_from (V_from - V_to) / z
        let mut e = QuadExpr::new();
        e.add_quad(v[from], v[from], scale / z);
        e.add_quad(v[from], v[to], -scale / z);
        e
    };
    for l in 0..net.lines.len() {
        let (a, c) = net.line_ends(l);
        let z = net.line_z(l);
        eq[a].add_expr(&flow_expr(a, c, z, base), 1.0);
        eq[c].add_expr(&flow_expr(c, a, z, base), 1.0);
    }
    let mut eq_names: Vec<String> = net
        .buses
        .iter()
        .map(|bus| format!("balance[{}][{tag}]", bus.id))
        .collect();
    let mut pinned = Vec::new();
    for (k, bus) in net.buses.iter().enumerate() {
        if let Some(p) = bus.pinned {
            let mut e = QuadExpr::constant(-kv * p);
            e.add_lin(v[k], kv);
            eq.push(e);
            eq_names.push(format!("pin[{}][{tag}]", bus.id));
            pinned.push(k);
        }
    }

    let mut ineq = Vec::new();
    let mut ineq_names = Vec::new();
    let mut kinds = Vec::new();
    let mut push = |e: QuadExpr, name: String, kind: IneqKind| {
        ineq.push(e);
        ineq_names.push(name);
        kinds.push(kind);
    };
    if opts.line_limits {
        for l in 0..net.lines.len() {
            let (a, c) = net.line_ends(l);
            let z = net.line_z(l);
            let line = &net.lines[l];
            let cap = base * line.p_max;
            let mut hi = flow_expr(a, c, z, -base);
            hi.add_const(cap);
            push(hi, format!("line_hi[{}-{}][{tag}]", line.from, line.to), IneqKind::LineHi(l));
            let mut lo = flow_expr(a, c, z, base);
            lo.add_const(cap);
            push(lo, format!("line_lo[{}-{}][{tag}]", line.from, line.to), IneqKind::LineLo(l));
        }
    }
    for (k, bus) in net.buses.iter().enumerate() {
        let mut hi = QuadExpr::constant(kv * bus.v_max);
        hi.add_lin(v[k], -kv);
        push(hi, format!("v_hi[{}][{tag}]", bus.id), IneqKind::VHi(k));
    }
    for (k, bus) in net.buses.iter().enumerate() {
        let mut lo = QuadExpr::constant(-kv * bus.v_min);
        lo.add_lin(v[k], kv);
        push(lo, format!("v_lo[{}][{tag}]", bus.id), IneqKind::VLo(k));
    }
    let ss = &net.substation;
    let mut hi = QuadExpr::constant(base * ss.p_max);
    hi.add_lin(p_sb, -1.0);
    push(hi, format!("sb_hi[{tag}]"), IneqKind::SbHi);
    let mut lo = QuadExpr::constant(-base * ss.p_min);
    lo.add_lin(p_sb, 1.0);
    push(lo, format!("sb_lo[{tag}]"), IneqKind::SbLo);
    for (i, d) in s.dgs.iter().enumerate() {
        let mut hi = QuadExpr::constant(d.p_max);
        hi.add_lin(p_dg[i], -1.0);
        push(hi, format!("dg_hi[{}][{tag}]", d.id), IneqKind::DgHi(i));
    }
    for (i, d) in s.dgs.iter().enumerate() {
        let mut lo = QuadExpr::constant(-d.p_min);
        lo.add_lin(p_dg[i], 1.0);
        push(lo, format!("dg_lo[{}][{tag}]", d.id), IneqKind::DgLo(i));
    }

    PeriodBlock {
        t,
        v,
        p_dg,
        p_sb,
        objective,
        eq,
        eq_names,
        pinned,
        ineq,
        ineq_names,
        kinds,
    }
}

/// Lagrangian gradient rows `∂/∂w [obj - λᵀ eq - μᵀ ineq]` of a block, one
/// per lower-level primal variable, as expressions in `(w, λ, μ)` and any
/// price variables. `lambda` and `mu` give the dual variable indices.
pub fn stationarity_rows(block: &PeriodBlock, lambda: &[usize], mu: &[usize]) -> Vec<QuadExpr> {
    let w = block.w();
    let obj_partials = block.objective.partials();
    let eq_partials: Vec<_> = block.eq.iter().map(|e| e.partials()).collect();
    let in_partials: Vec<_> = block.ineq.iter().map(|e| e.partials()).collect();
    w.iter()
        .map(|&var| {
            let mut row = QuadExpr::new();
            if let Some(p) = obj_partials.get(&var) {
                add_linexpr(&mut row, p, 1.0);
            }
            for (r, parts) in eq_partials.iter().enumerate() {
                if let Some(p) = parts.get(&var) {
                    row.add_lin_times_var(p, lambda[r], -1.0);
                }
            }
            for (r, parts) in in_partials.iter().enumerate() {
                if let Some(p) = parts.get(&var) {
                    row.add_lin_times_var(p, mu[r], -1.0);
                }
            }
            row.compress();
            row
        })
        .collect()
}

pub(crate) fn add_linexpr(e: &mut QuadExpr, l: &LinExpr, scale: f64) {
    e.add_const(scale * l.constant);
    for &(v, c) in &l.terms {
        e.add_lin(v, scale * c);
    }
}

/// Lower-level dispatch.
#[derive(Clone, Debug, PartialEq)]
pub struct Dispatch {
    /// `p_dg[t][i]` (MW)
    pub p_dg: Vec<Vec<f64>>,
    /// `p_sb[t]` (MW)
    pub p_sb: Vec<f64>,
    pub v: VoltageProfile,
}

/// Lower-level duals, indexed `[t][...]`. λ is the dual of the balance row
/// (`λ = -LMP` with this sign convention), all μ are nonnegative.
#[derive(Clone, Debug, PartialEq)]
pub struct DualSet {
    pub lambda: Vec<Vec<f64>>,
    /// Duals of pinned-voltage rows, `[t][pinned bus]` in bus order.
    pub lambda_pin: Vec<Vec<f64>>,
    pub mu_line_hi: Vec<Vec<f64>>,
    pub mu_line_lo: Vec<Vec<f64>>,
    pub mu_v_hi: Vec<Vec<f64>>,
    pub mu_v_lo: Vec<Vec<f64>>,
    pub mu_sb_hi: Vec<f64>,
    pub mu_sb_lo: Vec<f64>,
    pub mu_dg_hi: Vec<Vec<f64>>,
    pub mu_dg_lo: Vec<Vec<f64>>,
}

impl DualSet {
    pub(crate) fn zeros(s: &Scenario) -> Self {
        let t = s.periods.len();
        let nb = s.network.n_buses();
        let nl = s.network.lines.len();
        let nd = s.dgs.len();
        let np = s.network.buses.iter().filter(|b| b.pinned.is_some()).count();
        Self {
            lambda: vec![vec![0.0; nb]; t],
            lambda_pin: vec![vec![0.0; np]; t],
            mu_line_hi: vec![vec![0.0; nl]; t],
            mu_line_lo: vec![vec![0.0; nl]; t],
            mu_v_hi: vec![vec![0.0; nb]; t],
            mu_v_lo: vec![vec![0.0; nb]; t],
            mu_sb_hi: vec![0.0; t],
            mu_sb_lo: vec![0.0; t],
            mu_dg_hi: vec![vec![0.0; nd]; t],
            mu_dg_lo: vec![vec![0.0; nd]; t],
        }
    }

    pub fn get(&self, t: usize, kind: IneqKind) -> f64 {
        match kind {
            IneqKind::LineHi(l) => self.mu_line_hi[t][l],
            IneqKind::LineLo(l) => self.mu_line_lo[t][l],
            IneqKind::VHi(k) => self.mu_v_hi[t][k],
            IneqKind::VLo(k) => self.mu_v_lo[t][k],
            IneqKind::SbHi => self.mu_sb_hi[t],
            IneqKind::SbLo => self.mu_sb_lo[t],
            IneqKind::DgHi(i) => self.mu_dg_hi[t][i],
            IneqKind::DgLo(i) => self.mu_dg_lo[t][i],
        }
    }

    pub(crate) fn set(&mut self, t: usize, kind: IneqKind, v: f64) {
        match kind {
            IneqKind::LineHi(l) => self.mu_line_hi[t][l] = v,
            IneqKind::LineLo(l) => self.mu_line_lo[t][l] = v,
            IneqKind::VHi(k) => self.mu_v_hi[t][k] = v,
            IneqKind::VLo(k) => self.mu_v_lo[t][k] = v,
            IneqKind::SbHi => self.mu_sb_hi[t] = v,
            IneqKind::SbLo => self.mu_sb_lo[t] = v,
            IneqKind::DgHi(i) => self.mu_dg_hi[t][i] = v,
            IneqKind::DgLo(i) => self.mu_dg_lo[t][i] = v,
        }
    }

    /// Smallest inequality dual over all families.
    pub fn min_mu(&self) -> f64 {
        let flat = |v: &Vec<Vec<f64>>| v.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        [
            flat(&self.mu_line_hi),
            flat(&self.mu_line_lo),
            flat(&self.mu_v_hi),
            flat(&self.mu_v_lo),
            flat(&self.mu_dg_hi),
            flat(&self.mu_dg_lo),
            self.mu_sb_hi.iter().copied().fold(f64::INFINITY, f64::min),
            self.mu_sb_lo.iter().copied().fold(f64::INFINITY, f64::min),
        ]
        .into_iter()
        .fold(f64::INFINITY, f64::min)
    }
}

/// Result of [`solve_disco`].
#[derive(Clone, Debug)]
pub struct DiscoSolution {
    pub dispatch: Dispatch,
    pub duals: DualSet,
    /// Total cost (€).
    pub objective: f64,
    /// Market payment (€).
    pub market_payment: f64,
    /// Payment per DG (€).
    pub dg_payments: Vec<f64>,
    /// Energy bought from the market (MWh).
    pub market_energy: f64,
    /// Energy bought from each DG (MWh).
    pub dg_energy: Vec<f64>,
    /// Loss per period (MWh) and its sum.
    pub loss_mwh: Vec<f64>,
    pub annual_loss_mwh: f64,
    pub offer: ContractOffer,
    /// Largest KKT residual over the period solves.
    pub residual: f64,
    pub iters: usize,
    pub wall_seconds: f64,
}

/// Monolithic OPF over all periods with the objective in average €/h
/// (period weights `hours / total_hours`). Periods are independent blocks.
pub fn build_opf(s: &Scenario, offer: &ContractOffer) -> Result<QuadNlp, DiscoError> {
    s.validate()?;
    offer.validate(s)?;
    let alpha: Vec<AlphaTerm> = offer.alpha.iter().map(|&a| AlphaTerm::Fixed(a)).collect();
    let total = s.total_hours();
    let mut b = QuadNlpBuilder::new();
    for t in 0..s.periods.len() {
        let block = build_period_block(s, t, &alpha, LowerOptions::default(), &mut b);
        let w = s.periods[t].hours / total;
        b.objective_mut().add_expr(&block.objective, w);
        push_rows(&mut b, block);
    }
    Ok(b.build())
}

fn push_rows(b: &mut QuadNlpBuilder, block: PeriodBlock) {
    for (e, n) in block.eq.into_iter().zip(block.eq_names) {
        b.add_eq(n, e);
    }
    for (e, n) in block.ineq.into_iter().zip(block.ineq_names) {
        b.add_ineq(n, e);
    }
}

/// Single-period OPF with unit weight, plus its block description.
pub fn build_period_opf(
    s: &Scenario,
    t: usize,
    offer: &ContractOffer,
    opts: LowerOptions,
) -> (QuadNlp, PeriodBlock) {
    let alpha: Vec<AlphaTerm> = offer.alpha.iter().map(|&a| AlphaTerm::Fixed(a)).collect();
    let mut b = QuadNlpBuilder::new();
    let block = build_period_block(s, t, &alpha, opts, &mut b);
    *b.objective_mut() = block.objective.clone();
    push_rows(&mut b, block.clone());
    (b.build(), block)
}

/// Default start for a period: flat 1.0 p.u. voltages (or the pinned
/// value), DG output at the midpoint of its range, substation import equal
/// to the residual demand.
pub fn default_period_start(s: &Scenario, t: usize, block: &PeriodBlock) -> Vec<f64> {
    let n = block.p_sb + 1;
    let mut x = vec![0.0; n];
    for (k, &vi) in block.v.iter().enumerate() {
        x[vi] = s.network.buses[k].pinned.unwrap_or(1.0);
    }
    let mut dg_total = 0.0;
    for (i, &pi) in block.p_dg.iter().enumerate() {
        let d = &s.dgs[i];
        x[pi] = 0.5 * (d.p_min + d.p_max);
        dg_total += x[pi];
    }
    let ss = &s.network.substation;
    let need = s.periods[t].total_demand() * s.network.base_mva - dg_total;
    x[block.p_sb] = need.clamp(ss.p_min * s.network.base_mva, ss.p_max * s.network.base_mva);
    x
}

/// Per-period raw solution in block order.
#[derive(Clone, Debug)]
pub struct PeriodSolution {
    pub x: Vec<f64>,
    pub lambda: Vec<f64>,
    pub mu: Vec<f64>,
    pub nlp: NlpSolution,
}

/// Solves one period, trying the default start first and then a multistart
/// if the first attempt fails.
pub fn solve_period(
    s: &Scenario,
    t: usize,
    offer: &ContractOffer,
    options: &NlpOptions,
) -> Result<(PeriodSolution, PeriodBlock), DiscoError> {
    let (p, block) = build_period_opf(s, t, offer, LowerOptions::default());
    let start = StartPoint::primal(default_period_start(s, t, &block));
    let mut o = options.clone();
    o.trace = None;
    let mut sol = nlp::solve_from(&p, &o, &start)?;
    if !sol.status.is_solved() && sol.status != SolveStatus::Infeasible {
        let o2 = NlpOptions {
            multistart: options.multistart.max(4),
            ..o.clone()
        };
        let r = nlp::multistart_solve(&p, &o2, Some(&start))?;
        sol = r.into_best();
    }
    match sol.status {
        SolveStatus::Solved => {}
        SolveStatus::Infeasible => return Err(DiscoError::Infeasible { period: t + 1 }),
        ref st => {
            return Err(DiscoError::NotSolved {
                period: t + 1,
                status: st.clone(),
                residual: sol.kkt.max(),
            })
        }
    }
    Ok((
        PeriodSolution {
            x: sol.x.clone(),
            lambda: sol.lambda_eq.clone(),
            mu: sol.mu_ineq.clone(),
            nlp: sol,
        },
        block,
    ))
}

/// Dispatch for fixed prices. Periods are solved independently (in
/// parallel when enabled) and assembled in period order.
pub fn solve_disco(
    s: &Scenario,
    offer: &ContractOffer,
    options: &NlpOptions,
) -> Result<DiscoSolution, DiscoError> {
    s.validate()?;
    offer.validate(s)?;
    options.validate()?;
    let periods: Vec<usize> = (0..s.periods.len()).collect();
    let results = par_map(&periods, |_, &t| solve_period(s, t, offer, options));
    let mut parts = Vec::with_capacity(results.len());
    for r in results {
        parts.push(r?);
    }
    Ok(assemble(s, offer, &parts))
}

/// Largest distance (MW) over which a unit output is moved onto an active
/// bound.
pub const BOUND_SNAP: f64 = 1e-5;

/// Builds a `DiscoSolution` from per-period results.
pub fn assemble(
    s: &Scenario,
    offer: &ContractOffer,
    parts: &[(PeriodSolution, PeriodBlock)],
) -> DiscoSolution {
    let nt = s.periods.len();
    let mut duals = DualSet::zeros(s);
    let mut p_dg = Vec::with_capacity(nt);
    let mut p_sb = Vec::with_capacity(nt);
    let mut v = Vec::with_capacity(nt);
    let mut residual: f64 = 0.0;
    let mut iters = 0;
    let mut wall = 0.0;
    for (t, (ps, block)) in parts.iter().enumerate() {
        v.push(block.v.iter().map(|&i| ps.x[i]).collect::<Vec<_>>());
        // interior iterates stop a hair inside active unit bounds; a bound
        // whose dual exceeds its slack is taken as active, and the
        // substation absorbs the difference
        let mu_of = |kind: IneqKind| {
            block
                .kinds
                .iter()
                .position(|&k| k == kind)
                .map_or(0.0, |r| ps.mu[r])
        };
        let mut sb = ps.x[block.p_sb];
        let dg: Vec<f64> = block
            .p_dg
            .iter()
            .zip(&s.dgs)
            .enumerate()
            .map(|(i, (&vi, d))| {
                let x = ps.x[vi];
                let snapped = [(d.p_max, IneqKind::DgHi(i)), (d.p_min, IneqKind::DgLo(i))]
                    .into_iter()
                    .find(|&(b, kind)| {
                        let gap = (x - b).abs();
                        gap <= BOUND_SNAP && mu_of(kind) >= gap
                    })
                    .map_or(x, |(b, _)| b);
                sb += x - snapped;
                snapped
            })
            .collect();
        p_dg.push(dg);
        p_sb.push(sb);
        let nb = s.network.n_buses();
        duals.lambda[t] = ps.lambda[..nb].to_vec();
        duals.lambda_pin[t] = ps.lambda[nb..].to_vec();
        for (r, &kind) in block.kinds.iter().enumerate() {
            duals.set(t, kind, ps.mu[r]);
        }
        residual = residual.max(ps.nlp.kkt.max());
        iters += ps.nlp.iters;
        wall += ps.nlp.wall_seconds;
    }
    let dispatch = Dispatch {
        p_dg,
        p_sb,
        v: VoltageProfile { v },
    };
    finish(s, offer, dispatch, duals, residual, iters, wall)
}

/// Fills the money and energy fields from a dispatch.
pub fn finish(
    s: &Scenario,
    offer: &ContractOffer,
    dispatch: Dispatch,
    duals: DualSet,
    residual: f64,
    iters: usize,
    wall_seconds: f64,
) -> DiscoSolution {
    let nd = s.dgs.len();
    let mut market_payment = 0.0;
    let mut market_energy = 0.0;
    let mut dg_energy = vec![0.0; nd];
    let mut loss_mwh = Vec::with_capacity(s.periods.len());
    for (t, per) in s.periods.iter().enumerate() {
        market_payment += per.hours * per.market_price * dispatch.p_sb[t];
        market_energy += per.hours * dispatch.p_sb[t];
        for i in 0..nd {
            dg_energy[i] += per.hours * dispatch.p_dg[t][i];
        }
        let loss = powerflow::total_loss(&s.network, &dispatch.v.v[t]) * s.network.base_mva;
        loss_mwh.push(loss * per.hours);
    }
    let dg_payments: Vec<f64> = (0..nd).map(|i| offer.alpha[i] * dg_energy[i]).collect();
    DiscoSolution {
        objective: market_payment + dg_payments.iter().sum::<f64>(),
        annual_loss_mwh: loss_mwh.iter().sum(),
        dispatch,
        duals,
        market_payment,
        dg_payments,
        market_energy,
        dg_energy,
        loss_mwh,
        offer: offer.clone(),
        residual,
        iters,
        wall_seconds,
    }
}

/// Infinity norms of the lower-level KKT residual families.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct KktFamilies {
    /// Stationarity in V (rows scaled by `1 / voltage_scale`).
    pub stationarity_v: f64,
    pub stationarity_dg: f64,
    pub stationarity_sb: f64,
    pub balance: f64,
    /// Primal feasibility of the inequality rows, `max(-g, 0)`.
    pub primal: f64,
    /// `|μ_j g_j|` and dual sign violations.
    pub complementarity: f64,
}

impl KktFamilies {
    pub fn max(&self) -> f64 {
        [
            self.stationarity_v,
            self.stationarity_dg,
            self.stationarity_sb,
            self.balance,
            self.primal,
            self.complementarity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }
}

/// Evaluates the lower-level KKT system at a solution, period by period
/// with unit weights.
pub fn kkt_check(s: &Scenario, offer: &ContractOffer, sol: &DiscoSolution) -> KktFamilies {
    let kv = voltage_scale(s);
    let mut f = KktFamilies::default();
    for t in 0..s.periods.len() {
        let (p, block) = build_period_opf(s, t, offer, LowerOptions::default());
        let mut x = vec![0.0; p.n()];
        for (k, &vi) in block.v.iter().enumerate() {
            x[vi] = sol.dispatch.v.v[t][k];
        }
        for (i, &pi) in block.p_dg.iter().enumerate() {
            x[pi] = sol.dispatch.p_dg[t][i];
        }
        x[block.p_sb] = sol.dispatch.p_sb[t];
        let mut lambda = sol.duals.lambda[t].clone();
        lambda.extend(&sol.duals.lambda_pin[t]);
        let mu: Vec<f64> = block.kinds.iter().map(|&k| sol.duals.get(t, k)).collect();
        let zeros = vec![0.0; p.n()];
        let mut grad = vec![0.0; p.n()];
        p.gradient(&x, &mut grad);
        for (r, e) in p.eq.iter().enumerate() {
            e.gradient_into(&x, -lambda[r], &mut grad);
        }
        for (r, e) in p.ineq.iter().enumerate() {
            e.gradient_into(&x, -mu[r], &mut grad);
        }
        for &vi in &block.v {
            f.stationarity_v = f.stationarity_v.max(grad[vi].abs() / kv);
        }
        for &pi in &block.p_dg {
            f.stationarity_dg = f.stationarity_dg.max(grad[pi].abs());
        }
        f.stationarity_sb = f.stationarity_sb.max(grad[block.p_sb].abs());
        let k = kkt_residual(&p, &x, &lambda, &mu, &zeros, &zeros);
        let mut c = vec![0.0; p.n_eq()];
        p.eq_values(&x, &mut c);
        f.balance = f.balance.max(c.iter().fold(0.0, |m, v| m.max(v.abs())));
        let mut g = vec![0.0; p.n_ineq()];
        p.ineq_values(&x, &mut g);
        f.primal = f.primal.max(g.iter().fold(0.0, |m, v| m.max(-v)));
        f.complementarity = f.complementarity.max(k.complementarity);
    }
    f
}

/// Payments, energies and losses in the shape of the published tables.
#[derive(Clone, Debug, PartialEq)]
pub struct PaymentReport {
    pub total_payment: f64,
    pub market_payment: f64,
    pub dg_ids: Vec<String>,
    pub dg_payments: Vec<f64>,
    pub dg_energy: Vec<f64>,
    /// Market price and market payment per period (€).
    pub market_by_period: Vec<(f64, f64)>,
    pub market_energy: f64,
    pub loss_mwh: Vec<f64>,
    pub annual_loss_mwh: f64,
}

pub fn payment_report(s: &Scenario, sol: &DiscoSolution) -> PaymentReport {
    PaymentReport {
        total_payment: sol.objective,
        market_payment: sol.market_payment,
        dg_ids: s.dgs.iter().map(|d| d.id.clone()).collect(),
        dg_payments: sol.dg_payments.clone(),
        dg_energy: sol.dg_energy.clone(),
        market_by_period: s
            .periods
            .iter()
            .enumerate()
            .map(|(t, p)| (p.market_price, p.hours * p.market_price * sol.dispatch.p_sb[t]))
            .collect(),
        market_energy: sol.market_energy,
        loss_mwh: sol.loss_mwh.clone(),
        annual_loss_mwh: sol.annual_loss_mwh,
    }
}

impl PaymentReport {
    /// Two-column CSV (`item,value`), rows in table order.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,value\n");
        let _ = writeln!(out, "energy_loss_mwh,{:.3}", self.annual_loss_mwh);
        let _ = writeln!(out, "total_payment_eur,{:.2}", self.total_payment);
        for (id, p) in self.dg_ids.iter().zip(&self.dg_payments) {
            let _ = writeln!(out, "payment_{id}_eur,{p:.2}");
        }
        let _ = writeln!(out, "market_payment_eur,{:.2}", self.market_payment);
        for (price, pay) in &self.market_by_period {
            let _ = writeln!(out, "market_payment_at_{price}_eur,{pay:.2}");
        }
        for (id, e) in self.dg_ids.iter().zip(&self.dg_energy) {
            let _ = writeln!(out, "energy_{id}_mwh,{e:.3}");
        }
        let _ = writeln!(out, "market_energy_mwh,{:.3}", self.market_energy);
        out
    }
}

/// Warm start for the slack-form lower level of period `t`: slacks equal
/// to the inequality values at the dispatch.
pub fn period_slacks(s: &Scenario, t: usize, sol: &DiscoSolution, opts: LowerOptions) -> Vec<f64> {
    let (p, block) = build_period_opf(s, t, &sol.offer, opts);
    let mut x = vec![0.0; p.n()];
    for (k, &vi) in block.v.iter().enumerate() {
        x[vi] = sol.dispatch.v.v[t][k];
    }
    for (i, &pi) in block.p_dg.iter().enumerate() {
        x[pi] = sol.dispatch.p_dg[t][i];
    }
    x[block.p_sb] = sol.dispatch.p_sb[t];
    let mut g = vec![0.0; p.n_ineq()];
    p.ineq_values(&x, &mut g);
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::build_3bus;

    #[test]
    fn opf_counts_for_three_bus() {
        let s = build_3bus();
        let p = build_opf(&s, &ContractOffer::new(vec![60.0, 60.0])).unwrap();
        assert_eq!(p.n(), 6);
        assert_eq!(p.n_eq(), 3);
        assert_eq!(p.n_ineq(), 2 * 2 + 2 * 3 + 2 + 2 * 2);
    }

    #[test]
    fn jacobian_is_block_diagonal_in_time() {
        let mut s = build_3bus();
        let mut p2 = s.periods[0].clone();
        p2.index = 1;
        p2.hours = 100.0;
        s.periods.push(p2);
        let p = build_opf(&s, &ContractOffer::new(vec![60.0, 60.0])).unwrap();
        let per_t = p.n() / 2;
        let rows_t = p.n_eq() / 2;
        for &(r, c) in p.eq_jacobian_structure() {
            assert_eq!(r / rows_t, c / per_t);
        }
        let irows_t = p.n_ineq() / 2;
        for &(r, c) in p.ineq_jacobian_structure() {
            assert_eq!(r / irows_t, c / per_t);
        }
    }

    #[test]
    fn payment_examples() {
        // 1 MW all year at the published prices
        assert!((60.68 * 8760.0 - 531_556.8f64).abs() < 1e-6);
        assert!((61.01 * 8760.0 - 534_447.6f64).abs() < 1e-6);
    }
}
