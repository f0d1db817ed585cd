//! Checks on a computed equilibrium: Gauss-Seidel diagonalization over the
//! per-DG MPECs, unilateral price sweeps, and a fresh DisCo re-solve.

use std::fmt::Write as _;

use thiserror::Error;

use crate::disco::{solve_disco, ContractOffer, DiscoError};
use crate::epec::{
    build_mpec, player_profit, profit, scan_price, scan_range, EpecError, EpecOptions, EpecSolution,
};
use crate::exec::par_map;
use crate::model::Scenario;
use crate::nlp::{solve_from, NlpOptions, SolveStatus, StartPoint};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error(transparent)]
    Epec(#[from] EpecError),
    #[error(transparent)]
    Disco(#[from] DiscoError),
    #[error("invalid argument: {0}")]
    Argument(String),
}

/// Relaxation levels for `μ_j s_j <= ε` inside a best-response solve.
pub const RELAXATION_SCHEDULE: [f64; 5] = [1e-2, 1e-4, 1e-6, 1e-8, 1e-10];

/// Default window of remembered sweep vectors for cycle detection.
pub const CYCLE_WINDOW: usize = 20;

#[derive(Clone, Debug)]
pub struct DiagonalizationOptions {
    pub epec: EpecOptions,
    pub tol: f64,
    pub max_sweeps: usize,
    pub cycle_window: usize,
    /// Grid step of the scan that precedes each MPEC solve (€/MWh).
    pub grid_step: f64,
}

impl Default for DiagonalizationOptions {
    fn default() -> Self {
        Self {
            epec: EpecOptions::default(),
            tol: 1e-4,
            max_sweeps: 50,
            cycle_window: CYCLE_WINDOW,
            grid_step: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalizationTrace {
    /// Price vector after each sweep; entry 0 is the start.
    pub sweeps: Vec<Vec<f64>>,
    pub converged: bool,
    pub cycle_detected: bool,
    /// max |Δα| between the last two sweeps.
    pub accuracy: f64,
    /// Unit whose best response could not be computed, if any.
    pub failed: Option<String>,
}

impl DiagonalizationTrace {
    pub fn to_csv(&self, s: &Scenario) -> String {
        let mut out = String::from("sweep");
        for d in &s.dgs {
            let _ = write!(out, ",alpha_{}", d.id);
        }
        out.push_str(",max_change\n");
        for (k, a) in self.sweeps.iter().enumerate() {
            let change = if k == 0 {
                f64::NAN
            } else {
                max_diff(a, &self.sweeps[k - 1])
            };
            let _ = write!(out, "{k}");
            for v in a {
                let _ = write!(out, ",{v}");
            }
            let _ = writeln!(out, ",{change}");
        }
        out
    }
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()))
}

/// One DG's best response with rivals fixed.
#[derive(Clone, Debug)]
pub struct BestResponse {
    pub alpha: f64,
    /// Margin (€) at the response, with the dispatch the MPEC picks.
    pub profit: f64,
    /// Whether the relaxed MPEC solve produced the response (otherwise the
    /// grid scan did).
    pub from_mpec: bool,
}

/// Best response of unit `i`: a price scan locates the best region, then
/// the unit's MPEC is solved from there with `μ_j s_j <= ε` tightened
/// along [`RELAXATION_SCHEDULE`].
pub fn best_response(
    s: &Scenario,
    i: usize,
    alpha: &[f64],
    opts: &DiagonalizationOptions,
) -> Result<BestResponse, VerifyError> {
    let quiet = NlpOptions {
        trace: None,
        multistart: 1,
        ..opts.epec.nlp.clone()
    };
    let cap = opts.epec.cap(s);
    let (lo, hi) = scan_range(s, i, cap);
    let (a_grid, p_grid) = scan_price(s, &[i], i, alpha, lo, hi, opts.grid_step, &quiet)?;

    let mut start = alpha.to_vec();
    start[i] = a_grid;
    let base = match solve_disco(s, &ContractOffer::new(start.clone()), &quiet) {
        Ok(b) => b,
        Err(_) => {
            return Ok(BestResponse {
                alpha: a_grid,
                profit: p_grid,
                from_mpec: false,
            })
        }
    };
    let mpec = build_mpec(s, i, &ContractOffer::new(start), &opts.epec)?;
    let mut x = mpec.start_from_disco(s, &base);
    let mpec_opts = NlpOptions {
        max_iter: quiet.max_iter.min(150),
        ..quiet.clone()
    };
    for eps in RELAXATION_SCHEDULE {
        let nlp = mpec.relaxed_nlp(eps);
        match solve_from(&nlp, &mpec_opts, &StartPoint::primal(x.clone())) {
            Ok(sol) if sol.status == SolveStatus::Solved => x = sol.x,
            _ => break,
        }
    }
    // The relaxed objective can overstate the margin, so the candidate price
    // is scored by re-solving the DisCo problem at it.
    let a = x[mpec.layout.alpha[i].expect("unit has a price variable")].clamp(lo, hi);
    let mut trial = alpha.to_vec();
    trial[i] = a;
    if let Some(p) = player_profit(s, &[i], &trial, &quiet)? {
        if p > p_grid + 1e-9 * p_grid.abs().max(1.0) {
            return Ok(BestResponse {
                alpha: a,
                profit: p,
                from_mpec: true,
            });
        }
    }
    Ok(BestResponse {
        alpha: a_grid,
        profit: p_grid,
        from_mpec: false,
    })
}

/// Gauss-Seidel best-response iteration from `start`.
pub fn diagonalize(
    s: &Scenario,
    start: &ContractOffer,
    opts: &DiagonalizationOptions,
) -> Result<(DiagonalizationTrace, ContractOffer), VerifyError> {
    if !(opts.tol > 0.0) {
        return Err(VerifyError::Argument("tol must be positive".into()));
    }
    start.validate(s).map_err(EpecError::from)?;
    let mut alpha = start.alpha.clone();
    let mut trace = DiagonalizationTrace {
        sweeps: vec![alpha.clone()],
        converged: false,
        cycle_detected: false,
        accuracy: f64::INFINITY,
        failed: None,
    };
    for _ in 0..opts.max_sweeps {
        let prev = alpha.clone();
        for i in 0..s.dgs.len() {
            match best_response(s, i, &alpha, opts) {
                Ok(br) => alpha[i] = br.alpha,
                Err(e) => {
                    log::warn!("best response of {} failed: {e}", s.dgs[i].id);
                    trace.failed = Some(s.dgs[i].id.clone());
                    return Ok((trace, ContractOffer::new(alpha)));
                }
            }
        }
        trace.accuracy = max_diff(&alpha, &prev);
        let window_start = trace.sweeps.len().saturating_sub(opts.cycle_window);
        let revisits = trace.sweeps[window_start..trace.sweeps.len() - 1]
            .iter()
            .any(|old| max_diff(old, &alpha) <= opts.tol);
        trace.sweeps.push(alpha.clone());
        if trace.accuracy <= opts.tol {
            trace.converged = true;
            break;
        }
        if revisits {
            trace.cycle_detected = true;
            break;
        }
    }
    Ok((trace, ContractOffer::new(alpha)))
}

/// Profit of one DG over a price grid with rivals fixed.
#[derive(Clone, Debug, PartialEq)]
pub struct SweepCurve {
    pub dg: usize,
    pub alphas: Vec<f64>,
    /// `NaN` where the DisCo could not be solved.
    pub profits: Vec<f64>,
    pub feasible: Vec<bool>,
    /// Grid index of the equilibrium price.
    pub center: usize,
}

impl SweepCurve {
    /// Largest profit gain over the equilibrium point, relative to
    /// `max(|profit*|, 1)`.
    pub fn max_gain(&self) -> f64 {
        let base = self.profits[self.center];
        self.profits
            .iter()
            .zip(&self.feasible)
            .filter(|(_, f)| **f)
            .map(|(p, _)| (p - base) / base.abs().max(1.0))
            .fold(0.0, f64::max)
    }

    pub fn is_nash(&self, rel_tol: f64) -> bool {
        self.max_gain() <= rel_tol
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("alpha_eur_mwh,profit_eur\n");
        for (a, p) in self.alphas.iter().zip(&self.profits) {
            let _ = writeln!(out, "{a},{p}");
        }
        out
    }
}

/// Default sweep half-width (€/MWh).
pub const SWEEP_HALF_WIDTH: f64 = 5.0;
/// Default sweep step (€/MWh).
pub const SWEEP_STEP: f64 = 0.1;
/// Relative profit tolerance of the Nash test.
pub const NASH_TOL: f64 = 1e-3;

/// Re-dispatches the DisCo over `α*_dg ± half_width` and records the unit's
/// profit. The center point uses the equilibrium's own dispatch (at a price
/// kink the DisCo is indifferent there).
pub fn sweep_profit(
    s: &Scenario,
    eq: &EpecSolution,
    dg: usize,
    half_width: f64,
    step: f64,
    nlp: &NlpOptions,
) -> Result<SweepCurve, VerifyError> {
    if !(step > 0.0) || half_width < step {
        return Err(VerifyError::Argument(
            "need step > 0 and half_width >= step".into(),
        ));
    }
    if dg >= s.dgs.len() {
        return Err(VerifyError::Argument(format!("no DG with index {dg}")));
    }
    let n = (half_width / step).round() as i64;
    let a0 = eq.alpha.alpha[dg];
    let grid: Vec<f64> = (-n..=n).map(|k| a0 + k as f64 * step).collect();
    let quiet = NlpOptions {
        trace: None,
        ..nlp.clone()
    };
    let base = profit(s, &eq.alpha.alpha, &eq.disco.dispatch)[dg];
    let vals = par_map(&grid, |k, &a| -> Result<Option<f64>, VerifyError> {
        if k as i64 == n {
            return Ok(Some(base));
        }
        let mut alpha = eq.alpha.alpha.clone();
        alpha[dg] = a;
        if a < 0.0 {
            return Ok(None);
        }
        match solve_disco(s, &ContractOffer::new(alpha.clone()), &quiet) {
            Ok(sol) => Ok(Some(profit(s, &alpha, &sol.dispatch)[dg])),
            Err(DiscoError::Infeasible { .. }) | Err(DiscoError::NotSolved { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        }
    });
    let mut profits = Vec::with_capacity(grid.len());
    let mut feasible = Vec::with_capacity(grid.len());
    for v in vals {
        match v? {
            Some(p) => {
                profits.push(p);
                feasible.push(true);
            }
            None => {
                profits.push(f64::NAN);
                feasible.push(false);
            }
        }
    }
    Ok(SweepCurve {
        dg,
        alphas: grid,
        profits,
        feasible,
        center: n as usize,
    })
}

/// One compared quantity of [`resolve_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct ResolveItem {
    pub name: String,
    pub embedded: f64,
    pub resolved: f64,
    /// `|embedded - resolved| / max(|embedded|, |resolved|, 1)`.
    pub rel_diff: f64,
    pub pass: bool,
}

#[derive(Clone, Debug)]
pub struct ResolveReport {
    pub items: Vec<ResolveItem>,
    pub pass: bool,
    /// Set when the DisCo re-solve itself failed.
    pub failure: Option<String>,
}

impl ResolveReport {
    pub fn failures(&self) -> impl Iterator<Item = &ResolveItem> {
        self.items.iter().filter(|i| !i.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("item,embedded,resolved,rel_diff,pass\n");
        for i in &self.items {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{}",
                i.name, i.embedded, i.resolved, i.rel_diff, i.pass
            );
        }
        out
    }
}

/// Relative tolerance of the re-solve comparison.
pub const RESOLVE_TOL: f64 = 1e-3;

/// Amount (€/MWh) taken off every price before the re-solve. At an
/// equilibrium price equal to the unit's LMP the DisCo is indifferent; the
/// shift breaks the tie toward the dispatch the equilibrium assumes.
pub const TIE_BREAK: f64 = 1e-6;

/// Solves the DisCo afresh at the equilibrium prices and compares dispatch,
/// payments and profits with the values embedded in `eq`.
pub fn resolve_check(
    s: &Scenario,
    eq: &EpecSolution,
    nlp: &NlpOptions,
) -> Result<ResolveReport, VerifyError> {
    let shifted: Vec<f64> = eq.alpha.alpha.iter().map(|a| (a - TIE_BREAK).max(0.0)).collect();
    let mut o = nlp.clone();
    o.multistart = o.multistart.max(4);
    o.trace = None;
    let fresh = match solve_disco(s, &ContractOffer::new(shifted), &o) {
        Ok(f) => f,
        Err(e) => {
            return Ok(ResolveReport {
                items: vec![],
                pass: false,
                failure: Some(e.to_string()),
            })
        }
    };
    let mut items = Vec::new();
    let mut push = |name: String, a: f64, b: f64| {
        let rel = (a - b).abs() / a.abs().max(b.abs()).max(1.0);
        items.push(ResolveItem {
            name,
            embedded: a,
            resolved: b,
            rel_diff: rel,
            pass: rel <= RESOLVE_TOL,
        });
    };
    let emb = &eq.disco;
    for (t, p) in s.periods.iter().enumerate() {
        let tag = format!("t{}", p.index + 1);
        for (i, d) in s.dgs.iter().enumerate() {
            push(
                format!("p_dg[{}][{tag}]", d.id),
                emb.dispatch.p_dg[t][i],
                fresh.dispatch.p_dg[t][i],
            );
        }
        push(format!("p_sb[{tag}]"), emb.dispatch.p_sb[t], fresh.dispatch.p_sb[t]);
    }
    // fresh money at the unshifted prices
    let fresh_pay: Vec<f64> = (0..s.dgs.len())
        .map(|i| eq.alpha.alpha[i] * fresh.dg_energy[i])
        .collect();
    let emb_profit = profit(s, &eq.alpha.alpha, &emb.dispatch);
    let fresh_profit = profit(s, &eq.alpha.alpha, &fresh.dispatch);
    for (i, d) in s.dgs.iter().enumerate() {
        push(format!("energy[{}]", d.id), emb.dg_energy[i], fresh.dg_energy[i]);
        push(format!("payment[{}]", d.id), emb.dg_payments[i], fresh_pay[i]);
        push(format!("profit[{}]", d.id), emb_profit[i], fresh_profit[i]);
    }
    push(
        "market_payment".into(),
        emb.market_payment,
        fresh.market_payment,
    );
    push(
        "total_payment".into(),
        emb.market_payment + emb.dg_payments.iter().sum::<f64>(),
        fresh.market_payment + fresh_pay.iter().sum::<f64>(),
    );
    let pass = items.iter().all(|i| i.pass);
    Ok(ResolveReport {
        items,
        pass,
        failure: None,
    })
}
