//! Case runs and their reports: contract prices, payments, computation
//! details, and an audit of the arithmetic identities between them.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::disco::{solve_disco, ContractOffer, DiscoError, DiscoSolution};
use crate::epec::{
    dump, solve_epec, solve_single_owner, start_prices, EpecError, EpecOptions, EpecSolution,
};
use crate::model::{bundled, load_scenario, ModelError, Scenario, BUNDLED_NAMES};
use crate::nlp::NlpOptions;
use crate::verify::{
    diagonalize, resolve_check, sweep_profit, DiagonalizationOptions, VerifyError, NASH_TOL,
    SWEEP_HALF_WIDTH, SWEEP_STEP, TIE_BREAK,
};

/// Relative tolerance of [`audit`].
pub const AUDIT_TOL: f64 = 2e-3;

const RECONSTRUCTION_NOTE: &str =
    "reconstructed dataset: network data and load levels are reconstructions, not published values";

#[derive(Debug, Error)]
pub enum ReportError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Disco(#[from] DiscoError),
    #[error(transparent)]
    Epec(#[from] EpecError),
    #[error(transparent)]
    Verify(#[from] VerifyError),
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("malformed report, line {line}: {message}")]
    Parse { line: usize, message: String },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    Epec,
    Diagonalize,
    DiscoOnly,
    SingleOwner,
    Sweep,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Epec => "epec",
            Mode::Diagonalize => "diagonalize",
            Mode::DiscoOnly => "disco-only",
            Mode::SingleOwner => "single-owner",
            Mode::Sweep => "sweep",
        }
    }

    fn needs_dgs(self) -> bool {
        self != Mode::DiscoOnly
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ReportError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "epec" => Mode::Epec,
            "diagonalize" => Mode::Diagonalize,
            "disco-only" => Mode::DiscoOnly,
            "single-owner" => Mode::SingleOwner,
            "sweep" => Mode::Sweep,
            _ => return Err(ReportError::Config(format!("unknown mode {s:?}"))),
        })
    }
}

/// A bundled scenario name or a dataset file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ScenarioSource {
    Bundled(String),
    File(PathBuf),
}

impl ScenarioSource {
    /// Bundled names win over file paths.
    pub fn parse(s: &str) -> Self {
        if BUNDLED_NAMES.contains(&s.to_ascii_lowercase().as_str()) {
            ScenarioSource::Bundled(s.to_ascii_lowercase())
        } else {
            ScenarioSource::File(PathBuf::from(s))
        }
    }

    pub fn load(&self) -> Result<Scenario, ModelError> {
        match self {
            ScenarioSource::Bundled(n) => bundled(n),
            ScenarioSource::File(p) => load_scenario(p),
        }
    }

    pub fn name(&self) -> String {
        match self {
            ScenarioSource::Bundled(n) => n.clone(),
            ScenarioSource::File(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "scenario".into()),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    pub mode: Mode,
    pub epec: EpecOptions,
    /// Output directory; nothing is written when `None`.
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Write the per-iteration solver trace of the first start.
    pub trace: bool,
}

impl RunConfig {
    pub fn new(scenario: ScenarioSource, mode: Mode) -> Self {
        Self {
            scenario,
            mode,
            epec: EpecOptions::default(),
            out: None,
            seed: 0,
            trace: false,
        }
    }

    pub fn validate(&self, s: &Scenario) -> Result<(), ReportError> {
        self.epec.validate()?;
        if self.mode.needs_dgs() && s.dgs.is_empty() {
            return Err(ReportError::Config(format!(
                "mode {} needs at least one DG unit",
                self.mode
            )));
        }
        if self.trace && self.out.is_none() {
            return Err(ReportError::Config("--trace needs an output directory".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DgRow {
    pub id: String,
    pub cost: f64,
    pub alpha: f64,
    pub energy_mwh: f64,
    pub profit: f64,
    pub payment: f64,
}

/// Market purchases at one price level.
#[derive(Clone, Debug, PartialEq)]
pub struct MarketRow {
    pub price: f64,
    pub energy_mwh: f64,
    pub payment: f64,
}

/// Payment side of one dispatch (one column of the payment table).
#[derive(Clone, Debug, PartialEq)]
pub struct PaymentColumn {
    pub total_payment: f64,
    pub market_payment: f64,
    pub market: Vec<MarketRow>,
    pub annual_loss_mwh: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComputationDetails {
    pub variables: usize,
    pub constraints: usize,
    pub iterations: usize,
    pub cpu_seconds: f64,
    /// `C_pen` of the accepted point, or the final step of diagonalization.
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Check {
    pub name: String,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CaseReport {
    pub scenario: String,
    pub mode: String,
    pub note: String,
    pub dgs: Vec<DgRow>,
    pub with_dg: PaymentColumn,
    pub without_dg: Option<PaymentColumn>,
    pub computation: Option<ComputationDetails>,
    /// Equilibrium accepted, or diagonalization converged.
    pub accepted: bool,
    pub checks: Vec<Check>,
    /// Units whose prices are within 1e-6 of another unit's.
    pub ties: Vec<(String, String)>,
}

impl CaseReport {
    /// Exit criterion of a run: accepted and every verification passed.
    pub fn success(&self) -> bool {
        self.accepted && self.checks.iter().all(|c| c.pass)
    }
}

fn column(s: &Scenario, sol: &DiscoSolution) -> PaymentColumn {
    let mut market: Vec<MarketRow> = Vec::new();
    for (t, p) in s.periods.iter().enumerate() {
        let energy = p.hours * sol.dispatch.p_sb[t];
        let payment = energy * p.market_price;
        match market.iter_mut().find(|r| r.price == p.market_price) {
            Some(r) => {
                r.energy_mwh += energy;
                r.payment += payment;
            }
            None => market.push(MarketRow {
                price: p.market_price,
                energy_mwh: energy,
                payment,
            }),
        }
    }
    market.sort_by(|a, b| b.price.total_cmp(&a.price));
    PaymentColumn {
        total_payment: sol.objective,
        market_payment: sol.market_payment,
        market,
        annual_loss_mwh: sol.annual_loss_mwh,
    }
}

fn dg_rows(s: &Scenario, sol: &DiscoSolution) -> Vec<DgRow> {
    s.dgs
        .iter()
        .enumerate()
        .map(|(i, d)| {
            let a = sol.offer.alpha[i];
            let e = sol.dg_energy[i];
            DgRow {
                id: d.id.clone(),
                cost: d.cost,
                alpha: a,
                energy_mwh: e,
                profit: (a - d.cost) * e,
                payment: sol.dg_payments[i],
            }
        })
        .collect()
}

fn ties(rows: &[DgRow]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for i in 0..rows.len() {
        for j in i + 1..rows.len() {
            if (rows[i].alpha - rows[j].alpha).abs() < 1e-6 {
                out.push((rows[i].id.clone(), rows[j].id.clone()));
            }
        }
    }
    out
}

fn quiet(nlp: &NlpOptions) -> NlpOptions {
    NlpOptions {
        trace: None,
        multistart: 1,
        ..nlp.clone()
    }
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), ReportError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|source| ReportError::Io { path, source })
}

/// Runs the configured pipeline, writes its artifacts into `config.out`
/// and returns the report. A run that finds no equilibrium still returns
/// its report (with `accepted == false`) so the diagnostics get written.
pub fn run(config: &RunConfig) -> Result<CaseReport, ReportError> {
    let s = config.scenario.load()?;
    config.validate(&s)?;
    if let Some(dir) = &config.out {
        std::fs::create_dir_all(dir).map_err(|source| ReportError::Io {
            path: dir.clone(),
            source,
        })?;
    }
    let mut opts = config.epec.clone();
    opts.nlp.seed = config.seed;
    opts.nlp.trace = match (&config.out, config.trace) {
        (Some(dir), true) => Some(dir.join("trace.csv")),
        _ => None,
    };
    let q = quiet(&opts.nlp);
    let mut files: Vec<(String, String)> = Vec::new();
    let mut checks = Vec::new();

    let baseline = solve_disco(&s.without_dgs(), &ContractOffer::new(vec![]), &q)?;
    let (sol, accepted, computation) = match config.mode {
        Mode::DiscoOnly => {
            // units offer at cost
            let offer = ContractOffer::new(s.dgs.iter().map(|d| d.cost).collect());
            let timer = Instant::now();
            let sol = solve_disco(&s, &offer, &q)?;
            let comp = ComputationDetails {
                variables: 0,
                constraints: 0,
                iterations: sol.iters,
                cpu_seconds: timer.elapsed().as_secs_f64(),
                accuracy: sol.residual,
            };
            (sol, true, comp)
        }
        Mode::Diagonalize => {
            let d = DiagonalizationOptions {
                epec: opts.clone(),
                ..DiagonalizationOptions::default()
            };
            let timer = Instant::now();
            let start = ContractOffer::new(start_prices(&s, 0, config.seed));
            let (trace, offer) = diagonalize(&s, &start, &d)?;
            files.push(("diagonalization.csv".into(), trace.to_csv(&s)));
            // the converged prices sit where the DisCo is indifferent; the
            // dispatch is read just below them, the payments at them
            let shifted: Vec<f64> = offer.alpha.iter().map(|a| (a - TIE_BREAK).max(0.0)).collect();
            let mut sol = solve_disco(&s, &ContractOffer::new(shifted), &q)?;
            for (i, a) in offer.alpha.iter().enumerate() {
                sol.dg_payments[i] = a * sol.dg_energy[i];
            }
            sol.objective = sol.market_payment + sol.dg_payments.iter().sum::<f64>();
            sol.offer = offer.clone();
            let comp = ComputationDetails {
                variables: 0,
                constraints: 0,
                iterations: trace.sweeps.len().saturating_sub(1),
                cpu_seconds: timer.elapsed().as_secs_f64(),
                accuracy: trace.accuracy,
            };
            (sol, trace.converged, comp)
        }
        Mode::Epec | Mode::SingleOwner | Mode::Sweep => {
            let eq = if config.mode == Mode::SingleOwner {
                solve_single_owner(&s, &opts)?
            } else {
                solve_epec(&s, &opts)?
            };
            files.push(("equilibrium.txt".into(), dump(&s, &eq)));
            if eq.accepted() {
                verify_equilibrium(&s, &eq, config.mode, &q, &mut checks, &mut files)?;
            }
            let d = &eq.diagnostics;
            let comp = ComputationDetails {
                variables: d.n_vars,
                constraints: d.n_cons,
                iterations: d.iters,
                cpu_seconds: d.wall_seconds,
                accuracy: eq.c_pen,
            };
            (eq.disco.clone(), eq.accepted(), comp)
        }
    };

    let dgs = dg_rows(&s, &sol);
    let report = CaseReport {
        scenario: s.label.clone(),
        mode: config.mode.to_string(),
        note: RECONSTRUCTION_NOTE.into(),
        ties: ties(&dgs),
        dgs,
        with_dg: column(&s, &sol),
        without_dg: Some(column(&s, &baseline)),
        computation: Some(computation),
        accepted,
        checks,
    };
    if let Some(dir) = &config.out {
        write(dir, "prices.csv", &prices_table(&report))?;
        write(dir, "payments.csv", &payments_table(&report))?;
        write(dir, "computation.csv", &computation_table(&report))?;
        write(dir, "report.csv", &report.to_raw())?;
        for (name, text) in &files {
            write(dir, name, text)?;
        }
    }
    Ok(report)
}

fn verify_equilibrium(
    s: &Scenario,
    eq: &EpecSolution,
    mode: Mode,
    nlp: &NlpOptions,
    checks: &mut Vec<Check>,
    files: &mut Vec<(String, String)>,
) -> Result<(), ReportError> {
    let r = resolve_check(s, eq, nlp)?;
    checks.push(Check {
        name: "disco re-solve".into(),
        pass: r.pass,
    });
    files.push(("resolve.csv".into(), r.to_csv()));
    if mode == Mode::Sweep {
        for (i, d) in s.dgs.iter().enumerate() {
            let c = sweep_profit(s, eq, i, SWEEP_HALF_WIDTH, SWEEP_STEP, nlp)?;
            checks.push(Check {
                name: format!("deviation sweep {}", d.id),
                pass: c.is_nash(NASH_TOL),
            });
            files.push((format!("sweep_{}.csv", d.id), c.to_csv()));
        }
    }
    Ok(())
}

/// Price, energy and profit per unit, rounded like the published tables.
pub fn prices_table(r: &CaseReport) -> String {
    let mut out = format!("# {}\n# {}\n", r.scenario, r.note);
    out.push_str("dg,contract_price_eur_mwh,energy_mwh,profit_eur\n");
    for d in &r.dgs {
        let _ = writeln!(
            out,
            "{},{:.2},{:.0},{:.0}",
            d.id, d.alpha, d.energy_mwh, d.profit
        );
    }
    for (a, b) in &r.ties {
        let _ = writeln!(out, "# tie: {a} and {b} offer the same price");
    }
    out
}

/// Payments and losses with and without DG, rounded to whole euros.
pub fn payments_table(r: &CaseReport) -> String {
    let mut out = format!("# {}\n# {}\n", r.scenario, r.note);
    out.push_str("item,with_dg,without_dg\n");
    let base = r.without_dg.as_ref();
    let other = |f: &dyn Fn(&PaymentColumn) -> f64| {
        base.map(|c| format!("{:.0}", f(c))).unwrap_or_default()
    };
    let _ = writeln!(
        out,
        "energy_loss_mwh,{:.0},{}",
        r.with_dg.annual_loss_mwh,
        other(&|c| c.annual_loss_mwh)
    );
    let _ = writeln!(
        out,
        "total_payment_eur,{:.0},{}",
        r.with_dg.total_payment,
        other(&|c| c.total_payment)
    );
    for d in &r.dgs {
        let _ = writeln!(out, "payment_{}_eur,{:.0},", d.id, d.payment);
    }
    let _ = writeln!(
        out,
        "market_payment_eur,{:.0},{}",
        r.with_dg.market_payment,
        other(&|c| c.market_payment)
    );
    for m in &r.with_dg.market {
        let b = base
            .and_then(|c| c.market.iter().find(|x| x.price == m.price))
            .map(|x| format!("{:.0}", x.payment))
            .unwrap_or_default();
        let _ = writeln!(out, "market_payment_at_{:.2}_eur,{:.0},{}", m.price, m.payment, b);
    }
    out
}

/// Computation details; the only artifact with run-dependent timing.
pub fn computation_table(r: &CaseReport) -> String {
    let mut out = String::from("item,value\n");
    if let Some(c) = &r.computation {
        let _ = writeln!(out, "variables,{}", c.variables);
        let _ = writeln!(out, "constraints,{}", c.constraints);
        let _ = writeln!(out, "iterations,{}", c.iterations);
        let _ = writeln!(out, "cpu_seconds,{:.3}", c.cpu_seconds);
        let _ = writeln!(out, "accuracy,{:e}", c.accuracy);
    }
    let _ = writeln!(out, "accepted,{}", r.accepted);
    for c in &r.checks {
        let _ = writeln!(out, "check {},{}", c.name, c.pass);
    }
    out
}

impl CaseReport {
    /// Full-precision record read back by [`CaseReport::from_raw`].
    /// Timing is left out so reruns reproduce it byte for byte.
    pub fn to_raw(&self) -> String {
        let mut out = String::from("kind,key,values\n");
        let _ = writeln!(out, "meta,scenario,{}", self.scenario.replace(',', ";"));
        let _ = writeln!(out, "meta,mode,{}", self.mode);
        let _ = writeln!(out, "meta,accepted,{}", self.accepted);
        for d in &self.dgs {
            let _ = writeln!(
                out,
                "dg,{},{},{},{},{},{}",
                d.id, d.cost, d.alpha, d.energy_mwh, d.profit, d.payment
            );
        }
        let mut col = |tag: &str, c: &PaymentColumn| {
            let _ = writeln!(
                out,
                "{tag},totals,{},{},{}",
                c.total_payment, c.market_payment, c.annual_loss_mwh
            );
            for m in &c.market {
                let _ = writeln!(out, "{tag},market,{},{},{}", m.price, m.energy_mwh, m.payment);
            }
        };
        col("with_dg", &self.with_dg);
        if let Some(c) = &self.without_dg {
            col("without_dg", c);
        }
        out
    }

    pub fn from_raw(text: &str) -> Result<CaseReport, ReportError> {
        let mut r = CaseReport {
            scenario: String::new(),
            mode: String::new(),
            note: RECONSTRUCTION_NOTE.into(),
            dgs: Vec::new(),
            with_dg: empty_column(),
            without_dg: None,
            computation: None,
            accepted: false,
            checks: Vec::new(),
            ties: Vec::new(),
        };
        for (k, line) in text.lines().enumerate().skip(1) {
            let line_no = k + 1;
            let bad = |m: &str| ReportError::Parse {
                line: line_no,
                message: m.to_string(),
            };
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            let num = |i: usize| -> Result<f64, ReportError> {
                f.get(i)
                    .ok_or_else(|| bad("missing field"))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|_| bad(&format!("bad number in field {}", i + 1)))
            };
            match (f[0], f.get(1).copied().unwrap_or("")) {
                ("meta", "scenario") => r.scenario = f[2..].join(","),
                ("meta", "mode") => r.mode = f.get(2).unwrap_or(&"").to_string(),
                ("meta", "accepted") => r.accepted = f.get(2) == Some(&"true"),
                ("dg", id) => r.dgs.push(DgRow {
                    id: id.to_string(),
                    cost: num(2)?,
                    alpha: num(3)?,
                    energy_mwh: num(4)?,
                    profit: num(5)?,
                    payment: num(6)?,
                }),
                (tag @ ("with_dg" | "without_dg"), key) => {
                    let c = if tag == "with_dg" {
                        &mut r.with_dg
                    } else {
                        r.without_dg.get_or_insert_with(empty_column)
                    };
                    match key {
                        "totals" => {
                            c.total_payment = num(2)?;
                            c.market_payment = num(3)?;
                            c.annual_loss_mwh = num(4)?;
                        }
                        "market" => c.market.push(MarketRow {
                            price: num(2)?,
                            energy_mwh: num(3)?,
                            payment: num(4)?,
                        }),
                        _ => return Err(bad("unknown payment row")),
                    }
                }
                _ => return Err(bad("unknown row kind")),
            }
        }
        r.ties = ties(&r.dgs);
        Ok(r)
    }
}

fn empty_column() -> PaymentColumn {
    PaymentColumn {
        total_payment: 0.0,
        market_payment: 0.0,
        market: Vec::new(),
        annual_loss_mwh: 0.0,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Identity {
    pub name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub rel_err: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditResult {
    pub identities: Vec<Identity>,
}

impl AuditResult {
    pub fn pass(&self) -> bool {
        self.identities.iter().all(|i| i.pass)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("identity,computed,reported,rel_err,pass\n");
        for i in &self.identities {
            let _ = writeln!(
                out,
                "{},{},{},{:e},{}",
                i.name, i.lhs, i.rhs, i.rel_err, i.pass
            );
        }
        out
    }
}

/// `|a - b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let d = a.abs().max(b.abs());
    if d == 0.0 {
        0.0
    } else {
        (a - b).abs() / d
    }
}

/// Checks the report's own arithmetic: profit = (α − c)·E and
/// payment = α·E per unit, market payment = price·energy per price level,
/// market rows summing to the market payment, and the total payment being
/// market plus unit payments.
pub fn audit(r: &CaseReport) -> AuditResult {
    let mut ids = Vec::new();
    let mut push = |name: String, lhs: f64, rhs: f64| {
        let e = rel_err(lhs, rhs);
        ids.push(Identity {
            name,
            lhs,
            rhs,
            rel_err: e,
            pass: e <= AUDIT_TOL,
        });
    };
    for d in &r.dgs {
        push(
            format!("profit {}", d.id),
            (d.alpha - d.cost) * d.energy_mwh,
            d.profit,
        );
        push(format!("payment {}", d.id), d.alpha * d.energy_mwh, d.payment);
    }
    let dg_total: f64 = r.dgs.iter().map(|d| d.payment).sum();
    let mut columns = vec![("with DG", &r.with_dg, dg_total)];
    if let Some(c) = &r.without_dg {
        columns.push(("without DG", c, 0.0));
    }
    for (tag, c, dg) in columns {
        for m in &c.market {
            push(
                format!("market at {} ({tag})", m.price),
                m.price * m.energy_mwh,
                m.payment,
            );
        }
        if !c.market.is_empty() {
            push(
                format!("market rows sum ({tag})"),
                c.market.iter().map(|m| m.payment).sum(),
                c.market_payment,
            );
        }
        push(
            format!("total payment ({tag})"),
            c.market_payment + dg,
            c.total_payment,
        );
    }
    AuditResult { identities: ids }
}

/// Reads a `report.csv` and audits it.
pub fn audit_file(path: &Path) -> Result<AuditResult, ReportError> {
    let text = std::fs::read_to_string(path).map_err(|source| ReportError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(audit(&CaseReport::from_raw(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn case1_shaped() -> CaseReport {
        CaseReport {
            scenario: "case 1".into(),
            mode: "epec".into(),
            note: String::new(),
            dgs: vec![DgRow {
                id: "DG2".into(),
                cost: 60.0,
                alpha: 80.85,
                energy_mwh: 3504.0,
                profit: 73_083.0,
                payment: 80.85 * 3504.0,
            }],
            with_dg: PaymentColumn {
                total_payment: 3_707_643.0 + 80.85 * 3504.0,
                market_payment: 3_707_643.0,
                market: vec![
                    MarketRow {
                        price: 80.0,
                        energy_mwh: 1_000.0,
                        payment: 80_000.0,
                    },
                    MarketRow {
                        price: 50.0,
                        energy_mwh: 72_552.84,
                        payment: 3_627_642.0,
                    },
                ],
                annual_loss_mwh: 1.0,
            },
            without_dg: None,
            computation: None,
            accepted: true,
            checks: vec![],
            ties: vec![],
        }
    }

    #[test]
    fn rounding_level_differences_pass() {
        let a = audit(&case1_shaped());
        let p = &a.identities[0];
        assert!((p.lhs - 73_058.4).abs() < 1e-6);
        assert!((p.rel_err - 3.4e-4).abs() < 1e-5, "{}", p.rel_err);
        assert!(p.pass);
        let sum = a.identities.iter().find(|i| i.name.starts_with("market rows")).unwrap();
        assert_eq!(sum.lhs, 3_707_642.0);
        assert!(sum.pass);
        assert!(a.pass());
    }

    #[test]
    fn all_zero_report_passes() {
        let mut r = case1_shaped();
        r.dgs[0] = DgRow {
            id: "DG".into(),
            cost: 0.0,
            alpha: 0.0,
            energy_mwh: 0.0,
            profit: 0.0,
            payment: 0.0,
        };
        r.with_dg = PaymentColumn {
            total_payment: 0.0,
            market_payment: 0.0,
            market: vec![MarketRow {
                price: 0.0,
                energy_mwh: 0.0,
                payment: 0.0,
            }],
            annual_loss_mwh: 0.0,
        };
        assert!(audit(&r).pass());
    }

    #[test]
    fn wrong_profit_fails() {
        let mut r = case1_shaped();
        r.dgs[0].profit = 75_000.0;
        let a = audit(&r);
        assert!(!a.identities[0].pass);
        assert!(a.identities[1].pass);
    }

    #[test]
    fn raw_round_trip() {
        let r = case1_shaped();
        let back = CaseReport::from_raw(&r.to_raw()).unwrap();
        assert_eq!(back.dgs, r.dgs);
        assert_eq!(back.with_dg, r.with_dg);
        assert_eq!(back.mode, "epec");
    }

    #[test]
    fn mode_names() {
        for m in ["epec", "diagonalize", "disco-only", "single-owner", "sweep"] {
            assert_eq!(m.parse::<Mode>().unwrap().as_str(), m);
        }
        assert!("nash".parse::<Mode>().is_err());
    }
}
