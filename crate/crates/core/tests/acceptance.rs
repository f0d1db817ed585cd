//! Acceptance suite. Runs every criterion, prints one line per criterion
//! and exits nonzero when any of them fails.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use dgprice::disco::{solve_disco, ContractOffer, DiscoSolution};
use dgprice::epec::{
    build_epec_nlp, build_single_owner_nlp, player_profit, solve_epec, solve_single_owner,
    EpecOptions, EpecSolution,
};
use dgprice::model::{build_3bus, bundled, load_scenario, Scenario};
use dgprice::nlp::{solve, NlpOptions, NlpProblem, QuadExpr, QuadNlpBuilder};
use dgprice::powerflow::{flow_derivatives, line_flow, mismatch_jacobian, outflows};
use dgprice::report::{audit, CaseReport, DgRow, MarketRow, PaymentColumn};
use dgprice::verify::{
    diagonalize, resolve_check, sweep_profit, DiagonalizationOptions, NASH_TOL, SWEEP_HALF_WIDTH,
    SWEEP_STEP,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn data(name: &str) -> Scenario {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name);
    load_scenario(&p).unwrap()
}

/// An equilibrium computed once and shared by the criteria that inspect it.
struct Solved {
    name: String,
    s: Scenario,
    sol: EpecSolution,
}

fn equilibria() -> Vec<Solved> {
    let quick = EpecOptions {
        multistart: 1,
        ..EpecOptions::default()
    };
    let mut out = Vec::new();
    let mut push = |name: &str, s: Scenario, o: &EpecOptions| {
        let sol = solve_epec(&s, o).unwrap();
        out.push(Solved {
            name: name.to_string(),
            s,
            sol,
        });
    };
    push("3bus", build_3bus(), &EpecOptions::default());
    push("6bus", data("6bus.txt"), &EpecOptions::default());
    push("owner3bus", data("owner3bus.txt"), &EpecOptions::default());
    for c in ["34bus-case1", "34bus-case2", "34bus-case3", "34bus-case4"] {
        push(c, bundled(c).unwrap(), &quick);
    }
    out
}

// ---------------------------------------------------------------------------
// 1. arithmetic identities of the reference case figures

const MARKET_PRICES: [f64; 5] = [80.0, 70.8, 62.0, 50.0, 41.0];

fn dg(id: &str, cost: f64, alpha: f64, energy: f64, profit: f64, payment: f64) -> DgRow {
    DgRow {
        id: id.to_string(),
        cost,
        alpha,
        energy_mwh: energy,
        profit,
        payment,
    }
}

/// Market rows are given as payments; energy is payment over price.
fn column(total: f64, market: f64, rows: [f64; 5], loss: f64) -> PaymentColumn {
    PaymentColumn {
        total_payment: total,
        market_payment: market,
        market: MARKET_PRICES
            .iter()
            .zip(rows)
            .map(|(&price, payment)| MarketRow {
                price,
                energy_mwh: payment / price,
                payment,
            })
            .collect(),
        annual_loss_mwh: loss,
    }
}

fn case(name: &str, dgs: Vec<DgRow>, with_dg: PaymentColumn, without: Option<PaymentColumn>) -> CaseReport {
    CaseReport {
        scenario: name.to_string(),
        mode: "reference".to_string(),
        note: String::new(),
        dgs,
        with_dg,
        without_dg: without,
        computation: None,
        accepted: true,
        checks: Vec::new(),
        ties: Vec::new(),
    }
}

fn reference_reports() -> Vec<(CaseReport, bool)> {
    let no_dg = column(
        4_348_877.0,
        4_348_877.0,
        [1_545_991.0, 1_068_729.0, 748_666.0, 553_462.0, 432_028.0],
        4_721.0,
    );
    // the 3-bus table gives prices, payments and totals; profits follow
    // from the prices
    let three_bus = case(
        "3bus",
        vec![
            dg("DG1", 60.0, 60.68, 8760.0, 0.68 * 8760.0, 531_556.8),
            dg("DG2", 60.0, 61.01, 8760.0, 1.01 * 8760.0, 534_447.6),
        ],
        PaymentColumn {
            total_payment: 3_173_660.4,
            market_payment: 2_107_656.0,
            market: Vec::new(),
            annual_loss_mwh: 0.0,
        },
        None,
    );
    let case1 = case(
        "case 1",
        vec![
            dg("DG1", 60.0, 79.53, 3504.0, 68_433.0, 278_539.0),
            dg("DG2", 60.0, 80.85, 3504.0, 73_083.0, 283_298.0),
        ],
        column(
            4_269_480.0,
            3_707_643.0,
            [1_196_165.0, 777_321.0, 748_666.0, 553_462.0, 432_028.0],
            3_239.0,
        ),
        Some(no_dg.clone()),
    );
    let case2 = case(
        "case 2",
        vec![
            dg("DG1", 70.0, 94.65, 1752.0, 43_186.0, 165_827.0),
            dg("DG2", 60.0, 83.64, 3504.0, 82_834.0, 293_074.0),
        ],
        column(
            4_308_010.0,
            3_849_107.0,
            [1_196_165.0, 918_786.0, 748_666.0, 553_462.0, 432_028.0],
            3_487.0,
        ),
        Some(no_dg.clone()),
    );
    let case3 = case(
        "case 3",
        vec![
            dg("DG1", 60.0, 77.56, 3504.0, 61_530.0, 271_770.0),
            dg("DG2", 60.0, 78.82, 3504.0, 65_924.0, 276_185.0),
            dg("DG3", 60.0, 76.44, 3504.0, 57_605.0, 267_846.0),
        ],
        column(
            4_227_813.0,
            3_412_012.0,
            [1_036_247.0, 641_609.0, 748_666.0, 553_461.0, 432_028.0],
            0.0,
        ),
        None,
    );
    let case4 = case(
        "case 4",
        vec![
            dg("DG1", 60.0, 75.22, 3504.0, 53_331.0, 263_291.0),
            dg("DG2", 60.0, 75.87, 3504.0, 55_608.0, 265_849.0),
            dg("DG3", 60.0, 74.58, 3504.0, 51_088.0, 261_328.0),
            dg("DG4", 60.0, 75.82, 3504.0, 55_433.0, 265_673.0),
        ],
        column(
            4_170_388.0,
            3_114_247.0,
            [873_984.0, 506_107.0, 748_666.0, 553_461.0, 432_028.0],
            0.0,
        ),
        None,
    );
    // single owner: prices and profits only, energies inferred from the
    // dispatch pattern of case 2
    let owner = case(
        "single owner",
        vec![
            dg("DG1", 60.0, 94.65, 1752.0, 60_707.0, 94.65 * 1752.0),
            dg("DG2", 60.0, 83.64, 3504.0, 82_834.0, 83.64 * 3504.0),
        ],
        column(0.0, 0.0, [0.0; 5], 0.0),
        None,
    );
    vec![
        (three_bus, true),
        (case1, true),
        (case2, true),
        (case3, true),
        (case4, true),
        (owner, false),
    ]
}

fn criterion_1() -> Outcome {
    let mut checked = 0;
    for (r, full) in reference_reports() {
        let a = audit(&r);
        for id in &a.identities {
            let relevant = full || id.name.starts_with("profit");
            if !relevant {
                continue;
            }
            ensure!(id.pass, "{}: {} ({} vs {}, rel {:.2e})", r.scenario, id.name, id.lhs, id.rhs, id.rel_err);
            checked += 1;
        }
    }
    ensure!(((79.53f64 - 60.0) * 3504.0 - 68_433.12).abs() < 1e-6, "profit example");
    ensure!(((94.65f64 - 70.0) * 1752.0 - 43_186.8).abs() < 1e-6, "profit example");
    Ok(format!("{checked} identities within 0.2%"))
}

// ---------------------------------------------------------------------------
// 2. energy bookkeeping on the 34-bus feeder

fn criterion_2() -> Outcome {
    let s = bundled("34bus-case1").unwrap();
    ensure!(s.periods.len() == 5 && s.periods.iter().all(|p| p.hours == 1752.0), "period layout");
    let beta: Vec<f64> = s.periods.iter().map(|p| p.market_price).collect();
    ensure!(beta == MARKET_PRICES.to_vec(), "market prices {beta:?}");
    for alpha in [73.0, 75.0] {
        let sol = solve_disco(&s, &ContractOffer::new(vec![alpha; 2]), &NlpOptions::default()).unwrap();
        for (i, e) in sol.dg_energy.iter().enumerate() {
            let on: Vec<bool> = sol.dispatch.p_dg.iter().map(|p| p[i] > 0.5).collect();
            ensure!(on == vec![true, true, false, false, false], "DG{} at {alpha}: {on:?}", i + 1);
            ensure!((e - 3504.0).abs() <= 1e-6, "DG{} at {alpha}: {e} MWh", i + 1);
        }
    }
    Ok("3504 MWh in the two dearest periods".into())
}

// ---------------------------------------------------------------------------
// 3. 3-bus end to end

fn baseline(s: &Scenario) -> DiscoSolution {
    solve_disco(&s.without_dgs(), &ContractOffer::new(vec![]), &NlpOptions::default()).unwrap()
}

fn criterion_3() -> Outcome {
    let s = build_3bus();
    let t = Instant::now();
    let sol = solve_epec(&s, &EpecOptions::default()).unwrap();
    let secs = t.elapsed().as_secs_f64();
    ensure!(sol.accepted(), "not accepted");
    for e in &sol.disco.dg_energy {
        ensure!((e - 8760.0).abs() <= 1e-6, "energy {e}");
    }
    let a = &sol.alpha.alpha;
    ensure!(s.dgs[0].cost <= a[0] && a[0] < a[1], "ordering {a:?}");
    let base = baseline(&s).objective;
    ensure!(sol.disco.objective < base, "payment {} vs {base}", sol.disco.objective);
    // the bundled impedance scale settles the calibration, so the prices
    // are gated against the reference figures
    ensure!((a[0] - 60.68).abs() <= 0.5 && (a[1] - 61.01).abs() <= 0.5, "prices {a:?}");
    ensure!(secs < 5.0, "took {secs:.2} s");
    Ok(format!(
        "alpha {:.4}/{:.4}, payment {:.1} < {:.1}, {:.2} s",
        a[0], a[1], sol.disco.objective, base, secs
    ))
}

// ---------------------------------------------------------------------------
// 4. complementarity at accepted solutions

fn criterion_4(eqs: &[Solved]) -> Outcome {
    let mut n = 0;
    for e in eqs {
        ensure!(e.sol.accepted(), "{} not accepted", e.name);
        ensure!(e.sol.c_pen <= 1e-6, "{}: c_pen {:.2e}", e.name, e.sol.c_pen);
        ensure!(e.sol.max_product <= 1e-8, "{}: product {:.2e}", e.name, e.sol.max_product);
        for a in e.sol.diagnostics.attempts.iter().filter(|a| a.accepted) {
            ensure!(a.c_pen <= 1e-6, "{} start {}: c_pen {:.2e}", e.name, a.start_id, a.c_pen);
            n += 1;
        }
    }
    Ok(format!("{} scenarios, {n} accepted attempts", eqs.len()))
}

// ---------------------------------------------------------------------------
// 5. diagonalization against the stacked solve

fn criterion_5(eqs: &[Solved]) -> Outcome {
    let mut worst: f64 = 0.0;
    for e in eqs.iter().filter(|e| e.name == "3bus" || e.name == "6bus") {
        let start: Vec<f64> = e.s.dgs.iter().map(|d| d.cost + 0.5).collect();
        let (trace, offer) =
            diagonalize(&e.s, &ContractOffer::new(start), &DiagonalizationOptions::default()).unwrap();
        ensure!(trace.converged, "{}: diagonalization did not converge", e.name);
        for (a, b) in offer.alpha.iter().zip(&e.sol.alpha.alpha) {
            worst = worst.max((a - b).abs());
            ensure!((a - b).abs() <= 1e-3, "{}: {a} vs {b}", e.name);
        }
    }
    Ok(format!("max difference {worst:.1e} EUR/MWh"))
}

// ---------------------------------------------------------------------------
// 6. profit sweeps

fn criterion_6(eqs: &[Solved]) -> Outcome {
    let nlp = NlpOptions::default();
    let mut n = 0;
    for e in eqs {
        for i in 0..e.s.dgs.len() {
            let c = sweep_profit(&e.s, &e.sol, i, SWEEP_HALF_WIDTH, SWEEP_STEP, &nlp).unwrap();
            ensure!(c.is_nash(NASH_TOL), "{} DG{}: gain {:.2e}", e.name, i + 1, c.max_gain());
            n += 1;
        }
    }
    Ok(format!("{n} sweeps peak at the equilibrium"))
}

// ---------------------------------------------------------------------------
// 7. DisCo re-solve

fn criterion_7(eqs: &[Solved]) -> Outcome {
    let nlp = NlpOptions::default();
    for e in eqs {
        let r = resolve_check(&e.s, &e.sol, &nlp).unwrap();
        let failed: Vec<&str> = r.failures().map(|i| i.name.as_str()).collect();
        ensure!(r.pass, "{}: {failed:?} {:?}", e.name, r.failure);
    }
    Ok(format!("{} equilibria re-solved", eqs.len()))
}

// ---------------------------------------------------------------------------
// 8. single owner against competition

fn criterion_8(eqs: &[Solved]) -> Outcome {
    let nlp = NlpOptions::default();
    let mut notes = Vec::new();
    for e in eqs.iter().filter(|e| ["3bus", "6bus", "owner3bus"].contains(&e.name.as_str())) {
        let o = EpecOptions::default();
        let own = solve_single_owner(&e.s, &o).unwrap();
        ensure!(own.accepted(), "{}: single owner not accepted", e.name);
        let total = |v: &[f64]| v.iter().sum::<f64>();
        let (po, pc) = (total(&own.profits), total(&e.sol.profits));
        ensure!(po >= pc - 1e-6 * pc.abs().max(1.0), "{}: owner profit {po} < {pc}", e.name);
        let (mo, mc) = (own.disco.objective, e.sol.disco.objective);
        ensure!(mo >= mc - 1e-6 * mc, "{}: owner payment {mo} < {mc}", e.name);
        // each unit in turn moves back to its competitive price, the other
        // owner prices fixed
        let mut best: Option<f64> = None;
        for i in 0..e.s.dgs.len() {
            let comp = e.sol.alpha.alpha[i];
            if (own.alpha.alpha[i] - comp).abs() <= 1e-3 {
                continue;
            }
            let mut dev = own.alpha.alpha.clone();
            dev[i] = comp;
            let Some(p) = player_profit(&e.s, &[i], &dev, &nlp).unwrap() else {
                continue;
            };
            let g = (p - own.profits[i]) / own.profits[i].abs().max(1.0);
            best = Some(best.map_or(g, |b: f64| b.max(g)));
        }
        match best {
            Some(g) => {
                ensure!(g > 1e-9, "{}: no unit gains by returning to its competitive price", e.name);
                notes.push(format!(
                    "{} owner profit {:+.3}%, deviation gain {:.2}%",
                    e.name,
                    100.0 * (po / pc - 1.0),
                    100.0 * g
                ));
            }
            None => notes.push(format!("{} owner keeps the competitive prices", e.name)),
        }
    }
    Ok(notes.join("; "))
}

// ---------------------------------------------------------------------------
// 9. numerical kernels

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-6 * a.abs().max(b.abs()).max(1.0)
}

fn central(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-6 * x[i].abs().max(1.0);
    let (mut a, mut b) = (x.to_vec(), x.to_vec());
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

fn dense(structure: &[(usize, usize)], vals: &[f64], rows: usize, cols: usize) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; cols]; rows];
    for (&(r, c), v) in structure.iter().zip(vals) {
        m[r][c] += v;
    }
    m
}

/// Gradient, constraint Jacobians and (when present) the Lagrangian
/// Hessian against central differences.
fn check_problem(p: &dyn NlpProblem, x: &[f64], rng: &mut ChaCha8Rng) -> Result<usize, String> {
    let n = p.n();
    let mut checked = 0;
    let mut g = vec![0.0; n];
    p.gradient(x, &mut g);
    for i in 0..n {
        let d = central(&|y| p.objective(y), x, i);
        ensure!(close(g[i], d), "d obj/d {}: {} vs {d}", p.var_name(i), g[i]);
        checked += 1;
    }
    let (me, mi) = (p.n_eq(), p.n_ineq());
    let mut ve = vec![0.0; p.eq_jacobian_structure().len()];
    p.eq_jacobian_values(x, &mut ve);
    let je = dense(p.eq_jacobian_structure(), &ve, me, n);
    let mut vi = vec![0.0; p.ineq_jacobian_structure().len()];
    p.ineq_jacobian_values(x, &mut vi);
    let ji = dense(p.ineq_jacobian_structure(), &vi, mi, n);
    let eq_row = |y: &[f64], r: usize| {
        let mut c = vec![0.0; me];
        p.eq_values(y, &mut c);
        c[r]
    };
    let in_row = |y: &[f64], r: usize| {
        let mut c = vec![0.0; mi];
        p.ineq_values(y, &mut c);
        c[r]
    };
    for r in 0..me {
        for c in 0..n {
            let d = central(&|y| eq_row(y, r), x, c);
            ensure!(close(je[r][c], d), "{} / {}: {} vs {d}", p.eq_name(r), p.var_name(c), je[r][c]);
            checked += 1;
        }
    }
    for r in 0..mi {
        for c in 0..n {
            let d = central(&|y| in_row(y, r), x, c);
            ensure!(close(ji[r][c], d), "{} / {}: {} vs {d}", p.ineq_name(r), p.var_name(c), ji[r][c]);
            checked += 1;
        }
    }
    if let Some(hs) = p.hessian_structure() {
        let hs = hs.to_vec();
        let we: Vec<f64> = (0..me).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let wi: Vec<f64> = (0..mi).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut hv = vec![0.0; hs.len()];
        p.hessian_values(x, 1.0, &we, &wi, &mut hv);
        let mut h = vec![vec![0.0; n]; n];
        for (&(r, c), v) in hs.iter().zip(&hv) {
            h[r][c] += v;
            if r != c {
                h[c][r] += v;
            }
        }
        // gradient of f + Σ we·c + Σ wi·g, assembled from first derivatives
        let lag_grad = |y: &[f64]| {
            let mut g = vec![0.0; n];
            p.gradient(y, &mut g);
            let mut ve = vec![0.0; p.eq_jacobian_structure().len()];
            p.eq_jacobian_values(y, &mut ve);
            for (&(r, c), v) in p.eq_jacobian_structure().iter().zip(&ve) {
                g[c] += we[r] * v;
            }
            let mut vi = vec![0.0; p.ineq_jacobian_structure().len()];
            p.ineq_jacobian_values(y, &mut vi);
            for (&(r, c), v) in p.ineq_jacobian_structure().iter().zip(&vi) {
                g[c] += wi[r] * v;
            }
            g
        };
        for c in 0..n {
            let hstep = 1e-6 * x[c].abs().max(1.0);
            let (mut a, mut b) = (x.to_vec(), x.to_vec());
            a[c] += hstep;
            b[c] -= hstep;
            let (ga, gb) = (lag_grad(&a), lag_grad(&b));
            for r in 0..n {
                let d = (ga[r] - gb[r]) / (2.0 * hstep);
                ensure!(close(h[r][c], d), "hessian {} / {}: {} vs {d}", p.var_name(r), p.var_name(c), h[r][c]);
                checked += 1;
            }
        }
    }
    Ok(checked)
}

fn criterion_9() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut checked = 0;

    // line flows
    for _ in 0..50 {
        let (vf, vt, z) = (rng.gen_range(0.8..1.2), rng.gen_range(0.8..1.2), rng.gen_range(0.01..2.0));
        let d = flow_derivatives(vf, vt, z);
        let f = |x: &[f64]| line_flow(x[0], x[1], z);
        let df = |x: &[f64]| flow_derivatives(x[0], x[1], z).d_from;
        let dt = |x: &[f64]| flow_derivatives(x[0], x[1], z).d_to;
        let x = [vf, vt];
        ensure!(close(d.d_from, central(&f, &x, 0)), "d_from");
        ensure!(close(d.d_to, central(&f, &x, 1)), "d_to");
        ensure!(close(d.d2_from_from, central(&df, &x, 0)), "d2_from_from");
        ensure!(close(d.d2_from_to, central(&df, &x, 1)), "d2_from_to");
        ensure!(close(d.d2_to_to, central(&dt, &x, 1)), "d2_to_to");
        checked += 5;
    }

    // bus outflow Jacobian of the 34-bus feeder
    let net = bundled("34bus").unwrap().network;
    let v: Vec<f64> = (0..net.n_buses()).map(|_| rng.gen_range(0.9..1.1)).collect();
    let j = mismatch_jacobian(&net, &v);
    for m in 0..v.len() {
        for k in 0..v.len() {
            let d = central(&|y| outflows(&net, y)[k], &v, m);
            ensure!(close(j[k][m], d), "outflow jacobian [{k}][{m}]: {} vs {d}", j[k][m]);
            checked += 1;
        }
    }

    // stacked game programs: C_pen gradient, follower and stationarity rows
    let s = build_3bus();
    let o = EpecOptions::default();
    for p in [build_epec_nlp(&s, &o).unwrap(), build_single_owner_nlp(&s, &o).unwrap()] {
        for _ in 0..2 {
            let x: Vec<f64> = (0..p.nlp.n()).map(|_| rng.gen_range(0.5..1.5)).collect();
            checked += check_problem(&p.nlp, &x, &mut rng)?;
        }
    }

    // closed-form QP: min ½‖x − c‖² s.t. Σx = 1
    let c = [0.1, 0.4, 0.3, 0.5];
    let mut b = QuadNlpBuilder::new();
    let xs: Vec<usize> = (0..4).map(|i| b.add_var(format!("x{i}"), f64::NEG_INFINITY, f64::INFINITY)).collect();
    let mut sum = QuadExpr::constant(-1.0);
    for (&x, ci) in xs.iter().zip(c) {
        b.objective_mut().add_quad(x, x, 0.5);
        b.objective_mut().add_lin(x, -ci);
        sum.add_lin(x, 1.0);
    }
    b.add_eq("sum", sum);
    let qp = b.build();
    let r = solve(&qp, &NlpOptions::default(), None).unwrap();
    ensure!(r.status.is_solved(), "QP status {:?}", r.status);
    let shift = (c.iter().sum::<f64>() - 1.0) / 4.0;
    for (k, ci) in c.iter().enumerate() {
        ensure!((r.x[k] - (ci - shift)).abs() <= 1e-8, "QP x{k}: {} vs {}", r.x[k], ci - shift);
    }
    Ok(format!("{checked} derivative entries, QP exact to 1e-8"))
}

// ---------------------------------------------------------------------------
// 10. losses fall with DG

fn criterion_10(eqs: &[Solved]) -> Outcome {
    let mut notes = Vec::new();
    let mut cases: Vec<(String, Scenario, DiscoSolution)> = eqs
        .iter()
        .filter(|e| e.name == "3bus" || e.name.starts_with("34bus"))
        .map(|e| (e.name.clone(), e.s.clone(), e.sol.disco.clone()))
        .collect();
    let ow = bundled("ow1").unwrap();
    let own = solve_single_owner(&ow, &EpecOptions { multistart: 1, ..EpecOptions::default() }).unwrap();
    ensure!(own.accepted(), "ow1 not accepted");
    cases.push(("ow1".into(), ow, own.disco));
    for (name, s, sol) in cases {
        ensure!(sol.dg_energy.iter().sum::<f64>() > 0.0, "{name}: no DG dispatched");
        let base = baseline(&s).annual_loss_mwh;
        ensure!(sol.annual_loss_mwh < base, "{name}: loss {} >= {base}", sol.annual_loss_mwh);
        notes.push(format!("{name} {:+.1}%", 100.0 * (sol.annual_loss_mwh / base - 1.0)));
    }
    Ok(notes.join(", "))
}

fn run(n: usize, desc: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t = Instant::now();
    let r = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panic: {msg}"))
    });
    let secs = t.elapsed().as_secs_f64();
    match &r {
        Ok(m) => println!("criterion {n}: PASS {desc} ({m}; {secs:.1} s)"),
        Err(m) => println!("criterion {n}: FAIL {desc} ({m}; {secs:.1} s)"),
    }
    r.is_ok()
}

fn main() -> ExitCode {
    let mut ok = true;
    ok &= run(1, "arithmetic identities of the reference tables", criterion_1);
    ok &= run(2, "energy bookkeeping over five equal periods", criterion_2);
    ok &= run(3, "3-bus equilibrium end to end", criterion_3);
    let eqs = match catch_unwind(equilibria) {
        Ok(e) => e,
        Err(_) => {
            for n in [4, 5, 6, 7, 8, 10] {
                println!("criterion {n}: FAIL equilibria could not be computed");
            }
            run(9, "derivatives and closed-form QP", criterion_9);
            return ExitCode::FAILURE;
        }
    };
    ok &= run(4, "complementarity at accepted solutions", || criterion_4(&eqs));
    ok &= run(5, "diagonalization agrees with the stacked solve", || criterion_5(&eqs));
    ok &= run(6, "no profitable deviation within 5 EUR/MWh", || criterion_6(&eqs));
    ok &= run(7, "embedded and re-solved dispatch agree", || criterion_7(&eqs));
    ok &= run(8, "single owner against competition", || criterion_8(&eqs));
    ok &= run(9, "derivatives and closed-form QP", criterion_9);
    ok &= run(10, "losses below the no-DG case", || criterion_10(&eqs));
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
