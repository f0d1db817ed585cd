use dgprice::disco::{kkt_check, solve_disco, ContractOffer, Dispatch, LowerOptions};
use dgprice::epec::{
    build_epec_nlp, build_mpec, build_single_owner_nlp, profit, solve_epec, solve_single_owner,
    EpecOptions,
};
use dgprice::model::{build_3bus, bundled, parse_scenario, Scenario};
use dgprice::nlp::{NlpOptions, NlpProblem};
use dgprice::powerflow::VoltageProfile;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn no_line_limits() -> EpecOptions {
    EpecOptions {
        lower: LowerOptions { line_limits: false },
        ..EpecOptions::default()
    }
}

/// Three buses in a row with the substation in the middle and identical
/// units at both ends.
fn symmetric_3bus() -> Scenario {
    parse_scenario(
        "[network]
label = symmetric 3-bus
base_mva = 10.0
impedance_scale = 0.025

[substation]
bus = 2
p_min = 0.0
p_max = 4.0

[bus]
1 0.9 1.05
2 0.9 1.05
3 0.9 1.05

[line]
1 2 1.2 1.0
2 3 1.2 1.0

[dg]
DG1 1 0.0 1.0 60.0
DG2 3 0.0 1.0 60.0

[period]
8760.0 60.0 0.2 0.2 0.2
",
    )
    .unwrap()
}

fn central_diff(f: &dyn Fn(&[f64]) -> f64, x: &[f64], i: usize) -> f64 {
    let h = 1e-6 * x[i].abs().max(1.0);
    let (mut a, mut b) = (x.to_vec(), x.to_vec());
    a[i] += h;
    b[i] -= h;
    (f(&a) - f(&b)) / (2.0 * h)
}

/// Compares the gradient of C_pen and the Jacobian of every equality row
/// (stationarity blocks included) with central differences.
fn check_derivatives(p: &dyn NlpProblem, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = p.n();
    let x: Vec<f64> = (0..n).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut g = vec![0.0; n];
    p.gradient(&x, &mut g);
    let f = |y: &[f64]| p.objective(y);
    for i in 0..n {
        let d = central_diff(&f, &x, i);
        assert!((g[i] - d).abs() <= 1e-6 * d.abs().max(1.0), "dC/dx{i}: {} vs {d}", g[i]);
    }
    let m = p.n_eq();
    let structure = p.eq_jacobian_structure().to_vec();
    let mut vals = vec![0.0; structure.len()];
    p.eq_jacobian_values(&x, &mut vals);
    let mut jac = vec![vec![0.0; n]; m];
    for (&(r, c), v) in structure.iter().zip(&vals) {
        jac[r][c] += v;
    }
    for r in 0..m {
        let row = |y: &[f64]| {
            let mut c = vec![0.0; m];
            p.eq_values(y, &mut c);
            c[r]
        };
        for c in 0..n {
            let d = central_diff(&row, &x, c);
            assert!(
                (jac[r][c] - d).abs() <= 1e-6 * d.abs().max(1.0),
                "row {} var {}: {} vs {d}",
                p.eq_name(r),
                p.var_name(c),
                jac[r][c]
            );
        }
    }
}

#[test]
fn epec_derivatives_match_finite_differences() {
    let s = build_3bus();
    let g = build_epec_nlp(&s, &EpecOptions::default()).unwrap();
    for seed in 0..3 {
        check_derivatives(&g.nlp, seed);
    }
    let o = build_single_owner_nlp(&s, &no_line_limits()).unwrap();
    check_derivatives(&o.nlp, 7);
}

#[test]
fn three_bus_sizes() {
    let s = build_3bus();
    let o = no_line_limits();
    let g = build_epec_nlp(&s, &o).unwrap();
    assert_eq!(g.nlp.n(), 149);
    assert_eq!(g.nlp.n_eq(), 89);
    assert_eq!(g.layout.s_all().len(), 12);

    let m = build_mpec(&s, 0, &ContractOffer::new(vec![60.0, 61.0]), &o).unwrap();
    assert_eq!(m.comp_pairs.len(), 12);
    // V (3) + P_dg (2) + P_sb, balance duals (3), μ and s (12 each), α
    assert_eq!(m.vars.n_vars(), 3 + 2 + 1 + 3 + 12 + 12 + 1);
}

#[test]
fn follower_block_vanishes_at_disco_solution() {
    let s = bundled("34bus-case1").unwrap();
    let offer = ContractOffer::new(vec![75.0, 81.0]);
    let sol = solve_disco(&s, &offer, &NlpOptions::default()).unwrap();
    let m = build_mpec(&s, 1, &offer, &EpecOptions::default()).unwrap();
    let mut x = m.start_from_disco(&s, &sol);
    x[m.layout.alpha[1].unwrap()] = 81.0;
    assert!(m.follower_residual(&x) <= 1e-6, "{}", m.follower_residual(&x));
    for &(sv, mv) in &m.comp_pairs {
        assert!(x[sv] >= -1e-12 && x[mv] >= -1e-12);
        assert!(x[sv].min(x[mv]) <= 1e-5, "{} {}", x[sv], x[mv]);
    }
}

#[test]
fn c_pen_is_zero_when_products_vanish() {
    let s = build_3bus();
    let g = build_epec_nlp(&s, &EpecOptions::default()).unwrap();
    assert_eq!(g.c_pen(&vec![0.0; g.nlp.n()]), 0.0);
}

#[test]
fn three_bus_equilibrium() {
    let s = build_3bus();
    let sol = solve_epec(&s, &EpecOptions::default()).unwrap();
    assert!(sol.accepted());
    let a = &sol.alpha.alpha;
    assert!(60.0 <= a[0] && a[0] < a[1], "{a:?}");
    assert!(sol.c_pen <= 1e-6);
    assert!(sol.max_product <= 1e-8);
    assert!(!sol.cap_active);
    for e in &sol.disco.dg_energy {
        assert!((e - 8760.0).abs() < 1e-6);
    }
    let k = kkt_check(&s, &sol.alpha, &sol.disco);
    assert!(k.max() <= 1e-6, "{k:?}");
    for (p, pr) in sol.profits.iter().zip(profit(&s, a, &sol.disco.dispatch)) {
        assert!((p - pr).abs() <= 1e-9 * pr.abs().max(1.0));
    }
}

#[test]
fn symmetric_units_get_equal_prices() {
    let s = symmetric_3bus();
    let sol = solve_epec(&s, &EpecOptions::default()).unwrap();
    assert!(sol.accepted());
    let a = &sol.alpha.alpha;
    assert!((a[0] - a[1]).abs() <= 1e-4, "{a:?}");
}

#[test]
fn scaling_hours_scales_money_not_prices() {
    let s = build_3bus();
    let mut long = s.clone();
    for p in &mut long.periods {
        p.hours *= 3.0;
    }
    let o = EpecOptions::default();
    let a = solve_epec(&s, &o).unwrap();
    let b = solve_epec(&long, &o).unwrap();
    for i in 0..2 {
        assert!((a.alpha.alpha[i] - b.alpha.alpha[i]).abs() <= 1e-6);
        assert!((3.0 * a.profits[i] - b.profits[i]).abs() <= 1e-6 * b.profits[i].abs());
        assert!((3.0 * a.disco.dg_payments[i] - b.disco.dg_payments[i]).abs() <= 1e-6 * b.disco.dg_payments[i]);
    }
}

fn dispatch(s: &Scenario, p: Vec<Vec<f64>>) -> Dispatch {
    let n = s.network.n_buses();
    Dispatch {
        p_sb: vec![0.0; p.len()],
        v: VoltageProfile {
            v: vec![vec![1.0; n]; p.len()],
        },
        p_dg: p,
    }
}

#[test]
fn profit_examples() {
    let s = bundled("34bus-case1").unwrap();
    let on = vec![
        vec![1.0, 1.0],
        vec![1.0, 1.0],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
        vec![0.0, 0.0],
    ];
    let p = profit(&s, &[79.53, 60.0], &dispatch(&s, on));
    assert!((p[0] - 68_433.12).abs() < 1e-6, "{}", p[0]);
    assert_eq!(p[1], 0.0);

    let s = bundled("34bus-case2").unwrap();
    let mut one = vec![vec![0.0, 0.0]; 5];
    one[0][0] = 1.0;
    let p = profit(&s, &[94.65, 80.0], &dispatch(&s, one));
    assert!((p[0] - 43_186.8).abs() < 1e-6, "{}", p[0]);
}

#[test]
fn zero_capacity_unit_earns_nothing() {
    let mut s = build_3bus();
    s.dgs.truncate(1);
    s.dgs[0].p_max = 0.0;
    let sol = solve_epec(&s, &EpecOptions::default()).unwrap();
    assert!(sol.disco.dg_energy[0].abs() < 1e-9);
    assert!(sol.profits[0].abs() < 1e-9);
}

#[test]
fn single_unit_owner_equals_competition() {
    let mut s = build_3bus();
    s.dgs.truncate(1);
    let o = EpecOptions::default();
    let a = solve_epec(&s, &o).unwrap();
    let b = solve_single_owner(&s, &o).unwrap();
    assert!(a.accepted() && b.accepted());
    assert!((a.alpha.alpha[0] - b.alpha.alpha[0]).abs() <= 1e-4);
}

#[test]
fn owner_earns_at_least_competitive_profit() {
    let s = build_3bus();
    let o = EpecOptions::default();
    let comp = solve_epec(&s, &o).unwrap();
    let own = solve_single_owner(&s, &o).unwrap();
    assert!(comp.accepted() && own.accepted());
    let total = |v: &[f64]| v.iter().sum::<f64>();
    assert!(total(&own.profits) >= total(&comp.profits) - 1e-6);
    assert!(own.disco.objective >= comp.disco.objective - 1e-6);
}

#[test]
fn invalid_options_are_rejected() {
    let s = build_3bus();
    let o = EpecOptions {
        multistart: 0,
        ..EpecOptions::default()
    };
    assert!(solve_epec(&s, &o).is_err());
    assert!(solve_epec(&s.without_dgs(), &EpecOptions::default()).is_err());
}

#[test]
fn owner_withholds_part_of_the_dearer_unit() {
    let p = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/data/owner3bus.txt");
    let s = dgprice::model::load_scenario(&p).unwrap();
    let o = EpecOptions::default();
    let comp = solve_epec(&s, &o).unwrap();
    let own = solve_single_owner(&s, &o).unwrap();
    assert!(comp.accepted() && own.accepted());
    // competition runs both units flat out; the owner holds back DG1 to
    // lift the price DG2 earns
    assert!((comp.disco.dg_energy[0] - 2628.0).abs() < 1e-6);
    assert!(own.disco.dg_energy[0] < 2000.0, "{:?}", own.disco.dg_energy);
    let total = |v: &[f64]| v.iter().sum::<f64>();
    assert!(total(&own.profits) > 1.0005 * total(&comp.profits));
}
