use dgprice::disco::ContractOffer;
use dgprice::epec::{solve_epec, EpecOptions, EpecSolution};
use dgprice::model::{build_3bus, Scenario};
use dgprice::nlp::NlpOptions;
use dgprice::verify::{
    best_response, diagonalize, resolve_check, sweep_profit, DiagonalizationOptions, NASH_TOL,
    SWEEP_HALF_WIDTH, SWEEP_STEP,
};

fn equilibrium(s: &Scenario) -> EpecSolution {
    let sol = solve_epec(s, &EpecOptions::default()).unwrap();
    assert!(sol.accepted());
    sol
}

#[test]
fn single_unit_settles_after_one_response() {
    let mut s = build_3bus();
    s.dgs.truncate(1);
    let (trace, offer) =
        diagonalize(&s, &ContractOffer::new(vec![65.0]), &DiagonalizationOptions::default()).unwrap();
    assert!(trace.converged);
    assert_eq!(trace.sweeps.len(), 3, "{:?}", trace.sweeps);
    assert!((trace.sweeps[1][0] - trace.sweeps[2][0]).abs() <= 1e-4);
    assert!(offer.alpha[0] > 60.0);
}

#[test]
fn diagonalization_agrees_with_epec() {
    let s = build_3bus();
    let eq = equilibrium(&s);
    let opts = DiagonalizationOptions::default();
    let (trace, offer) = diagonalize(&s, &ContractOffer::new(vec![60.5, 60.5]), &opts).unwrap();
    assert!(trace.converged && !trace.cycle_detected);
    for (a, b) in offer.alpha.iter().zip(&eq.alpha.alpha) {
        assert!((a - b).abs() <= 1e-3, "{a} vs {b}");
    }

    // started on the equilibrium, nothing moves
    let (trace, _) = diagonalize(&s, &eq.alpha, &opts).unwrap();
    assert!(trace.converged);
    assert_eq!(trace.sweeps.len(), 2);
    assert!(trace.accuracy <= 1e-4, "{}", trace.accuracy);
}

#[test]
fn best_response_beats_neighbours() {
    let s = build_3bus();
    let eq = equilibrium(&s);
    let br = best_response(&s, 1, &eq.alpha.alpha, &DiagonalizationOptions::default()).unwrap();
    assert!((br.alpha - eq.alpha.alpha[1]).abs() <= 1e-3);
    assert!((br.profit - eq.profits[1]).abs() <= 1e-3 * eq.profits[1]);
}

#[test]
fn sweeps_peak_at_the_equilibrium() {
    let s = build_3bus();
    let eq = equilibrium(&s);
    let nlp = NlpOptions::default();
    for dg in 0..2 {
        let c = sweep_profit(&s, &eq, dg, SWEEP_HALF_WIDTH, SWEEP_STEP, &nlp).unwrap();
        assert_eq!(c.alphas.len(), 101);
        assert!(c.is_nash(NASH_TOL), "DG{}: gain {}", dg + 1, c.max_gain());
        // priced out at the top of the range, losing money at the bottom
        assert!(c.profits[100].abs() < 1e-3);
        assert!(c.profits[0] < 0.0);
        let csv = c.to_csv();
        assert_eq!(csv.lines().count(), 102);
    }
}

#[test]
fn sweep_rejects_bad_arguments() {
    let s = build_3bus();
    let eq = equilibrium(&s);
    let nlp = NlpOptions::default();
    assert!(sweep_profit(&s, &eq, 5, 5.0, 0.1, &nlp).is_err());
    assert!(sweep_profit(&s, &eq, 0, 5.0, 0.0, &nlp).is_err());
    assert!(sweep_profit(&s, &eq, 0, 0.05, 0.1, &nlp).is_err());
}

#[test]
fn resolve_passes_and_localizes_faults() {
    let s = build_3bus();
    let eq = equilibrium(&s);
    let nlp = NlpOptions::default();
    let r = resolve_check(&s, &eq, &nlp).unwrap();
    assert!(r.pass, "{:?}", r.failures().collect::<Vec<_>>());

    let mut bad = eq.clone();
    bad.disco.dispatch.p_dg[0][1] -= 0.1;
    let r = resolve_check(&s, &bad, &nlp).unwrap();
    assert!(!r.pass);
    let names: Vec<&str> = r.failures().map(|i| i.name.as_str()).collect();
    // the dispatch and the profit computed from it; nothing of DG1 or the
    // substation
    assert_eq!(names, vec!["p_dg[DG2][t1]", "profit[DG2]"]);
}
