use dgprice::model::{
    build_3bus, bundled, calibrate_impedance_scale, load_scenario, no_dg_loss,
    reconstruct_demand_levels, serialize_scenario, ModelError, THREE_BUS_IMPEDANCE_SCALE,
};

#[test]
fn three_bus_calibration_reproduces_published_loss() {
    let s = build_3bus();
    let d = &s.periods[0].demand;
    let loss = no_dg_loss(&s.network, d).unwrap();
    assert!((loss - 0.0057).abs() < 1e-12, "{loss}");
    let scale = calibrate_impedance_scale(&s.network, d, 0.0057).unwrap();
    assert!((scale - THREE_BUS_IMPEDANCE_SCALE).abs() <= 1e-9 * scale, "{scale}");

    let mut raw = s.network.clone();
    raw.impedance_scale = 1.0;
    // the published impedances at face value cannot serve the load
    assert!(no_dg_loss(&raw, d).is_err());
}

#[test]
fn off_peak_levels_come_back_from_payments() {
    let s = bundled("34bus").unwrap();
    let payments = [1_068_729.0, 748_666.0, 553_462.0, 432_028.0];
    let prices = [70.8, 62.0, 50.0, 41.0];
    let pattern = &s.periods[0].demand;
    let levels =
        reconstruct_demand_levels(&payments, &prices, &s.network, &[1752.0; 4], pattern).unwrap();
    for (t, l) in levels.iter().enumerate() {
        let bundled_mw = s.periods[t + 1].total_demand() * s.network.base_mva;
        assert!((l - bundled_mw).abs() <= 1e-6 * l, "period {}: {l} vs {bundled_mw}", t + 2);
    }
    assert_eq!(
        reconstruct_demand_levels(&[0.0], &[50.0], &s.network, &[1752.0], pattern).unwrap(),
        vec![0.0]
    );
    assert!(matches!(
        reconstruct_demand_levels(&[1e12], &[50.0], &s.network, &[1752.0], pattern),
        Err(ModelError::Reconstruction { period: 1, .. })
    ));
}

#[test]
fn bundled_cases_follow_the_case_definitions() {
    let c1 = bundled("34bus-case1").unwrap();
    let buses: Vec<&str> = c1.dgs.iter().map(|d| d.bus.as_str()).collect();
    assert_eq!(buses, ["17", "24"]);
    assert!(c1.dgs.iter().all(|d| d.cost == 60.0 && d.p_max == 1.0));
    assert_eq!(bundled("34bus-case2").unwrap().dgs[0].cost, 70.0);
    let c3 = bundled("34bus-case3").unwrap();
    assert_eq!(c3.dgs[2].bus, "11");
    let c4 = bundled("34bus-case4").unwrap();
    assert_eq!(c4.dgs[3].bus, "33");
    assert_eq!(bundled("ow1").unwrap().dgs, c1.dgs);
    assert!(bundled("34bus").unwrap().dgs.is_empty());
    assert!(matches!(bundled("5bus"), Err(ModelError::UnknownBundled(_))));
}

#[test]
fn scenario_files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("case.txt");
    let s = bundled("34bus-case4").unwrap();
    std::fs::write(&path, serialize_scenario(&s)).unwrap();
    assert_eq!(load_scenario(&path).unwrap(), s);
    assert!(matches!(
        load_scenario(&dir.path().join("missing.txt")),
        Err(ModelError::Io { .. })
    ));
}
