mod common;

use common::check_invariants;
use ess_mpc::horizon::ControllerConfig;
use ess_mpc::scenarios::{
    gaussian_peak_profile, res_peak_profile, GaussianPeakSpec, Profile, Scenario,
};
use ess_mpc::sim::{run_closed_loop, EndOfData, LoopOptions, PerfectForesight};
use proptest::prelude::*;

const THETA: f64 = 5.0 / 60.0;

fn peak(base: f64, amplitude: f64, center_hour: f64, n: usize) -> Profile {
    let spec = GaussianPeakSpec {
        base,
        amplitude_fraction: amplitude,
        center_hour,
        sigma_slots: 4.0,
    };
    gaussian_peak_profile(&spec, 0.0, n, THETA).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn every_run_respects_balance_bookkeeping_and_bounds(
        base in 0.0..60.0f64,
        amplitude in 0.0..1.0f64,
        center in 0.0..6.0f64,
        res_base in 0.0..10.0f64,
        horizon in 1..=24usize,
        x_init in 0.0..12.0f64,
        shrink in any::<bool>(),
    ) {
        let n = 72;
        let cfg = ControllerConfig::default().with_horizon(horizon);
        let spec = GaussianPeakSpec { base: res_base, amplitude_fraction: 1.0, center_hour: 3.0, sigma_slots: 4.0 };
        let res = res_peak_profile(&spec, 0.0, n, THETA).unwrap();
        let scen = Scenario::new(peak(base, amplitude, center, n), res).unwrap();
        let end_of_data = if shrink { EndOfData::Shrink } else { EndOfData::HoldLast };
        let opts = LoopOptions { duration: None, end_of_data };
        let r = run_closed_loop(&scen, &cfg, x_init, &PerfectForesight, &opts).unwrap();
        prop_assert_eq!(r.len(), n);
        if let Err(e) = check_invariants(&r, &cfg) {
            return Err(TestCaseError::fail(e));
        }
        prop_assert!(r.kkt_residuals.iter().all(|k| *k <= 1e-6));
    }
}

#[test]
fn equilibrium_is_kept_exactly() {
    let cfg = ControllerConfig::default();
    let scen = Scenario::demand_only(Profile::constant(0.0, 0.0, THETA, 288).unwrap()).unwrap();
    let r = run_closed_loop(
        &scen,
        &cfg,
        cfg.x_ref,
        &PerfectForesight,
        &LoopOptions::default(),
    )
    .unwrap();
    assert!(r.p_gen.iter().chain(&r.p_sto).all(|p| *p == 0.0));
    assert!(r.x.iter().all(|x| *x == cfg.x_ref));
}

#[test]
fn disabled_storage_passes_net_demand_through() {
    let cfg = ControllerConfig::default().without_storage();
    let n = 288;
    let spec = GaussianPeakSpec {
        base: 5.0,
        amplitude_fraction: 1.0,
        center_hour: 17.0,
        sigma_slots: 4.0,
    };
    let scen = Scenario::new(
        peak(50.0, 0.5, 17.0, n),
        res_peak_profile(&spec, 0.0, n, THETA).unwrap(),
    )
    .unwrap();
    let r = run_closed_loop(&scen, &cfg, 3.0, &PerfectForesight, &LoopOptions::default()).unwrap();
    for k in 0..n {
        assert_eq!(r.p_gen[k], r.p_load[k] - r.p_res[k]);
        assert_eq!(r.p_sto[k], 0.0);
        assert_eq!(r.x[k], 3.0);
    }
}

#[test]
fn peak_is_shaved_for_every_studied_amplitude() {
    let cfg = ControllerConfig::default();
    for a in [0.1, 0.2, 0.3, 0.4, 0.5] {
        let load = peak(50.0, a, 17.0, 288);
        let window = load.slots_between(15.0, 19.0);
        let scen = Scenario::demand_only(load).unwrap();
        let r =
            run_closed_loop(&scen, &cfg, 0.0, &PerfectForesight, &LoopOptions::default()).unwrap();
        let max = |v: &[f64]| {
            v[window.clone()]
                .iter()
                .copied()
                .fold(f64::NEG_INFINITY, f64::max)
        };
        let (peak_gen, peak_demand) = (max(&r.p_gen), max(&r.p_load));
        assert!(
            peak_gen < peak_demand,
            "amplitude {a}: {peak_gen} >= {peak_demand}"
        );
    }
}

#[test]
fn start_from_empty_charges_at_full_power() {
    // the morning charge from 0 MWh draws base + 6 MW, above a 10 % peak
    let cfg = ControllerConfig::default();
    let scen = Scenario::demand_only(peak(50.0, 0.1, 17.0, 288)).unwrap();
    let r = run_closed_loop(&scen, &cfg, 0.0, &PerfectForesight, &LoopOptions::default()).unwrap();
    assert!((r.p_gen[0] - 56.0).abs() < 1e-9);
    assert!((r.p_sto[0] + 6.0).abs() < 1e-9);
}

#[test]
fn longer_horizons_shave_more() {
    let load = peak(50.0, 0.2, 17.0, 288);
    let scen = Scenario::demand_only(load).unwrap();
    let peaks: Vec<f64> = [1, 12, 24]
        .iter()
        .map(|n| {
            let cfg = ControllerConfig::default().with_horizon(*n);
            let r = run_closed_loop(&scen, &cfg, 0.0, &PerfectForesight, &LoopOptions::default())
                .unwrap();
            r.p_gen.iter().copied().fold(0.0, f64::max)
        })
        .collect();
    assert!(
        peaks[1] <= peaks[0] + 1e-6 && peaks[2] <= peaks[1] + 1e-6,
        "{peaks:?}"
    );
}

#[test]
fn runs_are_independent_across_threads() {
    let scen = Scenario::demand_only(peak(50.0, 0.3, 17.0, 288)).unwrap();
    let cfgs: Vec<_> = [1, 6, 12, 24]
        .iter()
        .map(|n| ControllerConfig::default().with_horizon(*n))
        .collect();
    let serial: Vec<_> = cfgs
        .iter()
        .map(|c| {
            run_closed_loop(&scen, c, 0.0, &PerfectForesight, &LoopOptions::default())
                .unwrap()
                .p_sto
        })
        .collect();
    let parallel: Vec<_> = std::thread::scope(|s| {
        let hs: Vec<_> = cfgs
            .iter()
            .map(|c| {
                s.spawn(|| {
                    run_closed_loop(&scen, c, 0.0, &PerfectForesight, &LoopOptions::default())
                        .unwrap()
                        .p_sto
                })
            })
            .collect();
        hs.into_iter().map(|h| h.join().unwrap()).collect()
    });
    assert_eq!(serial, parallel);
}
