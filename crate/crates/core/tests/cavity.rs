use proptest::prelude::*;
use rstokes::cavity::{self, advect_roof, CavityConfig};

fn small(nx: usize) -> CavityConfig {
    CavityConfig {
        nx,
        ny: nx,
        dt: 0.025 * 32.0 / nx as f64,
        ..CavityConfig::default()
    }
}

#[test]
fn no_sliding_never_opens() {
    let config = CavityConfig {
        u_i: 0.0,
        t_end: 0.1,
        ..small(16)
    };
    let run = cavity::run(&config).unwrap();
    assert_eq!(run.steady_time, Some(0.0));
    assert_eq!(run.last.volume(), 0.0);
    assert!(run.last.max_abs_gamma() < 1e-10);
    assert!(run.last.solution.lambda.iter().all(|&l| l <= 0.0));
}

#[test]
fn large_effective_pressure_keeps_ice_attached() {
    let config = CavityConfig {
        p_e: 100.0,
        t_end: 0.2,
        ..small(16)
    };
    let mut volumes = Vec::new();
    let run = cavity::run_with(&config, |s, _| volumes.push(s.volume())).unwrap();
    assert!(volumes.iter().all(|&v| v < 1e-8), "{volumes:?}");
    assert!(run.last.cavity_extent().is_none());
}

#[test]
fn early_volume_converges_linearly_in_dt() {
    let volume_at = |dt: f64| {
        let config = CavityConfig {
            dt,
            t_end: 0.1,
            steady_tol: 0.0,
            ..small(16)
        };
        cavity::run(&config).unwrap().last.volume()
    };
    let v: Vec<f64> = [0.025, 0.0125, 0.00625].iter().map(|&dt| volume_at(dt)).collect();
    let ratio = (v[0] - v[1]) / (v[1] - v[2]);
    assert!((1.4..3.0).contains(&ratio), "volumes {v:?}, ratio {ratio}");
}

#[test]
fn run_reports_every_step_and_requested_snapshots() {
    let config = CavityConfig {
        t_end: 0.1,
        steady_tol: 0.0,
        snapshots: vec![0.0, 0.05, 0.1],
        ..small(8)
    };
    let run = cavity::run(&config).unwrap();
    let times: Vec<f64> = run.reports.iter().map(|r| r.time).collect();
    assert_eq!(times.len(), 1 + (0.1f64 / config.dt).round() as usize);
    assert_eq!(run.snapshots.len(), 3);
    for (want, state) in &run.snapshots {
        assert!((state.time - want).abs() <= 0.5 * config.dt + 1e-12);
    }
    assert!(run.reports.iter().all(|r| r.compatibility.passed && r.min_gap >= 0.0));
}

#[test]
fn zero_effective_pressure_is_rejected() {
    let config = CavityConfig { p_e: 0.0, ..small(8) };
    let err = cavity::run(&config).unwrap_err();
    assert!(matches!(err, rstokes::Error::Incompatible { .. }), "{err}");
}

proptest! {
    #[test]
    fn advected_roof_stays_on_or_above_bed(
        gaps in proptest::collection::vec(0.0f64..0.05, 9),
        speeds in proptest::collection::vec(-1.0f64..1.0, 8),
        dt in 0.001f64..0.05,
    ) {
        let m = 8;
        let x: Vec<f64> = (0..=m).map(|i| i as f64 / m as f64).collect();
        let bed: Vec<f64> = x.iter().map(|&x| rstokes::mesh::bed_profile(0.08, x)).collect();
        let mut roof: Vec<f64> = bed.iter().zip(&gaps).map(|(b, g)| b + g).collect();
        roof[m] = roof[0];
        let new = advect_roof(&x, &bed, &roof, &speeds, dt).unwrap();
        for (h, b) in new.iter().zip(&bed) {
            prop_assert!(h >= b);
        }
        prop_assert_eq!(new[0], new[m]);
    }
}
