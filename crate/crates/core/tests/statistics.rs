//! Statistical checks of the scheme and the estimators.

use cev_core::boundary::grid_crossing_index;
use cev_core::montecarlo::Z99;
use cev_core::rng::Counting;
use cev_core::sde::EmPath;
use cev_core::selftest::{draw_moments, tail_bound};
use cev_core::{
    em_step, estimate_absorption, estimate_exit_time, normal_stream, simulate_to_stop, sweep_delta, CevParams,
    ExtendedTime, McConfig, NormalSource, SchemeConfig,
};

fn feller(x0: f64) -> CevParams {
    CevParams::new(0.0, 1.0, 0.5, x0).unwrap()
}

#[test]
fn normal_stream_moments_and_tail() {
    let m = draw_moments(normal_stream(42, 0), 1_000_000);
    assert!(m.mean.abs() <= 4e-3, "{m:?}");
    assert!((m.variance - 1.0).abs() <= 1e-2, "{m:?}");
    assert!(m.tail <= tail_bound(), "{m:?}");
    // E xi^2 1{|xi| >= 2} = 2 (2 phi(2) + 1 - Phi(2)) = 0.26146...
    assert!((m.tail - 0.261_464).abs() < 0.01, "{m:?}");
}

#[test]
fn streams_of_neighbouring_indices_are_uncorrelated() {
    let n = 200_000u64;
    let a = normal_stream(5, 10);
    let b = normal_stream(5, 11);
    let corr: f64 = (0..n).map(|k| a.draw_at(k) * b.draw_at(k)).sum::<f64>() / n as f64;
    assert!(corr.abs() < 4.0 / (n as f64).sqrt(), "{corr}");
}

#[test]
fn one_step_mean_and_variance() {
    let params = CevParams::new(0.7, 1.3, 0.75, 1.0).unwrap();
    let (x, delta) = (0.8f64, 0.01f64);
    let n = 1_000_000u64;
    let mut src = normal_stream(11, 0);
    let (mut s1, mut s2) = (0.0, 0.0);
    for _ in 0..n {
        let y = em_step(x, src.next_normal(), &params, delta);
        s1 += y;
        s2 += y * y;
    }
    let nf = n as f64;
    let mean = s1 / nf;
    let var = (s2 - nf * mean * mean) / (nf - 1.0);
    let true_var = params.sigma.powi(2) * x.powf(2.0 * params.p) * delta;
    let mean_se = (true_var / nf).sqrt();
    assert!((mean - (x + params.mu * x * delta)).abs() <= 4.0 * mean_se);
    // Var of a sample variance of normals is 2 sigma^4 / (n-1)
    let var_se = true_var * (2.0 / (nf - 1.0)).sqrt();
    assert!((var - true_var).abs() <= 4.0 * var_se, "{var} vs {true_var}");
}

#[test]
fn interpolated_and_grid_crossing_within_one_step() {
    let params = feller(1.0);
    let scheme = SchemeConfig::new(1e-2, 0.9, 5.0).unwrap();
    let mut hits = 0;
    for i in 0..1_000 {
        let out = simulate_to_stop(&params, &scheme, normal_stream(17, i)).unwrap();
        let values: Vec<f64> = std::iter::once(params.x0)
            .chain(EmPath::new(&params, scheme.delta, normal_stream(17, i)).map(|s| s.x))
            .take(out.steps_used as usize + 1)
            .collect();
        let nu = grid_crossing_index(&values, scheme.threshold);
        match (out.hit_time, nu) {
            (ExtendedTime::Finite(tau), Some(j)) => {
                hits += 1;
                assert_eq!(j as u64, out.steps_used);
                assert!((tau - j as f64 * scheme.delta).abs() <= scheme.delta + 1e-12);
            }
            (ExtendedTime::Infinite, None) => {}
            other => panic!("path {i}: inconsistent {other:?}"),
        }
    }
    assert!(hits > 300);
}

#[test]
fn raising_the_level_never_delays_the_stop() {
    let params = feller(1.0);
    let low = SchemeConfig::new(1e-2, 0.95, 5.0).unwrap();
    let high = SchemeConfig::new(1e-2, 0.5, 5.0).unwrap();
    assert!(high.threshold > low.threshold);
    for i in 0..2_000 {
        let a = simulate_to_stop(&params, &high, normal_stream(23, i)).unwrap();
        let b = simulate_to_stop(&params, &low, normal_stream(23, i)).unwrap();
        assert!(a.hit_time <= b.hit_time, "path {i}: {a:?} vs {b:?}");
    }
}

#[test]
fn steps_used_counts_draws() {
    let params = CevParams::new(0.4, 0.9, 0.7, 0.6).unwrap();
    let scheme = SchemeConfig::new(1e-2, 1.0, 3.0).unwrap();
    for i in 0..300 {
        let mut src = Counting::new(normal_stream(2, i));
        let out = simulate_to_stop(&params, &scheme, &mut src).unwrap();
        assert_eq!(out.steps_used, src.count);
    }
}

#[test]
fn figure_one_point_matches_exact_value() {
    let params = feller(1.0);
    let scheme = SchemeConfig::new(1e-3, 0.9, 5.0).unwrap();
    let e = estimate_absorption(&params, &scheme, 5.0, &McConfig::new(100_000, 42)).unwrap();
    assert!((e.p_hat - 0.670_320).abs() <= 4.0 * e.stderr + 0.02, "{e:?}");
    let again = estimate_absorption(&params, &scheme, 5.0, &McConfig::new(100_000, 42)).unwrap();
    assert_eq!(e, again);
}

#[test]
fn larger_level_gives_larger_estimate() {
    let params = feller(1.0);
    let mc = McConfig::new(40_000, 8);
    let big = estimate_absorption(&params, &SchemeConfig::new(1e-2, 0.45, 5.0).unwrap(), 5.0, &mc).unwrap();
    let small = estimate_absorption(&params, &SchemeConfig::new(1e-2, 0.9, 5.0).unwrap(), 5.0, &mc).unwrap();
    let combined = (big.stderr.powi(2) + small.stderr.powi(2)).sqrt();
    assert!(big.p_hat >= small.p_hat - 2.0 * combined, "{big:?} {small:?}");
}

#[test]
fn ci_coverage_of_large_sample_value() {
    let params = feller(1.0);
    let scheme = SchemeConfig::new(1e-2, 0.9, 5.0).unwrap();
    let reference = estimate_absorption(&params, &scheme, 5.0, &McConfig::new(1_000_000, 999)).unwrap();
    let covered = (0..200u64)
        .filter(|&r| {
            let e = estimate_absorption(&params, &scheme, 5.0, &McConfig::new(10_000, 1_000 + r)).unwrap();
            e.ci99.0 <= reference.p_hat && reference.p_hat <= e.ci99.1
        })
        .count();
    assert!(covered >= 190, "coverage {covered}/200");
}

#[test]
fn exit_time_small_sample() {
    let params = feller(0.5);
    let e = estimate_exit_time(&params, 1e-3, 0.9, 50.0, &McConfig::new(20_000, 4)).unwrap();
    // the coarser grid overshoots both levels; allowance covers sqrt(delta)-sized shifts
    assert!((e.mean - 2f64.ln()).abs() <= 4.0 * e.stderr + 0.03, "{e:?}");
    assert!(e.censored_fraction < 1e-3);
    assert!((e.ci99.1 - e.mean - Z99 * e.stderr).abs() < 1e-12);
}

#[test]
fn sweep_error_shrinks() {
    let params = feller(1.0);
    let rows = sweep_delta(&params, Some(0.9), 5.0, &[1e-2, 1e-1], &McConfig::new(50_000, 42));
    let errs: Vec<f64> = rows
        .iter()
        .map(|r| r.result.as_ref().unwrap().err_rel_pct.unwrap())
        .collect();
    assert!(errs[0] > 0.0, "positive bias at delta = 0.1: {errs:?}");
    assert!(errs[0].abs() > errs[1].abs(), "{errs:?}");
}

#[test]
fn zero_level_mode_runs() {
    let params = feller(1.0);
    let rows = sweep_delta(&params, None, 5.0, &[1e-2], &McConfig::new(20_000, 1));
    let e = rows[0].result.as_ref().unwrap();
    assert_eq!(rows[0].threshold, 0.0);
    assert!(e.p_hat > 0.5 && e.p_hat < 0.8, "{e:?}");
}
