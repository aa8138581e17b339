mod common;

use common::*;
use localflow::odeint::*;
use localflow::Samples;
use proptest::prelude::*;

fn cfg(scheme: Scheme, steps: usize) -> IntegratorConfig {
    IntegratorConfig::new(scheme, steps).unwrap()
}

/// Least-squares slope of log(err) against log(steps).
fn loglog_slope(steps: &[usize], errs: &[f64]) -> f64 {
    let xs: Vec<f64> = steps.iter().map(|s| (*s as f64).ln()).collect();
    let ys: Vec<f64> = errs.iter().map(|e| e.ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[test]
fn exponential_growth_exact_to_1e8() {
    let f = identity_field(2);
    let x0 = [0.7, -1.3];
    let x1 = integrate(&f, &x0, Direction::Forward, &cfg(Scheme::Rk4, 50)).unwrap();
    for i in 0..2 {
        let exact = std::f64::consts::E * x0[i];
        assert!(((x1[i] - exact) / exact).abs() < 1e-8);
    }
    let back = integrate(&f, &x1, Direction::Reverse, &cfg(Scheme::Rk4, 50)).unwrap();
    assert!((back[0] - x0[0]).abs() < 1e-7);
}

#[test]
fn convergence_orders() {
    let f = identity_field(1);
    let steps = [10, 20, 40, 80];
    for (scheme, order) in [(Scheme::Rk4, 4.0), (Scheme::Euler, 1.0)] {
        let errs: Vec<f64> = steps
            .iter()
            .map(|&s| (integrate(&f, &[1.0], Direction::Forward, &cfg(scheme, s)).unwrap()[0] - std::f64::consts::E).abs())
            .collect();
        let slope = -loglog_slope(&steps, &errs);
        assert!((slope - order).abs() < 0.3, "{scheme}: slope {slope}, errs {errs:?}");
    }
}

#[test]
fn round_trip_error_shrinks_at_scheme_order() {
    let mut r = rng(21);
    let spec = localflow::netcore::MlpSpec::new(
        2,
        vec![16, 16],
        localflow::netcore::Activation::Tanh,
        localflow::netcore::TimeFeatures::Sinusoidal(2),
    )
    .unwrap();
    let f = random_field(&mut r, spec, 0.6);
    let x = Samples::new(2, random_vec(&mut r, 200, 1.0)).unwrap();
    for (scheme, min_ratio) in [(Scheme::Rk4, 10.0), (Scheme::Euler, 1.6)] {
        let mut prev = f64::INFINITY;
        for steps in [5, 10, 20, 40] {
            let c = cfg(scheme, steps);
            let y = integrate_batch(&f, &x, Direction::Forward, &c).unwrap();
            let back = integrate_batch(&f, &y, Direction::Reverse, &c).unwrap();
            let err = back
                .as_slice()
                .iter()
                .zip(x.as_slice())
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            if prev.is_finite() && prev > 1e-13 {
                assert!(prev / err > min_ratio, "{scheme} steps {steps}: {prev} -> {err}");
            }
            prev = err;
        }
    }
}

#[test]
fn divergence_integral_of_linear_fields() {
    let f = identity_field(2);
    let (_, div) = integrate_with_divergence(&f, &[0.3, 0.1], Direction::Forward, &cfg(Scheme::Rk4, 7)).unwrap();
    assert!((div - 2.0).abs() < 1e-10);
    let a = vec![vec![0.5, 1.0], vec![-2.0, -1.5]];
    let g = linear_field(&a, &[0.2, 0.0]);
    let (_, div) = integrate_with_divergence(&g, &[1.0, 1.0], Direction::Forward, &cfg(Scheme::Euler, 3)).unwrap();
    assert!((div - (0.5 - 1.5)).abs() < 1e-12);
}

#[test]
fn divergence_integral_equals_log_det_of_flow_map() {
    for seed in 0..4 {
        let mut r = rng(40 + seed);
        let spec = localflow::netcore::MlpSpec::new(
            2,
            vec![12, 12],
            localflow::netcore::Activation::Softplus,
            localflow::netcore::TimeFeatures::Raw,
        )
        .unwrap();
        let f = random_field(&mut r, spec, 0.7);
        let c = cfg(Scheme::Rk4, 100);
        let x = random_vec(&mut r, 2, 1.0);
        let (_, div) = integrate_with_divergence(&f, &x, Direction::Forward, &c).unwrap();
        let h = 1e-5;
        let mut jac = vec![vec![0.0; 2]; 2];
        for j in 0..2 {
            let mut up = x.clone();
            up[j] += h;
            let mut dn = x.clone();
            dn[j] -= h;
            let fu = integrate(&f, &up, Direction::Forward, &c).unwrap();
            let fd = integrate(&f, &dn, Direction::Forward, &c).unwrap();
            for i in 0..2 {
                jac[i][j] = (fu[i] - fd[i]) / (2.0 * h);
            }
        }
        let ld = log_abs_det(jac);
        assert!((div - ld).abs() < 1e-4, "seed {seed}: {div} vs {ld}");
    }
}

#[test]
fn reverse_divergence_has_opposite_sign() {
    let mut r = rng(50);
    let f = random_net(&mut r, 2, 0.7);
    let c = cfg(Scheme::Rk4, 40);
    let x = [0.4, -0.2];
    let (y, fwd) = integrate_with_divergence(&f, &x, Direction::Forward, &c).unwrap();
    let (_, rev) = integrate_with_divergence(&f, &y, Direction::Reverse, &c).unwrap();
    assert!((fwd + rev).abs() < 1e-6, "{fwd} {rev}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn divergence_is_additive_over_halves(seed in any::<u64>(), n in 1usize..12, rk4 in any::<bool>()) {
        let mut r = rng(seed);
        let f = random_net(&mut r, 2, 0.8);
        let x = random_vec(&mut r, 2, 1.0);
        let scheme = if rk4 { Scheme::Rk4 } else { Scheme::Euler };
        let (_, whole) = integrate_span_with_divergence(&f, &x, 0.0, 1.0, &cfg(scheme, 2 * n)).unwrap();
        let (mid, a) = integrate_span_with_divergence(&f, &x, 0.0, 0.5, &cfg(scheme, n)).unwrap();
        let (_, b) = integrate_span_with_divergence(&f, &mid, 0.5, 1.0, &cfg(scheme, n)).unwrap();
        prop_assert!((whole - (a + b)).abs() < 1e-12, "{} vs {}", whole, a + b);
    }

    #[test]
    fn zero_field_is_identity(x in prop::collection::vec(-10.0f64..10.0, 3), steps in 1usize..30) {
        let spec = localflow::netcore::MlpSpec::new(3, vec![4], localflow::netcore::Activation::Tanh, localflow::netcore::TimeFeatures::Raw).unwrap();
        let f = localflow::netcore::VelocityField::zeros(spec).unwrap();
        for dir in [Direction::Forward, Direction::Reverse] {
            let (y, div) = integrate_with_divergence(&f, &x, dir, &cfg(Scheme::Rk4, steps)).unwrap();
            prop_assert_eq!(&y, &x);
            prop_assert_eq!(div, 0.0);
        }
    }

    #[test]
    fn batch_matches_single(seed in any::<u64>()) {
        let mut r = rng(seed);
        let f = random_net(&mut r, 2, 0.8);
        let xs = Samples::new(2, random_vec(&mut r, 10, 1.0)).unwrap();
        let c = cfg(Scheme::Rk4, 6);
        let (y, div) = integrate_batch_with_divergence(&f, &xs, Direction::Forward, &c).unwrap();
        for i in 0..5 {
            let (yi, di) = integrate_with_divergence(&f, xs.row(i), Direction::Forward, &c).unwrap();
            for (a, b) in yi.iter().zip(y.row(i)) {
                prop_assert!((a - b).abs() < 1e-12);
            }
            prop_assert!((di - div[i]).abs() < 1e-12);
        }
    }
}
