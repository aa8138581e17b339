mod common;

use common::*;
use localflow::datasets::*;
use localflow::flowmath::{ou_gaussian_marginal, DiagGaussian};
use localflow::metrics::*;
use localflow::Samples;
use proptest::prelude::*;
use rand::Rng;

fn normal_logpdf(x: f64, m: f64, v: f64) -> f64 {
    -(x - m).powi(2) / (2.0 * v) - 0.5 * (2.0 * std::f64::consts::PI * v).ln()
}

/// `∫ p²/q − 1` in one dimension by Simpson quadrature.
fn chi2_quadrature(mp: f64, vp: f64, mq: f64, vq: f64) -> f64 {
    let c = 0.5 * (mp + mq);
    simpson(|x| (2.0 * normal_logpdf(x, mp, vp) - normal_logpdf(x, mq, vq)).exp(), c - 40.0, c + 40.0, 40_000) - 1.0
}

#[test]
fn chi2_matches_quadrature_on_random_grid() {
    let mut r = rng(60);
    let mut cases = 0;
    while cases < 20 {
        let (mp, mq) = (r.gen_range(-1.5..1.5), r.gen_range(-1.5..1.5));
        let (vp, vq) = (r.gen_range(0.3..1.5), r.gen_range(0.6..2.0));
        if 2.0 * vq - vp < 0.4 {
            continue;
        }
        let p = DiagGaussian::new(vec![mp], vec![vp]).unwrap();
        let q = DiagGaussian::new(vec![mq], vec![vq]).unwrap();
        let closed = chi2_gaussian(&p, &q).unwrap();
        let quad = chi2_quadrature(mp, vp, mq, vq);
        assert!(closed >= 0.0);
        assert!((closed - quad).abs() < 1e-8 * (1.0 + quad.abs()), "{closed} vs {quad}");
        cases += 1;
    }
}

#[test]
fn chi2_worked_examples() {
    let q = DiagGaussian::standard(1);
    let p = DiagGaussian::new(vec![0.0], vec![0.5]).unwrap();
    let quad = chi2_quadrature(0.0, 0.5, 0.0, 1.0);
    assert!((chi2_gaussian(&p, &q).unwrap() - quad).abs() < 1e-8);
    let p = DiagGaussian::new(vec![1.0], vec![1.0]).unwrap();
    assert!((chi2_gaussian(&p, &q).unwrap() - chi2_quadrature(1.0, 1.0, 0.0, 1.0)).abs() < 1e-8);
    // Divergent when 2 v_q ≤ v_p.
    let wide = DiagGaussian::new(vec![0.0, 0.0], vec![1.0, 2.5]).unwrap();
    assert!(chi2_gaussian(&wide, &DiagGaussian::standard(2)).is_err());
}

#[test]
fn chi2_factorizes_over_coordinates() {
    let p = DiagGaussian::new(vec![0.3, -0.6], vec![0.7, 1.2]).unwrap();
    let q = DiagGaussian::new(vec![0.1, 0.2], vec![1.0, 1.4]).unwrap();
    let joint = chi2_gaussian(&p, &q).unwrap();
    let prod = (1.0 + chi2_quadrature(0.3, 0.7, 0.1, 1.0)) * (1.0 + chi2_quadrature(-0.6, 1.2, 0.2, 1.4)) - 1.0;
    assert!((joint - prod).abs() < 1e-8);
}

#[test]
fn kl_and_w2_examples() {
    let q = DiagGaussian::standard(2);
    for i in 0..=15 {
        let m = 0.1 * i as f64;
        let p = DiagGaussian::isotropic(vec![m, 0.0], 1.0).unwrap();
        assert!((kl_gaussian(&p, &q).unwrap() - m * m / 2.0).abs() < 1e-14);
        assert!((w2_gaussian(&q, &p).unwrap() - m).abs() < 1e-14);
        assert!(kl_gaussian(&p, &q).unwrap() <= chi2_gaussian(&p, &q).unwrap());
    }
}

#[test]
fn contraction_worked_example() {
    let rep = check_ou_contraction(&[vec![1.0, 0.0]], &[0.5]).unwrap().remove(0);
    assert!((rep.measured - ((-1f64).exp().exp() - 1.0)).abs() < 1e-12);
    assert!((rep.bound_rhs - (-1f64).exp() * (std::f64::consts::E - 1.0)).abs() < 1e-12);
    assert!(rep.passed);
    let far = check_ou_contraction(&[vec![1.0, 0.0]], &[30.0]).unwrap().remove(0);
    assert!(far.measured < 1e-20);
}

#[test]
fn w2_initial_diffusion_example() {
    let rep = check_initial_diffusion_w2(&DiagGaussian::standard(2), &[0.25]).unwrap().remove(0);
    assert!((rep.bound_rhs - 6f64.sqrt() * 0.5).abs() < 1e-12);
    // Exact: every coordinate keeps unit variance, so W2 is zero here.
    assert!(rep.measured <= rep.bound_rhs && rep.passed);
    let zero = check_initial_diffusion_w2(&DiagGaussian::standard(2), &[0.0]).unwrap().remove(0);
    assert_eq!((zero.measured, zero.bound_rhs), (0.0, 0.0));
}

#[test]
fn mixture_density_integrates_to_one_and_matches_entropy() {
    let gm = GaussianMixture::eight_gaussians();
    let f = |x: f64| simpson(|y| gm.logpdf(&[x, y]).exp(), -2.0, 2.0, 400);
    let mass = simpson(f, -2.0, 2.0, 400);
    assert!((mass - 1.0).abs() < 1e-3, "{mass}");
    // ∫ p log p by quadrature vs the Monte Carlo mean of log p over draws.
    let g = |x: f64| {
        simpson(
            |y| {
                let l = gm.logpdf(&[x, y]);
                l.exp() * l
            },
            -2.0,
            2.0,
            400,
        )
    };
    let neg_entropy = simpson(g, -2.0, 2.0, 400);
    let xs = gm.sample(100_000, &mut rng(61));
    let lp: Vec<f64> = xs.rows().map(|r| gm.logpdf(r)).collect();
    let m = lp.iter().sum::<f64>() / lp.len() as f64;
    let sd = (lp.iter().map(|v| (v - m).powi(2)).sum::<f64>() / lp.len() as f64).sqrt();
    assert!((m - neg_entropy).abs() < 3.0 * sd / (lp.len() as f64).sqrt(), "{m} vs {neg_entropy}");
}

#[test]
fn mixture_mean_and_peak() {
    let gm = GaussianMixture::eight_gaussians();
    let peak = gm.logpdf(&gm.means()[0]);
    let expected = (1.0f64 / 8.0).ln() - (2.0 * std::f64::consts::PI * 0.01).ln();
    assert!((peak - expected).abs() < 1e-8, "{peak} vs {expected}");
    let xs = gm.sample(100_000, &mut rng(62));
    let m = xs.mean();
    let v = xs.variance();
    for i in 0..2 {
        assert!(m[i].abs() < 3.0 * (v[i] / 1e5).sqrt());
    }
    let single = GaussianMixture::new(vec![1.0], vec![vec![0.0, 0.0, 0.0]], 1.0).unwrap();
    assert!((single.logpdf(&[0.0; 3]) + 1.5 * (2.0 * std::f64::consts::PI).ln()).abs() < 1e-14);
}

#[test]
fn checkerboard_cells_are_uniform() {
    let n = 100_000;
    let xs = sample_checkerboard(n, &mut rng(63));
    let mut counts = [[0usize; 4]; 4];
    for r in xs.rows() {
        let (i, j) = checkerboard_cell(r).expect("inside [-2, 2]^2");
        counts[i][j] += 1;
    }
    let p = 1.0 / 8.0;
    let sd = (n as f64 * p * (1.0 - p)).sqrt();
    for i in 0..4 {
        for j in 0..4 {
            if (i + j) % 2 == 0 {
                assert!((counts[i][j] as f64 - n as f64 * p).abs() < 4.0 * sd, "cell {i},{j}: {}", counts[i][j]);
            } else {
                assert_eq!(counts[i][j], 0, "cell {i},{j} should be empty");
            }
        }
    }
}

#[test]
fn rose_has_eight_lobes() {
    let xs = sample_rose(100_000, 4, 0.02, &mut rng(64)).unwrap();
    let sigma = 0.02;
    assert!(xs.rows().all(|r| (r[0] * r[0] + r[1] * r[1]).sqrt() <= 1.0 + 6.0 * sigma));
    // Angles of points away from the origin concentrate on the petal axes.
    let bins = 32;
    let w = 2.0 * std::f64::consts::PI / bins as f64;
    let mut hist = vec![0usize; bins];
    for r in xs.rows() {
        if (r[0] * r[0] + r[1] * r[1]).sqrt() > 0.5 {
            let phi = r[1].atan2(r[0]).rem_euclid(2.0 * std::f64::consts::PI);
            hist[((phi + w / 2.0) / w) as usize % bins] += 1;
        }
    }
    let modes = (0..bins)
        .filter(|&i| hist[i] > hist[(i + bins - 1) % bins] && hist[i] >= hist[(i + 1) % bins])
        .count();
    assert_eq!(modes, 8, "{hist:?}");
}

#[test]
fn rose_noiseless_points_lie_on_curve() {
    let xs = sample_rose(1000, 3, 0.0, &mut rng(65)).unwrap();
    for r in xs.rows() {
        let rad = (r[0] * r[0] + r[1] * r[1]).sqrt();
        let th = r[1].atan2(r[0]);
        assert!((rad - (3.0 * th).cos().abs()).abs() < 1e-9);
    }
}

#[test]
fn energy_test_detects_shift() {
    let mut r = rng(66);
    let a = DiagGaussian::standard(2).sample(&mut r, 1000);
    let b = DiagGaussian::isotropic(vec![3.0, 0.0], 1.0).unwrap().sample(&mut r, 1000);
    let (_, p) = permutation_test(&a, &b, 200, &mut r).unwrap();
    assert!(p < 0.01, "{p}");
}

#[test]
fn energy_test_null_is_rarely_rejected() {
    let mut rejections = 0;
    for seed in 0..20 {
        let mut r = rng(700 + seed);
        let pool = DiagGaussian::standard(2).sample(&mut r, 400);
        let (x, y) = (pool.slice_rows(0, 200), pool.slice_rows(200, 400));
        if permutation_pvalue(&x, &y, 99, &mut r).unwrap() <= 0.01 {
            rejections += 1;
        }
    }
    assert!(rejections <= 1, "{rejections} of 20 null tests rejected");
}

#[test]
fn csv_round_trip_and_split_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.csv");
    let mut r = rng(67);
    let m = Samples::new(3, random_vec(&mut r, 300, 5.0)).unwrap();
    std::fs::write(&path, to_csv(&m, Some(&["a", "b", "c"]))).unwrap();
    let parsed = parse_csv(&std::fs::read_to_string(&path).unwrap(), true).unwrap();
    assert_eq!(parsed, m);
    let a = load_csv(&path, true, 0.2, 9).unwrap();
    let b = load_csv(&path, true, 0.2, 9).unwrap();
    assert_eq!(a.train_indices, b.train_indices);
    assert_eq!(a.test_indices, b.test_indices);
    let mean = a.train.mean();
    let var = a.train.variance();
    for c in 0..3 {
        assert!(mean[c].abs() < 1e-9 && (var[c].sqrt() - 1.0).abs() < 1e-9);
    }
    let back = a.destandardize(&a.standardize(&m).unwrap()).unwrap();
    for (x, y) in back.as_slice().iter().zip(m.as_slice()) {
        assert!((x - y).abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn energy_distance_is_symmetric(seed in any::<u64>(), nx in 1usize..20, ny in 1usize..20) {
        let mut r = rng(seed);
        let x = Samples::new(2, random_vec(&mut r, 2 * nx, 3.0)).unwrap();
        let y = Samples::new(2, random_vec(&mut r, 2 * ny, 3.0)).unwrap();
        prop_assert_eq!(energy_distance(&x, &y).unwrap().to_bits(), energy_distance(&y, &x).unwrap().to_bits());
        prop_assert_eq!(energy_distance(&x, &x).unwrap(), 0.0);
        prop_assert!(energy_distance(&x, &y).unwrap() >= -1e-12);
    }

    #[test]
    fn kl_below_chi2_and_nonnegative(
        mp in prop::collection::vec(-2.0f64..2.0, 2),
        vp in prop::collection::vec(0.2f64..1.8, 2),
        vq in prop::collection::vec(1.0f64..2.0, 2),
    ) {
        let p = DiagGaussian::new(mp, vp).unwrap();
        let q = DiagGaussian::new(vec![0.0, 0.0], vq).unwrap();
        let c = chi2_gaussian(&p, &q).unwrap();
        let k = kl_gaussian(&p, &q).unwrap();
        prop_assert!(c >= 0.0 && k >= 0.0);
        prop_assert!(k <= c + 1e-12);
    }

    #[test]
    fn contraction_never_violated(m in 0.0f64..3.0, gamma in 0.0f64..4.0) {
        let rep = check_ou_contraction(&[vec![m, -0.5 * m]], &[gamma]).unwrap();
        prop_assert!(rep[0].passed);
        // And the contracted Gaussian is the closed-form OU marginal.
        let p = DiagGaussian::isotropic(vec![m, -0.5 * m], 1.0).unwrap();
        let moved = ou_gaussian_marginal(&p, gamma).unwrap();
        let lhs = chi2_gaussian(&moved, &DiagGaussian::standard(2)).unwrap();
        prop_assert!((lhs - rep[0].measured).abs() <= 1e-12 * (1.0 + lhs));
    }

    #[test]
    fn dpi_holds_for_diagonal_affine_maps(
        a in prop::collection::vec(prop_oneof![-3.0f64..-0.2, 0.2f64..3.0], 2),
        b in prop::collection::vec(-2.0f64..2.0, 2),
        mp in prop::collection::vec(-1.0f64..1.0, 2),
    ) {
        let p = DiagGaussian::new(mp, vec![0.8, 1.1]).unwrap();
        let q = DiagGaussian::new(vec![0.2, -0.1], vec![1.0, 1.3]).unwrap();
        prop_assert!(check_bidirectional_dpi(&a, &b, &p, &q).unwrap().passed);
    }

    #[test]
    fn csv_parse_never_panics(s in "[0-9eE.,+\\-\n a-z\"]{0,80}", header in any::<bool>()) {
        let _ = parse_csv(&s, header);
    }
}
