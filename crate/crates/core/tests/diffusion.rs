use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use unicardio::diffusion::*;

fn normals(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| StandardNormal.sample(rng)).collect()
}

fn mean_var(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
}

#[test]
fn default_schedule_terminal_and_product() {
    let s = NoiseSchedule::default_schedule();
    assert_eq!(s.steps(), 50);
    let mut prod = 1.0;
    for t in 1..=50 {
        let b = (1e-4f64.sqrt() + (0.5f64.sqrt() - 1e-4f64.sqrt()) * (t - 1) as f64 / 49.0).powi(2);
        assert!((s.beta(t) - b).abs() < 1e-15);
        prod *= 1.0 - b;
        assert!((s.alpha_bar(t) - prod).abs() < 1e-15);
    }
    assert!(s.alpha_bar(50) < 0.01);
    assert_eq!(s.alpha_bar(0), 1.0);
}

#[test]
fn alpha_bar_monotone_over_random_schedules() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let t = rng.random_range(1..=200);
        let a: f64 = rng.random_range(1e-6..0.5);
        let b: f64 = rng.random_range(a..0.999);
        let kind = if rng.random::<bool>() { ScheduleKind::Linear } else { ScheduleKind::Quadratic };
        let s = NoiseSchedule::new(t, kind, a, b).unwrap();
        for i in 1..=t {
            assert!(s.alpha_bar(i) < s.alpha_bar(i - 1));
            assert!(s.alpha_bar(i) > 0.0);
        }
    }
}

#[test]
fn forward_marginal_monte_carlo() {
    let s = NoiseSchedule::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let x0 = [0.8, -1.5];
    for t in [1, 10, 25, 50] {
        let draws: Vec<Vec<f64>> = (0..10_000)
            .map(|_| forward_marginal(&x0, t, &normals(&mut rng, 2), &s).unwrap())
            .collect();
        for (k, &x) in x0.iter().enumerate() {
            let col: Vec<f64> = draws.iter().map(|d| d[k]).collect();
            let (m, v) = mean_var(&col);
            let expect_var = 1.0 - s.alpha_bar(t);
            let sigma_mean = (expect_var / 1e4).sqrt();
            assert!((m - s.alpha_bar(t).sqrt() * x).abs() < 3.0 * sigma_mean, "t {t} mean {m}");
            assert!((v / expect_var - 1.0).abs() < 0.05, "t {t} var {v} vs {expect_var}");
        }
    }
}

#[test]
fn composed_single_steps_match_marginal() {
    let s = NoiseSchedule::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x0 = [1.2];
    let t = 12;
    let chain: Vec<f64> = (0..10_000)
        .map(|_| {
            let mut x = x0.to_vec();
            for step in 1..=t {
                x = forward_step(&x, step, &s, &mut rng).unwrap();
            }
            x[0]
        })
        .collect();
    let (m, v) = mean_var(&chain);
    let expect_var = 1.0 - s.alpha_bar(t);
    assert!((m - s.alpha_bar(t).sqrt() * x0[0]).abs() < 3.0 * (expect_var / 1e4).sqrt());
    assert!((v / expect_var - 1.0).abs() < 0.05);
}

#[test]
fn terminal_distribution_is_standard_normal() {
    let s = NoiseSchedule::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // The residual mean sqrt(abar_T) x0 stays below 0.006 for |x0| <= 1.
    for x0 in [-1.0, 0.0, 1.0] {
        let mut v: Vec<f64> = (0..10_000)
            .map(|_| forward_marginal(&[x0], 50, &normals(&mut rng, 1), &s).unwrap()[0])
            .collect();
        v.sort_by(f64::total_cmp);
        let n = v.len() as f64;
        let d = v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let c = normal_cdf(x);
                (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
            })
            .fold(0.0, f64::max);
        // Critical value of the one-sample KS test at alpha = 0.01.
        assert!(d < 1.628 / n.sqrt(), "x0 {x0}: D = {d}");
    }
}

fn normal_cdf(x: f64) -> f64 {
    // Abramowitz-Stegun 7.1.26 erf approximation (|error| < 1.5e-7).
    let z = x.abs() / std::f64::consts::SQRT_2;
    let t = 1.0 / (1.0 + 0.3275911 * z);
    let poly = t * (0.254829592 + t * (-0.284496736 + t * (1.421413741 + t * (-1.453152027 + t * 1.061405429))));
    let erf = 1.0 - poly * (-z * z).exp();
    0.5 * (1.0 + erf.copysign(x))
}

#[test]
fn loss_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let a = normals(&mut rng, 333);
    let b = normals(&mut rng, 333);
    let mut brute = 0.0;
    for i in 0..a.len() {
        brute += (a[i] - b[i]) * (a[i] - b[i]);
    }
    assert!((noise_prediction_loss(&a, &b) - brute / 333.0).abs() < 1e-12);
    let shifted: Vec<f64> = b.iter().map(|v| v + 0.5).collect();
    assert!((noise_prediction_loss(&shifted, &b) - 0.25).abs() < 1e-12);
}

#[test]
fn ddpm_step_monte_carlo() {
    let s = NoiseSchedule::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (xt, eps) = ([0.3], [-0.7]);
    for t in [2, 20, 50] {
        let mu = ddpm_mean(&xt, &eps, t, &s).unwrap()[0];
        let sigma = ddpm_sigma(t, &s, ReverseVariance::Beta);
        let draws: Vec<f64> = (0..10_000)
            .map(|_| ddpm_step(&xt, &eps, t, &s, ReverseVariance::Beta, &mut rng).unwrap()[0])
            .collect();
        let (m, v) = mean_var(&draws);
        assert!((m - mu).abs() < 3.0 * sigma / 100.0, "t {t}");
        assert!((v.sqrt() / sigma - 1.0).abs() < 0.03, "t {t}");
    }
    let a = ddpm_step(&xt, &eps, 1, &s, ReverseVariance::Beta, &mut rng).unwrap();
    let b = ddpm_step(&xt, &eps, 1, &s, ReverseVariance::Beta, &mut rng).unwrap();
    assert_eq!(a, b);
}

#[test]
fn ddim_with_true_noise_renoises_exactly() {
    let s = NoiseSchedule::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let x0 = normals(&mut rng, 64);
    let eps = normals(&mut rng, 64);
    for (t, t_prev) in [(50, 42), (30, 10), (5, 4), (1, 0)] {
        let xt = forward_marginal(&x0, t, &eps, &s).unwrap();
        let got = ddim_step(&xt, &eps, t, t_prev, &s, 0.0, &mut rng).unwrap();
        let want = if t_prev == 0 { x0.clone() } else { forward_marginal(&x0, t_prev, &eps, &s).unwrap() };
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() < 1e-6, "{t}->{t_prev}: {g} vs {w}");
        }
    }
}

#[test]
fn ddim_eta_zero_equals_ode_bitwise_and_is_deterministic() {
    let s = NoiseSchedule::default_schedule();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let x0 = normals(&mut rng, 32);
    let x_t = normals(&mut rng, 32);
    let predictor = |x: &[f64], t: usize| -> Vec<f64> {
        let ab = s.alpha_bar(t);
        x.iter().zip(&x0).map(|(v, x0)| (v - ab.sqrt() * x0) / (1.0 - ab).sqrt()).collect()
    };
    let run = |rng: &mut ChaCha8Rng, ode: bool| -> Vec<f64> {
        let times = select_subset_timesteps(50, 6).unwrap();
        let mut x = x_t.clone();
        for w in times.windows(2) {
            let e = predictor(&x, w[0]);
            x = if ode {
                ddim_step_ode(&x, &e, w[0], w[1], &s).unwrap()
            } else {
                ddim_step(&x, &e, w[0], w[1], &s, 0.0, rng).unwrap()
            };
        }
        x
    };
    let a = run(&mut ChaCha8Rng::seed_from_u64(1), false);
    let b = run(&mut ChaCha8Rng::seed_from_u64(2), false);
    let c = run(&mut ChaCha8Rng::seed_from_u64(3), true);
    assert_eq!(a, b);
    assert_eq!(a, c);
    for (g, w) in a.iter().zip(&x0) {
        assert!((g - w).abs() <= 1e-4 * w.abs().max(1.0));
    }
}

#[test]
fn subset_timesteps_spacing() {
    let ts = select_subset_timesteps(50, 6).unwrap();
    assert_eq!(ts.len(), 7);
    assert_eq!((ts[0], ts[6]), (50, 0));
    for w in ts.windows(2) {
        let gap = (w[0] - w[1]) as f64;
        assert!((gap - 50.0 / 6.0).abs() <= 1.0);
    }
    assert_eq!(select_subset_timesteps(50, 50).unwrap(), (0..=50).rev().collect::<Vec<_>>());
    assert_eq!(select_subset_timesteps(50, 1).unwrap(), vec![50, 0]);
    assert!(select_subset_timesteps(50, 51).is_err());
}

proptest! {
    #[test]
    fn forward_marginal_is_affine(
        x in prop::collection::vec(-3.0f64..3.0, 8),
        y in prop::collection::vec(-3.0f64..3.0, 8),
        e in prop::collection::vec(-3.0f64..3.0, 8),
        a in -2.0f64..2.0, b in -2.0f64..2.0, t in 1usize..=50,
    ) {
        let s = NoiseSchedule::default_schedule();
        let mix: Vec<f64> = x.iter().zip(&y).map(|(p, q)| a * p + b * q).collect();
        let lhs = forward_marginal(&mix, t, &e, &s).unwrap();
        let fx = forward_marginal(&x, t, &e, &s).unwrap();
        let fy = forward_marginal(&y, t, &e, &s).unwrap();
        let c = (a + b - 1.0) * (1.0 - s.alpha_bar(t)).sqrt();
        for i in 0..8 {
            prop_assert!((lhs[i] - (a * fx[i] + b * fy[i] - c * e[i])).abs() < 1e-9);
        }
    }

    #[test]
    fn subset_is_strictly_decreasing(t in 1usize..200, n in 1usize..200) {
        prop_assume!(n <= t);
        let ts = select_subset_timesteps(t, n).unwrap();
        prop_assert_eq!(ts[0], t);
        prop_assert_eq!(*ts.last().unwrap(), 0);
        prop_assert!(ts.windows(2).all(|w| w[0] > w[1]));
    }
}
