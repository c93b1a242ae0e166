use nlw_core::diagnostics::{energy_channels, pointwise_bounds, Snapshot};
use nlw_core::model::{make_params, ModelParams};
use nlw_core::scattering::fit_power_law;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Sum of Gaussians times `1 - exp(-r^2)`, so that `w(0) = 0`.
fn random_state(seed: u64, n: usize, h: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..5);
    let bumps: Vec<(f64, f64, f64)> = (0..k)
        .map(|_| (rng.gen_range(-3.0..3.0), rng.gen_range(0.0..6.0), rng.gen_range(0.2..2.0)))
        .collect();
    (0..n)
        .map(|i| {
            let r = i as f64 * h;
            let s: f64 = bumps.iter().map(|(a, c, w)| a * (-((r - c) / w).powi(2)).exp()).sum();
            s * (1.0 - (-r * r).exp())
        })
        .collect()
}

fn params(p: f64) -> ModelParams {
    make_params(p, 0.5 * (5.0 - p) / (p + 1.0) + 0.01).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn pointwise_bounds_hold(seed in any::<u64>(), p in 3.0f64..4.99, k in 5u32..8) {
        let h = 1.0 / f64::from(1 << k);
        let n = (10.0 / h) as usize;
        let w = random_state(seed, n, h);
        let r = pointwise_bounds(&w, h, n - 1, &params(p));
        prop_assert!(r.ratio1 <= 1.0 + 1e-6, "ratio1 = {}", r.ratio1);
        prop_assert!(r.ratio2 <= 1.0 + 1e-6, "ratio2 = {}", r.ratio2);
    }

    #[test]
    fn time_reversal_swaps_channels(seed in any::<u64>(), p in 3.0f64..4.99) {
        let h = 1.0 / 32.0;
        let n = 200;
        let a = random_state(seed, n, h);
        let b = random_state(seed.wrapping_add(1), n, h);
        let next: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + 0.1 * y).collect();
        let prev: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x - 0.1 * y).collect();
        let fwd = Snapshot { step: 0, t: 0.0, h, valid_hi: n - 2, w_prev: prev.clone(), w: a.clone(), w_next: next.clone() };
        let bwd = Snapshot { w_prev: next, w_next: prev, ..fwd.clone() };
        let pp = params(p);
        let f = energy_channels(&fwd, &pp, 0.0, 6.0).unwrap();
        let g = energy_channels(&bwd, &pp, 0.0, 6.0).unwrap();
        let tol = 1e-12 * f.e.max(1e-300);
        prop_assert!((f.e_minus - g.e_plus).abs() <= tol);
        prop_assert!((f.e_plus - g.e_minus).abs() <= tol);
        prop_assert!((f.e - (f.e_minus + f.e_plus)).abs() <= tol);
    }

    #[test]
    fn power_fit_recovers_laws(b in -2.0f64..2.0, a in 0.01f64..100.0, lambda in 0.1f64..10.0) {
        let t: Vec<f64> = (0..8).map(|k| 2f64.powi(k)).collect();
        let y: Vec<f64> = t.iter().map(|v| a * v.powf(b)).collect();
        let f = fit_power_law(&t, &y, None).unwrap();
        prop_assert!((f.exponent - b).abs() < 1e-10);
        prop_assert!((f.amplitude / a - 1.0).abs() < 1e-9);
        // rescaling y leaves the exponent alone
        let ys: Vec<f64> = y.iter().map(|v| lambda * v).collect();
        let g = fit_power_law(&t, &ys, None).unwrap();
        prop_assert!((g.exponent - f.exponent).abs() < 1e-10);
    }
}
