use proptest::prelude::*;
use ringcoag::{
    exact_asymmetric, exact_symmetric, integrate_at, ClusterSpectrum, KernelKind, PowerSeries,
    SolverConfig,
};

fn spectrum(plus: &PowerSeries, minus: &PowerSeries) -> ClusterSpectrum {
    let side = |s: &PowerSeries| -> Vec<(u64, f64)> {
        (1..=s.truncation())
            .filter(|&l| s.coeff(l) > 0.0)
            .map(|l| (l as u64, s.coeff(l)))
            .collect()
    };
    ClusterSpectrum::from_pairs(side(plus), side(minus)).unwrap()
}

fn max_diff(plus: &PowerSeries, minus: &PowerSeries, times: &[f64], l: usize) -> f64 {
    let cfg = SolverConfig::new(l, 0.005).unwrap();
    let traj = integrate_at(&spectrum(plus, minus), times, &cfg, KernelKind::Random).unwrap();
    let mut worst = 0.0f64;
    for s in &traj {
        let (p, m) = exact_asymmetric(plus, minus, s.t).unwrap();
        for i in 0..l {
            worst = worst.max((s.f_plus[i] - p.coeff(i + 1)).abs());
            worst = worst.max((s.f_minus[i] - m.coeff(i + 1)).abs());
        }
    }
    worst
}

#[test]
fn monomial_pair_matches_at_t1() {
    let a = PowerSeries::monomial(1, 1.0, 64);
    let b = PowerSeries::monomial(2, 1.0, 64);
    let d = max_diff(&a, &b, &[1.0], 64);
    assert!(d <= 1e-8, "{d}");
}

#[test]
fn symmetric_oracle_matches_solver() {
    let f0 = PowerSeries::from_terms([(1, 0.5), (2, 0.25), (5, 0.25)], 128).unwrap();
    let cfg = SolverConfig::new(128, 0.005).unwrap();
    let init = spectrum(&f0, &f0);
    let traj = integrate_at(&init, &[1.0, 3.0, 5.0], &cfg, KernelKind::Random).unwrap();
    for s in &traj {
        let exact = exact_symmetric(&f0, s.t).unwrap();
        for i in 0..128 {
            assert!((s.f_plus[i] - exact.coeff(i + 1)).abs() <= 1e-8);
            assert_eq!(s.f_plus[i], s.f_minus[i]);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn oracle_equivalence_small_support(
        plus in prop::collection::vec(0.0f64..1.0, 8),
        minus in prop::collection::vec(0.0f64..1.0, 8),
        t in 0.1f64..5.0,
    ) {
        let (sp, sm): (f64, f64) = (plus.iter().sum(), minus.iter().sum());
        prop_assume!(sp > 0.1 && sm > 0.1);
        let make = |c: &[f64], total: f64| {
            PowerSeries::from_terms(c.iter().enumerate().map(|(i, &v)| (i + 1, v / total)), 128).unwrap()
        };
        let (a, b) = (make(&plus, sp), make(&minus, sm));
        let d = max_diff(&a, &b, &[t], 128);
        prop_assert!(d <= 1e-8, "{}", d);
    }
}
