use packdim::kernel::{
    brute_potential, classic_potential, kernel_value, kernel_value_min_form, potential_table, KernelParams, ScaleGrid,
};
use packdim::PointMeasure;
use proptest::prelude::*;

fn params() -> impl Strategy<Value = KernelParams> {
    (0.0f64..3.0, 0.0f64..3.0, 0.01f64..=1.0).prop_map(|(a, b, theta)| KernelParams::new(a.min(b), a.max(b), theta).unwrap())
}

fn measure(max_dim: usize) -> impl Strategy<Value = PointMeasure> {
    (1..=max_dim).prop_flat_map(|n| {
        prop::collection::vec((prop::collection::vec(0.0f64..=1.0, n), 0.01f64..1.0), 1..30).prop_map(move |atoms| {
            let coords = atoms.iter().flat_map(|(x, _)| x.clone()).collect();
            let weights = atoms.iter().map(|(_, w)| *w).collect();
            PointMeasure::from_weighted(n, coords, weights).unwrap()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100_000))]

    #[test]
    fn piecewise_matches_min_form(p in params(), d in 1e-9f64..2.0, r in 1e-9f64..=1.0) {
        let a = kernel_value(&p, d, r);
        let b = kernel_value_min_form(&p, d, r);
        prop_assert!((a - b).abs() <= 1e-14, "piecewise {a} vs min form {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn kernel_bounded_and_monotone(p in params(), d in 0.0f64..2.0, dd in 0.0f64..1.0, r in 1e-9f64..=1.0, f in 0.0f64..=1.0) {
        let k = kernel_value(&p, d, r);
        prop_assert!((0.0..=1.0).contains(&k));
        // Nonincreasing in d, nondecreasing in r.
        prop_assert!(kernel_value(&p, d + dd, r) <= k * (1.0 + 1e-12));
        prop_assert!(kernel_value(&p, d, r * f.max(1e-9)) <= k * (1.0 + 1e-12));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn chain_inequality(mu in measure(3), xs in prop::collection::vec(0.0f64..=1.0, 3), mi in 0usize..3, tf in 0.0f64..=1.0, theta in 0.01f64..=1.0, r in 1e-6f64..=1.0) {
        let n = mu.dim();
        let m = (mi % n + 1) as f64;
        let t = tf * m;
        let x = &xs[..n];
        let fm = classic_potential(&mu, x, m, r);
        let ftm = brute_potential(&mu, x, &KernelParams::new(t, m, theta).unwrap(), r);
        let ftn = brute_potential(&mu, x, &KernelParams::new(t, n as f64, theta).unwrap(), r);
        prop_assert!(fm <= ftm + 1e-12);
        prop_assert!(ftm <= ftn + r.powf(t * (1.0 - theta)) + 1e-12);
    }

    #[test]
    fn table_matches_brute_force(mu in measure(3), p in params(), seed in prop::collection::vec(0.0f64..=1.0, 12), ratio in 0.3f64..0.9) {
        let n = mu.dim();
        let refs: Vec<f64> = seed[..(12 / n) * n].to_vec();
        let grid = ScaleGrid::new(1.0, ratio, 12).unwrap();
        let table = potential_table(&mu, &refs, &p, &grid, true).unwrap();
        for (i, x) in refs.chunks(n).enumerate() {
            for (j, r) in grid.radii().iter().enumerate() {
                let exact = brute_potential(&mu, x, &p, *r);
                prop_assert!((table.get(i, j) - exact).abs() <= 1e-12 * exact.max(1e-300));
            }
        }
    }
}
