use std::collections::BTreeMap;

use packdim::measure::{load_measure, make_ifs_measure, make_product_measure, save_measure, IfsSystem, Similarity};
use packdim::PointMeasure;
use proptest::prelude::*;

fn random_ifs(dim: usize, ratios: &[f64], probs: &[f64], shifts: &[f64]) -> IfsSystem {
    let maps = ratios
        .iter()
        .enumerate()
        .map(|(i, r)| Similarity {
            ratio: *r,
            translation: (0..dim).map(|k| shifts[(i * dim + k) % shifts.len()] * (1.0 - r)).collect(),
        })
        .collect();
    let total: f64 = probs.iter().sum();
    IfsSystem::new(dim, maps, probs.iter().map(|p| p / total).collect()).unwrap()
}

/// Weight by first-factor coordinates, keyed on the rounded coordinate.
fn marginal(mu: &PointMeasure, range: std::ops::Range<usize>) -> BTreeMap<Vec<i64>, f64> {
    let mut out = BTreeMap::new();
    for (x, w) in mu.atoms().zip(mu.weights()) {
        let key = x[range.clone()].iter().map(|v| (v * 1e9).round() as i64).collect();
        *out.entry(key).or_insert(0.0) += w;
    }
    out
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ifs_weights_sum_to_one(
        dim in 1usize..=3,
        ratios in prop::collection::vec(0.05f64..0.6, 2..5),
        probs in prop::collection::vec(0.05f64..1.0, 5),
        shifts in prop::collection::vec(0.0f64..=1.0, 15),
        depth in 1usize..6,
    ) {
        let ifs = random_ifs(dim, &ratios, &probs[..ratios.len()], &shifts);
        let mu = make_ifs_measure(&ifs, depth).unwrap();
        let total: f64 = mu.weights().iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-9);
        prop_assert!(mu.coords().iter().all(|c| (0.0..=1.0).contains(c)));
    }

    #[test]
    fn cantor_similarity_dimension(r in 0.05f64..=0.5, k in 2usize..6) {
        // k equal maps of ratio r laid out left to right without overlap.
        let r = r.min(1.0 / k as f64);
        let maps = (0..k)
            .map(|i| Similarity { ratio: r, translation: vec![i as f64 * (1.0 - r) / (k - 1) as f64] })
            .collect();
        let ifs = IfsSystem::new(1, maps, vec![1.0 / k as f64; k]).unwrap();
        let expected = (k as f64).ln() / (1.0 / r).ln();
        prop_assert!((ifs.similarity_dimension() - expected).abs() < 1e-12);
    }

    #[test]
    fn product_weights_and_marginals(ra in 0.1f64..=0.5, rb in 0.1f64..=0.5, da in 1usize..5, db in 1usize..5) {
        let a = make_ifs_measure(&IfsSystem::cantor(ra).unwrap(), da).unwrap();
        let b = make_ifs_measure(&IfsSystem::cantor(rb).unwrap(), db).unwrap();
        let p = make_product_measure(&a, &b).unwrap();
        prop_assert!((p.weights().iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (factor, range) in [(&a, 0..1), (&b, 1..2)] {
            let got = marginal(&p, range);
            let want = marginal(factor, 0..1);
            prop_assert_eq!(got.len(), want.len());
            for (k, w) in &want {
                prop_assert!((got[k] - w).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn save_then_load_is_identity(
        dim in 1usize..=3,
        atoms in prop::collection::vec((prop::collection::vec(0.0f64..=1.0, 3), 0.01f64..1.0), 1..40),
    ) {
        let mut coords = Vec::new();
        let mut weights = Vec::new();
        for (x, w) in &atoms {
            coords.extend_from_slice(&x[..dim]);
            weights.push(*w);
        }
        let mu = PointMeasure::from_weighted(dim, coords, weights).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mu.txt");
        save_measure(&mu, &path).unwrap();
        let back = load_measure(&path).unwrap();
        prop_assert_eq!(back.dim(), mu.dim());
        prop_assert_eq!(back.coords(), mu.coords());
        prop_assert_eq!(back.weights(), mu.weights());
    }
}
