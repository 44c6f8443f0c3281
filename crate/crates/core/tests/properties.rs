//! Property-based invariants: word composition is a homomorphism from the
//! free monoid into the similarity group, and grid-accelerated ball queries
//! agree with a linear scan on arbitrary clouds.

use cascade_core::ifs::{IfsSpec, Rotation, Similarity, Word};
use cascade_core::measure::DiscreteMeasure;
use proptest::prelude::*;

fn ifs_strategy() -> impl Strategy<Value = IfsSpec> {
    (1usize..=2, 2usize..=3).prop_flat_map(|(dim, m)| {
        (
            Just(dim),
            prop::collection::vec(0.2f64..0.55, m),
            prop::collection::vec(0.0f64..std::f64::consts::TAU, m),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), m),
        )
            .prop_map(|(dim, ratios, angles, translations)| {
                let maps: Vec<Similarity> = ratios
                    .into_iter()
                    .zip(angles)
                    .zip(translations)
                    .map(|((r, theta), t)| {
                        let rot = if dim == 2 {
                            Rotation::from_angle(theta)
                        } else {
                            Rotation::identity(dim)
                        };
                        Similarity::new(r, rot, t).expect("valid similarity")
                    })
                    .collect();
                IfsSpec::new(maps).expect("valid system")
            })
    })
}

fn word_strategy(m: usize) -> impl Strategy<Value = Vec<u8>> {
    prop::collection::vec(0u8..m as u8, 0..6)
}

type CloudCase = (usize, Vec<Vec<f64>>, Vec<f64>, Vec<(Vec<f64>, f64)>);

fn cloud_strategy() -> impl Strategy<Value = CloudCase> {
    (1usize..=3).prop_flat_map(|dim| {
        (
            Just(dim),
            prop::collection::vec(prop::collection::vec(-1.0f64..1.0, dim), 1..200),
            prop::collection::vec(
                (prop::collection::vec(-1.5f64..1.5, dim), 0.0f64..2.5),
                1..20,
            ),
        )
            .prop_flat_map(|(dim, points, queries)| {
                let n = points.len();
                (
                    Just(dim),
                    Just(points),
                    prop::collection::vec(0.01f64..1.0, n),
                    Just(queries),
                )
            })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// f_{uv} = f_u o f_v for all words, up to roundoff in the matrix
    /// products: both sides applied to a probe point agree to 1e-12 relative.
    #[test]
    fn composition_is_a_word_homomorphism(
        (ifs, u, v, x) in ifs_strategy().prop_flat_map(|ifs| {
            let m = ifs.alphabet_size();
            let dim = ifs.dim();
            (
                Just(ifs),
                word_strategy(m),
                word_strategy(m),
                prop::collection::vec(-1.0f64..1.0, dim),
            )
        })
    ) {
        let mut uv = u.clone();
        uv.extend_from_slice(&v);
        let joined = ifs.compose(&Word::from_symbols(uv.as_slice())).unwrap();
        let outer = ifs.compose(&Word::from_symbols(u.as_slice())).unwrap();
        let inner = ifs.compose(&Word::from_symbols(v.as_slice())).unwrap();
        let split = outer.compose(&inner);

        let a = joined.apply(&x);
        let b = split.apply(&x);
        prop_assert!((joined.ratio() - split.ratio()).abs() <= 1e-12 * (1.0 + joined.ratio()));
        for (ai, bi) in a.iter().zip(&b) {
            prop_assert!(
                (ai - bi).abs() <= 1e-12 * (1.0 + ai.abs() + bi.abs()),
                "coordinates diverge: {ai} vs {bi}"
            );
        }
    }

    /// The bucket-grid ball query and the exhaustive linear scan return the
    /// same mass for every center and radius, up to summation-order roundoff.
    #[test]
    fn indexed_ball_queries_match_linear_scans(
        (dim, points, masses, queries) in cloud_strategy()
    ) {
        let flat: Vec<f64> = points.iter().flatten().copied().collect();
        let nu = DiscreteMeasure::new(dim, flat, masses, None).unwrap();
        nu.ensure_index(0.02);
        let tol = 1e-12 * nu.total_mass();
        for (center, radius) in &queries {
            let fast = nu.ball_mass(center, *radius);
            let slow = nu.ball_mass_linear(center, *radius);
            prop_assert!(
                (fast - slow).abs() <= tol,
                "ball({center:?}, {radius}) indexed {fast} vs linear {slow}"
            );
        }
    }
}
