//! Property tests over the census and the continuous building blocks.

use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use quadmap::boltzmann::{prob_exact, BoltzmannParams};
use quadmap::census::generate_all;
use quadmap::decorated::{hamiltonian, BoundaryCondition, Decoration, SpinMeasure};
use quadmap::error::Error;
use quadmap::map::{canonical_code, glue, is_submap, reroot, MapWithHoles};
use quadmap::markov::{canonical_prefixes, stopping_map_q};
use quadmap::metric::{bridge_decompose_check, bridge_mass, type3_peel, ExactMetricSampler, MetricParams, SkeletonClass, Type3State, Vertex};
use quadmap::peeling::{decode, encode, Builder, PeelEvent};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Every hole-free map with `ℓ + 2f ≤ 8`.
fn census() -> &'static [MapWithHoles] {
    static MAPS: OnceLock<Vec<MapWithHoles>> = OnceLock::new();
    MAPS.get_or_init(|| {
        let mut out = Vec::new();
        for ell in 1..=8 {
            for f in 0..=(8 - ell) / 2 {
                out.extend(generate_all(ell, f).unwrap());
            }
        }
        out
    })
}

fn census_map() -> impl Strategy<Value = &'static MapWithHoles> {
    (0..census().len()).prop_map(|i| &census()[i])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn codec_round_trip(m in census_map()) {
        let s = encode(m).unwrap();
        prop_assert_eq!(canonical_code(&decode(&s).unwrap()), canonical_code(m));
    }

    #[test]
    fn submap_order_on_prefixes(m in census_map(), i in 0usize..64, j in 0usize..64) {
        let p = canonical_prefixes(m).unwrap();
        let (i, j) = (i % p.len(), j % p.len());
        let (lo, hi) = (i.min(j), i.max(j));
        // Reflexive, and prefixes of one exploration form a chain.
        prop_assert!(is_submap(&p[lo], &p[lo]).is_some());
        let fills = is_submap(&p[lo], &p[hi]);
        prop_assert!(fills.is_some());
        prop_assert_eq!(canonical_code(&glue(&p[lo], &fills.unwrap()).unwrap()), canonical_code(&p[hi]));
        // Transitive through the final map.
        prop_assert!(is_submap(&p[lo], m).is_some());
        prop_assert!(is_submap(&MapWithHoles::cemetery(), &p[lo]).is_some());
        // Antisymmetric up to canonical code.
        if is_submap(&p[hi], &p[lo]).is_some() {
            prop_assert_eq!(canonical_code(&p[hi]), canonical_code(&p[lo]));
        }
    }

    #[test]
    fn distinct_complete_maps_are_incomparable(a in census_map(), b in census_map()) {
        let related = is_submap(a, b).is_some();
        prop_assert_eq!(related, canonical_code(a) == canonical_code(b));
    }

    #[test]
    fn rerooting_preserves_probability(m in census_map(), k in 0usize..16) {
        let darts = m.root_face_darts();
        let d = darts[k % darts.len()];
        let params = BoltzmannParams::default();
        prop_assert_eq!(prob_exact(&reroot(m, d).unwrap(), &params).unwrap(), prob_exact(m, &params).unwrap());
    }

    #[test]
    fn type2_labels_must_fit(ell in 1usize..6, l1 in 0usize..6, l2 in 0usize..6) {
        let mut b = Builder::initial(ell).unwrap();
        let h = b.marks()[0];
        let r = b.peel(h, PeelEvent::Type2(l1, l2));
        if l1 + l2 + 1 == ell {
            prop_assert!(r.is_ok());
        } else {
            let is_arity_error = matches!(r, Err(Error::SplitArityMismatch { .. }));
            prop_assert!(is_arity_error);
        }
    }

    #[test]
    fn ising_energy_is_flip_invariant(m in census_map(), bits in any::<u64>(), beta in 0.1f64..3.0) {
        let f = m.internal_face_count();
        let spin = |k: usize| if bits >> (k % 64) & 1 == 1 { 1.0 } else { -1.0 };
        let sigma = Decoration { spins: (0..f).map(spin).collect() };
        let b = BoundaryCondition::new((0..2 * m.semi_perimeter()).map(|k| spin(k + 17)).collect(), m.semi_perimeter(), &SpinMeasure::Ising).unwrap();
        let flip = |v: &[f64]| v.iter().map(|x| -x).collect::<Vec<_>>();
        let h = hamiltonian(m, &sigma, &b, beta).unwrap();
        let hf = hamiltonian(m, &Decoration { spins: flip(&sigma.spins) }, &BoundaryCondition(flip(&b.0)), beta).unwrap();
        prop_assert_eq!(h, hf);
    }

    #[test]
    fn bridge_semigroup(u in -3.0f64..3.0, v in -3.0f64..3.0, w1 in 0.05f64..5.0, w2 in 0.05f64..5.0) {
        prop_assert!(bridge_decompose_check(u, v, w1, w2).unwrap() <= 1e-8);
    }

    #[test]
    fn bridge_mass_is_symmetric_and_shift_invariant(u in -3.0f64..3.0, v in -3.0f64..3.0, c in -3.0f64..3.0, w in 0.01f64..10.0) {
        let m = bridge_mass(u, v, w).unwrap();
        prop_assert!(m > 0.0);
        prop_assert!((bridge_mass(v, u, w).unwrap() - m).abs() <= 1e-15 * m);
        prop_assert!((bridge_mass(u + c, v + c, w).unwrap() - m).abs() <= 1e-12 * m);
    }
}

#[test]
fn stopping_map_is_a_submap() {
    for m in census().iter().filter(|m| m.semi_perimeter() == 1) {
        let s = stopping_map_q(m).unwrap();
        assert!(is_submap(&s, m).is_some(), "{}", encode(m).unwrap());
    }
}

fn explored_maps() -> &'static (Arc<SkeletonClass>, MetricParams) {
    static CLASS: OnceLock<(Arc<SkeletonClass>, MetricParams)> = OnceLock::new();
    CLASS.get_or_init(|| {
        let params = MetricParams { mu: SpinMeasure::Ising, skeleton_cap: 2, ..MetricParams::default() };
        (Arc::new(SkeletonClass::new(1, &[1.0, -1.0], &params).unwrap()), params)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    /// Exploring `a` then `b` grid steps along the root edge reveals the same
    /// segment, tip and remainder as exploring `a + b` at once.
    #[test]
    fn type3_restriction_composes(seed in any::<u64>(), a in 1usize..40, b in 1usize..40) {
        let (class, params) = explored_maps();
        let exact = ExactMetricSampler::new(class.clone(), params).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut m = exact.sample(&mut rng);
        prop_assume!(m.map.skeleton.edges()[0].head != Vertex::Phantom(1));
        m.sample_paths(64, &mut rng).unwrap();
        let h = m.paths[0].step;
        let st = Type3State::new(m.clone()).unwrap();
        let one = type3_peel(&st, 0, (a + b) as f64 * h).unwrap();
        let first = type3_peel(&st, 0, a as f64 * h).unwrap();
        prop_assume!(first.remainder.is_active(0));
        let second = type3_peel(&first.remainder, 0, b as f64 * h).unwrap();
        prop_assert_eq!(one.tip, second.tip);
        let mut joined = first.segment.values.clone();
        joined.extend_from_slice(&second.segment.values[1..]);
        prop_assert_eq!(joined, one.segment.values);
        prop_assert!((first.explored + second.explored - one.explored).abs() < 1e-9);
        prop_assert_eq!(second.revealed.is_some(), one.revealed.is_some());
    }
}
