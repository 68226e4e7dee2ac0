use amoebot_convex::decompose::decompose;
use amoebot_convex::distalgo::{reassemble, run_distributed};
use amoebot_convex::generate::{generate_with, GenParams};
use amoebot_convex::oracle::{distance_identity, is_simple, verify_decomposition};
use amoebot_convex::portals::portal_graph;
use amoebot_convex::split::Region;
use amoebot_convex::{AmoebotStructure, Axis};
use proptest::prelude::*;

fn structure() -> impl Strategy<Value = AmoebotStructure> {
    (5usize..220, 0usize..5, any::<u64>(), 0.0f64..0.95, 1usize..8).prop_map(|(n, holes, seed, arm_bias, cells)| {
        generate_with(n, holes, seed, GenParams { arm_bias, max_hole_cells: cells })
    })
}

fn simple_structure() -> impl Strategy<Value = AmoebotStructure> {
    (2usize..150, any::<u64>(), 0.0f64..0.95)
        .prop_map(|(n, seed, arm_bias)| generate_with(n, 0, seed, GenParams { arm_bias, max_hole_cells: 1 }))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn decomposition_passes_every_oracle(s in structure()) {
        let dec = decompose(&s).unwrap();
        let report = verify_decomposition(&s, &dec);
        prop_assert!(report.passed(), "{:?}", report.failures());
    }

    #[test]
    fn counting_bounds(s in structure()) {
        let dec = decompose(&s).unwrap();
        let h = dec.holes;
        prop_assert!(dec.phase1_regions.len() <= 3 * h + 1);
        prop_assert!(dec.gates.len() <= 6 * h);
        prop_assert!(dec.phase1_regions.iter().all(|r| is_simple(&r.node_set())));
    }

    #[test]
    fn portal_graphs_of_simple_regions_are_trees(s in structure()) {
        let dec = decompose(&s).unwrap();
        for r in dec.phase1_regions.iter().chain(&dec.regions) {
            for axis in Axis::ALL {
                prop_assert!(portal_graph(r, axis).is_tree());
            }
        }
        let whole = Region::from_structure(&s);
        prop_assert_eq!(portal_graph(&whole, Axis::Y).has_cycle(), dec.holes > 0);
    }

    #[test]
    fn distance_identity_on_simple_structures(s in simple_structure()) {
        prop_assert_eq!(distance_identity(&Region::from_structure(&s)), Ok(()));
    }

    #[test]
    fn text_round_trip(s in structure()) {
        prop_assert_eq!(AmoebotStructure::parse(&s.to_text()).unwrap(), s);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn distributed_equals_centralized(s in structure(), seed in any::<u64>()) {
        let central = decompose(&s).unwrap();
        let out = run_distributed(&s, seed, s.len() as u64).unwrap();
        prop_assert_eq!(out.decomposition.shapes(), central.shapes());
        let mut back: Vec<_> = reassemble(&out.knowledge).iter().map(Region::shape).collect();
        back.sort();
        prop_assert_eq!(back, central.shapes());
    }

    #[test]
    fn distributed_is_deterministic_per_seed(s in structure(), seed in any::<u64>()) {
        let a = run_distributed(&s, seed, s.len() as u64).unwrap();
        let b = run_distributed(&s, seed, s.len() as u64).unwrap();
        prop_assert_eq!(a.trace, b.trace);
        prop_assert_eq!(a.knowledge, b.knowledge);
    }
}
