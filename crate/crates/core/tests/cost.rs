use std::path::Path;

use num_rational::Ratio;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use dynamap::cost::{
    build_cost_graph, gemm_steady_cycles, gemm_utilization, layer_cost, transition_cost, utilization, AlgoChoice,
    Dataflow, GemmDims, HwConfig, VertexKind,
};
use dynamap::dse::{dataflow_table, DataflowPolicy};
use dynamap::model::{available_algorithms, load_model, rewrite_avgpool, LayerMeta};

const WINO: AlgoChoice = AlgoChoice::Winograd { m: 2, r: 3 };

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn arb_dims() -> impl Strategy<Value = GemmDims> {
    (1u64..5000, 1u64..2000, 1u64..1024).prop_map(|(a, b, c)| GemmDims::new(a, b, c))
}

fn arb_df() -> impl Strategy<Value = Dataflow> {
    prop::sample::select(Dataflow::ALL.to_vec())
}

fn arb_layer() -> impl Strategy<Value = LayerMeta> {
    (
        1usize..256,
        1usize..256,
        1usize..64,
        prop::sample::select(vec![1usize, 3, 5, 7]),
        1usize..=2,
    )
        .prop_map(|(ci, co, h, k, s)| LayerMeta::square(ci, co, h.max(k), k, s, 0))
}

proptest! {
    #[test]
    fn utilization_is_at_most_one(d in arb_dims(), df in arb_df(), p1 in 1usize..128, p2 in 1usize..128) {
        let hw = HwConfig::default().with_array(p1, p2);
        let mu = gemm_utilization(d, &hw, df);
        prop_assert!(mu > Ratio::from_integer(0) && mu <= Ratio::from_integer(1));
    }

    #[test]
    fn layer_utilization_is_at_most_one(l in arb_layer(), df in arb_df(), p1 in 1usize..96, p2 in 1usize..96) {
        let hw = HwConfig::default().with_array(p1, p2);
        for algo in available_algorithms(&l, (2, 3)) {
            let mu = utilization(&l, algo, df, &hw).unwrap();
            prop_assert!(mu <= Ratio::from_integer(1), "{} {} {}", algo, df, mu);
        }
    }

    #[test]
    fn exact_tiling_wastes_nothing(ta in 1u64..20, tc in 1u64..20, b in 1u64..500, p1 in 1usize..40, p2 in 1usize..40) {
        let d = GemmDims::new(ta * p1 as u64, b, tc * p2 as u64);
        let hw = HwConfig::default().with_array(p1, p2);
        prop_assert_eq!(gemm_steady_cycles(d, &hw, Dataflow::NS), ta * tc * b);
        prop_assert_eq!(gemm_utilization(d, &hw, Dataflow::NS), Ratio::from_integer(1));
    }

    #[test]
    fn more_rows_never_slow_the_steady_state(d in arb_dims(), df in arb_df(), p1 in 1usize..100, p2 in 1usize..100) {
        let small = HwConfig::default().with_array(p1, p2);
        let big = HwConfig::default().with_array(p1 + 1, p2);
        prop_assert!(gemm_steady_cycles(d, &big, df) <= gemm_steady_cycles(d, &small, df));
    }

    #[test]
    fn transitions_scale_inversely_with_bandwidth(l in arb_layer(), c in 1u64..512) {
        let hw = HwConfig::default();
        let mut fast = hw.clone();
        fast.bw *= 2.0;
        let algos = [AlgoChoice::Im2col, AlgoChoice::Kn2row, WINO];
        for from in algos {
            for to in algos {
                if from.is_winograd() && to == AlgoChoice::Im2col {
                    continue; // constant reordering overhead does not scale
                }
                let (a, b) = (transition_cost(from, to, &l, c, &hw), transition_cost(from, to, &l, c, &fast));
                prop_assert!((a - 2.0 * b).abs() <= 1e-9 * a.max(1.0), "{} -> {}: {} vs {}", from, to, a, b);
                prop_assert!(a >= 0.0);
            }
        }
    }
}

#[test]
fn unavailable_algorithm_is_an_error() {
    let l = LayerMeta::square(8, 8, 16, 3, 2, 1);
    let hw = HwConfig::default().with_array(8, 8);
    assert!(layer_cost(&l, WINO, Dataflow::NS, &hw).is_err());
    assert!(layer_cost(&l, AlgoChoice::Im2col, Dataflow::NS, &hw).is_ok());
}

#[test]
fn device_profile_errors() {
    assert!(HwConfig::parse(r#"{"dsp_budget": 10, "warp_factor": 9}"#).is_err());
    let err = HwConfig::load(Path::new("/missing/u200.json")).unwrap_err();
    assert!(err.to_string().contains("/missing/u200.json"));
    let hw = HwConfig::load(&fixture("u200.json")).unwrap();
    assert_eq!(hw.dsp_budget, 6084);
}

#[test]
fn cost_graphs_of_fixtures_are_series_parallel() {
    let hw = HwConfig::load(&fixture("u200.json")).unwrap().with_array(64, 64);
    for name in ["googlenet.json", "inception_v4.json", "toy2.json"] {
        let g = load_model(&fixture(name)).unwrap();
        let psi = dataflow_table(&g, &hw, DataflowPolicy::Auto).unwrap();
        let cg = build_cost_graph(&g, &hw, &psi).unwrap();
        assert!(cg.to_pbqp().is_series_parallel().0, "{name}");
    }
}

#[test]
fn cost_graph_structure_and_objective() {
    let hw = HwConfig::load(&fixture("u200.json")).unwrap().with_array(32, 16);
    let g = load_model(&fixture("googlenet.json")).unwrap();
    let psi = dataflow_table(&g, &hw, DataflowPolicy::Auto).unwrap();
    let cg = build_cost_graph(&g, &hw, &psi).unwrap();
    let r = rewrite_avgpool(&g);
    for v in 0..r.len() {
        let cv = &cg.vertices[cg.layer_vertex[v]];
        match r.conv(v) {
            Some(m) => {
                assert_eq!(cv.kind, VertexKind::Compute);
                assert_eq!(cv.choices.len(), available_algorithms(m, (2, 3)).len());
            }
            None => assert_eq!((cv.kind, cv.cost.as_slice()), (VertexKind::Relay, &[0.0][..])),
        }
    }
    let splits = cg.vertices.iter().filter(|v| v.kind == VertexKind::Split).count();
    let fanout = (0..r.len()).filter(|&v| r.out_degree(v) > 1).count();
    assert_eq!(splits, fanout);

    let inst = cg.to_pbqp();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..20 {
        let a: Vec<usize> = cg.vertices.iter().map(|v| rng.gen_range(0..v.choices.len())).collect();
        assert_eq!(cg.objective(&a), inst.objective(&a));
    }
}
