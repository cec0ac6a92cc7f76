use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;

use dynamap::cost::{build_cost_graph, layer_cost, AlgoChoice, Dataflow, HwConfig};
use dynamap::dse::{
    baseline_plan, candidate_shapes, fuse_onchip, largest_square, optimize_with_baselines, plan_with, run_dynamap,
    scan_array_dims, search_array_dims, select_dataflow, utilization_report, AlgoPolicy, FusionMode, MappingPlan,
    RunOptions, SearchOptions, TauMode,
};
use dynamap::model::{load_model, parse_model, rewrite_avgpool, CnnGraph, LayerMeta};
use dynamap::pbqp::{solve_bruteforce, solve_sp, PbqpInstance};

const WINO: AlgoChoice = AlgoChoice::Winograd { m: 2, r: 3 };

fn fixture(name: &str) -> std::path::PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures").join(name)
}

fn u200() -> HwConfig {
    HwConfig::load(&fixture("u200.json")).unwrap()
}

fn opts(fusion: FusionMode) -> RunOptions {
    RunOptions {
        fusion,
        ..RunOptions::default()
    }
}

fn check_totals(plan: &MappingPlan, hw: &HwConfig) {
    let sum: f64 = plan.per_layer.iter().map(|r| r.compute_cycles + r.edge_cycles).sum();
    assert!((sum - plan.total_cycles).abs() <= 1e-6 * plan.total_cycles.max(1.0));
    assert!(
        (plan.total_cycles - (plan.pbqp_objective - plan.fusion_savings)).abs() <= 1e-6 * plan.total_cycles.max(1.0)
    );
    assert!((plan.total_ms - plan.total_cycles / (hw.freq_mhz * 1e3)).abs() < 1e-9);
    for r in &plan.per_layer {
        if let Some(mu) = r.utilization {
            assert!(mu > 0.0 && mu <= 1.0, "{}: {mu}", r.layer);
        }
    }
}

#[test]
fn dataflow_selection_on_the_pseudo_layer() {
    // im2col of this layer issues the GEMM (62, 124, 64)
    let l = LayerMeta::new(124, 64, (62, 1), (1, 1), 1, (0, 0));
    let (df, cycles) = select_dataflow(&l, AlgoChoice::Im2col, 31, 31, &HwConfig::default()).unwrap();
    assert_eq!((df, cycles), (Dataflow::IS, 543));
}

proptest! {
    #[test]
    fn selected_dataflow_is_the_cheapest(ci in 1usize..300, co in 1usize..300, h in 1usize..60, p1 in 1usize..64, p2 in 1usize..64) {
        let l = LayerMeta::square(ci, co, h, 1, 1, 0);
        let hw = HwConfig::default();
        let (df, c) = select_dataflow(&l, AlgoChoice::Kn2row, p1, p2, &hw).unwrap();
        let all: Vec<u64> = Dataflow::ALL
            .iter()
            .map(|&d| layer_cost(&l, AlgoChoice::Kn2row, d, &hw.with_array(p1, p2)).unwrap())
            .collect();
        prop_assert_eq!(c, *all.iter().min().unwrap());
        let first = Dataflow::ALL.iter().position(|&d| d == df).unwrap();
        prop_assert!(all[..first].iter().all(|&x| x > c));
    }

    #[test]
    fn candidates_respect_the_budget(budget in 1usize..400, per_pe in 1usize..4, max_dim in 1usize..40) {
        let hw = HwConfig { dsp_budget: budget, dsp_per_pe: per_pe, max_dim, ..HwConfig::default() };
        for (p1, p2) in candidate_shapes(&hw, false) {
            prop_assert!(p1 >= p2 && p1 * p2 * per_pe <= budget && p1 <= max_dim);
        }
    }
}

#[test]
fn search_picks_the_scan_minimum() {
    let g = load_model(&fixture("googlenet.json")).unwrap();
    let hw = u200();
    for tau in [TauMode::Sum, TauMode::Min] {
        let o = SearchOptions {
            tau,
            ..Default::default()
        };
        let res = search_array_dims(&g, &hw, &o).unwrap();
        let scan = scan_array_dims(&g, &hw, &o).unwrap();
        assert_eq!(res.candidates, scan.len());
        assert!(scan.iter().all(|&(_, _, t)| t >= res.tau_min));
        assert!(res.p_sa1 * res.p_sa2 * hw.dsp_per_pe <= hw.dsp_budget);
        // the optimum is not square for this network
        assert_ne!(res.p_sa1, res.p_sa2);
    }
}

#[test]
fn scan_is_independent_of_thread_count() {
    let g = load_model(&fixture("inception_v4.json")).unwrap();
    let hw = u200();
    let one = search_array_dims(
        &g,
        &hw,
        &SearchOptions {
            jobs: Some(1),
            ..Default::default()
        },
    )
    .unwrap();
    let four = search_array_dims(
        &g,
        &hw,
        &SearchOptions {
            jobs: Some(4),
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(one, four);
}

#[test]
fn square_search_stays_square() {
    let g = load_model(&fixture("toy2.json")).unwrap();
    let res = search_array_dims(
        &g,
        &u200(),
        &SearchOptions {
            square: true,
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(res.p_sa1, res.p_sa2);
    assert!(res.p_sa1 <= largest_square(&u200()));
}

#[test]
fn toy_plan_is_the_enumerated_optimum() {
    let g = load_model(&fixture("toy2.json")).unwrap();
    let hw = u200();
    for mode in [FusionMode::Off, FusionMode::Aware] {
        let plan = run_dynamap(&g, &hw, &opts(mode)).unwrap();
        let hwa = hw.with_array(plan.dse.p_sa1, plan.dse.p_sa2);
        let cg = build_cost_graph(&g, &hwa, &plan.dse.psi).unwrap();
        let cg = if mode == FusionMode::Aware {
            dynamap::dse::fusion_discounted(&g, &cg, &hwa)
        } else {
            cg
        };
        let brute = solve_bruteforce(&cg.to_pbqp()).unwrap();
        assert!((brute.objective - plan.total_cycles).abs() < 1e-6, "{mode:?}");
        check_totals(&plan, &hw);
    }
}

#[test]
fn edge_free_toy_takes_per_layer_argmins() {
    let g = load_model(&fixture("toy2.json")).unwrap();
    let hw = u200();
    let plan = run_dynamap(&g, &hw, &opts(FusionMode::Off)).unwrap();
    let hwa = hw.with_array(plan.dse.p_sa1, plan.dse.p_sa2);
    let mut cg = build_cost_graph(&g, &hwa, &plan.dse.psi).unwrap();
    for e in &mut cg.edges {
        e.matrix.iter_mut().for_each(|x| *x = 0.0);
    }
    let sol = solve_sp(&cg.to_pbqp()).unwrap();
    for (v, &a) in cg.vertices.iter().zip(&sol.assignment) {
        let best = v.cost.iter().cloned().fold(f64::INFINITY, f64::min);
        assert_eq!(v.cost[a], best, "{}", v.label);
    }
}

#[test]
fn hand_built_toy_tables() {
    // input -> A (3x3: im2col, kn2row, winograd) -> B (1x7: im2col, kn2row) -> output
    let mut inst = PbqpInstance::new(
        vec![vec![0.0], vec![900.0, 700.0, 400.0], vec![500.0, 300.0], vec![0.0]],
        0,
        3,
    );
    inst.add_edge_flat(0, 1, vec![12.0, 4.0, 16.0]).unwrap();
    inst.add_edge_flat(1, 2, vec![20.0, 6.0, 10.0, 4.0, 30.0, 8.0]).unwrap();
    inst.add_edge_flat(2, 3, vec![5.0, 5.0]).unwrap();
    let brute = solve_bruteforce(&inst).unwrap();
    let sol = solve_sp(&inst).unwrap();
    assert_eq!(sol, brute);
    assert_eq!(sol.assignment, vec![0, 2, 1, 0]);
    assert_eq!(sol.objective, 16.0 + 400.0 + 8.0 + 300.0 + 5.0);
}

#[test]
fn fusion_drops_exactly_the_fused_edge_cost() {
    let doc = r#"{
      "name": "pair",
      "layers": [
        {"id": "in", "kind": "input", "c_out": 4, "h": 8},
        {"id": "a", "kind": "conv", "c_in": 4, "c_out": 4, "h": 8, "k": 3, "stride": 1, "pad": 1},
        {"id": "b", "kind": "conv", "c_in": 4, "c_out": 4, "h": 8, "k": 1, "stride": 1, "pad": 0},
        {"id": "out", "kind": "output"}
      ],
      "edges": [["in", "a"], ["a", "b"], ["b", "out"]],
      "input": "in",
      "output": "out"
    }"#;
    let g = parse_model(doc).unwrap();
    let hw = HwConfig {
        sram_capacity: u64::MAX / 4,
        ..u200()
    };
    let off = run_dynamap(&g, &hw, &opts(FusionMode::Off)).unwrap();
    let post = run_dynamap(&g, &hw, &opts(FusionMode::Post)).unwrap();
    assert_eq!(off.assignment, post.assignment);
    assert_eq!(post.fused_edges.len(), 1);
    let edge = post.per_layer.iter().find(|r| r.layer == "b").unwrap();
    let before = off.per_layer.iter().find(|r| r.layer == "b").unwrap();
    assert_eq!(edge.edge_cycles, 0.0);
    assert!((off.total_cycles - post.total_cycles - before.edge_cycles).abs() < 1e-9);

    let none = HwConfig {
        sram_capacity: 0,
        ..u200()
    };
    assert!(run_dynamap(&g, &none, &RunOptions::default())
        .unwrap()
        .fused_edges
        .is_empty());
}

#[test]
fn fusion_needs_a_single_consumer() {
    let g = load_model(&fixture("googlenet.json")).unwrap();
    let algos: BTreeMap<usize, AlgoChoice> = g.conv_indices().into_iter().map(|v| (v, AlgoChoice::Kn2row)).collect();
    let hw = HwConfig {
        sram_capacity: u64::MAX / 4,
        ..u200()
    };
    for (u, v) in fuse_onchip(&g, &algos, &hw) {
        assert_eq!(g.out_degree(u), 1);
        assert!(g.conv(u).is_some() && g.conv(v).is_some());
    }
}

fn dominance(g: &CnnGraph, mode: FusionMode) {
    let hw = u200();
    let (plan, baselines) = optimize_with_baselines(g, &hw, &opts(mode)).unwrap();
    assert_eq!(baselines.len(), 3);
    check_totals(&plan, &hw);
    for b in &baselines {
        check_totals(b, &hw);
        assert_eq!((b.dse.p_sa1, b.dse.p_sa2), (plan.dse.p_sa1, plan.dse.p_sa2));
        assert!(
            plan.total_cycles <= b.total_cycles,
            "{} {:?} vs {}",
            g.name,
            mode,
            b.policy.name()
        );
    }
}

#[test]
fn dynamic_never_loses_to_a_baseline() {
    for name in ["googlenet.json", "inception_v4.json", "toy2.json"] {
        let g = load_model(&fixture(name)).unwrap();
        dominance(&g, FusionMode::Aware);
        dominance(&g, FusionMode::Off);
    }
}

#[test]
fn fusion_aware_solve_is_never_worse_than_post_fusion() {
    let hw = u200();
    for name in ["googlenet.json", "inception_v4.json"] {
        let g = load_model(&fixture(name)).unwrap();
        let dse = search_array_dims(&g, &hw, &SearchOptions::default()).unwrap();
        let aware = plan_with(&g, &hw, &dse, AlgoPolicy::Dynamic, FusionMode::Aware).unwrap();
        let post = plan_with(&g, &hw, &dse, AlgoPolicy::Dynamic, FusionMode::Post).unwrap();
        assert!(aware.total_cycles <= post.total_cycles, "{name}");
    }
}

#[test]
fn baselines_use_only_their_algorithm() {
    let g = load_model(&fixture("inception_v4.json")).unwrap();
    let hw = u200();
    let dse = search_array_dims(&g, &hw, &SearchOptions::default()).unwrap();
    let im2col = baseline_plan(&g, &hw, &dse, AlgoPolicy::Im2colOnly, FusionMode::Aware).unwrap();
    assert!(im2col.assignment.values().all(|&a| a == AlgoChoice::Im2col));
    let kn2row = baseline_plan(&g, &hw, &dse, AlgoPolicy::Kn2rowApplied, FusionMode::Aware).unwrap();
    assert!(kn2row.assignment.values().all(|&a| a == AlgoChoice::Kn2row));
    let wino = baseline_plan(&g, &hw, &dse, AlgoPolicy::WinoApplied, FusionMode::Aware).unwrap();
    assert!(wino.assignment.values().all(|&a| a == WINO || a == AlgoChoice::Im2col));
    assert!(wino.assignment.values().any(|&a| a == WINO));
}

fn share(plan: &MappingPlan, g: &CnnGraph, pick: impl Fn(&LayerMeta) -> bool, algo: AlgoChoice) -> (usize, usize) {
    let mut hit = 0;
    let mut total = 0;
    for v in g.conv_indices() {
        let m = g.conv(v).unwrap();
        if pick(m) {
            total += 1;
            hit += usize::from(plan.assignment[&g.layers[v].id] == algo);
        }
    }
    (hit, total)
}

#[test]
fn inception_mix_depends_on_fusion() {
    let g = load_model(&fixture("inception_v4.json")).unwrap();
    let hw = u200();
    let asym = |m: &LayerMeta| m.k1 != m.k2 && m.k1.max(m.k2) == 7;
    let sq3 = |m: &LayerMeta| m.k1 == 3 && m.k2 == 3 && m.stride == 1;

    // solved on unfused transfer costs: kn2row on every 1x7 / 7x1 layer
    let post = run_dynamap(&g, &hw, &opts(FusionMode::Post)).unwrap();
    let (hit, total) = share(&post, &g, asym, AlgoChoice::Kn2row);
    assert!(total > 0 && 2 * hit > total, "kn2row on {hit}/{total}");

    // fusion-aware: chains of asymmetric kernels stay on chip and Winograd
    // takes most eligible 3x3 layers
    let aware = run_dynamap(&g, &hw, &RunOptions::default()).unwrap();
    let (hit, total) = share(&aware, &g, sq3, WINO);
    assert!(total > 0 && 2 * hit > total, "winograd on {hit}/{total}");
}

#[test]
fn utilization_report_covers_three_configurations() {
    let g = load_model(&fixture("googlenet.json")).unwrap();
    let hw = u200();
    let plan = run_dynamap(&g, &hw, &RunOptions::default()).unwrap();
    let rep = utilization_report(&g, &plan, &hw, TauMode::Sum).unwrap();
    assert_eq!(rep.configs.len(), 3);
    // the final average pool is reported as the convolution it runs as
    assert_eq!(rep.rows.len(), rewrite_avgpool(&g).conv_indices().len());
}

#[test]
fn plan_documents_are_stable() {
    let g = load_model(&fixture("googlenet.json")).unwrap();
    let hw = u200();
    let a = run_dynamap(&g, &hw, &RunOptions::default()).unwrap();
    let b = run_dynamap(
        &g,
        &hw,
        &RunOptions {
            search: SearchOptions {
                jobs: Some(3),
                ..Default::default()
            },
            ..Default::default()
        },
    )
    .unwrap();
    assert_eq!(a.to_json(), b.to_json());
    assert_eq!(a.to_csv().lines().count(), a.per_layer.len() + 1);
}
