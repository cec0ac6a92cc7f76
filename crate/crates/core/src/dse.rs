//! End-to-end mapping flow: array-shape and dataflow search, cost-graph
//! solve, on-chip fusion, plan evaluation, baselines and utilization
//! reports.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{
    build_cost_graph, layer_cost, utilization, winograd_tiles, AlgoChoice, CostGraph, Dataflow, DataflowTable,
    HwConfig, VertexKind,
};
use crate::error::{Error, Result};
use crate::model::{available_algorithms, rewrite_avgpool, CnnGraph, LayerMeta};
use crate::pbqp::solve_sp;

/// How the shape search scores a candidate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TauMode {
    /// Sum of every available algorithm's best-dataflow cost per layer.
    #[default]
    Sum,
    /// Sum of the cheapest algorithm per layer.
    Min,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataflowPolicy {
    #[default]
    Auto,
    NsOnly,
}

/// Algorithm assignment policy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AlgoPolicy {
    /// Joint optimum over all available algorithms.
    #[default]
    Dynamic,
    Im2colOnly,
    Kn2rowApplied,
    /// Winograd where available, im2col elsewhere.
    WinoApplied,
}

impl AlgoPolicy {
    pub const BASELINES: [AlgoPolicy; 3] = [
        AlgoPolicy::Im2colOnly,
        AlgoPolicy::Kn2rowApplied,
        AlgoPolicy::WinoApplied,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AlgoPolicy::Dynamic => "dynamic",
            AlgoPolicy::Im2colOnly => "im2col-only",
            AlgoPolicy::Kn2rowApplied => "kn2row-applied",
            AlgoPolicy::WinoApplied => "wino-applied",
        }
    }

    /// Fixed algorithm for a layer, `None` for the dynamic policy.
    pub fn fixed(&self, layer: &LayerMeta, wp: (usize, usize)) -> Option<AlgoChoice> {
        match self {
            AlgoPolicy::Dynamic => None,
            AlgoPolicy::Im2colOnly => Some(AlgoChoice::Im2col),
            AlgoPolicy::Kn2rowApplied => Some(AlgoChoice::Kn2row),
            AlgoPolicy::WinoApplied => {
                let w = AlgoChoice::Winograd { m: wp.0, r: wp.1 };
                Some(if available_algorithms(layer, wp).contains(&w) {
                    w
                } else {
                    AlgoChoice::Im2col
                })
            }
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SearchOptions {
    pub tau: TauMode,
    pub dataflow: DataflowPolicy,
    /// Only consider `p1 == p2`.
    pub square: bool,
    /// Worker threads for the scan; `None` uses the global pool.
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DseResult {
    pub p_sa1: usize,
    pub p_sa2: usize,
    pub psi: DataflowTable,
    pub tau_min: u64,
    pub tau_mode: TauMode,
    pub candidates: usize,
}

/// Cheapest dataflow for one layer and algorithm; ties go NS, WS, IS.
pub fn select_dataflow(
    layer: &LayerMeta,
    algo: AlgoChoice,
    p1: usize,
    p2: usize,
    hw: &HwConfig,
) -> Result<(Dataflow, u64)> {
    select_with(layer, algo, &hw.with_array(p1, p2), DataflowPolicy::Auto)
}

fn select_with(layer: &LayerMeta, algo: AlgoChoice, hw: &HwConfig, policy: DataflowPolicy) -> Result<(Dataflow, u64)> {
    let flows: &[Dataflow] = match policy {
        DataflowPolicy::Auto => &Dataflow::ALL,
        DataflowPolicy::NsOnly => &[Dataflow::NS],
    };
    let mut best: Option<(Dataflow, u64)> = None;
    for &df in flows {
        let c = layer_cost(layer, algo, df, hw)?;
        if best.is_none_or(|(_, b)| c < b) {
            best = Some((df, c));
        }
    }
    Ok(best.expect("at least one dataflow"))
}

fn conv_layers(g: &CnnGraph) -> Vec<(String, LayerMeta)> {
    let g = rewrite_avgpool(g);
    g.conv_indices()
        .into_iter()
        .map(|v| (g.layers[v].id.clone(), *g.conv(v).expect("conv")))
        .collect()
}

/// Score of one array shape.
fn tau_emp(layers: &[(String, LayerMeta)], hw: &HwConfig, opts: &SearchOptions) -> Result<u64> {
    let mut total = 0u64;
    for (_, meta) in layers {
        let mut per = Vec::new();
        for algo in available_algorithms(meta, hw.winograd()) {
            per.push(select_with(meta, algo, hw, opts.dataflow)?.1);
        }
        total += match opts.tau {
            TauMode::Sum => per.iter().sum::<u64>(),
            TauMode::Min => per.into_iter().min().unwrap_or(0),
        };
    }
    Ok(total)
}

/// Dataflow of every (layer, algorithm) pair on a fixed array.
pub fn dataflow_table(g: &CnnGraph, hw: &HwConfig, policy: DataflowPolicy) -> Result<DataflowTable> {
    let mut psi = DataflowTable::new();
    for (id, meta) in conv_layers(g) {
        let entry = psi.entry(id).or_default();
        for algo in available_algorithms(&meta, hw.winograd()) {
            entry.insert(algo, select_with(&meta, algo, hw, policy)?.0);
        }
    }
    Ok(psi)
}

/// All `(p1, p2)` with `p1 >= p2` inside the DSP budget and `max_dim`.
pub fn candidate_shapes(hw: &HwConfig, square: bool) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for p2 in 1..=hw.max_dim {
        if p2 * p2 * hw.dsp_per_pe > hw.dsp_budget {
            break;
        }
        if square {
            out.push((p2, p2));
            continue;
        }
        for p1 in p2..=hw.max_dim {
            if p1 * p2 * hw.dsp_per_pe > hw.dsp_budget {
                break;
            }
            out.push((p1, p2));
        }
    }
    out
}

/// Total order of candidates: lower score, then more PEs, then larger p1.
fn better(a: (u64, usize, usize), b: (u64, usize, usize)) -> bool {
    (a.0, std::cmp::Reverse(a.1 * a.2), std::cmp::Reverse(a.1))
        < (b.0, std::cmp::Reverse(b.1 * b.2), std::cmp::Reverse(b.1))
}

/// Every scanned shape with its score.
pub fn scan_array_dims(g: &CnnGraph, hw: &HwConfig, opts: &SearchOptions) -> Result<Vec<(usize, usize, u64)>> {
    let layers = conv_layers(g);
    let shapes = candidate_shapes(hw, opts.square);
    let eval = || {
        shapes
            .par_iter()
            .map(|&(p1, p2)| tau_emp(&layers, &hw.with_array(p1, p2), opts).map(|t| (p1, p2, t)))
            .collect::<Result<Vec<_>>>()
    };
    match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| Error::Domain(format!("thread pool: {e}")))?
            .install(eval),
        None => eval(),
    }
}

/// Exhaustive array-shape search.
pub fn search_array_dims(g: &CnnGraph, hw: &HwConfig, opts: &SearchOptions) -> Result<DseResult> {
    let scored = scan_array_dims(g, hw, opts)?;
    let best = scored
        .iter()
        .map(|&(p1, p2, t)| (t, p1, p2))
        .reduce(|a, b| if better(b, a) { b } else { a })
        .ok_or(Error::NoFeasibleShape)?;
    let (tau_min, p1, p2) = best;
    Ok(DseResult {
        p_sa1: p1,
        p_sa2: p2,
        psi: dataflow_table(g, &hw.with_array(p1, p2), opts.dataflow)?,
        tau_min,
        tau_mode: opts.tau,
        candidates: scored.len(),
    })
}

/// On-chip elements a layer needs under an algorithm, weights excluded.
pub fn footprint(layer: &LayerMeta, algo: AlgoChoice) -> u64 {
    let (cin, cout) = (layer.c_in as u64, layer.c_out as u64);
    let out = layer.output_elems() * cout;
    match algo {
        AlgoChoice::Im2col => layer.output_elems() * layer.kernel_elems() * cin + out,
        AlgoChoice::Kn2row => layer.input_elems() * cin + out,
        AlgoChoice::Winograd { m, r } => {
            let n = (m + r - 1) as u64;
            winograd_tiles(layer, m) * n * n * cin + out
        }
    }
}

/// Convolution-to-convolution edges whose producer has a single consumer and
/// whose two layers fit on chip together.
pub fn fuse_onchip(g: &CnnGraph, algos: &BTreeMap<usize, AlgoChoice>, hw: &HwConfig) -> BTreeSet<(usize, usize)> {
    let g = rewrite_avgpool(g);
    let mut fused = BTreeSet::new();
    for &(u, v) in &g.edges {
        let (Some(mu), Some(mv)) = (g.conv(u), g.conv(v)) else {
            continue;
        };
        if g.out_degree(u) != 1 {
            continue;
        }
        let (Some(&au), Some(&av)) = (algos.get(&u), algos.get(&v)) else {
            continue;
        };
        if footprint(mu, au) + footprint(mv, av) <= hw.sram_capacity {
            fused.insert((u, v));
        }
    }
    fused
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerRecord {
    pub layer: String,
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algo: Option<AlgoChoice>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataflow: Option<Dataflow>,
    pub compute_cycles: f64,
    pub edge_cycles: f64,
    pub total_ms: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utilization: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselineSummary {
    pub policy: String,
    pub total_cycles: f64,
    pub total_ms: f64,
    /// Latency decrease of the plan relative to this baseline, in percent.
    pub improvement_pct: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MappingPlan {
    pub model: String,
    pub policy: AlgoPolicy,
    pub fusion: FusionMode,
    pub dse: DseResult,
    pub assignment: BTreeMap<String, AlgoChoice>,
    /// Storage format chosen for each fan-out layer, keyed by layer id.
    pub split_formats: BTreeMap<String, String>,
    pub fused_edges: Vec<String>,
    pub per_layer: Vec<LayerRecord>,
    pub pbqp_objective: f64,
    pub fusion_savings: f64,
    pub total_cycles: f64,
    pub total_ms: f64,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub baselines: Vec<BaselineSummary>,
}

impl MappingPlan {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("plan serializes") + "\n"
    }

    /// Per-layer breakdown as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("layer,kind,algo,dataflow,compute_cycles,edge_cycles,total_ms,utilization\n");
        for r in &self.per_layer {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.layer,
                r.kind,
                r.algo.map(|a| a.to_string()).unwrap_or_default(),
                r.dataflow.map(|d| d.to_string()).unwrap_or_default(),
                r.compute_cycles,
                r.edge_cycles,
                r.total_ms,
                r.utilization.map(|u| u.to_string()).unwrap_or_default()
            );
        }
        out
    }

    /// Fills the baseline comparison table.
    pub fn attach_baselines(&mut self, baselines: &[MappingPlan]) {
        self.baselines = baselines
            .iter()
            .map(|b| BaselineSummary {
                policy: b.policy.name().to_string(),
                total_cycles: b.total_cycles,
                total_ms: b.total_ms,
                improvement_pct: 100.0 * (b.total_cycles - self.total_cycles) / b.total_cycles,
            })
            .collect();
    }
}

/// When on-chip fusion is applied.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FusionMode {
    Off,
    /// Fuse after solving; the solver sees unfused edge costs.
    Post,
    /// The solver sees edge costs with the fusion discount already applied,
    /// then the same fusion pass runs on its assignment.
    #[default]
    Aware,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOptions {
    pub search: SearchOptions,
    pub policy: AlgoPolicy,
    pub fusion: FusionMode,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            search: SearchOptions::default(),
            policy: AlgoPolicy::Dynamic,
            fusion: FusionMode::Aware,
        }
    }
}

/// Copy of `cg` where every entry of a fusable edge whose two layers fit on
/// chip together is zero. The fusion rule depends only on the two endpoint
/// algorithms, so this is exactly the post-fusion objective.
pub fn fusion_discounted(g: &CnnGraph, cg: &CostGraph, hw: &HwConfig) -> CostGraph {
    let mut out = cg.clone();
    for e in &mut out.edges {
        let Some((u, v)) = e.layer_edge else { continue };
        let (Some(mu), Some(mv)) = (g.conv(u), g.conv(v)) else {
            continue;
        };
        if g.out_degree(u) != 1 || e.u != cg.layer_vertex[u] {
            continue;
        }
        let (cu, cv) = (&cg.vertices[e.u].choices, &cg.vertices[e.v].choices);
        for (i, a) in cu.iter().enumerate() {
            for (j, b) in cv.iter().enumerate() {
                let (Some(a), Some(b)) = (a.algo, b.algo) else { continue };
                if footprint(mu, a) + footprint(mv, b) <= hw.sram_capacity {
                    e.matrix[i * cv.len() + j] = 0.0;
                }
            }
        }
    }
    out
}

/// Solves the cost graph under a policy. Fixed policies pin every compute
/// vertex; split formats are still chosen optimally.
pub fn assign(cg: &CostGraph, g: &CnnGraph, hw: &HwConfig, policy: AlgoPolicy) -> Result<Vec<usize>> {
    let mut inst = cg.to_pbqp();
    if policy != AlgoPolicy::Dynamic {
        for (v, vert) in cg.vertices.iter().enumerate() {
            if vert.kind != VertexKind::Compute {
                continue;
            }
            let meta = g.conv(vert.layer).expect("compute vertex is a conv layer");
            let want = policy.fixed(meta, hw.winograd());
            for (i, ch) in vert.choices.iter().enumerate() {
                if ch.algo != want {
                    inst.costs[v][i] = f64::INFINITY;
                }
            }
        }
    }
    Ok(solve_sp(&inst)?.assignment)
}

fn evaluate(
    g: &CnnGraph,
    cg: &CostGraph,
    assignment: &[usize],
    hw: &HwConfig,
    dse: DseResult,
    policy: AlgoPolicy,
    fusion: FusionMode,
) -> Result<MappingPlan> {
    let mode = fusion;
    let fusion = mode != FusionMode::Off;
    let mut algos = BTreeMap::new();
    for (v, vert) in cg.vertices.iter().enumerate() {
        if vert.kind == VertexKind::Compute {
            algos.insert(
                vert.layer,
                vert.choices[assignment[v]]
                    .algo
                    .expect("compute choice has an algorithm"),
            );
        }
    }
    let fused = if fusion {
        fuse_onchip(g, &algos, hw)
    } else {
        BTreeSet::new()
    };

    let n = g.len();
    let mut compute = vec![0.0; n];
    let mut edge = vec![0.0; n];
    let mut savings = 0.0;
    for (v, vert) in cg.vertices.iter().enumerate() {
        compute[vert.layer] += vert.cost[assignment[v]];
    }
    for e in &cg.edges {
        let c = cg.edge_value(e, assignment);
        if e.layer_edge.is_some_and(|le| fused.contains(&le)) {
            savings += c;
        } else {
            edge[cg.vertices[e.v].layer] += c;
        }
    }
    let pbqp_objective = cg.objective(assignment);

    let mut per_layer = Vec::with_capacity(n);
    let mut assignment_map = BTreeMap::new();
    for (v, layer) in g.layers.iter().enumerate() {
        let ch = cg.vertices[cg.layer_vertex[v]].choices[assignment[cg.layer_vertex[v]]];
        let mu = match (g.conv(v), ch.algo, ch.dataflow) {
            (Some(meta), Some(a), Some(df)) => {
                let r = utilization(meta, a, df, hw)?;
                Some(*r.numer() as f64 / *r.denom() as f64)
            }
            _ => None,
        };
        if let Some(a) = ch.algo {
            assignment_map.insert(layer.id.clone(), a);
        }
        per_layer.push(LayerRecord {
            layer: layer.id.clone(),
            kind: layer.kind.name().to_string(),
            algo: ch.algo,
            dataflow: ch.dataflow,
            compute_cycles: compute[v],
            edge_cycles: edge[v],
            total_ms: hw.cycles_to_ms(compute[v] + edge[v]),
            utilization: mu,
        });
    }
    let mut split_formats = BTreeMap::new();
    for (v, vert) in cg.vertices.iter().enumerate() {
        if vert.kind == VertexKind::Split {
            let ch = vert.choices[assignment[v]];
            let consumer = &g.layers[ch.consumer.expect("split choice has a consumer")].id;
            let fmt = ch.algo.map_or_else(|| "tensor".to_string(), |a| a.to_string());
            split_formats.insert(g.layers[vert.layer].id.clone(), format!("{fmt} for {consumer}"));
        }
    }
    let total_cycles: f64 = compute.iter().sum::<f64>() + edge.iter().sum::<f64>();
    Ok(MappingPlan {
        model: g.name.clone(),
        policy,
        fusion: mode,
        dse,
        assignment: assignment_map,
        split_formats,
        fused_edges: fused
            .iter()
            .map(|&(u, v)| format!("{}->{}", g.layers[u].id, g.layers[v].id))
            .collect(),
        per_layer,
        pbqp_objective,
        fusion_savings: savings,
        total_cycles,
        total_ms: hw.cycles_to_ms(total_cycles),
        baselines: Vec::new(),
    })
}

/// Plan for a policy on an already chosen array shape and dataflow table.
pub fn plan_with(
    g: &CnnGraph,
    hw: &HwConfig,
    dse: &DseResult,
    policy: AlgoPolicy,
    fusion: FusionMode,
) -> Result<MappingPlan> {
    let g = rewrite_avgpool(g);
    let hwa = hw.with_array(dse.p_sa1, dse.p_sa2);
    let cg = build_cost_graph(&g, &hwa, &dse.psi)?;
    let assignment = match fusion {
        FusionMode::Aware => assign(&fusion_discounted(&g, &cg, &hwa), &g, &hwa, policy)?,
        FusionMode::Off | FusionMode::Post => assign(&cg, &g, &hwa, policy)?,
    };
    evaluate(&g, &cg, &assignment, &hwa, dse.clone(), policy, fusion)
}

/// The full flow: shape search, cost graph, PBQP solve, fusion, evaluation.
pub fn run_dynamap(g: &CnnGraph, hw: &HwConfig, opts: &RunOptions) -> Result<MappingPlan> {
    let dse = search_array_dims(g, hw, &opts.search)?;
    plan_with(g, hw, &dse, opts.policy, opts.fusion)
}

/// A fixed-policy plan on the same array shape and dataflows as `dse`.
pub fn baseline_plan(
    g: &CnnGraph,
    hw: &HwConfig,
    dse: &DseResult,
    policy: AlgoPolicy,
    fusion: FusionMode,
) -> Result<MappingPlan> {
    plan_with(g, hw, dse, policy, fusion)
}

/// Runs the flow and all three baselines on the same array, attaching the
/// comparison table to the returned plan.
pub fn optimize_with_baselines(
    g: &CnnGraph,
    hw: &HwConfig,
    opts: &RunOptions,
) -> Result<(MappingPlan, Vec<MappingPlan>)> {
    let mut plan = run_dynamap(g, hw, opts)?;
    let baselines = AlgoPolicy::BASELINES
        .iter()
        .map(|&p| baseline_plan(g, hw, &plan.dse, p, opts.fusion))
        .collect::<Result<Vec<_>>>()?;
    plan.attach_baselines(&baselines);
    Ok((plan, baselines))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilConfig {
    pub name: String,
    pub p_sa1: usize,
    pub p_sa2: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilRow {
    pub layer: String,
    pub algo: AlgoChoice,
    /// One entry per configuration, in `configs` order.
    pub mu: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct UtilizationReport {
    pub configs: Vec<UtilConfig>,
    pub rows: Vec<UtilRow>,
}

/// Largest square array inside the budget.
pub fn largest_square(hw: &HwConfig) -> usize {
    candidate_shapes(hw, true).last().map_or(1, |&(p, _)| p)
}

/// Per-layer utilization of the plan's algorithms under the plan's array
/// and dataflows, the largest square array with NS only, and the searched
/// array with NS only.
pub fn utilization_report(g: &CnnGraph, plan: &MappingPlan, hw: &HwConfig, tau: TauMode) -> Result<UtilizationReport> {
    let sq = largest_square(hw);
    let ns = SearchOptions {
        tau,
        dataflow: DataflowPolicy::NsOnly,
        ..SearchOptions::default()
    };
    let algo1 = search_array_dims(g, hw, &ns)?;
    let configs = vec![
        UtilConfig {
            name: "plan".into(),
            p_sa1: plan.dse.p_sa1,
            p_sa2: plan.dse.p_sa2,
        },
        UtilConfig {
            name: "square-ns".into(),
            p_sa1: sq,
            p_sa2: sq,
        },
        UtilConfig {
            name: "algo1-ns".into(),
            p_sa1: algo1.p_sa1,
            p_sa2: algo1.p_sa2,
        },
    ];
    let mut rows = Vec::new();
    for (id, meta) in conv_layers(g) {
        let Some(&algo) = plan.assignment.get(&id) else {
            continue;
        };
        let df_plan = plan
            .dse
            .psi
            .get(&id)
            .and_then(|t| t.get(&algo))
            .copied()
            .ok_or_else(|| Error::Dataflow(format!("no dataflow for `{id}`")))?;
        let mut mu = Vec::new();
        for (cfg, df) in configs.iter().zip([df_plan, Dataflow::NS, Dataflow::NS]) {
            let r = utilization(&meta, algo, df, &hw.with_array(cfg.p_sa1, cfg.p_sa2))?;
            mu.push(*r.numer() as f64 / *r.denom() as f64);
        }
        rows.push(UtilRow { layer: id, algo, mu });
    }
    Ok(UtilizationReport { configs, rows })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Layer, LayerKind};

    fn chain(metas: &[LayerMeta]) -> CnnGraph {
        let first = metas[0];
        let mut layers = vec![Layer {
            id: "in".into(),
            kind: LayerKind::Input {
                channels: first.c_in,
                h1: first.h1,
                h2: first.h2,
            },
        }];
        for (i, m) in metas.iter().enumerate() {
            layers.push(Layer {
                id: format!("conv{i}"),
                kind: LayerKind::Conv(*m),
            });
        }
        layers.push(Layer {
            id: "out".into(),
            kind: LayerKind::Output,
        });
        let n = layers.len();
        CnnGraph {
            name: "chain".into(),
            layers,
            edges: (0..n - 1).map(|i| (i, i + 1)).collect(),
            source: 0,
            sink: n - 1,
        }
    }

    #[test]
    fn dataflow_selection_examples() {
        let layer = LayerMeta::new(124, 64, (62, 1), (1, 1), 1, (0, 0));
        let hw = HwConfig {
            i_sa: Some(31),
            ..HwConfig::default()
        };
        assert_eq!(
            select_dataflow(&layer, AlgoChoice::Im2col, 31, 31, &hw).unwrap(),
            (Dataflow::IS, 543)
        );
        let exact = LayerMeta::new(32, 32, (32, 1), (1, 1), 1, (0, 0));
        assert_eq!(
            select_dataflow(&exact, AlgoChoice::Im2col, 8, 8, &hw).unwrap().0,
            Dataflow::NS
        );
    }

    #[test]
    fn unit_budget_forces_unit_array() {
        let g = chain(&[LayerMeta::square(4, 4, 8, 3, 1, 1)]);
        let hw = HwConfig {
            dsp_budget: 1,
            ..HwConfig::default()
        };
        let r = search_array_dims(&g, &hw, &SearchOptions::default()).unwrap();
        assert_eq!((r.p_sa1, r.p_sa2), (1, 1));
        let empty = HwConfig {
            dsp_budget: 1,
            dsp_per_pe: 2,
            ..HwConfig::default()
        };
        assert!(matches!(
            search_array_dims(&g, &empty, &SearchOptions::default()),
            Err(Error::NoFeasibleShape)
        ));
    }

    #[test]
    fn search_returns_scan_minimum() {
        let g = chain(&[LayerMeta::square(8, 16, 12, 3, 1, 1)]);
        let hw = HwConfig {
            dsp_budget: 64,
            ..HwConfig::default()
        };
        let opts = SearchOptions::default();
        let r = search_array_dims(&g, &hw, &opts).unwrap();
        for (p1, p2, t) in scan_array_dims(&g, &hw, &opts).unwrap() {
            assert!(r.tau_min <= t, "({p1},{p2}) scores {t} < {}", r.tau_min);
        }
        assert!(r.p_sa1 * r.p_sa2 <= 64 && r.p_sa1 >= r.p_sa2);
    }

    #[test]
    fn no_fusion_without_sram() {
        let g = chain(&[LayerMeta::square(4, 4, 8, 3, 1, 1), LayerMeta::square(4, 4, 8, 3, 1, 1)]);
        let algos = BTreeMap::from([(1, AlgoChoice::Im2col), (2, AlgoChoice::Im2col)]);
        let hw = HwConfig {
            sram_capacity: 0,
            ..HwConfig::default()
        };
        assert!(fuse_onchip(&g, &algos, &hw).is_empty());
        assert_eq!(fuse_onchip(&g, &algos, &HwConfig::default()).len(), 1);
    }

    #[test]
    fn single_layer_plan_is_vertex_argmin() {
        let g = chain(&[LayerMeta::square(16, 16, 14, 3, 1, 1)]);
        let hw = HwConfig {
            dsp_budget: 64,
            ..HwConfig::default()
        };
        let plan = run_dynamap(&g, &hw, &RunOptions::default()).unwrap();
        assert_eq!(plan.assignment.len(), 1);
        assert!((plan.total_cycles - (plan.pbqp_objective - plan.fusion_savings)).abs() < 1e-6);
        let sum: f64 = plan.per_layer.iter().map(|r| r.compute_cycles + r.edge_cycles).sum();
        assert!((sum - plan.total_cycles).abs() < 1e-6);
    }
}
