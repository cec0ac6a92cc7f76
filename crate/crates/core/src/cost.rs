//! Closed-form latency model and cost-graph construction.
//!
//! All costs are in clock cycles. Bandwidth is in elements per cycle, so
//! transfer and compute cycles add up directly; milliseconds appear only in
//! reports.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use num_rational::Ratio;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::kernels::count_mults;
use crate::model::{available_algorithms, rewrite_avgpool, CnnGraph, LayerKind, LayerMeta, Shape};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum AlgoChoice {
    Im2col,
    Kn2row,
    Winograd { m: usize, r: usize },
}

impl AlgoChoice {
    pub fn is_winograd(&self) -> bool {
        matches!(self, AlgoChoice::Winograd { .. })
    }
}

impl fmt::Display for AlgoChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AlgoChoice::Im2col => f.write_str("im2col"),
            AlgoChoice::Kn2row => f.write_str("kn2row"),
            AlgoChoice::Winograd { m, r } => write!(f, "winograd({m},{r})"),
        }
    }
}

impl FromStr for AlgoChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "im2col" => return Ok(AlgoChoice::Im2col),
            "kn2row" => return Ok(AlgoChoice::Kn2row),
            "winograd" => return Ok(AlgoChoice::Winograd { m: 2, r: 3 }),
            _ => {}
        }
        let parsed = s
            .strip_prefix("winograd(")
            .and_then(|rest| rest.strip_suffix(')'))
            .and_then(|args| args.split_once(','))
            .and_then(|(m, r)| Some((m.trim().parse().ok()?, r.trim().parse().ok()?)));
        match parsed {
            Some((m, r)) if m >= 1 && r >= 2 => Ok(AlgoChoice::Winograd { m, r }),
            _ => Err(Error::Domain(format!("unknown algorithm `{s}`"))),
        }
    }
}

impl Serialize for AlgoChoice {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for AlgoChoice {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataflow {
    NS,
    WS,
    IS,
}

impl Dataflow {
    /// Tie-break order.
    pub const ALL: [Dataflow; 3] = [Dataflow::NS, Dataflow::WS, Dataflow::IS];
}

impl fmt::Display for Dataflow {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// `(a x b) * (b x c)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GemmDims {
    pub a: u64,
    pub b: u64,
    pub c: u64,
}

impl GemmDims {
    pub fn new(a: u64, b: u64, c: u64) -> Self {
        GemmDims { a, b, c }
    }

    pub fn macs(&self) -> u64 {
        self.a * self.b * self.c
    }
}

/// Device profile plus the chosen array shape.
///
/// Deserializes from the device document; `p_sa1`/`p_sa2` are not part of
/// the document and are filled in by the shape search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct HwConfig {
    #[serde(skip)]
    pub p_sa1: usize,
    #[serde(skip)]
    pub p_sa2: usize,
    pub dsp_budget: usize,
    pub dsp_per_pe: usize,
    /// Array fill/drain cycles per GEMM; `max(p_sa1, p_sa2)` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub i_sa: Option<u64>,
    #[serde(rename = "bw_elems_per_cycle")]
    pub bw: f64,
    #[serde(rename = "burst_len")]
    pub bl: u64,
    pub freq_mhz: f64,
    pub lt: u64,
    /// Winograd to Toeplitz pipeline overhead; `2 (m + r - 1)^2` when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ovhd: Option<u64>,
    pub sram_capacity: u64,
    pub pool_overhead: f64,
    pub max_dim: usize,
    pub winograd_m: usize,
    pub winograd_r: usize,
}

impl Default for HwConfig {
    /// Alveo U200-like profile at 8-bit precision.
    fn default() -> Self {
        HwConfig {
            p_sa1: 1,
            p_sa2: 1,
            dsp_budget: 6084,
            dsp_per_pe: 1,
            i_sa: None,
            bw: 64.0,
            bl: 64,
            freq_mhz: 286.0,
            lt: 0,
            ovhd: None,
            sram_capacity: 4 * 1024 * 1024,
            pool_overhead: 1.0 / 64.0,
            max_dim: 256,
            winograd_m: 2,
            winograd_r: 3,
        }
    }
}

impl HwConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let hw: HwConfig = serde_json::from_str(text).map_err(|e| Error::Malformed(format!("device profile: {e}")))?;
        hw.check_profile()?;
        Ok(hw)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&text)
    }

    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn check_profile(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Domain(format!("device profile: {m}")));
        if self.dsp_budget == 0 || self.dsp_per_pe == 0 {
            return bad("dsp_budget and dsp_per_pe must be >= 1");
        }
        // written negated so NaN is rejected too
        if !(self.bw > 0.0) || !(self.freq_mhz > 0.0) || self.bl == 0 {
            return bad("bw_elems_per_cycle, burst_len and freq_mhz must be positive");
        }
        if !(self.pool_overhead >= 0.0) {
            return bad("pool_overhead must be >= 0");
        }
        if self.winograd_m == 0 || self.winograd_r < 2 || self.max_dim == 0 {
            return bad("winograd_m >= 1, winograd_r >= 2 and max_dim >= 1 required");
        }
        Ok(())
    }

    /// Copy with the array shape set.
    pub fn with_array(&self, p1: usize, p2: usize) -> Self {
        HwConfig {
            p_sa1: p1,
            p_sa2: p2,
            ..self.clone()
        }
    }

    pub fn i_sa(&self) -> u64 {
        self.i_sa.unwrap_or(self.p_sa1.max(self.p_sa2) as u64)
    }

    pub fn ovhd(&self, m: usize, r: usize) -> u64 {
        self.ovhd.unwrap_or(2 * ((m + r - 1) * (m + r - 1)) as u64)
    }

    pub fn winograd(&self) -> (usize, usize) {
        (self.winograd_m, self.winograd_r)
    }

    pub fn pes(&self) -> u64 {
        (self.p_sa1 * self.p_sa2) as u64
    }

    pub fn cycles_to_ms(&self, cycles: f64) -> f64 {
        cycles / (self.freq_mhz * 1e3)
    }
}

/// Cycles of one GEMM pass, excluding array initialization.
pub fn gemm_steady_cycles(d: GemmDims, hw: &HwConfig, df: Dataflow) -> u64 {
    let (p1, p2) = (hw.p_sa1 as u64, hw.p_sa2 as u64);
    match df {
        Dataflow::NS => d.a.div_ceil(p1) * d.c.div_ceil(p2) * d.b,
        Dataflow::WS => d.b.div_ceil(p1) * d.c.div_ceil(p2) * d.a,
        Dataflow::IS => d.b.div_ceil(p1) * d.a.div_ceil(p2) * d.c,
    }
}

pub fn gemm_cycles(d: GemmDims, hw: &HwConfig, df: Dataflow) -> u64 {
    gemm_steady_cycles(d, hw, df) + hw.i_sa()
}

/// The GEMM an algorithm issues for a layer and how many times it runs.
pub fn layer_gemm(layer: &LayerMeta, algo: AlgoChoice) -> (GemmDims, u64) {
    let (cin, cout) = (layer.c_in as u64, layer.c_out as u64);
    match algo {
        AlgoChoice::Im2col => (GemmDims::new(layer.output_elems(), layer.kernel_elems() * cin, cout), 1),
        AlgoChoice::Kn2row => (GemmDims::new(layer.output_elems(), cin, cout), layer.kernel_elems()),
        AlgoChoice::Winograd { m, r } => {
            let n = (m + r - 1) as u64;
            let rounds = layer.kernel_elems().div_ceil((r * r) as u64);
            (GemmDims::new(winograd_tiles(layer, m), cin, cout), n * n * rounds)
        }
    }
}

/// Output tiles of `F(m, r)` on a layer.
pub fn winograd_tiles(layer: &LayerMeta, m: usize) -> u64 {
    (layer.o1.div_ceil(m) * layer.o2.div_ceil(m)) as u64
}

fn check_available(layer: &LayerMeta, algo: AlgoChoice) -> Result<()> {
    if let AlgoChoice::Winograd { m, r } = algo {
        if !available_algorithms(layer, (m, r)).contains(&algo) {
            return Err(Error::UnavailableAlgo {
                layer: format!("{}x{} stride {}", layer.k1, layer.k2, layer.stride),
                algo: algo.to_string(),
            });
        }
    }
    Ok(())
}

fn layer_cycles(layer: &LayerMeta, algo: AlgoChoice, df: Dataflow, hw: &HwConfig, init: bool) -> Result<u64> {
    check_available(layer, algo)?;
    let (dims, reps) = layer_gemm(layer, algo);
    let mut per = gemm_steady_cycles(dims, hw, df);
    if init {
        per += hw.i_sa();
    }
    if algo.is_winograd() {
        per += hw.lt;
    }
    Ok(per * reps)
}

/// Compute cycles of one layer.
pub fn layer_cost(layer: &LayerMeta, algo: AlgoChoice, df: Dataflow, hw: &HwConfig) -> Result<u64> {
    layer_cycles(layer, algo, df, hw, true)
}

/// Effective bandwidth when writing `c_out` channels into Winograd tiles:
/// short bursts waste part of every transfer.
pub fn bandwidth_eff(hw: &HwConfig, c_out: u64, m: usize, h1h2: u64) -> f64 {
    if c_out >= hw.bl {
        hw.bw
    } else {
        let c = c_out as f64;
        hw.bw * c / (c + (m * m) as f64 / h1h2 as f64)
    }
}

/// One-directional transfer cycles for data produced in `from` format and
/// consumed in `to` format by `next`. `c` is the producer's channel count.
pub fn transition_cost(from: AlgoChoice, to: AlgoChoice, next: &LayerMeta, c: u64, hw: &HwConfig) -> f64 {
    let c = c as f64;
    let toeplitz = (next.output_elems() * next.kernel_elems()) as f64 * c / hw.bw;
    match (from, to) {
        (_, AlgoChoice::Kn2row) => next.input_elems() as f64 * c / hw.bw,
        (AlgoChoice::Winograd { m, r }, AlgoChoice::Im2col) => toeplitz + hw.ovhd(m, r) as f64,
        (_, AlgoChoice::Im2col) => toeplitz,
        (AlgoChoice::Winograd { .. }, AlgoChoice::Winograd { m, r }) => {
            let n = (m + r - 1) as f64;
            winograd_tiles(next, m) as f64 * n * n * c / hw.bw
        }
        (_, AlgoChoice::Winograd { m, r }) => {
            let n = (m + r - 1) as f64;
            let f = bandwidth_eff(hw, c as u64, m, next.input_elems());
            winograd_tiles(next, m) as f64 * n * n * c / f
        }
    }
}

/// Store into the consumer's format, load it back, plus pooling.
pub fn edge_cost(
    from: AlgoChoice,
    to: AlgoChoice,
    next: &LayerMeta,
    c: u64,
    hw: &HwConfig,
    pooled: Option<u64>,
) -> f64 {
    transition_cost(from, to, next, c, hw) + transition_cost(to, to, next, c, hw) + pool_cost(hw, pooled)
}

fn pool_cost(hw: &HwConfig, pooled: Option<u64>) -> f64 {
    pooled.map_or(0.0, |n| hw.pool_overhead * n as f64)
}

/// Effective PE utilization of a GEMM.
pub fn gemm_utilization(d: GemmDims, hw: &HwConfig, df: Dataflow) -> Ratio<u128> {
    let t = gemm_steady_cycles(d, hw, df) as u128;
    Ratio::new(d.macs() as u128, t * hw.pes() as u128)
}

/// Useful multiplications over PE-cycles spent, initialization excluded.
pub fn utilization(layer: &LayerMeta, algo: AlgoChoice, df: Dataflow, hw: &HwConfig) -> Result<Ratio<u128>> {
    let t = layer_cycles(layer, algo, df, hw, false)? as u128;
    let y = count_mults(layer, algo)? as u128;
    Ok(Ratio::new(y, t * hw.pes() as u128))
}

/// Dataflow per layer id and algorithm.
pub type DataflowTable = BTreeMap<String, BTreeMap<AlgoChoice, Dataflow>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum VertexKind {
    Compute,
    /// Non-convolution layer (input, output, concat, max pool): a single
    /// zero-cost choice holding data in the 3D tensor layout.
    Relay,
    Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Choice {
    /// `None` for relay pass-through.
    pub algo: Option<AlgoChoice>,
    pub dataflow: Option<Dataflow>,
    /// For split vertices: the consumer layer whose format is stored.
    pub consumer: Option<usize>,
}

impl Choice {
    /// Storage format this choice stands for.
    pub fn format(&self) -> AlgoChoice {
        self.algo.unwrap_or(AlgoChoice::Kn2row)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostVertex {
    pub kind: VertexKind,
    /// Owning layer index in the graph.
    pub layer: usize,
    pub label: String,
    pub choices: Vec<Choice>,
    pub cost: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostEdge {
    pub u: usize,
    pub v: usize,
    /// `|choices(u)| x |choices(v)|`, row-major.
    pub matrix: Vec<f64>,
    /// The layer edge this realizes; `None` for the edge into a split vertex.
    pub layer_edge: Option<(usize, usize)>,
}

impl CostEdge {
    pub fn get(&self, cols: usize, i: usize, j: usize) -> f64 {
        self.matrix[i * cols + j]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CostGraph {
    pub vertices: Vec<CostVertex>,
    pub edges: Vec<CostEdge>,
    pub source: usize,
    pub sink: usize,
    /// Cost vertex of each layer.
    pub layer_vertex: Vec<usize>,
}

impl CostGraph {
    pub fn edge_value(&self, e: &CostEdge, assignment: &[usize]) -> f64 {
        e.get(self.vertices[e.v].choices.len(), assignment[e.u], assignment[e.v])
    }

    /// Sum of vertex and edge costs under an assignment.
    pub fn objective(&self, assignment: &[usize]) -> f64 {
        let nodes: f64 = self.vertices.iter().zip(assignment).map(|(v, &a)| v.cost[a]).sum();
        let edges: f64 = self.edges.iter().map(|e| self.edge_value(e, assignment)).sum();
        nodes + edges
    }

    pub fn to_pbqp(&self) -> crate::pbqp::PbqpInstance {
        let mut inst = crate::pbqp::PbqpInstance::new(
            self.vertices.iter().map(|v| v.cost.clone()).collect(),
            self.source,
            self.sink,
        );
        for e in &self.edges {
            inst.add_edge_flat(e.u, e.v, e.matrix.clone())
                .expect("cost graph edges match vertex choice counts");
        }
        inst
    }
}

fn relay_meta(s: Shape) -> LayerMeta {
    LayerMeta::new(s.c, s.c, (s.h1, s.h2), (1, 1), 1, (0, 0))
}

/// Builds the cost graph of `g`, with average pools rewritten as
/// convolutions. Every layer becomes a vertex; a layer with several
/// consumers also gets a split vertex whose choice picks the one format its
/// output is stored in.
pub fn build_cost_graph(g: &CnnGraph, hw: &HwConfig, psi: &DataflowTable) -> Result<CostGraph> {
    let g = rewrite_avgpool(g);
    let shapes = g.shapes().map_err(Error::Invalid)?;
    let wp = hw.winograd();

    let mut vertices = Vec::with_capacity(g.len());
    for (v, layer) in g.layers.iter().enumerate() {
        let vertex = match &layer.kind {
            LayerKind::Conv(meta) => {
                let table = psi
                    .get(&layer.id)
                    .ok_or_else(|| Error::Dataflow(format!("no entry for layer `{}`", layer.id)))?;
                let mut choices = Vec::new();
                let mut cost = Vec::new();
                for algo in available_algorithms(meta, wp) {
                    let df = *table
                        .get(&algo)
                        .ok_or_else(|| Error::Dataflow(format!("no dataflow for `{}` under {algo}", layer.id)))?;
                    choices.push(Choice {
                        algo: Some(algo),
                        dataflow: Some(df),
                        consumer: None,
                    });
                    cost.push(layer_cost(meta, algo, df, hw)? as f64);
                }
                CostVertex {
                    kind: VertexKind::Compute,
                    layer: v,
                    label: layer.id.clone(),
                    choices,
                    cost,
                }
            }
            _ => CostVertex {
                kind: VertexKind::Relay,
                layer: v,
                label: layer.id.clone(),
                choices: vec![Choice {
                    algo: None,
                    dataflow: None,
                    consumer: None,
                }],
                cost: vec![0.0],
            },
        };
        vertices.push(vertex);
    }
    let layer_vertex: Vec<usize> = (0..g.len()).collect();

    // Dimensions the consumer sees, and whether the consumer loads the data
    // itself (relays only pass it on).
    let consumer_meta = |v: usize| match g.conv(v) {
        Some(m) => (*m, true),
        None => (relay_meta(shapes[v]), false),
    };
    let pooled = |v: usize| match g.layers[v].kind {
        LayerKind::MaxPool(_) => Some((shapes[v].c * shapes[v].h1 * shapes[v].h2) as u64),
        _ => None,
    };

    let mut edges = Vec::new();
    for u in 0..g.len() {
        let succs: Vec<usize> = g.succs(u).collect();
        if succs.is_empty() {
            continue;
        }
        let c = shapes[u].c as u64;
        let producer = vertices[u].choices.clone();
        if succs.len() == 1 {
            let v = succs[0];
            let (meta, loads) = consumer_meta(v);
            let consumer = &vertices[v].choices;
            let mut matrix = Vec::with_capacity(producer.len() * consumer.len());
            for a in &producer {
                for b in consumer {
                    let (from, to) = (a.format(), b.format());
                    let load = if loads {
                        transition_cost(to, to, &meta, c, hw)
                    } else {
                        0.0
                    };
                    matrix.push(transition_cost(from, to, &meta, c, hw) + load + pool_cost(hw, pooled(v)));
                }
            }
            edges.push(CostEdge {
                u,
                v,
                matrix,
                layer_edge: Some((u, v)),
            });
            continue;
        }
        let mut split_choices = Vec::new();
        for &v in &succs {
            for ch in &vertices[v].choices {
                split_choices.push(Choice {
                    algo: ch.algo,
                    dataflow: None,
                    consumer: Some(v),
                });
            }
        }
        let s = vertices.len();
        let mut into = Vec::with_capacity(producer.len() * split_choices.len());
        for a in &producer {
            for o in &split_choices {
                let (meta, _) = consumer_meta(o.consumer.expect("split choice has a consumer"));
                into.push(transition_cost(a.format(), o.format(), &meta, c, hw));
            }
        }
        edges.push(CostEdge {
            u,
            v: s,
            matrix: into,
            layer_edge: None,
        });
        for &v in &succs {
            let (meta, loads) = consumer_meta(v);
            let consumer = &vertices[v].choices;
            let mut matrix = Vec::with_capacity(split_choices.len() * consumer.len());
            for o in &split_choices {
                for p in consumer {
                    let load = if loads {
                        transition_cost(o.format(), p.format(), &meta, c, hw)
                    } else {
                        0.0
                    };
                    matrix.push(load + pool_cost(hw, pooled(v)));
                }
            }
            edges.push(CostEdge {
                u: s,
                v,
                matrix,
                layer_edge: Some((u, v)),
            });
        }
        let n = split_choices.len();
        vertices.push(CostVertex {
            kind: VertexKind::Split,
            layer: u,
            label: format!("{}#split", g.layers[u].id),
            choices: split_choices,
            cost: vec![0.0; n],
        });
    }

    Ok(CostGraph {
        vertices,
        edges,
        source: g.source,
        sink: g.sink,
        layer_vertex,
    })
}
