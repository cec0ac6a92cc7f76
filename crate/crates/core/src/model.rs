//! CNN graph description: parsing, validation and normalization.
//!
//! A model document is JSON with top-level keys `name`, `layers`, `edges`,
//! `input` and `output`. Each layer record carries `id`, `kind` and the
//! kind-specific fields `c_in`, `c_out`, `h`, `k`, `stride`, `pad`, `window`.
//! Spatial fields accept either a single integer (square) or a `[rows, cols]`
//! pair. Output sizes are derived, never stored in the document.

use std::collections::{HashMap, HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::cost::AlgoChoice;
use crate::error::{Error, Result};

/// Shape metadata of one convolution layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LayerMeta {
    pub c_in: usize,
    pub c_out: usize,
    pub h1: usize,
    pub h2: usize,
    pub o1: usize,
    pub o2: usize,
    pub k1: usize,
    pub k2: usize,
    pub stride: usize,
    pub pad1: usize,
    pub pad2: usize,
}

impl LayerMeta {
    /// Builds the metadata with output sizes derived by floor division.
    /// Use [`LayerMeta::violations`] to detect non-exact strides.
    pub fn new(
        c_in: usize,
        c_out: usize,
        (h1, h2): (usize, usize),
        (k1, k2): (usize, usize),
        stride: usize,
        (pad1, pad2): (usize, usize),
    ) -> Self {
        let out = |h: usize, k: usize, p: usize| {
            if stride == 0 || h + 2 * p < k {
                0
            } else {
                (h + 2 * p - k) / stride + 1
            }
        };
        LayerMeta {
            c_in,
            c_out,
            h1,
            h2,
            o1: out(h1, k1, pad1),
            o2: out(h2, k2, pad2),
            k1,
            k2,
            stride,
            pad1,
            pad2,
        }
    }

    /// Square input, square kernel, symmetric padding.
    pub fn square(c_in: usize, c_out: usize, h: usize, k: usize, stride: usize, pad: usize) -> Self {
        Self::new(c_in, c_out, (h, h), (k, k), stride, (pad, pad))
    }

    pub fn input_elems(&self) -> u64 {
        (self.h1 * self.h2) as u64
    }

    pub fn output_elems(&self) -> u64 {
        (self.o1 * self.o2) as u64
    }

    pub fn kernel_elems(&self) -> u64 {
        (self.k1 * self.k2) as u64
    }

    /// Every violated shape invariant, as human-readable messages.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (name, v) in [
            ("c_in", self.c_in),
            ("c_out", self.c_out),
            ("h1", self.h1),
            ("h2", self.h2),
            ("o1", self.o1),
            ("o2", self.o2),
            ("k1", self.k1),
            ("k2", self.k2),
            ("stride", self.stride),
        ] {
            if v == 0 {
                out.push(format!("{name} must be >= 1"));
            }
        }
        if self.stride == 0 {
            return out;
        }
        for (axis, h, k, p, o) in [
            (1, self.h1, self.k1, self.pad1, self.o1),
            (2, self.h2, self.k2, self.pad2, self.o2),
        ] {
            let span = h + 2 * p;
            if span < k {
                out.push(format!("kernel k{axis}={k} exceeds padded input {span}"));
                continue;
            }
            let rem = (span - k) % self.stride;
            let expect = (span - k) / self.stride + 1;
            if rem != 0 {
                out.push(format!(
                    "o{axis}: (h{axis} - k{axis} + 2*pad)/stride = {}/{} is not integral",
                    span - k,
                    self.stride
                ));
            } else if o != expect {
                out.push(format!("o{axis}={o} but the shape formula gives {expect}"));
            }
        }
        out
    }
}

/// Pooling window parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Pool {
    pub window: (usize, usize),
    pub stride: usize,
    pub pad: (usize, usize),
}

impl Pool {
    /// Output size, floor mode.
    pub fn output(&self, h1: usize, h2: usize) -> Option<(usize, usize)> {
        let out = |h: usize, w: usize, p: usize| {
            if self.stride == 0 || h + 2 * p < w {
                None
            } else {
                Some((h + 2 * p - w) / self.stride + 1)
            }
        };
        Some((out(h1, self.window.0, self.pad.0)?, out(h2, self.window.1, self.pad.1)?))
    }

    fn exact(&self, h1: usize, h2: usize) -> bool {
        self.stride > 0
            && h1 + 2 * self.pad.0 >= self.window.0
            && h2 + 2 * self.pad.1 >= self.window.1
            && (h1 + 2 * self.pad.0 - self.window.0).is_multiple_of(self.stride)
            && (h2 + 2 * self.pad.1 - self.window.1).is_multiple_of(self.stride)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum LayerKind {
    Input { channels: usize, h1: usize, h2: usize },
    Conv(LayerMeta),
    MaxPool(Pool),
    AvgPool(Pool),
    Concat,
    Output,
}

impl LayerKind {
    pub fn name(&self) -> &'static str {
        match self {
            LayerKind::Input { .. } => "input",
            LayerKind::Conv(_) => "conv",
            LayerKind::MaxPool(_) => "maxpool",
            LayerKind::AvgPool(_) => "avgpool",
            LayerKind::Concat => "concat",
            LayerKind::Output => "output",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layer {
    pub id: String,
    pub kind: LayerKind,
}

/// Feature-map shape flowing along an edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Shape {
    pub c: usize,
    pub h1: usize,
    pub h2: usize,
}

/// A validated-or-not layer DAG. Edge endpoints are indices into `layers`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CnnGraph {
    pub name: String,
    pub layers: Vec<Layer>,
    pub edges: Vec<(usize, usize)>,
    pub source: usize,
    pub sink: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub layer: String,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.layer, self.message)
    }
}

fn diag(layer: &str, message: impl Into<String>) -> Diagnostic {
    Diagnostic {
        layer: layer.to_string(),
        message: message.into(),
    }
}

impl CnnGraph {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.id == id)
    }

    pub fn preds(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.1 == v).map(|e| e.0)
    }

    pub fn succs(&self, v: usize) -> impl Iterator<Item = usize> + '_ {
        self.edges.iter().filter(move |e| e.0 == v).map(|e| e.1)
    }

    pub fn out_degree(&self, v: usize) -> usize {
        self.succs(v).count()
    }

    pub fn in_degree(&self, v: usize) -> usize {
        self.preds(v).count()
    }

    pub fn conv(&self, v: usize) -> Option<&LayerMeta> {
        match &self.layers[v].kind {
            LayerKind::Conv(m) => Some(m),
            _ => None,
        }
    }

    /// Indices of all convolution layers, in document order.
    pub fn conv_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&v| self.conv(v).is_some()).collect()
    }

    /// Kahn topological order; `None` when the graph has a directed cycle.
    pub fn topo_order(&self) -> Option<Vec<usize>> {
        let n = self.len();
        let mut indeg = vec![0usize; n];
        let mut adj = vec![Vec::new(); n];
        for &(a, b) in &self.edges {
            indeg[b] += 1;
            adj[a].push(b);
        }
        let mut queue: VecDeque<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        let mut order = Vec::with_capacity(n);
        while let Some(v) = queue.pop_front() {
            order.push(v);
            for &w in &adj[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    queue.push_back(w);
                }
            }
        }
        (order.len() == n).then_some(order)
    }

    /// Shape produced by every layer. Fails with diagnostics on any
    /// inconsistency (see [`validate`]).
    pub fn shapes(&self) -> std::result::Result<Vec<Shape>, Vec<Diagnostic>> {
        let order = self
            .topo_order()
            .ok_or_else(|| vec![diag(&self.name, "graph contains a directed cycle")])?;
        let mut shapes: Vec<Option<Shape>> = vec![None; self.len()];
        let mut diags = Vec::new();
        for v in order {
            let layer = &self.layers[v];
            let inputs: Vec<Shape> = self.preds(v).filter_map(|p| shapes[p]).collect();
            let n_preds = self.in_degree(v);
            if inputs.len() != n_preds {
                // an upstream error already reported
                continue;
            }
            let single = |diags: &mut Vec<Diagnostic>| -> Option<Shape> {
                if inputs.len() != 1 {
                    diags.push(diag(
                        &layer.id,
                        format!("expects exactly one input, found {}", inputs.len()),
                    ));
                    None
                } else {
                    Some(inputs[0])
                }
            };
            let out = match &layer.kind {
                LayerKind::Input { channels, h1, h2 } => {
                    if *channels == 0 || *h1 == 0 || *h2 == 0 {
                        diags.push(diag(&layer.id, "input dimensions must be >= 1"));
                        None
                    } else {
                        Some(Shape {
                            c: *channels,
                            h1: *h1,
                            h2: *h2,
                        })
                    }
                }
                LayerKind::Conv(m) => {
                    let errs = m.violations();
                    let bad = !errs.is_empty();
                    diags.extend(errs.into_iter().map(|e| diag(&layer.id, e)));
                    if let Some(s) = single(&mut diags) {
                        if s.c != m.c_in {
                            diags.push(diag(
                                &layer.id,
                                format!("channel mismatch: producer emits {} channels, c_in is {}", s.c, m.c_in),
                            ));
                        }
                        if (s.h1, s.h2) != (m.h1, m.h2) {
                            diags.push(diag(
                                &layer.id,
                                format!(
                                    "spatial mismatch: producer emits {}x{}, layer expects {}x{}",
                                    s.h1, s.h2, m.h1, m.h2
                                ),
                            ));
                        }
                    }
                    (!bad).then_some(Shape {
                        c: m.c_out,
                        h1: m.o1,
                        h2: m.o2,
                    })
                }
                LayerKind::MaxPool(p) | LayerKind::AvgPool(p) => {
                    let avg = matches!(layer.kind, LayerKind::AvgPool(_));
                    single(&mut diags).and_then(|s| {
                        if avg && !p.exact(s.h1, s.h2) {
                            diags.push(diag(&layer.id, "average pool window does not tile the input exactly"));
                        }
                        match p.output(s.h1, s.h2) {
                            Some((h1, h2)) => Some(Shape { c: s.c, h1, h2 }),
                            None => {
                                diags.push(diag(&layer.id, "pool window exceeds padded input"));
                                None
                            }
                        }
                    })
                }
                LayerKind::Concat | LayerKind::Output => {
                    if inputs.is_empty() {
                        diags.push(diag(&layer.id, "has no inputs"));
                        None
                    } else if inputs.iter().any(|s| (s.h1, s.h2) != (inputs[0].h1, inputs[0].h2)) {
                        diags.push(diag(&layer.id, "concatenated inputs differ in spatial size"));
                        None
                    } else {
                        Some(Shape {
                            c: inputs.iter().map(|s| s.c).sum(),
                            h1: inputs[0].h1,
                            h2: inputs[0].h2,
                        })
                    }
                }
            };
            shapes[v] = out;
        }
        if diags.is_empty() {
            Ok(shapes.into_iter().map(|s| s.expect("all shapes inferred")).collect())
        } else {
            Err(diags)
        }
    }

    /// Largest number of convolution layers on any source-to-sink path.
    pub fn conv_depth(&self) -> usize {
        let Some(order) = self.topo_order() else { return 0 };
        let mut depth = vec![0usize; self.len()];
        for v in order {
            let here = usize::from(self.conv(v).is_some());
            let best = self.preds(v).map(|p| depth[p]).max().unwrap_or(0);
            depth[v] = best + here;
        }
        depth[self.sink]
    }
}

/// Lists every violated layer and graph invariant; empty on success.
pub fn validate(g: &CnnGraph) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    let mut seen = HashSet::new();
    for l in &g.layers {
        if !seen.insert(l.id.as_str()) {
            diags.push(diag(&l.id, "duplicate layer id"));
        }
    }
    for &(a, b) in &g.edges {
        if a >= g.len() || b >= g.len() {
            diags.push(diag(&g.name, format!("edge ({a}, {b}) out of range")));
        }
    }
    if !diags.is_empty() {
        return diags;
    }
    let sources: Vec<usize> = (0..g.len()).filter(|&v| g.in_degree(v) == 0).collect();
    let sinks: Vec<usize> = (0..g.len()).filter(|&v| g.out_degree(v) == 0).collect();
    if sources != [g.source] {
        let ids: Vec<&str> = sources.iter().map(|&v| g.layers[v].id.as_str()).collect();
        diags.push(diag(
            &g.name,
            format!(
                "expected the single source `{}`, found {:?}",
                g.layers[g.source].id, ids
            ),
        ));
    }
    if sinks != [g.sink] {
        let ids: Vec<&str> = sinks.iter().map(|&v| g.layers[v].id.as_str()).collect();
        diags.push(diag(
            &g.name,
            format!("expected the single sink `{}`, found {:?}", g.layers[g.sink].id, ids),
        ));
    }
    for (v, l) in g.layers.iter().enumerate() {
        match l.kind {
            LayerKind::Input { .. } if v != g.source => diags.push(diag(&l.id, "input layer is not the graph source")),
            LayerKind::Output if v != g.sink => diags.push(diag(&l.id, "output layer is not the graph sink")),
            _ => {}
        }
    }
    if !matches!(g.layers[g.source].kind, LayerKind::Input { .. }) {
        diags.push(diag(&g.layers[g.source].id, "source must be an input layer"));
    }
    if !matches!(g.layers[g.sink].kind, LayerKind::Output) {
        diags.push(diag(&g.layers[g.sink].id, "sink must be an output layer"));
    }
    if let Err(d) = g.shapes() {
        diags.extend(d);
    }
    diags
}

/// Replaces every average pool by the equivalent convolution whose kernel
/// averages each channel over the window. Max pools are left untouched.
pub fn rewrite_avgpool(g: &CnnGraph) -> CnnGraph {
    let Ok(shapes) = g.shapes() else { return g.clone() };
    let mut out = g.clone();
    for v in 0..g.len() {
        if let LayerKind::AvgPool(p) = g.layers[v].kind {
            let Some(pred) = g.preds(v).next() else { continue };
            let s = shapes[pred];
            out.layers[v].kind = LayerKind::Conv(LayerMeta::new(s.c, s.c, (s.h1, s.h2), p.window, p.stride, p.pad));
        }
    }
    out
}

/// Algorithms able to run `layer`: im2col and kn2row always, Winograd
/// `F(m, r)` for square kernels with stride 1 and `k >= r`.
pub fn available_algorithms(layer: &LayerMeta, (m, r): (usize, usize)) -> Vec<AlgoChoice> {
    let mut algos = vec![AlgoChoice::Im2col, AlgoChoice::Kn2row];
    if layer.k1 == layer.k2 && layer.stride == 1 && layer.k1 >= r && m >= 1 && r >= 2 {
        algos.push(AlgoChoice::Winograd { m, r });
    }
    algos
}

// ---------------------------------------------------------------------------
// Document format

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum Dim2 {
    One(usize),
    Two([usize; 2]),
}

impl Dim2 {
    fn pair(self) -> (usize, usize) {
        match self {
            Dim2::One(v) => (v, v),
            Dim2::Two([a, b]) => (a, b),
        }
    }

    fn from_pair((a, b): (usize, usize)) -> Self {
        if a == b {
            Dim2::One(a)
        } else {
            Dim2::Two([a, b])
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    id: String,
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_in: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    c_out: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<Dim2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<Dim2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    stride: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pad: Option<Dim2>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    window: Option<Dim2>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    layers: Vec<LayerDoc>,
    edges: Vec<[String; 2]>,
    input: String,
    output: String,
}

fn require<T>(v: Option<T>, id: &str, field: &str) -> Result<T> {
    v.ok_or_else(|| Error::BadLayer {
        id: id.to_string(),
        msg: format!("missing field `{field}`"),
    })
}

fn layer_from_doc(d: &LayerDoc) -> Result<LayerKind> {
    let id = d.id.as_str();
    let pool = || -> Result<Pool> {
        Ok(Pool {
            window: require(d.window, id, "window")?.pair(),
            stride: d.stride.unwrap_or(1),
            pad: d.pad.map(Dim2::pair).unwrap_or((0, 0)),
        })
    };
    Ok(match d.kind.as_str() {
        "input" => {
            let (h1, h2) = require(d.h, id, "h")?.pair();
            LayerKind::Input {
                channels: require(d.c_out, id, "c_out")?,
                h1,
                h2,
            }
        }
        "conv" => LayerKind::Conv(LayerMeta::new(
            require(d.c_in, id, "c_in")?,
            require(d.c_out, id, "c_out")?,
            require(d.h, id, "h")?.pair(),
            require(d.k, id, "k")?.pair(),
            d.stride.unwrap_or(1),
            d.pad.map(Dim2::pair).unwrap_or((0, 0)),
        )),
        "maxpool" => LayerKind::MaxPool(pool()?),
        "avgpool" => LayerKind::AvgPool(pool()?),
        "concat" => LayerKind::Concat,
        "output" => LayerKind::Output,
        other => {
            return Err(Error::UnknownKind {
                id: id.to_string(),
                kind: other.to_string(),
            })
        }
    })
}

fn layer_to_doc(l: &Layer) -> LayerDoc {
    let mut d = LayerDoc {
        id: l.id.clone(),
        kind: l.kind.name().to_string(),
        ..Default::default()
    };
    match &l.kind {
        LayerKind::Input { channels, h1, h2 } => {
            d.c_out = Some(*channels);
            d.h = Some(Dim2::from_pair((*h1, *h2)));
        }
        LayerKind::Conv(m) => {
            d.c_in = Some(m.c_in);
            d.c_out = Some(m.c_out);
            d.h = Some(Dim2::from_pair((m.h1, m.h2)));
            d.k = Some(Dim2::from_pair((m.k1, m.k2)));
            d.stride = Some(m.stride);
            d.pad = Some(Dim2::from_pair((m.pad1, m.pad2)));
        }
        LayerKind::MaxPool(p) | LayerKind::AvgPool(p) => {
            d.window = Some(Dim2::from_pair(p.window));
            d.stride = Some(p.stride);
            d.pad = Some(Dim2::from_pair(p.pad));
        }
        LayerKind::Concat | LayerKind::Output => {}
    }
    d
}

/// Parses and validates a model document.
///
/// Layers that cannot reach the designated output (auxiliary classifier
/// heads, for instance) or are unreachable from the input are dropped before
/// validation.
pub fn parse_model(text: &str) -> Result<CnnGraph> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    let mut index = HashMap::new();
    let mut layers = Vec::with_capacity(doc.layers.len());
    for d in &doc.layers {
        if index.insert(d.id.clone(), layers.len()).is_some() {
            return Err(Error::DuplicateId(d.id.clone()));
        }
        layers.push(Layer {
            id: d.id.clone(),
            kind: layer_from_doc(d)?,
        });
    }
    let lookup = |id: &str| {
        index
            .get(id)
            .copied()
            .ok_or_else(|| Error::DanglingEdge(id.to_string()))
    };
    let mut edges = Vec::with_capacity(doc.edges.len());
    for [a, b] in &doc.edges {
        edges.push((lookup(a)?, lookup(b)?));
    }
    let source = lookup(&doc.input)?;
    let sink = lookup(&doc.output)?;
    let g = prune(CnnGraph {
        name: doc.name,
        layers,
        edges,
        source,
        sink,
    });
    let diags = validate(&g);
    if diags.is_empty() {
        Ok(g)
    } else {
        Err(Error::Invalid(diags))
    }
}

/// Keeps only layers lying on some source-to-sink path.
fn prune(g: CnnGraph) -> CnnGraph {
    let n = g.len();
    let reach = |start: usize, forward: bool| {
        let mut seen = vec![false; n];
        let mut stack = vec![start];
        seen[start] = true;
        while let Some(v) = stack.pop() {
            for &(a, b) in &g.edges {
                let (from, to) = if forward { (a, b) } else { (b, a) };
                if from == v && !seen[to] {
                    seen[to] = true;
                    stack.push(to);
                }
            }
        }
        seen
    };
    let fwd = reach(g.source, true);
    let bwd = reach(g.sink, false);
    let keep: Vec<bool> = (0..n).map(|v| fwd[v] && bwd[v]).collect();
    if keep.iter().all(|&k| k) {
        return g;
    }
    let mut remap = vec![usize::MAX; n];
    let mut layers = Vec::new();
    for (v, l) in g.layers.into_iter().enumerate() {
        if keep[v] {
            remap[v] = layers.len();
            layers.push(l);
        }
    }
    let edges = g
        .edges
        .iter()
        .filter(|&&(a, b)| keep[a] && keep[b])
        .map(|&(a, b)| (remap[a], remap[b]))
        .collect();
    CnnGraph {
        name: g.name,
        layers,
        edges,
        source: remap[g.source],
        sink: remap[g.sink],
    }
}

/// Serializes a graph back to the document format.
pub fn serialize_model(g: &CnnGraph) -> String {
    let doc = ModelDoc {
        name: g.name.clone(),
        layers: g.layers.iter().map(layer_to_doc).collect(),
        edges: g
            .edges
            .iter()
            .map(|&(a, b)| [g.layers[a].id.clone(), g.layers[b].id.clone()])
            .collect(),
        input: g.layers[g.source].id.clone(),
        output: g.layers[g.sink].id.clone(),
    };
    serde_json::to_string_pretty(&doc).expect("model document serializes")
}

/// Reads and parses a model file.
pub fn load_model(path: &std::path::Path) -> Result<CnnGraph> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_model(&text)
}
