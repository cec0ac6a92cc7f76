//! Series-parallel PBQP: reduction solver, recognition and an exhaustive
//! oracle.
//!
//! An instance assigns one choice to every vertex, minimizing the sum of the
//! chosen vector entries plus, for every edge `(u, v)`, the matrix entry at
//! `(choice(u), choice(v))`. Edges are undirected; parallel edges are allowed.
//!
//! The solver applies, in priority order: parallel-edge merge, removal of a
//! non-terminal of degree 0, folding of a non-terminal of degree 1 into its
//! neighbour, folding of a degree-1 terminal into its neighbour (which then
//! becomes the terminal), and elimination of a non-terminal of degree 2. When
//! only the two terminals remain their `d_s x d_t` pairs are enumerated and
//! the recorded argmin tables are replayed backwards.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Dense row-major cost matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl CostMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{rows}x{cols} matrix with {} entries",
                data.len()
            )));
        }
        Ok(CostMatrix { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::Shape("ragged matrix rows".into()));
        }
        Self::new(r, c, rows.into_iter().flatten().collect())
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        CostMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    pub fn transpose(&self) -> Self {
        let mut t = CostMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.get(i, j);
            }
        }
        t
    }

    fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols.max(1)).map(<[f64]>::to_vec).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbqpEdge {
    pub u: usize,
    pub v: usize,
    /// `|c_u| x |c_v|`.
    pub matrix: CostMatrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PbqpInstance {
    pub costs: Vec<Vec<f64>>,
    pub edges: Vec<PbqpEdge>,
    pub s: usize,
    pub t: usize,
    /// Constant term carried by reductions that fold whole vertices away.
    pub offset: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PbqpSolution {
    pub assignment: Vec<usize>,
    pub objective: f64,
}

impl PbqpInstance {
    pub fn new(costs: Vec<Vec<f64>>, s: usize, t: usize) -> Self {
        PbqpInstance {
            costs,
            edges: Vec::new(),
            s,
            t,
            offset: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.costs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.costs.is_empty()
    }

    pub fn add_edge(&mut self, u: usize, v: usize, matrix: CostMatrix) -> Result<()> {
        if u >= self.len() || v >= self.len() || u == v {
            return Err(Error::Shape(format!("edge ({u}, {v}) is out of range or a self-loop")));
        }
        if matrix.rows != self.costs[u].len() || matrix.cols != self.costs[v].len() {
            return Err(Error::Shape(format!(
                "edge ({u}, {v}) matrix is {}x{}, vectors have {} and {} entries",
                matrix.rows,
                matrix.cols,
                self.costs[u].len(),
                self.costs[v].len()
            )));
        }
        self.edges.push(PbqpEdge { u, v, matrix });
        Ok(())
    }

    pub fn add_edge_flat(&mut self, u: usize, v: usize, data: Vec<f64>) -> Result<()> {
        let (r, c) = (
            self.costs.get(u).map_or(0, Vec::len),
            self.costs.get(v).map_or(0, Vec::len),
        );
        self.add_edge(u, v, CostMatrix::new(r, c, data)?)
    }

    pub fn check(&self) -> Result<()> {
        if self.costs.iter().any(Vec::is_empty) {
            return Err(Error::Shape("every vertex needs at least one choice".into()));
        }
        if self.s >= self.len() || self.t >= self.len() {
            return Err(Error::Shape("terminal out of range".into()));
        }
        for e in &self.edges {
            if e.u >= self.len() || e.v >= self.len() || e.u == e.v {
                return Err(Error::Shape(format!(
                    "edge ({}, {}) is out of range or a self-loop",
                    e.u, e.v
                )));
            }
            if e.matrix.rows != self.costs[e.u].len() || e.matrix.cols != self.costs[e.v].len() {
                return Err(Error::Shape(format!("edge ({}, {}) matrix dimensions", e.u, e.v)));
            }
        }
        Ok(())
    }

    /// Objective of an assignment, including the constant offset.
    pub fn objective(&self, assignment: &[usize]) -> f64 {
        let nodes: f64 = self.costs.iter().zip(assignment).map(|(c, &a)| c[a]).sum();
        let edges: f64 = self
            .edges
            .iter()
            .map(|e| e.matrix.get(assignment[e.u], assignment[e.v]))
            .sum();
        self.offset + nodes + edges
    }

    /// Parses the standalone JSON instance format.
    pub fn parse(text: &str) -> Result<Self> {
        let doc: InstanceDoc = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
        let mut inst = PbqpInstance::new(doc.vectors, doc.s, doc.t);
        inst.offset = doc.offset;
        for e in doc.edges {
            inst.add_edge(e.u, e.v, CostMatrix::from_rows(e.matrix)?)?;
        }
        inst.check()?;
        Ok(inst)
    }

    pub fn to_json(&self) -> String {
        let doc = InstanceDoc {
            vectors: self.costs.clone(),
            edges: self
                .edges
                .iter()
                .map(|e| EdgeDoc {
                    u: e.u,
                    v: e.v,
                    matrix: e.matrix.to_rows(),
                })
                .collect(),
            s: self.s,
            t: self.t,
            offset: self.offset,
        };
        serde_json::to_string_pretty(&doc).expect("instance serializes")
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeDoc {
    u: usize,
    v: usize,
    matrix: Vec<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDoc {
    vectors: Vec<Vec<f64>>,
    edges: Vec<EdgeDoc>,
    s: usize,
    t: usize,
    #[serde(default)]
    offset: f64,
}

/// One applied reduction, with what backtracking needs.
#[derive(Debug, Clone, PartialEq)]
pub enum Reduction {
    /// Two parallel edges between `u` and `v` were summed.
    Merge { u: usize, v: usize },
    /// Isolated non-terminal `k` fixed to `choice`, its cost moved to the
    /// constant offset.
    Degree0 { k: usize, choice: usize },
    /// `k` folded into its only neighbour `j`; `table[d_j]` is k's choice.
    Degree1 { k: usize, j: usize, table: Vec<usize> },
    /// Terminal `k` folded into neighbour `j`, which becomes the terminal.
    Promote { k: usize, j: usize, table: Vec<usize> },
    /// `k` eliminated between `i` and `j`; `table[d_i * |c_j| + d_j]` is
    /// k's choice.
    Degree2 {
        k: usize,
        i: usize,
        j: usize,
        table: Vec<usize>,
    },
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ReductionTrace {
    pub steps: Vec<Reduction>,
    /// Scalar min-plus (and merge-add) operations performed.
    pub ops: u64,
}

#[derive(Debug, Clone)]
struct WorkEdge {
    u: usize,
    v: usize,
    m: CostMatrix,
}

/// Mutable reduction state over the original vertex numbering.
#[derive(Debug, Clone)]
pub struct Reducer {
    costs: Vec<Vec<f64>>,
    alive: Vec<bool>,
    edges: Vec<Option<WorkEdge>>,
    adj: Vec<Vec<usize>>,
    s: usize,
    t: usize,
    offset: f64,
    trace: ReductionTrace,
}

impl Reducer {
    pub fn new(inst: &PbqpInstance) -> Result<Self> {
        inst.check()?;
        let mut adj = vec![Vec::new(); inst.len()];
        let edges = inst
            .edges
            .iter()
            .enumerate()
            .map(|(id, e)| {
                adj[e.u].push(id);
                adj[e.v].push(id);
                Some(WorkEdge {
                    u: e.u,
                    v: e.v,
                    m: e.matrix.clone(),
                })
            })
            .collect();
        Ok(Reducer {
            costs: inst.costs.clone(),
            alive: vec![true; inst.len()],
            edges,
            adj,
            s: inst.s,
            t: inst.t,
            offset: inst.offset,
            trace: ReductionTrace::default(),
        })
    }

    pub fn trace(&self) -> &ReductionTrace {
        &self.trace
    }

    pub fn terminals(&self) -> (usize, usize) {
        (self.s, self.t)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    fn is_terminal(&self, v: usize) -> bool {
        v == self.s || v == self.t
    }

    fn other(&self, e: usize, v: usize) -> usize {
        let w = self.edges[e].as_ref().expect("live edge");
        if w.u == v {
            w.v
        } else {
            w.u
        }
    }

    /// Entry of edge `e` for `from` taking `df` and the other end taking `dt`.
    #[inline]
    fn entry(&self, e: usize, from: usize, df: usize, dt: usize) -> f64 {
        let w = self.edges[e].as_ref().expect("live edge");
        if w.u == from {
            w.m.get(df, dt)
        } else {
            w.m.get(dt, df)
        }
    }

    fn remove_edge(&mut self, e: usize) -> WorkEdge {
        let w = self.edges[e].take().expect("live edge");
        self.adj[w.u].retain(|&x| x != e);
        self.adj[w.v].retain(|&x| x != e);
        w
    }

    fn push_edge(&mut self, u: usize, v: usize, m: CostMatrix) {
        let id = self.edges.len();
        self.edges.push(Some(WorkEdge { u, v, m }));
        self.adj[u].push(id);
        self.adj[v].push(id);
    }

    fn live_check(&self, k: usize) -> Result<()> {
        if k >= self.alive.len() || !self.alive[k] {
            return Err(Error::Reduction(format!("vertex {k} is not present")));
        }
        Ok(())
    }

    /// Sums two parallel edges.
    pub fn merge_parallel(&mut self, e1: usize, e2: usize) -> Result<()> {
        let ok = |e: usize| self.edges.get(e).is_some_and(Option::is_some);
        if e1 == e2 || !ok(e1) || !ok(e2) {
            return Err(Error::Reduction(format!("edges {e1} and {e2} are not two live edges")));
        }
        let (a, b) = {
            let (x, y) = (self.edges[e1].as_ref().unwrap(), self.edges[e2].as_ref().unwrap());
            ((x.u, x.v), (y.u, y.v))
        };
        if !(a == b || a == (b.1, b.0)) {
            return Err(Error::Reduction(format!(
                "edges {e1} and {e2} do not share both endpoints"
            )));
        }
        let w1 = self.remove_edge(e1);
        let w2 = self.remove_edge(e2);
        let m2 = if (w2.u, w2.v) == (w1.u, w1.v) {
            w2.m
        } else {
            w2.m.transpose()
        };
        let data = w1.m.data.iter().zip(&m2.data).map(|(x, y)| x + y).collect();
        self.trace.ops += w1.m.data.len() as u64;
        self.push_edge(w1.u, w1.v, CostMatrix { data, ..w1.m });
        self.trace.steps.push(Reduction::Merge { u: w1.u, v: w1.v });
        Ok(())
    }

    pub fn reduce_degree0(&mut self, k: usize) -> Result<()> {
        self.live_check(k)?;
        if self.degree(k) != 0 || self.is_terminal(k) {
            return Err(Error::Reduction(format!("vertex {k} is a terminal or has edges")));
        }
        let choice = argmin(&self.costs[k]);
        self.offset += self.costs[k][choice];
        self.trace.ops += self.costs[k].len() as u64;
        self.alive[k] = false;
        self.trace.steps.push(Reduction::Degree0 { k, choice });
        Ok(())
    }

    /// Folds `c_j(d_j) += min_k (c_k(d_k) + T(d_k, d_j))`.
    fn fold_into_neighbour(&mut self, k: usize) -> (usize, Vec<usize>) {
        let e = self.adj[k][0];
        let j = self.other(e, k);
        let (dk, dj) = (self.costs[k].len(), self.costs[j].len());
        let mut table = Vec::with_capacity(dj);
        for b in 0..dj {
            let mut best = f64::INFINITY;
            let mut arg = 0;
            for a in 0..dk {
                let v = self.costs[k][a] + self.entry(e, k, a, b);
                if v < best {
                    best = v;
                    arg = a;
                }
            }
            if best.is_infinite() {
                arg = 0;
            }
            self.costs[j][b] += best;
            table.push(arg);
        }
        self.trace.ops += (dk * dj) as u64;
        self.remove_edge(e);
        self.alive[k] = false;
        (j, table)
    }

    pub fn reduce_degree1(&mut self, k: usize) -> Result<()> {
        self.live_check(k)?;
        if self.degree(k) != 1 || self.is_terminal(k) {
            return Err(Error::Reduction(format!(
                "vertex {k} must be a non-terminal of degree 1, has degree {}",
                self.degree(k)
            )));
        }
        let (j, table) = self.fold_into_neighbour(k);
        self.trace.steps.push(Reduction::Degree1 { k, j, table });
        Ok(())
    }

    /// Folds a degree-1 terminal into its neighbour, which takes over the
    /// terminal role. The neighbour must not be the other terminal.
    pub fn promote_terminal(&mut self, k: usize) -> Result<()> {
        self.live_check(k)?;
        if !self.is_terminal(k) || self.degree(k) != 1 {
            return Err(Error::Reduction(format!("vertex {k} must be a terminal of degree 1")));
        }
        let j = self.other(self.adj[k][0], k);
        if self.is_terminal(j) {
            return Err(Error::Reduction(format!(
                "vertex {k} is adjacent to the other terminal"
            )));
        }
        let (j, table) = self.fold_into_neighbour(k);
        if self.s == k {
            self.s = j;
        } else {
            self.t = j;
        }
        self.trace.steps.push(Reduction::Promote { k, j, table });
        Ok(())
    }

    pub fn reduce_degree2(&mut self, k: usize) -> Result<()> {
        self.live_check(k)?;
        if self.degree(k) != 2 || self.is_terminal(k) {
            return Err(Error::Reduction(format!(
                "vertex {k} must be a non-terminal of degree 2, has degree {}",
                self.degree(k)
            )));
        }
        let (e1, e2) = (self.adj[k][0], self.adj[k][1]);
        let (i, j) = (self.other(e1, k), self.other(e2, k));
        if i == j {
            return Err(Error::Reduction(format!(
                "vertex {k} has parallel edges; merge them first"
            )));
        }
        let (di, dk, dj) = (self.costs[i].len(), self.costs[k].len(), self.costs[j].len());
        let mut data = Vec::with_capacity(di * dj);
        let mut table = Vec::with_capacity(di * dj);
        for a in 0..di {
            for b in 0..dj {
                let mut best = f64::INFINITY;
                let mut arg = 0;
                for c in 0..dk {
                    let v = self.entry(e1, i, a, c) + self.costs[k][c] + self.entry(e2, k, c, b);
                    if v < best {
                        best = v;
                        arg = c;
                    }
                }
                data.push(best);
                table.push(arg);
            }
        }
        self.trace.ops += (di * dj * dk) as u64;
        self.remove_edge(e1);
        self.remove_edge(e2);
        self.alive[k] = false;
        self.push_edge(
            i,
            j,
            CostMatrix {
                rows: di,
                cols: dj,
                data,
            },
        );
        self.trace.steps.push(Reduction::Degree2 { k, i, j, table });
        Ok(())
    }

    fn find_parallel(&self) -> Option<(usize, usize)> {
        for v in 0..self.alive.len() {
            if !self.alive[v] {
                continue;
            }
            let adj = &self.adj[v];
            for (x, &e1) in adj.iter().enumerate() {
                let w1 = self.other(e1, v);
                if let Some(&e2) = adj[x + 1..].iter().find(|&&e2| self.other(e2, v) == w1) {
                    return Some((e1, e2));
                }
            }
        }
        None
    }

    /// Applies the next applicable reduction. Returns `false` when none is.
    pub fn step(&mut self) -> bool {
        if let Some((e1, e2)) = self.find_parallel() {
            return self.merge_parallel(e1, e2).is_ok();
        }
        let live: Vec<usize> = (0..self.alive.len()).filter(|&v| self.alive[v]).collect();
        let pick = |want: usize, terminal: bool| {
            live.iter()
                .copied()
                .find(|&v| self.degree(v) == want && self.is_terminal(v) == terminal)
        };
        if let Some(k) = pick(0, false) {
            return self.reduce_degree0(k).is_ok();
        }
        if let Some(k) = pick(1, false) {
            return self.reduce_degree1(k).is_ok();
        }
        for k in [self.s, self.t] {
            if self.degree(k) == 1 && !self.is_terminal(self.other(self.adj[k][0], k)) {
                return self.promote_terminal(k).is_ok();
            }
        }
        if let Some(k) = pick(2, false) {
            return self.reduce_degree2(k).is_ok();
        }
        false
    }

    /// Reduces as far as possible; true when only the terminals remain.
    pub fn run(&mut self) -> bool {
        while self.step() {}
        self.is_reduced()
    }

    pub fn is_reduced(&self) -> bool {
        (0..self.alive.len()).all(|v| !self.alive[v] || self.is_terminal(v))
    }

    /// The current (partially reduced) instance with dead vertices removed
    /// and the rest renumbered in order.
    #[allow(clippy::needless_range_loop)]
    pub fn snapshot(&self) -> PbqpInstance {
        let mut remap = vec![usize::MAX; self.alive.len()];
        let mut costs = Vec::new();
        for v in 0..self.alive.len() {
            if self.alive[v] {
                remap[v] = costs.len();
                costs.push(self.costs[v].clone());
            }
        }
        let mut inst = PbqpInstance::new(costs, remap[self.s], remap[self.t]);
        inst.offset = self.offset;
        for w in self.edges.iter().flatten() {
            inst.edges.push(PbqpEdge {
                u: remap[w.u],
                v: remap[w.v],
                matrix: w.m.clone(),
            });
        }
        inst
    }

    /// Human-readable residual graph.
    pub fn residual(&self) -> String {
        let mut out = String::new();
        let live: Vec<usize> = (0..self.alive.len()).filter(|&v| self.alive[v]).collect();
        let _ = writeln!(out, "  vertices ({}): {:?}", live.len(), live);
        for w in self.edges.iter().flatten() {
            let _ = writeln!(out, "  edge {} -- {}", w.u, w.v);
        }
        let _ = write!(out, "  terminals: s={}, t={}", self.s, self.t);
        out
    }

    /// Enumerates terminal pairs and backtracks the trace.
    fn finish(mut self, original: &PbqpInstance) -> (PbqpSolution, ReductionTrace) {
        let (s, t) = (self.s, self.t);
        let n = self.alive.len();
        let mut choice = vec![usize::MAX; n];
        if s == t {
            choice[s] = argmin(&self.costs[s]);
            self.trace.ops += self.costs[s].len() as u64;
        } else {
            let between: Vec<usize> = self.adj[s].clone();
            let (ds, dt) = (self.costs[s].len(), self.costs[t].len());
            let mut best = f64::INFINITY;
            let mut arg = (0, 0);
            for a in 0..ds {
                for b in 0..dt {
                    let mut v = self.costs[s][a] + self.costs[t][b];
                    for &e in &between {
                        v += self.entry(e, s, a, b);
                    }
                    if v < best {
                        best = v;
                        arg = (a, b);
                    }
                }
            }
            self.trace.ops += (ds * dt) as u64;
            choice[s] = arg.0;
            choice[t] = arg.1;
        }
        for step in self.trace.steps.iter().rev() {
            match step {
                Reduction::Merge { .. } => {}
                Reduction::Degree0 { k, choice: c } => choice[*k] = *c,
                Reduction::Degree1 { k, j, table } | Reduction::Promote { k, j, table } => {
                    choice[*k] = table[choice[*j]]
                }
                Reduction::Degree2 { k, i, j, table } => {
                    let dj = self.costs[*j].len();
                    choice[*k] = table[choice[*i] * dj + choice[*j]];
                }
            }
        }
        let objective = original.objective(&choice);
        (
            PbqpSolution {
                assignment: choice,
                objective,
            },
            self.trace,
        )
    }
}

fn argmin(v: &[f64]) -> usize {
    let mut arg = 0;
    for (i, &x) in v.iter().enumerate() {
        if x < v[arg] {
            arg = i;
        }
    }
    arg
}

fn single_step(inst: &PbqpInstance, f: impl FnOnce(&mut Reducer) -> Result<()>) -> Result<PbqpInstance> {
    let mut r = Reducer::new(inst)?;
    f(&mut r)?;
    Ok(r.snapshot())
}

/// Eliminates degree-2 vertex `k`; the result is renumbered.
pub fn reduce_degree2(inst: &PbqpInstance, k: usize) -> Result<PbqpInstance> {
    single_step(inst, |r| r.reduce_degree2(k))
}

/// Folds pendant vertex `k` into its neighbour; the result is renumbered.
pub fn reduce_degree1(inst: &PbqpInstance, k: usize) -> Result<PbqpInstance> {
    single_step(inst, |r| r.reduce_degree1(k))
}

/// Sums parallel edges `e1` and `e2` (indices into `inst.edges`).
pub fn merge_parallel(inst: &PbqpInstance, e1: usize, e2: usize) -> Result<PbqpInstance> {
    single_step(inst, |r| r.merge_parallel(e1, e2))
}

/// Optimal solution of a series-parallel instance.
pub fn solve_sp(inst: &PbqpInstance) -> Result<PbqpSolution> {
    solve_sp_traced(inst).map(|(s, _)| s)
}

/// As [`solve_sp`], also returning the reduction trace.
pub fn solve_sp_traced(inst: &PbqpInstance) -> Result<(PbqpSolution, ReductionTrace)> {
    let mut r = Reducer::new(inst)?;
    if !r.run() {
        return Err(Error::NotSeriesParallel(r.residual()));
    }
    Ok(r.finish(inst))
}

/// [`solve_sp`], falling back to enumeration for irreducible instances when
/// `fallback` is set.
pub fn solve(inst: &PbqpInstance, fallback: bool) -> Result<PbqpSolution> {
    match solve_sp(inst) {
        Err(Error::NotSeriesParallel(_)) if fallback => solve_bruteforce(inst),
        other => other,
    }
}

pub const BRUTEFORCE_LIMIT: u128 = 10_000_000;

/// Exact optimum by enumeration; ties go to the lexicographically smallest
/// assignment.
pub fn solve_bruteforce(inst: &PbqpInstance) -> Result<PbqpSolution> {
    inst.check()?;
    let space = inst
        .costs
        .iter()
        .try_fold(1u128, |acc, c| acc.checked_mul(c.len() as u128))
        .unwrap_or(u128::MAX);
    if space > BRUTEFORCE_LIMIT {
        return Err(Error::TooLarge(space));
    }
    let n = inst.len();
    let mut cur = vec![0usize; n];
    let mut best = PbqpSolution {
        assignment: cur.clone(),
        objective: inst.objective(&cur),
    };
    loop {
        // odometer, last vertex fastest, so the order is lexicographic
        let mut pos = n;
        loop {
            if pos == 0 {
                return Ok(best);
            }
            pos -= 1;
            cur[pos] += 1;
            if cur[pos] < inst.costs[pos].len() {
                break;
            }
            cur[pos] = 0;
        }
        let v = inst.objective(&cur);
        if v < best.objective {
            best = PbqpSolution {
                assignment: cur.clone(),
                objective: v,
            };
        }
    }
}

/// Structural series-parallel test on an undirected graph with terminals.
pub fn is_series_parallel(n: usize, edges: &[(usize, usize)], s: usize, t: usize) -> (bool, ReductionTrace) {
    let mut inst = PbqpInstance::new(vec![vec![0.0]; n], s, t);
    for &(u, v) in edges {
        if u < n && v < n && u != v {
            inst.edges.push(PbqpEdge {
                u,
                v,
                matrix: CostMatrix::zeros(1, 1),
            });
        }
    }
    match Reducer::new(&inst) {
        Ok(mut r) => {
            let ok = r.run();
            (ok, r.trace.clone())
        }
        Err(_) => (false, ReductionTrace::default()),
    }
}

impl PbqpInstance {
    pub fn is_series_parallel(&self) -> (bool, ReductionTrace) {
        let edges: Vec<(usize, usize)> = self.edges.iter().map(|e| (e.u, e.v)).collect();
        is_series_parallel(self.len(), &edges, self.s, self.t)
    }
}
