//! Undirected simple graphs over dense vertex identifiers.
//!
//! A [`Graph`] is immutable: removal of vertices is expressed by filtering
//! with a [`VertexSet`] and taking induced subgraphs, which keep the original
//! identifiers so matchings found on different pieces union cleanly.

use std::fmt;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::rng::RandomSource;

pub type Vertex = u32;

/// Unordered pair stored as `(min, max)`.
pub type Edge = (Vertex, Vertex);

#[inline]
pub fn normalize(u: Vertex, v: Vertex) -> Edge {
    if u <= v {
        (u, v)
    } else {
        (v, u)
    }
}

/// Compressed adjacency over `0..n`. Neighbor lists are sorted.
#[derive(Clone, PartialEq, Eq)]
pub struct Graph {
    n: usize,
    edges: Vec<Edge>,
    offsets: Vec<usize>,
    adjacency: Vec<Vertex>,
}

impl fmt::Debug for Graph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Graph")
            .field("n", &self.n)
            .field("m", &self.edges.len())
            .finish()
    }
}

/// Builds a graph, dropping self-loops and duplicate pairs.
pub fn build_graph(n: usize, edges: impl IntoIterator<Item = (u64, u64)>) -> Result<Graph> {
    let mut canon = Vec::new();
    for (u, v) in edges {
        for w in [u, v] {
            if w >= n as u64 {
                return Err(Error::EndpointOutOfRange { vertex: w, n });
            }
        }
        if u != v {
            canon.push(normalize(u as Vertex, v as Vertex));
        }
    }
    canon.sort_unstable();
    canon.dedup();
    Ok(Graph::from_canonical(n, canon))
}

impl Graph {
    pub fn empty(n: usize) -> Self {
        Self::from_canonical(n, Vec::new())
    }

    /// `edges` must be sorted, deduplicated, normalized and in range.
    pub(crate) fn from_canonical(n: usize, edges: Vec<Edge>) -> Self {
        debug_assert!(edges.windows(2).all(|w| w[0] < w[1]));
        debug_assert!(edges.iter().all(|&(u, v)| u < v && (v as usize) < n));
        let mut offsets = vec![0usize; n + 1];
        for &(u, v) in &edges {
            offsets[u as usize + 1] += 1;
            offsets[v as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut fill = offsets.clone();
        let mut adjacency = vec![0 as Vertex; 2 * edges.len()];
        // Canonical order fills every list in ascending order.
        for &(u, v) in &edges {
            adjacency[fill[u as usize]] = v;
            fill[u as usize] += 1;
            adjacency[fill[v as usize]] = u;
            fill[v as usize] += 1;
        }
        debug_assert!((0..n).all(|i| adjacency[offsets[i]..offsets[i + 1]].windows(2).all(|w| w[0] < w[1])));
        Self {
            n,
            edges,
            offsets,
            adjacency,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    /// Canonical edge list, sorted, each pair as `(min, max)`.
    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn neighbors(&self, v: Vertex) -> &[Vertex] {
        let v = v as usize;
        &self.adjacency[self.offsets[v]..self.offsets[v + 1]]
    }

    pub fn degree(&self, v: Vertex) -> usize {
        let v = v as usize;
        self.offsets[v + 1] - self.offsets[v]
    }

    pub fn max_degree(&self) -> usize {
        (0..self.n as Vertex).map(|v| self.degree(v)).max().unwrap_or(0)
    }

    pub fn has_edge(&self, u: Vertex, v: Vertex) -> bool {
        (u as usize) < self.n && self.neighbors(u).binary_search(&v).is_ok()
    }

    pub fn vertices(&self) -> impl Iterator<Item = Vertex> {
        0..self.n as Vertex
    }

    /// `G[keep]`: edges with both endpoints in `keep`, identifiers preserved.
    pub fn induced_subgraph(&self, keep: &VertexSet) -> Result<Graph> {
        if keep.universe() > self.n {
            if let Some(v) = keep.iter().find(|&v| v as usize >= self.n) {
                return Err(Error::EndpointOutOfRange {
                    vertex: v as u64,
                    n: self.n,
                });
            }
        }
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(u, v)| keep.contains(u) && keep.contains(v))
            .collect();
        Ok(Graph::from_canonical(self.n, edges))
    }

    /// Degree of every vertex inside `G[alive]`; zero for vertices outside.
    pub fn degrees_within(&self, alive: &VertexSet) -> Vec<usize> {
        let mut deg = vec![0usize; self.n];
        for v in alive.iter() {
            deg[v as usize] = self
                .neighbors(v)
                .iter()
                .filter(|&&u| alive.contains(u))
                .count();
        }
        deg
    }

    /// `G[vertices]` relabelled to `0..k` (position in the sorted list).
    pub fn local_subgraph(&self, vertices: &[Vertex]) -> Subgraph {
        let mut vertices = vertices.to_vec();
        vertices.sort_unstable();
        vertices.dedup();
        let mut edges = Vec::new();
        for (lu, &u) in vertices.iter().enumerate() {
            for &w in self.neighbors(u) {
                if w > u {
                    if let Ok(lw) = vertices.binary_search(&w) {
                        edges.push((lu as Vertex, lw as Vertex));
                    }
                }
            }
        }
        edges.sort_unstable();
        Subgraph::from_parts(vertices, edges)
    }
}

/// An induced subgraph held with local identifiers `0..k`.
///
/// `vertices[i]` is the global identifier of local vertex `i`; the list is
/// sorted, so local order agrees with global order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subgraph {
    vertices: Vec<Vertex>,
    local: Graph,
}

impl Subgraph {
    /// `local_edges` must be canonical over `0..vertices.len()`.
    pub(crate) fn from_parts(vertices: Vec<Vertex>, local_edges: Vec<Edge>) -> Self {
        let local = Graph::from_canonical(vertices.len(), local_edges);
        Self { vertices, local }
    }

    pub fn empty() -> Self {
        Self {
            vertices: Vec::new(),
            local: Graph::empty(0),
        }
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn num_edges(&self) -> usize {
        self.local.num_edges()
    }

    pub fn global_ids(&self) -> &[Vertex] {
        &self.vertices
    }

    pub fn global(&self, local: Vertex) -> Vertex {
        self.vertices[local as usize]
    }

    pub fn local(&self) -> &Graph {
        &self.local
    }

    /// Words needed to store the piece: one per vertex identifier, two per edge.
    pub fn words(&self) -> usize {
        self.vertices.len() + 2 * self.local.num_edges()
    }
}

/// Membership over `0..universe`, iterated in ascending order.
#[derive(Clone, PartialEq, Eq)]
pub struct VertexSet {
    universe: usize,
    bits: Vec<u64>,
    len: usize,
}

impl fmt::Debug for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_set().entries(self.iter()).finish()
    }
}

impl VertexSet {
    pub fn new(universe: usize) -> Self {
        Self {
            universe,
            bits: vec![0; universe.div_ceil(64)],
            len: 0,
        }
    }

    pub fn full(universe: usize) -> Self {
        let mut s = Self::new(universe);
        for v in 0..universe as Vertex {
            s.insert(v);
        }
        s
    }

    pub fn from_vertices(universe: usize, vertices: impl IntoIterator<Item = Vertex>) -> Result<Self> {
        let mut s = Self::new(universe);
        for v in vertices {
            if v as usize >= universe {
                return Err(Error::EndpointOutOfRange {
                    vertex: v as u64,
                    n: universe,
                });
            }
            s.insert(v);
        }
        Ok(s)
    }

    pub fn universe(&self) -> usize {
        self.universe
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn contains(&self, v: Vertex) -> bool {
        let v = v as usize;
        v < self.universe && self.bits[v / 64] >> (v % 64) & 1 == 1
    }

    /// Panics if `v` is outside the universe.
    pub fn insert(&mut self, v: Vertex) -> bool {
        let i = v as usize;
        assert!(i < self.universe, "vertex {v} outside universe {}", self.universe);
        let mask = 1u64 << (i % 64);
        let fresh = self.bits[i / 64] & mask == 0;
        self.bits[i / 64] |= mask;
        self.len += fresh as usize;
        fresh
    }

    pub fn remove(&mut self, v: Vertex) -> bool {
        let i = v as usize;
        if i >= self.universe {
            return false;
        }
        let mask = 1u64 << (i % 64);
        let present = self.bits[i / 64] & mask != 0;
        self.bits[i / 64] &= !mask;
        self.len -= present as usize;
        present
    }

    pub fn iter(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.bits.iter().enumerate().flat_map(|(w, &word)| {
            let mut word = word;
            std::iter::from_fn(move || {
                if word == 0 {
                    return None;
                }
                let b = word.trailing_zeros();
                word &= word - 1;
                Some((w * 64) as Vertex + b)
            })
        })
    }

    pub fn is_subset(&self, other: &VertexSet) -> bool {
        self.iter().all(|v| other.contains(v))
    }

    pub fn is_disjoint(&self, other: &VertexSet) -> bool {
        self.iter().all(|v| !other.contains(v))
    }

    pub fn union_with(&mut self, other: &VertexSet) {
        for v in other.iter() {
            self.insert(v);
        }
    }

    pub fn difference_with(&mut self, other: &VertexSet) {
        for v in other.iter() {
            self.remove(v);
        }
    }
}

// ---------------------------------------------------------------------------
// Generators
// ---------------------------------------------------------------------------

/// `G(n, p)` by geometric skipping over the pair sequence.
pub fn gen_erdos_renyi(n: usize, p: f64, seed: u64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Generator(format!("edge probability {p} outside [0, 1]")));
    }
    let mut edges = Vec::new();
    if p == 0.0 || n < 2 {
        return Ok(Graph::empty(n));
    }
    if p == 1.0 {
        for v in 1..n as Vertex {
            for w in 0..v {
                edges.push((w, v));
            }
        }
        edges.sort_unstable();
        return Ok(Graph::from_canonical(n, edges));
    }
    let mut rng = crate::stream(seed);
    let log_q = (1.0 - p).ln();
    let (mut v, mut w): (usize, i64) = (1, -1);
    while v < n {
        let r = rng.uniform();
        w += 1 + ((1.0 - r).ln() / log_q).floor() as i64;
        while w >= v as i64 && v < n {
            w -= v as i64;
            v += 1;
        }
        if v < n {
            edges.push((w as Vertex, v as Vertex));
        }
    }
    edges.sort_unstable();
    Ok(Graph::from_canonical(n, edges))
}

/// Options for [`gen_random_regular_with`].
#[derive(Debug, Clone, Copy)]
pub struct RegularOptions {
    /// Full restarts allowed before giving up.
    pub retry_budget: usize,
    /// Consecutive rejected stub pairs before the remaining candidates are
    /// enumerated explicitly.
    pub stall_limit: usize,
}

impl Default for RegularOptions {
    fn default() -> Self {
        Self {
            retry_budget: 1000,
            stall_limit: 32,
        }
    }
}

pub fn gen_random_regular(n: usize, d: usize, seed: u64) -> Result<Graph> {
    gen_random_regular_with(n, d, seed, RegularOptions::default())
}

/// Simple `d`-regular graph from the pairing model.
///
/// Stubs are paired one at a time: two unpaired stubs are drawn uniformly and
/// kept only if they form neither a loop nor a repeated edge. When no valid
/// pair is left the whole pairing restarts.
pub fn gen_random_regular_with(n: usize, d: usize, seed: u64, opts: RegularOptions) -> Result<Graph> {
    if d >= n.max(1) && !(n == 0 && d == 0) {
        return Err(Error::Generator(format!("degree {d} must be below n = {n}")));
    }
    if n * d % 2 != 0 {
        return Err(Error::Generator(format!("n * d = {} must be even", n * d)));
    }
    let mut rng = crate::stream(seed);
    for _ in 0..opts.retry_budget {
        if let Some(edges) = try_pairing(n, d, &mut rng, opts.stall_limit) {
            let mut edges = edges;
            edges.sort_unstable();
            return Ok(Graph::from_canonical(n, edges));
        }
    }
    Err(Error::RetryBudgetExhausted(opts.retry_budget))
}

fn try_pairing(n: usize, d: usize, rng: &mut impl RandomSource, stall_limit: usize) -> Option<Vec<Edge>> {
    let mut points: Vec<Vertex> = (0..n as Vertex).flat_map(|v| std::iter::repeat_n(v, d)).collect();
    let mut adj: Vec<Vec<Vertex>> = vec![Vec::with_capacity(d); n];
    let mut edges = Vec::with_capacity(n * d / 2);
    let mut stalls = 0;

    let accept = |points: &mut Vec<Vertex>, adj: &mut Vec<Vec<Vertex>>, edges: &mut Vec<Edge>, i: usize, j: usize| {
        let (u, v) = (points[i], points[j]);
        adj[u as usize].push(v);
        adj[v as usize].push(u);
        edges.push(normalize(u, v));
        let (hi, lo) = if i > j { (i, j) } else { (j, i) };
        points.swap_remove(hi);
        points.swap_remove(lo);
    };

    while !points.is_empty() {
        if stalls < stall_limit {
            let i = rng.below(points.len());
            let j = rng.below(points.len());
            let (u, v) = (points[i], points[j]);
            if i != j && u != v && !adj[u as usize].contains(&v) {
                accept(&mut points, &mut adj, &mut edges, i, j);
                stalls = 0;
            } else {
                stalls += 1;
            }
            continue;
        }
        // Stalled: weigh each admissible vertex pair by its stub product, which
        // is the distribution rejection sampling converges to.
        let mut residual: Vec<(Vertex, usize)> = Vec::new();
        let mut sorted = points.clone();
        sorted.sort_unstable();
        for v in sorted {
            match residual.last_mut() {
                Some((w, c)) if *w == v => *c += 1,
                _ => residual.push((v, 1)),
            }
        }
        let mut candidates = Vec::new();
        let mut total = 0usize;
        for a in 0..residual.len() {
            for b in a + 1..residual.len() {
                let (u, cu) = residual[a];
                let (v, cv) = residual[b];
                if !adj[u as usize].contains(&v) {
                    total += cu * cv;
                    candidates.push((u, v, total));
                }
            }
        }
        if candidates.is_empty() {
            return None;
        }
        let pick = rng.below(total);
        let &(u, v, _) = candidates.iter().find(|c| pick < c.2).expect("pick below total");
        let i = points.iter().position(|&x| x == u).expect("stub present");
        let j = points.iter().position(|&x| x == v).expect("stub present");
        accept(&mut points, &mut adj, &mut edges, i, j);
        stalls = 0;
    }
    Some(edges)
}

/// Disjoint union of `t` regular graphs on `2^t` vertices each; component `i`
/// has degree `2^i` and occupies identifiers `[i * 2^t, (i + 1) * 2^t)`.
pub fn gen_union_of_regulars(t: u32, seed: u64) -> Result<Graph> {
    if t == 0 || t > 24 {
        return Err(Error::Generator(format!("scale t = {t} outside [1, 24]")));
    }
    let size = 1usize << t;
    let n = t as usize * size;
    let mut rng = crate::stream(seed);
    let mut edges = Vec::new();
    for i in 0..t {
        let comp = gen_random_regular(size, 1 << i, rng.next_seed())?;
        let offset = (i as usize * size) as Vertex;
        edges.extend(comp.edges().iter().map(|&(u, v)| (u + offset, v + offset)));
    }
    edges.sort_unstable();
    Ok(Graph::from_canonical(n, edges))
}

// ---------------------------------------------------------------------------
// Edge-list text format: "n m" then m lines "u v".
// ---------------------------------------------------------------------------

pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "{} {}", g.n(), g.num_edges())?;
    for &(u, v) in g.edges() {
        writeln!(out, "{u} {v}")?;
    }
    Ok(())
}

/// Strict reader: loops, duplicates and a wrong edge count are errors.
pub fn read_edge_list<R: BufRead>(input: R) -> Result<Graph> {
    let mut lines = input.lines().enumerate();
    let parse_pair = |line_no: usize, line: &str| -> Result<(u64, u64)> {
        let mut it = line.split_whitespace();
        let bad = |msg: &str| Error::Parse {
            line: line_no,
            msg: msg.to_string(),
        };
        let a = it.next().ok_or_else(|| bad("expected two integers"))?;
        let b = it.next().ok_or_else(|| bad("expected two integers"))?;
        if it.next().is_some() {
            return Err(bad("trailing tokens"));
        }
        let a = a.parse::<u64>().map_err(|e| bad(&e.to_string()))?;
        let b = b.parse::<u64>().map_err(|e| bad(&e.to_string()))?;
        Ok((a, b))
    };

    let (n, m) = loop {
        match lines.next() {
            None => return Err(Error::Parse { line: 1, msg: "missing header".into() }),
            Some((i, line)) => {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                break parse_pair(i + 1, &line)?;
            }
        }
    };
    let n = n as usize;
    let mut edges = Vec::with_capacity(m as usize);
    let mut last_line = 1;
    for (i, line) in lines {
        let line = line?;
        last_line = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let (u, v) = parse_pair(i + 1, &line)?;
        for w in [u, v] {
            if w >= n as u64 {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("endpoint {w} >= n = {n}"),
                });
            }
        }
        if u == v {
            return Err(Error::Parse {
                line: i + 1,
                msg: format!("self-loop on {u}"),
            });
        }
        edges.push(normalize(u as Vertex, v as Vertex));
    }
    if edges.len() as u64 != m {
        return Err(Error::Parse {
            line: last_line,
            msg: format!("header declares {m} edges, found {}", edges.len()),
        });
    }
    edges.sort_unstable();
    if let Some(w) = edges.windows(2).find(|w| w[0] == w[1]) {
        return Err(Error::DuplicateEdge(w[0].0, w[0].1));
    }
    Ok(Graph::from_canonical(n, edges))
}
