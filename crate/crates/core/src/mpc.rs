//! Simulated MPC cluster.
//!
//! Everything runs in one process. The cluster only keeps books: each
//! primitive charges a constant number of rounds and records, per round, the
//! largest number of words any machine sent, received and stored. Word model:
//! one word per vertex identifier, edge endpoint or annotation scalar.
//!
//! Global primitives (sort, search, broadcast) spread their data evenly over
//! all machines; if an even share does not fit, the primitive fails with
//! [`MpcError::Overflow`]. [`Cluster::partition_to_machines`] is different:
//! where a vertex lands is decided by the caller, and a machine that receives
//! too much is flagged rather than failing the call.

use std::collections::BTreeMap;
use std::io::Write;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::{Edge, Graph, Subgraph, Vertex, VertexSet};
use crate::rng::RandomSource;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MpcError {
    #[error("cluster needs at least one machine and one word per machine, got {machines} x {space}")]
    InvalidShape { machines: usize, space: usize },
    #[error("round cost for {0} must be at least 1")]
    InvalidCost(&'static str),
    #[error("machine {machine} over capacity in {primitive}: {words} words > {capacity}")]
    Overflow {
        primitive: String,
        machine: usize,
        words: usize,
        capacity: usize,
    },
    #[error("machine index {machine} outside a cluster of {machines}")]
    UnknownMachine { machine: usize, machines: usize },
    #[error("duplicate key in search table")]
    DuplicateKey,
    #[error("invalid primitive input: {0}")]
    InvalidInput(String),
    #[error("ledger audit failed: {0}")]
    Audit(String),
}

/// Rounds charged per primitive invocation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundCosts {
    pub sort: u64,
    pub search: u64,
    pub broadcast: u64,
    pub partition: u64,
}

impl Default for RoundCosts {
    fn default() -> Self {
        Self {
            sort: 1,
            search: 1,
            broadcast: 1,
            partition: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundRecord {
    /// Round counter after this primitive.
    pub round: u64,
    pub primitive: String,
    /// Rounds charged by this primitive.
    pub cost: u64,
    pub machines: usize,
    pub max_sent: usize,
    pub max_recv: usize,
    pub max_stored: usize,
    /// Machines flagged over capacity (partition only).
    pub overflowed: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RoundLedger {
    records: Vec<RoundRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerSummary {
    pub total_rounds: u64,
    pub records: usize,
    pub max_sent: usize,
    pub max_recv: usize,
    pub max_stored: usize,
    pub overflowed_machines: usize,
    pub rounds_by_primitive: BTreeMap<String, u64>,
}

#[derive(Serialize)]
struct CsvRow<'a> {
    round: u64,
    primitive: &'a str,
    machines: usize,
    max_sent: usize,
    max_recv: usize,
    max_stored: usize,
}

impl RoundLedger {
    pub fn records(&self) -> &[RoundRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn total_rounds(&self) -> u64 {
        self.records.iter().map(|r| r.cost).sum()
    }

    /// Records from index `start` on.
    pub fn since(&self, start: usize) -> RoundLedger {
        RoundLedger {
            records: self.records[start.min(self.records.len())..].to_vec(),
        }
    }

    pub fn summary(&self) -> LedgerSummary {
        let mut by = BTreeMap::new();
        for r in &self.records {
            *by.entry(r.primitive.clone()).or_insert(0) += r.cost;
        }
        LedgerSummary {
            total_rounds: self.total_rounds(),
            records: self.records.len(),
            max_sent: self.records.iter().map(|r| r.max_sent).max().unwrap_or(0),
            max_recv: self.records.iter().map(|r| r.max_recv).max().unwrap_or(0),
            max_stored: self.records.iter().map(|r| r.max_stored).max().unwrap_or(0),
            overflowed_machines: self.records.iter().map(|r| r.overflowed).sum(),
            rounds_by_primitive: by,
        }
    }

    /// CSV with columns `round,primitive,machines,max_sent,max_recv,max_stored`.
    pub fn write_csv<W: Write>(&self, out: W) -> crate::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        if self.records.is_empty() {
            w.write_record(["round", "primitive", "machines", "max_sent", "max_recv", "max_stored"])
                .map_err(|e| crate::Error::Io(e.to_string()))?;
        }
        for r in &self.records {
            w.serialize(CsvRow {
                round: r.round,
                primitive: &r.primitive,
                machines: r.machines,
                max_sent: r.max_sent,
                max_recv: r.max_recv,
                max_stored: r.max_stored,
            })
            .map_err(|e| crate::Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `Q_X` from neighbor counting: for every vertex `v`, the records
/// `(v, -inf), (v, u) for u in N(v) ∩ X ascending, (v, +inf)`, in one sorted
/// sequence.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SortedAdjacency {
    seq: Vec<(Vertex, Slot)>,
    lo: Vec<usize>,
    hi: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Slot {
    Lo,
    Node(Vertex),
    Hi,
}

impl SortedAdjacency {
    /// `|N(v) ∩ X|` as the index difference of the two sentinels, minus one.
    pub fn count(&self, v: Vertex) -> usize {
        self.hi[v as usize] - self.lo[v as usize] - 1
    }

    /// The `r`-th (0-based) marked neighbor of `v`, read at index
    /// `lo(v) + 1 + r`.
    pub fn nth(&self, v: Vertex, r: usize) -> Option<Vertex> {
        if r >= self.count(v) {
            return None;
        }
        match self.seq[self.lo[v as usize] + 1 + r] {
            (owner, Slot::Node(u)) if owner == v => Some(u),
            _ => None,
        }
    }

    pub fn counts(&self) -> Vec<usize> {
        (0..self.lo.len() as Vertex).map(|v| self.count(v)).collect()
    }

    pub fn len(&self) -> usize {
        self.seq.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seq.is_empty()
    }
}

/// Per-machine pieces of a vertex partition.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    pub parts: Vec<Subgraph>,
    /// Machines whose piece exceeded capacity; their gauge is zeroed.
    pub overflowed: Vec<bool>,
    /// Edges of `G[alive]` whose endpoints landed on different machines.
    pub parked_edges: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    machines: usize,
    space: usize,
    round: u64,
    costs: RoundCosts,
    stored: Vec<usize>,
    ledger: RoundLedger,
}

impl Cluster {
    pub fn new(machines: usize, space: usize) -> Result<Self, MpcError> {
        Self::with_costs(machines, space, RoundCosts::default())
    }

    pub fn with_costs(machines: usize, space: usize, costs: RoundCosts) -> Result<Self, MpcError> {
        if machines == 0 || space == 0 {
            return Err(MpcError::InvalidShape { machines, space });
        }
        for (name, c) in [
            ("sort", costs.sort),
            ("search", costs.search),
            ("broadcast", costs.broadcast),
            ("partition", costs.partition),
        ] {
            if c == 0 {
                return Err(MpcError::InvalidCost(name));
            }
        }
        Ok(Self {
            machines,
            space,
            round: 0,
            costs,
            stored: vec![0; machines],
            ledger: RoundLedger::default(),
        })
    }

    pub fn machine_count(&self) -> usize {
        self.machines
    }

    pub fn space_per_machine(&self) -> usize {
        self.space
    }

    pub fn rounds(&self) -> u64 {
        self.round
    }

    pub fn costs(&self) -> RoundCosts {
        self.costs
    }

    pub fn ledger(&self) -> &RoundLedger {
        &self.ledger
    }

    pub fn stored_words(&self, machine: usize) -> usize {
        self.stored[machine]
    }

    fn record(&mut self, primitive: &str, cost: u64, machines: usize, sent: usize, recv: usize, overflowed: usize) {
        self.round += cost;
        let max_stored = self.stored.iter().copied().max().unwrap_or(0);
        self.ledger.records.push(RoundRecord {
            round: self.round,
            primitive: primitive.to_string(),
            cost,
            machines,
            max_sent: sent,
            max_recv: recv,
            max_stored,
            overflowed,
        });
    }

    /// Spreads `words` evenly over the machines and charges `cost` rounds.
    fn charge_even(&mut self, primitive: &str, words: usize, cost: u64) -> Result<(), MpcError> {
        let share = words.div_ceil(self.machines);
        if share > self.space {
            return Err(MpcError::Overflow {
                primitive: primitive.to_string(),
                machine: 0,
                words: share,
                capacity: self.space,
            });
        }
        let touched = words.min(self.machines).max(usize::from(words > 0));
        let base = words / self.machines;
        let extra = words % self.machines;
        for (i, s) in self.stored.iter_mut().enumerate() {
            *s = base + usize::from(i < extra);
        }
        self.record(primitive, cost, touched, share, share, 0);
        Ok(())
    }

    /// Sorts `items` (each `words_per_item` words) and annotates each with its
    /// global index.
    pub fn dist_sort<T: Ord>(&mut self, items: Vec<T>, words_per_item: usize) -> Result<Vec<(usize, T)>, MpcError> {
        let mut items = items;
        self.sort_in_place(&mut items, words_per_item + 1)?;
        Ok(items.into_iter().enumerate().collect())
    }

    fn sort_in_place<T: Ord>(&mut self, items: &mut [T], words_per_item: usize) -> Result<(), MpcError> {
        self.charge_even("sort", items.len() * words_per_item, self.costs.sort)?;
        items.sort_unstable();
        Ok(())
    }

    /// Answers each query with the value stored under its key; absent keys
    /// give `None`. Several queries may ask for the same key.
    pub fn parallel_search<K: Ord + Clone, V: Clone>(
        &mut self,
        table: &[(K, V)],
        queries: &[K],
    ) -> Result<Vec<Option<V>>, MpcError> {
        let mut sorted: Vec<&(K, V)> = table.iter().collect();
        sorted.sort_by(|a, b| a.0.cmp(&b.0));
        if sorted.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(MpcError::DuplicateKey);
        }
        self.charge_even("search", 2 * table.len() + 2 * queries.len(), self.costs.search)?;
        Ok(queries
            .iter()
            .map(|q| {
                sorted
                    .binary_search_by(|(k, _)| k.cmp(q))
                    .ok()
                    .map(|i| sorted[i].1.clone())
            })
            .collect())
    }

    /// Builds and sorts `A_X` for `X = marked`. One sort.
    pub fn sorted_adjacency(&mut self, g: &Graph, marked: &VertexSet) -> Result<SortedAdjacency, MpcError> {
        if marked.universe() != g.n() {
            return Err(MpcError::InvalidInput(format!(
                "marked set over {} vertices for a graph on {}",
                marked.universe(),
                g.n()
            )));
        }
        let mut seq = Vec::with_capacity(2 * g.n());
        for v in g.vertices() {
            seq.push((v, Slot::Lo));
            seq.push((v, Slot::Hi));
            for &u in g.neighbors(v) {
                if marked.contains(u) {
                    seq.push((v, Slot::Node(u)));
                }
            }
        }
        // record + index annotation
        self.sort_in_place(&mut seq, 3)?;
        let mut lo = vec![0; g.n()];
        let mut hi = vec![0; g.n()];
        for (i, &(v, s)) in seq.iter().enumerate() {
            match s {
                Slot::Lo => lo[v as usize] = i,
                Slot::Hi => hi[v as usize] = i,
                Slot::Node(_) => {}
            }
        }
        Ok(SortedAdjacency { seq, lo, hi })
    }

    /// `|N(v) ∩ marked|` for every vertex, read off the sorted `A_X`.
    pub fn count_neighbors_in_set(&mut self, g: &Graph, marked: &VertexSet) -> Result<Vec<usize>, MpcError> {
        Ok(self.sorted_adjacency(g, marked)?.counts())
    }

    /// A uniform heavy neighbor for every asker that has one: one sort to
    /// build `Q_H`, one search to look up the drawn index.
    pub fn random_heavy_neighbor<R: RandomSource + ?Sized>(
        &mut self,
        g: &Graph,
        heavy: &VertexSet,
        askers: &VertexSet,
        rng: &mut R,
    ) -> Result<Vec<(Vertex, Vertex)>, MpcError> {
        let q_h = self.sorted_adjacency(g, heavy)?;
        self.random_neighbor_from(&q_h, askers, rng)
    }

    /// Same as [`random_heavy_neighbor`](Self::random_heavy_neighbor) on an
    /// existing `Q_H`; charges the search only. Askers are served in
    /// ascending order, one draw each, skipping those with no marked
    /// neighbor.
    pub fn random_neighbor_from<R: RandomSource + ?Sized>(
        &mut self,
        q_h: &SortedAdjacency,
        askers: &VertexSet,
        rng: &mut R,
    ) -> Result<Vec<(Vertex, Vertex)>, MpcError> {
        let mut positions = Vec::new();
        let mut who = Vec::new();
        for v in askers.iter() {
            let c = q_h.count(v);
            if c == 0 {
                continue;
            }
            positions.push(q_h.lo[v as usize] + 1 + rng.below(c));
            who.push(v);
        }
        self.charge_even("search", 2 * q_h.len() + 2 * positions.len(), self.costs.search)?;
        Ok(who
            .into_iter()
            .zip(positions)
            .map(|(v, pos)| match q_h.seq[pos] {
                (_, Slot::Node(u)) => (v, u),
                _ => unreachable!("index arithmetic stays inside the neighbor block"),
            })
            .collect())
    }

    /// Charges a vertex-to-edge broadcast over `vertices` values and `edges`
    /// edges without materializing the annotation.
    pub fn charge_broadcast(&mut self, vertices: usize, edges: usize) -> Result<(), MpcError> {
        self.charge_even("broadcast", 2 * vertices + 4 * edges, self.costs.broadcast)
    }

    /// Annotates every edge `{u, v}` with `(values[u], values[v])`.
    pub fn broadcast_vertex_values(&mut self, g: &Graph, values: &[u64]) -> Result<Vec<(Edge, (u64, u64))>, MpcError> {
        if values.len() != g.n() {
            return Err(MpcError::InvalidInput(format!(
                "{} values for {} vertices",
                values.len(),
                g.n()
            )));
        }
        self.charge_broadcast(g.n(), g.num_edges())?;
        Ok(g
            .edges()
            .iter()
            .map(|&(u, v)| ((u, v), (values[u as usize], values[v as usize])))
            .collect())
    }

    /// Routes `G[alive]` by `phi`: machine `x` receives the alive vertices
    /// mapped to `x` and the edges with both endpoints mapped to `x`. Other
    /// edges are parked. Charges a broadcast (endpoints learn each other's
    /// machine) and a partition round.
    ///
    /// A machine whose piece exceeds capacity is flagged in
    /// [`Partition::overflowed`] and its gauge zeroed.
    pub fn partition_to_machines(
        &mut self,
        g: &Graph,
        alive: &VertexSet,
        phi: &[u32],
        m: usize,
    ) -> Result<Partition, MpcError> {
        if m > self.machines {
            return Err(MpcError::UnknownMachine {
                machine: m - 1,
                machines: self.machines,
            });
        }
        if phi.len() != g.n() || alive.universe() != g.n() {
            return Err(MpcError::InvalidInput("assignment does not cover the graph".into()));
        }
        let mut members: Vec<Vec<Vertex>> = vec![Vec::new(); m];
        let mut local = vec![0 as Vertex; g.n()];
        for v in alive.iter() {
            let x = phi[v as usize] as usize;
            if x >= m {
                return Err(MpcError::UnknownMachine { machine: x, machines: m });
            }
            local[v as usize] = members[x].len() as Vertex;
            members[x].push(v);
        }
        let mut edges: Vec<Vec<Edge>> = vec![Vec::new(); m];
        let mut alive_edges = 0;
        let mut parked = 0;
        for v in alive.iter() {
            let x = phi[v as usize];
            for &u in g.neighbors(v) {
                if u > v && alive.contains(u) {
                    alive_edges += 1;
                    if phi[u as usize] == x {
                        edges[x as usize].push((local[v as usize], local[u as usize]));
                    } else {
                        parked += 1;
                    }
                }
            }
        }
        self.charge_broadcast(alive.len(), alive_edges)?;

        let parts: Vec<Subgraph> = members
            .into_iter()
            .zip(edges)
            .map(|(vs, es)| Subgraph::from_parts(vs, es))
            .collect();
        let mut overflowed = vec![false; m];
        let mut max_words = 0;
        for s in self.stored.iter_mut() {
            *s = 0;
        }
        for (x, p) in parts.iter().enumerate() {
            let w = p.words();
            if w > self.space {
                overflowed[x] = true;
            } else {
                self.stored[x] = w;
                max_words = max_words.max(w);
            }
        }
        let flagged = overflowed.iter().filter(|&&o| o).count();
        let touched = parts.iter().filter(|p| !p.is_empty()).count();
        self.record("partition", self.costs.partition, touched, max_words, max_words, flagged);
        Ok(Partition {
            parts,
            overflowed,
            parked_edges: parked,
        })
    }

    /// Checks the ledger: round indices strictly increase, their total matches
    /// the counter, and no recorded gauge exceeds capacity.
    pub fn audit(&self) -> Result<(), MpcError> {
        let mut last = 0;
        for r in &self.ledger.records {
            if r.round <= last {
                return Err(MpcError::Audit(format!("round {} after {}", r.round, last)));
            }
            if r.max_sent > self.space || r.max_recv > self.space || r.max_stored > self.space {
                return Err(MpcError::Audit(format!("round {} exceeds {} words", r.round, self.space)));
            }
            last = r.round;
        }
        if self.ledger.total_rounds() != self.round {
            return Err(MpcError::Audit("charged rounds disagree with the counter".into()));
        }
        Ok(())
    }
}
