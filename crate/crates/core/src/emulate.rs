//! Vertex-partitioned phases.
//!
//! A local phase runs on one machine's induced subgraph. It cannot see true
//! degrees, so it estimates them from a random reference set `R` and turns
//! the estimates into heavy and friend membership through the smooth
//! threshold functions of the profile. Each machine then matches greedily
//! inside `H ∪ F`.
//!
//! All draws follow a fixed order per phase: the reference draw for every
//! alive vertex, then the heavy draw, then the friend draw (each ascending by
//! local id), then the edge shuffle.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Subgraph, Vertex, VertexSet};
use crate::matching::Matching;
use crate::rng::RandomSource;
use crate::{Profile, StreamRng};

/// `|N(v) ∩ reference| / mu_r` over the adjacency of `g`.
pub fn estimate_degree(v: Vertex, g: &Graph, reference: &VertexSet, mu_r: f64) -> f64 {
    g.neighbors(v).iter().filter(|&&u| reference.contains(u)).count() as f64 / mu_r
}

/// Outcome of one local phase, in global vertex ids. Sets are sorted.
///
/// `reference`, `heavy` and `friends` may overlap: each is drawn
/// independently of membership in the others. `survivors` is the complement
/// of their union within the input.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalPhaseResult {
    pub machine: usize,
    pub survivors: Vec<Vertex>,
    pub matched: Matching,
    pub reference: Vec<Vertex>,
    pub heavy: Vec<Vertex>,
    pub friends: Vec<Vertex>,
    /// Estimate for every input vertex, ascending by vertex.
    pub degree_estimates: Vec<(Vertex, f64)>,
}

/// A machine's piece across successive phases: the subgraph it received and
/// which of its vertices are still alive.
#[derive(Debug, Clone)]
pub struct LocalState<'a> {
    machine: usize,
    piece: &'a Subgraph,
    alive: Vec<bool>,
}

impl<'a> LocalState<'a> {
    pub fn new(machine: usize, piece: &'a Subgraph) -> Self {
        Self {
            machine,
            piece,
            alive: vec![true; piece.len()],
        }
    }

    /// Drops every vertex of the piece.
    pub fn clear(&mut self) {
        self.alive.fill(false);
    }

    pub fn alive_count(&self) -> usize {
        self.alive.iter().filter(|&&a| a).count()
    }

    /// Alive vertices in global ids, ascending.
    pub fn survivors(&self) -> Vec<Vertex> {
        self.alive_local().map(|l| self.piece.global(l)).collect()
    }

    fn alive_local(&self) -> impl Iterator<Item = Vertex> + '_ {
        self.alive
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(l, _)| l as Vertex)
    }

    /// Runs one phase on the alive part at threshold `delta_star` and removes
    /// `R ∪ H ∪ F`.
    pub fn phase<R: RandomSource + ?Sized>(&mut self, delta_star: f64, profile: &Profile, rng: &mut R) -> LocalPhaseResult {
        let g = self.piece.local();
        let k = self.piece.len();
        let order: Vec<Vertex> = self.alive_local().collect();
        let mu_r = profile.mu_r();

        let mut in_r = vec![false; k];
        for &v in &order {
            in_r[v as usize] = rng.bernoulli(mu_r);
        }
        let mut estimates = Vec::with_capacity(order.len());
        let mut in_h = vec![false; k];
        for &v in &order {
            let hits = g.neighbors(v).iter().filter(|&&u| in_r[u as usize]).count();
            estimates.push(hits as f64 / mu_r);
        }
        for (&v, &est) in order.iter().zip(&estimates) {
            in_h[v as usize] = rng.bernoulli(profile.mu_h(est / delta_star));
        }
        let mut in_f = vec![false; k];
        for &v in &order {
            let heavy_nbrs = g
                .neighbors(v)
                .iter()
                .filter(|&&u| self.alive[u as usize] && in_h[u as usize])
                .count();
            in_f[v as usize] = rng.bernoulli(profile.mu_f(heavy_nbrs as f64 / delta_star));
        }

        let chosen = |v: Vertex| in_h[v as usize] || in_f[v as usize];
        let mut edges = Vec::new();
        for &v in &order {
            if !chosen(v) {
                continue;
            }
            for &u in g.neighbors(v) {
                if u > v && self.alive[u as usize] && chosen(u) {
                    edges.push((v, u));
                }
            }
        }
        for i in (1..edges.len()).rev() {
            let j = rng.below(i + 1);
            edges.swap(i, j);
        }
        let mut used = vec![false; k];
        let mut matched = Matching::new();
        for (u, v) in edges {
            if !used[u as usize] && !used[v as usize] {
                used[u as usize] = true;
                used[v as usize] = true;
                matched.push(self.piece.global(u), self.piece.global(v));
            }
        }

        let global = |flags: &[bool]| -> Vec<Vertex> {
            order
                .iter()
                .filter(|&&v| flags[v as usize])
                .map(|&v| self.piece.global(v))
                .collect()
        };
        let reference = global(&in_r);
        let heavy = global(&in_h);
        let friends = global(&in_f);
        let degree_estimates = order
            .iter()
            .zip(estimates)
            .map(|(&v, e)| (self.piece.global(v), e))
            .collect();
        for &v in &order {
            if in_r[v as usize] || in_h[v as usize] || in_f[v as usize] {
                self.alive[v as usize] = false;
            }
        }
        LocalPhaseResult {
            machine: self.machine,
            survivors: self.survivors(),
            matched,
            reference,
            heavy,
            friends,
            degree_estimates,
        }
    }
}

/// One local phase on machine `i`'s piece at threshold `delta_star`.
pub fn local_phase<R: RandomSource + ?Sized>(
    i: usize,
    piece: &Subgraph,
    delta_star: f64,
    profile: &Profile,
    rng: &mut R,
) -> Result<LocalPhaseResult> {
    if delta_star.is_nan() || delta_star <= 0.0 {
        return Err(Error::Contract(format!("local threshold must be positive, got {delta_star}")));
    }
    Ok(LocalState::new(i, piece).phase(delta_star, profile, rng))
}

/// Roles a vertex can take in a phase configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Role {
    Reference,
    Heavy,
    Friend,
    Survivor,
}

/// Removed sets of one machine in one phase.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct MachineSets {
    pub reference: Vec<Vertex>,
    pub heavy: Vec<Vertex>,
    pub friends: Vec<Vertex>,
    pub survivors: Vec<Vertex>,
}

/// Per-machine `(R_i, H_i, F_i)` of one emulated phase. Diagnostic only.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PhaseConfiguration {
    pub machines: Vec<MachineSets>,
}

impl PhaseConfiguration {
    fn contains(list: &[Vertex], v: Vertex) -> bool {
        list.binary_search(&v).is_ok()
    }

    /// Machine and role of `v`. A vertex drawn into several sets reports the
    /// first of reference, heavy, friend.
    pub fn role_of(&self, v: Vertex) -> Option<(usize, Role)> {
        self.machines.iter().enumerate().find_map(|(i, s)| {
            if Self::contains(&s.reference, v) {
                Some((i, Role::Reference))
            } else if Self::contains(&s.heavy, v) {
                Some((i, Role::Heavy))
            } else if Self::contains(&s.friends, v) {
                Some((i, Role::Friend))
            } else if Self::contains(&s.survivors, v) {
                Some((i, Role::Survivor))
            } else {
                None
            }
        })
    }

    pub fn removed(&self) -> usize {
        self.machines
            .iter()
            .map(|s| {
                let mut all: Vec<Vertex> = s.reference.iter().chain(&s.heavy).chain(&s.friends).copied().collect();
                all.sort_unstable();
                all.dedup();
                all.len()
            })
            .sum()
    }
}

/// Uniform independent machine assignment.
#[derive(Debug, Clone)]
pub struct AssignmentSampler {
    machines: usize,
    rng: StreamRng,
}

impl AssignmentSampler {
    /// A sampler over `machines` machines with its own stream split from
    /// `rng`.
    pub fn uniform<R: RandomSource + ?Sized>(machines: usize, rng: &mut R) -> Self {
        assert!(machines >= 1, "at least one machine");
        Self {
            machines,
            rng: rng.split(),
        }
    }

    pub fn machines(&self) -> usize {
        self.machines
    }

    /// Machine for every vertex of `alive` (indexed by vertex id); vertices
    /// outside `alive` get `u32::MAX`.
    pub fn assign(&mut self, alive: &VertexSet) -> Vec<u32> {
        let mut phi = vec![u32::MAX; alive.universe()];
        for v in alive.iter() {
            phi[v as usize] = self.rng.below(self.machines) as u32;
        }
        phi
    }
}

/// Machine of every alive vertex, sampled at the start of a block and after
/// each of its phases. Used for uniformity diagnostics.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AssignmentTrace {
    pub machines: usize,
    /// `(vertex, machine)` sorted by vertex, one list per snapshot.
    pub snapshots: Vec<Vec<(Vertex, u32)>>,
}

impl AssignmentTrace {
    pub(crate) fn snapshot(parts: &[Vec<Vertex>]) -> Vec<(Vertex, u32)> {
        let mut snap: Vec<(Vertex, u32)> = parts
            .iter()
            .enumerate()
            .flat_map(|(i, vs)| vs.iter().map(move |&v| (v, i as u32)))
            .collect();
        snap.sort_unstable();
        snap
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmulateOutcome {
    pub survivors: VertexSet,
    pub matching: Matching,
    pub configuration: PhaseConfiguration,
    pub loads: Vec<usize>,
    /// Largest degree in `G[alive]` at entry.
    pub max_degree_in: usize,
    /// Whether `max_degree_in <= 3/2 delta`. A failure is reported, not fatal.
    pub precondition_ok: bool,
    pub trace: AssignmentTrace,
}

/// Partitions `alive` with `sampler` and runs one local phase per machine at
/// threshold `delta / m`.
///
/// Machine streams are split from `rng` in machine order before any phase
/// runs.
pub fn emulate_phase<R: RandomSource + ?Sized>(
    delta: f64,
    g_star: &Graph,
    alive: &VertexSet,
    sampler: &mut AssignmentSampler,
    profile: &Profile,
    rng: &mut R,
) -> Result<EmulateOutcome> {
    let m = sampler.machines();
    let max_degree_in = g_star.degrees_within(alive).into_iter().max().unwrap_or(0);
    let phi = sampler.assign(alive);
    let mut parts = vec![Vec::new(); m];
    for v in alive.iter() {
        parts[phi[v as usize] as usize].push(v);
    }
    let mut streams: Vec<StreamRng> = (0..m).map(|_| rng.split()).collect();
    let mut survivors = VertexSet::new(g_star.n());
    let mut matching = Matching::new();
    let mut configuration = PhaseConfiguration::default();
    let mut after = Vec::with_capacity(m);
    for (i, vs) in parts.iter().enumerate() {
        let piece = g_star.local_subgraph(vs);
        let res = local_phase(i, &piece, delta / m as f64, profile, &mut streams[i])?;
        for &v in &res.survivors {
            survivors.insert(v);
        }
        matching.extend(&res.matched);
        after.push(res.survivors.clone());
        configuration.machines.push(MachineSets {
            reference: res.reference,
            heavy: res.heavy,
            friends: res.friends,
            survivors: res.survivors,
        });
    }
    Ok(EmulateOutcome {
        survivors,
        matching,
        configuration,
        loads: parts.iter().map(Vec::len).collect(),
        max_degree_in,
        precondition_ok: max_degree_in as f64 <= 1.5 * delta,
        trace: AssignmentTrace {
            machines: m,
            snapshots: vec![AssignmentTrace::snapshot(&parts), AssignmentTrace::snapshot(&after)],
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::rng::ScriptedTape;
    use crate::verify::verify_matching;

    fn desk(n: usize) -> Profile {
        Profile::desk(n as f64)
    }

    #[test]
    fn estimate_degree_examples() {
        let star = build_graph(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let r = VertexSet::full(4);
        assert!((estimate_degree(0, &star, &r, 0.1) - 30.0).abs() < 1e-9);
        for v in 0..4 {
            assert_eq!(estimate_degree(v, &star, &VertexSet::new(4), 0.1), 0.0);
        }
        let k11 = build_graph(11, (0..11).flat_map(|u| (u + 1..11).map(move |v| (u, v)))).unwrap();
        for v in 0..11 {
            assert_eq!(estimate_degree(v, &k11, &VertexSet::full(11), 0.5), 20.0);
        }
    }

    #[test]
    fn local_phase_empty() {
        let res = local_phase(0, &Subgraph::empty(), 5.0, &desk(10), &mut crate::stream(1)).unwrap();
        assert!(res.survivors.is_empty() && res.matched.is_empty() && res.reference.is_empty());
        assert!(local_phase(0, &Subgraph::empty(), 0.0, &desk(10), &mut crate::stream(1)).is_err());
    }

    #[test]
    fn local_phase_forced_edge() {
        let g = build_graph(2, [(0, 1)]).unwrap();
        let piece = g.local_subgraph(&[0, 1]);
        // R draws miss, H draws hit, F draws miss; one edge needs no shuffle draw
        let mut tape = ScriptedTape::new([0.99, 0.99, 0.0, 0.0, 0.99, 0.99]);
        let res = local_phase(0, &piece, 4.0, &desk(2), &mut tape).unwrap();
        assert_eq!(res.matched.edges(), &[(0, 1)]);
        assert_eq!(res.heavy, vec![0, 1]);
        assert!(res.survivors.is_empty());
        assert_eq!(tape.remaining(), 0);
    }

    #[test]
    fn single_vertex_survival_closed_form() {
        let p = desk(1000);
        let g = Graph::empty(1);
        let piece = g.local_subgraph(&[0]);
        // No neighbors: estimate 0, no heavy neighbors, so mu_F(0) = 0.
        let exact = (1.0 - p.mu_r()) * (1.0 - p.mu_h(0.0)) * (1.0 - p.mu_f(0.0));
        let trials = 200_000;
        let mut rng = crate::stream(77);
        let mut survived = 0;
        for _ in 0..trials {
            let res = local_phase(0, &piece, 10.0, &p, &mut rng).unwrap();
            survived += res.survivors.len();
        }
        let freq = survived as f64 / trials as f64;
        let sd = (exact * (1.0 - exact) / trials as f64).sqrt();
        assert!((freq - exact).abs() <= 3.0 * sd, "{freq} vs {exact}");
    }

    #[test]
    fn local_phase_partition_and_maximality() {
        let g = crate::graph::gen_random_regular(200, 12, 4).unwrap();
        let piece = g.local_subgraph(&g.vertices().collect::<Vec<_>>());
        let p = desk(200);
        for seed in 0..30 {
            let res = local_phase(0, &piece, 12.0, &p, &mut crate::stream(seed)).unwrap();
            let mut removed: Vec<Vertex> = res.reference.iter().chain(&res.heavy).chain(&res.friends).copied().collect();
            removed.sort_unstable();
            removed.dedup();
            assert!(removed.iter().all(|v| res.survivors.binary_search(v).is_err()));
            assert_eq!(removed.len() + res.survivors.len(), 200);
            verify_matching(&g, &res.matched).unwrap();
            let hf: VertexSet = VertexSet::from_vertices(200, res.heavy.iter().chain(&res.friends).copied()).unwrap();
            let covered = VertexSet::from_vertices(200, res.matched.vertices()).unwrap();
            assert!(covered.is_subset(&hf));
            for &(u, v) in g.edges() {
                if hf.contains(u) && hf.contains(v) {
                    assert!(covered.contains(u) || covered.contains(v), "({u},{v}) could extend the matching");
                }
            }
        }
    }

    #[test]
    fn emulate_single_machine_matches_local_phase() {
        let g = crate::graph::gen_erdos_renyi(150, 0.08, 2).unwrap();
        let alive = VertexSet::full(150);
        let p = desk(150);
        let mut rng = crate::stream(9);
        let mut sampler = AssignmentSampler::uniform(1, &mut rng);
        let mut replay = rng.clone();
        let out = emulate_phase(20.0, &g, &alive, &mut sampler, &p, &mut rng).unwrap();
        let mut machine_rng = replay.split();
        let piece = g.local_subgraph(&alive.iter().collect::<Vec<_>>());
        let direct = local_phase(0, &piece, 20.0, &p, &mut machine_rng).unwrap();
        assert_eq!(out.matching, direct.matched);
        assert_eq!(out.survivors.iter().collect::<Vec<_>>(), direct.survivors);
    }

    #[test]
    fn emulate_empty_alive() {
        let g = build_graph(3, [(0, 1)]).unwrap();
        let mut rng = crate::stream(1);
        let mut sampler = AssignmentSampler::uniform(3, &mut rng);
        let out = emulate_phase(2.0, &g, &VertexSet::new(3), &mut sampler, &desk(3), &mut rng).unwrap();
        assert!(out.survivors.is_empty() && out.matching.is_empty());
        assert_eq!(out.configuration.removed(), 0);
    }

    #[test]
    fn emulate_two_edges_on_two_machines() {
        let g = build_graph(4, [(0, 1), (2, 3)]).unwrap();
        let p = desk(4);
        let mut rng = crate::stream(5);
        let mut sampler = AssignmentSampler::uniform(2, &mut rng);
        for _ in 0..200 {
            let out = emulate_phase(2.0, &g, &VertexSet::full(4), &mut sampler, &p, &mut rng).unwrap();
            verify_matching(&g, &out.matching).unwrap();
            for (i, s) in out.configuration.machines.iter().enumerate() {
                for &v in &s.survivors {
                    assert_eq!(out.configuration.role_of(v).unwrap().0, i);
                }
            }
        }
    }

    #[test]
    fn emulate_reports_degree_precondition() {
        let star = build_graph(5, (1..5).map(|v| (0, v))).unwrap();
        let mut rng = crate::stream(1);
        let mut sampler = AssignmentSampler::uniform(1, &mut rng);
        let out = emulate_phase(2.0, &star, &VertexSet::full(5), &mut sampler, &desk(5), &mut rng).unwrap();
        assert!(!out.precondition_ok);
        assert_eq!(out.max_degree_in, 4);
    }

    #[test]
    fn role_precedence() {
        let cfg = PhaseConfiguration {
            machines: vec![MachineSets {
                reference: vec![1],
                heavy: vec![1, 2],
                friends: vec![2, 3],
                survivors: vec![4],
            }],
        };
        assert_eq!(cfg.role_of(1), Some((0, Role::Reference)));
        assert_eq!(cfg.role_of(2), Some((0, Role::Heavy)));
        assert_eq!(cfg.role_of(3), Some((0, Role::Friend)));
        assert_eq!(cfg.role_of(4), Some((0, Role::Survivor)));
        assert_eq!(cfg.role_of(0), None);
        assert_eq!(cfg.removed(), 3);
    }
}
