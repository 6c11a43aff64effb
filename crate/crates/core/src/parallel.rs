//! Round-compressed matching on the simulated cluster.
//!
//! While the degree bound `delta` is large, every iteration ("block")
//! scatters the alive vertices uniformly over `m` machines and lets each
//! machine run `tau` local phases on its induced subgraph at thresholds
//! `delta / m, delta / (2m), ...` without communicating. A block costs a
//! constant number of rounds but advances `delta` by a factor `2^tau`. When
//! the loop guard fails, the remaining graph is finished by the sequential
//! peeling matcher simulated with global primitives, a constant number of
//! rounds per phase.

use serde::{Deserialize, Serialize};

use crate::emulate::{AssignmentSampler, AssignmentTrace, LocalState};
use crate::error::{Error, Result};
use crate::global::{self, GlobalRun, PhaseRecord};
use crate::graph::{Graph, Vertex, VertexSet};
use crate::matching::Matching;
use crate::mpc::{Cluster, RoundCosts, RoundLedger};
use crate::params::ParamProfile;
use crate::rng::RandomSource;
use crate::{Profile, StreamRng};

/// `max(1, floor(sqrt(n * delta / s)))`.
pub fn num_machines(n: usize, delta: f64, s: usize) -> usize {
    let m = (n as f64 * delta / s as f64).sqrt().floor();
    if m.is_finite() && m >= 1.0 {
        m as usize
    } else {
        1
    }
}

/// Thresholds of the `tau` local phases of a block: `delta / (2^(j-1) m)`.
pub fn local_thresholds(delta: f64, m: usize, tau: usize) -> Vec<f64> {
    (0..tau).map(|j| delta / (2f64.powi(j as i32) * m as f64)).collect()
}

/// Words per machine: room for a piece at the security limit of
/// `overflow_factor * s` edges plus its vertex list.
pub fn machine_capacity(s: usize, profile: &Profile) -> usize {
    ((2.0 * profile.overflow_factor + 2.0) * s as f64).ceil() as usize
}

/// Space actually used per machine: `s` capped at `n`.
pub fn effective_space(n: usize, s: usize) -> usize {
    s.min(n).max(1)
}

/// A cluster large enough for every primitive a run on `g` issues: as many
/// machines as the first block uses, and enough that the largest global
/// primitive fits when spread evenly.
pub fn sized_cluster(g: &Graph, s: usize, profile: &Profile) -> Result<Cluster> {
    sized_cluster_with(g, s, profile, RoundCosts::default())
}

pub fn sized_cluster_with(g: &Graph, s: usize, profile: &Profile, costs: RoundCosts) -> Result<Cluster> {
    let n = g.n();
    let s = effective_space(n, s);
    let capacity = machine_capacity(s, profile);
    let peak = 6 * (g.num_edges() + n);
    let machines = num_machines(n, n as f64, s).max(peak.div_ceil(capacity)).max(1);
    Ok(Cluster::with_costs(machines, capacity, costs)?)
}

/// Rounds charged per simulated peeling phase.
pub fn global_phase_rounds(costs: &RoundCosts) -> u64 {
    3 * costs.sort + costs.search + 2 * costs.broadcast
}

/// Rounds of simulating the peeling matcher directly from `delta = n`:
/// `floor(log2 n) + 1` phases.
pub fn direct_global_rounds(n: usize, costs: &RoundCosts) -> u64 {
    global::phase_count(n as f64) as u64 * global_phase_rounds(costs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompressionBlockReport {
    pub delta_in: f64,
    pub m: usize,
    pub tau: usize,
    /// Machines emptied by the security check.
    pub machines_zeroed: usize,
    pub alive_in: usize,
    pub survivors: usize,
    pub matched_added: usize,
    pub rounds_charged: u64,
    pub max_machine_vertices: usize,
    pub max_machine_edges: usize,
    pub parked_edges: usize,
    pub min_local_threshold: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockOutcome {
    pub survivors: VertexSet,
    pub matching: Matching,
    pub report: CompressionBlockReport,
    pub trace: Option<AssignmentTrace>,
}

/// One block with an explicit machine count `m` and phase count `tau`.
///
/// A machine whose piece has more than `overflow_factor * s` edges, or does
/// not fit the cluster's capacity, loses all its vertices. Charges the
/// partition (two rounds) and the collection of survivors (one round); the
/// local phases are free.
#[allow(clippy::too_many_arguments)]
pub fn compression_block<R: RandomSource + ?Sized>(
    cluster: &mut Cluster,
    g: &Graph,
    alive: &VertexSet,
    delta: f64,
    m: usize,
    tau: usize,
    s: usize,
    profile: &Profile,
    rng: &mut R,
    trace: bool,
) -> Result<BlockOutcome> {
    if m == 0 || tau == 0 {
        return Err(Error::Contract(format!("block needs m >= 1 and tau >= 1, got {m} and {tau}")));
    }
    let start = cluster.rounds();
    let mut sampler = AssignmentSampler::uniform(m, rng);
    let phi = sampler.assign(alive);
    let partition = cluster.partition_to_machines(g, alive, &phi, m)?;
    let mut streams: Vec<StreamRng> = (0..m).map(|_| rng.split()).collect();

    let edge_limit = profile.overflow_factor * s as f64;
    let thresholds = local_thresholds(delta, m, tau);
    let mut states: Vec<LocalState> = Vec::with_capacity(m);
    let mut zeroed = 0;
    for (i, piece) in partition.parts.iter().enumerate() {
        let mut st = LocalState::new(i, piece);
        if partition.overflowed[i] || piece.num_edges() as f64 > edge_limit {
            zeroed += 1;
            st.clear();
        }
        states.push(st);
    }

    let mut snapshots = Vec::new();
    if trace {
        let parts: Vec<Vec<Vertex>> = states.iter().map(LocalState::survivors).collect();
        snapshots.push(AssignmentTrace::snapshot(&parts));
    }
    let mut matching = Matching::new();
    for &t in &thresholds {
        for (st, r) in states.iter_mut().zip(streams.iter_mut()) {
            if st.alive_count() == 0 {
                continue;
            }
            let res = st.phase(t, profile, r);
            matching.extend(&res.matched);
        }
        if trace {
            let parts: Vec<Vec<Vertex>> = states.iter().map(LocalState::survivors).collect();
            snapshots.push(AssignmentTrace::snapshot(&parts));
        }
    }

    let mut survivors = VertexSet::new(g.n());
    for st in &states {
        for v in st.survivors() {
            survivors.insert(v);
        }
    }
    let alive_edges = partition.parked_edges + partition.parts.iter().map(|p| p.num_edges()).sum::<usize>();
    cluster.charge_broadcast(alive.len(), alive_edges)?;

    let report = CompressionBlockReport {
        delta_in: delta,
        m,
        tau,
        machines_zeroed: zeroed,
        alive_in: alive.len(),
        survivors: survivors.len(),
        matched_added: matching.len(),
        rounds_charged: cluster.rounds() - start,
        max_machine_vertices: partition.parts.iter().map(|p| p.len()).max().unwrap_or(0),
        max_machine_edges: partition.parts.iter().map(|p| p.num_edges()).max().unwrap_or(0),
        parked_edges: partition.parked_edges,
        min_local_threshold: thresholds.last().copied().unwrap_or(delta),
    };
    Ok(BlockOutcome {
        survivors,
        matching,
        report,
        trace: trace.then_some(AssignmentTrace { machines: m, snapshots }),
    })
}

/// The peeling matcher on `G[alive]` from `delta_tilde`, with every step
/// issued as a cluster primitive. Consumes randomness exactly as
/// [`global::global_alg_on`] does, so both return the same matching for the
/// same stream.
pub fn simulate_global_alg<R: RandomSource + ?Sized>(
    cluster: &mut Cluster,
    g: &Graph,
    alive: &VertexSet,
    delta_tilde: f64,
    rng: &mut R,
) -> Result<GlobalRun> {
    let n = g.n();
    let everyone = VertexSet::full(n);
    let mut alive = alive.clone();
    let mut delta = delta_tilde;
    let mut matching = Matching::new();
    let mut phases = Vec::new();
    while delta >= 1.0 {
        let alive_before = alive.len();
        let sub = g.induced_subgraph(&alive)?;
        let degrees = cluster.count_neighbors_in_set(&sub, &everyone)?;
        global::check_degree_bound(&degrees, &alive, delta)?;
        let heavy = global::heavy_set(&alive, &degrees, delta);
        let q_h = cluster.sorted_adjacency(&sub, &heavy)?;
        let friends = global::select_friends(&alive, &q_h.counts(), delta, rng);
        let picks = cluster.random_neighbor_from(&q_h, &friends, rng)?;
        let red = global::color_vertices(n, &heavy, &friends, rng);
        cluster.charge_broadcast(alive.len(), sub.num_edges())?;
        let star = global::star_edges(&picks, &red);
        let sorted: Vec<(Vertex, Vertex)> = cluster.dist_sort(star, 2)?.into_iter().map(|(_, e)| e).collect();
        let matched = global::first_per_center(&sorted);
        cluster.charge_broadcast(alive.len(), sub.num_edges())?;

        let mut removed = heavy.clone();
        removed.union_with(&friends);
        alive.difference_with(&removed);
        matching.extend(&matched);
        phases.push(PhaseRecord {
            delta,
            alive_before,
            heavy: heavy.len(),
            friends: friends.len(),
            removed: removed.len(),
            matched: matched.len(),
            max_degree_after: g.degrees_within(&alive).into_iter().max().unwrap_or(0),
        });
        delta /= 2.0;
    }
    Ok(GlobalRun {
        matching,
        phases,
        survivors: alive,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub matching: Matching,
    /// Records charged by this run.
    pub ledger: RoundLedger,
    pub blocks: Vec<CompressionBlockReport>,
    pub tail_phases: Vec<PhaseRecord>,
    /// Survivors removed before the tail for degree at least `2 delta`.
    pub removed_high_degree: usize,
    /// Degree bound handed to the tail is twice this value.
    pub final_delta: f64,
    pub traces: Vec<AssignmentTrace>,
}

impl RunResult {
    pub fn rounds(&self) -> u64 {
        self.ledger.total_rounds()
    }

    pub fn total_tau(&self) -> usize {
        self.blocks.iter().map(|b| b.tau).sum()
    }

    pub fn machines_zeroed(&self) -> usize {
        self.blocks.iter().map(|b| b.machines_zeroed).sum()
    }

    pub fn report(&self, profile: &Profile, master_seed: u64) -> RunReport {
        RunReport {
            master_seed,
            profile: *profile,
            matching: self.matching.clone().sorted(),
            blocks: self.blocks.clone(),
            tail_phases: self.tail_phases.clone(),
            removed_high_degree: self.removed_high_degree,
            ledger: self.ledger.summary(),
        }
    }
}

/// JSON form of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub master_seed: u64,
    pub profile: ParamProfile<f64>,
    pub matching: Matching,
    pub blocks: Vec<CompressionBlockReport>,
    pub tail_phases: Vec<PhaseRecord>,
    pub removed_high_degree: usize,
    pub ledger: crate::mpc::LedgerSummary,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RunOptions {
    /// Keep per-block assignment traces.
    pub trace: bool,
}

/// Round-compressed matching of `g` with `s` words per machine.
pub fn parallel_alg<R: RandomSource + ?Sized>(
    g: &Graph,
    s: usize,
    profile: &Profile,
    rng: &mut R,
    cluster: &mut Cluster,
) -> Result<RunResult> {
    parallel_alg_with(g, s, profile, rng, cluster, RunOptions::default())
}

pub fn parallel_alg_with<R: RandomSource + ?Sized>(
    g: &Graph,
    s: usize,
    profile: &Profile,
    rng: &mut R,
    cluster: &mut Cluster,
    opts: RunOptions,
) -> Result<RunResult> {
    if s == 0 {
        return Err(Error::Contract("space per machine must be positive".into()));
    }
    let n = g.n();
    let s_eff = effective_space(n, s);
    let first_record = cluster.ledger().len();
    let mut alive = VertexSet::full(n);
    let mut delta = n as f64;
    let mut matching = Matching::new();
    let mut blocks = Vec::new();
    let mut traces = Vec::new();

    while n > 0 && delta >= 1.0 && profile.loop_guard(delta, s_eff as f64) {
        let m = num_machines(n, delta, s_eff);
        let tau = profile.num_phases(delta, m);
        let out = compression_block(cluster, g, &alive, delta, m, tau, s_eff, profile, rng, opts.trace)?;
        alive = out.survivors;
        matching.extend(&out.matching);
        blocks.push(out.report);
        traces.extend(out.trace);
        delta /= 2f64.powi(tau as i32);
    }

    let sub = g.induced_subgraph(&alive)?;
    let degrees = cluster.count_neighbors_in_set(&sub, &VertexSet::full(n))?;
    let mut removed_high_degree = 0;
    for v in alive.clone().iter() {
        if degrees[v as usize] as f64 >= 2.0 * delta {
            alive.remove(v);
            removed_high_degree += 1;
        }
    }
    let tail = simulate_global_alg(cluster, g, &alive, 2.0 * delta, rng)?;
    matching.extend(&tail.matching);
    Ok(RunResult {
        matching,
        ledger: cluster.ledger().since(first_record),
        blocks,
        tail_phases: tail.phases,
        removed_high_degree,
        final_delta: delta,
        traces,
    })
}

/// Repetitions used by [`repeat_for_two_plus_eps`]: `ceil(c * log2(1/eps))`.
pub fn repetitions(eps: f64, c: f64) -> usize {
    (c * (1.0 / eps).log2()).ceil().max(1.0) as usize
}

pub const DEFAULT_REPEAT_FACTOR: f64 = 4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatedRun {
    pub matching: Matching,
    pub repetitions: usize,
    pub runs: Vec<RunResult>,
}

impl RepeatedRun {
    pub fn rounds(&self) -> u64 {
        self.runs.iter().map(RunResult::rounds).sum()
    }
}

/// Runs [`parallel_alg`] repeatedly, removing matched vertices in between,
/// and returns the union of the matchings.
pub fn repeat_for_two_plus_eps<R: RandomSource + ?Sized>(
    g: &Graph,
    s: usize,
    eps: f64,
    profile: &Profile,
    rng: &mut R,
) -> Result<RepeatedRun> {
    repeat_for_two_plus_eps_with(g, s, eps, DEFAULT_REPEAT_FACTOR, profile, rng)
}

pub fn repeat_for_two_plus_eps_with<R: RandomSource + ?Sized>(
    g: &Graph,
    s: usize,
    eps: f64,
    c: f64,
    profile: &Profile,
    rng: &mut R,
) -> Result<RepeatedRun> {
    if !(eps > 0.0 && eps <= 0.5) {
        return Err(Error::Contract(format!("eps must lie in (0, 1/2], got {eps}")));
    }
    if !(c > 0.0) {
        return Err(Error::Contract(format!("repetition factor must be positive, got {c}")));
    }
    let reps = repetitions(eps, c);
    let mut alive = VertexSet::full(g.n());
    let mut matching = Matching::new();
    let mut runs = Vec::with_capacity(reps);
    for _ in 0..reps {
        let sub = g.induced_subgraph(&alive)?;
        let mut cluster = sized_cluster(&sub, s, profile)?;
        let run = parallel_alg(&sub, s, profile, rng, &mut cluster)?;
        for v in run.matching.vertices() {
            alive.remove(v);
        }
        matching.extend(&run.matching);
        runs.push(run);
    }
    Ok(RepeatedRun {
        matching,
        repetitions: reps,
        runs,
    })
}
