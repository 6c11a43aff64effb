//! Sequential peeling matcher.
//!
//! Each phase at threshold `delta` removes every vertex of degree at least
//! `delta / 2` (the heavy set `H`) together with a random set of friends `F`,
//! and matches inside `H ∪ F` with a red/blue star construction. The degree
//! bound halves every phase, so `floor(log2 delta_tilde) + 1` phases empty the
//! graph.
//!
//! Random draws happen in a fixed order so that the MPC simulation in
//! [`parallel`](crate::parallel) replays the exact same execution:
//!
//! 1. one friend draw per alive vertex, ascending;
//! 2. one heavy-neighbor pick per friend with a heavy neighbor, ascending;
//! 3. one color per vertex of `H ∪ F`, ascending.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Vertex, VertexSet};
use crate::matching::Matching;
use crate::rng::RandomSource;

#[derive(Debug, Clone, PartialEq)]
pub struct PhaseOutcome {
    pub delta: f64,
    pub heavy: VertexSet,
    pub friends: VertexSet,
    pub matched: Matching,
}

/// Size summary of one phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    pub delta: f64,
    pub alive_before: usize,
    pub heavy: usize,
    pub friends: usize,
    /// `|H ∪ F|`, the number of vertices removed.
    pub removed: usize,
    pub matched: usize,
    /// Maximum degree in the graph induced by the vertices left afterwards.
    pub max_degree_after: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GlobalRun {
    pub matching: Matching,
    pub phases: Vec<PhaseRecord>,
    pub survivors: VertexSet,
}

/// `|N(v) ∩ marked|` for every vertex.
pub fn neighbor_counts(g: &Graph, marked: &VertexSet) -> Vec<usize> {
    g.vertices()
        .map(|v| g.neighbors(v).iter().filter(|&&u| marked.contains(u)).count())
        .collect()
}

/// Star matching between heavy vertices and friends.
///
/// Every friend picks a uniform heavy neighbor, every vertex of `H ∪ F` is
/// colored red or blue, and each blue heavy vertex picked by at least one red
/// friend is matched to the smallest such friend. Friends without a heavy
/// neighbor pick nothing.
pub fn match_heavy<R: RandomSource + ?Sized>(
    g: &Graph,
    heavy: &VertexSet,
    friends: &VertexSet,
    rng: &mut R,
) -> Matching {
    let mut picks = Vec::new();
    let mut scratch = Vec::new();
    for v in friends.iter() {
        scratch.clear();
        scratch.extend(g.neighbors(v).iter().copied().filter(|&u| heavy.contains(u)));
        if scratch.is_empty() {
            continue;
        }
        picks.push((v, scratch[rng.below(scratch.len())]));
    }
    let red = color_vertices(g.n(), heavy, friends, rng);
    let mut star = star_edges(&picks, &red);
    star.sort_unstable();
    first_per_center(&star)
}

/// One color draw per vertex of `H ∪ F`, ascending; `true` means red.
pub(crate) fn color_vertices<R: RandomSource + ?Sized>(
    universe: usize,
    heavy: &VertexSet,
    friends: &VertexSet,
    rng: &mut R,
) -> Vec<bool> {
    let mut red = vec![false; universe];
    let mut union = heavy.clone();
    union.union_with(friends);
    for v in union.iter() {
        red[v as usize] = rng.bernoulli(0.5);
    }
    red
}

/// `E*` as `(center, partner)` pairs: red friend `v`, blue heavy pick `v*`.
pub(crate) fn star_edges(picks: &[(Vertex, Vertex)], red: &[bool]) -> Vec<(Vertex, Vertex)> {
    picks
        .iter()
        .filter(|&&(v, center)| red[v as usize] && !red[center as usize])
        .map(|&(v, center)| (center, v))
        .collect()
}

/// From `(center, partner)` pairs sorted ascending, keep the first per center.
pub(crate) fn first_per_center(sorted: &[(Vertex, Vertex)]) -> Matching {
    let mut m = Matching::new();
    let mut last = None;
    for &(center, partner) in sorted {
        if last != Some(center) {
            m.push(center, partner);
            last = Some(center);
        }
    }
    m
}

/// One friend draw per alive vertex with probability `count / (4 delta)`.
pub(crate) fn select_friends<R: RandomSource + ?Sized>(
    alive: &VertexSet,
    heavy_counts: &[usize],
    delta: f64,
    rng: &mut R,
) -> VertexSet {
    let mut friends = VertexSet::new(alive.universe());
    for v in alive.iter() {
        let p = heavy_counts[v as usize] as f64 / (4.0 * delta);
        if rng.bernoulli(p) {
            friends.insert(v);
        }
    }
    friends
}

pub(crate) fn heavy_set(alive: &VertexSet, degrees: &[usize], delta: f64) -> VertexSet {
    let mut heavy = VertexSet::new(alive.universe());
    for v in alive.iter() {
        if degrees[v as usize] as f64 >= delta / 2.0 {
            heavy.insert(v);
        }
    }
    heavy
}

pub(crate) fn check_degree_bound(degrees: &[usize], alive: &VertexSet, delta: f64) -> Result<()> {
    if let Some(v) = alive.iter().find(|&v| degrees[v as usize] as f64 > delta) {
        return Err(Error::Contract(format!(
            "vertex {v} has degree {} above threshold {delta}",
            degrees[v as usize]
        )));
    }
    Ok(())
}

/// One phase on `G[alive]` at threshold `delta`.
///
/// Fails when some alive vertex has degree above `delta`.
pub fn global_phase<R: RandomSource + ?Sized>(
    g: &Graph,
    alive: &VertexSet,
    delta: f64,
    rng: &mut R,
) -> Result<PhaseOutcome> {
    let degrees = g.degrees_within(alive);
    check_degree_bound(&degrees, alive, delta)?;
    let heavy = heavy_set(alive, &degrees, delta);
    let counts = neighbor_counts(g, &heavy);
    let friends = select_friends(alive, &counts, delta, rng);
    let matched = match_heavy(g, &heavy, &friends, rng);
    Ok(PhaseOutcome {
        delta,
        heavy,
        friends,
        matched,
    })
}

/// Runs phases at `delta_tilde, delta_tilde / 2, ...` while the threshold is
/// at least 1.
pub fn global_alg<R: RandomSource + ?Sized>(g: &Graph, delta_tilde: f64, rng: &mut R) -> Result<GlobalRun> {
    global_alg_on(g, &VertexSet::full(g.n()), delta_tilde, rng)
}

/// [`global_alg`] restricted to `G[alive]`.
pub fn global_alg_on<R: RandomSource + ?Sized>(
    g: &Graph,
    alive: &VertexSet,
    delta_tilde: f64,
    rng: &mut R,
) -> Result<GlobalRun> {
    let mut alive = alive.clone();
    let mut delta = delta_tilde;
    let mut matching = Matching::new();
    let mut phases = Vec::new();
    while delta >= 1.0 {
        let alive_before = alive.len();
        let out = global_phase(g, &alive, delta, rng)?;
        let mut removed = out.heavy.clone();
        removed.union_with(&out.friends);
        alive.difference_with(&removed);
        matching.extend(&out.matched);
        let max_degree_after = g.degrees_within(&alive).into_iter().max().unwrap_or(0);
        phases.push(PhaseRecord {
            delta,
            alive_before,
            heavy: out.heavy.len(),
            friends: out.friends.len(),
            removed: removed.len(),
            matched: out.matched.len(),
            max_degree_after,
        });
        delta /= 2.0;
    }
    Ok(GlobalRun {
        matching,
        phases,
        survivors: alive,
    })
}

/// `floor(log2 delta_tilde) + 1` for `delta_tilde >= 1`, else 0.
pub fn phase_count(delta_tilde: f64) -> usize {
    if delta_tilde < 1.0 {
        0
    } else {
        delta_tilde.log2().floor() as usize + 1
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::rng::ScriptedTape;
    use crate::verify::verify_matching;

    fn set(n: usize, vs: &[Vertex]) -> VertexSet {
        VertexSet::from_vertices(n, vs.iter().copied()).unwrap()
    }

    #[test]
    fn match_heavy_forced_tape() {
        let g = build_graph(2, [(0, 1)]).unwrap();
        // pick for friend 1, color 0 (blue), color 1 (red)
        let mut tape = ScriptedTape::new([0.0, 0.9, 0.1]);
        let m = match_heavy(&g, &set(2, &[0]), &set(2, &[1]), &mut tape);
        assert_eq!(m.edges(), &[(0, 1)]);
        assert_eq!(tape.remaining(), 0);
    }

    #[test]
    fn match_heavy_empty_sides() {
        let g = build_graph(3, [(0, 1), (1, 2)]).unwrap();
        let mut rng = crate::stream(1);
        assert!(match_heavy(&g, &VertexSet::new(3), &set(3, &[0, 2]), &mut rng).is_empty());
        assert!(match_heavy(&g, &set(3, &[1]), &VertexSet::new(3), &mut rng).is_empty());
    }

    #[test]
    fn friend_without_heavy_neighbor_is_skipped() {
        let g = build_graph(3, [(0, 1)]).unwrap();
        // friend 2 has no heavy neighbor: no pick draw, only two color draws
        let mut tape = ScriptedTape::new([0.9, 0.9]);
        let m = match_heavy(&g, &set(3, &[0]), &set(3, &[2]), &mut tape);
        assert!(m.is_empty());
        assert_eq!(tape.consumed(), 2);
    }

    #[test]
    fn blue_center_takes_smallest_red_partner() {
        let g = build_graph(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        // picks for 1, 2, 3 (forced), then colors 0 blue, 1 blue, 2 red, 3 red
        let mut tape = ScriptedTape::new([0.0, 0.0, 0.0, 0.7, 0.7, 0.2, 0.2]);
        let m = match_heavy(&g, &set(4, &[0]), &set(4, &[1, 2, 3]), &mut tape);
        assert_eq!(m.edges(), &[(0, 2)]);
    }

    fn within_three_sigma(hits: usize, trials: usize, p: f64) -> bool {
        let sigma = (p * (1.0 - p) / trials as f64).sqrt();
        (hits as f64 / trials as f64 - p).abs() <= 3.0 * sigma
    }

    #[test]
    fn match_heavy_two_friend_star_probability() {
        // H = {0}, F = {1, 2}, both friends adjacent only to 0: the pick draws
        // are forced, so enumerate the eight colorings directly.
        let g = build_graph(3, [(0, 1), (0, 2)]).unwrap();
        let (h, f) = (set(3, &[0]), set(3, &[1, 2]));
        let mut exact = 0.0;
        for mask in 0..8u32 {
            let colors: Vec<f64> = (0..3).map(|i| if mask >> i & 1 == 1 { 0.1 } else { 0.9 }).collect();
            let mut tape = ScriptedTape::new([0.0, 0.0].into_iter().chain(colors));
            exact += match_heavy(&g, &h, &f, &mut tape).len() as f64 / 8.0;
        }
        assert!((exact - 3.0 / 8.0).abs() < 1e-12);

        let mut rng = crate::stream(41);
        let trials = 100_000;
        let hits: usize = (0..trials).map(|_| match_heavy(&g, &h, &f, &mut rng).len()).sum();
        assert!(within_three_sigma(hits, trials, 3.0 / 8.0), "{hits}");
    }

    #[test]
    fn single_edge_matching_probability() {
        // Enumerate friend sets and colorings of the two endpoints.
        let mut exact = 0.0;
        for friends in 0..4u32 {
            let pf: f64 = (0..2).map(|i| if friends >> i & 1 == 1 { 0.25 } else { 0.75 }).product();
            for red in 0..4u32 {
                let matched = (0..2).any(|v| friends >> v & 1 == 1 && red >> v & 1 == 1 && red >> (1 - v) & 1 == 0);
                if matched {
                    exact += pf / 4.0;
                }
            }
        }
        assert!((exact - 1.0 / 8.0).abs() < 1e-12);

        let g = build_graph(2, [(0, 1)]).unwrap();
        let mut rng = crate::stream(42);
        let trials = 100_000;
        let hits: usize = (0..trials).map(|_| global_alg(&g, 1.0, &mut rng).unwrap().matching.len()).sum();
        assert!(within_three_sigma(hits, trials, exact), "{hits}");
    }

    #[test]
    fn star_matching_probability() {
        // Only the first phase can match: the center is removed as heavy.
        let p = 0.5 * (1.0 - (1.0f64 - 1.0 / 40.0).powi(5));
        let g = build_graph(6, (1..6).map(|v| (0, v))).unwrap();
        let mut rng = crate::stream(43);
        let trials = 100_000;
        let hits: usize = (0..trials).map(|_| global_alg(&g, 5.0, &mut rng).unwrap().matching.len()).sum();
        assert!(within_three_sigma(hits, trials, p), "{hits} vs {p}");
    }

    #[test]
    fn global_phase_examples() {
        let g = build_graph(3, []).unwrap();
        let mut rng = crate::stream(0);
        let out = global_phase(&g, &VertexSet::new(3), 4.0, &mut rng).unwrap();
        assert!(out.heavy.is_empty() && out.friends.is_empty() && out.matched.is_empty());

        let edge = build_graph(2, [(0, 1)]).unwrap();
        let out = global_phase(&edge, &VertexSet::full(2), 1.0, &mut rng).unwrap();
        assert_eq!(out.heavy.iter().collect::<Vec<_>>(), vec![0, 1]);

        let star = build_graph(6, (1..6).map(|v| (0, v))).unwrap();
        let out = global_phase(&star, &VertexSet::full(6), 5.0, &mut rng).unwrap();
        assert_eq!(out.heavy.iter().collect::<Vec<_>>(), vec![0]);
        // friend draws: center has no heavy neighbor, leaves each 1/20
        let mut tape = ScriptedTape::new([0.5, 0.049, 0.051, 0.9, 0.9, 0.9, 0.0, 0.8, 0.1]);
        let out = global_phase(&star, &VertexSet::full(6), 5.0, &mut tape).unwrap();
        assert_eq!(out.friends.iter().collect::<Vec<_>>(), vec![1]);
        assert_eq!(out.matched.edges(), &[(0, 1)]);
    }

    #[test]
    fn global_phase_rejects_degree_above_threshold() {
        let star = build_graph(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        let mut rng = crate::stream(0);
        assert!(matches!(
            global_phase(&star, &VertexSet::full(4), 2.0, &mut rng),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn global_alg_phase_count_and_halving() {
        let g = crate::graph::gen_erdos_renyi(300, 0.05, 3).unwrap();
        let dt = g.max_degree() as f64;
        for seed in 0..20 {
            let mut rng = crate::stream(seed);
            let run = global_alg(&g, dt, &mut rng).unwrap();
            assert_eq!(run.phases.len(), phase_count(dt));
            for p in &run.phases {
                assert!((p.max_degree_after as f64) < p.delta / 2.0);
            }
            verify_matching(&g, &run.matching).unwrap();
            assert_eq!(g.induced_subgraph(&run.survivors).unwrap().num_edges(), 0);
        }
    }

    #[test]
    fn global_alg_empty_graph() {
        let g = Graph::empty(4);
        let run = global_alg(&g, 1.0, &mut crate::stream(0)).unwrap();
        assert!(run.matching.is_empty());
        assert_eq!(run.phases.len(), 1);
    }

    #[test]
    fn phase_count_values() {
        assert_eq!(phase_count(0.5), 0);
        assert_eq!(phase_count(1.0), 1);
        assert_eq!(phase_count(2.0), 2);
        assert_eq!(phase_count(3.9), 2);
        assert_eq!(phase_count(64.0), 7);
    }
}
