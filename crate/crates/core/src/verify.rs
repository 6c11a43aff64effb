//! Verification, exact oracles and diagnostics.

use std::io::Write;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize, Serializer};
use thiserror::Error;

use crate::emulate::AssignmentTrace;
use crate::error::{Error, Result};
use crate::graph::{Edge, Graph, Vertex};
use crate::matching::Matching;

/// Largest graph the exact oracle accepts.
pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MatchingViolation {
    #[error("({0}, {1}) is not an edge of the graph")]
    AlienEdge(Vertex, Vertex),
    #[error("vertex {vertex} is covered by both {first:?} and {second:?}")]
    SharedVertex { vertex: Vertex, first: Edge, second: Edge },
}

/// Checks that every edge belongs to `g` and no two edges share an endpoint.
/// Reports the first violation in edge order.
pub fn verify_matching(g: &Graph, m: &Matching) -> Result<(), MatchingViolation> {
    let mut owner: Vec<Option<Edge>> = vec![None; g.n()];
    for &(u, v) in m.edges() {
        if u == v || (u as usize) >= g.n() || (v as usize) >= g.n() || !g.has_edge(u, v) {
            return Err(MatchingViolation::AlienEdge(u, v));
        }
        for x in [u, v] {
            if let Some(first) = owner[x as usize] {
                return Err(MatchingViolation::SharedVertex {
                    vertex: x,
                    first,
                    second: (u, v),
                });
            }
            owner[x as usize] = Some((u, v));
        }
    }
    Ok(())
}

/// Maximum matching size by branch and bound. Limited to [`EXACT_LIMIT`]
/// vertices.
pub fn exact_max_matching(g: &Graph) -> Result<usize> {
    let n = g.n();
    if n > EXACT_LIMIT {
        return Err(Error::OracleTooLarge { n, limit: EXACT_LIMIT });
    }
    let adj: Vec<u32> = g
        .vertices()
        .map(|v| g.neighbors(v).iter().fold(0u32, |acc, &u| acc | (1 << u)))
        .collect();
    let mut best = 0;
    let all = if n == 32 { u32::MAX } else { (1u32 << n) - 1 };
    branch(&adj, all, 0, &mut best);
    Ok(best)
}

fn branch(adj: &[u32], avail: u32, current: usize, best: &mut usize) {
    // Only vertices with an available neighbor can still be matched.
    let mut live = 0u32;
    let mut rest = avail;
    while rest != 0 {
        let v = rest.trailing_zeros();
        rest &= rest - 1;
        if adj[v as usize] & avail != 0 {
            live |= 1 << v;
        }
    }
    if current + live.count_ones() as usize / 2 <= *best {
        return;
    }
    if live == 0 {
        *best = current;
        return;
    }
    let v = live.trailing_zeros();
    let mut nbrs = adj[v as usize] & live;
    while nbrs != 0 {
        let u = nbrs.trailing_zeros();
        nbrs &= nbrs - 1;
        branch(adj, live & !(1 << v) & !(1 << u), current + 1, best);
    }
    branch(adj, live & !(1 << v), current, best);
}

/// Greedy matching scanning `order` once.
pub fn greedy_maximal_in_order(n: usize, order: &[Edge]) -> Matching {
    let mut used = vec![false; n];
    let mut m = Matching::new();
    for &(u, v) in order {
        if !used[u as usize] && !used[v as usize] {
            used[u as usize] = true;
            used[v as usize] = true;
            m.push(u, v);
        }
    }
    m
}

/// Size `k` of a greedy maximal matching over a seed-shuffled edge order, and
/// the bracket `[k, 2k]` containing the maximum matching size.
pub fn maximal_bound(g: &Graph, seed: u64) -> (usize, (usize, usize)) {
    let mut order = g.edges().to_vec();
    order.shuffle(&mut crate::stream(seed));
    let k = greedy_maximal_in_order(g.n(), &order).len();
    (k, (k, 2 * k))
}

fn ser_ratio<S: Serializer>(r: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if r.is_finite() {
        s.serialize_f64(*r)
    } else {
        s.serialize_str("inf")
    }
}

fn de_ratio<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Num(f64),
        Text(String),
    }
    match Raw::deserialize(d)? {
        Raw::Num(x) => Ok(x),
        Raw::Text(t) if t == "inf" => Ok(f64::INFINITY),
        Raw::Text(t) => Err(serde::de::Error::custom(format!("bad ratio `{t}`"))),
    }
}

/// Size of a matching against brackets on the optimum.
///
/// `ratio_upper_bound` is `opt_upper / matching_size`; it equals the true
/// ratio only when `opt_exact` is present. An empty matching on a graph with
/// edges gives an infinite ratio, serialized as `"inf"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproxReport {
    pub matching_size: usize,
    pub opt_exact: Option<usize>,
    pub maximal_size: usize,
    pub opt_lower: usize,
    pub opt_upper: usize,
    #[serde(serialize_with = "ser_ratio", deserialize_with = "de_ratio")]
    pub ratio_upper_bound: f64,
}

pub fn approx_report(g: &Graph, m: &Matching, seed: u64) -> Result<ApproxReport> {
    verify_matching(g, m)?;
    let (maximal_size, (lo, hi)) = maximal_bound(g, seed);
    let opt_exact = if g.n() <= EXACT_LIMIT {
        Some(exact_max_matching(g)?)
    } else {
        None
    };
    let opt_upper = opt_exact.unwrap_or(hi);
    let ratio_upper_bound = match (opt_upper, m.len()) {
        (0, _) => 1.0,
        (_, 0) => f64::INFINITY,
        (o, k) => o as f64 / k as f64,
    };
    Ok(ApproxReport {
        matching_size: m.len(),
        opt_exact,
        maximal_size,
        opt_lower: opt_exact.unwrap_or(lo),
        opt_upper,
        ratio_upper_bound,
    })
}

/// Load and assignment-frequency summary for one snapshot index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseUniformity {
    pub phase: usize,
    pub load_min: usize,
    pub load_max: usize,
    pub load_mean: f64,
    /// Sampled vertices present in at least one run at this phase.
    pub vertices_observed: usize,
    pub epsilon_hat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UniformityStats {
    pub machines: usize,
    pub runs: usize,
    pub sampled: Vec<Vertex>,
    pub phases: Vec<PhaseUniformity>,
    /// `frequencies[phase][k][i]`: share of runs, among those where sampled
    /// vertex `k` survived to `phase`, that placed it on machine `i`.
    pub frequencies: Vec<Vec<Vec<f64>>>,
    /// Maximum of the per-phase values.
    pub epsilon_hat: f64,
}

impl UniformityStats {
    /// Writes the per-phase time series as CSV.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for p in &self.phases {
            w.serialize(p).map_err(|e| Error::Io(e.to_string()))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Empirical assignment frequencies over repeated runs.
///
/// Samples up to `sample` vertices evenly from those assigned in the first
/// run's initial snapshot. All traces must use the same machine count.
pub fn uniformity_stats(traces: &[AssignmentTrace], sample: usize) -> Result<UniformityStats> {
    let first = traces
        .first()
        .ok_or_else(|| Error::Contract("uniformity statistics need at least one run".into()))?;
    let m = first.machines;
    if traces.iter().any(|t| t.machines != m) {
        return Err(Error::Contract("runs disagree on the machine count".into()));
    }
    let pool: Vec<Vertex> = first.snapshots.first().map(|s| s.iter().map(|&(v, _)| v).collect()).unwrap_or_default();
    let take = sample.min(pool.len());
    let sampled: Vec<Vertex> = (0..take).map(|k| pool[k * pool.len() / take.max(1)]).collect();
    let depth = traces.iter().map(|t| t.snapshots.len()).max().unwrap_or(0);

    let mut phases = Vec::with_capacity(depth);
    let mut frequencies = Vec::with_capacity(depth);
    for p in 0..depth {
        let mut counts = vec![vec![0usize; m]; sampled.len()];
        let mut loads = Vec::new();
        for t in traces {
            let Some(snap) = t.snapshots.get(p) else { continue };
            let mut load = vec![0usize; m];
            for &(_, i) in snap {
                load[i as usize] += 1;
            }
            loads.extend(load);
            for (k, v) in sampled.iter().enumerate() {
                if let Ok(pos) = snap.binary_search_by_key(v, |&(u, _)| u) {
                    counts[k][snap[pos].1 as usize] += 1;
                }
            }
        }
        let mut eps = 0.0f64;
        let mut observed = 0;
        let freq: Vec<Vec<f64>> = counts
            .iter()
            .map(|c| {
                let total: usize = c.iter().sum();
                if total == 0 {
                    return vec![0.0; m];
                }
                observed += 1;
                let f: Vec<f64> = c.iter().map(|&x| x as f64 / total as f64).collect();
                for &x in &f {
                    eps = eps.max((m as f64 * x - 1.0).abs());
                }
                f
            })
            .collect();
        phases.push(PhaseUniformity {
            phase: p,
            load_min: loads.iter().copied().min().unwrap_or(0),
            load_max: loads.iter().copied().max().unwrap_or(0),
            load_mean: if loads.is_empty() {
                0.0
            } else {
                loads.iter().sum::<usize>() as f64 / loads.len() as f64
            },
            vertices_observed: observed,
            epsilon_hat: eps,
        });
        frequencies.push(freq);
    }
    let epsilon_hat = phases.iter().map(|p| p.epsilon_hat).fold(0.0, f64::max);
    Ok(UniformityStats {
        machines: m,
        runs: traces.len(),
        sampled,
        phases,
        frequencies,
        epsilon_hat,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::emulate::AssignmentSampler;
    use crate::graph::{build_graph, VertexSet};

    fn petersen() -> Graph {
        let outer = (0..5).map(|i| (i, (i + 1) % 5));
        let spokes = (0..5).map(|i| (i, i + 5));
        let inner = (0..5).map(|i| (i + 5, (i + 2) % 5 + 5));
        build_graph(10, outer.chain(spokes).chain(inner)).unwrap()
    }

    #[test]
    fn verify_examples() {
        let path = build_graph(3, [(0, 1), (1, 2)]).unwrap();
        assert!(verify_matching(&path, &Matching::new()).is_ok());
        assert_eq!(
            verify_matching(&path, &Matching::from_edges([(0, 1), (1, 2)])),
            Err(MatchingViolation::SharedVertex {
                vertex: 1,
                first: (0, 1),
                second: (1, 2)
            })
        );
        let two = build_graph(4, [(0, 1), (2, 3)]).unwrap();
        assert!(verify_matching(&two, &Matching::from_edges([(0, 1), (2, 3)])).is_ok());
        assert_eq!(
            verify_matching(&two, &Matching::from_edges([(1, 2)])),
            Err(MatchingViolation::AlienEdge(1, 2))
        );
        assert!(verify_matching(&two, &Matching::from_edges([(3, 9)])).is_err());
    }

    #[test]
    fn exact_examples() {
        let tri = build_graph(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        assert_eq!(exact_max_matching(&tri).unwrap(), 1);
        let p4 = build_graph(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        assert_eq!(exact_max_matching(&p4).unwrap(), 2);
        let pet = petersen();
        let witness = Matching::from_edges((0..5).map(|i| (i, i + 5)));
        verify_matching(&pet, &witness).unwrap();
        assert_eq!(exact_max_matching(&pet).unwrap(), 5);
        assert_eq!(exact_max_matching(&Graph::empty(0)).unwrap(), 0);
        assert!(matches!(
            exact_max_matching(&Graph::empty(21)),
            Err(Error::OracleTooLarge { n: 21, .. })
        ));
    }

    #[test]
    fn maximal_bound_examples() {
        assert_eq!(maximal_bound(&Graph::empty(3), 1), (0, (0, 0)));
        let e = build_graph(2, [(0, 1)]).unwrap();
        assert_eq!(maximal_bound(&e, 1), (1, (1, 2)));
        let p4 = build_graph(4, [(0, 1), (1, 2), (2, 3)]).unwrap();
        let edges = p4.edges().to_vec();
        let mut sizes = Vec::new();
        for a in 0..3 {
            for b in 0..3 {
                for c in 0..3 {
                    if a != b && b != c && a != c {
                        let order = [edges[a], edges[b], edges[c]];
                        let k = greedy_maximal_in_order(4, &order).len();
                        assert!(k <= 2 && 2 <= 2 * k);
                        sizes.push(k);
                    }
                }
            }
        }
        // middle edge first gives the worst case
        assert_eq!(sizes.iter().filter(|&&k| k == 1).count(), 2);
    }

    #[test]
    fn approx_report_examples() {
        let two = build_graph(4, [(0, 1), (2, 3)]).unwrap();
        let r = approx_report(&two, &Matching::from_edges([(0, 1), (2, 3)]), 0).unwrap();
        assert!(r.ratio_upper_bound <= 2.0);
        assert_eq!(r.opt_exact, Some(2));
        let r = approx_report(&two, &Matching::new(), 0).unwrap();
        assert!(r.ratio_upper_bound.is_infinite());
        let json = serde_json::to_string(&r).unwrap();
        assert!(json.contains("\"inf\""));
        let back: ApproxReport = serde_json::from_str(&json).unwrap();
        assert_eq!(back, r);
        assert!(approx_report(&two, &Matching::from_edges([(1, 2)]), 0).is_err());
    }

    #[test]
    fn approx_report_uses_exact_ratio_small_n() {
        let g = crate::graph::gen_erdos_renyi(16, 0.3, 5).unwrap();
        let (_, _) = maximal_bound(&g, 0);
        let m = Matching::from_edges([g.edges()[0]]);
        let r = approx_report(&g, &m, 3).unwrap();
        let exact = exact_max_matching(&g).unwrap();
        assert_eq!(r.ratio_upper_bound, exact as f64);
        assert!(r.opt_lower <= r.opt_upper);
    }

    fn trace(m: usize, snapshots: Vec<Vec<(Vertex, u32)>>) -> AssignmentTrace {
        AssignmentTrace { machines: m, snapshots }
    }

    #[test]
    fn uniformity_single_machine_is_zero() {
        let traces: Vec<_> = (0..5).map(|_| trace(1, vec![vec![(0, 0), (1, 0), (2, 0)]])).collect();
        let s = uniformity_stats(&traces, 64).unwrap();
        assert_eq!(s.epsilon_hat, 0.0);
    }

    #[test]
    fn uniformity_degenerate_vertex() {
        let traces: Vec<_> = (0..10).map(|r| trace(4, vec![vec![(0, 0), (1, r % 4)]])).collect();
        let s = uniformity_stats(&traces, 64).unwrap();
        assert_eq!(s.epsilon_hat, 3.0);
        for f in &s.frequencies[0] {
            assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("phase,load_min,load_max,load_mean,vertices_observed,epsilon_hat"));
    }

    #[test]
    fn uniformity_fresh_partition_noise_floor() {
        let (m, runs, n) = (4usize, 10_000usize, 64usize);
        let alive = VertexSet::full(n);
        let mut rng = crate::stream(11);
        let traces: Vec<_> = (0..runs)
            .map(|_| {
                let mut s = AssignmentSampler::uniform(m, &mut rng);
                let phi = s.assign(&alive);
                trace(m, vec![alive.iter().map(|v| (v, phi[v as usize])).collect()])
            })
            .collect();
        let s = uniformity_stats(&traces, 64).unwrap();
        let p = 1.0 / m as f64;
        let sigma = m as f64 * (p * (1.0 - p) / runs as f64).sqrt();
        // epsilon-hat is a maximum over 64 * m cells: hold the family to the
        // two-sided 3-sigma level.
        use statrs::distribution::{ContinuousCDF, Normal};
        let cells = (64 * m) as f64;
        let tail = 2.0 * Normal::new(0.0, 1.0).unwrap().cdf(-3.0) / cells;
        let z = -Normal::new(0.0, 1.0).unwrap().inverse_cdf(tail / 2.0);
        assert!(s.epsilon_hat <= z * sigma, "{} vs {}", s.epsilon_hat, z * sigma);
        assert!(s.epsilon_hat > 0.0);
    }
}
