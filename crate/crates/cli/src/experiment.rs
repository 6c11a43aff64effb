use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use mpc_matching::emulate::AssignmentTrace;
use mpc_matching::parallel::{
    effective_space, machine_capacity, parallel_alg_with, repeat_for_two_plus_eps_with, simulate_global_alg,
    sized_cluster, RunOptions,
};
use mpc_matching::verify::{approx_report, uniformity_stats, verify_matching, UniformityStats};
use mpc_matching::{stream, Graph, Matching, RandomSource, RoundLedger, VertexSet};
use serde::{Serialize, Serializer};

use crate::config::{Algorithm, ExperimentConfig};

/// Column order of `results.csv`.
pub const RESULT_HEADER: [&str; 16] = [
    "algorithm",
    "graph",
    "profile",
    "space",
    "seed",
    "repetition",
    "n",
    "edges",
    "matching_size",
    "ratio_upper_bound",
    "rounds",
    "blocks",
    "total_tau",
    "machines_zeroed",
    "violations",
    "wall_ms",
];

fn ser_ratio<S: Serializer>(r: &f64, s: S) -> Result<S::Ok, S::Error> {
    if r.is_finite() {
        s.serialize_f64(*r)
    } else {
        s.serialize_str("inf")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRecord {
    pub algorithm: String,
    pub graph: String,
    pub profile: String,
    pub space: usize,
    pub seed: u64,
    pub repetition: usize,
    pub n: usize,
    pub edges: usize,
    pub matching_size: usize,
    #[serde(serialize_with = "ser_ratio")]
    pub ratio_upper_bound: f64,
    pub rounds: u64,
    pub blocks: usize,
    pub total_tau: usize,
    pub machines_zeroed: usize,
    pub violations: Vec<String>,
    pub wall_ms: f64,
}

impl ResultRecord {
    fn csv_row(&self) -> Vec<String> {
        let ratio = if self.ratio_upper_bound.is_finite() {
            self.ratio_upper_bound.to_string()
        } else {
            "inf".into()
        };
        vec![
            self.algorithm.clone(),
            self.graph.clone(),
            self.profile.clone(),
            self.space.to_string(),
            self.seed.to_string(),
            self.repetition.to_string(),
            self.n.to_string(),
            self.edges.to_string(),
            self.matching_size.to_string(),
            ratio,
            self.rounds.to_string(),
            self.blocks.to_string(),
            self.total_tau.to_string(),
            self.machines_zeroed.to_string(),
            self.violations.join("; "),
            format!("{:.3}", self.wall_ms),
        ]
    }
}

/// One ledger record tagged with the run that charged it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LedgerRow {
    pub seed: u64,
    pub repetition: usize,
    /// Inner run index; nonzero only for repeated runs.
    pub run: usize,
    pub round: u64,
    pub primitive: String,
    pub cost: u64,
    pub machines: usize,
    pub max_sent: usize,
    pub max_recv: usize,
    pub max_stored: usize,
    pub overflowed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub records: Vec<ResultRecord>,
    pub ledger: Vec<LedgerRow>,
    /// Assignment uniformity per compression block index, when traced.
    pub uniformity: Vec<UniformityStats>,
}

impl Experiment {
    pub fn ok(&self) -> bool {
        self.records.iter().all(|r| r.violations.is_empty())
    }
}

struct Outcome {
    matching: Matching,
    rounds: u64,
    blocks: usize,
    total_tau: usize,
    machines_zeroed: usize,
    ledgers: Vec<RoundLedger>,
    traces: Vec<AssignmentTrace>,
    violations: Vec<String>,
}

fn run_one<R: RandomSource>(cfg: &ExperimentConfig, g: &Graph, rng: &mut R) -> Result<Outcome> {
    let n = g.n();
    let s = cfg.space;
    let profile = cfg.profile_for(n)?;
    let capacity = machine_capacity(effective_space(n, s), &profile);
    let mut violations = Vec::new();
    let mut out = match cfg.algorithm {
        Algorithm::Global => {
            let mut cluster = sized_cluster(g, s, &profile)?;
            let run = simulate_global_alg(&mut cluster, g, &VertexSet::full(n), n as f64, rng)?;
            if let Err(e) = cluster.audit() {
                violations.push(format!("audit: {e}"));
            }
            Outcome {
                matching: run.matching,
                rounds: cluster.rounds(),
                blocks: 0,
                total_tau: 0,
                machines_zeroed: 0,
                ledgers: vec![cluster.ledger().clone()],
                traces: Vec::new(),
                violations: Vec::new(),
            }
        }
        Algorithm::Parallel => {
            let mut cluster = sized_cluster(g, s, &profile)?;
            let opts = RunOptions {
                trace: cfg.uniformity_sample.is_some(),
            };
            let run = parallel_alg_with(g, s, &profile, rng, &mut cluster, opts)?;
            if let Err(e) = cluster.audit() {
                violations.push(format!("audit: {e}"));
            }
            Outcome {
                rounds: run.rounds(),
                blocks: run.blocks.len(),
                total_tau: run.total_tau(),
                machines_zeroed: run.machines_zeroed(),
                matching: run.matching,
                ledgers: vec![run.ledger],
                traces: run.traces,
                violations: Vec::new(),
            }
        }
        Algorithm::TwoPlusEps => {
            let rep = repeat_for_two_plus_eps_with(g, s, cfg.eps, cfg.repeat_factor, &profile, rng)?;
            Outcome {
                rounds: rep.rounds(),
                blocks: rep.runs.iter().map(|r| r.blocks.len()).sum(),
                total_tau: rep.runs.iter().map(|r| r.total_tau()).sum(),
                machines_zeroed: rep.runs.iter().map(|r| r.machines_zeroed()).sum(),
                ledgers: rep.runs.iter().map(|r| r.ledger.clone()).collect(),
                traces: Vec::new(),
                matching: rep.matching,
                violations: Vec::new(),
            }
        }
    };
    for (i, ledger) in out.ledgers.iter().enumerate() {
        for r in ledger.records() {
            let worst = r.max_sent.max(r.max_recv).max(r.max_stored);
            if worst > capacity {
                violations.push(format!("run {i} round {}: {worst} words over capacity {capacity}", r.round));
            }
        }
    }
    if let Err(e) = verify_matching(g, &out.matching) {
        violations.push(format!("matching: {e}"));
    }
    out.violations = violations;
    Ok(out)
}

/// Runs every seed and repetition of `cfg`. Repetition `r` of a seed uses the
/// `r`-th stream split from that seed.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Experiment> {
    cfg.validate()?;
    let shared = match (cfg.graph.is_generated(), cfg.graph_seed) {
        (false, _) => Some(cfg.graph.build(0)?),
        (true, Some(gs)) => Some(cfg.graph.build(gs)?),
        (true, None) => None,
    };
    let mut records = Vec::new();
    let mut ledger = Vec::new();
    let mut traces: Vec<Vec<AssignmentTrace>> = Vec::new();
    for &seed in &cfg.seeds {
        let own;
        let g = match &shared {
            Some(g) => g,
            None => {
                own = cfg.graph.build(seed)?;
                &own
            }
        };
        let mut master = stream(seed);
        for repetition in 0..cfg.repetitions {
            let mut rng = master.split();
            let start = Instant::now();
            let out = run_one(cfg, g, &mut rng).with_context(|| format!("seed {seed}, repetition {repetition}"))?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let ratio = approx_report(g, &out.matching, seed).map(|a| a.ratio_upper_bound).unwrap_or(f64::NAN);
            for (run, l) in out.ledgers.iter().enumerate() {
                ledger.extend(l.records().iter().map(|r| LedgerRow {
                    seed,
                    repetition,
                    run,
                    round: r.round,
                    primitive: r.primitive.clone(),
                    cost: r.cost,
                    machines: r.machines,
                    max_sent: r.max_sent,
                    max_recv: r.max_recv,
                    max_stored: r.max_stored,
                    overflowed: r.overflowed,
                }));
            }
            for (block, t) in out.traces.into_iter().enumerate() {
                if traces.len() <= block {
                    traces.push(Vec::new());
                }
                traces[block].push(t);
            }
            records.push(ResultRecord {
                algorithm: cfg.algorithm.to_string(),
                graph: cfg.graph.to_string(),
                profile: cfg.profile.clone(),
                space: cfg.space,
                seed,
                repetition,
                n: g.n(),
                edges: g.num_edges(),
                matching_size: out.matching.len(),
                ratio_upper_bound: ratio,
                rounds: out.rounds,
                blocks: out.blocks,
                total_tau: out.total_tau,
                machines_zeroed: out.machines_zeroed,
                violations: out.violations,
                wall_ms,
            });
        }
    }
    let uniformity = match cfg.uniformity_sample {
        Some(k) => traces.iter().map(|t| uniformity_stats(t, k)).collect::<Result<_, _>>()?,
        None => Vec::new(),
    };
    Ok(Experiment {
        config: cfg.clone(),
        records,
        ledger,
        uniformity,
    })
}

pub fn write_results_csv<W: Write>(records: &[ResultRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(RESULT_HEADER)?;
    for r in records {
        w.write_record(r.csv_row())?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `results.csv`, `results.json`, `ledger.csv` and, when traced,
/// `uniformity_block<k>.csv` into `dir`.
pub fn write_outputs(exp: &Experiment, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    write_results_csv(&exp.records, BufWriter::new(File::create(dir.join("results.csv"))?))?;

    let json = serde_json::json!({ "config": exp.config, "records": exp.records });
    let mut f = BufWriter::new(File::create(dir.join("results.json"))?);
    serde_json::to_writer_pretty(&mut f, &json)?;
    writeln!(f)?;
    f.flush()?;

    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(dir.join("ledger.csv"))?));
    for row in &exp.ledger {
        w.serialize(row)?;
    }
    w.flush()?;

    for (block, u) in exp.uniformity.iter().enumerate() {
        u.write_csv(BufWriter::new(File::create(dir.join(format!("uniformity_block{block}.csv")))?))?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub seed: u64,
    pub repetition: usize,
    pub rounds_a: u64,
    pub rounds_b: u64,
    /// `rounds_b / rounds_a`.
    pub ratio: f64,
}

/// Charged rounds of two experiments on the same graphs and seeds.
pub fn compare_rounds(a: &ExperimentConfig, b: &ExperimentConfig) -> Result<Vec<ComparisonRow>> {
    if a.graph != b.graph || a.graph_seed != b.graph_seed {
        bail!("graph specs differ: {} vs {}", a.graph, b.graph);
    }
    if a.seeds != b.seeds || a.repetitions != b.repetitions {
        bail!("seed lists differ");
    }
    let ea = run_experiment(a)?;
    let eb = run_experiment(b)?;
    for e in [&ea, &eb] {
        if let Some(r) = e.records.iter().find(|r| !r.violations.is_empty()) {
            bail!("{} run on seed {} failed: {}", r.algorithm, r.seed, r.violations.join("; "));
        }
    }
    Ok(ea
        .records
        .iter()
        .zip(&eb.records)
        .map(|(x, y)| ComparisonRow {
            seed: x.seed,
            repetition: x.repetition,
            rounds_a: x.rounds,
            rounds_b: y.rounds,
            ratio: if x.rounds == 0 { 1.0 } else { y.rounds as f64 / x.rounds as f64 },
        })
        .collect())
}
