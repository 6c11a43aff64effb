use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use mpc_matching::graph::{gen_erdos_renyi, gen_random_regular, gen_union_of_regulars, read_edge_list};
use mpc_matching::params::resolve_profile;
use mpc_matching::{Graph, Profile};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("config field `{field}`: {msg}")]
    Invalid { field: &'static str, msg: String },
    #[error("cannot read {path}: {msg}")]
    Io { path: PathBuf, msg: String },
    #[error("graph: {0}")]
    Graph(#[from] mpc_matching::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSpec {
    ErdosRenyi { n: usize, p: f64 },
    RandomRegular { n: usize, d: usize },
    UnionOfRegulars { t: u32 },
    EdgeList { path: PathBuf },
}

impl GraphSpec {
    /// Builds the graph; generated families use `seed`.
    pub fn build(&self, seed: u64) -> Result<Graph, ConfigError> {
        Ok(match self {
            GraphSpec::ErdosRenyi { n, p } => gen_erdos_renyi(*n, *p, seed)?,
            GraphSpec::RandomRegular { n, d } => gen_random_regular(*n, *d, seed)?,
            GraphSpec::UnionOfRegulars { t } => gen_union_of_regulars(*t, seed)?,
            GraphSpec::EdgeList { path } => {
                let file = std::fs::File::open(path).map_err(|e| ConfigError::Io {
                    path: path.clone(),
                    msg: e.to_string(),
                })?;
                read_edge_list(std::io::BufReader::new(file))?
            }
        })
    }

    /// Whether the graph depends on the seed.
    pub fn is_generated(&self) -> bool {
        !matches!(self, GraphSpec::EdgeList { .. })
    }
}

impl fmt::Display for GraphSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GraphSpec::ErdosRenyi { n, p } => write!(f, "er:{n}:{p}"),
            GraphSpec::RandomRegular { n, d } => write!(f, "regular:{n}:{d}"),
            GraphSpec::UnionOfRegulars { t } => write!(f, "union:{t}"),
            GraphSpec::EdgeList { path } => write!(f, "file:{}", path.display()),
        }
    }
}

/// `er:N:P`, `regular:N:D`, `union:T` or `file:PATH`.
impl FromStr for GraphSpec {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = |msg: &str| ConfigError::Invalid {
            field: "graph",
            msg: format!("`{s}`: {msg}"),
        };
        let (family, rest) = s.split_once(':').ok_or_else(|| bad("expected family:params"))?;
        let parts: Vec<&str> = rest.split(':').collect();
        let num = |i: usize| -> Result<&str, ConfigError> { parts.get(i).copied().ok_or_else(|| bad("missing parameter")) };
        let parse_err = |_| bad("bad number");
        match (family, parts.len()) {
            ("er", 2) => Ok(GraphSpec::ErdosRenyi {
                n: num(0)?.parse().map_err(parse_err)?,
                p: num(1)?.parse().map_err(|_| bad("bad probability"))?,
            }),
            ("regular", 2) => Ok(GraphSpec::RandomRegular {
                n: num(0)?.parse().map_err(parse_err)?,
                d: num(1)?.parse().map_err(parse_err)?,
            }),
            ("union", 1) => Ok(GraphSpec::UnionOfRegulars {
                t: num(0)?.parse().map_err(parse_err)?,
            }),
            ("file", _) => Ok(GraphSpec::EdgeList { path: rest.into() }),
            _ => Err(bad("unknown family or wrong parameter count")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Global,
    Parallel,
    #[serde(rename = "twoeps", alias = "two_plus_eps")]
    TwoPlusEps,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Global => "global",
            Algorithm::Parallel => "parallel",
            Algorithm::TwoPlusEps => "twoeps",
        })
    }
}

impl FromStr for Algorithm {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "global" => Ok(Algorithm::Global),
            "parallel" => Ok(Algorithm::Parallel),
            "twoeps" | "two_plus_eps" => Ok(Algorithm::TwoPlusEps),
            other => Err(ConfigError::Invalid {
                field: "algorithm",
                msg: format!("unknown algorithm `{other}`"),
            }),
        }
    }
}

fn default_profile() -> String {
    "desk".into()
}

fn one() -> usize {
    1
}

fn default_eps() -> f64 {
    0.5
}

fn default_repeat_factor() -> f64 {
    mpc_matching::parallel::DEFAULT_REPEAT_FACTOR
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSpec,
    /// Seed for generated graphs; each run seed is used when absent.
    #[serde(default)]
    pub graph_seed: Option<u64>,
    pub algorithm: Algorithm,
    #[serde(default = "default_profile")]
    pub profile: String,
    #[serde(default)]
    pub overrides: BTreeMap<String, f64>,
    /// Words per machine.
    pub space: usize,
    pub seeds: Vec<u64>,
    /// Independent runs per seed.
    #[serde(default = "one")]
    pub repetitions: usize,
    #[serde(default = "default_eps")]
    pub eps: f64,
    #[serde(default = "default_repeat_factor")]
    pub repeat_factor: f64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    /// Vertices sampled per snapshot for the assignment uniformity table.
    #[serde(default)]
    pub uniformity_sample: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| ConfigError::Parse {
            line: e.line(),
            column: e.column(),
            msg: e.to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let invalid = |field, msg: &str| Err(ConfigError::Invalid { field, msg: msg.into() });
        if self.seeds.is_empty() {
            return invalid("seeds", "must not be empty");
        }
        if self.space == 0 {
            return invalid("space", "must be at least 1");
        }
        if self.repetitions == 0 {
            return invalid("repetitions", "must be at least 1");
        }
        if !(self.eps > 0.0 && self.eps <= 0.5) {
            return invalid("eps", "must lie in (0, 1/2]");
        }
        if !(self.repeat_factor > 0.0 && self.repeat_factor.is_finite()) {
            return invalid("repeat_factor", "must be positive");
        }
        self.profile_for(2).map(|_| ())
    }

    pub fn profile_for(&self, n: usize) -> Result<Profile, ConfigError> {
        resolve_profile(&self.profile, n.max(2) as f64, &self.overrides).map_err(|e| ConfigError::Invalid {
            field: "profile",
            msg: e.to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "graph": {"family": "erdos_renyi", "n": 100, "p": 0.1},
        "algorithm": "global",
        "space": 50,
        "seeds": [1, 2, 3]
    }"#;

    #[test]
    fn minimal_config_gets_defaults() {
        let cfg = ExperimentConfig::from_json(MINIMAL).unwrap();
        assert_eq!(cfg.profile, "desk");
        assert_eq!(cfg.repetitions, 1);
        assert_eq!(cfg.eps, 0.5);
        assert_eq!(cfg.graph, GraphSpec::ErdosRenyi { n: 100, p: 0.1 });
    }

    #[test]
    fn parse_error_reports_position() {
        let text = "{\n  \"graph\": {\"family\": \"erdos_renyi\", \"n\": 100, \"p\": 0.1},\n  \"algorithm\": \"fast\"\n}";
        match ExperimentConfig::from_json(text) {
            Err(ConfigError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            ExperimentConfig::from_json(&MINIMAL.replace("\"space\"", "\"spcae\"")),
            Err(ConfigError::Parse { .. })
        ));
    }

    #[test]
    fn invalid_fields_are_named() {
        let empty = MINIMAL.replace("[1, 2, 3]", "[]");
        assert!(matches!(
            ExperimentConfig::from_json(&empty),
            Err(ConfigError::Invalid { field: "seeds", .. })
        ));
        let zero = MINIMAL.replace("\"space\": 50", "\"space\": 0");
        assert!(matches!(
            ExperimentConfig::from_json(&zero),
            Err(ConfigError::Invalid { field: "space", .. })
        ));
        let profile = MINIMAL.replace("\"space\": 50", "\"space\": 50, \"profile\": \"fast\"");
        assert!(matches!(
            ExperimentConfig::from_json(&profile),
            Err(ConfigError::Invalid { field: "profile", .. })
        ));
    }

    #[test]
    fn graph_spec_strings_round_trip() {
        for s in ["er:100:0.1", "regular:64:4", "union:3", "file:/tmp/g.txt"] {
            let spec: GraphSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("er:100".parse::<GraphSpec>().is_err());
        assert!("tree:5".parse::<GraphSpec>().is_err());
    }

    #[test]
    fn algorithm_names() {
        for a in [Algorithm::Global, Algorithm::Parallel, Algorithm::TwoPlusEps] {
            assert_eq!(a.to_string().parse::<Algorithm>().unwrap(), a);
        }
        assert_eq!("two_plus_eps".parse::<Algorithm>().unwrap(), Algorithm::TwoPlusEps);
    }
}
