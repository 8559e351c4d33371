//! Run configuration: `key = value` files merged with command-line flags.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use curvem_core::experiment::ExperimentKind;
use curvem_core::solver::SolverMethod;
use curvem_core::vem::{LoadRule, DEFAULT_VEM_BOOST};

/// Keys accepted in configuration files and as flags.
pub const KEYS: [&str; 16] = [
    "experiment",
    "k",
    "n",
    "mesh",
    "rho",
    "boost",
    "load",
    "solver",
    "tol",
    "max_iter",
    "out",
    "check",
    "m",
    "trials",
    "seed",
    "verbose",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

/// Rate thresholds checked after a convergence run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RateCheck {
    None,
    /// Last-interval `rate_H1 >= k - 0.2` and `rate_L2 >= k + 0.75`.
    Optimal,
    /// Last-interval `rate_H1 <= 1.8` and `rate_L2 <= 2.5`.
    Suboptimal,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub experiment: ExperimentKind,
    pub ks: Vec<usize>,
    /// Refinement parameters; ignored when `meshes` is non-empty.
    pub ns: Vec<usize>,
    pub meshes: Vec<PathBuf>,
    pub rho: Option<f64>,
    pub boost: usize,
    pub load: LoadRule,
    pub solver: SolverMethod,
    pub tol: f64,
    pub max_iter: usize,
    pub out: PathBuf,
    pub check: RateCheck,
    /// Quadrature audit: `M` values, polygons per value and seed.
    pub ms: Vec<usize>,
    pub trials: usize,
    pub seed: u64,
    /// Dump per-element matrices.
    pub verbose: bool,
}

/// Parses a `key = value` file. Blank lines and `#` comments are skipped.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, ConfigError> {
    let mut map = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            ConfigError(format!(
                "line {}: expected `key = value`, got `{line}`",
                i + 1
            ))
        })?;
        let key = key.trim().replace('-', "_");
        if !KEYS.contains(&key.as_str()) {
            return Err(ConfigError(format!("line {}: unknown key `{key}`", i + 1)));
        }
        map.insert(key, value.trim().to_string());
    }
    Ok(map)
}

pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, ConfigError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
    parse_config_text(&text).map_err(|e| ConfigError(format!("{}: {}", path.display(), e.0)))
}

fn list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| {
            s.parse()
                .map_err(|_| ConfigError(format!("{key}: cannot parse `{s}`")))
        })
        .collect()
}

fn scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T, ConfigError> {
    value
        .trim()
        .parse()
        .map_err(|_| ConfigError(format!("{key}: cannot parse `{value}`")))
}

fn default_ns(kind: ExperimentKind) -> Vec<usize> {
    match kind {
        ExperimentKind::Test1Curved | ExperimentKind::Test1Straight => vec![4, 8, 16, 32],
        ExperimentKind::Test2 => vec![2, 4, 8, 16],
        ExperimentKind::Patch => vec![2],
        ExperimentKind::QuadratureAudit => Vec::new(),
    }
}

impl RunConfig {
    /// Builds and validates a configuration from merged key-value pairs.
    pub fn from_map(map: &BTreeMap<String, String>) -> Result<Self, ConfigError> {
        if let Some(key) = map.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(ConfigError(format!("unknown key `{key}`")));
        }
        let get = |k: &str| map.get(k).map(String::as_str);
        let experiment: ExperimentKind = get("experiment")
            .ok_or_else(|| ConfigError("no experiment given".into()))?
            .parse()
            .map_err(ConfigError)?;
        let ks = match get("k") {
            Some(v) => list("k", v)?,
            None => vec![1, 2, 3],
        };
        if ks.is_empty() {
            return Err(ConfigError("k: empty list".into()));
        }
        if let Some(&k) = ks.iter().find(|&&k| !(1..=4).contains(&k)) {
            return Err(ConfigError(format!("k = {k} outside [1, 4]")));
        }
        let meshes: Vec<PathBuf> = match get("mesh") {
            Some(v) => v
                .split(',')
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(PathBuf::from)
                .collect(),
            None => Vec::new(),
        };
        let ns = match get("n") {
            Some(v) => list("n", v)?,
            None => default_ns(experiment),
        };
        if experiment != ExperimentKind::QuadratureAudit && meshes.is_empty() {
            if ns.is_empty() {
                return Err(ConfigError("empty mesh sequence".into()));
            }
            if let Some(&n) = ns.iter().find(|&&n| n < 2) {
                return Err(ConfigError(format!("n = {n}: need n >= 2")));
            }
        }
        let rho = get("rho").map(|v| scalar::<f64>("rho", v)).transpose()?;
        if let Some(r) = rho {
            if !(r > 0.0 && r < 1.0) {
                return Err(ConfigError(format!("rho = {r} outside (0, 1)")));
            }
        }
        let boost = get("boost")
            .map(|v| scalar("boost", v))
            .transpose()?
            .unwrap_or(DEFAULT_VEM_BOOST);
        let load = match get("load").unwrap_or("auto") {
            "auto" => LoadRule::Auto,
            "pi0" => LoadRule::Pi0,
            "mean-corrected" => LoadRule::MeanCorrected,
            other => {
                return Err(ConfigError(format!(
                    "load: `{other}` (expected auto, pi0 or mean-corrected)"
                )))
            }
        };
        let solver = match get("solver").unwrap_or("cg") {
            "cg" => SolverMethod::Cg,
            "direct" => SolverMethod::DenseDirect,
            other => {
                return Err(ConfigError(format!(
                    "solver: `{other}` (expected cg or direct)"
                )))
            }
        };
        let tol = get("tol")
            .map(|v| scalar::<f64>("tol", v))
            .transpose()?
            .unwrap_or(1e-12);
        if !(tol > 0.0) {
            return Err(ConfigError(format!("tol = {tol} must be positive")));
        }
        let max_iter = get("max_iter")
            .map(|v| scalar("max_iter", v))
            .transpose()?
            .unwrap_or(100_000);
        let check = match get("check").unwrap_or("none") {
            "none" => RateCheck::None,
            "optimal" => RateCheck::Optimal,
            "suboptimal" => RateCheck::Suboptimal,
            other => {
                return Err(ConfigError(format!(
                    "check: `{other}` (expected none, optimal or suboptimal)"
                )))
            }
        };
        let ms = match get("m") {
            Some(v) => list("m", v)?,
            None => vec![1, 2, 3, 4],
        };
        if ms.is_empty() || ms.contains(&0) {
            return Err(ConfigError(
                "m: need a non-empty list of positive values".into(),
            ));
        }
        let trials = get("trials")
            .map(|v| scalar("trials", v))
            .transpose()?
            .unwrap_or(50);
        let seed = get("seed")
            .map(|v| scalar("seed", v))
            .transpose()?
            .unwrap_or(1);
        let verbose = get("verbose")
            .map(|v| scalar("verbose", v))
            .transpose()?
            .unwrap_or(false);
        Ok(Self {
            experiment,
            ks,
            ns,
            meshes,
            rho,
            boost,
            load,
            solver,
            tol,
            max_iter,
            out: PathBuf::from(get("out").unwrap_or("out")),
            check,
            ms,
            trials,
            seed,
            verbose,
        })
    }
}

/// Merges file values with flag values (flags win) and validates.
pub fn parse_config(
    flags: &BTreeMap<String, String>,
    file: Option<&Path>,
) -> Result<RunConfig, ConfigError> {
    let mut map = match file {
        Some(path) => read_config_file(path)?,
        None => BTreeMap::new(),
    };
    for (k, v) in flags {
        map.insert(k.clone(), v.clone());
    }
    RunConfig::from_map(&map)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(pairs: &[(&str, &str)]) -> BTreeMap<String, String> {
        pairs
            .iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn defaults_from_file() {
        let map = parse_config_text("# defaults\nexperiment = test1-curved\n").unwrap();
        let c = RunConfig::from_map(&map).unwrap();
        assert_eq!(c.ks, vec![1, 2, 3]);
        assert_eq!(c.ns, vec![4, 8, 16, 32]);
        assert_eq!(c.solver, SolverMethod::Cg);
        assert_eq!(c.boost, DEFAULT_VEM_BOOST);
        assert_eq!(c.check, RateCheck::None);
    }

    #[test]
    fn order_zero_rejected() {
        let e = RunConfig::from_map(&flags(&[("experiment", "test2"), ("k", "0")])).unwrap_err();
        assert!(e.0.contains("k = 0"), "{e}");
        assert!(RunConfig::from_map(&flags(&[("experiment", "test2"), ("k", "5")])).is_err());
    }

    #[test]
    fn boost_flag() {
        let c = RunConfig::from_map(&flags(&[
            ("experiment", "test2"),
            ("n", "4,8"),
            ("boost", "3"),
        ]))
        .unwrap();
        assert_eq!(c.boost, 3);
        assert_eq!(c.ns, vec![4, 8]);
    }

    #[test]
    fn unknown_keys_rejected() {
        let e = parse_config_text("experiment = test2\ncolour = blue\n").unwrap_err();
        assert!(e.0.contains("line 2") && e.0.contains("colour"), "{e}");
        assert!(parse_config_text("just text\n").is_err());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.conf");
        std::fs::write(&path, "experiment = test2\nk = 1\nsolver = direct\n").unwrap();
        let c = parse_config(&flags(&[("k", "2,3")]), Some(&path)).unwrap();
        assert_eq!(c.experiment, ExperimentKind::Test2);
        assert_eq!(c.ks, vec![2, 3]);
        assert_eq!(c.solver, SolverMethod::DenseDirect);
    }

    #[test]
    fn bad_values() {
        for (k, v) in [
            ("solver", "lu"),
            ("tol", "-1"),
            ("rho", "2"),
            ("n", "4,x"),
            ("n", "1"),
            ("check", "maybe"),
        ] {
            assert!(
                RunConfig::from_map(&flags(&[("experiment", "test1-curved"), (k, v)])).is_err(),
                "{k}={v}"
            );
        }
    }
}
