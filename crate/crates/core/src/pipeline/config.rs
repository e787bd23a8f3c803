//! Flat `key = value` configuration files.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use super::experiment::{ExperimentSpec, Imputer};
use crate::data::Method;
use crate::error::{Error, Result};
use crate::sim::{Missingness, ScenarioConfig, ScenarioKind};

pub type Config = BTreeMap<String, String>;

/// Keys understood by [`spec_from_config`], with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("scenario", "three_pollutant_corr | three_pollutant_indep | high_dim_s1 | high_dim_s2"),
    ("missing", "complete | mcar:<rate> | mar"),
    ("methods", "comma-separated subset of pca,predpca,proprpca_spline,proprpca_krige"),
    ("imputer", "none | soft_impute (pca and predpca arms only)"),
    ("q", "number of components (default 1, 2 for high_dim scenarios)"),
    ("replications", "number of replicates (default 200)"),
    ("seed", "base seed (default 1)"),
    ("workers", "worker threads, 0 = all cores"),
    ("grid_size", "side of the simulation grid (default 100)"),
    ("n_train", "training sites per replicate (default 400)"),
    ("n_test", "test sites per replicate (default 100)"),
    ("t_max", "iteration cap per component (default 500)"),
    ("output_dir", "directory for the CSV outputs"),
];

/// Parses `key = value` lines; `#` starts a comment, blank lines are skipped.
pub fn parse_config(text: &str) -> Result<Config> {
    let mut out = Config::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::InvalidConfig(format!("line {}: expected key = value", n + 1)))?;
        let k = k.trim().to_string();
        if !KEYS.iter().any(|(key, _)| *key == k) {
            return Err(Error::InvalidConfig(format!("line {}: unknown key `{k}`", n + 1)));
        }
        out.insert(k, v.trim().to_string());
    }
    Ok(out)
}

pub fn read_config(path: &Path) -> Result<Config> {
    parse_config(&std::fs::read_to_string(path)?)
}

fn get<T: FromStr>(cfg: &Config, key: &str, default: T) -> Result<T> {
    match cfg.get(key) {
        None => Ok(default),
        Some(s) => s
            .parse()
            .map_err(|_| Error::InvalidConfig(format!("`{key}`: cannot parse `{s}`"))),
    }
}

/// Builds and validates an experiment from configuration keys.
pub fn spec_from_config(cfg: &Config) -> Result<ExperimentSpec> {
    let kind: ScenarioKind = cfg
        .get("scenario")
        .ok_or_else(|| Error::InvalidConfig("`scenario` is required".into()))?
        .parse()?;
    let missing: Missingness = match cfg.get("missing") {
        Some(s) => s.parse()?,
        None => Missingness::Complete,
    };
    let methods: Vec<Method> = match cfg.get("methods") {
        Some(s) => s.split(',').map(str::parse).collect::<Result<_>>()?,
        None => Method::ALL.to_vec(),
    };
    let imputer: Imputer = match cfg.get("imputer") {
        Some(s) => s.parse()?,
        None => Imputer::SoftImpute,
    };
    let seed: u64 = get(cfg, "seed", 1)?;
    let mut scenario = ScenarioConfig::new(kind, missing, seed);
    scenario.grid_size = get(cfg, "grid_size", scenario.grid_size)?;
    scenario.n_train = get(cfg, "n_train", scenario.n_train)?;
    scenario.n_test = get(cfg, "n_test", scenario.n_test)?;
    let q_default = if kind.is_high_dim() { 2 } else { 1 };
    let mut spec = ExperimentSpec::new(
        scenario,
        methods,
        get(cfg, "q", q_default)?,
        get(cfg, "replications", 200)?,
    );
    spec.imputer = imputer;
    spec.workers = get(cfg, "workers", 0)?;
    spec.t_max = get(cfg, "t_max", spec.t_max)?;
    spec.validate()?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_overrides() {
        let mut cfg = parse_config(
            "# demo\nscenario = three_pollutant_corr\nmissing=mcar:0.35\nmethods = pca, predpca\n\nreplications = 3 # short\n",
        )
        .unwrap();
        let spec = spec_from_config(&cfg).unwrap();
        assert_eq!(spec.scenario.missing, Missingness::Mcar(0.35));
        assert_eq!(spec.methods, vec![Method::Pca, Method::PredPca]);
        assert_eq!((spec.q, spec.replications), (1, 3));
        cfg.insert("replications".into(), "0".into());
        assert!(spec_from_config(&cfg).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(parse_config("scenario three").is_err());
        assert!(parse_config("colour = blue").is_err());
        let cfg = parse_config("scenario = three_pollutant_corr\nmissing = mar\nimputer = none").unwrap();
        assert!(spec_from_config(&cfg).is_err());
    }
}
