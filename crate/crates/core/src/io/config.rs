//! Flat `key = value` experiment files. Unknown keys are an error.
//!
//! ```text
//! # comment
//! example = example1
//! engine = enkf
//! ntheta = 300
//! prior.alpha = truncnormal(0.6, 0.3, 0, inf)
//! prior.phi = fixed
//! fixed.phi = 0
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::enkf::LikelihoodKind;
use crate::error::{Error, Result};
use crate::model::{example, Param};
use crate::products::{DEFAULT_DRAWS, DEFAULT_HORIZON};
use crate::smc2::{Problem, Smc2Config};
use crate::stochastic::Marginal;

#[derive(Clone, Debug)]
pub struct ExperimentConfig {
    /// Example whose model, prior and truth are the starting point.
    pub example: String,
    /// Incidence CSV; the example is simulated when absent.
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Number of observations to use; the whole series when absent.
    pub days: Option<usize>,
    pub aggregate_weekly: bool,
    pub problem: Problem,
    pub smc2: Smc2Config,
    /// Parameter draws for the state bands.
    pub draws: usize,
    pub horizon: usize,
    pub diffusive_beta: bool,
    /// Discount of the Liu–West kernel.
    pub delta: f64,
    /// Worker threads; rayon's default when absent.
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn for_example(name: &str) -> Result<Self> {
        let ex = example(name)?;
        Ok(Self {
            example: ex.name.to_string(),
            data: None,
            out: None,
            seed: 1,
            days: None,
            aggregate_weekly: false,
            problem: Problem {
                cfg: ex.cfg,
                prior: ex.prior,
                init: ex.init_spec,
            },
            smc2: Smc2Config::default(),
            draws: DEFAULT_DRAWS,
            horizon: DEFAULT_HORIZON,
            diffusive_beta: false,
            delta: 0.99,
            threads: None,
        })
    }

    /// Builds a config from `(key, value)` pairs applied in order. An
    /// `example` key, wherever it appears, selects the starting point.
    pub fn from_pairs<'a>(pairs: impl IntoIterator<Item = (&'a str, &'a str)>) -> Result<Self> {
        let pairs: Vec<(&str, &str)> = pairs.into_iter().collect();
        let base = pairs
            .iter()
            .rev()
            .find(|(k, _)| *k == "example")
            .map(|(_, v)| *v)
            .unwrap_or("example1");
        let mut cfg = Self::for_example(base)?;
        for (k, v) in pairs {
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    pub fn parse(text: &str, origin: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: origin.to_string(),
                line: n + 1,
                msg: format!("expected key = value, got '{line}'"),
            })?;
            pairs.push((n + 1, k.trim(), v.trim()));
        }
        let base = pairs
            .iter()
            .rev()
            .find(|(_, k, _)| *k == "example")
            .map(|(_, _, v)| *v)
            .unwrap_or("example1");
        let mut cfg = Self::for_example(base)?;
        for (line, k, v) in pairs {
            cfg.set(k, v).map_err(|e| Error::Parse {
                path: origin.to_string(),
                line,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg = Self::parse(&text, &path.display().to_string())?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = |what: &str| Error::Config(format!("{key}: invalid {what} '{value}'"));
        let num = || value.parse::<f64>().map_err(|_| bad("number"));
        let count = || value.parse::<usize>().map_err(|_| bad("count"));
        let flag = || match value {
            "true" | "1" | "yes" => Ok(true),
            "false" | "0" | "no" => Ok(false),
            _ => Err(bad("boolean")),
        };
        match key {
            "example" => {
                example(value)?;
                self.example = value.to_string();
            }
            "data" => self.data = (!value.is_empty()).then(|| PathBuf::from(value)),
            "out" => self.out = (!value.is_empty()).then(|| PathBuf::from(value)),
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "days" => self.days = if value.is_empty() { None } else { Some(count()?) },
            "aggregate_weekly" => self.aggregate_weekly = flag()?,
            "engine" => self.smc2.engine = value.parse()?,
            "ntheta" => self.smc2.n_theta = count()?,
            "nx" => self.smc2.n_x = count()?,
            "moves" => self.smc2.moves = count()?,
            "ess_threshold" => {
                self.smc2.ess_threshold = if value.is_empty() { None } else { Some(num()?) }
            }
            "proposal_scale" => self.smc2.proposal_scale = num()?,
            "eta" => self.smc2.enkf.eta = num()?,
            "likelihood" => self.smc2.enkf.likelihood = value.parse::<LikelihoodKind>()?,
            "obs" => self.problem.cfg.obs_model = value.parse()?,
            "rho" => self.problem.cfg.rho = num()?,
            "population" => self.problem.cfg.population = num()?,
            "dt" => self.problem.cfg.dt = num()?,
            "substeps" => self.problem.cfg.n_substeps = count()?,
            "draws" => self.draws = count()?,
            "horizon" => self.horizon = count()?,
            "diffusive_beta" => self.diffusive_beta = flag()?,
            "delta" => self.delta = num()?,
            "threads" => self.threads = if value.is_empty() { None } else { Some(count()?) },
            // Free parameters in sampling order, a permutation of the free set.
            "prior_order" => {
                let order: Vec<Param> = value
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| s.trim().parse())
                    .collect::<Result<_>>()?;
                let marginals = &self.problem.prior.marginals;
                if order.len() != marginals.len() || !marginals.iter().all(|(p, _)| order.contains(p)) {
                    return Err(bad("parameter order"));
                }
                let mut sorted = marginals.clone();
                sorted.sort_by_key(|(p, _)| order.iter().position(|q| q == p));
                self.problem.prior.marginals = sorted;
            }
            "init.s0" => self.problem.init.s0 = parse_marginal(value)?,
            "init.i0" => self.problem.init.i0 = parse_marginal(value)?,
            "init.e0" => self.problem.init.e0 = num()?,
            "init.r0" => self.problem.init.r0 = num()?,
            _ => {
                if let Some(name) = key.strip_prefix("prior.") {
                    let p: Param = name.parse()?;
                    let marginals = &mut self.problem.prior.marginals;
                    let slot = marginals.iter().position(|(q, _)| *q == p);
                    match (slot, value) {
                        (Some(k), "fixed") => {
                            marginals.remove(k);
                        }
                        (None, "fixed") => {}
                        (Some(k), v) => marginals[k].1 = parse_marginal(v)?,
                        (None, v) => marginals.push((p, parse_marginal(v)?)),
                    }
                } else if let Some(name) = key.strip_prefix("fixed.") {
                    let p: Param = name.parse()?;
                    self.problem.prior.fixed.set(p, num()?);
                } else {
                    return Err(Error::Config(format!("unknown key '{key}'")));
                }
            }
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.problem.validate()?;
        self.smc2.validate()?;
        self.problem
            .prior
            .fixed
            .validate()
            .map_err(|e| Error::Config(format!("fixed parameter values: {e}")))?;
        if self.draws == 0 {
            return Err(Error::Config("draws must be at least 1".into()));
        }
        if self.horizon == 0 {
            return Err(Error::Config("horizon must be at least 1".into()));
        }
        if !(self.delta > 0.0 && self.delta <= 1.0) {
            return Err(Error::Config(format!("delta must lie in (0, 1], got {}", self.delta)));
        }
        if self.days == Some(0) {
            return Err(Error::Config("days must be at least 1".into()));
        }
        if let Some(path) = &self.data {
            if !path.is_file() {
                return Err(Error::Config(format!("data file {} does not exist", path.display())));
            }
        }
        Ok(())
    }

    /// Every key with its current value; feeding these back through
    /// [`ExperimentConfig::from_pairs`] rebuilds this config exactly.
    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        let path = |p: &Option<PathBuf>| p.as_ref().map(|p| p.display().to_string()).unwrap_or_default();
        put("example", self.example.clone());
        put("data", path(&self.data));
        put("out", path(&self.out));
        put("seed", self.seed.to_string());
        put("days", self.days.map(|d| d.to_string()).unwrap_or_default());
        put("aggregate_weekly", self.aggregate_weekly.to_string());
        put("engine", self.smc2.engine.name().to_string());
        put("ntheta", self.smc2.n_theta.to_string());
        put("nx", self.smc2.n_x.to_string());
        put("moves", self.smc2.moves.to_string());
        put(
            "ess_threshold",
            self.smc2.ess_threshold.map(|t| t.to_string()).unwrap_or_default(),
        );
        put("proposal_scale", self.smc2.proposal_scale.to_string());
        put("eta", self.smc2.enkf.eta.to_string());
        put("likelihood", self.smc2.enkf.likelihood.name().to_string());
        put("obs", self.problem.cfg.obs_model.name().to_string());
        put("rho", self.problem.cfg.rho.to_string());
        put("population", self.problem.cfg.population.to_string());
        put("dt", self.problem.cfg.dt.to_string());
        put("substeps", self.problem.cfg.n_substeps.to_string());
        put("draws", self.draws.to_string());
        put("horizon", self.horizon.to_string());
        put("diffusive_beta", self.diffusive_beta.to_string());
        put("delta", self.delta.to_string());
        put("threads", self.threads.map(|t| t.to_string()).unwrap_or_default());
        put("init.s0", format_marginal(&self.problem.init.s0));
        put("init.i0", format_marginal(&self.problem.init.i0));
        put("init.e0", self.problem.init.e0.to_string());
        put("init.r0", self.problem.init.r0.to_string());
        for p in Param::ALL {
            put(&format!("fixed.{p}"), self.problem.prior.fixed.get(p).to_string());
            let prior = self
                .problem
                .prior
                .marginal(p)
                .map(format_marginal)
                .unwrap_or_else(|| "fixed".to_string());
            put(&format!("prior.{p}"), prior);
        }
        let order: Vec<&str> = self.problem.prior.free_params().into_iter().map(Param::name).collect();
        put("prior_order", order.join(","));
        m
    }
}

/// `normal(mean, sd)`, `truncnormal(mean, sd, lower, upper)` or
/// `uniform(lower, upper)`.
pub fn parse_marginal(s: &str) -> Result<Marginal> {
    let bad = || Error::Config(format!("cannot parse distribution '{s}'"));
    let (name, rest) = s.trim().split_once('(').ok_or_else(bad)?;
    let args = rest.strip_suffix(')').ok_or_else(bad)?;
    let v: Vec<f64> = args
        .split(',')
        .map(|a| a.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    let m = match (name.trim(), v.as_slice()) {
        ("normal", &[mean, sd]) => Marginal::Normal { mean, sd },
        ("truncnormal", &[mean, sd, lower, upper]) => Marginal::TruncNormal { mean, sd, lower, upper },
        ("uniform", &[lower, upper]) => Marginal::Uniform { lower, upper },
        _ => return Err(bad()),
    };
    m.validate()?;
    Ok(m)
}

pub fn format_marginal(m: &Marginal) -> String {
    match *m {
        Marginal::Normal { mean, sd } => format!("normal({mean}, {sd})"),
        Marginal::TruncNormal { mean, sd, lower, upper } => {
            format!("truncnormal({mean}, {sd}, {lower}, {upper})")
        }
        Marginal::Uniform { lower, upper } => format!("uniform({lower}, {upper})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_through_pairs() {
        let text = "engine = bpf\nntheta=20 # small\nprior.phi = uniform(0, 0.1)\nobs = negbin\nprior.beta0 = fixed\n";
        let cfg = ExperimentConfig::parse(text, "test").unwrap();
        assert_eq!(cfg.smc2.n_theta, 20);
        assert!(cfg.problem.prior.is_free(Param::Phi));
        assert!(!cfg.problem.prior.is_free(Param::Beta0));
        let pairs = cfg.to_pairs();
        let again = ExperimentConfig::from_pairs(pairs.iter().map(|(k, v)| (k.as_str(), v.as_str()))).unwrap();
        assert_eq!(again.to_pairs(), pairs);
        assert_eq!(again.problem.prior, cfg.problem.prior);
        assert_eq!(again.smc2, cfg.smc2);
        // Keys come back in sorted order; the sampling order survives.
        let order = cfg.problem.prior.free_params();
        assert_eq!(again.problem.prior.free_params(), order);
    }

    #[test]
    fn unknown_key_is_rejected_with_line() {
        let err = ExperimentConfig::parse("ntheta = 10\nn_theta = 10\n", "exp.cfg").unwrap_err();
        match err {
            Error::Parse { line, msg, .. } => {
                assert_eq!(line, 2);
                assert!(msg.contains("unknown key"));
            }
            other => panic!("unexpected {other}"),
        }
        assert!(ExperimentConfig::parse("ntheta 10", "x").is_err());
        assert!(ExperimentConfig::parse("rho = abc", "x").is_err());
    }

    #[test]
    fn validation_catches_ranges() {
        let mut cfg = ExperimentConfig::for_example("example2").unwrap();
        assert!(cfg.validate().is_ok());
        cfg.set("rho", "1.5").unwrap();
        assert!(cfg.validate().is_err());
        let mut cfg = ExperimentConfig::for_example("example1").unwrap();
        cfg.set("data", "/definitely/not/here.csv").unwrap();
        assert!(cfg.validate().is_err());
        assert!(parse_marginal("uniform(1, 0)").is_err());
        assert!(parse_marginal("gamma(1, 2)").is_err());
    }
}
