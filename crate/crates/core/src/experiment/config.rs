use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use crate::constraints::ConstraintSpec;
use crate::error::{Error, Result};
use crate::solver::SolverConfig;
use crate::tensor::check_dims;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_key_values(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`, got `{line}`", n + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", n + 1)));
        }
        out.push((k.to_string(), v.to_string()));
    }
    Ok(out)
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value `{value}` for {key}")))
}

/// Parses extents written as `50 50 50`, `50,50,50` or `50x50x50`.
pub fn parse_dims(value: &str) -> Result<Vec<usize>> {
    let dims = value
        .split(|c: char| c == 'x' || c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| parse("dims", s))
        .collect::<Result<Vec<usize>>>()?;
    check_dims(&dims)?;
    Ok(dims)
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Config(format!("invalid value `{value}` for {key}"))),
    }
}

/// Sets one solver key. Returns false if `key` is not a solver key.
pub fn apply_solver_key(cfg: &mut SolverConfig, key: &str, value: &str) -> Result<bool> {
    match key {
        "eps_abs" => cfg.eps_abs = parse(key, value)?,
        "eps_rel" => cfg.eps_rel = parse(key, value)?,
        "mu" => cfg.mu = parse(key, value)?,
        "tau_incr" => cfg.tau_incr = parse(key, value)?,
        "tau_decr" => cfg.tau_decr = parse(key, value)?,
        "rho_init" => cfg.rho_init = parse(key, value)?,
        "n_max" => cfg.n_max = parse(key, value)?,
        "max_restarts" => cfg.max_restarts = parse(key, value)?,
        "inner_sweeps" => cfg.inner_sweeps = parse(key, value)?,
        "seed" => cfg.seed = parse(key, value)?,
        "adapt_penalties" => cfg.adapt_penalties = parse_bool(key, value)?,
        "record_rfe" => cfg.record_rfe = parse_bool(key, value)?,
        _ => return Ok(false),
    }
    Ok(true)
}

/// Which solver a batch runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EngineChoice {
    #[default]
    Centralized,
    /// Block engine on an `n × n` mesh.
    Mesh(usize),
    /// Unconstrained alternating least squares.
    Als,
}

impl fmt::Display for EngineChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Centralized => f.write_str("centralized"),
            Self::Mesh(n) => write!(f, "mesh:{n}"),
            Self::Als => f.write_str("als"),
        }
    }
}

impl FromStr for EngineChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "centralized" => Ok(Self::Centralized),
            "als" => Ok(Self::Als),
            other => {
                let n = other
                    .strip_prefix("mesh:")
                    .and_then(|n| n.parse::<usize>().ok())
                    .filter(|&n| n >= 1)
                    .ok_or_else(|| Error::Config(format!("unknown engine `{s}`, expected centralized, als or mesh:N")))?;
                Ok(Self::Mesh(n))
            }
        }
    }
}

/// One batch of synthetic factorizations.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub dims: Vec<usize>,
    /// Rank of the generating model.
    pub rank: usize,
    /// Rank of the fitted model.
    pub fit_rank: usize,
    pub sigma2: f64,
    pub realizations: usize,
    pub solver: SolverConfig,
    pub constraints: Vec<ConstraintSpec>,
    pub engine: EngineChoice,
    /// Also write per-iteration RFE trajectories.
    pub trajectories: bool,
    pub output: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            dims: vec![50, 50, 50],
            rank: 3,
            fit_rank: 3,
            sigma2: 0.0,
            realizations: 1,
            solver: SolverConfig::default(),
            constraints: vec![ConstraintSpec::NonNegative; 3],
            engine: EngineChoice::Centralized,
            trajectories: false,
            output: None,
        }
    }
}

impl ExperimentSpec {
    /// Reads a key-value config. Unset keys keep their defaults; `fit_rank`
    /// defaults to `rank` and constraints default to non-negativity.
    pub fn from_config(text: &str) -> Result<Self> {
        let mut spec = Self::default();
        let mut fit_rank = None;
        let mut constraint_all = None;
        let mut per_mode: [Option<ConstraintSpec>; 4] = [None; 4];
        for (key, value) in parse_key_values(text)? {
            if apply_solver_key(&mut spec.solver, &key, &value)? {
                continue;
            }
            match key.as_str() {
                "dims" => spec.dims = parse_dims(&value)?,
                "rank" => spec.rank = parse(&key, &value)?,
                "fit_rank" => fit_rank = Some(parse(&key, &value)?),
                "sigma2" => spec.sigma2 = parse(&key, &value)?,
                "realizations" => spec.realizations = parse(&key, &value)?,
                "engine" => spec.engine = value.parse()?,
                "trajectories" => spec.trajectories = parse_bool(&key, &value)?,
                "output" => spec.output = Some(PathBuf::from(value)),
                "constraint" => constraint_all = Some(value.parse()?),
                _ => {
                    let slot = key
                        .strip_prefix("constraint.mode")
                        .and_then(|m| m.parse::<usize>().ok())
                        .filter(|m| (1..=4).contains(m))
                        .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
                    per_mode[slot - 1] = Some(value.parse()?);
                }
            }
        }
        spec.fit_rank = fit_rank.unwrap_or(spec.rank);
        let order = spec.dims.len();
        if per_mode[order..].iter().any(Option::is_some) {
            return Err(Error::Config(format!("constraint given for a mode beyond order {order}")));
        }
        let all = constraint_all.unwrap_or_default();
        spec.constraints = per_mode[..order].iter().map(|c| c.unwrap_or(all)).collect();
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        check_dims(&self.dims)?;
        self.solver.validate()?;
        if self.realizations == 0 {
            return Err(Error::Config("realizations must be at least 1".into()));
        }
        if self.rank == 0 || self.fit_rank == 0 {
            return Err(Error::Config("ranks must be at least 1".into()));
        }
        if !(self.sigma2 >= 0.0) || !self.sigma2.is_finite() {
            return Err(Error::Config(format!("sigma2 must be non-negative, got {}", self.sigma2)));
        }
        if self.constraints.len() != self.dims.len() {
            return Err(Error::Config("one constraint per mode required".into()));
        }
        for (c, &d) in self.constraints.iter().zip(&self.dims) {
            c.validate_for(d, self.fit_rank)?;
        }
        if let EngineChoice::Mesh(n) = self.engine {
            if self.dims.iter().any(|&d| d < n) {
                return Err(Error::Config(format!("mesh:{n} needs every extent to be at least {n}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_values_and_comments() {
        let kv = parse_key_values("# header\n a = 1 \n\nb=x y # trailing\n").unwrap();
        assert_eq!(kv, [("a".into(), "1".into()), ("b".into(), "x y".into())]);
        assert!(parse_key_values("novalue\n").is_err());
        assert!(parse_key_values("a =\n").is_err());
    }

    #[test]
    fn full_config() {
        let text = "dims = 40x40x40\nrank = 8\nfit_rank = 7\nsigma2 = 1e-2\nrealizations = 5\n\
                    eps_abs = 1e-5\nmu = 10\nseed = 42\nconstraint.mode2 = nonneg_card:30\n\
                    engine = mesh:2\ntrajectories = true\n";
        let s = ExperimentSpec::from_config(text).unwrap();
        assert_eq!(s.dims, [40, 40, 40]);
        assert_eq!((s.rank, s.fit_rank, s.realizations), (8, 7, 5));
        assert_eq!(s.sigma2, 1e-2);
        assert_eq!((s.solver.eps_abs, s.solver.mu, s.solver.seed), (1e-5, 10.0, 42));
        assert_eq!(
            s.constraints,
            [ConstraintSpec::NonNegative, ConstraintSpec::NonNegativeCardinality(30), ConstraintSpec::NonNegative]
        );
        assert_eq!(s.engine, EngineChoice::Mesh(2));
        assert!(s.trajectories);
    }

    #[test]
    fn defaults_and_errors() {
        let s = ExperimentSpec::from_config("rank = 4\nconstraint = row_stochastic").unwrap();
        assert_eq!(s.fit_rank, 4);
        assert_eq!(s.constraints, [ConstraintSpec::RowStochastic; 3]);
        for bad in [
            "colour = red",
            "rank = -1",
            "realizations = 0",
            "sigma2 = -1",
            "dims = 4 4",
            "constraint.mode4 = nonneg",
            "constraint.mode0 = nonneg",
            "engine = mesh:0",
            "dims = 2 2 2\nengine = mesh:3",
            "mu = 1",
            "trajectories = maybe",
        ] {
            assert!(ExperimentSpec::from_config(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn engine_names_round_trip() {
        for e in [EngineChoice::Centralized, EngineChoice::Mesh(3), EngineChoice::Als] {
            assert_eq!(e.to_string().parse::<EngineChoice>().unwrap(), e);
        }
    }
}
