//! Run configuration: built-in defaults, then the config file, then flags.
//!
//! The config file is flat `key = value` text. Keys carry a section prefix:
//!
//! ```text
//! # comments start with '#'
//! data.setting = c
//! data.p = 200
//! data.n = 250
//! data.seed = 7
//! data.reps = 20
//! data.signal = 3
//! data.eps = 1
//! model.alpha = 0.9
//! model.u = 1.5
//! model.a1 = 1e-5
//! model.a2 = auto
//! model.gamma = 0.2
//! chain.kernel = exact
//! chain.iters = 50000
//! chain.burnin = 10000
//! chain.thin = 1
//! sigma.mode = known
//! sigma.folds = 10
//! run.workers = 8
//! run.out = results
//! ```

use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, ValueEnum};
use qbgraph::samplers::KernelKind;
use qbgraph::simulate::HubLayout;
use qbgraph::ChainConfig;
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    /// Setting-c generator at p = 100.
    A,
    /// Modular hub network, p = 500.
    B,
    /// Sparse matrix with shifted entries, p = 1000 unless overridden.
    C,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SigmaChoice {
    Known,
    Cv,
}

impl SigmaChoice {
    pub fn label(self) -> &'static str {
        match self {
            SigmaChoice::Known => "known",
            SigmaChoice::Cv => "cv",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Exact,
    My,
}

impl From<KernelChoice> for KernelKind {
    fn from(k: KernelChoice) -> Self {
        match k {
            KernelChoice::Exact => KernelKind::ExactRJ,
            KernelChoice::My => KernelKind::MoreauYosida,
        }
    }
}

/// Flags shared by every subcommand. Each one overrides the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Config file of `section.key = value` lines.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub p: Option<usize>,
    #[arg(long, global = true)]
    pub n: Option<usize>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, value_enum)]
    pub setting: Option<Setting>,
    #[arg(long, global = true, value_enum)]
    pub sigma: Option<SigmaChoice>,
    #[arg(long, global = true, value_enum)]
    pub kernel: Option<KernelChoice>,
    #[arg(long, global = true)]
    pub iters: Option<usize>,
    #[arg(long, global = true)]
    pub burnin: Option<usize>,
    /// Worker threads; falls back to QBGRAPH_WORKERS, then the config file.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[arg(long, global = true)]
    pub reps: Option<usize>,
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub setting: Setting,
    p: Option<usize>,
    pub n: usize,
    pub seed: u64,
    pub reps: usize,
    pub signal: f64,
    pub eps: f64,
    pub alpha: f64,
    pub u: f64,
    pub a1: f64,
    /// `None` selects the data-driven default.
    pub a2: Option<f64>,
    pub gamma: f64,
    pub kernel: KernelChoice,
    pub iters: usize,
    pub burnin: usize,
    pub thin: usize,
    pub sigma: SigmaChoice,
    pub folds: usize,
    pub workers: usize,
    pub out: PathBuf,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            setting: Setting::C,
            p: None,
            n: 250,
            seed: 0,
            reps: 20,
            signal: 3.0,
            eps: 1.0,
            alpha: 0.9,
            u: 1.5,
            a1: 1e-5,
            a2: None,
            gamma: 0.2,
            kernel: KernelChoice::Exact,
            iters: 50_000,
            burnin: 10_000,
            thin: 1,
            sigma: SigmaChoice::Known,
            folds: 10,
            workers: std::thread::available_parallelism()
                .map(|n| n.get())
                .unwrap_or(1),
            out: PathBuf::from("qbgraph-out"),
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value
        .parse()
        .map_err(|e| CliError::config(format!("{key} = {value}: {e}")))
}

fn parse_enum<T: ValueEnum>(key: &str, value: &str) -> Result<T> {
    T::from_str(value, true).map_err(|e| CliError::config(format!("{key} = {value}: {e}")))
}

/// Split config text into `(key, value)` pairs, skipping blanks and comments.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or_else(|| {
            CliError::config(format!("line {}: expected key = value", lineno + 1))
        })?;
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "data.setting" => self.setting = parse_enum(key, value)?,
            "data.p" => self.p = Some(parse_value(key, value)?),
            "data.n" => self.n = parse_value(key, value)?,
            "data.seed" => self.seed = parse_value(key, value)?,
            "data.reps" => self.reps = parse_value(key, value)?,
            "data.signal" => self.signal = parse_value(key, value)?,
            "data.eps" => self.eps = parse_value(key, value)?,
            "model.alpha" => self.alpha = parse_value(key, value)?,
            "model.u" => self.u = parse_value(key, value)?,
            "model.a1" => self.a1 = parse_value(key, value)?,
            "model.a2" => {
                self.a2 = if value == "auto" {
                    None
                } else {
                    Some(parse_value(key, value)?)
                }
            }
            "model.gamma" => self.gamma = parse_value(key, value)?,
            "chain.kernel" => self.kernel = parse_enum(key, value)?,
            "chain.iters" => self.iters = parse_value(key, value)?,
            "chain.burnin" => self.burnin = parse_value(key, value)?,
            "chain.thin" => self.thin = parse_value(key, value)?,
            "sigma.mode" => self.sigma = parse_enum(key, value)?,
            "sigma.folds" => self.folds = parse_value(key, value)?,
            "run.workers" => self.workers = parse_value(key, value)?,
            "run.out" => self.out = PathBuf::from(value),
            _ => return Err(CliError::config(format!("unknown key '{key}'"))),
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        for (k, v) in parse_config_text(&text)? {
            self.set(&k, &v)?;
        }
        Ok(())
    }

    /// Defaults, then the config file, then `env_workers`, then flags.
    pub fn resolve(flags: &Overrides, env_workers: Option<&str>) -> Result<Self> {
        let mut c = RunConfig::default();
        if let Some(path) = &flags.config {
            c.apply_file(path)?;
        }
        if let Some(w) = env_workers {
            c.workers = parse_value("QBGRAPH_WORKERS", w)?;
        }
        if let Some(v) = flags.setting {
            c.setting = v;
        }
        if let Some(v) = flags.p {
            c.p = Some(v);
        }
        c.n = flags.n.unwrap_or(c.n);
        c.seed = flags.seed.unwrap_or(c.seed);
        c.sigma = flags.sigma.unwrap_or(c.sigma);
        c.kernel = flags.kernel.unwrap_or(c.kernel);
        c.iters = flags.iters.unwrap_or(c.iters);
        c.burnin = flags.burnin.unwrap_or(c.burnin);
        c.workers = flags.workers.unwrap_or(c.workers);
        c.reps = flags.reps.unwrap_or(c.reps);
        if let Some(o) = &flags.out {
            c.out = o.clone();
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        self.try_p()?;
        if self.n < 2 {
            return Err(CliError::config("n must be at least 2"));
        }
        if self.reps == 0 {
            return Err(CliError::config("reps must be positive"));
        }
        if self.workers == 0 {
            return Err(CliError::config("workers must be positive"));
        }
        self.chain(0).validate()?;
        Ok(())
    }

    fn try_p(&self) -> Result<usize> {
        let fixed = match self.setting {
            Setting::A => Some(100),
            Setting::B => Some(HubLayout::default().p()),
            Setting::C => None,
        };
        match (fixed, self.p) {
            (Some(f), Some(p)) if p != f => Err(CliError::config(format!(
                "setting {:?} has p = {f}, got {p}",
                self.setting
            ))),
            (Some(f), _) => Ok(f),
            (None, p) => Ok(p.unwrap_or(1000)),
        }
    }

    pub fn p(&self) -> usize {
        self.try_p().expect("validated")
    }

    /// Seed of the data set of replication `rep` (1-based).
    pub fn data_seed(&self, rep: usize) -> u64 {
        self.seed.wrapping_mul(1_000_003).wrapping_add(rep as u64)
    }

    pub fn chain(&self, rep: usize) -> ChainConfig {
        ChainConfig {
            n_iterations: self.iters,
            burn_in: self.burnin,
            seed: self.data_seed(rep),
            kernel: self.kernel.into(),
            thin: self.thin,
            ..ChainConfig::default()
        }
    }

    /// Everything that affects results. Worker count and output directory are
    /// left out so that outputs do not depend on them.
    pub fn echo(&self) -> Value {
        json!({
            "data": {
                "setting": self.setting,
                "p": self.p(),
                "n": self.n,
                "seed": self.seed,
                "reps": self.reps,
                "signal": self.signal,
                "eps": self.eps,
            },
            "model": {
                "alpha": self.alpha,
                "u": self.u,
                "a1": self.a1,
                "a2": self.a2.map_or(json!("auto"), |v| json!(v)),
                "gamma": self.gamma,
            },
            "chain": {
                "kernel": self.kernel,
                "iters": self.iters,
                "burnin": self.burnin,
                "thin": self.thin,
            },
            "sigma": {
                "mode": self.sigma,
                "folds": self.folds,
            },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn file_then_env_then_flags() {
        let dir = std::env::temp_dir().join(format!("qbgraph-config-{}", std::process::id()));
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("run.conf");
        std::fs::write(
            &path,
            "# test\ndata.p = 40\nchain.iters = 300 # short\nrun.workers = 3\nsigma.mode = cv\n",
        )
        .unwrap();
        let flags = Overrides {
            config: Some(path.clone()),
            iters: Some(200),
            burnin: Some(50),
            ..Default::default()
        };
        let c = RunConfig::resolve(&flags, None).unwrap();
        assert_eq!(
            (c.p(), c.iters, c.workers, c.sigma),
            (40, 200, 3, SigmaChoice::Cv)
        );
        assert_eq!(RunConfig::resolve(&flags, Some("5")).unwrap().workers, 5);
        let flags = Overrides {
            workers: Some(2),
            ..flags
        };
        assert_eq!(RunConfig::resolve(&flags, Some("5")).unwrap().workers, 2);
        std::fs::remove_dir_all(dir).unwrap();
    }

    #[test]
    fn rejects_bad_entries() {
        assert!(parse_config_text("data.p 4").is_err());
        let mut c = RunConfig::default();
        assert!(c.set("data.q", "1").is_err());
        assert!(c.set("data.p", "x").is_err());
        assert!(c.set("chain.kernel", "nuts").is_err());
        c.set("model.a2", "auto").unwrap();
        assert_eq!(c.a2, None);
        c.set("model.a2", "12.5").unwrap();
        assert_eq!(c.a2, Some(12.5));
    }

    #[test]
    fn fixed_dimension_settings() {
        let mut c = RunConfig {
            setting: Setting::A,
            ..RunConfig::default()
        };
        assert_eq!(c.p(), 100);
        c.p = Some(50);
        assert!(c.validate().is_err());
        c.setting = Setting::C;
        assert_eq!(c.p(), 50);
        c.setting = Setting::B;
        c.p = None;
        assert_eq!(c.p(), 500);
    }

    #[test]
    fn echo_omits_run_only_fields() {
        let a = RunConfig {
            workers: 1,
            out: "x".into(),
            ..RunConfig::default()
        };
        let b = RunConfig {
            workers: 8,
            out: "y".into(),
            ..RunConfig::default()
        };
        assert_eq!(a.echo(), b.echo());
        assert_eq!(a.echo()["model"]["a2"], "auto");
    }
}
