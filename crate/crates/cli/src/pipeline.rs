//! Subcommand implementations. All artifacts live in the output directory:
//!
//! | file                         | written by | contents                                  |
//! |------------------------------|------------|-------------------------------------------|
//! | `truth.csv`                  | simulate   | true precision matrix (matrix CSV)        |
//! | `data_rep{r}.csv`            | simulate   | data of replication `r` (data CSV)        |
//! | `fit_{mode}_rep{r}.json`     | fit        | chain summaries and graph estimate        |
//! | `estimate_{mode}_rep{r}.csv` | fit        | point estimate (matrix CSV)               |
//! | `metrics_{mode}.csv`         | evaluate   | one row per replication plus a mean row   |
//! | `theory_{mode}.json`         | diagnose   | theory report                             |
//! | `geweke_{mode}.csv`          | diagnose   | Geweke z-score of every chain             |
//! | `intervals_{mode}.svg`       | plot       | interval bars of replication 1            |

use std::path::{Path, PathBuf};
use std::time::Instant;

use qbgraph::diagnostics::{metrics, theory_quantities, Metrics};
use qbgraph::model::default_a2;
use qbgraph::sigma::{resolve_sigma2, SigmaSpec};
use qbgraph::simulate::{sample_gaussian, GeneratorKind, GeneratorSpec, HubLayout};
use qbgraph::{estimate_graph, fit_all, GraphEstimate, Hyperparameters, PrecisionMatrix};
use serde_json::{json, Value};

use crate::config::{RunConfig, Setting, SigmaChoice};
use crate::error::{CliError, Result};
use crate::io;
use crate::svg::render_interval_svg;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::Subcommand)]
pub enum Command {
    /// Generate the true precision matrix and one data set per replication.
    Simulate,
    /// Fit every replication and write summaries and estimates.
    Fit,
    /// Compare the estimates with the truth.
    Evaluate,
    /// Theory report and Geweke table.
    Diagnose,
    /// Interval bars for replication 1.
    Plot,
    /// simulate, fit, evaluate, diagnose and plot in sequence.
    All,
}

pub struct Paths(PathBuf);

impl Paths {
    pub fn new(out: &Path) -> Self {
        Paths(out.to_path_buf())
    }

    pub fn truth(&self) -> PathBuf {
        self.0.join("truth.csv")
    }

    pub fn data(&self, rep: usize) -> PathBuf {
        self.0.join(format!("data_rep{rep}.csv"))
    }

    pub fn fit(&self, mode: SigmaChoice, rep: usize) -> PathBuf {
        self.0.join(format!("fit_{}_rep{rep}.json", mode.label()))
    }

    pub fn estimate(&self, mode: SigmaChoice, rep: usize) -> PathBuf {
        self.0
            .join(format!("estimate_{}_rep{rep}.csv", mode.label()))
    }

    pub fn metrics(&self, mode: SigmaChoice) -> PathBuf {
        self.0.join(format!("metrics_{}.csv", mode.label()))
    }

    pub fn theory(&self, mode: SigmaChoice) -> PathBuf {
        self.0.join(format!("theory_{}.json", mode.label()))
    }

    pub fn geweke(&self, mode: SigmaChoice) -> PathBuf {
        self.0.join(format!("geweke_{}.csv", mode.label()))
    }

    pub fn plot(&self, mode: SigmaChoice) -> PathBuf {
        self.0.join(format!("intervals_{}.svg", mode.label()))
    }
}

pub fn run(command: Command, cfg: &RunConfig) -> Result<()> {
    match command {
        Command::Simulate => simulate(cfg),
        Command::Fit => fit(cfg),
        Command::Evaluate => evaluate(cfg),
        Command::Diagnose => diagnose(cfg),
        Command::Plot => plot(cfg),
        Command::All => {
            simulate(cfg)?;
            fit(cfg)?;
            evaluate(cfg)?;
            match diagnose(cfg) {
                // large graphs exceed the eigenvalue enumeration budget; the
                // report records the error and the pipeline carries on
                Err(e) if e.kind == "budget_exceeded" => eprintln!("diagnose: {e}"),
                other => other?,
            }
            plot(cfg)
        }
    }
}

pub fn generate_truth(cfg: &RunConfig) -> Result<PrecisionMatrix> {
    let kind = match cfg.setting {
        Setting::A | Setting::C => GeneratorKind::SettingC,
        Setting::B => GeneratorKind::HubNetwork,
    };
    let spec = GeneratorSpec {
        kind,
        p: cfg.p(),
        seed: cfg.seed,
        signal: cfg.signal,
        eps: cfg.eps,
        hub: HubLayout::default(),
    };
    Ok(spec.generate()?)
}

pub fn simulate(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    let echo = cfg.echo();
    let truth = generate_truth(cfg)?;
    io::write_matrix_csv(&paths.truth(), truth.entries(), &echo)?;
    for rep in 1..=cfg.reps {
        let data = sample_gaussian(&truth, cfg.n, cfg.data_seed(rep))?;
        let mut e = echo.clone();
        e["replication"] = json!(rep);
        e["data_seed"] = json!(cfg.data_seed(rep));
        io::write_data_csv(&paths.data(rep), &data, &e)?;
    }
    Ok(())
}

fn read_truth(paths: &Paths, p: usize) -> Result<PrecisionMatrix> {
    let truth = io::read_matrix_csv(&paths.truth())?;
    if truth.p() != p {
        return Err(CliError::config(format!(
            "truth.csv has p = {}, configuration has p = {p}",
            truth.p()
        )));
    }
    Ok(truth)
}

fn known_sigma2(truth: &PrecisionMatrix) -> Vec<f64> {
    truth.diagonal().iter().map(|d| 1.0 / d).collect()
}

pub fn fit(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    let echo = cfg.echo();
    for rep in 1..=cfg.reps {
        let start = Instant::now();
        let data = io::read_data_csv(&paths.data(rep))?;
        if data.p() != cfg.p() {
            return Err(CliError::config(format!(
                "data has p = {}, configuration has p = {}",
                data.p(),
                cfg.p()
            )));
        }
        let sigma2 = match cfg.sigma {
            SigmaChoice::Known => known_sigma2(&read_truth(&paths, cfg.p())?),
            SigmaChoice::Cv => {
                let spec = SigmaSpec {
                    folds: cfg.folds,
                    ..SigmaSpec::cv(cfg.data_seed(rep))
                };
                resolve_sigma2(&data, &spec, cfg.workers)?
            }
        };
        let a2 = match cfg.a2 {
            Some(v) => v,
            None => default_a2(&data, &sigma2)?,
        };
        let hyper = Hyperparameters {
            alpha: cfg.alpha,
            u: cfg.u,
            a1: cfg.a1,
            a2,
            sigma2: sigma2.clone(),
            gamma: cfg.gamma,
        };
        hyper.validate(data.p())?;
        let result = fit_all(&data, &hyper, &cfg.chain(rep), cfg.workers)?;
        let estimate = estimate_graph(&result.summaries, &sigma2)?;
        let doc = json!({
            "config": echo,
            "replication": rep,
            "mode": cfg.sigma.label(),
            "hyperparameters": hyper,
            "fit": result,
            "estimate": estimate,
        });
        io::write_json(&paths.fit(cfg.sigma, rep), &doc)?;
        let mut e = echo.clone();
        e["replication"] = json!(rep);
        io::write_matrix_csv(
            &paths.estimate(cfg.sigma, rep),
            estimate.theta_hat.entries(),
            &e,
        )?;
        eprintln!(
            "fit {} {rep}/{}: {:.1}s",
            cfg.sigma.label(),
            cfg.reps,
            start.elapsed().as_secs_f64()
        );
    }
    Ok(())
}

fn mean_defined(values: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let v: Vec<f64> = values.flatten().collect();
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

pub fn metrics_rows(mode: &str, per_rep: &[Metrics]) -> Vec<String> {
    let row = |label: String, e: Option<f64>, s: Option<f64>, p: Option<f64>| {
        format!(
            "{label},{mode},{},{},{}",
            io::fmt_opt(e),
            io::fmt_opt(s),
            io::fmt_opt(p)
        )
    };
    let mut rows: Vec<String> = per_rep
        .iter()
        .enumerate()
        .map(|(r, m)| {
            row(
                (r + 1).to_string(),
                Some(m.rel_error),
                m.sensitivity,
                m.precision,
            )
        })
        .collect();
    rows.push(row(
        "mean".to_string(),
        mean_defined(per_rep.iter().map(|m| Some(m.rel_error))),
        mean_defined(per_rep.iter().map(|m| m.sensitivity)),
        mean_defined(per_rep.iter().map(|m| m.precision)),
    ));
    rows
}

pub fn evaluate(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    let truth = read_truth(&paths, cfg.p())?;
    let per_rep = (1..=cfg.reps)
        .map(|rep| {
            Ok(metrics(
                &io::read_matrix_csv(&paths.estimate(cfg.sigma, rep))?,
                &truth,
            )?)
        })
        .collect::<Result<Vec<_>>>()?;
    let rows = std::iter::once("replication,mode,rel_error,sensitivity,precision".to_string())
        .chain(metrics_rows(cfg.sigma.label(), &per_rep));
    io::write_lines(
        &paths.metrics(cfg.sigma),
        &io::header_line(&cfg.echo()),
        rows,
    )
}

fn read_fit(paths: &Paths, mode: SigmaChoice, rep: usize) -> Result<Value> {
    io::read_json(&paths.fit(mode, rep))
}

pub fn diagnose(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    let echo = cfg.echo();
    let truth = read_truth(&paths, cfg.p())?;

    let mut rows = vec!["replication,mode,column,z".to_string()];
    let mut first_sigma2 = None;
    for rep in 1..=cfg.reps {
        let path = paths.fit(cfg.sigma, rep);
        if !path.exists() {
            continue;
        }
        let doc = read_fit(&paths, cfg.sigma, rep)?;
        let fit: qbgraph::FitResult =
            serde_json::from_value(doc["fit"].clone()).map_err(|e| CliError::parse(&path, e))?;
        for s in &fit.summaries {
            rows.push(format!(
                "{rep},{},{},{}",
                cfg.sigma.label(),
                s.column,
                io::fmt_opt(s.geweke_z)
            ));
        }
        first_sigma2.get_or_insert(fit.sigma2_used);
    }
    io::write_lines(&paths.geweke(cfg.sigma), &io::header_line(&echo), rows)?;

    let sigma2 = match cfg.sigma {
        SigmaChoice::Known => known_sigma2(&truth),
        SigmaChoice::Cv => first_sigma2.ok_or_else(|| {
            CliError::new("missing_input", "no fitted variances found; run fit first")
        })?,
    };
    let (body, outcome) = match theory_quantities(&truth, &sigma2, cfg.n, cfg.u) {
        Ok(report) => (
            json!({ "config": echo, "mode": cfg.sigma.label(), "report": report }),
            Ok(()),
        ),
        Err(e) => {
            let err = CliError::from(e);
            (
                json!({ "config": echo, "mode": cfg.sigma.label(), "report": null, "error": { "kind": err.kind, "message": err.message } }),
                Err(err),
            )
        }
    };
    io::write_json(&paths.theory(cfg.sigma), &body)?;
    outcome
}

pub fn plot(cfg: &RunConfig) -> Result<()> {
    let paths = Paths::new(&cfg.out);
    let path = paths.fit(cfg.sigma, 1);
    let doc = read_fit(&paths, cfg.sigma, 1)?;
    let estimate: GraphEstimate =
        serde_json::from_value(doc["estimate"].clone()).map_err(|e| CliError::parse(&path, e))?;
    let truth = if paths.truth().exists() {
        Some(read_truth(&paths, cfg.p())?)
    } else {
        None
    };
    let comment = format!("qbgraph {}", cfg.echo());
    render_interval_svg(
        &estimate,
        truth.as_ref(),
        Some(&comment),
        &paths.plot(cfg.sigma),
    )
}
