//! Output records and file writing.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use circles_core::eval::mean_stderr;
use circles_core::{CircleAssignment, EgoNetwork, FeatureScheme, FitResult, ModelParams, NodeId};
use serde::{Deserialize, Serialize};
use tempfile::NamedTempFile;

use crate::CliError;

/// Fit output, as described by `schema/fit-output.schema.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FitOutput {
    pub k: usize,
    pub circles: Vec<Vec<NodeId>>,
    pub theta: Vec<Vec<f64>>,
    pub alpha: Vec<f64>,
    pub log_likelihood: f64,
    pub bic: Option<f64>,
    pub converged: bool,
    pub iterations: usize,
    pub features: FeatureScheme,
    #[serde(default)]
    pub directed: bool,
}

impl FitOutput {
    /// Drops empty circles.
    pub fn new(network: &EgoNetwork, fit: &FitResult, features: FeatureScheme) -> Self {
        let (circles, params) = fit.non_empty();
        FitOutput {
            k: circles.k(),
            circles: circles.to_id_sets(network),
            theta: params.thetas,
            alpha: params.alphas,
            log_likelihood: fit.log_likelihood,
            bic: fit.bic,
            converged: fit.converged,
            iterations: fit.iterations,
            features,
            directed: network.is_directed(),
        }
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let p = ModelParams {
            thetas: self.theta.clone(),
            alphas: self.alpha.clone(),
        };
        if p.thetas.len() != self.k || p.alphas.len() != self.k || self.circles.len() != self.k {
            return Err(CliError::Data(format!(
                "model lists {} circles but has {} circle lists, {} weight vectors and {} alphas",
                self.k,
                self.circles.len(),
                p.thetas.len(),
                p.alphas.len()
            )));
        }
        p.validate()?;
        Ok(p)
    }

    pub fn assignment(&self, network: &EgoNetwork) -> Result<CircleAssignment, CliError> {
        let named: Vec<(String, Vec<NodeId>)> = self
            .circles
            .iter()
            .enumerate()
            .map(|(k, ids)| (k.to_string(), ids.clone()))
            .collect();
        Ok(CircleAssignment::from_id_sets(network, &named)?)
    }
}

/// One measured value before aggregation.
#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub dataset: String,
    pub scheme: String,
    pub metric: String,
    /// Extra x-axis value such as `seeds=3`; empty when unused.
    pub param: String,
    pub value: f64,
}

/// Long-format plot row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlotRow {
    pub dataset: String,
    pub scheme: String,
    pub metric: String,
    pub param: String,
    pub value: f64,
    pub stderr: Option<f64>,
}

/// Dataset name of aggregate rows.
pub const AGGREGATE: &str = "mean";

/// One row per observation, plus a mean row with its standard error for
/// every `(scheme, metric, param)` group that spans several datasets.
pub fn emit_plot_data(results: &[Observation]) -> Result<Vec<PlotRow>, CliError> {
    if results.is_empty() {
        return Err(CliError::Data("no results to emit".into()));
    }
    let mut rows: Vec<PlotRow> = results
        .iter()
        .map(|o| PlotRow {
            dataset: o.dataset.clone(),
            scheme: o.scheme.clone(),
            metric: o.metric.clone(),
            param: o.param.clone(),
            value: o.value,
            stderr: None,
        })
        .collect();
    let mut groups: BTreeMap<(&str, &str, &str), Vec<f64>> = BTreeMap::new();
    for o in results {
        groups.entry((&o.scheme, &o.metric, &o.param)).or_default().push(o.value);
    }
    for ((scheme, metric, param), values) in groups {
        if values.len() < 2 {
            continue;
        }
        let (mean, se) = mean_stderr(&values).expect("non-empty group");
        rows.push(PlotRow {
            dataset: AGGREGATE.into(),
            scheme: scheme.into(),
            metric: metric.into(),
            param: param.into(),
            value: mean,
            stderr: Some(se),
        });
    }
    Ok(rows)
}

/// Writes `bytes` to `path` through a temporary file in the same
/// directory, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let wrap = |source| CliError::Write {
        path: path.to_path_buf(),
        source,
    };
    std::fs::create_dir_all(dir).map_err(wrap)?;
    let mut tmp = NamedTempFile::new_in(dir).map_err(wrap)?;
    tmp.write_all(bytes).map_err(wrap)?;
    tmp.persist(path).map_err(|e| wrap(e.error))?;
    Ok(())
}

/// Writes to `path`, or to stdout when `path` is `None` or `-`.
pub fn emit(path: Option<&Path>, bytes: &[u8]) -> Result<(), CliError> {
    match path {
        Some(p) if p != Path::new("-") => write_atomic(p, bytes),
        _ => {
            let mut out = std::io::stdout().lock();
            out.write_all(bytes).and_then(|_| out.flush()).map_err(|source| CliError::Write {
                path: "<stdout>".into(),
                source,
            })
        }
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Vec<u8> {
    let mut v = serde_json::to_vec_pretty(value).expect("serializable");
    v.push(b'\n');
    v
}

pub fn to_csv<T: Serialize>(rows: &[T]) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("serializable");
    }
    w.into_inner().expect("in-memory writer")
}

/// CSV unless `path` ends in `.json`.
pub fn emit_rows<T: Serialize>(path: Option<&Path>, rows: &[T]) -> Result<(), CliError> {
    let json = path.is_some_and(|p| p.extension().is_some_and(|e| e == "json"));
    emit(path, &if json { to_json(&rows) } else { to_csv(rows) })
}
