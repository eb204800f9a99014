//! Experiment manifests.

use std::path::{Path, PathBuf};

use qgraph_core::graph::{phases_from_map, GraphSpec, PhaseMap};
use qgraph_core::{ControlFunction, IncidencePhases, QuantumGraph};
use serde::de::DeserializeOwned;
use serde::Deserialize;

use crate::RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Spectrum,
    Evolve,
    GaugeCheck,
    Stability,
    Control,
    BoundaryControl,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Spectrum => "spectrum",
            Command::Evolve => "evolve",
            Command::GaugeCheck => "gauge-check",
            Command::Stability => "stability",
            Command::Control => "control",
            Command::BoundaryControl => "boundary-control",
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub command: Command,
    pub graph: serde_json::Value,
    #[serde(default)]
    pub params: serde_json::Value,
    #[serde(default)]
    pub numerics: Numerics,
    #[serde(default)]
    pub output: Option<PathBuf>,
}

pub const MAX_DOFS: usize = 4000;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Numerics {
    pub elements_per_edge: usize,
    pub dt: f64,
    pub seed: u64,
}

impl Default for Numerics {
    fn default() -> Self {
        Self { elements_per_edge: qgraph_core::fem::DEFAULT_ELEMENTS_PER_EDGE, dt: 1e-3, seed: 0 }
    }
}

impl Numerics {
    fn validate(&self) -> Result<(), RunError> {
        if self.elements_per_edge < 2 {
            return Err(RunError::schema("numerics.elements_per_edge", "at least 2 elements per edge"));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(RunError::schema("numerics.dt", "time step must be positive"));
        }
        Ok(())
    }
}

/// Manifest with its graph resolved.
pub struct Loaded {
    pub command: Command,
    pub spec: GraphSpec,
    pub graph: QuantumGraph,
    pub params: serde_json::Value,
    pub numerics: Numerics,
    pub output: Option<PathBuf>,
}

/// Deserializes `value`, reporting failures with the full field path under `prefix`.
pub fn decode<T: DeserializeOwned>(value: serde_json::Value, prefix: &str) -> Result<T, RunError> {
    serde_path_to_error::deserialize(value).map_err(|e| {
        let mut path = e.path().to_string();
        let message = e.inner().to_string();
        if let Some(field) = message.strip_prefix("missing field `").and_then(|m| m.split('`').next()) {
            path = if path == "." { field.to_string() } else { format!("{path}.{field}") };
        }
        RunError::schema(join(prefix, &path), message)
    })
}

pub fn join(prefix: &str, path: &str) -> String {
    match (prefix.is_empty(), path.is_empty() || path == ".") {
        (true, _) => path.to_string(),
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}.{path}"),
    }
}

fn read_json(path: &Path, field: &str) -> Result<serde_json::Value, RunError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| RunError::schema(field, format!("cannot read `{}`: {e}", path.display())))?;
    let mut de = serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(&mut de).map_err(|e| RunError::schema(join(field, &e.path().to_string()), e.inner().to_string()))
}

pub fn load(path: &Path) -> Result<Loaded, RunError> {
    let raw = read_json(path, "manifest")?;
    let manifest: Manifest = decode(raw, "")?;
    manifest.numerics.validate()?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (graph_value, prefix) = match &manifest.graph {
        serde_json::Value::String(p) => {
            let full = base.join(p);
            (read_json(&full, "graph")?, "graph")
        }
        other => (other.clone(), "graph"),
    };
    let spec: GraphSpec = decode(graph_value, prefix)?;
    let graph = spec.graph().map_err(|e| RunError::core(e).under("graph"))?;
    let dofs = dof_count(&graph, manifest.numerics.elements_per_edge);
    if dofs > MAX_DOFS {
        return Err(RunError::schema(
            "numerics.elements_per_edge",
            format!("{dofs} unknowns exceed the cap of {MAX_DOFS}"),
        ));
    }
    let output = manifest.output.map(|o| base.join(o));
    Ok(Loaded { command: manifest.command, spec, graph, params: manifest.params, numerics: manifest.numerics, output })
}

fn dof_count(graph: &QuantumGraph, elements: usize) -> usize {
    graph.edge_count() * (elements - 1) + graph.vertex_count()
}

/// Per-incidence phases from an optional map, `chi_bar` style.
pub fn phases(graph: &QuantumGraph, map: &Option<PhaseMap>, path: &str) -> Result<IncidencePhases, RunError> {
    match map {
        Some(m) => phases_from_map(graph, m, path).map_err(RunError::core),
        None => Ok(IncidencePhases::zeros(graph)),
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ControlSpec {
    PiecewiseConstant { breakpoints: Vec<f64>, values: Vec<f64> },
    PiecewiseLinear { breakpoints: Vec<f64>, start: Vec<f64>, slope: Vec<f64> },
    Interpolant { times: Vec<f64>, values: Vec<f64> },
}

impl ControlSpec {
    pub fn build(&self, path: &str) -> Result<ControlFunction, RunError> {
        let built = match self.clone() {
            ControlSpec::PiecewiseConstant { breakpoints, values } => ControlFunction::piecewise_constant(breakpoints, values),
            ControlSpec::PiecewiseLinear { breakpoints, start, slope } => {
                ControlFunction::piecewise_linear(breakpoints, start, slope)
            }
            ControlSpec::Interpolant { times, values } => ControlFunction::linear_interpolant(times, values),
        };
        built.map_err(|e| RunError::core(e).under(path))
    }
}
