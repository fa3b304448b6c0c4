//! Scenario runner behind the `curvreg` binary. A scenario is one JSON
//! document naming a model, a sampled domain and a task; see
//! `docs/scenario-schema.md`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::cover::{build_cover_and_verify, build_cutoff_cover, build_separated_subset};
use crate::epsreg::{classify, collapse_check, harnack_probe, volume_comparison_check, ScanOptions};
use crate::error::Error;
use crate::integration::{default_multiplicity, integration_report, thickened_sets};
use crate::iteration::{run_iteration, schedule, series_sums, Case, SampledOracle};
use crate::models::{build, ChartPoint, Manifold, ModelSpec, RegionSpec, SampledDomain};
use crate::radius::{lipschitz_report, radius_field, Cutoff, RadiusOptions};
use crate::tensor4::{characteristic_densities, decompose, norms_and_identities};
use crate::transgression::{point_report, stokes_check, ChartBox, Structure, TransgressionOptions};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub seed: u64,
    pub model: ModelSpec,
    pub domain: DomainSpec,
    pub task: Task,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpec {
    pub region: RegionSpec,
    pub resolution: f64,
    #[serde(default)]
    pub jitter: f64,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    /// File stem for every report; the scenario name by default.
    pub prefix: Option<String>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VolumeGrid {
    pub rho: Vec<f64>,
    pub beta: Vec<f64>,
    #[serde(default)]
    pub gamma_fraction: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Task {
    Decompose {},
    RadiusField {
        /// Cutoff; omitted means infinite.
        s: Option<f64>,
        #[serde(default)]
        radius: RadiusOptions,
        #[serde(default = "default_lipschitz_tol")]
        lipschitz_tolerance: f64,
    },
    Cover {
        s: Option<f64>,
        k: f64,
        l: f64,
        #[serde(default)]
        cutoff_cover: bool,
        #[serde(default)]
        radius: RadiusOptions,
    },
    IntegrationCheck {
        s: f64,
        #[serde(default = "one")]
        mu: f64,
        #[serde(default = "four")]
        exponent: f64,
        /// Multiplicity; the measured cover multiplicity when omitted.
        m: Option<f64>,
        /// Where thickenings are sampled; the domain itself when omitted.
        ambient: Option<DomainSpec>,
    },
    TransgressionCheck {
        #[serde(default)]
        options: TransgressionOptions,
        region: Option<ChartBox>,
        #[serde(default)]
        cells: Vec<usize>,
    },
    Iterate {
        case: Case,
        /// `Lambda` in case (i), `r` in case (ii).
        scale: f64,
        steps: usize,
        /// Ball center; the domain's ball or point center when omitted.
        center: Option<Vec<f64>>,
        #[serde(default = "four")]
        points_per_radius: f64,
    },
    EpsregScan {
        radii: Vec<f64>,
        /// Defaults to the model's Ricci bound.
        lambda: Option<f64>,
        k: f64,
        #[serde(default)]
        options: ScanOptions,
        #[serde(default)]
        harnack: bool,
        tau: Option<f64>,
        volume: Option<VolumeGrid>,
    },
    GaussBonnet {},
}

fn one() -> f64 {
    1.0
}

fn four() -> f64 {
    4.0
}

fn default_lipschitz_tol() -> f64 {
    0.05
}

impl Task {
    fn key(&self) -> &'static str {
        match self {
            Task::Decompose {} => "task.decompose",
            Task::RadiusField { .. } => "task.radius-field",
            Task::Cover { .. } => "task.cover",
            Task::IntegrationCheck { .. } => "task.integration-check",
            Task::TransgressionCheck { .. } => "task.transgression-check",
            Task::Iterate { .. } => "task.iterate",
            Task::EpsregScan { .. } => "task.epsreg-scan",
            Task::GaussBonnet {} => "task.gauss-bonnet",
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error at `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("error at `{key}`: {source}")]
    Module { key: String, source: Error },
    #[error("cannot write {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Module { source: Error::Parameter { .. }, .. } => 2,
            CliError::Module { .. } | CliError::Io { .. } => 3,
        }
    }
}

fn at(key: &str) -> impl Fn(Error) -> CliError + '_ {
    move |source| CliError::Module { key: key.to_string(), source }
}

/// Parses a scenario, reporting the path of the offending key.
pub fn parse_scenario(text: &str) -> Result<Scenario, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| CliError::Config {
        key: e.path().to_string(),
        message: e.inner().to_string(),
    })
}

/// A finished report file, not yet on disk.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub file: String,
    pub bytes: Vec<u8>,
}

/// Canonical JSON: sorted keys, floats at 17 significant digits,
/// non-finite values as null.
pub fn canonical_json<T: Serialize>(value: &T, pretty: bool) -> Result<String, Error> {
    let v = serde_json::to_value(value)?;
    let mut out = String::new();
    write_value(&v, pretty, 0, &mut out);
    Ok(out)
}

fn write_value(v: &Value, pretty: bool, depth: usize, out: &mut String) {
    let pad = |out: &mut String, d: usize| {
        if pretty {
            out.push('\n');
            out.extend(std::iter::repeat_n("  ", d));
        }
    };
    match v {
        Value::Null => out.push_str("null"),
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Number(n) => match (n.as_u64(), n.as_i64(), n.as_f64()) {
            (Some(u), _, _) => write!(out, "{u}").unwrap(),
            (_, Some(i), _) => write!(out, "{i}").unwrap(),
            (_, _, Some(x)) if x.is_finite() => write!(out, "{x:.16e}").unwrap(),
            _ => out.push_str("null"),
        },
        Value::String(s) => out.push_str(&Value::String(s.clone()).to_string()),
        Value::Array(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                pad(out, depth + 1);
                write_value(item, pretty, depth + 1, out);
            }
            if !items.is_empty() {
                pad(out, depth);
            }
            out.push(']');
        }
        Value::Object(map) => {
            let sorted: BTreeMap<&String, &Value> = map.iter().collect();
            out.push('{');
            for (i, (k, item)) in sorted.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                pad(out, depth + 1);
                out.push_str(&Value::String((*k).clone()).to_string());
                out.push(':');
                if pretty {
                    out.push(' ');
                }
                write_value(item, pretty, depth + 1, out);
            }
            if !sorted.is_empty() {
                pad(out, depth);
            }
            out.push('}');
        }
    }
}

fn json_report<T: Serialize>(file: String, value: &T) -> Result<Report, Error> {
    let mut text = canonical_json(value, true)?;
    text.push('\n');
    Ok(Report { file, bytes: text.into_bytes() })
}

fn json_lines_report<T: Serialize>(file: String, values: &[T]) -> Result<Report, Error> {
    let mut text = String::new();
    for v in values {
        text.push_str(&canonical_json(v, false)?);
        text.push('\n');
    }
    Ok(Report { file, bytes: text.into_bytes() })
}

fn csv_report(file: String, header: &[String], rows: &[Vec<String>]) -> Result<Report, Error> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    Ok(Report { file, bytes })
}

fn with_buffer(file: String, f: impl FnOnce(&mut Vec<u8>) -> Result<(), Error>) -> Result<Report, Error> {
    let mut bytes = Vec::new();
    f(&mut bytes)?;
    Ok(Report { file, bytes })
}

fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn point_columns(dim: usize) -> Vec<String> {
    let mut h = vec!["chart".to_string()];
    h.extend((0..dim).map(|i| format!("x{i}")));
    h
}

fn point_cells(p: &ChartPoint) -> Vec<String> {
    let mut row = vec![p.chart.to_string()];
    row.extend(p.coords.iter().map(|c| num(*c)));
    row
}

fn sample(model: &dyn Manifold, spec: &DomainSpec, seed: u64, key: &str) -> Result<SampledDomain, CliError> {
    model.sample(&spec.region, spec.resolution, seed, spec.jitter).map_err(at(key))
}

fn cutoff(s: Option<f64>) -> Cutoff {
    s.map_or(Cutoff::INFINITE, Cutoff)
}

/// Runs a parsed scenario and returns its reports in memory.
pub fn run(scenario: &Scenario) -> Result<Vec<Report>, CliError> {
    let model = build(&scenario.model).map_err(at("model"))?;
    let model = model.as_ref();
    let domain = sample(model, &scenario.domain, scenario.seed, "domain")?;
    let stem = scenario.output.prefix.clone().unwrap_or_else(|| scenario.name.clone());
    let key = scenario.task.key();
    let err = at(key);
    let dim = model.dim();
    let reports = match &scenario.task {
        Task::Decompose {} => {
            let rows: Vec<(ChartPoint, _, _)> = domain
                .points
                .par_iter()
                .map(|p| {
                    let dec = decompose(&model.curvature_at(p)?);
                    Ok((p.clone(), norms_and_identities(&dec), characteristic_densities(&dec)))
                })
                .collect::<Result<_, Error>>()
                .map_err(&err)?;
            let mut header = point_columns(dim);
            header.extend(
                ["rm_sq", "scalar_sq", "ric0_sq", "wplus_sq", "wminus_sq", "residual", "pchi", "ptau", "energy_residual"]
                    .map(String::from),
            );
            let cells: Vec<Vec<String>> = rows
                .iter()
                .map(|(p, n, c)| {
                    let mut row = point_cells(p);
                    row.extend(
                        [n.rm_sq, n.scalar_sq, n.ric0_sq, n.wplus_sq, n.wminus_sq, n.residual, c.pchi, c.ptau, c.energy_residual]
                            .map(num),
                    );
                    row
                })
                .collect();
            let rel = |r: f64, n: f64| if n > 0.0 { r.abs() / n } else { r.abs() };
            let summary = serde_json::json!({
                "samples": rows.len(),
                "max_relative_residual": rows.iter().map(|(_, n, _)| rel(n.residual, n.rm_sq)).fold(0.0, f64::max),
                "max_relative_energy_residual":
                    rows.iter().map(|(_, n, c)| rel(c.energy_residual, n.rm_sq)).fold(0.0, f64::max),
            });
            vec![
                csv_report(format!("{stem}.csv"), &header, &cells).map_err(&err)?,
                json_report(format!("{stem}.json"), &summary).map_err(&err)?,
            ]
        }
        Task::RadiusField { s, radius, lipschitz_tolerance } => {
            let field = radius_field(model, &domain, cutoff(*s), radius).map_err(&err)?;
            let lip = if field.len() >= 2 {
                Some(lipschitz_report(model, &field, *lipschitz_tolerance).map_err(&err)?)
            } else {
                None
            };
            let summary = serde_json::json!({
                "samples": field.len(),
                "cutoff": s,
                "effective_cutoff": field.effective_cutoff,
                "min": field.min(),
                "max": field.max(),
                "degenerate": field.degenerate,
                "lipschitz": lip,
            });
            vec![
                with_buffer(format!("{stem}.csv"), |b| field.write_csv(b)).map_err(&err)?,
                json_report(format!("{stem}.json"), &summary).map_err(&err)?,
            ]
        }
        Task::Cover { s, k, l, cutoff_cover, radius } => {
            let field = radius_field(model, &domain, cutoff(*s), radius).map_err(&err)?;
            let (cover, summary) = if *cutoff_cover {
                let (cover, rep) = build_cutoff_cover(model, &field, *k, *l).map_err(&err)?;
                (cover, serde_json::to_value(&rep).map_err(|e| err(e.into()))?)
            } else {
                let centers = build_separated_subset(model, &field, *k).map_err(&err)?;
                let (cover, rep) = build_cover_and_verify(model, &field, &centers, *k, *l).map_err(&err)?;
                (cover, serde_json::to_value(&rep).map_err(|e| err(e.into()))?)
            };
            vec![
                with_buffer(format!("{stem}.csv"), |b| cover.write_csv(&field, b)).map_err(&err)?,
                json_report(format!("{stem}.json"), &summary).map_err(&err)?,
            ]
        }
        Task::IntegrationCheck { s, mu, exponent, m, ambient } => {
            let field = radius_field(model, &domain, Cutoff(*s), &RadiusOptions::default()).map_err(&err)?;
            let amb = match ambient {
                Some(spec) => sample(model, spec, scenario.seed, &format!("{key}.ambient"))?,
                None => domain.clone(),
            };
            let m = match m {
                Some(m) => *m,
                None => default_multiplicity(model, &field, *mu).map_err(&err)?.0,
            };
            let sets = thickened_sets(model, &field, &amb, *mu).map_err(&err)?;
            let rep = integration_report(model, &field, &sets, *exponent, m).map_err(&err)?;
            vec![json_report(format!("{stem}.json"), &rep).map_err(&err)?]
        }
        Task::TransgressionCheck { options, region, cells } => {
            let structures = vec![Structure::of_model(model)];
            let points: Vec<_> = domain
                .points
                .par_iter()
                .map(|p| point_report(model, &structures, p, options))
                .collect::<Result<_, Error>>()
                .map_err(&err)?;
            let stokes = match region {
                Some(b) => cells
                    .iter()
                    .map(|n| stokes_check(model, &structures, b, *n, options))
                    .collect::<Result<Vec<_>, Error>>()
                    .map_err(&err)?,
                None => Vec::new(),
            };
            let mut header = point_columns(dim);
            header.extend(
                ["radius", "contraction_residual", "null_connection", "null_curvature", "modified_density", "density", "transgression_scaled"]
                    .map(String::from),
            );
            let rows: Vec<Vec<String>> = points
                .iter()
                .zip(&domain.points)
                .map(|(r, p)| {
                    let mut row = point_cells(p);
                    row.extend(
                        [r.radius, r.contraction_residual, r.null_connection, r.null_curvature, r.modified_density, r.density, r.transgression.scaled]
                            .map(num),
                    );
                    row
                })
                .collect();
            let max = |f: fn(&crate::transgression::PointReport) -> f64| points.iter().map(f).fold(0.0, f64::max);
            let summary = serde_json::json!({
                "samples": points.len(),
                "polynomial": options.polynomial,
                "max_null_connection": max(|r| r.null_connection),
                "max_null_curvature": max(|r| r.null_curvature),
                "max_modified_density": max(|r| r.modified_density),
                "max_contraction_residual": max(|r| r.contraction_residual),
                "stokes": stokes,
            });
            vec![
                csv_report(format!("{stem}.csv"), &header, &rows).map_err(&err)?,
                json_report(format!("{stem}.json"), &summary).map_err(&err)?,
            ]
        }
        Task::Iterate { case, scale, steps, center, points_per_radius } => {
            let center = match (center, &scenario.domain.region) {
                (Some(c), _) => c.clone(),
                (None, RegionSpec::Ball { center, .. }) => center.clone(),
                (None, RegionSpec::Point { coords, .. }) => coords.clone(),
                (None, RegionSpec::Full) => {
                    return Err(CliError::Config {
                        key: format!("{key}.center"),
                        message: "a full-model domain has no center; give one".into(),
                    })
                }
            };
            let sched = schedule(*case, *scale, *steps).map_err(&err)?;
            let oracle = SampledOracle { points_per_radius: *points_per_radius, seed: scenario.seed };
            let trace = run_iteration(model, &center, &sched, &oracle).map_err(&err)?;
            let summary = serde_json::json!({
                "series": series_sums(&sched),
                "requested": trace.requested,
                "truncation": trace.schedule.truncation,
                "measured_constant": trace.measured_constant,
                "tail": trace.tail,
                "tail_negligible": trace.tail_negligible,
                "chained_bound": trace.chained_bound,
            });
            vec![
                with_buffer(format!("{stem}.csv"), |b| trace.write_csv(b)).map_err(&err)?,
                json_report(format!("{stem}.json"), &summary).map_err(&err)?,
            ]
        }
        Task::EpsregScan { radii, lambda, k, options, harnack, tau, volume } => {
            let opts = ScanOptions { seed: scenario.seed, ..*options };
            let lambda = lambda.unwrap_or_else(|| model.ricci_bound());
            let centers: Vec<&ChartPoint> = domain.points.iter().collect();
            let grid: Vec<(&ChartPoint, f64)> =
                centers.iter().flat_map(|c| radii.iter().map(move |r| (*c, *r))).collect();
            let classified: Vec<_> = grid
                .par_iter()
                .map(|(c, r)| classify(model, &c.coords, *r, lambda, *k, &opts))
                .collect::<Result<_, Error>>()
                .map_err(&err)?;
            let mut out = vec![json_lines_report(format!("{stem}.classify.jsonl"), &classified).map_err(&err)?];
            if *harnack {
                let reps: Vec<_> = grid
                    .par_iter()
                    .map(|(c, r)| harnack_probe(model, &c.coords, *r, lambda, *k, &opts))
                    .collect::<Result<_, Error>>()
                    .map_err(&err)?;
                out.push(json_lines_report(format!("{stem}.harnack.jsonl"), &reps).map_err(&err)?);
            }
            if let Some(tau) = tau {
                let reps: Vec<_> = centers
                    .par_iter()
                    .map(|c| collapse_check(model, &c.coords, lambda, *k, *tau, &opts))
                    .collect::<Result<_, Error>>()
                    .map_err(&err)?;
                out.push(json_lines_report(format!("{stem}.collapse.jsonl"), &reps).map_err(&err)?);
            }
            if let Some(g) = volume {
                let cases: Vec<(&ChartPoint, f64, f64)> = centers
                    .iter()
                    .flat_map(|c| g.rho.iter().flat_map(move |r| g.beta.iter().map(move |b| (*c, *r, *b))))
                    .collect();
                let reps: Vec<_> = cases
                    .par_iter()
                    .map(|(c, rho, beta)| {
                        volume_comparison_check(model, &c.coords, *rho, *beta, g.gamma_fraction * rho, lambda, &opts)
                    })
                    .collect::<Result<_, Error>>()
                    .map_err(&err)?;
                out.push(json_lines_report(format!("{stem}.volume.jsonl"), &reps).map_err(&err)?);
            }
            out
        }
        Task::GaussBonnet {} => {
            let dens: Vec<_> = domain
                .points
                .par_iter()
                .map(|p| Ok(characteristic_densities(&decompose(&model.curvature_at(p)?))))
                .collect::<Result<_, Error>>()
                .map_err(&err)?;
            let total = |f: fn(&crate::tensor4::CharacteristicDensities) -> f64| {
                dens.iter().zip(&domain.weights).fold(0.0, |a, (d, w)| a + w * f(d))
            };
            let summary = serde_json::json!({
                "samples": domain.len(),
                "volume": domain.total_weight(),
                "euler_integral": total(|d| d.pchi),
                "signature_integral": total(|d| d.ptau),
            });
            vec![json_report(format!("{stem}.json"), &summary).map_err(&err)?]
        }
    };
    Ok(reports)
}

/// Writes every report through a temporary file and a rename.
pub fn write_reports(reports: &[Report], dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CliError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    for r in reports {
        let target = dir.join(&r.file);
        let tmp = dir.join(format!(".{}.tmp", r.file));
        fs::write(&tmp, &r.bytes).map_err(io(&tmp))?;
        fs::rename(&tmp, &target).map_err(io(&target))?;
        written.push(target);
    }
    Ok(written)
}

/// Reads, runs and writes one scenario.
pub fn run_scenario(config: &Path, out: &Path) -> Result<Vec<PathBuf>, CliError> {
    let text = fs::read_to_string(config).map_err(|e| CliError::Config {
        key: String::new(),
        message: format!("cannot read {}: {e}", config.display()),
    })?;
    let scenario = parse_scenario(&text)?;
    let reports = run(&scenario)?;
    write_reports(&reports, out)
}
