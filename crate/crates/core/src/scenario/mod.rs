//! Scenario files: validation, model construction, check dispatch and
//! reports.

mod checks;
pub mod config;
mod report;

use std::path::Path;

use crate::error::Error;
use crate::expr::Expression;
use crate::geometry::RiemannianChart;
use crate::grid::{CoordBox, PhaseBox};
use crate::pair::GeneratingPair;
use crate::section::{omega_from_section, section_from_pair, CovectorField, NormalizingField, ProjectiveSectionField};

pub use checks::{Command, Outcome};
pub use config::{ScenarioConfig, CONFIG_VERSION};
pub use report::{Bound, CheckReport, Meta, Report, RunOptions};

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{context}: {cause}")]
    Runtime { context: String, cause: Error },
    #[error("i/o error on {path}: {cause}")]
    Io { path: String, cause: std::io::Error },
}

impl ScenarioError {
    pub fn exit_code(&self) -> i32 {
        match self {
            ScenarioError::Config(_) => 2,
            ScenarioError::Runtime { .. } | ScenarioError::Io { .. } => 3,
        }
    }

    pub(crate) fn runtime(context: impl Into<String>) -> impl FnOnce(Error) -> ScenarioError {
        let context = context.into();
        move |cause| ScenarioError::Runtime { context, cause }
    }
}

fn config_err(path: &str) -> impl FnOnce(Error) -> ScenarioError + '_ {
    move |e| ScenarioError::Config(format!("{path}: {e}"))
}

const REQUIRED: [&str; 3] = ["version", "chart", "generator"];

/// Parses and validates a scenario file's text.
pub fn parse_config(text: &str) -> Result<ScenarioConfig, ScenarioError> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| ScenarioError::Config(e.to_string()))?;
    let missing: Vec<&str> = REQUIRED.iter().copied().filter(|k| !table.contains_key(*k)).collect();
    if !missing.is_empty() {
        return Err(ScenarioError::Config(format!("missing required fields: {}", missing.join(", "))));
    }
    let config: ScenarioConfig = toml::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))?;
    if config.version != CONFIG_VERSION {
        return Err(ScenarioError::Config(format!("version: expected {CONFIG_VERSION}, found {}", config.version)));
    }
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path).map_err(|cause| ScenarioError::Io { path: path.display().to_string(), cause })?;
    parse_config(&text)
}

/// The generator of a scenario, in whichever form the config supplied it.
#[derive(Debug, Clone)]
pub enum Generator {
    Pair(GeneratingPair),
    Section { b: ProjectiveSectionField, a: Option<NormalizingField> },
    Omega(CovectorField),
}

impl Generator {
    pub fn domain(&self) -> &PhaseBox {
        match self {
            Generator::Pair(p) => p.domain(),
            Generator::Section { b, .. } => b.domain(),
            Generator::Omega(w) => w.domain(),
        }
    }

    pub fn pair(&self) -> Option<&GeneratingPair> {
        match self {
            Generator::Pair(p) => Some(p),
            _ => None,
        }
    }

    /// `(b, a)`; `a` is absent when a bare section was configured.
    pub fn section(&self) -> Result<(ProjectiveSectionField, Option<NormalizingField>), Error> {
        match self {
            Generator::Pair(p) => {
                let (b, a) = section_from_pair(p);
                Ok((b, Some(a)))
            }
            Generator::Section { b, a } => Ok((b.clone(), a.clone())),
            Generator::Omega(w) => {
                Ok((ProjectiveSectionField::from_omega(w.clone())?, Some(NormalizingField::from_omega(w.clone())?)))
            }
        }
    }

    /// `ω`, when the normalizing scalar exists and does not vanish.
    pub fn omega(&self) -> Result<Option<CovectorField>, Error> {
        match self {
            Generator::Omega(w) => Ok(Some(w.clone())),
            _ => match self.section()? {
                (b, Some(a)) => match omega_from_section(&b, &a) {
                    Ok(w) => Ok(Some(w)),
                    Err(Error::ZeroNormalizer { .. }) => Ok(None),
                    Err(e) => Err(e),
                },
                _ => Ok(None),
            },
        }
    }
}

/// A validated scenario: chart and generator built and checked.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub name: String,
    pub config: ScenarioConfig,
    pub chart: RiemannianChart,
    pub generator: Generator,
}

fn expr(path: &str, text: &str) -> Result<Expression, ScenarioError> {
    Expression::parse(text).map_err(|e| ScenarioError::Config(format!("{path}: {e}")))
}

fn exprs(path: &str, texts: &[String]) -> Result<Vec<Expression>, ScenarioError> {
    texts.iter().enumerate().map(|(i, t)| expr(&format!("{path}[{i}]"), t)).collect()
}

fn v_range(path: &str, r: [f64; 2]) -> Result<(f64, f64), ScenarioError> {
    if !(r[0] > 0.0 && r[0] < r[1] && r[1].is_finite()) {
        return Err(ScenarioError::Config(format!("{path}.v_range: need 0 < lo < hi, got {r:?}")));
    }
    Ok((r[0], r[1]))
}

impl Scenario {
    pub fn from_config(config: ScenarioConfig, fallback_name: &str) -> Result<Self, ScenarioError> {
        let name = config.name.clone().unwrap_or_else(|| fallback_name.to_string());
        let chart = build_chart(&config.chart)?;
        let generator = build_generator(&config.generator, chart.domain())?;
        if generator.domain().dim() != chart.dim() {
            return Err(ScenarioError::Config(format!(
                "generator: dimension {} does not match chart dimension {}",
                generator.domain().dim(),
                chart.dim()
            )));
        }
        Ok(Scenario { name, config, chart, generator })
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "scenario".into());
        Self::from_config(load_config(path)?, &stem)
    }

    pub fn dim(&self) -> usize {
        self.chart.dim()
    }
}

fn build_box(path: &str, lo: &[f64], hi: &[f64]) -> Result<CoordBox, ScenarioError> {
    CoordBox::new(lo.to_vec(), hi.to_vec()).map_err(config_err(path))
}

fn build_chart(spec: &config::ChartSpec) -> Result<RiemannianChart, ScenarioError> {
    use config::ChartSpec::*;
    match spec {
        Euclidean { lo, hi } => {
            let domain = build_box("chart", lo, hi)?;
            if !(2..=4).contains(&domain.dim()) {
                return Err(ScenarioError::Config(format!("chart: euclidean charts have dimension 2..4, got {}", domain.dim())));
            }
            RiemannianChart::euclidean(domain).map_err(config_err("chart"))
        }
        Conformal { lambda, lo, hi } => {
            let domain = build_box("chart", lo, hi)?;
            RiemannianChart::conformal(expr("chart.lambda", lambda)?, domain).map_err(config_err("chart.lambda"))
        }
        Components { metric, lo, hi } => {
            let domain = build_box("chart", lo, hi)?;
            let n = domain.dim();
            if metric.len() != n || metric.iter().any(|row| row.len() != n) {
                return Err(ScenarioError::Config(format!("chart.metric: expected a {n}×{n} grid")));
            }
            let flat: Vec<String> = metric.iter().flatten().cloned().collect();
            RiemannianChart::from_components(exprs("chart.metric", &flat)?, domain).map_err(config_err("chart.metric"))
        }
    }
}

fn build_generator(spec: &config::GeneratorSpec, space: &CoordBox) -> Result<Generator, ScenarioError> {
    let count = [spec.pair.is_some(), spec.section.is_some(), spec.omega.is_some()].iter().filter(|b| **b).count();
    if count != 1 {
        return Err(ScenarioError::Config(format!(
            "generator: exactly one of pair, section, omega must be given, found {count}"
        )));
    }
    let phase = |path: &str, r: [f64; 2]| -> Result<PhaseBox, ScenarioError> {
        PhaseBox::new(space.clone(), v_range(path, r)?).map_err(config_err(path))
    };
    if let Some(p) = &spec.pair {
        let domain = phase("generator.pair", p.v_range)?;
        let h = expr("generator.pair.h", &p.h)?;
        let w = expr("generator.pair.w", &p.w)?;
        return GeneratingPair::new(h, w, domain).map(Generator::Pair).map_err(config_err("generator.pair"));
    }
    if let Some(s) = &spec.section {
        let domain = phase("generator.section", s.v_range)?;
        let b = ProjectiveSectionField::from_exprs(exprs("generator.section.b", &s.b)?, domain.clone())
            .map_err(config_err("generator.section.b"))?;
        let a = match &s.a {
            Some(a) => Some(
                NormalizingField::from_expr(expr("generator.section.a", a)?, domain).map_err(config_err("generator.section.a"))?,
            ),
            None => None,
        };
        return Ok(Generator::Section { b, a });
    }
    let w = spec.omega.as_ref().expect("counted above");
    let domain = phase("generator.omega", w.v_range)?;
    CovectorField::from_exprs(exprs("generator.omega.components", &w.components)?, domain)
        .map(Generator::Omega)
        .map_err(config_err("generator.omega.components"))
}

/// Runs `command` against `scenario` and writes `report.json`, `meta.json`
/// and CSV tables into the output directory.
pub fn run(scenario: &Scenario, command: Command, opts: &RunOptions) -> Result<Report, ScenarioError> {
    let started = report::unix_time();
    let out = opts.output_dir(scenario);
    std::fs::create_dir_all(&out).map_err(|cause| ScenarioError::Io { path: out.display().to_string(), cause })?;
    let outcome = checks::execute(scenario, command, opts, &out)?;
    let report = Report::new(scenario, command, opts, outcome);
    report.write(&out)?;
    Meta { command: command.name(), started_unix: started, finished_unix: report::unix_time(), crate_version: env!("CARGO_PKG_VERSION") }
        .write(&out)?;
    Ok(report)
}
