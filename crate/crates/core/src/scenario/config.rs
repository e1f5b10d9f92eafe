//! Declarative scenario files (TOML).

use std::path::PathBuf;

use serde::Deserialize;

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub version: u32,
    pub name: Option<String>,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    pub chart: ChartSpec,
    pub generator: GeneratorSpec,
    #[serde(default)]
    pub checks: ChecksSpec,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChartSpec {
    Euclidean { lo: Vec<f64>, hi: Vec<f64> },
    Conformal { lambda: String, lo: Vec<f64>, hi: Vec<f64> },
    /// `metric[i][j] = g_ij` as expressions in `x1..xn`.
    Components { metric: Vec<Vec<String>>, lo: Vec<f64>, hi: Vec<f64> },
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorSpec {
    pub pair: Option<PairSpec>,
    pub section: Option<SectionSpec>,
    pub omega: Option<OmegaSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairSpec {
    pub h: String,
    #[serde(alias = "W")]
    pub w: String,
    pub v_range: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionSpec {
    pub b: Vec<String>,
    pub a: Option<String>,
    pub v_range: [f64; 2],
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OmegaSpec {
    pub components: Vec<String>,
    pub v_range: [f64; 2],
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChecksSpec {
    pub field: Option<FieldCheck>,
    pub trajectory: Option<TrajectoryCheck>,
    pub section: Option<SectionCheck>,
    pub recover_w: Option<RecoverWCheck>,
    pub round_trip: Option<RoundTripCheck>,
    #[serde(default)]
    pub shift: Vec<ShiftCheck>,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaugeSpec {
    pub rho: String,
    pub rho_inv: String,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldCheck {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "FieldCheck::default_states")]
    pub states: usize,
    pub speed_range: Option<[f64; 2]>,
    #[serde(default = "FieldCheck::default_gauges")]
    pub gauges: Vec<GaugeSpec>,
    #[serde(default = "FieldCheck::default_threshold")]
    pub threshold: f64,
    #[serde(default = "FieldCheck::default_parity_threshold")]
    pub parity_threshold: f64,
}

impl FieldCheck {
    fn default_states() -> usize {
        100
    }
    fn default_gauges() -> Vec<GaugeSpec> {
        vec![GaugeSpec { rho: "2*w".into(), rho_inv: "w/2".into() }]
    }
    fn default_threshold() -> f64 {
        1e-9
    }
    fn default_parity_threshold() -> f64 {
        1e-10
    }
}

impl Default for FieldCheck {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryCheck {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "TrajectoryCheck::default_count")]
    pub count: usize,
    #[serde(default = "TrajectoryCheck::default_t_end")]
    pub t_end: f64,
    #[serde(default = "TrajectoryCheck::default_dt")]
    pub dt: f64,
    /// Start positions are drawn from the chart box shrunk by this factor.
    #[serde(default = "TrajectoryCheck::default_region")]
    pub region: f64,
    #[serde(default = "TrajectoryCheck::default_speed_range")]
    pub speed_range: [f64; 2],
    #[serde(default = "TrajectoryCheck::default_threshold")]
    pub threshold: f64,
    #[serde(default)]
    pub order_check: bool,
    #[serde(default = "TrajectoryCheck::default_order_ratio")]
    pub order_ratio: f64,
}

impl TrajectoryCheck {
    fn default_count() -> usize {
        20
    }
    fn default_t_end() -> f64 {
        1.0
    }
    fn default_dt() -> f64 {
        1e-3
    }
    fn default_region() -> f64 {
        0.5
    }
    fn default_speed_range() -> [f64; 2] {
        [0.5, 1.5]
    }
    fn default_threshold() -> f64 {
        1e-7
    }
    fn default_order_ratio() -> f64 {
        8.0
    }
}

impl Default for TrajectoryCheck {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSpec {
    pub x: Vec<f64>,
    pub v: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SectionCheck {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "SectionCheck::default_lattice")]
    pub lattice: usize,
    #[serde(default = "SectionCheck::default_threshold")]
    pub threshold: f64,
    pub probe: Option<ProbeSpec>,
}

impl SectionCheck {
    fn default_lattice() -> usize {
        5
    }
    fn default_threshold() -> f64 {
        1e-9
    }
}

impl Default for SectionCheck {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecoverWCheck {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Base point of the Cauchy data (default: centre of the chart box).
    pub base: Option<Vec<f64>>,
    /// Evaluation box in `x` (default: chart box shrunk to a quarter).
    pub x_lo: Option<Vec<f64>>,
    pub x_hi: Option<Vec<f64>>,
    /// Evaluation range in `v`.
    pub v: [f64; 2],
    #[serde(default = "RecoverWCheck::default_lattice")]
    pub lattice: usize,
    #[serde(default = "RecoverWCheck::default_steps")]
    pub steps: usize,
    #[serde(default = "RecoverWCheck::default_fd_step")]
    pub fd_step: f64,
    #[serde(default = "RecoverWCheck::default_threshold")]
    pub threshold: f64,
    #[serde(default = "RecoverWCheck::default_path_threshold")]
    pub path_threshold: f64,
    #[serde(default = "RecoverWCheck::default_level_pairs")]
    pub level_pairs: usize,
}

impl RecoverWCheck {
    fn default_lattice() -> usize {
        5
    }
    fn default_steps() -> usize {
        64
    }
    fn default_fd_step() -> f64 {
        1e-4
    }
    fn default_threshold() -> f64 {
        1e-7
    }
    fn default_path_threshold() -> f64 {
        1e-8
    }
    fn default_level_pairs() -> usize {
        20
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoundTripCheck {
    #[serde(default = "yes")]
    pub enabled: bool,
    #[serde(default = "RoundTripCheck::default_states")]
    pub states: usize,
    pub speed_range: Option<[f64; 2]>,
    #[serde(default = "RoundTripCheck::default_ansatz_threshold")]
    pub ansatz_threshold: f64,
    #[serde(default = "RoundTripCheck::default_lattice")]
    pub lattice: usize,
    #[serde(default = "RoundTripCheck::default_paths")]
    pub paths: usize,
    #[serde(default = "RoundTripCheck::default_threshold")]
    pub threshold: f64,
}

impl RoundTripCheck {
    fn default_states() -> usize {
        100
    }
    fn default_ansatz_threshold() -> f64 {
        1e-8
    }
    fn default_lattice() -> usize {
        5
    }
    fn default_paths() -> usize {
        10
    }
    fn default_threshold() -> f64 {
        1e-9
    }
}

impl Default for RoundTripCheck {
    fn default() -> Self {
        toml::from_str("").expect("defaults")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ShiftExpectation {
    #[default]
    Normal,
    NonNormal,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftCheck {
    #[serde(default = "yes")]
    pub enabled: bool,
    pub label: String,
    /// `x^k(u1, …, u_{n−1})`.
    pub embedding: Vec<String>,
    pub u_lo: Vec<f64>,
    pub u_hi: Vec<f64>,
    #[serde(default = "ShiftCheck::default_resolution")]
    pub resolution: usize,
    pub w0: Option<f64>,
    #[serde(default = "ShiftCheck::default_t_end")]
    pub t_end: f64,
    #[serde(default = "ShiftCheck::default_dt")]
    pub dt: f64,
    #[serde(default = "ShiftCheck::default_sample_every")]
    pub sample_every: usize,
    pub reference: Option<Vec<f64>>,
    /// Constant initial speed instead of level-set matching.
    pub speed_override: Option<f64>,
    #[serde(default)]
    pub expect: ShiftExpectation,
    /// Upper bound on `max |R|` for a normal shift, lower bound otherwise.
    pub threshold: Option<f64>,
    #[serde(default = "ShiftCheck::default_w_threshold")]
    pub w_threshold: f64,
}

impl ShiftCheck {
    fn default_resolution() -> usize {
        21
    }
    fn default_t_end() -> f64 {
        0.5
    }
    fn default_dt() -> f64 {
        1e-3
    }
    fn default_sample_every() -> usize {
        50
    }
    fn default_w_threshold() -> f64 {
        1e-6
    }

    pub fn threshold(&self) -> f64 {
        self.threshold.unwrap_or(match self.expect {
            ShiftExpectation::Normal => 1e-4,
            ShiftExpectation::NonNormal => 1e-2,
        })
    }
}
