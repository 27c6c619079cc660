//! Run configuration: structured key/value text with dotted sections.
//!
//! A configuration file is TOML with the sections `[grid]`, `[potential]`,
//! `[frame]`, `[time]`, `[initial]`, `[diagnostics]`, `[output]`, and — for
//! parameter scans — `[sweep]`. Unknown keys anywhere are hard errors:
//! sweeps mutate configurations programmatically, and a silently ignored
//! misspelling would invalidate an entire batch. Every validation failure
//! carries the dotted key path of the offending entry.
//!
//! # Environment overrides
//!
//! Any scalar key can be overridden by an environment variable named
//! `KSFLOW_<SECTION>_<KEY>` (upper case): `KSFLOW_GRID_N=128` overrides
//! `grid.n`, `KSFLOW_INITIAL_MOMENTUM_SCALE=0.25` overrides
//! `initial.momentum_scale`. The first underscore separates the section from
//! the key; the value is parsed as a TOML scalar (arrays use TOML syntax,
//! e.g. `KSFLOW_DIAGNOSTICS_FIT_WINDOW='[0.15, 0.01]'`). Overrides are
//! applied after the file is parsed and before validation, so an override
//! naming an unknown key is rejected exactly like an unknown key in the
//! file. Precedence is file < environment < command-line flags.
//!
//! # Sections
//!
//! | section       | keys                                                           |
//! |---------------|----------------------------------------------------------------|
//! | `grid`        | `dim`, `n`, `length`                                           |
//! | `potential`   | `lambda`, `alpha`, `mu`, `beta`, `truncation_radius` (optional)|
//! | `frame`       | `kind`, `start`, `end`, `hartree_exponent`*, `exchange_exponent`* |
//! | `time`        | `policy` (`"fixed"` \| `"logarithmic"`), `dt`*, `delta`*       |
//! | `initial`     | `rank`, `seed`, `epsilon0`, `sobolev_m`, `width`, `momentum_scale`, `center_spread` |
//! | `diagnostics` | `samples`, `scattering`, `fit_window` (optional `[hi, lo]`)    |
//! | `output`      | `directory`, `checkpoint_every`                                |
//! | `sweep`       | `lambda`, `mu`, `alpha`, `beta`, `epsilon0`, `n`, `dt` (lists) |
//!
//! (* conditionally required; see the section types.)
//!
//! # Time stepping policies
//!
//! Diagnostic sample times are geometrically spaced between `frame.start`
//! and `frame.end` (both strictly positive). Between consecutive samples the
//! integrator takes uniform steps whose count is set by the policy:
//! `fixed` caps the step size at `dt`; `logarithmic` caps the step size in
//! logarithmic time at `delta`, so steps shrink proportionally to the frame
//! time — the natural refinement when integrating a compactified frame
//! toward `s → 0`.

use std::collections::BTreeMap;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpectralGrid;
use crate::potentials::{FrameLaw, PotentialSpec};
use crate::state::InitialDataSpec;

/// Prefix for environment-variable overrides.
pub const ENV_PREFIX: &str = "KSFLOW_";

fn config_err(path: &str, detail: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        detail: detail.into(),
    }
}

/// Spatial grid parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    /// Spatial dimension (1, 2, or 3).
    pub dim: usize,
    /// Points per axis (even, ≥ 4).
    pub n: usize,
    /// Box side length.
    pub length: f64,
}

/// Interaction parameters: `V(ρ) = λ (|·|^{-α} ∗ ρ) + μ ρ^β`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub lambda: f64,
    pub alpha: f64,
    pub mu: f64,
    pub beta: f64,
    /// Optional compact support radius for the convolution kernel.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truncation_radius: Option<f64>,
}

/// Which frame the run integrates in, and how the potential coefficients
/// scale with the frame time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FrameKind {
    /// Physical frame: coefficients `(1, 1)`, time increases.
    Fixed,
    /// Compactified frame at critical coupling: coefficients `(1/s, 1/s)`.
    CompactCritical,
    /// Compactified frame with power-law coefficients `(s^a, s^b)`.
    CompactPower,
}

/// Frame selection and the time span of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameSection {
    pub kind: FrameKind,
    /// Hartree coefficient exponent for `compact-power`; defaults to `α − 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hartree_exponent: Option<f64>,
    /// Exchange coefficient exponent for `compact-power`; defaults to `3β − 2`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub exchange_exponent: Option<f64>,
    /// Initial frame time (strictly positive).
    pub start: f64,
    /// Final frame time (strictly positive, ≠ start).
    pub end: f64,
}

/// Step-size policy identifiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DtPolicyKind {
    /// Uniform cap `dt` on the step size.
    Fixed,
    /// Uniform cap `delta` on the step size in logarithmic time.
    Logarithmic,
}

/// Time-step policy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeSection {
    pub policy: DtPolicyKind,
    /// Step-size cap; required (and only meaningful) for `policy = "fixed"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    /// Log-time step cap; required (and only meaningful) for `policy = "logarithmic"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta: Option<f64>,
}

fn default_width() -> f64 {
    1.0
}
fn default_momentum_scale() -> f64 {
    0.5
}
fn default_center_spread() -> f64 {
    1.0
}

/// Randomized initial-data parameters (see the state module).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub rank: usize,
    pub seed: u64,
    /// Target value of the smallness functional.
    pub epsilon0: f64,
    /// Sobolev/weight exponent used both for data generation and diagnostics.
    pub sobolev_m: f64,
    /// Base Gaussian width (default 1.0).
    #[serde(default = "default_width")]
    pub width: f64,
    /// Scale of random momentum kicks (default 0.5).
    #[serde(default = "default_momentum_scale")]
    pub momentum_scale: f64,
    /// Half-width of the center distribution (default 1.0).
    #[serde(default = "default_center_spread")]
    pub center_spread: f64,
}

fn default_samples() -> usize {
    64
}

/// Diagnostic sampling schedule and optional scattering analysis.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Number of diagnostic records (geometric schedule, both endpoints
    /// included; ≥ 2).
    #[serde(default = "default_samples")]
    pub samples: usize,
    /// Accumulate the long-range phase and emit a scattering report.
    /// Requires a compactified frame integrated toward `s → 0`.
    #[serde(default)]
    pub scattering: bool,
    /// Restrict decay fits to sample times within `[max, min]` (given in the
    /// run's time direction; order-insensitive). Default: all samples.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit_window: Option<[f64; 2]>,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self {
            samples: default_samples(),
            scattering: false,
            fit_window: None,
        }
    }
}

fn default_directory() -> String {
    "out".to_string()
}
fn default_checkpoint_every() -> usize {
    8
}

/// Output directory and snapshot cadence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Run directory (created if absent); `--out` overrides.
    #[serde(default = "default_directory")]
    pub directory: String,
    /// Write a state snapshot every k-th diagnostic sample (0 = final only;
    /// the final state is always written).
    #[serde(default = "default_checkpoint_every")]
    pub checkpoint_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            checkpoint_every: default_checkpoint_every(),
        }
    }
}

/// Cartesian sweep axes. Empty lists are not swept. The product of all
/// non-empty axes is enumerated in the fixed order
/// `lambda, mu, alpha, beta, epsilon0, n, dt` (last axis fastest).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub lambda: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub mu: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub alpha: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub beta: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub epsilon0: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub n: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub dt: Vec<f64>,
}

impl SweepSection {
    /// True when no axis has entries.
    pub fn is_empty(&self) -> bool {
        self.lambda.is_empty()
            && self.mu.is_empty()
            && self.alpha.is_empty()
            && self.beta.is_empty()
            && self.epsilon0.is_empty()
            && self.n.is_empty()
            && self.dt.is_empty()
    }

    /// Total number of sweep points (product of non-empty axis lengths).
    pub fn point_count(&self) -> usize {
        let f = |k: usize| if k == 0 { 1 } else { k };
        f(self.lambda.len())
            * f(self.mu.len())
            * f(self.beta.len())
            * f(self.alpha.len())
            * f(self.epsilon0.len())
            * f(self.n.len())
            * f(self.dt.len())
    }
}

/// A complete, self-contained run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridSection,
    pub potential: PotentialSection,
    pub frame: FrameSection,
    pub time: TimeSection,
    pub initial: InitialSection,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
}

/// Deserialize a parsed TOML table into `T`, reporting the dotted key path
/// of the offending entry (e.g. `grid.typo_key: unknown field ...`).
pub(crate) fn table_into<T: serde::de::DeserializeOwned>(
    table: toml::Table,
    source: &str,
) -> Result<T> {
    use serde::de::IntoDeserializer;
    serde_path_to_error::deserialize(table.into_deserializer()).map_err(
        |e: serde_path_to_error::Error<toml::de::Error>| {
            let path = e.path().to_string();
            let message = e.inner().message();
            let detail = if path.is_empty() || path == "." {
                message.to_string()
            } else {
                format!("at key `{path}`: {message}")
            };
            config_err(source, detail)
        },
    )
}

impl RunConfig {
    /// Parse a TOML document, apply `KSFLOW_*` environment overrides, and
    /// validate. `source` names the document in error messages.
    pub fn from_toml(text: &str, source: &str) -> Result<Self> {
        let mut table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| config_err(source, e.message()))?;
        apply_env_overrides(&mut table, std::env::vars())?;
        let config: RunConfig = table_into(table, source)?;
        config.validate()?;
        Ok(config)
    }

    /// Serialize back to TOML (used for the manifest echo).
    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("run configuration serializes to TOML")
    }

    /// Check every cross-field constraint, reporting the dotted key path.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if !(1..=3).contains(&g.dim) {
            return Err(config_err("grid.dim", "must be 1, 2, or 3"));
        }
        if g.n < 4 || g.n % 2 != 0 {
            return Err(config_err("grid.n", "must be even and at least 4"));
        }
        if !(g.length.is_finite() && g.length > 0.0) {
            return Err(config_err("grid.length", "must be positive and finite"));
        }

        let p = &self.potential;
        for (key, value) in [
            ("potential.lambda", p.lambda),
            ("potential.alpha", p.alpha),
            ("potential.mu", p.mu),
            ("potential.beta", p.beta),
        ] {
            if !value.is_finite() {
                return Err(config_err(key, "must be finite"));
            }
        }
        if !(p.alpha > 0.0 && p.alpha < g.dim as f64) {
            return Err(config_err(
                "potential.alpha",
                "must satisfy 0 < alpha < dim",
            ));
        }
        if p.beta <= 0.0 {
            return Err(config_err("potential.beta", "must be positive"));
        }
        if let Some(rc) = p.truncation_radius {
            if !(rc.is_finite() && rc > 0.0 && rc <= g.length / 2.0) {
                return Err(config_err(
                    "potential.truncation_radius",
                    "must lie in (0, length/2]",
                ));
            }
        }

        let f = &self.frame;
        if !(f.start.is_finite() && f.start > 0.0) {
            return Err(config_err("frame.start", "must be positive and finite"));
        }
        if !(f.end.is_finite() && f.end > 0.0) {
            return Err(config_err("frame.end", "must be positive and finite"));
        }
        if f.start == f.end {
            return Err(config_err("frame.end", "must differ from frame.start"));
        }
        if f.kind != FrameKind::CompactPower
            && (f.hartree_exponent.is_some() || f.exchange_exponent.is_some())
        {
            return Err(config_err(
                "frame.hartree_exponent",
                "coefficient exponents are only meaningful for kind = \"compact-power\"",
            ));
        }
        if let Some(a) = f.hartree_exponent {
            if !a.is_finite() {
                return Err(config_err("frame.hartree_exponent", "must be finite"));
            }
        }
        if let Some(b) = f.exchange_exponent {
            if !b.is_finite() {
                return Err(config_err("frame.exchange_exponent", "must be finite"));
            }
        }

        let t = &self.time;
        match t.policy {
            DtPolicyKind::Fixed => {
                match t.dt {
                    Some(dt) if dt.is_finite() && dt > 0.0 => {}
                    _ => {
                        return Err(config_err(
                            "time.dt",
                            "policy = \"fixed\" requires a positive finite dt",
                        ))
                    }
                }
                if t.delta.is_some() {
                    return Err(config_err(
                        "time.delta",
                        "not meaningful with policy = \"fixed\"",
                    ));
                }
            }
            DtPolicyKind::Logarithmic => {
                match t.delta {
                    Some(d) if d.is_finite() && d > 0.0 => {}
                    _ => {
                        return Err(config_err(
                            "time.delta",
                            "policy = \"logarithmic\" requires a positive finite delta",
                        ))
                    }
                }
                if t.dt.is_some() {
                    return Err(config_err(
                        "time.dt",
                        "not meaningful with policy = \"logarithmic\"",
                    ));
                }
            }
        }

        let i = &self.initial;
        if i.rank == 0 || i.rank > 64 {
            return Err(config_err("initial.rank", "must satisfy 1 ≤ rank ≤ 64"));
        }
        if !(i.epsilon0.is_finite() && i.epsilon0 > 0.0) {
            return Err(config_err("initial.epsilon0", "must be positive and finite"));
        }
        if !(i.sobolev_m.is_finite() && i.sobolev_m >= 0.0) {
            return Err(config_err("initial.sobolev_m", "must be non-negative"));
        }
        for (key, value) in [
            ("initial.width", i.width),
            ("initial.momentum_scale", i.momentum_scale),
            ("initial.center_spread", i.center_spread),
        ] {
            if !(value.is_finite() && value >= 0.0) {
                return Err(config_err(key, "must be non-negative and finite"));
            }
        }
        if i.width <= 0.0 {
            return Err(config_err("initial.width", "must be positive"));
        }

        let d = &self.diagnostics;
        if d.samples < 2 {
            return Err(config_err("diagnostics.samples", "must be at least 2"));
        }
        if d.scattering {
            if self.frame.kind == FrameKind::Fixed {
                return Err(config_err(
                    "diagnostics.scattering",
                    "requires a compactified frame (kind = \"compact-critical\" or \"compact-power\")",
                ));
            }
            if f.start <= f.end {
                return Err(config_err(
                    "diagnostics.scattering",
                    "requires a span integrated toward s → 0 (frame.start > frame.end)",
                ));
            }
        }
        if let Some([a, b]) = d.fit_window {
            if !(a.is_finite() && b.is_finite() && a > 0.0 && b > 0.0 && a != b) {
                return Err(config_err(
                    "diagnostics.fit_window",
                    "entries must be positive, finite, and distinct",
                ));
            }
        }

        if self.output.directory.is_empty() {
            return Err(config_err("output.directory", "must be non-empty"));
        }

        if let Some(sweep) = &self.sweep {
            for (key, values) in [
                ("sweep.lambda", &sweep.lambda),
                ("sweep.mu", &sweep.mu),
                ("sweep.alpha", &sweep.alpha),
                ("sweep.beta", &sweep.beta),
                ("sweep.epsilon0", &sweep.epsilon0),
                ("sweep.dt", &sweep.dt),
            ] {
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(config_err(key, "axis entries must be finite"));
                }
            }
            if !sweep.dt.is_empty() && t.policy != DtPolicyKind::Fixed {
                return Err(config_err(
                    "sweep.dt",
                    "requires time.policy = \"fixed\"",
                ));
            }
        }
        Ok(())
    }

    /// Construct the spatial grid.
    pub fn build_grid(&self) -> Result<Arc<SpectralGrid<f64>>> {
        SpectralGrid::new(self.grid.dim, self.grid.n, self.grid.length)
    }

    /// Interaction parameters as consumed by the potential module.
    pub fn potential_spec(&self) -> PotentialSpec<f64> {
        PotentialSpec {
            lambda: self.potential.lambda,
            alpha: self.potential.alpha,
            mu: self.potential.mu,
            beta: self.potential.beta,
            truncation_radius: self.potential.truncation_radius,
        }
    }

    /// Frame law with `compact-power` exponents defaulted to
    /// `(α − 2, 3β − 2)` when not given explicitly.
    pub fn frame_law(&self) -> FrameLaw<f64> {
        match self.frame.kind {
            FrameKind::Fixed => FrameLaw::Fixed,
            FrameKind::CompactCritical => FrameLaw::CompactCritical,
            FrameKind::CompactPower => FrameLaw::CompactPower {
                hartree_exponent: self
                    .frame
                    .hartree_exponent
                    .unwrap_or(self.potential.alpha - 2.0),
                exchange_exponent: self
                    .frame
                    .exchange_exponent
                    .unwrap_or(3.0 * self.potential.beta - 2.0),
            },
        }
    }

    /// Initial-data parameters, posed at `frame.start`.
    pub fn initial_spec(&self) -> InitialDataSpec<f64> {
        InitialDataSpec {
            rank: self.initial.rank,
            seed: self.initial.seed,
            epsilon0: self.initial.epsilon0,
            sobolev_m: self.initial.sobolev_m,
            width: self.initial.width,
            momentum_scale: self.initial.momentum_scale,
            center_spread: self.initial.center_spread,
            time: self.frame.start,
        }
    }

    /// Geometric diagnostic schedule from `frame.start` to `frame.end`,
    /// inclusive on both ends, with `diagnostics.samples` entries.
    pub fn sample_times(&self) -> Vec<f64> {
        let k = self.diagnostics.samples;
        let (a, b) = (self.frame.start, self.frame.end);
        let ratio = b / a;
        let mut times: Vec<f64> = (0..k)
            .map(|j| a * ratio.powf(j as f64 / (k - 1) as f64))
            .collect();
        times[0] = a;
        times[k - 1] = b;
        times
    }

    /// Number of integrator steps for the span `[a, b]` under the policy.
    pub fn steps_for(&self, a: f64, b: f64) -> usize {
        let measure = match self.time.policy {
            DtPolicyKind::Fixed => (b - a).abs() / self.time.dt.expect("validated"),
            DtPolicyKind::Logarithmic => {
                (b / a).ln().abs() / self.time.delta.expect("validated")
            }
        };
        (measure - 1e-9).ceil().max(1.0) as usize
    }
}

/// Overlay `KSFLOW_<SECTION>_<KEY>` environment variables onto a parsed
/// TOML table. Returns the dotted keys that were overridden.
pub fn apply_env_overrides(
    table: &mut toml::Table,
    vars: impl Iterator<Item = (String, String)>,
) -> Result<Vec<String>> {
    let mut overridden: BTreeMap<String, toml::Value> = BTreeMap::new();
    for (name, raw) in vars {
        let Some(rest) = name.strip_prefix(ENV_PREFIX) else {
            continue;
        };
        let Some((section, key)) = rest.split_once('_') else {
            return Err(config_err(
                &name,
                "expected KSFLOW_<SECTION>_<KEY> with an underscore separator",
            ));
        };
        let section = section.to_ascii_lowercase();
        let key = key.to_ascii_lowercase();
        let value = parse_env_value(&raw);
        overridden.insert(format!("{section}.{key}"), value);
    }
    let mut applied = Vec::new();
    for (path, value) in overridden {
        let (section, key) = path.split_once('.').expect("constructed with a dot");
        let entry = table
            .entry(section.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(section_table) = entry else {
            return Err(config_err(section, "is not a table"));
        };
        section_table.insert(key.to_string(), value);
        applied.push(path);
    }
    Ok(applied)
}

/// Parse an override value as a TOML scalar, falling back to a string.
fn parse_env_value(raw: &str) -> toml::Value {
    let attempt: std::result::Result<toml::Table, _> = format!("v = {raw}").parse();
    match attempt {
        Ok(mut t) => t.remove("v").expect("key v just inserted"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Built-in run configurations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    /// Free flow in the physical frame: conservation smoke test.
    Free,
    /// Two-dimensional critical run integrated to `s = 10⁻²` with
    /// scattering analysis (256² grid, rank 2).
    Critical2d,
    /// Three-dimensional critical run on a 64³ grid, rank 1, to `s = 0.1`.
    Critical3dSmall,
    /// Three-dimensional run above critical coupling (α = 1.2, β = 0.45):
    /// the unmodified profile is already Cauchy.
    SubcriticalAppendixB,
}

impl Preset {
    pub const ALL: [Preset; 4] = [
        Preset::Free,
        Preset::Critical2d,
        Preset::Critical3dSmall,
        Preset::SubcriticalAppendixB,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            Preset::Free => "free",
            Preset::Critical2d => "critical2d",
            Preset::Critical3dSmall => "critical3d-small",
            Preset::SubcriticalAppendixB => "subcritical-appendixB",
        }
    }

    /// Look up by command-line name.
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|p| p.name() == name)
    }

    /// The full configuration for this preset.
    pub fn config(self) -> RunConfig {
        let config = match self {
            Preset::Free => RunConfig {
                grid: GridSection {
                    dim: 2,
                    n: 64,
                    length: 32.0,
                },
                potential: PotentialSection {
                    lambda: 0.0,
                    alpha: 1.0,
                    mu: 0.0,
                    beta: 1.0,
                    truncation_radius: None,
                },
                frame: FrameSection {
                    kind: FrameKind::Fixed,
                    hartree_exponent: None,
                    exchange_exponent: None,
                    start: 1.0,
                    end: 4.0,
                },
                time: TimeSection {
                    policy: DtPolicyKind::Fixed,
                    dt: Some(0.01),
                    delta: None,
                },
                initial: InitialSection {
                    rank: 1,
                    seed: 1,
                    epsilon0: 0.1,
                    sobolev_m: 1.0,
                    width: default_width(),
                    momentum_scale: default_momentum_scale(),
                    center_spread: default_center_spread(),
                },
                diagnostics: DiagnosticsSection {
                    samples: 33,
                    scattering: false,
                    fit_window: None,
                },
                output: OutputSection::default(),
                sweep: None,
            },
            Preset::Critical2d => RunConfig {
                grid: GridSection {
                    dim: 2,
                    n: 256,
                    length: 30.0,
                },
                potential: PotentialSection {
                    lambda: 0.5,
                    alpha: 1.0,
                    mu: 0.5,
                    beta: 0.5,
                    truncation_radius: None,
                },
                frame: FrameSection {
                    kind: FrameKind::CompactCritical,
                    hartree_exponent: None,
                    exchange_exponent: None,
                    start: 1.0,
                    end: 0.01,
                },
                time: TimeSection {
                    policy: DtPolicyKind::Fixed,
                    dt: Some(5.0e-4),
                    delta: None,
                },
                initial: InitialSection {
                    rank: 2,
                    seed: 7,
                    epsilon0: 0.1,
                    sobolev_m: 1.6,
                    width: default_width(),
                    momentum_scale: default_momentum_scale(),
                    center_spread: default_center_spread(),
                },
                diagnostics: DiagnosticsSection {
                    samples: 96,
                    scattering: true,
                    fit_window: None,
                },
                output: OutputSection::default(),
                sweep: None,
            },
            Preset::Critical3dSmall => RunConfig {
                grid: GridSection {
                    dim: 3,
                    n: 64,
                    length: 20.0,
                },
                potential: PotentialSection {
                    lambda: 0.5,
                    alpha: 1.0,
                    mu: 0.5,
                    beta: 1.0 / 3.0,
                    truncation_radius: None,
                },
                frame: FrameSection {
                    kind: FrameKind::CompactCritical,
                    hartree_exponent: None,
                    exchange_exponent: None,
                    start: 1.0,
                    end: 0.1,
                },
                time: TimeSection {
                    policy: DtPolicyKind::Fixed,
                    dt: Some(1.0e-3),
                    delta: None,
                },
                initial: InitialSection {
                    rank: 1,
                    seed: 11,
                    epsilon0: 0.1,
                    sobolev_m: 1.6,
                    width: default_width(),
                    momentum_scale: default_momentum_scale(),
                    center_spread: default_center_spread(),
                },
                diagnostics: DiagnosticsSection {
                    samples: 48,
                    scattering: true,
                    fit_window: None,
                },
                output: OutputSection::default(),
                sweep: None,
            },
            Preset::SubcriticalAppendixB => RunConfig {
                grid: GridSection {
                    dim: 3,
                    n: 32,
                    length: 16.0,
                },
                potential: PotentialSection {
                    lambda: 0.5,
                    alpha: 1.2,
                    mu: 0.5,
                    beta: 0.45,
                    truncation_radius: None,
                },
                frame: FrameSection {
                    kind: FrameKind::CompactPower,
                    hartree_exponent: None,
                    exchange_exponent: None,
                    start: 1.0,
                    end: 0.1,
                },
                time: TimeSection {
                    policy: DtPolicyKind::Fixed,
                    dt: Some(2.0e-3),
                    delta: None,
                },
                initial: InitialSection {
                    rank: 1,
                    seed: 13,
                    epsilon0: 0.1,
                    sobolev_m: 1.6,
                    width: default_width(),
                    momentum_scale: default_momentum_scale(),
                    center_spread: default_center_spread(),
                },
                diagnostics: DiagnosticsSection {
                    samples: 48,
                    scattering: true,
                    fit_window: None,
                },
                output: OutputSection::default(),
                sweep: None,
            },
        };
        debug_assert!(config.validate().is_ok());
        config
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn minimal_toml() -> &'static str {
        r#"
            [grid]
            dim = 2
            n = 32
            length = 16.0

            [potential]
            lambda = 0.5
            alpha = 1.0
            mu = 0.5
            beta = 0.5

            [frame]
            kind = "compact-critical"
            start = 1.0
            end = 0.1

            [time]
            policy = "fixed"
            dt = 0.001

            [initial]
            rank = 2
            seed = 42
            epsilon0 = 0.1
            sobolev_m = 1.6
        "#
    }

    #[test]
    fn parses_and_round_trips() {
        let config = RunConfig::from_toml(minimal_toml(), "<test>").unwrap();
        assert_eq!(config.grid.n, 32);
        assert_eq!(config.initial.width, 1.0);
        assert_eq!(config.diagnostics.samples, 64);
        assert!(!config.diagnostics.scattering);
        let echoed = config.to_toml_string();
        let reparsed = RunConfig::from_toml(&echoed, "<echo>").unwrap();
        assert_eq!(config, reparsed);
    }

    #[test]
    fn unknown_keys_are_hard_errors() {
        let text = format!("{}\n[grid2]\nfoo = 1\n", minimal_toml());
        let err = RunConfig::from_toml(&text, "<test>").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("grid2"), "message should name the key: {msg}");

        let text = minimal_toml().replace("length = 16.0", "length = 16.0\nlenght = 8.0");
        let err = RunConfig::from_toml(&text, "<test>").unwrap_err();
        assert!(err.to_string().contains("lenght"), "got: {err}");
    }

    #[test]
    fn validation_reports_dotted_paths() {
        let text = minimal_toml().replace("alpha = 1.0", "alpha = 2.5");
        let err = RunConfig::from_toml(&text, "<test>").unwrap_err();
        assert!(err.to_string().contains("potential.alpha"), "got: {err}");

        let text = minimal_toml().replace("dt = 0.001", "dt = -0.001");
        let err = RunConfig::from_toml(&text, "<test>").unwrap_err();
        assert!(err.to_string().contains("time.dt"), "got: {err}");

        let text = minimal_toml().replace("kind = \"compact-critical\"", "kind = \"fixed\"");
        let mut config = RunConfig::from_toml(&text, "<test>").unwrap();
        config.diagnostics.scattering = true;
        let err = config.validate().unwrap_err();
        assert!(
            err.to_string().contains("diagnostics.scattering"),
            "got: {err}"
        );
    }

    #[test]
    fn env_overrides_take_effect_and_reject_unknown_keys() {
        let mut table: toml::Table = minimal_toml().parse().unwrap();
        let vars = vec![
            ("KSFLOW_GRID_N".to_string(), "64".to_string()),
            ("KSFLOW_INITIAL_SOBOLEV_M".to_string(), "1.0".to_string()),
            ("OTHER_VAR".to_string(), "ignored".to_string()),
        ];
        let applied = apply_env_overrides(&mut table, vars.into_iter()).unwrap();
        assert_eq!(applied, vec!["grid.n", "initial.sobolev_m"]);
        let config: RunConfig = table.try_into().unwrap();
        assert_eq!(config.grid.n, 64);
        assert_eq!(config.initial.sobolev_m, 1.0);

        let mut table: toml::Table = minimal_toml().parse().unwrap();
        let vars = vec![("KSFLOW_GRID_M".to_string(), "7".to_string())];
        apply_env_overrides(&mut table, vars.into_iter()).unwrap();
        let err = table.try_into::<RunConfig>().unwrap_err();
        assert!(err.to_string().contains("unknown field"), "got: {err}");
    }

    #[test]
    fn schedule_is_geometric_and_lands_exactly() {
        let config = RunConfig::from_toml(minimal_toml(), "<test>").unwrap();
        let times = config.sample_times();
        assert_eq!(times.len(), 64);
        assert_eq!(times[0], 1.0);
        assert_eq!(times[63], 0.1);
        for w in times.windows(2) {
            assert!(w[1] < w[0]);
        }
        let ratios: Vec<f64> = times.windows(2).map(|w| w[1] / w[0]).collect();
        for r in &ratios {
            assert!((r - ratios[0]).abs() < 1e-12);
        }
    }

    #[test]
    fn step_counts_follow_the_policy() {
        let config = RunConfig::from_toml(minimal_toml(), "<test>").unwrap();
        assert_eq!(config.steps_for(1.0, 0.9), 100);
        assert_eq!(config.steps_for(0.2, 0.1995), 1);

        let text = minimal_toml().replace(
            "policy = \"fixed\"\n            dt = 0.001",
            "policy = \"logarithmic\"\n            delta = 0.01",
        );
        let config = RunConfig::from_toml(&text, "<test>").unwrap();
        let n = config.steps_for(1.0, 0.5);
        assert_eq!(n, (0.5f64.ln().abs() / 0.01).ceil() as usize);
    }

    #[test]
    fn presets_validate_and_have_distinct_names() {
        let mut names = Vec::new();
        for preset in Preset::ALL {
            let config = preset.config();
            config.validate().unwrap();
            config.build_grid().unwrap();
            names.push(preset.name());
            assert_eq!(Preset::from_name(preset.name()), Some(preset));
        }
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), Preset::ALL.len());
    }

    #[test]
    fn compact_power_exponents_default_from_the_potential() {
        let text = minimal_toml()
            .replace("kind = \"compact-critical\"", "kind = \"compact-power\"")
            .replace("alpha = 1.0", "alpha = 1.2")
            .replace("beta = 0.5", "beta = 0.45")
            .replace("dim = 2", "dim = 3");
        let config = RunConfig::from_toml(&text, "<test>").unwrap();
        match config.frame_law() {
            FrameLaw::CompactPower {
                hartree_exponent,
                exchange_exponent,
            } => {
                assert!((hartree_exponent - (1.2 - 2.0)).abs() < 1e-15);
                assert!((exchange_exponent - (3.0 * 0.45 - 2.0)).abs() < 1e-15);
            }
            other => panic!("expected compact-power, got {other:?}"),
        }
    }
}
