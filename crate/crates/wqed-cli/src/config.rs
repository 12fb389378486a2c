//! Run configuration: JSON file, `--set` overrides, defaults, validation.

use std::f64::consts::PI;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use wqed::{AmplitudeMode, ModelParams};
use wqed_numerics::MomentumGrid;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Spectrum,
    G2,
    G3,
    Poles,
    DetuningScan,
    Validate,
}

impl Observable {
    pub const ALL: [Observable; 6] = [
        Observable::Spectrum,
        Observable::G2,
        Observable::G3,
        Observable::Poles,
        Observable::DetuningScan,
        Observable::Validate,
    ];

    /// Stem of the CSV and sidecar files.
    pub fn as_str(self) -> &'static str {
        match self {
            Observable::Spectrum => "spectrum",
            Observable::G2 => "g2",
            Observable::G3 => "g3",
            Observable::Poles => "poles",
            Observable::DetuningScan => "detuning_scan",
            Observable::Validate => "validate",
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Observable {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|o| o.as_str() == s)
            .ok_or_else(|| format!("unknown observable `{s}`"))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelBlock {
    pub gamma: f64,
    #[serde(rename = "R")]
    pub r: f64,
    /// `k₀R/π`, reduced to `[0, 2)`.
    #[serde(rename = "k0R_over_pi", default = "default_phase")]
    pub k0r_over_pi: f64,
    #[serde(default)]
    pub delta: f64,
    #[serde(default = "default_fraction")]
    pub gamma1_fraction: f64,
}

fn default_phase() -> f64 {
    0.25
}

fn default_fraction() -> f64 {
    0.5
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    /// Relative power-balance residual accepted by `spectrum`.
    pub power: f64,
    pub pole_residual: f64,
    /// Two-photon vertex iteration.
    pub f12: f64,
    /// Adaptive energy refinement of the one-photon vertex family.
    pub family_refine: f64,
    pub self_energy: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            power: 1e-3,
            pole_residual: 1e-8,
            f12: 1e-6,
            family_refine: 2.5e-5,
            self_energy: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NumericsBlock {
    /// Cutoff of the two-photon amplitude grid; the vertex path runs to twice this.
    pub k_max: f64,
    /// Nodes on the vertex path.
    pub n_points: usize,
    /// Nodes on the amplitude grid used by `spectrum` and `g2`.
    pub spectrum_points: usize,
    /// Three-photon table `|k|, |q| ≤ q_k_max`.
    pub q_k_max: f64,
    pub q_points: usize,
    /// Path of the vertex family and the two-photon vertex.
    pub path_k_max: f64,
    pub path_points: usize,
    /// Initial energy nodes of the vertex family over `±path_k_max/2`.
    pub energy_grid_points: usize,
    pub table_points: usize,
    pub slice_points: usize,
    pub f12_max_iter: Option<usize>,
    /// Amplitude grid of `detuning_scan`.
    pub scan_k_max: f64,
    pub scan_points: usize,
    pub tolerances: Tolerances,
}

impl Default for NumericsBlock {
    fn default() -> Self {
        Self {
            k_max: 40.0,
            n_points: 1601,
            spectrum_points: 16001,
            q_k_max: 3.0,
            q_points: 301,
            path_k_max: 14.0,
            path_points: 401,
            energy_grid_points: 29,
            table_points: 281,
            slice_points: 241,
            f12_max_iter: Some(500),
            scan_k_max: 2.0,
            scan_points: 401,
            tolerances: Tolerances::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunBlock {
    pub mode: AmplitudeMode,
    pub observable: Observable,
    pub output_dir: PathBuf,
    /// Delay axis; `None` picks a window scaled by the leg separation.
    pub tau_min: Option<f64>,
    pub tau_max: Option<f64>,
    pub tau_points: Option<usize>,
    pub delta_min: f64,
    pub delta_max: f64,
    pub delta_points: usize,
    pub branches: Vec<i64>,
    pub cache: bool,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            mode: AmplitudeMode::Exact,
            observable: Observable::Spectrum,
            output_dir: PathBuf::from("out"),
            tau_min: None,
            tau_max: None,
            tau_points: None,
            delta_min: -2.0,
            delta_max: 2.0,
            delta_points: 41,
            branches: vec![-1, 0, 1],
            cache: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub model: ModelBlock,
    pub numerics: NumericsBlock,
    pub run: RunBlock,
}

/// `--set` override, `dotted.key=value`. The value is read as JSON and
/// falls back to a bare string.
#[derive(Debug, Clone, PartialEq)]
pub struct Override {
    pub path: Vec<String>,
    pub value: Value,
}

impl FromStr for Override {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (key, raw) = s.split_once('=').ok_or_else(|| CliError::Parse {
            context: format!("--set {s}"),
            message: "expected key=value".into(),
        })?;
        let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
        if path.iter().any(String::is_empty) {
            return Err(CliError::Parse {
                context: format!("--set {s}"),
                message: "empty key segment".into(),
            });
        }
        let value = serde_json::from_str(raw.trim()).unwrap_or_else(|_| Value::String(raw.trim().to_owned()));
        Ok(Self { path, value })
    }
}

fn apply(root: &mut Value, o: &Override) -> Result<(), CliError> {
    let context = || format!("--set {}", o.path.join("."));
    let mut node = root;
    for (depth, key) in o.path.iter().enumerate() {
        let map = node.as_object_mut().ok_or_else(|| CliError::Parse {
            context: context(),
            message: format!("`{}` is not an object", o.path[..depth].join(".")),
        })?;
        if depth + 1 == o.path.len() {
            map.insert(key.clone(), o.value.clone());
            return Ok(());
        }
        node = map.entry(key.clone()).or_insert_with(|| Value::Object(Map::new()));
    }
    Ok(())
}

fn block<T: DeserializeOwned>(root: &Map<String, Value>, key: &str, required: bool) -> Result<Option<T>, CliError> {
    match root.get(key) {
        None if required => Err(CliError::Parse {
            context: key.into(),
            message: "missing block".into(),
        }),
        None => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| CliError::Parse {
                context: key.into(),
                message: e.to_string(),
            }),
    }
}

impl RunConfig {
    /// Read `path` (or start from an empty document), apply overrides in
    /// order, fill defaults and validate.
    pub fn load(path: Option<&Path>, overrides: &[Override]) -> Result<Self, CliError> {
        let mut root = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| CliError::Parse {
                    context: path.display().to_string(),
                    message: e.to_string(),
                })?;
                serde_json::from_str(&text).map_err(|e| CliError::Parse {
                    context: format!("{} line {} column {}", path.display(), e.line(), e.column()),
                    message: e.to_string(),
                })?
            }
            None => Value::Object(Map::new()),
        };
        for o in overrides {
            apply(&mut root, o)?;
        }
        Self::from_value(root)
    }

    pub fn from_value(root: Value) -> Result<Self, CliError> {
        let Value::Object(map) = root else {
            return Err(CliError::Parse {
                context: "config".into(),
                message: "top level must be an object".into(),
            });
        };
        if let Some(key) = map.keys().find(|k| !["model", "numerics", "run"].contains(&k.as_str())) {
            return Err(CliError::Parse {
                context: key.clone(),
                message: format!("unknown block `{key}`, expected one of `model`, `numerics`, `run`"),
            });
        }
        let mut config = Self {
            model: block(&map, "model", true)?.expect("required block"),
            numerics: block(&map, "numerics", false)?.unwrap_or_default(),
            run: block(&map, "run", false)?.unwrap_or_default(),
        };
        config.model.k0r_over_pi = config.model.k0r_over_pi.rem_euclid(2.0);
        config.validate()?;
        Ok(config)
    }

    /// Every violated invariant, not just the first.
    pub fn validate(&self) -> Result<(), CliError> {
        let mut bad = Vec::new();
        let mut need = |ok: bool, field: &str, what: &str| {
            if !ok {
                bad.push(format!("{field}: {what}"));
            }
        };
        let m = &self.model;
        need(m.gamma.is_finite() && m.gamma > 0.0, "model.gamma", "must be positive");
        need(m.r.is_finite() && m.r >= 0.0, "model.R", "must be non-negative");
        need(m.k0r_over_pi.is_finite(), "model.k0R_over_pi", "must be finite");
        need(m.delta.is_finite(), "model.delta", "must be finite");
        need(
            m.gamma1_fraction > 0.0 && m.gamma1_fraction <= 1.0,
            "model.gamma1_fraction",
            "must lie in (0, 1]",
        );

        let n = &self.numerics;
        let odd = |x: usize| x >= 5 && x % 2 == 1;
        let positive = |x: f64| x.is_finite() && x > 0.0;
        need(positive(n.k_max), "numerics.k_max", "must be positive");
        need(odd(n.n_points), "numerics.n_points", "must be odd and at least 5");
        need(
            odd(n.spectrum_points),
            "numerics.spectrum_points",
            "must be odd and at least 5",
        );
        need(positive(n.q_k_max), "numerics.q_k_max", "must be positive");
        need(odd(n.q_points), "numerics.q_points", "must be odd and at least 5");
        need(positive(n.path_k_max), "numerics.path_k_max", "must be positive");
        need(odd(n.path_points), "numerics.path_points", "must be odd and at least 5");
        need(
            n.energy_grid_points >= 2,
            "numerics.energy_grid_points",
            "must be at least 2",
        );
        need(
            odd(n.table_points),
            "numerics.table_points",
            "must be odd and at least 5",
        );
        need(
            odd(n.slice_points),
            "numerics.slice_points",
            "must be odd and at least 5",
        );
        need(positive(n.scan_k_max), "numerics.scan_k_max", "must be positive");
        need(odd(n.scan_points), "numerics.scan_points", "must be odd and at least 5");
        let t = &n.tolerances;
        for (field, v) in [
            ("numerics.tolerances.power", t.power),
            ("numerics.tolerances.pole_residual", t.pole_residual),
            ("numerics.tolerances.f12", t.f12),
            ("numerics.tolerances.family_refine", t.family_refine),
            ("numerics.tolerances.self_energy", t.self_energy),
        ] {
            need(positive(v), field, "must be positive");
        }

        let r = &self.run;
        if r.observable == Observable::G3 {
            if r.mode == AmplitudeMode::Exact {
                need(
                    n.f12_max_iter.is_some_and(|x| x > 0),
                    "numerics.f12_max_iter",
                    "exact g3 needs a positive iteration budget",
                );
            }
            if matches!(r.mode, AmplitudeMode::Exact | AmplitudeMode::WeakCorrelation) {
                need(
                    n.path_k_max > 4.0 * n.q_k_max,
                    "numerics.path_k_max",
                    "vertex family must cover energies up to 2·q_k_max",
                );
            }
        }
        if let (Some(lo), Some(hi)) = (r.tau_min, r.tau_max) {
            need(
                lo.is_finite() && hi.is_finite() && hi > lo,
                "run.tau_max",
                "must exceed run.tau_min",
            );
        }
        need(
            r.tau_points.map_or(true, |x| x >= 3),
            "run.tau_points",
            "must be at least 3",
        );
        need(
            r.delta_min.is_finite() && r.delta_max.is_finite() && r.delta_max >= r.delta_min,
            "run.delta_max",
            "must be at least run.delta_min",
        );
        need(r.delta_points >= 1, "run.delta_points", "must be at least 1");
        need(!r.branches.is_empty(), "run.branches", "must not be empty");

        if bad.is_empty() {
            Ok(())
        } else {
            Err(CliError::Validation(bad))
        }
    }

    pub fn params(&self) -> Result<ModelParams, CliError> {
        let m = &self.model;
        ModelParams::asymmetric(m.gamma, m.gamma1_fraction, m.r, m.k0r_over_pi * PI, m.delta)
            .map_err(|e| CliError::Validation(vec![format!("model: {e}")]))
    }

    /// Vertex path `[−2k_max, 2k_max]`.
    pub fn vertex_grid(&self) -> Result<MomentumGrid, CliError> {
        grid(2.0 * self.numerics.k_max, self.numerics.n_points)
    }

    pub fn amplitude_grid(&self) -> Result<MomentumGrid, CliError> {
        grid(self.numerics.k_max, self.numerics.spectrum_points)
    }

    /// Delay axis for `g2` (`±4R`, 401 points) or `g3` (`±2.5R`, 201 points)
    /// unless configured.
    pub fn taus(&self) -> Vec<f64> {
        let third = self.run.observable == Observable::G3;
        let scale = if self.model.r > 0.0 {
            self.model.r
        } else {
            1.0 / self.model.gamma
        };
        let half = if third { 2.5 * scale } else { 4.0 * scale };
        let lo = self.run.tau_min.unwrap_or(-half);
        let hi = self.run.tau_max.unwrap_or(half);
        let n = self.run.tau_points.unwrap_or(if third { 201 } else { 401 });
        linspace(lo, hi, n)
    }

    pub fn deltas(&self) -> Vec<f64> {
        linspace(self.run.delta_min, self.run.delta_max, self.run.delta_points)
    }
}

pub(crate) fn grid(k_max: f64, n: usize) -> Result<MomentumGrid, CliError> {
    MomentumGrid::uniform(k_max, n).map_err(|e| CliError::Validation(vec![format!("grid ±{k_max}/{n}: {e}")]))
}

pub(crate) fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let h = (hi - lo) / (n - 1) as f64;
    if lo == -hi && n % 2 == 1 {
        // Symmetric axes keep an exact zero and exact mirror pairs.
        let c = (n / 2) as f64;
        return (0..n).map(|i| h * (i as f64 - c)).collect();
    }
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + h * i as f64 })
        .collect()
}
