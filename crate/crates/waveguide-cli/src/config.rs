//! Run configuration: TOML in, canonical JSON hash out.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use waveguide::eigensolve::SolverOptions;
use waveguide::geometry::{make_bump_profile, CurvatureProfile, GuideGeometry};
use waveguide::hamiltonian::GridSpec;
use waveguide::resonance::{GridRule, ResonanceSettings};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub geometry: GeometryBlock,
    #[serde(default)]
    pub field: FieldBlock,
    pub grid: GridBlock,
    #[serde(default)]
    pub distortion: DistortionBlock,
    #[serde(default)]
    pub solver: SolverBlock,
    #[serde(default)]
    pub output: OutputBlock,
    #[serde(default)]
    pub validate: ValidateBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometryBlock {
    pub d: f64,
    pub profile: ProfileBlock,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ProfileBlock {
    Straight,
    Bump {
        gamma_max: f64,
        s0: f64,
        #[serde(default = "default_order")]
        order: u32,
    },
}

fn default_order() -> u32 {
    2
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldBlock {
    pub f: Option<f64>,
    pub f_list: Option<Vec<f64>>,
    pub eta: Option<f64>,
    /// Sets `η = eta_alpha0_fraction · α₀`; exclusive with `eta`.
    pub eta_alpha0_fraction: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub l_minus: f64,
    pub l_plus: f64,
    pub n_s: usize,
    pub n_u: usize,
    /// Field-adapted grids for `resonance` and `sweep`; the fixed grid then only sets the
    /// bound-state reference domain.
    pub adaptive: Option<AdaptiveBlock>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AdaptiveBlock {
    pub layer_points: f64,
    pub absorption: f64,
    pub h_max: f64,
}

impl Default for AdaptiveBlock {
    fn default() -> Self {
        let r = GridRule::default();
        AdaptiveBlock { layer_points: r.layer_points, absorption: r.absorption, h_max: r.h_max }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DistortionBlock {
    pub alpha: f64,
    pub alpha_prime: f64,
    pub beta_count: usize,
    pub beta_grid: Vec<f64>,
    pub e: Option<f64>,
    pub delta_e: Option<f64>,
    pub trust_fraction: f64,
    pub continuum_margin: f64,
    pub plateau_fraction: f64,
}

impl Default for DistortionBlock {
    fn default() -> Self {
        let s = ResonanceSettings::default();
        DistortionBlock {
            alpha: s.alpha,
            alpha_prime: s.alpha_prime,
            beta_count: s.beta_count,
            beta_grid: s.beta_grid,
            e: None,
            delta_e: None,
            trust_fraction: s.trust_fraction,
            continuum_margin: s.continuum_margin,
            plateau_fraction: s.plateau_fraction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverBlock {
    pub k: usize,
    pub tol: f64,
    pub seed: u64,
    pub krylov_dim: usize,
    pub max_iter: usize,
}

impl Default for SolverBlock {
    fn default() -> Self {
        let s = ResonanceSettings::default().solver;
        SolverBlock { k: s.k, tol: s.tol, seed: s.seed, krylov_dim: s.krylov_dim, max_iter: s.max_iter }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputBlock {
    pub dir: PathBuf,
    pub records: String,
    pub csv: bool,
}

impl Default for OutputBlock {
    fn default() -> Self {
        OutputBlock { dir: PathBuf::from("out"), records: "records.jsonl".into(), csv: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidateBlock {
    pub tilted_f: Vec<f64>,
    pub tilted_eta: f64,
    pub tilted_n_u: usize,
    pub airy_lambda: f64,
    pub airy_left: f64,
    pub airy_step: f64,
    pub weyl_energies: Vec<f64>,
    pub weyl_n: Vec<u32>,
    pub weyl_alpha_exp: f64,
}

impl Default for ValidateBlock {
    fn default() -> Self {
        ValidateBlock {
            tilted_f: vec![0.25, 0.5, 1.0],
            tilted_eta: 0.8,
            tilted_n_u: 1999,
            airy_lambda: 2.0,
            airy_left: -60.0,
            airy_step: 0.01,
            weyl_energies: vec![-1.0, 5.0],
            weyl_n: vec![4, 6, 8],
            weyl_alpha_exp: 0.6,
        }
    }
}

#[derive(Debug)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

/// Sets `key` (dotted path) to `raw`, parsed as a TOML scalar or taken as a bare string.
fn apply_override(root: &mut toml::Table, key: &str, raw: &str) -> Result<(), ConfigError> {
    let value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap(),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    if value.is_table() || value.is_array() {
        return Err(ConfigError(format!("override {key}: only scalar values are allowed")));
    }
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError(format!("override key '{key}' is malformed")));
    }
    let mut table = root;
    for p in &parts[..parts.len() - 1] {
        let entry = table.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError(format!("override {key}: '{p}' is not a table")))?;
    }
    let last = parts[parts.len() - 1];
    if table.get(last).is_some_and(|v| v.is_table() || v.is_array()) {
        return Err(ConfigError(format!("override {key}: target is not a scalar")));
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses `text`, then applies `KEY=VALUE` overrides and re-validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        // parse once as-is so syntax and schema errors carry line numbers
        toml::from_str::<RunConfig>(text).map_err(|e| ConfigError(format!("config: {e}")))?;
        let mut table: toml::Table = text.parse().map_err(|e| ConfigError(format!("config: {e}")))?;
        for o in overrides {
            let (k, v) = o
                .split_once('=')
                .ok_or_else(|| ConfigError(format!("override '{o}' is not of the form key=value")))?;
            apply_override(&mut table, k.trim(), v.trim())?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e| ConfigError(format!("config after overrides: {e}")))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        RunConfig::parse(&text, overrides)
    }

    fn check(&self) -> Result<(), ConfigError> {
        if self.field.eta.is_some() && self.field.eta_alpha0_fraction.is_some() {
            return Err(ConfigError("field: set either eta or eta_alpha0_fraction, not both".into()));
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form (sorted keys, shortest round-trip floats).
    pub fn hash(&self) -> String {
        let v = serde_json::to_value(self).expect("config serializes");
        let text = serde_json::to_string(&v).expect("json value serializes");
        format!("{:x}", Sha256::digest(text.as_bytes()))
    }

    pub fn geometry(&self) -> waveguide::Result<GuideGeometry> {
        let profile = match self.geometry.profile {
            ProfileBlock::Straight => CurvatureProfile::straight(),
            ProfileBlock::Bump { gamma_max, s0, order } => make_bump_profile(gamma_max, s0, order)?,
        };
        GuideGeometry::new(self.geometry.d, profile)
    }

    pub fn eta(&self, geom: &GuideGeometry) -> f64 {
        match (self.field.eta, self.field.eta_alpha0_fraction) {
            (Some(e), _) => e,
            (None, Some(c)) => c * geom.alpha0,
            (None, None) => 0.0,
        }
    }

    pub fn grid(&self) -> waveguide::Result<GridSpec> {
        let g = &self.grid;
        GridSpec::new(g.l_minus, g.l_plus, g.n_s, g.n_u, self.geometry.d)
    }

    pub fn grid_rule(&self) -> Option<GridRule> {
        self.grid.adaptive.as_ref().map(|a| GridRule {
            l_plus: self.grid.l_plus,
            n_u: self.grid.n_u,
            h_max: a.h_max,
            layer_points: a.layer_points,
            absorption: a.absorption,
            reference_left: self.grid.l_minus,
        })
    }

    pub fn solver(&self) -> SolverOptions {
        let s = &self.solver;
        SolverOptions { k: s.k, tol: s.tol, max_iter: s.max_iter, krylov_dim: s.krylov_dim, seed: s.seed }
    }

    pub fn settings(&self) -> ResonanceSettings {
        let d = &self.distortion;
        let reference = match (d.e, d.delta_e) {
            (Some(e), Some(de)) => Some((e, de)),
            _ => None,
        };
        ResonanceSettings {
            alpha: d.alpha,
            alpha_prime: d.alpha_prime,
            beta_count: d.beta_count,
            beta_grid: d.beta_grid.clone(),
            reference,
            trust_fraction: d.trust_fraction,
            continuum_margin: d.continuum_margin,
            plateau_fraction: d.plateau_fraction,
            solver: self.solver(),
        }
    }
}
