//! Manifest, model and configuration files, and their validation.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::equilibrium::OperatingTargets;
use crate::error::{CoreError, Result};
use crate::models::{DfigModel, DieselModel, ReferenceModel, DEFAULT_ETA};
use crate::sim::{DelaySpec, Scenario};
use crate::synthesis::PolytopeSpec;

/// Top-level project file. Relative paths resolve against its directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub models: PathBuf,
    /// Config id to config file.
    pub configs: BTreeMap<String, PathBuf>,
    #[serde(default = "default_out")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub synthesis: SynthesisSettings,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisSettings {
    /// Weight on `k_a + k_b` in the objective.
    #[serde(default = "unit")]
    pub gain_weight: f64,
    /// Bisection steps on the delay scale when the requested bounds are
    /// infeasible; 0 reports infeasibility instead.
    #[serde(default = "default_steps")]
    pub fallback_steps: usize,
}

fn unit() -> f64 {
    1.0
}

fn default_steps() -> usize {
    5
}

impl Default for SynthesisSettings {
    fn default() -> Self {
        Self {
            gain_weight: unit(),
            fallback_steps: default_steps(),
        }
    }
}

/// WTG parameters and the operating point to reduce about.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelsFile {
    pub dfig: DfigModel,
    pub targets: OperatingTargets,
    #[serde(default = "default_relevant")]
    pub relevant_state: String,
    /// Relative band on the reduced input map used by robust designs.
    #[serde(default = "default_delta")]
    pub delta_fraction: f64,
}

fn default_relevant() -> String {
    "omega_r".into()
}

fn default_delta() -> f64 {
    0.1
}

/// One controller design: the plant it is synthesized for.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Design {
    pub diesel: DieselModel,
    pub reference: ReferenceModel,
    /// Identical WTGs aggregated into the design model.
    #[serde(default = "one")]
    pub wtg_count: usize,
    /// Robust design over this polytope when present.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polytope: Option<PolytopeSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gain_weight: Option<f64>,
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigFile {
    pub id: String,
    #[serde(default)]
    pub description: String,
    /// Delay bounds for synthesis; scenarios inherit them.
    #[serde(default)]
    pub delay: DelaySpec,
    #[serde(default)]
    pub designs: BTreeMap<String, Design>,
    pub scenarios: Vec<Scenario>,
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| CoreError::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    serde_json::from_str(&text)
        .map_err(|e| CoreError::validation(format!("{}: {e}", path.display())))
}

/// A manifest with every referenced file loaded.
#[derive(Debug, Clone)]
pub struct Project {
    pub manifest_path: PathBuf,
    pub manifest: Manifest,
    pub models_path: PathBuf,
    pub models: ModelsFile,
    pub configs: BTreeMap<String, (PathBuf, ConfigFile)>,
}

impl Project {
    pub fn load(manifest_path: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(manifest_path)?;
        let base = manifest_path.parent().unwrap_or(Path::new("."));
        let models_path = base.join(&manifest.models);
        let models = read_json(&models_path)?;
        let mut configs = BTreeMap::new();
        for (id, p) in &manifest.configs {
            let path = base.join(p);
            let cfg: ConfigFile = read_json(&path)?;
            if &cfg.id != id {
                return Err(CoreError::validation(format!(
                    "{} declares id `{}` but the manifest lists it as `{id}`",
                    path.display(),
                    cfg.id
                )));
            }
            configs.insert(id.clone(), (path, cfg));
        }
        Ok(Self {
            manifest_path: manifest_path.to_path_buf(),
            manifest,
            models_path,
            models,
            configs,
        })
    }

    /// Output directory, relative to the manifest unless absolute.
    pub fn out_dir(&self) -> PathBuf {
        let base = self.manifest_path.parent().unwrap_or(Path::new("."));
        base.join(&self.manifest.out_dir)
    }

    pub fn config(&self, id: &str) -> Result<&(PathBuf, ConfigFile)> {
        self.configs.get(id).ok_or_else(|| {
            CoreError::validation(format!(
                "unknown config `{id}`; manifest lists: {}",
                self.configs.keys().cloned().collect::<Vec<_>>().join(", ")
            ))
        })
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl Diagnostics {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }

    fn check(&mut self, ctx: &str, r: Result<()>) {
        if let Err(e) = r {
            self.errors.push(format!("{ctx}: {}", strip(&e)));
        }
    }
}

fn strip(e: &CoreError) -> String {
    match e {
        CoreError::Validation(m) => m.clone(),
        other => other.to_string(),
    }
}

/// Checks every typed input reachable from the manifest. Never fails; all
/// findings land in the diagnostics.
pub fn validate_inputs(manifest_path: &Path) -> Diagnostics {
    let mut d = Diagnostics::default();
    let project = match Project::load(manifest_path) {
        Ok(p) => p,
        Err(e) => {
            d.errors.push(strip(&e));
            return d;
        }
    };
    let m = &project.models;
    d.check("models.dfig", m.dfig.validate());
    if m.dfig.eta.is_none() {
        d.warnings.push(format!(
            "models.dfig.eta omitted; using the default {DEFAULT_ETA:.6} (1/1.1)"
        ));
    }
    if !(0.0..1.0).contains(&m.delta_fraction) {
        d.errors.push(format!("models.delta_fraction = {} must lie in [0, 1)", m.delta_fraction));
    }
    if !(m.targets.wind_speed > 0.0) {
        d.errors.push(format!("models.targets.wind_speed = {} must be > 0", m.targets.wind_speed));
    }
    if !(project.manifest.synthesis.gain_weight > 0.0) {
        d.errors.push("manifest.synthesis.gain_weight must be > 0".into());
    }
    for (id, (path, cfg)) in &project.configs {
        let at = format!("config {id} ({})", path.display());
        d.check(&format!("{at} delay"), cfg.delay.validate());
        for (name, des) in &cfg.designs {
            let here = format!("{at} design `{name}`");
            d.check(&here, des.diesel.validate());
            d.check(&here, des.reference.validate());
            if let Some(p) = &des.polytope {
                d.check(&here, p.validate());
            }
            if des.wtg_count == 0 {
                d.errors.push(format!("{here}: wtg_count must be >= 1"));
            }
            if (des.diesel.f_bar - des.reference.f_bar).abs() > 0.0 {
                d.errors.push(format!("{here}: diesel and reference frequency bases differ"));
            }
        }
        for s in &cfg.scenarios {
            let here = format!("{at} scenario `{}`", s.name);
            d.check(&here, s.validate());
            for g in &s.groups {
                let c = &g.controller;
                if c.kind == "mrc" && c.gain.is_none() {
                    match &c.design {
                        None => d.errors.push(format!(
                            "{here} group `{}`: mrc controller needs `gain` or `design`",
                            g.id
                        )),
                        Some(n) if !cfg.designs.contains_key(n) => d.errors.push(format!(
                            "{here} group `{}`: unknown design `{n}`",
                            g.id
                        )),
                        Some(n) => {
                            let des = &cfg.designs[n];
                            if des.wtg_count != g.wtg_count {
                                d.errors.push(format!(
                                    "{here} group `{}`: {} WTGs but design `{n}` assumes {}",
                                    g.id, g.wtg_count, des.wtg_count
                                ));
                            }
                        }
                    }
                }
                if s.delay.kappa > 0.0 && c.kind == "mrc" && s.delay.policy == "none" {
                    d.warnings.push(format!("{here}: delay policy `none` ignores the configured bounds"));
                }
            }
            if s.duration > 60.0 {
                d.warnings.push(format!("{here}: {} s horizon at 1 kHz is a large trajectory", s.duration));
            }
        }
    }
    d
}
