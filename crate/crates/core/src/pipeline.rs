//! Stage orchestration with persisted, content-hashed artifacts.
//!
//! Layout under the output directory:
//!
//! ```text
//! wtg/operating_point.json  wtg/linear10.json  wtg/modal.json  wtg/reduced.json
//! config-<id>/synthesis-<design>.json
//! config-<id>/trajectory-<scenario>.json + .csv
//! config-<id>/report.json
//! ```
//!
//! A stage is skipped when its stored header (inputs, params, seed, tool
//! version) matches the one it would be produced from.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use log::info;
use serde::{Deserialize, Serialize};

use crate::artifact::{file_hash, sha256_hex, value_hash, Artifact, Header};
use crate::config::{ConfigFile, Design, Project};
use crate::equilibrium::{linearize, modal_analysis, solve_equilibrium, DfigOperatingPoint, ModalAnalysis};
use crate::error::{CoreError, Result};
use crate::metrics::{scenario_report, ReportOptions, ScenarioReport};
use crate::models::LinearStateSpace;
use crate::sim::{aggregate_wtgs, simulate, Registries, Scenario, Trajectory, WtgContext};
use crate::sma::{partition, reduce, select_relevant_mode, ReducedModel};
use crate::synthesis::{
    assemble_augmented, assemble_plant, enumerate_vertices, synthesize, synthesize_robust, DelayFallback,
    SynthesisOptions, SynthesisResult,
};

/// Overrides applied on top of the manifest.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub fidelity: Option<String>,
    pub delay_policy: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub path: PathBuf,
    pub content_hash: String,
    pub cached: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModalSummary {
    pub relevant_state: String,
    pub relevant_index: usize,
    pub relevant_mode: usize,
    pub lambda_r: f64,
    pub relevant_participation: f64,
    pub analysis: ModalAnalysis,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub scenario: String,
    pub csv: String,
    pub csv_sha256: String,
    pub samples: usize,
    pub columns: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioEntry {
    pub scenario: String,
    pub fidelity: String,
    pub delay_policy: String,
    pub groups: Vec<ScenarioReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignSummary {
    pub design: String,
    pub gamma: f64,
    pub tracking_bound: f64,
    pub k: Vec<f64>,
    pub certified: bool,
    pub requested_eta_m: f64,
    pub requested_kappa: f64,
    pub eta_m: f64,
    pub kappa: f64,
    pub vertex_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigReport {
    pub config: String,
    pub description: String,
    pub designs: Vec<DesignSummary>,
    pub scenarios: Vec<ScenarioEntry>,
}

pub struct Pipeline<'a> {
    project: &'a Project,
    opts: RunOptions,
    registries: Registries,
    records: Vec<StageRecord>,
    op: Option<Artifact<DfigOperatingPoint>>,
    linear: Option<Artifact<LinearStateSpace>>,
    modal: Option<Artifact<ModalSummary>>,
    reduced: Option<Artifact<ReducedModel>>,
    syntheses: BTreeMap<(String, String), Artifact<SynthesisResult>>,
}

/// Keeps the error class (and so the exit code) while naming the stage.
fn in_stage(stage: &str, inputs: &str, e: CoreError) -> CoreError {
    let at = format!("stage `{stage}` (inputs {})", &inputs[..inputs.len().min(12)]);
    match e {
        CoreError::Validation(m) => CoreError::Validation(format!("{at}: {m}")),
        CoreError::Infeasible(m) => CoreError::Infeasible(format!("{at}: {m}")),
        CoreError::Numeric(m) => CoreError::Numeric(format!("{at}: {m}")),
        io => io,
    }
}

/// File-name-safe form of a config or scenario id.
pub fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

impl<'a> Pipeline<'a> {
    pub fn new(project: &'a Project, opts: RunOptions) -> Self {
        Self {
            project,
            opts,
            registries: Registries::default(),
            records: Vec::new(),
            op: None,
            linear: None,
            modal: None,
            reduced: None,
            syntheses: BTreeMap::new(),
        }
    }

    pub fn with_registries(mut self, r: Registries) -> Self {
        self.registries = r;
        self
    }

    pub fn records(&self) -> &[StageRecord] {
        &self.records
    }

    pub fn out_dir(&self) -> PathBuf {
        self.opts.out_dir.clone().unwrap_or_else(|| self.project.out_dir())
    }

    pub fn seed(&self) -> u64 {
        self.opts.seed.unwrap_or(self.project.manifest.seed)
    }

    /// Loads a matching artifact or computes, writes and records a new one.
    fn stage<T, F>(&mut self, name: &str, path: PathBuf, header: Header, compute: F) -> Result<Artifact<T>>
    where
        T: Serialize + serde::de::DeserializeOwned,
        F: FnOnce(&mut Self) -> Result<T>,
    {
        let inputs = value_hash(&header.inputs)?;
        if let Some(a) = Artifact::<T>::cached(&path, &header) {
            info!("{name}: up to date");
            self.records.push(StageRecord {
                stage: name.to_string(),
                path,
                content_hash: a.content_hash.clone(),
                cached: true,
            });
            return Ok(a);
        }
        info!("{name}: running");
        let payload = compute(self).map_err(|e| in_stage(name, &inputs, e))?;
        let a = Artifact::new(header, payload)?;
        a.write(&path)?;
        self.records.push(StageRecord {
            stage: name.to_string(),
            path,
            content_hash: a.content_hash.clone(),
            cached: false,
        });
        Ok(a)
    }

    fn wtg_dir(&self) -> PathBuf {
        self.out_dir().join("wtg")
    }

    pub fn config_dir(&self, id: &str) -> PathBuf {
        self.out_dir().join(format!("config-{}", slug(id)))
    }

    pub fn operating_point(&mut self) -> Result<Artifact<DfigOperatingPoint>> {
        if let Some(a) = &self.op {
            return Ok(a.clone());
        }
        let m = &self.project.models;
        let mut inputs = BTreeMap::new();
        inputs.insert("dfig".into(), value_hash(&m.dfig)?);
        let header = Header::new("operating_point", self.seed(), inputs, &m.targets)?;
        let (dfig, targets) = (m.dfig.clone(), m.targets.clone());
        let a = self.stage("operating_point", self.wtg_dir().join("operating_point.json"), header, move |_| {
            solve_equilibrium(&dfig, &targets)
        })?;
        self.op = Some(a.clone());
        Ok(a)
    }

    pub fn linear(&mut self) -> Result<Artifact<LinearStateSpace>> {
        if let Some(a) = &self.linear {
            return Ok(a.clone());
        }
        let op = self.operating_point()?;
        let dfig = self.project.models.dfig.clone();
        let mut inputs = BTreeMap::new();
        inputs.insert("dfig".into(), value_hash(&dfig)?);
        inputs.insert("operating_point".into(), op.content_hash.clone());
        let header = Header::new("linear10", self.seed(), inputs, &serde_json::json!({}))?;
        let a = self.stage("linear10", self.wtg_dir().join("linear10.json"), header, move |_| {
            linearize(&dfig, &op.payload)
        })?;
        self.linear = Some(a.clone());
        Ok(a)
    }

    pub fn modal(&mut self) -> Result<Artifact<ModalSummary>> {
        if let Some(a) = &self.modal {
            return Ok(a.clone());
        }
        let lin = self.linear()?;
        let relevant = self.project.models.relevant_state.clone();
        let mut inputs = BTreeMap::new();
        inputs.insert("linear10".into(), lin.content_hash.clone());
        let header = Header::new("modal", self.seed(), inputs, &serde_json::json!({ "relevant_state": relevant }))?;
        let a = self.stage("modal", self.wtg_dir().join("modal.json"), header, move |_| {
            let idx = lin
                .payload
                .state_index(&relevant)
                .ok_or_else(|| CoreError::validation(format!("unknown relevant state `{relevant}`")))?;
            let analysis = modal_analysis(&lin.payload.a)?;
            let lambda_r = select_relevant_mode(&analysis, idx)?;
            let mode = (0..analysis.eigenvalues.len())
                .filter(|&k| analysis.eigenvalues[k].re == lambda_r && analysis.eigenvalues[k].im.abs() < 1e-9)
                .max_by(|&a, &b| analysis.participation_of(idx, a).total_cmp(&analysis.participation_of(idx, b)))
                .unwrap_or(0);
            Ok(ModalSummary {
                relevant_index: idx,
                relevant_mode: mode,
                lambda_r,
                relevant_participation: analysis.participation_of(idx, mode),
                relevant_state: relevant,
                analysis,
            })
        })?;
        self.modal = Some(a.clone());
        Ok(a)
    }

    pub fn reduced(&mut self) -> Result<Artifact<ReducedModel>> {
        if let Some(a) = &self.reduced {
            return Ok(a.clone());
        }
        let lin = self.linear()?;
        let modal = self.modal()?;
        let delta = self.project.models.delta_fraction;
        let mut inputs = BTreeMap::new();
        inputs.insert("linear10".into(), lin.content_hash.clone());
        inputs.insert("modal".into(), modal.content_hash.clone());
        let header = Header::new("reduced", self.seed(), inputs, &serde_json::json!({ "delta_fraction": delta }))?;
        let a = self.stage("reduced", self.wtg_dir().join("reduced.json"), header, move |_| {
            reduce(&partition(&lin.payload, &modal.payload.relevant_state)?, modal.payload.lambda_r, delta)
        })?;
        self.reduced = Some(a.clone());
        Ok(a)
    }

    pub fn wtg_context(&mut self) -> Result<Arc<WtgContext>> {
        Ok(Arc::new(WtgContext {
            model: self.project.models.dfig.clone(),
            operating_point: self.operating_point()?.payload,
            linear: self.linear()?.payload,
            reduced: self.reduced()?.payload,
        }))
    }

    fn config(&self, id: &str) -> Result<&'a ConfigFile> {
        Ok(&self.project.config(id)?.1)
    }

    pub fn synthesis(&mut self, config: &str, design: &str) -> Result<Artifact<SynthesisResult>> {
        let key = (config.to_string(), design.to_string());
        if let Some(a) = self.syntheses.get(&key) {
            return Ok(a.clone());
        }
        let cfg = self.config(config)?;
        let des: Design = cfg
            .designs
            .get(design)
            .cloned()
            .ok_or_else(|| CoreError::validation(format!("config {config} has no design `{design}`")))?;
        let reduced = self.reduced()?;
        let settings = self.project.manifest.synthesis.clone();
        let gain_weight = des.gain_weight.unwrap_or(settings.gain_weight);
        let (eta_m, kappa) = (cfg.delay.eta_m, cfg.delay.kappa);
        let mut inputs = BTreeMap::new();
        inputs.insert("reduced".into(), reduced.content_hash.clone());
        let params = serde_json::json!({
            "design": des,
            "eta_m": eta_m,
            "kappa": kappa,
            "gain_weight": gain_weight,
            "fallback_steps": settings.fallback_steps,
        });
        let header = Header::new("synthesis", self.seed(), inputs, &params)?;
        let path = self.config_dir(config).join(format!("synthesis-{}.json", slug(design)));
        let a = self.stage(&format!("synthesis-{design}"), path, header, move |_| {
            let opts = SynthesisOptions {
                gain_weight,
                delay_fallback: if settings.fallback_steps == 0 {
                    DelayFallback::Fail
                } else {
                    DelayFallback::LargestFeasible {
                        steps: settings.fallback_steps,
                    }
                },
                ..SynthesisOptions::default()
            };
            let unit = reduced.payload.clone();
            let model = if des.wtg_count > 1 {
                let units = vec![unit.clone(); des.wtg_count];
                let bases = vec![1.0; des.wtg_count];
                aggregate_wtgs(&units, &bases)?
            } else {
                unit
            };
            let plant = assemble_plant(&des.diesel, &model)?;
            match &des.polytope {
                None => synthesize(&assemble_augmented(&plant, &des.reference, eta_m, kappa)?, &opts),
                Some(poly) => {
                    let vertices = enumerate_vertices(&plant, poly)?
                        .iter()
                        .map(|p| assemble_augmented(p, &des.reference, eta_m, kappa))
                        .collect::<Result<Vec<_>>>()?;
                    synthesize_robust(&vertices, &opts)
                }
            }
        })?;
        self.syntheses.insert(key, a.clone());
        Ok(a)
    }

    /// The scenario with config defaults, CLI overrides and design gains
    /// applied, plus the synthesis artifacts it depends on.
    pub fn resolve_scenario(&mut self, config: &str, name: &str) -> Result<(Scenario, BTreeMap<String, String>, Option<f64>)> {
        let cfg = self.config(config)?;
        let mut s = cfg
            .scenarios
            .iter()
            .find(|s| s.name == name)
            .cloned()
            .ok_or_else(|| CoreError::validation(format!("config {config} has no scenario `{name}`")))?;
        let policy = s.delay.policy.clone();
        s.delay = cfg.delay.clone();
        s.delay.policy = policy;
        if let Some(p) = &self.opts.delay_policy {
            s.delay.policy = p.clone();
        }
        if let Some(f) = &self.opts.fidelity {
            s.fidelity = f.clone();
        }
        s.seed = self.seed();
        let mut deps = BTreeMap::new();
        let mut gamma = None;
        for g in &mut s.groups {
            if g.controller.kind == "mrc" && g.controller.gain.is_none() {
                let design = g.controller.design.clone().ok_or_else(|| {
                    CoreError::validation(format!("scenario `{name}` group `{}`: mrc needs `gain` or `design`", g.id))
                })?;
                let a = self.synthesis(config, &design)?;
                gamma = Some(gamma.map_or(a.payload.gamma, |x: f64| x.max(a.payload.gamma)));
                g.controller.gain = Some(a.payload.k.clone());
                deps.insert(format!("synthesis-{design}"), a.content_hash.clone());
            }
        }
        s.validate()?;
        Ok((s, deps, gamma))
    }

    pub fn trajectory(&mut self, config: &str, name: &str) -> Result<(Artifact<TrajectoryMeta>, Trajectory)> {
        let (s, mut inputs, _) = self.resolve_scenario(config, name)?;
        let ctx = self.wtg_context()?;
        inputs.insert("operating_point".into(), self.operating_point()?.content_hash);
        inputs.insert("linear10".into(), self.linear()?.content_hash);
        inputs.insert("reduced".into(), self.reduced()?.content_hash);
        let dir = self.config_dir(config);
        let csv_name = format!("trajectory-{}.csv", slug(name));
        let csv_path = dir.join(&csv_name);
        let header = Header::new("trajectory", self.seed(), inputs, &s)?;
        let meta_path = dir.join(format!("trajectory-{}.json", slug(name)));
        if let Some(a) = Artifact::<TrajectoryMeta>::cached(&meta_path, &header) {
            if file_hash(&csv_path).ok().as_deref() == Some(a.payload.csv_sha256.as_str()) {
                let file = fs::File::open(&csv_path).map_err(|e| CoreError::Io {
                    path: csv_path.display().to_string(),
                    source: e,
                })?;
                let tr = Trajectory::read_csv(file)?;
                self.records.push(StageRecord {
                    stage: format!("trajectory-{name}"),
                    path: meta_path,
                    content_hash: a.content_hash.clone(),
                    cached: true,
                });
                return Ok((a, tr));
            }
        }
        // The meta file may match while the CSV was deleted; force a rerun.
        let _ = fs::remove_file(&meta_path);
        let mut produced = None;
        let reg = std::mem::take(&mut self.registries);
        let a = self.stage(&format!("trajectory-{name}"), meta_path, header, |_| {
            let tr = simulate(&s, &ctx, &reg)?;
            let mut buf = Vec::new();
            tr.write_csv(&mut buf)?;
            fs::create_dir_all(&dir).map_err(|e| CoreError::Io {
                path: dir.display().to_string(),
                source: e,
            })?;
            fs::write(&csv_path, &buf).map_err(|e| CoreError::Io {
                path: csv_path.display().to_string(),
                source: e,
            })?;
            let meta = TrajectoryMeta {
                scenario: s.name.clone(),
                csv: csv_name.clone(),
                csv_sha256: sha256_hex(&buf),
                samples: tr.len(),
                columns: tr.columns.clone(),
            };
            produced = Some(tr);
            Ok(meta)
        });
        self.registries = reg;
        let a = a?;
        Ok((a, produced.expect("trajectory stage ran")))
    }

    pub fn report(&mut self, config: &str) -> Result<Artifact<ConfigReport>> {
        let cfg = self.config(config)?;
        let mut inputs = BTreeMap::new();
        let mut entries = Vec::new();
        for s in &cfg.scenarios {
            let (meta, tr) = self.trajectory(config, &s.name)?;
            inputs.insert(format!("trajectory-{}", s.name), meta.content_hash.clone());
            let (resolved, _, gamma) = self.resolve_scenario(config, &s.name)?;
            let f_bar = resolved.groups[0].diesel.f_bar;
            let opts = ReportOptions {
                f_bar,
                gamma,
                ..ReportOptions::default()
            };
            entries.push((s.name.clone(), resolved.fidelity.clone(), resolved.delay.policy.clone(), opts, tr));
        }
        let mut designs = Vec::new();
        for name in cfg.designs.keys() {
            let a = self.synthesis(config, name)?;
            inputs.insert(format!("synthesis-{name}"), a.content_hash.clone());
            let r = &a.payload;
            designs.push(DesignSummary {
                design: name.clone(),
                gamma: r.gamma,
                tracking_bound: r.tracking_bound,
                k: r.k.clone(),
                certified: r.certified(),
                requested_eta_m: r.requested_eta_m,
                requested_kappa: r.requested_kappa,
                eta_m: r.eta_m,
                kappa: r.kappa,
                vertex_count: r.vertex_count,
            });
        }
        let params = serde_json::json!({ "report": ReportOptions::default() });
        let header = Header::new("report", self.seed(), inputs, &params)?;
        let path = self.config_dir(config).join("report.json");
        let (id, description) = (cfg.id.clone(), cfg.description.clone());
        self.stage("report", path, header, move |_| {
            let mut scenarios = Vec::new();
            for (name, fidelity, policy, opts, tr) in entries {
                scenarios.push(ScenarioEntry {
                    groups: scenario_report(&name, &tr, &opts)?,
                    scenario: name,
                    fidelity,
                    delay_policy: policy,
                });
            }
            Ok(ConfigReport {
                config: id,
                description,
                designs,
                scenarios,
            })
        })
    }

    /// Every stage for one config, in order.
    pub fn run_config(&mut self, config: &str) -> Result<ConfigReport> {
        self.operating_point()?;
        self.linear()?;
        self.modal()?;
        self.reduced()?;
        let cfg = self.config(config)?;
        for d in cfg.designs.keys() {
            self.synthesis(config, d)?;
        }
        Ok(self.report(config)?.payload)
    }
}

/// Input hashes of the files a project reads, for provenance listings.
pub fn input_files(project: &Project) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    let rel = |p: &Path| p.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default();
    out.insert(rel(&project.manifest_path), file_hash(&project.manifest_path)?);
    out.insert(rel(&project.models_path), file_hash(&project.models_path)?);
    for (path, _) in project.configs.values() {
        out.insert(rel(path), file_hash(path)?);
    }
    Ok(out)
}
