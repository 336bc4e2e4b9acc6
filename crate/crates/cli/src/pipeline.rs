//! Stage runner: upstream checks, content-addressed skipping and manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::Serialize;

use crate::config::PipelineConfig;
use crate::error::PipelineError;
use crate::manifest::{hash_listing, hash_tree, sha256_hex, RunManifest, StageEntry, StageManifest, ARTIFACT_VERSION};
use crate::stages;

pub const RUN_MANIFEST_FILE: &str = "run_manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Stage {
    Synth,
    Ingest,
    Features,
    FitStep,
    FitTurn,
    Diagnose,
    Value,
    Simulate,
    Evaluate,
    Leaderboard,
    Report,
}

impl Stage {
    /// Pipeline order.
    pub const ALL: [Stage; 11] = [
        Stage::Synth,
        Stage::Ingest,
        Stage::Features,
        Stage::FitStep,
        Stage::FitTurn,
        Stage::Diagnose,
        Stage::Value,
        Stage::Simulate,
        Stage::Evaluate,
        Stage::Leaderboard,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Ingest => "ingest",
            Stage::Features => "features",
            Stage::FitStep => "fit_step",
            Stage::FitTurn => "fit_turn",
            Stage::Diagnose => "diagnose",
            Stage::Value => "value",
            Stage::Simulate => "simulate",
            Stage::Evaluate => "evaluate",
            Stage::Leaderboard => "leaderboard",
            Stage::Report => "report",
        }
    }

    fn upstream(self) -> &'static [Stage] {
        use Stage::*;
        match self {
            Synth | Ingest => &[],
            Features => &[Ingest],
            FitStep | FitTurn => &[Ingest, Features],
            Diagnose => &[FitStep, FitTurn],
            Value => &[Ingest],
            Simulate => &[Ingest, Features, FitStep, FitTurn],
            Evaluate => &[Ingest, Value, Simulate],
            Leaderboard => &[Ingest, Features, FitStep, FitTurn, Evaluate],
            Report => &[Ingest, Evaluate],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Ran,
    /// Inputs, configuration and outputs matched the existing manifest.
    Skipped,
}

pub struct Pipeline {
    pub config: PipelineConfig,
    pub force: bool,
}

fn hash_json<T: Serialize>(v: &T) -> String {
    sha256_hex(serde_json::to_string(v).expect("serializes").as_bytes())
}

impl Pipeline {
    pub fn new(config: PipelineConfig, force: bool) -> Self {
        Self { config, force }
    }

    pub fn out_dir(&self) -> &Path {
        &self.config.out_dir
    }

    pub fn stage_dir(&self, stage: Stage) -> PathBuf {
        self.config.out_dir.join(stage.name())
    }

    /// Where `ingest` reads from: the configured directory, else the synth output.
    pub fn data_dir(&self) -> PathBuf {
        self.config.data_dir.clone().unwrap_or_else(|| self.stage_dir(Stage::Synth))
    }

    fn synth_enabled(&self) -> bool {
        self.config.stages.synth || (self.config.data_dir.is_none() && self.config.synth.is_some())
    }

    fn enabled(&self, stage: Stage) -> bool {
        let t = &self.config.stages;
        match stage {
            Stage::Synth => self.synth_enabled(),
            Stage::Ingest => t.ingest,
            Stage::Features => t.features,
            Stage::FitStep => t.fit_step,
            Stage::FitTurn => t.fit_turn,
            Stage::Diagnose => t.diagnose,
            Stage::Value => t.value,
            Stage::Simulate => t.simulate,
            Stage::Evaluate => t.evaluate,
            Stage::Leaderboard => t.leaderboard,
            Stage::Report => t.report,
        }
    }

    /// Manifest of a completed upstream stage.
    pub fn upstream_manifest(&self, stage: Stage, upstream: Stage) -> Result<StageManifest, PipelineError> {
        StageManifest::load(&self.stage_dir(upstream)).ok_or_else(|| PipelineError::MissingUpstreamArtifact {
            stage: stage.name().into(),
            upstream: upstream.name().into(),
        })
    }

    fn inputs_hash(&self, stage: Stage) -> Result<String, PipelineError> {
        let mut listing = std::collections::BTreeMap::new();
        for &u in stage.upstream() {
            listing.insert(format!("stage:{}", u.name()), self.upstream_manifest(stage, u)?.outputs_hash());
        }
        match stage {
            Stage::Ingest => {
                let dir = self.data_dir();
                if self.config.data_dir.is_none() {
                    self.upstream_manifest(stage, Stage::Synth)?;
                }
                if !dir.is_dir() {
                    return Err(PipelineError::config("data_dir", format!("{} is not a directory", dir.display())));
                }
                for (name, hash) in hash_tree(&dir)? {
                    if name.ends_with(".csv") && !name.contains('/') {
                        listing.insert(format!("data:{name}"), hash);
                    }
                }
            }
            Stage::Features => {
                if let Some(p) = &self.config.model_spec {
                    let bytes = fs::read(p)
                        .map_err(|e| PipelineError::config("model_spec", format!("{}: {e}", p.display())))?;
                    listing.insert("model_spec".into(), sha256_hex(&bytes));
                }
            }
            _ => {}
        }
        Ok(hash_listing(&listing))
    }

    /// The seed a stage uses, if any. Fit and simulate refuse to run without one.
    fn stage_seed(&self, stage: Stage) -> Result<Option<u64>, PipelineError> {
        match stage {
            Stage::FitStep | Stage::FitTurn | Stage::Simulate => self.config.require_seed(stage.name()).map(Some),
            Stage::Synth => Ok(self.config.seed),
            _ => Ok(None),
        }
    }

    /// Hash of the configuration a stage's outputs depend on. Worker counts are left out.
    fn config_hash(&self, stage: Stage) -> String {
        let c = &self.config;
        let seed = self.stage_seed(stage).ok().flatten();
        let body = match stage {
            Stage::Synth => serde_json::json!({ "synth": c.synth }),
            Stage::Ingest => serde_json::json!({ "schema": c.schema }),
            Stage::Features => serde_json::json!({}),
            Stage::FitStep | Stage::FitTurn => {
                let mut s = c.sampler.clone();
                s.jobs = 0;
                s.seed = 0;
                serde_json::json!({ "sampler": s })
            }
            Stage::Diagnose => serde_json::json!({ "diagnostics": c.diagnostics }),
            Stage::Value => serde_json::json!({ "train": c.train, "value": c.value }),
            Stage::Simulate => serde_json::json!({ "simulation": c.simulation }),
            Stage::Evaluate => serde_json::json!({ "scale": c.evaluate.scale }),
            Stage::Leaderboard => serde_json::json!({ "min_plays": c.evaluate.min_plays }),
            Stage::Report => serde_json::json!({ "report": c.report }),
        };
        hash_json(&serde_json::json!({ "version": ARTIFACT_VERSION, "seed": seed, "body": body }))
    }

    pub fn run_stage(&self, stage: Stage) -> Result<Outcome, PipelineError> {
        let seed = self.stage_seed(stage)?;
        let inputs_hash = self.inputs_hash(stage)?;
        let config_hash = self.config_hash(stage);
        let dir = self.stage_dir(stage);
        let fresh = |m: &StageManifest| {
            m.version == ARTIFACT_VERSION && m.inputs_hash == inputs_hash && m.config_hash == config_hash && m.verify(&dir)
        };
        let outcome = match StageManifest::load(&dir) {
            Some(m) if !self.force && fresh(&m) => {
                info!("{}: up to date", stage.name());
                Outcome::Skipped
            }
            _ => {
                if dir.exists() {
                    fs::remove_dir_all(&dir)?;
                }
                fs::create_dir_all(&dir)?;
                info!("{}: running", stage.name());
                let start = Instant::now();
                if let Err(e) = stages::run(self, stage, &dir) {
                    // a half-written directory must not look complete
                    let _ = fs::remove_file(dir.join(crate::manifest::MANIFEST_FILE));
                    return Err(e);
                }
                let manifest = StageManifest {
                    stage: stage.name().into(),
                    version: ARTIFACT_VERSION,
                    seed,
                    inputs_hash,
                    config_hash,
                    outputs: hash_tree(&dir)?,
                    elapsed_ms: start.elapsed().as_millis() as u64,
                };
                manifest.write(&dir)?;
                info!("{}: done in {} ms", stage.name(), manifest.elapsed_ms);
                Outcome::Ran
            }
        };
        self.write_run_manifest()?;
        if stage == Stage::Diagnose {
            stages::check_diagnostics(self, &dir)?;
        }
        Ok(outcome)
    }

    /// Every enabled stage in order, stopping at the first error.
    pub fn run_all(&self) -> Result<Vec<(Stage, Outcome)>, PipelineError> {
        let mut done = Vec::new();
        for stage in Stage::ALL {
            if self.enabled(stage) {
                done.push((stage, self.run_stage(stage)?));
            }
        }
        Ok(done)
    }

    fn write_run_manifest(&self) -> Result<(), PipelineError> {
        let mut run = RunManifest { version: ARTIFACT_VERSION, ..Default::default() };
        for stage in Stage::ALL {
            if let Some(m) = StageManifest::load(&self.stage_dir(stage)) {
                run.stages.insert(
                    m.stage.clone(),
                    StageEntry {
                        seed: m.seed,
                        inputs_hash: m.inputs_hash.clone(),
                        config_hash: m.config_hash.clone(),
                        outputs_hash: m.outputs_hash(),
                    },
                );
            }
        }
        let text = serde_json::to_string_pretty(&run).expect("manifest serializes");
        fs::write(self.out_dir().join(RUN_MANIFEST_FILE), text + "\n")?;
        Ok(())
    }
}
