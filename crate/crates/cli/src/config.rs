//! Pipeline configuration: one TOML file, with command-line overrides applied on top.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stepturn::evaluate::{DeltaScale, DEFAULT_MIN_PLAYS};
use stepturn::hmc::SamplerConfig;
use stepturn::simulate::BaselineMode;
use stepturn::synthetic::SyntheticScenario;
use stepturn::tracking::ColumnMap;
use stepturn::yards::TrainConfig;

use crate::error::PipelineError;

/// Environment variable naming the default configuration file.
pub const CONFIG_ENV: &str = "STEPTURN_CONFIG";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Master seed. Required by the synth, fit and simulate stages.
    pub seed: Option<u64>,
    /// Directory in the Big Data Bowl layout. When unset, `ingest` reads the
    /// output of `synth`.
    pub data_dir: Option<PathBuf>,
    pub out_dir: PathBuf,
    /// Upper bound on worker threads in any stage.
    pub jobs: usize,
    pub stages: StageToggles,
    pub schema: ColumnMap,
    /// Model specification file; when unset it is derived from the data.
    pub model_spec: Option<PathBuf>,
    pub sampler: SamplerConfig,
    pub simulation: SimulationSection,
    pub train: TrainConfig,
    pub value: ValueSection,
    pub evaluate: EvaluateSection,
    pub report: ReportSection,
    pub diagnostics: DiagnosticsSection,
    pub synth: Option<SyntheticScenario>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: None,
            data_dir: None,
            out_dir: PathBuf::from("run"),
            jobs: 1,
            stages: StageToggles::default(),
            schema: ColumnMap::default(),
            model_spec: None,
            sampler: SamplerConfig::default(),
            simulation: SimulationSection::default(),
            train: TrainConfig::default(),
            value: ValueSection::default(),
            evaluate: EvaluateSection::default(),
            report: ReportSection::default(),
            diagnostics: DiagnosticsSection::default(),
            synth: None,
        }
    }
}

/// Which stages `run` executes. Single-stage commands ignore these.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub synth: bool,
    pub ingest: bool,
    pub features: bool,
    pub fit_step: bool,
    pub fit_turn: bool,
    pub diagnose: bool,
    pub value: bool,
    pub simulate: bool,
    pub evaluate: bool,
    pub leaderboard: bool,
    pub report: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        Self {
            synth: false,
            ingest: true,
            features: true,
            fit_step: true,
            fit_turn: true,
            diagnose: true,
            value: true,
            simulate: true,
            evaluate: true,
            leaderboard: true,
            report: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulationSection {
    pub n_draws: usize,
    pub mode: BaselineMode,
    /// Simulate only the first this many plays, in store order.
    pub max_plays: Option<usize>,
}

impl Default for SimulationSection {
    fn default() -> Self {
        Self { n_draws: 100, mode: BaselineMode::Generic, max_plays: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValueSection {
    /// Also run leave-one-week-out and grouped k-fold validation.
    pub validate: bool,
}

impl Default for ValueSection {
    fn default() -> Self {
        Self { validate: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateSection {
    pub scale: DeltaScale,
    /// Plays a carrier needs to appear on a leaderboard.
    pub min_plays: usize,
}

impl Default for EvaluateSection {
    fn default() -> Self {
        Self { scale: DeltaScale::default(), min_plays: DEFAULT_MIN_PLAYS }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportSection {
    /// Plays rendered, largest accumulated delta first.
    pub plays: usize,
    pub histogram_bins: usize,
}

impl Default for ReportSection {
    fn default() -> Self {
        Self { plays: 10, histogram_bins: 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DiagnosticsSection {
    /// Exit nonzero when any parameter misses the R-hat or ESS threshold.
    pub fail_on_breach: bool,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        Self { fail_on_breach: true }
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub data_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub jobs: Option<usize>,
    pub chains: Option<usize>,
    pub iterations: Option<usize>,
    pub warmup: Option<usize>,
    pub draws: Option<usize>,
    pub min_plays: Option<usize>,
    pub max_plays: Option<usize>,
    pub no_fail_on_diagnostics: bool,
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let cfg: Self = toml::from_str(text).map_err(|e| PipelineError::config("config", e.message()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::config("config", format!("{}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn apply(&mut self, o: &Overrides) -> Result<(), PipelineError> {
        if let Some(s) = o.seed {
            self.seed = Some(s);
        }
        if let Some(d) = &o.data_dir {
            self.data_dir = Some(d.clone());
        }
        if let Some(d) = &o.out_dir {
            self.out_dir = d.clone();
        }
        if let Some(j) = o.jobs {
            self.jobs = j;
        }
        if let Some(c) = o.chains {
            self.sampler.n_chains = c;
        }
        if let Some(i) = o.iterations {
            self.sampler.n_iterations = i;
        }
        if let Some(w) = o.warmup {
            self.sampler.n_warmup = w;
        }
        if let Some(h) = o.draws {
            self.simulation.n_draws = h;
        }
        if let Some(m) = o.min_plays {
            self.evaluate.min_plays = m;
        }
        if let Some(m) = o.max_plays {
            self.simulation.max_plays = Some(m);
        }
        if o.no_fail_on_diagnostics {
            self.diagnostics.fail_on_breach = false;
        }
        self.validate()
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        if self.jobs == 0 {
            return Err(PipelineError::config("jobs", "must be at least 1"));
        }
        let mut sampler = self.sampler.clone();
        sampler.jobs = 1;
        sampler.validate().map_err(|e| PipelineError::config("sampler", e.to_string()))?;
        self.train.validate().map_err(|e| PipelineError::config("train", e.to_string()))?;
        if self.simulation.n_draws == 0 {
            return Err(PipelineError::config("simulation.n_draws", "must be at least 1"));
        }
        if self.report.histogram_bins == 0 {
            return Err(PipelineError::config("report.histogram_bins", "must be at least 1"));
        }
        if let Some(s) = &self.synth {
            s.validate().map_err(|e| PipelineError::config("synth", e.to_string()))?;
        }
        Ok(())
    }

    /// The master seed, or a config error naming the stage that needs it.
    pub fn require_seed(&self, stage: &str) -> Result<u64, PipelineError> {
        self.seed.ok_or_else(|| PipelineError::config("seed", format!("required by the {stage} stage")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = PipelineConfig { seed: Some(7), synth: Some(SyntheticScenario::default()), ..Default::default() };
        let back = PipelineConfig::from_toml_str(&cfg.to_toml()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn flags_win_over_file() {
        let mut cfg = PipelineConfig::from_toml_str("seed = 3\njobs = 2\n[sampler]\nn_chains = 2\n").unwrap();
        cfg.apply(&Overrides { seed: Some(9), chains: Some(3), ..Default::default() }).unwrap();
        assert_eq!((cfg.seed, cfg.jobs, cfg.sampler.n_chains), (Some(9), 2, 3));
    }

    #[test]
    fn invalid_values_name_the_field() {
        let err = PipelineConfig::from_toml_str("[sampler]\nn_warmup = 2000\n").unwrap_err();
        assert!(matches!(&err, PipelineError::ConfigInvalid { field, .. } if field == "sampler"));
        assert_eq!(err.exit_code(), 3);
        assert!(PipelineConfig::from_toml_str("sed = 1\n").is_err());
        assert!(PipelineConfig::default().require_seed("fit").is_err());
    }
}
