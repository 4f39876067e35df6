//! Experiment configuration: JSON file, command-line overrides, validation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::Args;
use meterdp_core::aggregator::EstimatorMode;
use meterdp_core::datagen::{SyntheticDistribution, REFERENCE_APPLIANCES};
use meterdp_core::evaluation::{BenchmarkConfig, ExperimentParams};
use meterdp_core::pipeline::PipelineConfig;
use meterdp_core::quantizer::QuantizationScheme;
use meterdp_core::scheduler::{DissimilarityForm, LspSampling, SchedulerConfig, SchedulerKind};
use meterdp_core::simulation::SimulationConfig;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Where the readings come from when no CSV input is given.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    /// Households augmented from the built-in reference profile.
    #[default]
    Reference,
    Uniform,
    Normal,
    SkewLeft,
    SkewRight,
}

impl DatasetKind {
    pub fn synthetic(self) -> Option<SyntheticDistribution> {
        match self {
            DatasetKind::Reference => None,
            DatasetKind::Uniform => Some(SyntheticDistribution::Uniform),
            DatasetKind::Normal => Some(SyntheticDistribution::Normal),
            DatasetKind::SkewLeft => Some(SyntheticDistribution::SkewLeft),
            DatasetKind::SkewRight => Some(SyntheticDistribution::SkewRight),
        }
    }
}

impl fmt::Display for DatasetKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.synthetic() {
            Some(d) => f.write_str(d.name()),
            None => f.write_str("reference"),
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        if s == "reference" {
            return Ok(DatasetKind::Reference);
        }
        match s.parse::<SyntheticDistribution>().map_err(|e| e.to_string())? {
            SyntheticDistribution::Uniform => Ok(DatasetKind::Uniform),
            SyntheticDistribution::Normal => Ok(DatasetKind::Normal),
            SyntheticDistribution::SkewLeft => Ok(DatasetKind::SkewLeft),
            SyntheticDistribution::SkewRight => Ok(DatasetKind::SkewRight),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub epsilon: f64,
    pub window: usize,
    pub levels: usize,
    pub appliances: usize,
    pub users: usize,
    pub days: u64,
    pub method: SchedulerKind,
    pub estimator: EstimatorMode,
    pub dissimilarity: DissimilarityForm,
    pub lsp_sampling: LspSampling,
    pub distribution: DatasetKind,
    /// CSV readings; takes precedence over `distribution`, `users` and `days`.
    pub input: Option<PathBuf>,
    pub seed: u64,
    pub repetitions: usize,
    pub top_k: usize,
    /// Gaussian baseline failure probability.
    pub delta: f64,
    /// Per-reading budget of the baselines.
    pub baseline_epsilon: f64,
    pub max_energy: f64,
    /// Worker threads; 0 uses every core. Left out of result files so they
    /// do not depend on it.
    #[serde(skip_serializing)]
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            epsilon: 10.0,
            window: 3,
            levels: 10,
            appliances: 15,
            users: 1000,
            days: 30,
            method: SchedulerKind::Lba,
            estimator: EstimatorMode::Standard,
            dissimilarity: DissimilarityForm::Squared,
            lsp_sampling: LspSampling::First,
            distribution: DatasetKind::Reference,
            input: None,
            seed: 1,
            repetitions: 100,
            top_k: 10,
            delta: 1e-5,
            baseline_epsilon: 1.0,
            max_energy: 3000.0,
            workers: 0,
        }
    }
}

/// Command-line overrides; every flag wins over the config file.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// JSON config file; omitted keys take their defaults
    #[arg(long, short = 'c')]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Sliding window length in days
    #[arg(long)]
    pub window: Option<usize>,
    /// Quantization levels per appliance
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub appliances: Option<usize>,
    #[arg(long)]
    pub users: Option<usize>,
    #[arg(long)]
    pub days: Option<u64>,
    /// Budget scheduler: lbu, lsp, lbd or lba
    #[arg(long)]
    pub method: Option<SchedulerKind>,
    /// standard or level_offset
    #[arg(long)]
    pub estimator: Option<EstimatorMode>,
    /// squared or absolute
    #[arg(long)]
    pub dissimilarity: Option<String>,
    /// first or seeded_phase
    #[arg(long)]
    pub lsp_sampling: Option<String>,
    /// reference, uniform, normal, skew_left or skew_right
    #[arg(long)]
    pub distribution: Option<DatasetKind>,
    /// CSV readings with header user_id,day,appliance_id,watts
    #[arg(long)]
    pub input: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub top_k: Option<usize>,
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub baseline_epsilon: Option<f64>,
    #[arg(long)]
    pub max_energy: Option<f64>,
    /// Worker threads, 0 for all cores
    #[arg(long)]
    pub workers: Option<usize>,
}

fn parse_enum<T: for<'de> Deserialize<'de>>(field: &str, value: &str) -> Result<T, HarnessError> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| HarnessError::Config(format!("invalid {field} '{value}'")))
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        if text.trim().is_empty() {
            return Ok(Self::default());
        }
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            HarnessError::Config(msg) => HarnessError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Defaults, then the config file, then flags; validated.
    pub fn resolve(args: &ConfigArgs) -> Result<Self, HarnessError> {
        let mut config = match &args.config {
            Some(path) => Self::from_file(path)?,
            None => Self::default(),
        };
        config.apply(args)?;
        config.validate()?;
        Ok(config)
    }

    pub fn apply(&mut self, args: &ConfigArgs) -> Result<(), HarnessError> {
        macro_rules! set {
            ($($flag:ident => $field:ident),* $(,)?) => {
                $(if let Some(v) = &args.$flag {
                    self.$field = v.clone();
                })*
            };
        }
        set!(
            epsilon => epsilon, window => window, levels => levels,
            appliances => appliances, users => users, days => days,
            method => method, estimator => estimator, distribution => distribution,
            seed => seed, reps => repetitions, top_k => top_k, delta => delta,
            baseline_epsilon => baseline_epsilon, max_energy => max_energy, workers => workers,
        );
        if let Some(path) = &args.input {
            self.input = Some(path.clone());
        }
        if let Some(v) = &args.dissimilarity {
            self.dissimilarity = parse_enum("dissimilarity", v)?;
        }
        if let Some(v) = &args.lsp_sampling {
            self.lsp_sampling = parse_enum("lsp_sampling", v)?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let positive = [
            ("epsilon", self.epsilon),
            ("delta", self.delta),
            ("baseline_epsilon", self.baseline_epsilon),
            ("max_energy", self.max_energy),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(HarnessError::Config(format!(
                    "{name} must be positive and finite, got {v}"
                )));
            }
        }
        if self.delta >= 1.0 {
            return Err(HarnessError::Config(format!(
                "delta must be below 1, got {}",
                self.delta
            )));
        }
        let counts = [
            ("window", self.window),
            ("appliances", self.appliances),
            ("users", self.users),
            ("repetitions", self.repetitions),
            ("top_k", self.top_k),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(HarnessError::Config(format!("{name} must be at least 1")));
            }
        }
        if self.days == 0 {
            return Err(HarnessError::Config("days must be at least 1".into()));
        }
        if self.levels < 2 {
            return Err(HarnessError::Config(format!(
                "levels must be at least 2, got {}",
                self.levels
            )));
        }
        if self.top_k > self.appliances {
            return Err(HarnessError::Config(format!(
                "top_k {} exceeds the appliance count {}",
                self.top_k, self.appliances
            )));
        }
        if self.input.is_none()
            && self.distribution == DatasetKind::Reference
            && self.appliances != REFERENCE_APPLIANCES
        {
            return Err(HarnessError::Config(format!(
                "the reference profile has {REFERENCE_APPLIANCES} appliances, got appliances = {}",
                self.appliances
            )));
        }
        Ok(())
    }

    pub fn scheme(&self) -> Result<QuantizationScheme, HarnessError> {
        QuantizationScheme::equal_width(self.levels, self.max_energy).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn simulation(&self, method: SchedulerKind) -> Result<SimulationConfig, HarnessError> {
        let mut scheduler = SchedulerConfig::new(method, self.epsilon, self.window);
        scheduler.dissimilarity_form = self.dissimilarity;
        scheduler.lsp_sampling = self.lsp_sampling;
        Ok(SimulationConfig {
            pipeline: PipelineConfig {
                scheme: self.scheme()?,
                appliance_count: self.appliances,
                scheduler,
            },
            estimator: self.estimator,
            seed: self.seed,
        })
    }

    pub fn experiment(&self, method: SchedulerKind) -> Result<ExperimentParams, HarnessError> {
        Ok(ExperimentParams {
            simulation: self.simulation(method)?,
            repetitions: self.repetitions,
            top_k: self.top_k,
        })
    }

    pub fn benchmark(&self) -> Result<BenchmarkConfig, HarnessError> {
        let mut config = BenchmarkConfig::new(self.simulation(self.method)?, self.repetitions, self.top_k);
        config.baseline_epsilon = self.baseline_epsilon;
        config.delta = self.delta;
        Ok(config)
    }
}
