use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decoder::{DecodeConfig, SamplingMode, Strategy};
use crate::denoiser::{Denoiser, PlantedOracle, PottsConditional, ReplayDenoiser};
use crate::error::{LadrError, Result};
use crate::grid::Kernel;
use crate::policy::PhasePolicy;
use crate::schedule::{Schedule, ScheduleKind};

/// Which synthetic denoiser backs a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DenoiserSpec {
    Planted {
        #[serde(default = "default_base")]
        base: f64,
        #[serde(default = "default_gain")]
        gain: f64,
        /// Seed of the uniformly drawn planted target.
        #[serde(default)]
        target_seed: u64,
    },
    Potts {
        beta: f64,
    },
    Replay {
        path: PathBuf,
    },
}

fn default_base() -> f64 {
    0.3
}

fn default_gain() -> f64 {
    0.08
}

impl Default for DenoiserSpec {
    fn default() -> Self {
        DenoiserSpec::Planted {
            base: default_base(),
            gain: default_gain(),
            target_seed: 0,
        }
    }
}

impl DenoiserSpec {
    /// Uniform planted target for `n` positions over `vocab_size` tokens.
    pub fn planted_target(target_seed: u64, n: usize, vocab_size: usize) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(target_seed);
        (0..n).map(|_| rng.gen_range(0..vocab_size as u32)).collect()
    }

    /// The target a decode is scored against, when the backend has one.
    pub fn target(&self, cfg: &DecodeConfig) -> Option<Vec<u32>> {
        match self {
            DenoiserSpec::Planted { target_seed, .. } => Some(Self::planted_target(
                *target_seed,
                cfg.positions(),
                cfg.vocab_size,
            )),
            _ => None,
        }
    }

    pub fn build(&self, cfg: &DecodeConfig) -> Result<Box<dyn Denoiser + Send>> {
        Ok(match self {
            DenoiserSpec::Planted { base, gain, .. } => Box::new(PlantedOracle::new(
                self.target(cfg).expect("planted has a target"),
                cfg.vocab_size,
                *base,
                *gain,
                cfg.kernel,
            )?),
            DenoiserSpec::Potts { beta } => Box::new(PottsConditional::new(cfg.vocab_size, *beta)?),
            DenoiserSpec::Replay { path } => Box::new(ReplayDenoiser::open(path)?),
        })
    }
}

/// A JSON experiment description. Every field has a default, so `{}` is the
/// demo configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub height: usize,
    pub width: usize,
    pub vocab_size: usize,
    /// Defaults to `vocab_size`.
    pub mask_id: Option<u32>,
    pub schedule: ScheduleKind,
    pub steps: u32,
    pub phases: PhasePolicy,
    pub kernel: usize,
    pub strategies: Vec<Strategy>,
    pub sampling: SamplingMode,
    pub temperature: f64,
    /// Run `r` of each strategy uses seed `seed + r`.
    pub seed: u64,
    pub repeats: u32,
    pub denoiser: DenoiserSpec,
    /// Trace files and the summary CSV are written here.
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let demo = DecodeConfig::demo();
        ExperimentConfig {
            height: demo.height,
            width: demo.width,
            vocab_size: demo.vocab_size,
            mask_id: None,
            schedule: demo.schedule.kind,
            steps: demo.schedule.steps,
            phases: demo.policy,
            kernel: demo.kernel.size(),
            strategies: vec![Strategy::Ladr],
            sampling: demo.sampling,
            temperature: demo.temperature,
            seed: demo.seed,
            repeats: 1,
            denoiser: DenoiserSpec::default(),
            output_dir: PathBuf::from("ladr-out"),
        }
    }
}

impl ExperimentConfig {
    pub fn demo() -> Self {
        ExperimentConfig::default()
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).map_err(|e| LadrError::io(path.display().to_string(), e))?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| LadrError::Config(format!("bad experiment config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(LadrError::Config("repeats must be >= 1".into()));
        }
        if self.strategies.is_empty() {
            return Err(LadrError::Config("no strategies listed".into()));
        }
        self.decode_config(self.strategies[0], self.seed)?.validate()
    }

    pub fn decode_config(&self, strategy: Strategy, seed: u64) -> Result<DecodeConfig> {
        let cfg = DecodeConfig {
            height: self.height,
            width: self.width,
            vocab_size: self.vocab_size,
            mask_id: self.mask_id.unwrap_or(self.vocab_size as u32),
            schedule: Schedule::new(self.schedule, self.steps)?,
            policy: self.phases.clone(),
            kernel: Kernel::new(self.kernel)?,
            strategy,
            sampling: self.sampling,
            temperature: self.temperature,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_json_is_demo() {
        let cfg = ExperimentConfig::from_json("{}").unwrap();
        assert_eq!(cfg, ExperimentConfig::demo());
        let d = cfg.decode_config(Strategy::Ladr, 0).unwrap();
        assert_eq!(d, DecodeConfig::demo());
    }

    #[test]
    fn parses_full_config() {
        let text = r#"{
            "height": 8, "width": 12, "vocab_size": 4, "schedule": "linear", "steps": 10,
            "phases": [{"t_lo": 0, "t_hi": 1, "alpha": 0.5, "tau": null}],
            "kernel": 5, "strategies": ["standard", "ladr", "random_neighbor"],
            "sampling": "categorical", "temperature": 0.7, "seed": 3, "repeats": 2,
            "denoiser": {"kind": "potts", "beta": 1.1},
            "output_dir": "out"
        }"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.strategies.len(), 3);
        assert_eq!(cfg.denoiser, DenoiserSpec::Potts { beta: 1.1 });
        let d = cfg.decode_config(Strategy::Standard, 4).unwrap();
        assert_eq!(d.kernel.size(), 5);
        assert_eq!(d.mask_id, 4);
        assert_eq!(d.schedule.kind, ScheduleKind::Linear);
    }

    #[test]
    fn rejects_bad_configs() {
        for text in [
            r#"{"repeats": 0}"#,
            r#"{"strategies": []}"#,
            r#"{"strategies": ["prophet"]}"#,
            r#"{"kernel": 4}"#,
            r#"{"steps": 0}"#,
            r#"{"temperature": 0}"#,
            r#"{"phases": [{"t_lo": 0, "t_hi": 0.5, "alpha": 1, "tau": null}]}"#,
            r#"{"unknown_field": 1}"#,
            r#"{"denoiser": {"kind": "planted", "bias": 1}}"#,
        ] {
            assert!(
                matches!(ExperimentConfig::from_json(text), Err(LadrError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn planted_target_is_seeded() {
        let a = DenoiserSpec::planted_target(4, 100, 16);
        assert_eq!(a, DenoiserSpec::planted_target(4, 100, 16));
        assert_ne!(a, DenoiserSpec::planted_target(5, 100, 16));
        assert!(a.iter().all(|&t| t < 16));
    }
}
