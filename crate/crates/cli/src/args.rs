use clap::{Args, ValueEnum};
use cuewatch_core::detector::{DetectorConfig, ThresholdMode};
use cuewatch_core::feature::{ChannelSchema, MissingDataPolicy, SamplingConfig};
use cuewatch_core::sdem::{CovarianceMode, EngineConfig};

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum Covariance {
    Full,
    Diagonal,
}

/// Model and detection settings shared by every subcommand that runs the
/// detector.
#[derive(Args, Clone, Debug)]
pub struct ModelArgs {
    /// Mixture components.
    #[arg(long, default_value_t = 2)]
    pub components: usize,
    /// Discount applied per frame update.
    #[arg(long, default_value_t = 0.1)]
    pub forgetting: f64,
    /// Resampling period in seconds.
    #[arg(long, default_value_t = 0.5)]
    pub sample_period: f64,
    #[arg(long, default_value_t = 30.0)]
    pub batch_seconds: f64,
    /// No cues are emitted for batches ending at or before this time.
    #[arg(long, default_value_t = 180.0)]
    pub warmup_seconds: f64,
    /// auto, fixed:<value> or topk:<k>.
    #[arg(long, default_value = "auto")]
    pub threshold: ThresholdMode,
    /// Multiplicative step for more/less commands.
    #[arg(long, default_value_t = 1.10)]
    pub threshold_step: f64,
    /// Outlier frames attached to each cue.
    #[arg(long, default_value_t = 2)]
    pub outliers: usize,
    /// Seed for mixture initialization.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Channels to model, e.g. posture,gaze or posture,gaze,face.
    #[arg(long, default_value = "posture,gaze")]
    pub channels: ChannelSchema,
    #[arg(long, value_enum, default_value = "full")]
    pub covariance: Covariance,
    /// Relative ridge added to each covariance diagonal.
    #[arg(long, default_value_t = 1e-6)]
    pub ridge: f64,
    /// Minimum spacing of top-k peaks in seconds.
    #[arg(long, default_value_t = 30.0)]
    pub nms_seconds: f64,
    /// Standardize features against the first batch.
    #[arg(long)]
    pub standardize: bool,
    /// Value written into every dimension of a missing channel.
    #[arg(long, default_value_t = -10_000.0, allow_hyphen_values = true)]
    pub missing_value: f64,
}

impl ModelArgs {
    pub fn detector(&self) -> anyhow::Result<DetectorConfig> {
        let cfg = DetectorConfig {
            engine: EngineConfig {
                components: self.components,
                forgetting_rate: self.forgetting,
                covariance_mode: match self.covariance {
                    Covariance::Full => CovarianceMode::Full,
                    Covariance::Diagonal => CovarianceMode::Diagonal,
                },
                ridge: self.ridge,
                seed: self.seed,
            },
            sampling: SamplingConfig {
                sample_period: self.sample_period,
                batch_duration: self.batch_seconds,
                warmup: self.warmup_seconds,
            },
            threshold_mode: self.threshold,
            outlier_count: self.outliers,
            threshold_step: self.threshold_step,
            nms_window: self.nms_seconds,
            standardize: self.standardize,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn policy(&self) -> MissingDataPolicy {
        MissingDataPolicy::uniform(self.missing_value)
    }
}
