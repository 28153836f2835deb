//! JSON run configuration. One file drives every subcommand; each
//! command reads its own section. Unknown keys are rejected and the
//! effective config (after defaults) is echoed to the output directory.

use serde::{Deserialize, Serialize};
use winconv_core::{
    ArchSpec, ChannelParams, Dims, Error as CoreError, ExtractionConfig, Nonlinearity,
    OptimizerKind, Padding, RasterConfig, Result as CoreResult, StationaryPairConfig, TrainConfig,
    VerifyConfig,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NonlinName {
    Identity,
    Relu,
    LeakyRelu,
    Tanh,
}

impl From<NonlinName> for Nonlinearity {
    fn from(n: NonlinName) -> Self {
        match n {
            NonlinName::Identity => Nonlinearity::Identity,
            NonlinName::Relu => Nonlinearity::Relu,
            NonlinName::LeakyRelu => Nonlinearity::LeakyRelu,
            NonlinName::Tanh => Nonlinearity::Tanh,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PaddingName {
    ZeroSame,
    CircularSame,
    Valid,
}

impl From<PaddingName> for Padding {
    fn from(p: PaddingName) -> Self {
        match p {
            PaddingName::ZeroSame => Padding::ZeroSame,
            PaddingName::CircularSame => Padding::CircularSame,
            PaddingName::Valid => Padding::Valid,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PairSection {
    pub noise_std: f64,
    pub gen_filter: Vec<f64>,
    pub target_filter: Vec<f64>,
    pub target_nonlinearity: NonlinName,
}

impl Default for PairSection {
    fn default() -> Self {
        PairSection {
            noise_std: 1.0,
            gen_filter: vec![0.5, 1.0, 0.5],
            target_filter: vec![0.25, 0.5, 1.0, 0.5, 0.25],
            target_nonlinearity: NonlinName::Tanh,
        }
    }
}

impl PairSection {
    pub fn to_core(&self) -> StationaryPairConfig {
        StationaryPairConfig {
            noise_std: self.noise_std,
            gen_filter: self.gen_filter.clone(),
            target_filter: self.target_filter.clone(),
            target_nonlinearity: self.target_nonlinearity.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArchSection {
    pub channels: Vec<usize>,
    pub kernel: usize,
    pub hidden_nonlinearity: NonlinName,
    pub output_nonlinearity: NonlinName,
    pub padding: PaddingName,
    pub bias: bool,
}

impl Default for ArchSection {
    fn default() -> Self {
        ArchSection {
            channels: vec![1, 16, 32, 16, 1],
            kernel: 5,
            hidden_nonlinearity: NonlinName::LeakyRelu,
            output_nonlinearity: NonlinName::Identity,
            padding: PaddingName::ZeroSame,
            bias: true,
        }
    }
}

impl ArchSection {
    pub fn to_core(&self, dims: Dims) -> ArchSpec {
        ArchSpec {
            dims,
            channels: self.channels.clone(),
            kernel: self.kernel,
            hidden: self.hidden_nonlinearity.into(),
            output: self.output_nonlinearity.into(),
            padding: self.padding.into(),
            bias: self.bias,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundSection {
    pub pair: PairSection,
    pub arch: ArchSection,
    pub input_window_a: usize,
    pub output_window_b: usize,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    pub eval_width: usize,
    pub eval_margin: usize,
    pub eval_trials: usize,
    pub holdout_windows: usize,
    pub num_seeds: u64,
    /// Required fraction of seeds on which the bound must hold for the
    /// command to exit 0.
    pub holds_threshold: f64,
}

impl Default for BoundSection {
    fn default() -> Self {
        BoundSection {
            pair: PairSection::default(),
            arch: ArchSection {
                channels: vec![1, 4, 4, 1],
                kernel: 5,
                hidden_nonlinearity: NonlinName::Tanh,
                output_nonlinearity: NonlinName::Identity,
                padding: PaddingName::ZeroSame,
                bias: false,
            },
            input_window_a: 128,
            output_window_b: 64,
            batch_size: 4,
            steps: 150,
            learning_rate: 0.01,
            optimizer: "adam".into(),
            eval_width: 2048,
            eval_margin: 64,
            eval_trials: 64,
            holdout_windows: 4096,
            num_seeds: 20,
            holds_threshold: 0.95,
        }
    }
}

pub fn optimizer_from_name(name: &str) -> CoreResult<OptimizerKind> {
    match name {
        "sgd" => Ok(OptimizerKind::Sgd),
        "adam" => Ok(OptimizerKind::adam_default()),
        _ => Err(CoreError::InvalidConfig(format!("unknown optimizer {name:?}"))),
    }
}

impl BoundSection {
    pub fn train_config(&self, seed: u64) -> CoreResult<TrainConfig> {
        let cfg = TrainConfig {
            input_window_a: self.input_window_a,
            output_window_b: self.output_window_b,
            batch_size: self.batch_size,
            steps: self.steps,
            learning_rate: self.learning_rate,
            optimizer: optimizer_from_name(&self.optimizer)?,
            seed,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn verify_config(&self) -> VerifyConfig {
        VerifyConfig {
            eval_width: self.eval_width,
            eval_margin: self.eval_margin,
            eval_trials: self.eval_trials,
            holdout_windows: self.holdout_windows,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterSection {
    pub window_width: f64,
    pub resolution: f64,
    pub sigma: f64,
    pub sigma_in_pixels: bool,
    pub threshold_frac: f64,
    pub max_iters: usize,
}

impl Default for RasterSection {
    fn default() -> Self {
        RasterSection {
            window_width: 80.0,
            resolution: 1.25,
            sigma: 6.4,
            sigma_in_pixels: false,
            threshold_frac: 0.1,
            max_iters: 50,
        }
    }
}

impl RasterSection {
    pub fn raster_config(&self) -> CoreResult<RasterConfig> {
        let rc = RasterConfig {
            window_width: self.window_width,
            resolution: self.resolution,
            sigma: self.sigma,
            sigma_in_pixels: self.sigma_in_pixels,
        };
        rc.validate()?;
        Ok(rc)
    }

    pub fn extraction_config(&self, rc: &RasterConfig) -> CoreResult<ExtractionConfig> {
        let ec = ExtractionConfig {
            threshold_frac: self.threshold_frac,
            max_iters: self.max_iters,
            ..ExtractionConfig::defaults_for(rc)
        };
        ec.validate()?;
        Ok(ec)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelSection {
    pub rate: f64,
    pub noise_power_mw: f64,
    pub channel_const: f64,
    pub path_loss_exp: f64,
}

impl Default for ChannelSection {
    fn default() -> Self {
        let cp = ChannelParams::default();
        ChannelSection {
            rate: cp.rate,
            noise_power_mw: cp.noise_power_mw,
            channel_const: cp.channel_const,
            path_loss_exp: cp.path_loss_exp,
        }
    }
}

impl ChannelSection {
    pub fn to_core(&self) -> ChannelParams {
        ChannelParams {
            rate: self.rate,
            noise_power_mw: self.noise_power_mw,
            channel_const: self.channel_const,
            path_loss_exp: self.path_loss_exp,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MidTrainSection {
    pub raster: RasterSection,
    pub arch: ArchSection,
    pub num_task_agents: usize,
    /// Maximum relay hop length used by the label oracle, meters.
    pub relay_spacing: f64,
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: String,
    /// Final-loss threshold the run must reach to exit 0.
    pub loss_threshold: f64,
}

impl Default for MidTrainSection {
    fn default() -> Self {
        MidTrainSection {
            raster: RasterSection::default(),
            arch: ArchSection::default(),
            num_task_agents: 8,
            relay_spacing: 10.0,
            batch_size: 4,
            steps: 300,
            learning_rate: 0.001,
            optimizer: "adam".into(),
            loss_threshold: 1e-5,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MidEvalSection {
    pub raster: RasterSection,
    pub channel: ChannelSection,
    pub num_task_agents: usize,
    pub widths: Vec<f64>,
    pub trials: usize,
    /// With --render, how many trials per width to dump as PGM pairs.
    pub render_trials: usize,
    pub write_trial_detail: bool,
}

impl Default for MidEvalSection {
    fn default() -> Self {
        MidEvalSection {
            raster: RasterSection::default(),
            channel: ChannelSection::default(),
            num_task_agents: 8,
            widths: vec![80.0, 160.0, 320.0],
            trials: 50,
            render_trials: 2,
            write_trial_detail: true,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RasterizeSection {
    pub raster: RasterSection,
    /// Input positions CSV (x_m,y_m).
    pub positions: String,
}

impl Default for RasterizeSection {
    fn default() -> Self {
        RasterizeSection { raster: RasterSection::default(), positions: String::new() }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExtractSection {
    pub raster: RasterSection,
    /// Input PGM image (with its .meta sidecar next to it).
    pub image: String,
}

impl Default for ExtractSection {
    fn default() -> Self {
        ExtractSection { raster: RasterSection::default(), image: String::new() }
    }
}

/// Top-level run configuration; each subcommand reads its own section.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub bound: Option<BoundSection>,
    pub mid_train: Option<MidTrainSection>,
    pub mid_eval: Option<MidEvalSection>,
    pub rasterize: Option<RasterizeSection>,
    pub extract: Option<ExtractSection>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"seeed": 3}"#).unwrap_err();
        assert!(err.to_string().contains("seeed"));
        assert!(serde_json::from_str::<RunConfig>(r#"{"bound": {"bogus": 1}}"#).is_err());
    }

    #[test]
    fn defaults_fill_missing_sections() {
        let cfg: RunConfig = serde_json::from_str(r#"{"seed": 7, "bound": {}}"#).unwrap();
        assert_eq!(cfg.seed, 7);
        let b = cfg.bound.unwrap();
        assert_eq!(b.input_window_a, 128);
        assert_eq!(b.output_window_b, 64);
        assert_eq!(b.num_seeds, 20);
    }

    #[test]
    fn echoed_config_round_trips() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"mid_eval": {"widths": [80.0, 160.0]}}"#).unwrap();
        let text = serde_json::to_string_pretty(&cfg).unwrap();
        let again: RunConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(again.mid_eval.unwrap().widths, vec![80.0, 160.0]);
    }

    #[test]
    fn optimizer_names() {
        assert!(optimizer_from_name("adam").is_ok());
        assert!(optimizer_from_name("sgd").is_ok());
        assert!(optimizer_from_name("lbfgs").is_err());
    }
}
