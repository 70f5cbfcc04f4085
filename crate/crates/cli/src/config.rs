//! Run configuration: every module's parameters plus the experiment knobs,
//! loadable from a flat `section.key = value` text file and printable back
//! in the same format. Unknown keys are errors so typos fail before any
//! work starts.

use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use ivus_core::agent::AgentConfig;
use ivus_core::env::{EnvConfig, PreFilter, RewardKind};

/// Full configuration of one run. `subsampling_factor` is N/K; the mask
/// size K is derived from it.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub train_steps: usize,
    pub eval_interval: usize,
    pub eval_episodes: usize,
    pub subsampling_factor: usize,
    pub out_dir: PathBuf,
    pub env: EnvConfig,
    pub agent: AgentConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 7,
            train_steps: 20_000,
            eval_interval: 1000,
            eval_episodes: 10,
            subsampling_factor: 4,
            out_dir: PathBuf::from("runs/latest"),
            env: EnvConfig::default(),
            agent: AgentConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn num_measurements(&self) -> usize {
        self.env.geometry.num_measurements()
    }

    /// K, the per-frame selection size.
    pub fn mask_size(&self) -> usize {
        self.num_measurements() / self.subsampling_factor
    }

    /// Noise-annealing horizon: a stored 0 means half the training steps.
    pub fn resolved_anneal_steps(&self) -> usize {
        if self.agent.gumbel.anneal_steps == 0 {
            (self.train_steps / 2).max(1)
        } else {
            self.agent.gumbel.anneal_steps
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate().map_err(|e| anyhow!("{e}"))?;
        let mut agent = self.agent.clone();
        agent.gumbel.anneal_steps = self.resolved_anneal_steps();
        agent.validate().map_err(|e| anyhow!("{e}"))?;
        let n = self.num_measurements();
        if self.subsampling_factor == 0 || n % self.subsampling_factor != 0 {
            bail!(
                "subsampling_factor {} must divide N = {n}",
                self.subsampling_factor
            );
        }
        if self.eval_interval == 0 {
            bail!("eval_interval must be >= 1");
        }
        if self.eval_episodes == 0 {
            bail!("eval_episodes must be >= 1");
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg = RunConfig::default();
        cfg.apply_text(&text)
            .with_context(|| format!("parsing config {}", path.display()))?;
        Ok(cfg)
    }

    /// Applies `section.key = value` lines over the current values.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", lineno + 1))?;
            self.set(key.trim(), value.trim())
                .with_context(|| format!("line {}", lineno + 1))?;
        }
        Ok(())
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        fn u<T: std::str::FromStr>(value: &str, key: &str) -> Result<T>
        where
            T::Err: std::fmt::Display,
        {
            value
                .parse()
                .map_err(|e| anyhow!("bad value `{value}` for {key}: {e}"))
        }
        fn sizes(value: &str, key: &str) -> Result<Vec<usize>> {
            value
                .split(',')
                .map(|v| u::<usize>(v.trim(), key))
                .collect()
        }
        match key {
            "seed" => self.seed = u(value, key)?,
            "train_steps" => self.train_steps = u(value, key)?,
            "eval_interval" => self.eval_interval = u(value, key)?,
            "eval_episodes" => self.eval_episodes = u(value, key)?,
            "subsampling_factor" => self.subsampling_factor = u(value, key)?,
            "out_dir" => self.out_dir = PathBuf::from(value),

            "geometry.num_elements" => self.env.geometry.num_elements = u(value, key)?,
            "geometry.sub_aperture" => self.env.geometry.sub_aperture = u(value, key)?,
            "geometry.array_radius_mm" => self.env.geometry.array_radius_mm = u(value, key)?,
            "geometry.speed_of_sound_mm_per_us" => {
                self.env.geometry.speed_of_sound_mm_per_us = u(value, key)?
            }
            "geometry.sampling_freq_mhz" => self.env.geometry.sampling_freq_mhz = u(value, key)?,
            "geometry.pulse_center_freq_mhz" => {
                self.env.geometry.pulse_center_freq_mhz = u(value, key)?
            }
            "geometry.pulse_bandwidth_frac" => {
                self.env.geometry.pulse_bandwidth_frac = u(value, key)?
            }
            "geometry.num_fast_time_samples" => {
                self.env.geometry.num_fast_time_samples = u(value, key)?
            }

            "grid.num_scanlines" => self.env.grid.num_scanlines = u(value, key)?,
            "grid.num_depth_samples" => self.env.grid.num_depth_samples = u(value, key)?,
            "grid.max_depth_mm" => self.env.grid.max_depth_mm = u(value, key)?,

            "scene.min_targets" => self.env.scene_gen.min_targets = u(value, key)?,
            "scene.max_targets" => self.env.scene_gen.max_targets = u(value, key)?,
            "scene.radial_min_mm" => self.env.scene_gen.radial_min_mm = u(value, key)?,
            "scene.radial_max_mm" => self.env.scene_gen.radial_max_mm = u(value, key)?,
            "scene.angular_velocity_max" => {
                self.env.scene_gen.angular_velocity_max = u(value, key)?
            }
            "scene.reflectivity" => self.env.scene_gen.reflectivity = u(value, key)?,
            "scene.noise_std" => self.env.scene_gen.noise_std = u(value, key)?,

            "env.episode_len" => self.env.episode_len = u(value, key)?,
            "env.reward" => {
                self.env.reward = match value {
                    "mse" => RewardKind::Mse,
                    "ssim_adv" => RewardKind::SsimAdv,
                    other => bail!("env.reward must be `mse` or `ssim_adv`, got `{other}`"),
                }
            }
            "env.pre_filter" => {
                self.env.pre_filter = match value {
                    "none" => PreFilter::None,
                    "threshold" => PreFilter::Threshold,
                    "anisotropic_diffusion" => PreFilter::AnisotropicDiffusion,
                    other => bail!(
                        "env.pre_filter must be `none`, `threshold`, or \
                         `anisotropic_diffusion`, got `{other}`"
                    ),
                }
            }
            "env.threshold" => self.env.threshold = u(value, key)?,
            "env.encode_size" => self.env.encode_size = u(value, key)?,
            "env.dynamic_range_db" => self.env.dynamic_range_db = u(value, key)?,

            "diffusion.iterations" => self.env.diffusion.iterations = u(value, key)?,
            "diffusion.kappa" => self.env.diffusion.kappa = u(value, key)?,
            "diffusion.step_size" => self.env.diffusion.step_size = u(value, key)?,

            "adversarial.lambda_d" => self.env.adversarial.lambda_d = u(value, key)?,
            "adversarial.hidden" => self.env.adversarial.hidden = sizes(value, key)?,
            "adversarial.learning_rate" => self.env.adversarial.learning_rate = u(value, key)?,

            "agent.gamma" => self.agent.gamma = u(value, key)?,
            "agent.actor_learning_rate" => self.agent.actor_learning_rate = u(value, key)?,
            "agent.critic_learning_rate" => self.agent.critic_learning_rate = u(value, key)?,
            "agent.batch_size" => self.agent.batch_size = u(value, key)?,
            "agent.target_tau" => self.agent.target_tau = u(value, key)?,
            "agent.replay_capacity" => self.agent.replay_capacity = u(value, key)?,
            "agent.warmup_steps" => self.agent.warmup_steps = u(value, key)?,
            "agent.actor_hidden" => self.agent.actor_hidden = sizes(value, key)?,
            "agent.critic_hidden" => self.agent.critic_hidden = sizes(value, key)?,

            "gumbel.sigma_start" => self.agent.gumbel.sigma_start = u(value, key)?,
            "gumbel.sigma_end" => self.agent.gumbel.sigma_end = u(value, key)?,
            "gumbel.anneal_steps" => self.agent.gumbel.anneal_steps = u(value, key)?,
            "gumbel.relax_temperature" => self.agent.gumbel.relax_temperature = u(value, key)?,

            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Serializes the configuration in the file format `apply_text` reads.
    pub fn to_text(&self) -> String {
        let reward = match self.env.reward {
            RewardKind::Mse => "mse",
            RewardKind::SsimAdv => "ssim_adv",
        };
        let pre_filter = match self.env.pre_filter {
            PreFilter::None => "none",
            PreFilter::Threshold => "threshold",
            PreFilter::AnisotropicDiffusion => "anisotropic_diffusion",
        };
        let join = |v: &[usize]| {
            v.iter()
                .map(|s| s.to_string())
                .collect::<Vec<_>>()
                .join(",")
        };
        format!(
            "# run\n\
             seed = {}\n\
             train_steps = {}\n\
             eval_interval = {}\n\
             eval_episodes = {}\n\
             subsampling_factor = {}\n\
             out_dir = {}\n\
             \n# circular array and pulse\n\
             geometry.num_elements = {}\n\
             geometry.sub_aperture = {}\n\
             geometry.array_radius_mm = {}\n\
             geometry.speed_of_sound_mm_per_us = {}\n\
             geometry.sampling_freq_mhz = {}\n\
             geometry.pulse_center_freq_mhz = {}\n\
             geometry.pulse_bandwidth_frac = {}\n\
             geometry.num_fast_time_samples = {}\n\
             \n# polar reconstruction grid\n\
             grid.num_scanlines = {}\n\
             grid.num_depth_samples = {}\n\
             grid.max_depth_mm = {}\n\
             \n# wire-target scenes\n\
             scene.min_targets = {}\n\
             scene.max_targets = {}\n\
             scene.radial_min_mm = {}\n\
             scene.radial_max_mm = {}\n\
             scene.angular_velocity_max = {}\n\
             scene.reflectivity = {}\n\
             scene.noise_std = {}\n\
             \n# environment\n\
             env.episode_len = {}\n\
             env.reward = {reward}\n\
             env.pre_filter = {pre_filter}\n\
             env.threshold = {}\n\
             env.encode_size = {}\n\
             env.dynamic_range_db = {}\n\
             \n# anisotropic diffusion pre-filter\n\
             diffusion.iterations = {}\n\
             diffusion.kappa = {}\n\
             diffusion.step_size = {}\n\
             \n# adversarial reward term\n\
             adversarial.lambda_d = {}\n\
             adversarial.hidden = {}\n\
             adversarial.learning_rate = {}\n\
             \n# actor-critic learner\n\
             agent.gamma = {}\n\
             agent.actor_learning_rate = {}\n\
             agent.critic_learning_rate = {}\n\
             agent.batch_size = {}\n\
             agent.target_tau = {}\n\
             agent.replay_capacity = {}\n\
             agent.warmup_steps = {}\n\
             agent.actor_hidden = {}\n\
             agent.critic_hidden = {}\n\
             \n# gumbel exploration (anneal_steps = 0 means half of train_steps)\n\
             gumbel.sigma_start = {}\n\
             gumbel.sigma_end = {}\n\
             gumbel.anneal_steps = {}\n\
             gumbel.relax_temperature = {}\n",
            self.seed,
            self.train_steps,
            self.eval_interval,
            self.eval_episodes,
            self.subsampling_factor,
            self.out_dir.display(),
            self.env.geometry.num_elements,
            self.env.geometry.sub_aperture,
            self.env.geometry.array_radius_mm,
            self.env.geometry.speed_of_sound_mm_per_us,
            self.env.geometry.sampling_freq_mhz,
            self.env.geometry.pulse_center_freq_mhz,
            self.env.geometry.pulse_bandwidth_frac,
            self.env.geometry.num_fast_time_samples,
            self.env.grid.num_scanlines,
            self.env.grid.num_depth_samples,
            self.env.grid.max_depth_mm,
            self.env.scene_gen.min_targets,
            self.env.scene_gen.max_targets,
            self.env.scene_gen.radial_min_mm,
            self.env.scene_gen.radial_max_mm,
            self.env.scene_gen.angular_velocity_max,
            self.env.scene_gen.reflectivity,
            self.env.scene_gen.noise_std,
            self.env.episode_len,
            self.env.threshold,
            self.env.encode_size,
            self.env.dynamic_range_db,
            self.env.diffusion.iterations,
            self.env.diffusion.kappa,
            self.env.diffusion.step_size,
            self.env.adversarial.lambda_d,
            join(&self.env.adversarial.hidden),
            self.env.adversarial.learning_rate,
            self.agent.gamma,
            self.agent.actor_learning_rate,
            self.agent.critic_learning_rate,
            self.agent.batch_size,
            self.agent.target_tau,
            self.agent.replay_capacity,
            self.agent.warmup_steps,
            join(&self.agent.actor_hidden),
            join(&self.agent.critic_hidden),
            self.agent.gumbel.sigma_start,
            self.agent.gumbel.sigma_end,
            self.agent.gumbel.anneal_steps,
            self.agent.gumbel.relax_temperature,
        )
    }
}
