//! Episodic acquisition environment.
//!
//! Each step advances the revolving-target scene by one frame, simulates the
//! full RF frame once, applies the agent's mask to it, reconstructs both the
//! masked and the fully sampled image from that same realization, and scores
//! the masked reconstruction against the full one. Episodes end by time
//! limit after a fixed number of steps.

use alloc::format;
use alloc::vec::Vec;

use crate::beamform::{
    das_reconstruct, downsample_area, envelope, log_compress, BModeImage, ImageGrid,
};
use crate::mask::{apply_mask, Mask};
use crate::quality::{
    anisotropic_diffusion, reward_mse, reward_ssim_adversarial, ssim, threshold_filter,
    AdvRewardConfig, DiffusionConfig, Discriminator,
};
use crate::rng::Rng;
use crate::sim::{advance_scene, simulate_rf, ArrayGeometry, Scene, WireTarget};
use crate::Error;

const TWO_PI: f64 = core::f64::consts::TAU;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardKind {
    Mse,
    SsimAdv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PreFilter {
    None,
    Threshold,
    AnisotropicDiffusion,
}

/// Random scene generation bounds, drawn fresh at every reset.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneGenConfig {
    pub min_targets: usize,
    pub max_targets: usize,
    pub radial_min_mm: f64,
    pub radial_max_mm: f64,
    /// Angular velocity drawn uniformly from +/- this bound, per frame.
    pub angular_velocity_max: f64,
    pub reflectivity: f64,
    pub noise_std: f64,
}

impl Default for SceneGenConfig {
    fn default() -> Self {
        SceneGenConfig {
            min_targets: 1,
            max_targets: 3,
            radial_min_mm: 2.0,
            radial_max_mm: 7.0,
            angular_velocity_max: 0.3,
            reflectivity: 1.0,
            noise_std: 0.1,
        }
    }
}

impl SceneGenConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.min_targets < 1 || self.max_targets < self.min_targets {
            return Err(Error::InvalidConfig(format!(
                "need 1 <= min_targets <= max_targets, got {} and {}",
                self.min_targets, self.max_targets
            )));
        }
        if !(self.radial_min_mm > 0.0 && self.radial_max_mm >= self.radial_min_mm) {
            return Err(Error::InvalidConfig("bad radial distance range".into()));
        }
        if !(self.angular_velocity_max >= 0.0) {
            return Err(Error::InvalidConfig("angular_velocity_max must be >= 0".into()));
        }
        if !(self.reflectivity > 0.0) {
            return Err(Error::InvalidConfig("reflectivity must be > 0".into()));
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::InvalidConfig("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    /// Episode length T.
    pub episode_len: usize,
    pub geometry: ArrayGeometry,
    pub grid: ImageGrid,
    pub scene_gen: SceneGenConfig,
    pub reward: RewardKind,
    pub pre_filter: PreFilter,
    pub threshold: f64,
    pub diffusion: DiffusionConfig,
    pub adversarial: AdvRewardConfig,
    /// Side of the square area-averaged state encoding.
    pub encode_size: usize,
    pub dynamic_range_db: f64,
}

impl Default for EnvConfig {
    fn default() -> Self {
        EnvConfig {
            episode_len: 10,
            geometry: ArrayGeometry::default(),
            grid: ImageGrid::default(),
            scene_gen: SceneGenConfig::default(),
            reward: RewardKind::Mse,
            pre_filter: PreFilter::None,
            threshold: 0.1,
            diffusion: DiffusionConfig::default(),
            adversarial: AdvRewardConfig::default(),
            encode_size: 32,
            dynamic_range_db: 40.0,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> crate::Result<()> {
        if self.episode_len < 1 {
            return Err(Error::InvalidConfig("episode_len must be >= 1".into()));
        }
        self.geometry.validate()?;
        self.grid.validate(&self.geometry)?;
        self.scene_gen.validate()?;
        self.diffusion.validate()?;
        self.adversarial.validate()?;
        if self.encode_size == 0 {
            return Err(Error::InvalidConfig("encode_size must be >= 1".into()));
        }
        if !(self.dynamic_range_db > 0.0) {
            return Err(Error::InvalidConfig("dynamic_range_db must be > 0".into()));
        }
        if !(self.threshold >= 0.0) {
            return Err(Error::InvalidConfig("threshold must be >= 0".into()));
        }
        // The deepest target must be representable in the fast-time window
        // for every pair; mirror the Scene constructor's bound.
        let max_path = 2.0 * (self.scene_gen.radial_max_mm + self.geometry.array_radius_mm);
        let window = self.geometry.speed_of_sound_mm_per_us * self.geometry.record_window_us();
        if max_path > window {
            return Err(Error::InvalidConfig(format!(
                "radial_max_mm {} exceeds the depth representable in {} fast-time samples",
                self.scene_gen.radial_max_mm, self.geometry.num_fast_time_samples
            )));
        }
        if !(self.scene_gen.radial_min_mm > self.geometry.array_radius_mm) {
            return Err(Error::InvalidConfig(
                "radial_min_mm must exceed the array radius".into(),
            ));
        }
        Ok(())
    }
}

/// Outcome of one environment step.
#[derive(Debug, Clone)]
pub struct StepResult {
    /// Reconstruction from the masked acquisition; the next agent state.
    pub next_state: BModeImage,
    pub reward: f64,
    /// True when this step hit the episode time limit.
    pub truncated: bool,
    /// Fully sampled reconstruction of the same RF realization.
    pub ground_truth: BModeImage,
    pub mask: Mask,
}

/// The acquisition POMDP over one scene per episode.
#[derive(Debug, Clone)]
pub struct Environment {
    cfg: EnvConfig,
    scene: Option<Scene>,
    steps_taken: usize,
    discriminator: Option<Discriminator>,
}

impl Environment {
    /// Builds the environment; the RNG seeds the discriminator when the
    /// adversarial reward is configured.
    pub fn new(cfg: EnvConfig, rng: &mut Rng) -> crate::Result<Environment> {
        cfg.validate()?;
        let discriminator = match cfg.reward {
            RewardKind::SsimAdv => Some(Discriminator::new(
                cfg.encode_size * cfg.encode_size,
                &cfg.adversarial,
                rng,
            )?),
            RewardKind::Mse => None,
        };
        Ok(Environment {
            cfg,
            scene: None,
            steps_taken: 0,
            discriminator,
        })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn num_measurements(&self) -> usize {
        self.cfg.geometry.num_measurements()
    }

    /// Dimension of the encoded state vector consumed by the agent.
    pub fn state_dim(&self) -> usize {
        self.cfg.encode_size * self.cfg.encode_size
    }

    /// Area-averaged square encoding of a reconstruction.
    pub fn encode(&self, img: &BModeImage) -> Vec<f64> {
        downsample_area(img, self.cfg.encode_size, self.cfg.encode_size)
    }

    fn reconstruct(&self, frame: &crate::mask::RfFrame) -> crate::Result<BModeImage> {
        let field = das_reconstruct(frame, &self.cfg.geometry, &self.cfg.grid)?;
        log_compress(&envelope(&field), self.cfg.dynamic_range_db)
    }

    fn random_scene(&self, rng: &mut Rng) -> crate::Result<Scene> {
        let g = &self.cfg.scene_gen;
        let span = g.max_targets - g.min_targets;
        let count = g.min_targets
            + if span > 0 {
                rng.below(span as u64 + 1) as usize
            } else {
                0
            };
        let targets: Vec<WireTarget> = (0..count)
            .map(|_| WireTarget {
                angle_rad: rng.range_f64(0.0, TWO_PI),
                radial_distance_mm: rng.range_f64(g.radial_min_mm, g.radial_max_mm),
                angular_velocity_rad_per_frame: rng
                    .range_f64(-g.angular_velocity_max, g.angular_velocity_max),
                reflectivity: g.reflectivity,
            })
            .collect();
        Scene::new(targets, g.noise_std, rng.next_u64(), &self.cfg.geometry)
    }

    /// Starts a fresh episode: new random scene, fully sampled first frame.
    pub fn reset(&mut self, rng: &mut Rng) -> crate::Result<BModeImage> {
        let scene = self.random_scene(rng)?;
        let frame = simulate_rf(&scene, &self.cfg.geometry);
        let image = self.reconstruct(&frame)?;
        self.scene = Some(scene);
        self.steps_taken = 0;
        Ok(image)
    }

    pub fn steps_taken(&self) -> usize {
        self.steps_taken
    }

    /// Advances the scene one frame, acquires under `action`, reconstructs,
    /// and scores against the fully sampled reconstruction of the same
    /// realization.
    pub fn step(&mut self, action: &Mask) -> crate::Result<StepResult> {
        let scene = self.scene.as_ref().ok_or(Error::EpisodeOver)?;
        if self.steps_taken >= self.cfg.episode_len {
            return Err(Error::EpisodeOver);
        }
        let next_scene = advance_scene(scene);
        let full = simulate_rf(&next_scene, &self.cfg.geometry);
        let masked = apply_mask(action, &full)?;
        let next_state = self.reconstruct(&masked)?;
        let ground_truth = self.reconstruct(&full)?;

        let (state_scored, truth_scored) = match self.cfg.pre_filter {
            PreFilter::None => (next_state.clone(), ground_truth.clone()),
            PreFilter::Threshold => (
                threshold_filter(&next_state, self.cfg.threshold),
                threshold_filter(&ground_truth, self.cfg.threshold),
            ),
            PreFilter::AnisotropicDiffusion => (
                anisotropic_diffusion(&next_state, &self.cfg.diffusion),
                anisotropic_diffusion(&ground_truth, &self.cfg.diffusion),
            ),
        };
        let reward = match self.cfg.reward {
            RewardKind::Mse => reward_mse(&state_scored, &truth_scored)?,
            RewardKind::SsimAdv => {
                let ssim_value = ssim(&state_scored, &truth_scored)?;
                let s_enc = downsample_area(
                    &state_scored,
                    self.cfg.encode_size,
                    self.cfg.encode_size,
                );
                let t_enc = downsample_area(
                    &truth_scored,
                    self.cfg.encode_size,
                    self.cfg.encode_size,
                );
                let disc = self
                    .discriminator
                    .as_mut()
                    .expect("adversarial reward keeps a discriminator");
                reward_ssim_adversarial(
                    &s_enc,
                    &t_enc,
                    ssim_value,
                    self.cfg.adversarial.lambda_d,
                    disc,
                )?
            }
        };

        self.scene = Some(next_scene);
        self.steps_taken += 1;
        Ok(StepResult {
            next_state,
            reward,
            truncated: self.steps_taken == self.cfg.episode_len,
            ground_truth,
            mask: action.clone(),
        })
    }
}
