//! Pulse-echo RF simulation of wire targets seen by a circular transducer
//! array.
//!
//! The signal model is a point scatterer per wire: each measurement channel
//! (one transmit element, one receive element from the sub-aperture centered
//! on it) records a Gaussian-enveloped sinusoid per target, delayed by the
//! two-way time of flight, plus optional i.i.d. Gaussian noise. No
//! attenuation, directivity, or multiple scattering.

use alloc::format;
use alloc::vec::Vec;
use libm::{cos, exp, sqrt};

use crate::mask::{index_to_pair, RfFrame};
use crate::rng::Rng;
use crate::Error;

const TWO_PI: f64 = core::f64::consts::TAU;

/// Circular array and pulse description. Distances in mm, times in µs,
/// frequencies in MHz.
#[derive(Debug, Clone, PartialEq)]
pub struct ArrayGeometry {
    /// Number of transducer elements E, evenly spaced on the circle.
    pub num_elements: usize,
    /// Receive sub-aperture size A (odd), centered on the transmit element.
    pub sub_aperture: usize,
    pub array_radius_mm: f64,
    pub speed_of_sound_mm_per_us: f64,
    pub sampling_freq_mhz: f64,
    pub pulse_center_freq_mhz: f64,
    /// Fractional -6 dB bandwidth of the Gaussian pulse envelope.
    pub pulse_bandwidth_frac: f64,
    /// Fast-time samples per channel, S.
    pub num_fast_time_samples: usize,
}

impl Default for ArrayGeometry {
    fn default() -> Self {
        ArrayGeometry {
            num_elements: 32,
            sub_aperture: 5,
            array_radius_mm: 0.5,
            speed_of_sound_mm_per_us: 1.54,
            sampling_freq_mhz: 32.0,
            pulse_center_freq_mhz: 8.0,
            pulse_bandwidth_frac: 0.6,
            num_fast_time_samples: 384,
        }
    }
}

impl ArrayGeometry {
    pub fn validate(&self) -> crate::Result<()> {
        if self.num_elements < 4 {
            return Err(Error::InvalidConfig(format!(
                "num_elements must be >= 4, got {}",
                self.num_elements
            )));
        }
        if self.sub_aperture % 2 == 0
            || self.sub_aperture < 1
            || self.sub_aperture > self.num_elements
        {
            return Err(Error::InvalidConfig(format!(
                "sub_aperture must be odd and in [1, {}], got {}",
                self.num_elements, self.sub_aperture
            )));
        }
        if self.num_fast_time_samples < 1 {
            return Err(Error::InvalidConfig("num_fast_time_samples must be >= 1".into()));
        }
        for (name, v) in [
            ("array_radius_mm", self.array_radius_mm),
            ("speed_of_sound_mm_per_us", self.speed_of_sound_mm_per_us),
            ("sampling_freq_mhz", self.sampling_freq_mhz),
            ("pulse_center_freq_mhz", self.pulse_center_freq_mhz),
            ("pulse_bandwidth_frac", self.pulse_bandwidth_frac),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} must be > 0, got {v}")));
            }
        }
        Ok(())
    }

    /// Total measurement count N = E * A.
    pub fn num_measurements(&self) -> usize {
        self.num_elements * self.sub_aperture
    }

    pub fn element_angle(&self, i: usize) -> f64 {
        TWO_PI * i as f64 / self.num_elements as f64
    }

    pub fn element_position(&self, i: usize) -> (f64, f64) {
        let a = self.element_angle(i);
        (self.array_radius_mm * cos(a), self.array_radius_mm * libm::sin(a))
    }

    /// Recording window length in µs.
    pub fn record_window_us(&self) -> f64 {
        self.num_fast_time_samples as f64 / self.sampling_freq_mhz
    }

    /// Standard deviation of the Gaussian pulse envelope in µs, derived from
    /// the -6 dB fractional bandwidth.
    pub fn pulse_sigma_us(&self) -> f64 {
        let bw_mhz = self.pulse_center_freq_mhz * self.pulse_bandwidth_frac;
        let sigma_f = bw_mhz / (2.0 * sqrt(2.0 * libm::log(2.0)));
        1.0 / (TWO_PI * sigma_f)
    }
}

/// One revolving point scatterer.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WireTarget {
    pub angle_rad: f64,
    pub radial_distance_mm: f64,
    pub angular_velocity_rad_per_frame: f64,
    pub reflectivity: f64,
}

/// A set of wire targets plus the per-frame noise description.
///
/// RF noise is a pure function of `(rng_seed, frame_index)`, so simulation is
/// deterministic and advancing the scene refreshes the noise realization.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub targets: Vec<WireTarget>,
    pub noise_std: f64,
    pub frame_index: u64,
    pub rng_seed: u64,
}

impl Scene {
    /// Validates targets against the geometry: every echo must land inside
    /// the recording window for every pair in the sub-aperture.
    pub fn new(
        targets: Vec<WireTarget>,
        noise_std: f64,
        rng_seed: u64,
        geom: &ArrayGeometry,
    ) -> crate::Result<Scene> {
        geom.validate()?;
        if targets.is_empty() {
            return Err(Error::InvalidConfig("scene needs at least one target".into()));
        }
        if !(noise_std >= 0.0) {
            return Err(Error::InvalidConfig(format!("noise_std must be >= 0, got {noise_std}")));
        }
        let max_path_mm = geom.speed_of_sound_mm_per_us * geom.record_window_us();
        for (i, t) in targets.iter().enumerate() {
            if !(t.reflectivity > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "target {i}: reflectivity must be > 0, got {}",
                    t.reflectivity
                )));
            }
            if !(t.radial_distance_mm > geom.array_radius_mm) {
                return Err(Error::InvalidConfig(format!(
                    "target {i}: radial distance {} must exceed array radius {}",
                    t.radial_distance_mm, geom.array_radius_mm
                )));
            }
            // Worst case over element pairs: both legs at their maximum.
            let worst = 2.0 * (t.radial_distance_mm + geom.array_radius_mm);
            if worst > max_path_mm {
                return Err(Error::InvalidConfig(format!(
                    "target {i} at {} mm is beyond the depth representable in {} samples",
                    t.radial_distance_mm, geom.num_fast_time_samples
                )));
            }
        }
        Ok(Scene {
            targets,
            noise_std,
            frame_index: 0,
            rng_seed,
        })
    }
}

/// Rotates every target by its angular velocity (angle wrapped to [0, 2π))
/// and bumps the frame index. Radial distances are unchanged.
pub fn advance_scene(scene: &Scene) -> Scene {
    let mut next = scene.clone();
    for t in &mut next.targets {
        let mut a = t.angle_rad + t.angular_velocity_rad_per_frame;
        a %= TWO_PI;
        if a < 0.0 {
            a += TWO_PI;
        }
        t.angle_rad = a;
    }
    next.frame_index = scene.frame_index + 1;
    next
}

/// Simulates all N = E*A channels for the current frame.
///
/// Channel n, mapped to pair (tx, rx), records
/// `sum_targets reflectivity * p(t - tof)` with
/// `tof = (|pos_tx - target| + |target - pos_rx|) / c` and p a
/// Gaussian-enveloped cosine at the pulse center frequency, then additive
/// Gaussian noise of the scene's standard deviation.
pub fn simulate_rf(scene: &Scene, geom: &ArrayGeometry) -> RfFrame {
    let n = geom.num_measurements();
    let s = geom.num_fast_time_samples;
    let fs = geom.sampling_freq_mhz;
    let sigma_t = geom.pulse_sigma_us();
    // The envelope is below 3.4e-4 of peak outside +/- 4 sigma; truncate there.
    let support_samples = 4.0 * sigma_t * fs;
    let f0 = geom.pulse_center_freq_mhz;

    let mut frame = RfFrame::zeros(n, s);
    let positions: Vec<(f64, f64)> = (0..geom.num_elements)
        .map(|i| geom.element_position(i))
        .collect();

    for ch in 0..n {
        let (tx, rx) = index_to_pair(ch, geom).expect("channel index in range");
        let data = frame.channel_mut(ch);
        for t in &scene.targets {
            let tpos = (
                t.radial_distance_mm * cos(t.angle_rad),
                t.radial_distance_mm * libm::sin(t.angle_rad),
            );
            let d_tx = dist(positions[tx], tpos);
            let d_rx = dist(tpos, positions[rx]);
            let tof_us = (d_tx + d_rx) / geom.speed_of_sound_mm_per_us;
            let center = tof_us * fs;
            let lo = libm::floor(center - support_samples).max(0.0) as usize;
            let hi = (libm::ceil(center + support_samples) as usize).min(s.saturating_sub(1));
            for k in lo..=hi.min(s - 1) {
                let dt_us = (k as f64 - center) / fs;
                data[k] += t.reflectivity
                    * exp(-dt_us * dt_us / (2.0 * sigma_t * sigma_t))
                    * cos(TWO_PI * f0 * dt_us);
            }
        }
    }

    if scene.noise_std > 0.0 {
        let mut rng = Rng::seed_from_pair(scene.rng_seed, scene.frame_index);
        for ch in 0..n {
            let data = frame.channel_mut(ch);
            for v in data.iter_mut() {
                *v += scene.noise_std * rng.normal();
            }
        }
    }
    frame
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    sqrt(dx * dx + dy * dy)
}
