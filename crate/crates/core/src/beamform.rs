//! Delay-and-sum reconstruction of (possibly zero-filled) RF channel data
//! into a polar B-mode image.
//!
//! The reconstruction operator is: per-pixel time-of-flight alignment and
//! apodized summation over element pairs ([`das_reconstruct`]), per-scanline
//! envelope detection through a frequency-domain Hilbert transform
//! ([`envelope`]), and log compression to [0, 1] ([`log_compress`]).
//! [`scan_convert`] resamples the polar image onto a Cartesian disk for
//! display. All stages are deterministic with a fixed summation order.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use libm::{atan2, cos, floor, log10, sin, sqrt};

use crate::fft::{analytic_envelope, FftPlan};
use crate::mask::RfFrame;
use crate::sim::ArrayGeometry;
use crate::Error;

const TWO_PI: f64 = core::f64::consts::TAU;

/// Polar reconstruction grid: scanline angles uniform over [0, 2π), depth
/// samples at cell centers up to `max_depth_mm` measured from the array
/// surface.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub num_scanlines: usize,
    pub num_depth_samples: usize,
    pub max_depth_mm: f64,
}

impl Default for ImageGrid {
    fn default() -> Self {
        ImageGrid {
            num_scanlines: 128,
            num_depth_samples: 192,
            max_depth_mm: 8.0,
        }
    }
}

impl ImageGrid {
    pub fn validate(&self, geom: &ArrayGeometry) -> crate::Result<()> {
        if self.num_scanlines == 0 || self.num_scanlines % geom.num_elements != 0 {
            return Err(Error::InvalidConfig(format!(
                "num_scanlines {} must be a positive multiple of num_elements {}",
                self.num_scanlines, geom.num_elements
            )));
        }
        if self.num_depth_samples == 0 {
            return Err(Error::InvalidConfig("num_depth_samples must be >= 1".into()));
        }
        if !(self.max_depth_mm > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "max_depth_mm must be > 0, got {}",
                self.max_depth_mm
            )));
        }
        // The beamformed field oscillates along depth at the round-trip
        // carrier, spatial period c / (2 f0); envelope detection needs at
        // least two depth samples per period.
        let depth_step = self.max_depth_mm / self.num_depth_samples as f64;
        let limit = geom.speed_of_sound_mm_per_us / (4.0 * geom.pulse_center_freq_mhz);
        if depth_step > limit {
            return Err(Error::InvalidConfig(format!(
                "depth step {depth_step:.4} mm undersamples the round-trip carrier; \
                 needs <= {limit:.4} mm at {} MHz",
                geom.pulse_center_freq_mhz
            )));
        }
        Ok(())
    }

    pub fn scanline_angle(&self, s: usize) -> f64 {
        TWO_PI * s as f64 / self.num_scanlines as f64
    }

    /// Depth of sample `d` in mm from the array surface (cell centers).
    pub fn depth_mm(&self, d: usize) -> f64 {
        (d as f64 + 0.5) * self.max_depth_mm / self.num_depth_samples as f64
    }

    pub fn num_pixels(&self) -> usize {
        self.num_scanlines * self.num_depth_samples
    }
}

/// Raw beamformed field on the polar grid, scanline-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Field {
    num_scanlines: usize,
    num_depth_samples: usize,
    data: Vec<f64>,
}

impl Field {
    pub fn zeros(num_scanlines: usize, num_depth_samples: usize) -> Self {
        Field {
            num_scanlines,
            num_depth_samples,
            data: vec![0.0; num_scanlines * num_depth_samples],
        }
    }

    pub fn from_data(
        num_scanlines: usize,
        num_depth_samples: usize,
        data: Vec<f64>,
    ) -> crate::Result<Self> {
        if data.len() != num_scanlines * num_depth_samples {
            return Err(Error::Dimension {
                what: "field data length",
                expected: num_scanlines * num_depth_samples,
                got: data.len(),
            });
        }
        Ok(Field {
            num_scanlines,
            num_depth_samples,
            data,
        })
    }

    pub fn num_scanlines(&self) -> usize {
        self.num_scanlines
    }

    pub fn num_depth_samples(&self) -> usize {
        self.num_depth_samples
    }

    pub fn at(&self, s: usize, d: usize) -> f64 {
        self.data[s * self.num_depth_samples + d]
    }

    pub fn scanline(&self, s: usize) -> &[f64] {
        &self.data[s * self.num_depth_samples..(s + 1) * self.num_depth_samples]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Log-compressed B-mode image on the polar grid; every pixel is finite and
/// in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct BModeImage {
    num_scanlines: usize,
    num_depth_samples: usize,
    data: Vec<f64>,
}

impl BModeImage {
    pub fn from_data(
        num_scanlines: usize,
        num_depth_samples: usize,
        data: Vec<f64>,
    ) -> crate::Result<Self> {
        if data.len() != num_scanlines * num_depth_samples {
            return Err(Error::Dimension {
                what: "image data length",
                expected: num_scanlines * num_depth_samples,
                got: data.len(),
            });
        }
        for &v in &data {
            if !v.is_finite() || !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidConfig(format!(
                    "image pixel {v} outside [0, 1]"
                )));
            }
        }
        Ok(BModeImage {
            num_scanlines,
            num_depth_samples,
            data,
        })
    }

    pub fn zeros(num_scanlines: usize, num_depth_samples: usize) -> Self {
        BModeImage {
            num_scanlines,
            num_depth_samples,
            data: vec![0.0; num_scanlines * num_depth_samples],
        }
    }

    pub fn num_scanlines(&self) -> usize {
        self.num_scanlines
    }

    pub fn num_depth_samples(&self) -> usize {
        self.num_depth_samples
    }

    pub fn at(&self, s: usize, d: usize) -> f64 {
        self.data[s * self.num_depth_samples + d]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_shape(&self, other: &BModeImage) -> bool {
        self.num_scanlines == other.num_scanlines
            && self.num_depth_samples == other.num_depth_samples
    }
}

fn dist(a: (f64, f64), b: (f64, f64)) -> f64 {
    let dx = a.0 - b.0;
    let dy = a.1 - b.1;
    sqrt(dx * dx + dy * dy)
}

fn wrapped_angle_distance(a: f64, b: f64) -> f64 {
    let mut d = (a - b) % TWO_PI;
    if d < 0.0 {
        d += TWO_PI;
    }
    d.min(TWO_PI - d)
}

/// Hann taper over the A receive offsets, sampled at the interior points so
/// edge offsets keep nonzero weight.
fn aperture_weights(a: usize) -> Vec<f64> {
    (0..a)
        .map(|j| {
            let s = sin(core::f64::consts::PI * (j + 1) as f64 / (a + 1) as f64);
            s * s
        })
        .collect()
}

/// Delay-and-sum beamforming of (possibly zero-filled) channel data onto the
/// polar grid.
///
/// Each pixel sums, over the element pairs whose transmit element lies within
/// the 2·(360/E)-degree sector around the scanline, the linearly interpolated
/// channel sample at the pair's round-trip time of flight, weighted by a
/// fixed Hann apodization across the receive offsets. Delays outside the
/// recording window contribute zero.
pub fn das_reconstruct(
    y: &RfFrame,
    geom: &ArrayGeometry,
    grid: &ImageGrid,
) -> crate::Result<Field> {
    geom.validate()?;
    grid.validate(geom)?;
    let n = geom.num_measurements();
    if y.num_channels() != n {
        return Err(Error::Dimension {
            what: "rf channel count",
            expected: n,
            got: y.num_channels(),
        });
    }
    if y.num_samples() != geom.num_fast_time_samples {
        return Err(Error::Dimension {
            what: "rf sample count",
            expected: geom.num_fast_time_samples,
            got: y.num_samples(),
        });
    }

    let e = geom.num_elements;
    let a = geom.sub_aperture;
    let s_len = geom.num_fast_time_samples;
    let fs = geom.sampling_freq_mhz;
    let c = geom.speed_of_sound_mm_per_us;
    let half = ((a - 1) / 2) as isize;
    let weights = aperture_weights(a);
    let sector_half_width = TWO_PI / e as f64;
    let positions: Vec<(f64, f64)> = (0..e).map(|i| geom.element_position(i)).collect();

    let mut field = Field::zeros(grid.num_scanlines, grid.num_depth_samples);
    for s in 0..grid.num_scanlines {
        let theta = grid.scanline_angle(s);
        // Transmit elements whose sector covers this scanline, ascending.
        let center = theta / (TWO_PI / e as f64);
        let mut txs: Vec<usize> = Vec::with_capacity(4);
        let base = libm::round(center) as isize;
        for off in -2..=2isize {
            let cand = (base + off).rem_euclid(e as isize) as usize;
            let d = wrapped_angle_distance(theta, geom.element_angle(cand));
            if d <= sector_half_width * (1.0 + 1e-12) {
                txs.push(cand);
            }
        }
        txs.sort_unstable();
        txs.dedup();

        let (ct, st) = (cos(theta), sin(theta));
        for d in 0..grid.num_depth_samples {
            let rho = geom.array_radius_mm + grid.depth_mm(d);
            let q = (rho * ct, rho * st);
            let mut acc = 0.0;
            for &tx in &txs {
                let d_tx = dist(positions[tx], q);
                for j in 0..a {
                    let offset = j as isize - half;
                    let rx = (tx as isize + offset).rem_euclid(e as isize) as usize;
                    let d_rx = dist(q, positions[rx]);
                    let tau = (d_tx + d_rx) / c * fs;
                    if tau < 0.0 || tau >= s_len as f64 {
                        continue;
                    }
                    let i0 = floor(tau) as usize;
                    let frac = tau - i0 as f64;
                    let ch = y.channel(tx * a + j);
                    let v0 = ch[i0];
                    let v1 = if i0 + 1 < s_len { ch[i0 + 1] } else { 0.0 };
                    acc += weights[j] * (v0 + frac * (v1 - v0));
                }
            }
            field.data[s * grid.num_depth_samples + d] = acc;
        }
    }
    Ok(field)
}

/// Per-scanline magnitude of the analytic signal (frequency-domain Hilbert
/// transform along depth).
pub fn envelope(field: &Field) -> Field {
    let plan = FftPlan::new(field.num_depth_samples);
    let mut out = Field::zeros(field.num_scanlines, field.num_depth_samples);
    for s in 0..field.num_scanlines {
        let env = analytic_envelope(&plan, field.scanline(s));
        out.data[s * field.num_depth_samples..(s + 1) * field.num_depth_samples]
            .copy_from_slice(&env);
    }
    out
}

/// Log compression of a nonnegative envelope into [0, 1]:
/// `clamp(1 + 20*log10(env/max) / dynamic_range_db, 0, 1)`. An all-zero
/// envelope maps to the all-zero image.
pub fn log_compress(env: &Field, dynamic_range_db: f64) -> crate::Result<BModeImage> {
    if !(dynamic_range_db > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "dynamic_range_db must be > 0, got {dynamic_range_db}"
        )));
    }
    let peak = env.data.iter().fold(0.0f64, |m, &v| m.max(v));
    let mut img = BModeImage::zeros(env.num_scanlines, env.num_depth_samples);
    if peak <= 0.0 {
        return Ok(img);
    }
    for (o, &v) in img.data.iter_mut().zip(env.data.iter()) {
        let db = 20.0 * log10(v / peak);
        *o = (1.0 + db / dynamic_range_db).clamp(0.0, 1.0);
    }
    Ok(img)
}

/// Bilinear polar-to-Cartesian resampling onto an `out_size` x `out_size`
/// raster (row-major, values in [0, 1]). Depth 0 maps to the disk center,
/// `max_depth` to its edge; pixels outside the disk are 0.
pub fn scan_convert(img: &BModeImage, out_size: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_size * out_size];
    if out_size == 0 {
        return out;
    }
    let c = out_size as f64 / 2.0;
    let radius = out_size as f64 / 2.0;
    let ns = img.num_scanlines as f64;
    let nd = img.num_depth_samples as f64;
    for py in 0..out_size {
        for px in 0..out_size {
            let x = px as f64 + 0.5 - c;
            let y = py as f64 + 0.5 - c;
            let rho = sqrt(x * x + y * y);
            if rho > radius {
                continue;
            }
            let mut theta = atan2(y, x);
            if theta < 0.0 {
                theta += TWO_PI;
            }
            // Fractional scanline (angles sit at 2π s / ns) and depth (cell
            // centers), clamped at the depth edges, wrapped in angle.
            let sf = theta / TWO_PI * ns;
            let df = (rho / radius * nd - 0.5).clamp(0.0, nd - 1.0);
            let s0 = floor(sf) as usize % img.num_scanlines;
            let s1 = (s0 + 1) % img.num_scanlines;
            let fs_ = sf - floor(sf);
            let d0 = floor(df) as usize;
            let d1 = (d0 + 1).min(img.num_depth_samples - 1);
            let fd = df - d0 as f64;
            let v = (1.0 - fs_) * ((1.0 - fd) * img.at(s0, d0) + fd * img.at(s0, d1))
                + fs_ * ((1.0 - fd) * img.at(s1, d0) + fd * img.at(s1, d1));
            out[py * out_size + px] = v;
        }
    }
    out
}

/// Area-averaging downsample of a polar image to `out_rows` x `out_cols`
/// (scanlines map to rows). Handles fractional cell overlap exactly, so any
/// output shape works; used for the 32x32 state encoding.
pub fn downsample_area(img: &BModeImage, out_rows: usize, out_cols: usize) -> Vec<f64> {
    resample_area(
        img.data(),
        img.num_scanlines,
        img.num_depth_samples,
        out_rows,
        out_cols,
    )
}

fn resample_area(
    data: &[f64],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Vec<f64> {
    assert!(out_rows >= 1 && out_cols >= 1, "output shape must be positive");
    let mut out = vec![0.0; out_rows * out_cols];
    let row_scale = rows as f64 / out_rows as f64;
    let col_scale = cols as f64 / out_cols as f64;
    for orow in 0..out_rows {
        let r_lo = orow as f64 * row_scale;
        let r_hi = (orow + 1) as f64 * row_scale;
        for ocol in 0..out_cols {
            let c_lo = ocol as f64 * col_scale;
            let c_hi = (ocol + 1) as f64 * col_scale;
            let mut acc = 0.0;
            let mut r = floor(r_lo) as usize;
            while (r as f64) < r_hi && r < rows {
                let rw = (r_hi.min(r as f64 + 1.0) - r_lo.max(r as f64)).max(0.0);
                let mut cc = floor(c_lo) as usize;
                while (cc as f64) < c_hi && cc < cols {
                    let cw = (c_hi.min(cc as f64 + 1.0) - c_lo.max(cc as f64)).max(0.0);
                    acc += rw * cw * data[r * cols + cc];
                    cc += 1;
                }
                r += 1;
            }
            out[orow * out_cols + ocol] = acc / (row_scale * col_scale);
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mask::{apply_mask, random_mask, Mask};
    use crate::quality::mse;
    use crate::rng::Rng;
    use crate::sim::{simulate_rf, Scene, WireTarget};

    fn test_geom() -> ArrayGeometry {
        ArrayGeometry {
            num_elements: 8,
            sub_aperture: 3,
            array_radius_mm: 0.5,
            speed_of_sound_mm_per_us: 1.54,
            sampling_freq_mhz: 16.0,
            pulse_center_freq_mhz: 4.0,
            pulse_bandwidth_frac: 0.6,
            num_fast_time_samples: 128,
        }
    }

    fn test_grid() -> ImageGrid {
        ImageGrid {
            num_scanlines: 32,
            num_depth_samples: 96,
            max_depth_mm: 5.0,
        }
    }

    // Geometry with enough receive-aperture curvature to resolve the
    // front-back ambiguity of the circular array; used by the localization
    // oracles.
    fn resolved_geom() -> ArrayGeometry {
        ArrayGeometry {
            num_elements: 16,
            sub_aperture: 5,
            array_radius_mm: 0.5,
            speed_of_sound_mm_per_us: 1.54,
            sampling_freq_mhz: 16.0,
            pulse_center_freq_mhz: 4.0,
            pulse_bandwidth_frac: 0.6,
            num_fast_time_samples: 160,
        }
    }

    fn resolved_grid() -> ImageGrid {
        ImageGrid {
            num_scanlines: 64,
            num_depth_samples: 96,
            max_depth_mm: 5.0,
        }
    }

    fn target(angle: f64, d: f64) -> WireTarget {
        WireTarget {
            angle_rad: angle,
            radial_distance_mm: d,
            angular_velocity_rad_per_frame: 0.0,
            reflectivity: 1.0,
        }
    }

    #[test]
    fn zero_input_gives_zero_field() {
        let geom = test_geom();
        let grid = test_grid();
        let y = RfFrame::zeros(geom.num_measurements(), geom.num_fast_time_samples);
        let f = das_reconstruct(&y, &geom, &grid).unwrap();
        assert!(f.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn das_is_linear() {
        let geom = test_geom();
        let grid = test_grid();
        let sa = Scene::new(alloc::vec![target(0.4, 2.5)], 0.0, 0, &geom).unwrap();
        let sb = Scene::new(alloc::vec![target(2.9, 4.0)], 0.0, 0, &geom).unwrap();
        let ya = simulate_rf(&sa, &geom);
        let yb = simulate_rf(&sb, &geom);
        let mut ysum = ya.clone();
        for (o, &v) in ysum.data_mut().iter_mut().zip(yb.data()) {
            *o += v;
        }
        let fa = das_reconstruct(&ya, &geom, &grid).unwrap();
        let fb = das_reconstruct(&yb, &geom, &grid).unwrap();
        let fsum = das_reconstruct(&ysum, &geom, &grid).unwrap();
        for i in 0..fsum.data().len() {
            assert!((fsum.data()[i] - fa.data()[i] - fb.data()[i]).abs() < 1e-9);
        }
    }

    #[test]
    fn das_rejects_mismatched_input() {
        let geom = test_geom();
        let grid = test_grid();
        let y = RfFrame::zeros(geom.num_measurements() + 1, geom.num_fast_time_samples);
        assert!(das_reconstruct(&y, &geom, &grid).is_err());
    }

    fn localize(env: &Field) -> (usize, usize) {
        let mut best = (0usize, 0usize);
        let mut best_v = f64::NEG_INFINITY;
        for s in 0..env.num_scanlines() {
            for d in 0..env.num_depth_samples() {
                if env.at(s, d) > best_v {
                    best_v = env.at(s, d);
                    best = (s, d);
                }
            }
        }
        best
    }

    fn scanline_wrap_dist(a: usize, b: usize, n: usize) -> usize {
        let d = (a as isize - b as isize).rem_euclid(n as isize) as usize;
        d.min(n - d)
    }

    #[test]
    fn single_target_localizes_at_analytic_pixel() {
        let geom = resolved_geom();
        let grid = resolved_grid();
        let mut rng = Rng::seed_from_u64(21);
        for _ in 0..10 {
            let ang = rng.range_f64(0.0, TWO_PI);
            let d = rng.range_f64(1.5, 4.0);
            let scene = Scene::new(alloc::vec![target(ang, d)], 0.0, 0, &geom).unwrap();
            let y = simulate_rf(&scene, &geom);
            let env = envelope(&das_reconstruct(&y, &geom, &grid).unwrap());
            let (s, dep) = localize(&env);
            let want_s = libm::round(ang / TWO_PI * grid.num_scanlines as f64) as usize
                % grid.num_scanlines;
            let want_d = ((d - geom.array_radius_mm) / grid.max_depth_mm
                * grid.num_depth_samples as f64
                - 0.5)
                .round() as usize;
            assert!(
                scanline_wrap_dist(s, want_s, grid.num_scanlines) <= 1,
                "angle {ang}, scanline {s} vs {want_s}"
            );
            assert!(
                (dep as isize - want_d as isize).abs() <= 1,
                "depth {dep} vs {want_d} at d={d}"
            );
        }
    }

    #[test]
    fn envelope_dominates_field_magnitude() {
        let geom = test_geom();
        let grid = test_grid();
        let scene = Scene::new(alloc::vec![target(1.0, 3.0)], 0.05, 3, &geom).unwrap();
        let y = simulate_rf(&scene, &geom);
        let f = das_reconstruct(&y, &geom, &grid).unwrap();
        let env = envelope(&f);
        for i in 0..f.data().len() {
            assert!(env.data()[i] >= f.data()[i].abs() - 1e-9);
        }
    }

    #[test]
    fn envelope_of_pure_cosine_scanline() {
        // One scanline holding an 8-cycle unit cosine: envelope 1 everywhere.
        let n = 64;
        let x: Vec<f64> = (0..n)
            .map(|t| cos(TWO_PI * 8.0 * t as f64 / n as f64))
            .collect();
        let f = Field::from_data(1, n, x).unwrap();
        let env = envelope(&f);
        for &v in env.data() {
            assert!((v - 1.0).abs() < 0.05);
        }
        let zero = envelope(&Field::zeros(2, 16));
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_compress_reference_points() {
        let env = Field::from_data(1, 3, alloc::vec![1.0, 0.1, 0.01]).unwrap();
        let img = log_compress(&env, 40.0).unwrap();
        assert_eq!(img.at(0, 0), 1.0);
        assert!((img.at(0, 1) - 0.5).abs() < 1e-12);
        // max * 10^(-40/20) maps to 0.
        assert!(img.at(0, 2).abs() < 1e-12);
        let zero = log_compress(&Field::zeros(2, 2), 40.0).unwrap();
        assert!(zero.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn log_compress_rejects_bad_range() {
        assert!(log_compress(&Field::zeros(1, 1), 0.0).is_err());
    }

    #[test]
    fn scan_convert_constant_and_ray() {
        let img = BModeImage::from_data(8, 8, alloc::vec![0.5; 64]).unwrap();
        let out = scan_convert(&img, 32);
        for (i, &v) in out.iter().enumerate() {
            let (py, px) = (i / 32, i % 32);
            let (x, y) = (px as f64 + 0.5 - 16.0, py as f64 + 0.5 - 16.0);
            if (x * x + y * y) <= 15.0 * 15.0 {
                assert!((v - 0.5).abs() < 1e-9, "pixel {i} = {v}");
            }
            assert!((0.0..=1.0).contains(&v));
        }
        // Single bright scanline at angle 0 lights the +x ray.
        let mut data = alloc::vec![0.0; 64];
        for d in 0..8 {
            data[d] = 1.0;
        }
        let img = BModeImage::from_data(8, 8, data).unwrap();
        let out = scan_convert(&img, 33);
        let mid = 16usize;
        assert!(out[mid * 33 + 28] > 0.5, "on-ray sample {}", out[mid * 33 + 28]);
        assert!(out[28 * 33 + mid] < 0.2, "off-ray sample {}", out[28 * 33 + mid]);
    }

    #[test]
    fn downsample_block_mean_and_constant() {
        let mut data = alloc::vec![0.0; 16];
        for (i, v) in data.iter_mut().enumerate() {
            *v = i as f64 / 16.0;
        }
        let img = BModeImage::from_data(4, 4, data).unwrap();
        let out = downsample_area(&img, 2, 2);
        // Top-left block: pixels 0,1,4,5 scaled by 1/16.
        assert!((out[0] - (0.0 + 1.0 + 4.0 + 5.0) / 4.0 / 16.0).abs() < 1e-12);
        let c = BModeImage::from_data(6, 10, alloc::vec![0.3; 60]).unwrap();
        for v in downsample_area(&c, 4, 3) {
            assert!((v - 0.3).abs() < 1e-12);
        }
    }

    #[test]
    fn reconstruction_is_deterministic() {
        let geom = test_geom();
        let grid = test_grid();
        let scene = Scene::new(alloc::vec![target(0.7, 3.0)], 0.1, 5, &geom).unwrap();
        let y = simulate_rf(&scene, &geom);
        let a = das_reconstruct(&y, &geom, &grid).unwrap();
        let b = das_reconstruct(&y, &geom, &grid).unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn energy_localizes_around_single_target() {
        // Wide receive aperture and mid-field targets: the point-spread blob
        // then fits the 9x9 window and out-runs the equal-time-of-flight
        // ring clutter inherent to a half-millimeter circular array.
        let geom = ArrayGeometry {
            sub_aperture: 9,
            pulse_bandwidth_frac: 0.8,
            ..resolved_geom()
        };
        let grid = ImageGrid {
            num_scanlines: 32,
            num_depth_samples: 40,
            max_depth_mm: 3.2,
        };
        let mut rng = Rng::seed_from_u64(8);
        for _ in 0..5 {
            let ang = rng.range_f64(0.0, TWO_PI);
            let d = rng.range_f64(1.8, 3.0);
            let scene = Scene::new(alloc::vec![target(ang, d)], 0.0, 0, &geom).unwrap();
            let y = simulate_rf(&scene, &geom);
            let env = envelope(&das_reconstruct(&y, &geom, &grid).unwrap());
            let ps = libm::round(ang / TWO_PI * grid.num_scanlines as f64) as i64;
            let pd = ((d - geom.array_radius_mm) / grid.max_depth_mm
                * grid.num_depth_samples as f64
                - 0.5)
                .round() as i64;
            let total: f64 = env.data().iter().map(|v| v * v).sum();
            let mut window = 0.0;
            for ds in -4i64..=4 {
                for dd in -4i64..=4 {
                    let s = (ps + ds).rem_euclid(grid.num_scanlines as i64) as usize;
                    let dep = pd + dd;
                    if dep >= 0 && (dep as usize) < grid.num_depth_samples {
                        let v = env.at(s, dep as usize);
                        window += v * v;
                    }
                }
            }
            assert!(
                window >= 0.5 * total,
                "window energy {window} vs total {total} at angle {ang}, d {d}"
            );
        }
    }

    #[test]
    fn nested_masks_degrade_monotonically() {
        // Statistical: supersets reconstruct at least as well, allowing a
        // small violation rate from interpolation effects.
        let geom = test_geom();
        let grid = test_grid();
        let n = geom.num_measurements();
        let mut rng = Rng::seed_from_u64(40);
        let mut violations = 0;
        let trials = 100;
        for t in 0..trials {
            let ang = rng.range_f64(0.0, TWO_PI);
            let d = rng.range_f64(1.5, 4.5);
            let scene = Scene::new(alloc::vec![target(ang, d)], 0.0, t, &geom).unwrap();
            let x = simulate_rf(&scene, &geom);
            let truth = image_of(&x, &geom, &grid);
            let small = random_mask(n / 4, n, &mut rng).unwrap();
            let mut extra = small.indices().to_vec();
            for i in 0..n {
                if extra.len() >= n / 2 {
                    break;
                }
                if !small.contains(i) && rng.next_f64() < 0.5 {
                    extra.push(i);
                }
            }
            let big = Mask::new(n, extra).unwrap();
            assert!(small.is_subset_of(&big));
            let err_small = mse(&image_of(&apply_mask(&small, &x).unwrap(), &geom, &grid), &truth)
                .unwrap();
            let err_big =
                mse(&image_of(&apply_mask(&big, &x).unwrap(), &geom, &grid), &truth).unwrap();
            if err_small < err_big - 1e-12 {
                violations += 1;
            }
        }
        assert!(violations <= trials / 20, "violations {violations}/{trials}");
    }

    fn image_of(y: &RfFrame, geom: &ArrayGeometry, grid: &ImageGrid) -> BModeImage {
        log_compress(&envelope(&das_reconstruct(y, geom, grid).unwrap()), 40.0).unwrap()
    }
}
