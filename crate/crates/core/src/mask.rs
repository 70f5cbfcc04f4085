//! Binary acquisition masks over the N = E*A element pairs, the index
//! convention mapping a flat measurement index to a (transmit, receive)
//! pair, mask application to RF data, and the uniform random baseline.

use alloc::vec;
use alloc::vec::Vec;

use crate::rng::Rng;
use crate::sim::ArrayGeometry;
use crate::Error;

/// Raw channel data: N measurement vectors of S fast-time samples each,
/// stored channel-major.
#[derive(Debug, Clone, PartialEq)]
pub struct RfFrame {
    num_channels: usize,
    num_samples: usize,
    data: Vec<f64>,
}

impl RfFrame {
    pub fn zeros(num_channels: usize, num_samples: usize) -> Self {
        RfFrame {
            num_channels,
            num_samples,
            data: vec![0.0; num_channels * num_samples],
        }
    }

    pub fn num_channels(&self) -> usize {
        self.num_channels
    }

    pub fn num_samples(&self) -> usize {
        self.num_samples
    }

    pub fn channel(&self, n: usize) -> &[f64] {
        &self.data[n * self.num_samples..(n + 1) * self.num_samples]
    }

    pub fn channel_mut(&mut self, n: usize) -> &mut [f64] {
        &mut self.data[n * self.num_samples..(n + 1) * self.num_samples]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

/// Binary subsampling mask with exactly K ones, kept as a sorted index list;
/// [`Mask::dense`] provides the {0,1}^N view consumed by the critic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    num_measurements: usize,
    indices: Vec<usize>,
}

impl Mask {
    /// Builds a mask from selected indices. Indices are sorted; duplicates,
    /// out-of-range entries, and empty selections are rejected.
    pub fn new(num_measurements: usize, mut indices: Vec<usize>) -> crate::Result<Mask> {
        if indices.is_empty() || indices.len() > num_measurements {
            return Err(Error::Dimension {
                what: "mask selection size",
                expected: num_measurements,
                got: indices.len(),
            });
        }
        indices.sort_unstable();
        for pair in indices.windows(2) {
            if pair[0] == pair[1] {
                return Err(Error::OutOfRange {
                    what: "duplicate mask",
                    index: pair[0],
                    len: num_measurements,
                });
            }
        }
        if let Some(&last) = indices.last() {
            if last >= num_measurements {
                return Err(Error::OutOfRange {
                    what: "mask",
                    index: last,
                    len: num_measurements,
                });
            }
        }
        Ok(Mask {
            num_measurements,
            indices,
        })
    }

    /// The all-ones mask (K = N).
    pub fn full(num_measurements: usize) -> Mask {
        Mask {
            num_measurements,
            indices: (0..num_measurements).collect(),
        }
    }

    pub fn num_measurements(&self) -> usize {
        self.num_measurements
    }

    /// K, the number of selected measurements.
    pub fn num_selected(&self) -> usize {
        self.indices.len()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn contains(&self, n: usize) -> bool {
        self.indices.binary_search(&n).is_ok()
    }

    /// Dense {0,1} view as f64, length N.
    pub fn dense(&self) -> Vec<f64> {
        let mut bits = vec![0.0; self.num_measurements];
        for &i in &self.indices {
            bits[i] = 1.0;
        }
        bits
    }

    pub fn is_subset_of(&self, other: &Mask) -> bool {
        self.num_measurements == other.num_measurements
            && self.indices.iter().all(|&i| other.contains(i))
    }
}

/// Element-wise mask application: selected channels pass through bit-exactly,
/// unselected channels become all-zero vectors.
pub fn apply_mask(mask: &Mask, x: &RfFrame) -> crate::Result<RfFrame> {
    if mask.num_measurements() != x.num_channels() {
        return Err(Error::Dimension {
            what: "mask length vs channel count",
            expected: x.num_channels(),
            got: mask.num_measurements(),
        });
    }
    let mut y = RfFrame::zeros(x.num_channels(), x.num_samples());
    for &n in mask.indices() {
        y.channel_mut(n).copy_from_slice(x.channel(n));
    }
    Ok(y)
}

/// Maps a flat measurement index to its (transmit, receive) element pair:
/// `tx = n / A`, receive offset `n % A - (A-1)/2` relative to the transmit
/// element, wrapped around the circle.
pub fn index_to_pair(n: usize, geom: &ArrayGeometry) -> crate::Result<(usize, usize)> {
    let total = geom.num_measurements();
    if n >= total {
        return Err(Error::OutOfRange {
            what: "measurement",
            index: n,
            len: total,
        });
    }
    let a = geom.sub_aperture;
    let e = geom.num_elements;
    let tx = n / a;
    let offset = (n % a) as isize - ((a - 1) / 2) as isize;
    let rx = (tx as isize + offset).rem_euclid(e as isize) as usize;
    Ok((tx, rx))
}

/// Inverse of [`index_to_pair`]; fails if `rx` is outside the sub-aperture
/// centered on `tx`.
pub fn pair_to_index(tx: usize, rx: usize, geom: &ArrayGeometry) -> crate::Result<usize> {
    let e = geom.num_elements;
    let a = geom.sub_aperture;
    if tx >= e {
        return Err(Error::OutOfRange {
            what: "transmit element",
            index: tx,
            len: e,
        });
    }
    if rx >= e {
        return Err(Error::OutOfRange {
            what: "receive element",
            index: rx,
            len: e,
        });
    }
    let half = ((a - 1) / 2) as isize;
    let mut offset = (rx as isize - tx as isize).rem_euclid(e as isize);
    if offset > e as isize / 2 {
        offset -= e as isize;
    }
    if offset < -half || offset > half {
        return Err(Error::OutOfRange {
            what: "receive offset",
            index: rx,
            len: a,
        });
    }
    Ok(tx * a + (offset + half) as usize)
}

/// Uniformly random K-subset of the N measurements (partial Fisher-Yates).
pub fn random_mask(k: usize, n: usize, rng: &mut Rng) -> crate::Result<Mask> {
    if k == 0 || k > n {
        return Err(Error::Dimension {
            what: "random mask K",
            expected: n,
            got: k,
        });
    }
    let mut pool: Vec<usize> = (0..n).collect();
    for i in 0..k {
        let j = i + rng.below((n - i) as u64) as usize;
        pool.swap(i, j);
    }
    pool.truncate(k);
    Mask::new(n, pool)
}

/// Fig.-style action strip: per transmit element, the count of selected
/// receive offsets mapped to a gray level, black for one receive element and
/// white for the full sub-aperture. Elements with no selected pair also
/// render black.
pub fn action_strip(mask: &Mask, geom: &ArrayGeometry) -> Vec<u8> {
    let counts = receive_counts(mask, geom);
    let a = geom.sub_aperture;
    counts
        .iter()
        .map(|&c| {
            if a == 1 {
                if c > 0 {
                    255
                } else {
                    0
                }
            } else {
                let shade = c.saturating_sub(1) as f64 / (a - 1) as f64;
                libm::round(shade * 255.0) as u8
            }
        })
        .collect()
}

/// Number of selected receive offsets per transmit element.
pub fn receive_counts(mask: &Mask, geom: &ArrayGeometry) -> Vec<usize> {
    let mut counts = vec![0usize; geom.num_elements];
    for &n in mask.indices() {
        counts[n / geom.sub_aperture] += 1;
    }
    counts
}
