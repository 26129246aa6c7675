//! Dual-domain feature construction on range–angle–Doppler tensors:
//! Doppler-averaged spatial magnitude, per-cell Doppler spectra, RA/RD to
//! RAD reconstruction, per-frame normalization and bilinear resampling.

use crate::error::{Error, Result};

/// One radar frame: nonnegative magnitudes on an `R × A × D` grid, stored
/// row-major in `(range, angle, doppler)` order.
#[derive(Debug, Clone, PartialEq)]
pub struct RadTensor {
    range_bins: usize,
    angle_bins: usize,
    doppler_bins: usize,
    values: Vec<f64>,
}

impl RadTensor {
    pub fn new(range_bins: usize, angle_bins: usize, doppler_bins: usize, values: Vec<f64>) -> Result<Self> {
        if range_bins == 0 || angle_bins == 0 || doppler_bins == 0 {
            return Err(Error::Domain("RadTensor extents must be positive".into()));
        }
        let n = range_bins * angle_bins * doppler_bins;
        if values.len() != n {
            return Err(Error::shape(
                "RadTensor::new",
                &[range_bins, angle_bins, doppler_bins],
                &[values.len()],
            ));
        }
        if let Some(v) = values.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(Error::Domain(format!("RadTensor entry {v} is negative or non-finite")));
        }
        Ok(Self {
            range_bins,
            angle_bins,
            doppler_bins,
            values,
        })
    }

    pub fn zeros(range_bins: usize, angle_bins: usize, doppler_bins: usize) -> Self {
        Self {
            range_bins,
            angle_bins,
            doppler_bins,
            values: vec![0.0; range_bins * angle_bins * doppler_bins],
        }
    }

    /// `(R, A, D)`.
    pub fn dims(&self) -> (usize, usize, usize) {
        (self.range_bins, self.angle_bins, self.doppler_bins)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    fn offset(&self, r: usize, a: usize, d: usize) -> usize {
        (r * self.angle_bins + a) * self.doppler_bins + d
    }

    pub fn get(&self, r: usize, a: usize, d: usize) -> f64 {
        self.values[self.offset(r, a, d)]
    }

    pub fn set(&mut self, r: usize, a: usize, d: usize, v: f64) {
        let o = self.offset(r, a, d);
        self.values[o] = v;
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(0.0, f64::max)
    }

    /// Position `(r, a, d)` of the largest entry (first on ties).
    pub fn argmax(&self) -> (usize, usize, usize) {
        let mut best = 0;
        for (i, v) in self.values.iter().enumerate() {
            if *v > self.values[best] {
                best = i;
            }
        }
        let d = best % self.doppler_bins;
        let a = (best / self.doppler_bins) % self.angle_bins;
        let r = best / (self.doppler_bins * self.angle_bins);
        (r, a, d)
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(
            self.range_bins,
            self.angle_bins,
            self.doppler_bins,
            self.values.iter().map(|v| v * c).collect(),
        )
    }
}

/// `R × A` Doppler-averaged magnitude map.
#[derive(Debug, Clone, PartialEq)]
pub struct SpatialMap {
    pub range_bins: usize,
    pub angle_bins: usize,
    pub values: Vec<f64>,
}

impl SpatialMap {
    pub fn get(&self, r: usize, a: usize) -> f64 {
        self.values[r * self.angle_bins + a]
    }

    /// Median over all cells (mean of the two middle values for even counts).
    pub fn median(&self) -> f64 {
        let mut v = self.values.clone();
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    }
}

/// Per-cell Doppler spectra; the magnitude tensor itself.
#[derive(Debug, Clone, PartialEq)]
pub struct DopplerVolume(pub RadTensor);

impl DopplerVolume {
    /// Number of cells `N_v = R·A`.
    pub fn cells(&self) -> usize {
        let (r, a, _) = self.0.dims();
        r * a
    }

    /// All spectra as an `N_v × D` row-major matrix.
    pub fn as_rows(&self) -> &[f64] {
        self.0.values()
    }
}

/// Released range–angle and range–Doppler maps of a frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RaRdMaps {
    pub range_bins: usize,
    pub angle_bins: usize,
    pub doppler_bins: usize,
    /// `R × A`, row-major.
    pub ra: Vec<f64>,
    /// `R × D`, row-major.
    pub rd: Vec<f64>,
    pub eps: f64,
}

pub const DEFAULT_RECONSTRUCTION_EPS: f64 = 1e-8;

/// `S[r,a] = (1/D)·Σ_d H[r,a,d]`.
pub fn spatial_magnitude(h: &RadTensor) -> SpatialMap {
    let (r, a, d) = h.dims();
    let values = h
        .values()
        .chunks(d)
        .map(|spec| spec.iter().sum::<f64>() / d as f64)
        .collect();
    SpatialMap {
        range_bins: r,
        angle_bins: a,
        values,
    }
}

/// Inputs are already magnitudes, so the volume is the tensor itself.
pub fn doppler_volume(h: &RadTensor) -> DopplerVolume {
    DopplerVolume(h.clone())
}

/// Length-`D` spectrum at cell `(r, a)`.
pub fn doppler_spectrum(v: &DopplerVolume, r: usize, a: usize) -> Result<&[f64]> {
    let (nr, na, nd) = v.0.dims();
    if r >= nr || a >= na {
        return Err(Error::Domain(format!(
            "cell ({r},{a}) outside {nr}x{na} lattice"
        )));
    }
    let o = (r * na + a) * nd;
    Ok(&v.0.values()[o..o + nd])
}

/// Distributes each range's Doppler profile over angle with weights
/// `w[r,a] = RA[r,a] / (Σ_a' RA[r,a'] + ε)`; `H[r,a,d] = w[r,a]·RD[r,d]`.
pub fn reconstruct_rad(m: &RaRdMaps) -> Result<RadTensor> {
    let (nr, na, nd) = (m.range_bins, m.angle_bins, m.doppler_bins);
    if m.eps <= 0.0 {
        return Err(Error::Domain(format!("eps must be positive, got {}", m.eps)));
    }
    if m.ra.len() != nr * na || m.rd.len() != nr * nd {
        return Err(Error::shape("reconstruct_rad", &[m.ra.len()], &[m.rd.len()]));
    }
    let mut out = Vec::with_capacity(nr * na * nd);
    for r in 0..nr {
        let ra_row = &m.ra[r * na..(r + 1) * na];
        let rd_row = &m.rd[r * nd..(r + 1) * nd];
        let mass: f64 = ra_row.iter().sum();
        for &w_num in ra_row {
            let w = w_num / (mass + m.eps);
            out.extend(rd_row.iter().map(|v| w * v));
        }
    }
    RadTensor::new(nr, na, nd, out)
}

/// Divides by the frame maximum; all-zero frames pass through unchanged.
pub fn normalize_frame(h: &RadTensor) -> RadTensor {
    let max = h.max();
    if max == 0.0 {
        return h.clone();
    }
    let (r, a, d) = h.dims();
    RadTensor {
        range_bins: r,
        angle_bins: a,
        doppler_bins: d,
        values: h.values().iter().map(|v| v / max).collect(),
    }
}

/// Bilinear resampling of every Doppler slab onto an `R_out × A_out` grid
/// with corner-aligned coordinates.
pub fn resample_ra(h: &RadTensor, r_out: usize, a_out: usize) -> Result<RadTensor> {
    if r_out < 2 || a_out < 2 {
        return Err(Error::Domain(format!(
            "resample targets must be >= 2, got {r_out}x{a_out}"
        )));
    }
    let (nr, na, nd) = h.dims();
    let coord = |i: usize, n_out: usize, n_in: usize| -> (usize, usize, f64) {
        if n_in == 1 {
            return (0, 0, 0.0);
        }
        let x = i as f64 * (n_in - 1) as f64 / (n_out - 1) as f64;
        let lo = (x.floor() as usize).min(n_in - 2);
        (lo, lo + 1, x - lo as f64)
    };
    let mut out = RadTensor::zeros(r_out, a_out, nd);
    for ro in 0..r_out {
        let (r0, r1, fr) = coord(ro, r_out, nr);
        for ao in 0..a_out {
            let (a0, a1, fa) = coord(ao, a_out, na);
            for d in 0..nd {
                let v = (1.0 - fr) * ((1.0 - fa) * h.get(r0, a0, d) + fa * h.get(r0, a1, d))
                    + fr * ((1.0 - fa) * h.get(r1, a0, d) + fa * h.get(r1, a1, d));
                out.set(ro, ao, d, v);
            }
        }
    }
    Ok(out)
}
