use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// FMCW front-end and processing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct RadarConfig {
    pub carrier_hz: f64,
    pub bandwidth_hz: f64,
    pub chirp_duration_s: f64,
    /// Slow-time samples per frame; equals the Doppler extent `D`.
    pub chirps_per_frame: usize,
    pub fast_samples_per_chirp: usize,
    /// Virtual array size `M`, spacing λ/2.
    pub virtual_elements: usize,
    /// Range bins kept after the fast-time DFT.
    pub range_bins: usize,
    /// Angle DFT length after zero padding.
    pub angle_bins: usize,
    /// Standard deviation of the complex Gaussian noise per IF sample.
    pub noise_std: f64,
    pub frame_rate_hz: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            carrier_hz: 60e9,
            bandwidth_hz: 1.5e9,
            chirp_duration_s: 5e-4,
            chirps_per_frame: 16,
            fast_samples_per_chirp: 64,
            virtual_elements: 16,
            range_bins: 32,
            angle_bins: 32,
            noise_std: 1.0,
            frame_rate_hz: 10.0,
        }
    }
}

impl RadarConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.carrier_hz
    }

    /// Element spacing (half wavelength).
    pub fn element_spacing(&self) -> f64 {
        0.5 * self.wavelength()
    }

    pub fn doppler_bins(&self) -> usize {
        self.chirps_per_frame
    }

    pub fn fast_sample_rate(&self) -> f64 {
        self.fast_samples_per_chirp as f64 / self.chirp_duration_s
    }

    /// Width of one fast-time DFT bin in Hz.
    pub fn range_bin_hz(&self) -> f64 {
        self.fast_sample_rate() / self.fast_samples_per_chirp as f64
    }

    pub fn range_resolution(&self) -> f64 {
        SPEED_OF_LIGHT / (2.0 * self.bandwidth_hz)
    }

    /// Largest range representable in the kept bins.
    pub fn max_range(&self) -> f64 {
        (self.range_bins as f64 - 0.5) * self.range_resolution()
    }

    /// `λ / (4·T_c)`.
    pub fn max_velocity(&self) -> f64 {
        self.wavelength() / (4.0 * self.chirp_duration_s)
    }

    pub fn velocity_resolution(&self) -> f64 {
        self.wavelength() / (2.0 * self.chirp_duration_s * self.chirps_per_frame as f64)
    }

    /// Beat frequency `2·B·range/(c·T_c)`.
    pub fn beat_frequency(&self, range_m: f64) -> f64 {
        2.0 * self.bandwidth_hz * range_m / (SPEED_OF_LIGHT * self.chirp_duration_s)
    }

    pub fn doppler_frequency(&self, v_mps: f64) -> f64 {
        2.0 * v_mps / self.wavelength()
    }

    pub fn validate(&self) -> Result<()> {
        let pow2 = |n: usize, what: &str| {
            if n.is_power_of_two() {
                Ok(())
            } else {
                Err(Error::Config(format!("{what} = {n} must be a power of two")))
            }
        };
        pow2(self.fast_samples_per_chirp, "fast_samples_per_chirp")?;
        pow2(self.chirps_per_frame, "chirps_per_frame")?;
        pow2(self.angle_bins, "angle_bins")?;
        if self.chirps_per_frame < 2 {
            return Err(Error::Config("chirps_per_frame must be >= 2".into()));
        }
        if self.range_bins == 0 || self.range_bins > self.fast_samples_per_chirp {
            return Err(Error::Config(format!(
                "range_bins {} must lie in 1..={}",
                self.range_bins, self.fast_samples_per_chirp
            )));
        }
        if self.virtual_elements == 0 || self.angle_bins < self.virtual_elements {
            return Err(Error::Config(format!(
                "angle_bins {} must be >= virtual_elements {}",
                self.angle_bins, self.virtual_elements
            )));
        }
        let positive = [
            ("carrier_hz", self.carrier_hz),
            ("bandwidth_hz", self.bandwidth_hz),
            ("chirp_duration_s", self.chirp_duration_s),
            ("frame_rate_hz", self.frame_rate_hz),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if !(self.noise_std >= 0.0) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        Ok(())
    }

    /// Range bin of a reflector: `round(f_b / f_s · N_fast)`.
    pub fn range_bin(&self, range_m: f64) -> Result<usize> {
        if !(0.0..=self.max_range()).contains(&range_m) {
            return Err(Error::Domain(format!(
                "range {range_m} m outside [0, {:.3}] m",
                self.max_range()
            )));
        }
        let bin = (self.beat_frequency(range_m) / self.fast_sample_rate()
            * self.fast_samples_per_chirp as f64)
            .round();
        Ok((bin as usize).min(self.range_bins - 1))
    }

    /// Doppler bin after centering: `D/2 + round((2v/λ)·T_c·D)`.
    pub fn doppler_bin(&self, v_mps: f64) -> Result<usize> {
        if v_mps.abs() >= self.max_velocity() || !v_mps.is_finite() {
            return Err(Error::Domain(format!(
                "velocity {v_mps} m/s outside ±{:.3} m/s",
                self.max_velocity()
            )));
        }
        let d = self.doppler_bins() as f64;
        let bin = d / 2.0 + (self.doppler_frequency(v_mps) * self.chirp_duration_s * d).round();
        Ok((bin.max(0.0) as usize).min(self.doppler_bins() - 1))
    }

    /// Angle bin after centering: `A/2 + round((d/λ)·sinθ·A)`.
    pub fn angle_bin(&self, theta_rad: f64) -> Result<usize> {
        let s = theta_rad.sin();
        let a = self.angle_bins as f64;
        let offset = (self.element_spacing() / self.wavelength() * s * a).round();
        if !theta_rad.is_finite() || theta_rad.abs() > std::f64::consts::FRAC_PI_2 || offset >= a / 2.0 {
            return Err(Error::Domain(format!("angle {theta_rad} rad outside the unambiguous span")));
        }
        Ok(((a / 2.0 + offset).max(0.0) as usize).min(self.angle_bins - 1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_valid_and_consistent() {
        let cfg = RadarConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.doppler_bins(), 16);
        // unambiguous velocity λ/(4T_c) is half the Doppler span D·Δv.
        let span = cfg.velocity_resolution() * cfg.doppler_bins() as f64;
        assert!((2.0 * cfg.max_velocity() - span).abs() < 1e-12);
        // c/(2B) per bin; bins of width range_bin_hz map to range_resolution.
        let per_bin = cfg.range_bin_hz() * SPEED_OF_LIGHT * cfg.chirp_duration_s
            / (2.0 * cfg.bandwidth_hz);
        assert!((per_bin - cfg.range_resolution()).abs() < 1e-12);
    }

    #[test]
    fn centre_bins() {
        let cfg = RadarConfig::default();
        assert_eq!(cfg.doppler_bin(0.0).unwrap(), 8);
        assert_eq!(cfg.angle_bin(0.0).unwrap(), 16);
        assert_eq!(cfg.range_bin(0.0).unwrap(), 0);
        assert_eq!(cfg.range_bin(5.0 * cfg.range_resolution()).unwrap(), 5);
        assert_eq!(cfg.doppler_bin(-3.0 * cfg.velocity_resolution()).unwrap(), 5);
    }

    #[test]
    fn out_of_span_is_domain_error() {
        let cfg = RadarConfig::default();
        assert!(matches!(cfg.range_bin(100.0), Err(Error::Domain(_))));
        assert!(matches!(cfg.range_bin(-0.1), Err(Error::Domain(_))));
        assert!(matches!(cfg.doppler_bin(10.0), Err(Error::Domain(_))));
        assert!(matches!(cfg.angle_bin(1.6), Err(Error::Domain(_))));
    }

    #[test]
    fn invalid_configs_rejected() {
        let bad = RadarConfig {
            angle_bins: 8,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RadarConfig {
            fast_samples_per_chirp: 48,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = RadarConfig {
            range_bins: 65,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
