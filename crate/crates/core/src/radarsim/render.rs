//! Point-target FMCW IF synthesis and the three-DFT RAD pipeline.

use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::config::RadarConfig;
use super::fft::{fft_unitary, fftshift, hann};
use super::scene::Scatterer;
use crate::error::{Error, Result};
use crate::features::RadTensor;

/// Complex IF samples indexed `(fast, chirp, element)`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct IfCube {
    fast: usize,
    chirps: usize,
    elements: usize,
    data: Vec<Complex64>,
}

impl IfCube {
    pub fn zeros(fast: usize, chirps: usize, elements: usize) -> Self {
        Self {
            fast,
            chirps,
            elements,
            data: vec![Complex64::default(); fast * chirps * elements],
        }
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.fast, self.chirps, self.elements)
    }

    pub fn data(&self) -> &[Complex64] {
        &self.data
    }

    fn idx(&self, n: usize, k: usize, m: usize) -> usize {
        (n * self.chirps + k) * self.elements + m
    }

    pub fn get(&self, n: usize, k: usize, m: usize) -> Complex64 {
        self.data[self.idx(n, k, m)]
    }

    pub fn energy(&self) -> f64 {
        self.data.iter().map(|v| v.norm_sqr()).sum()
    }

    /// Applies `f` to every line along `axis` (0 fast, 1 chirp, 2 element).
    fn map_lines(
        &self,
        axis: usize,
        out_len: usize,
        mut f: impl FnMut(&[Complex64], &mut Vec<Complex64>) -> Result<()>,
    ) -> Result<IfCube> {
        let mut dims = [self.fast, self.chirps, self.elements];
        let in_len = dims[axis];
        dims[axis] = out_len;
        let mut out = IfCube::zeros(dims[0], dims[1], dims[2]);
        let others: Vec<usize> = (0..3).filter(|&a| a != axis).collect();
        let src_dims = [self.fast, self.chirps, self.elements];
        let mut line = vec![Complex64::default(); in_len];
        let mut result = Vec::with_capacity(out_len);
        for i in 0..src_dims[others[0]] {
            for j in 0..src_dims[others[1]] {
                let at = |pos: usize, d: &[usize; 3]| {
                    let mut ix = [0; 3];
                    ix[axis] = pos;
                    ix[others[0]] = i;
                    ix[others[1]] = j;
                    (ix[0] * d[1] + ix[1]) * d[2] + ix[2]
                };
                for (p, slot) in line.iter_mut().enumerate() {
                    *slot = self.data[at(p, &src_dims)];
                }
                result.clear();
                f(&line, &mut result)?;
                debug_assert_eq!(result.len(), out_len);
                for (p, v) in result.iter().enumerate() {
                    out.data[at(p, &dims)] = *v;
                }
            }
        }
        Ok(out)
    }
}

/// Taper applied before each DFT.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Window {
    #[default]
    Rect,
    Hann,
}

impl std::str::FromStr for Window {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rect" => Ok(Window::Rect),
            "hann" => Ok(Window::Hann),
            other => Err(Error::Usage(format!("unknown window '{other}' (rect|hann)"))),
        }
    }
}

impl std::fmt::Display for Window {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Window::Rect => "rect",
            Window::Hann => "hann",
        })
    }
}

fn taper(window: Window, n: usize) -> Vec<f64> {
    match window {
        Window::Rect => vec![1.0; n],
        Window::Hann => hann(n),
    }
}

/// Synthesizes one frame of dechirped IF samples for reflectors that are
/// frozen at their frame-time range and radial velocity.
///
/// Every reflector contributes
/// `a·exp(i·φ0)·exp(i2π[f_b·n/f_s + f_d·T_c·k + m·(d/λ)·sinθ])` with the
/// carrier phase `φ0 = 4π·range/λ`, and circular complex Gaussian noise of
/// total power `noise_std²` is added per sample.
pub fn render_frame(scatterers: &[Scatterer], cfg: &RadarConfig, seed: u64) -> Result<IfCube> {
    cfg.validate()?;
    let (nf, nc, ne) = (
        cfg.fast_samples_per_chirp,
        cfg.chirps_per_frame,
        cfg.virtual_elements,
    );
    let mut cube = IfCube::zeros(nf, nc, ne);
    let lambda = cfg.wavelength();
    let fs = cfg.fast_sample_rate();
    let mut fast = vec![Complex64::default(); nf];
    let mut slow = vec![Complex64::default(); nc];
    let mut elem = vec![Complex64::default(); ne];
    for s in scatterers {
        if s.reflectivity == 0.0 {
            continue;
        }
        let range = s.range();
        let fb = cfg.beat_frequency(range);
        let fd = cfg.doppler_frequency(s.radial_velocity);
        let u = s.sin_azimuth();
        let phi0 = 4.0 * PI * range / lambda;
        for (n, v) in fast.iter_mut().enumerate() {
            *v = Complex64::from_polar(s.reflectivity, phi0 + TAU * fb * n as f64 / fs);
        }
        for (k, v) in slow.iter_mut().enumerate() {
            *v = Complex64::from_polar(1.0, TAU * fd * cfg.chirp_duration_s * k as f64);
        }
        for (m, v) in elem.iter_mut().enumerate() {
            *v = Complex64::from_polar(1.0, TAU * m as f64 * cfg.element_spacing() / lambda * u);
        }
        let mut i = 0;
        for f in &fast {
            for c in &slow {
                let fc = f * c;
                for e in &elem {
                    cube.data[i] += fc * e;
                    i += 1;
                }
            }
        }
    }
    if cfg.noise_std > 0.0 {
        let normal = Normal::new(0.0, cfg.noise_std / 2f64.sqrt())
            .map_err(|e| Error::Config(format!("noise_std: {e}")))?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for v in cube.data.iter_mut() {
            *v += Complex64::new(normal.sample(&mut rng), normal.sample(&mut rng));
        }
    }
    Ok(cube)
}

/// Unitary DFT along fast time, full length (no crop).
pub fn range_fft(cube: &IfCube, window: Window) -> Result<IfCube> {
    let w = taper(window, cube.fast);
    cube.map_lines(0, cube.fast, |line, out| {
        out.extend(line.iter().zip(&w).map(|(v, t)| v * t));
        fft_unitary(out)
    })
}

/// Unitary DFT across chirps, shifted so zero Doppler sits at `D/2`.
pub fn doppler_fft(cube: &IfCube, window: Window) -> Result<IfCube> {
    let w = taper(window, cube.chirps);
    cube.map_lines(1, cube.chirps, |line, out| {
        out.extend(line.iter().zip(&w).map(|(v, t)| v * t));
        fft_unitary(out)?;
        fftshift(out);
        Ok(())
    })
}

/// Unitary DFT across elements after zero padding to `angle_bins`, shifted so
/// broadside sits at `A/2`.
pub fn angle_fft(cube: &IfCube, angle_bins: usize, window: Window) -> Result<IfCube> {
    if angle_bins < cube.elements {
        return Err(Error::Config(format!(
            "angle_bins {angle_bins} below element count {}",
            cube.elements
        )));
    }
    let w = taper(window, cube.elements);
    cube.map_lines(2, angle_bins, |line, out| {
        out.extend(line.iter().zip(&w).map(|(v, t)| v * t));
        out.resize(angle_bins, Complex64::default());
        fft_unitary(out)?;
        fftshift(out);
        Ok(())
    })
}

/// Three-DFT pipeline: range (cropped to the first `r` bins), Doppler over
/// the first `d` chirps, zero-padded angle to `a`; returns magnitudes in
/// `(range, angle, doppler)` order.
pub fn rad_fft(cube: &IfCube, r: usize, a: usize, d: usize, window: Window) -> Result<RadTensor> {
    let (nf, nc, ne) = cube.dims();
    if r == 0 || r > nf || d == 0 || d > nc || a < ne || !a.is_power_of_two() || !d.is_power_of_two() {
        return Err(Error::Config(format!(
            "cannot form {r}×{a}×{d} RAD grid from a {nf}×{nc}×{ne} cube"
        )));
    }
    let mut cropped = IfCube::zeros(nf, d, ne);
    for n in 0..nf {
        for k in 0..d {
            for m in 0..ne {
                let i = cropped.idx(n, k, m);
                cropped.data[i] = cube.get(n, k, m);
            }
        }
    }
    let ranged = range_fft(&cropped, window)?;
    let mut kept = IfCube::zeros(r, d, ne);
    kept.data
        .copy_from_slice(&ranged.data[..r * d * ne]);
    let doppler = doppler_fft(&kept, window)?;
    let angled = angle_fft(&doppler, a, window)?;
    let mut values = vec![0.0; r * a * d];
    for ri in 0..r {
        for ai in 0..a {
            for di in 0..d {
                values[(ri * a + ai) * d + di] = angled.get(ri, di, ai).norm();
            }
        }
    }
    RadTensor::new(r, a, d, values)
}

/// Renders and transforms one frame on the configured grid.
pub fn render_rad(scatterers: &[Scatterer], cfg: &RadarConfig, seed: u64, window: Window) -> Result<RadTensor> {
    let cube = render_frame(scatterers, cfg, seed)?;
    rad_fft(&cube, cfg.range_bins, cfg.angle_bins, cfg.doppler_bins(), window)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet() -> RadarConfig {
        RadarConfig {
            noise_std: 0.0,
            ..RadarConfig::default()
        }
    }

    fn on_bins(cfg: &RadarConfig, rb: usize, ab: usize, db: i64) -> Scatterer {
        let range = rb as f64 * cfg.range_resolution();
        let u = (ab as f64 - cfg.angle_bins as f64 / 2.0) / cfg.angle_bins as f64 * cfg.wavelength()
            / cfg.element_spacing();
        let v = db as f64 * cfg.velocity_resolution();
        Scatterer::at_range_azimuth(range, u, v, 1.0)
    }

    #[test]
    fn empty_scene_without_noise_is_zero() {
        let cfg = quiet();
        let cube = render_frame(&[], &cfg, 1).unwrap();
        assert!(cube.data().iter().all(|v| *v == Complex64::default()));
        let rad = rad_fft(&cube, 32, 32, 16, Window::Rect).unwrap();
        assert!(rad.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn static_scatterer_gives_identical_chirps() {
        let cfg = quiet();
        let s = Scatterer::at_range_azimuth(1.3, 0.2, 0.0, 1.0);
        let cube = render_frame(&[s], &cfg, 0).unwrap();
        for n in 0..cfg.fast_samples_per_chirp {
            for m in 0..cfg.virtual_elements {
                let first = cube.get(n, 0, m);
                for k in 1..cfg.chirps_per_frame {
                    assert!((cube.get(n, k, m) - first).norm() < 1e-12);
                }
            }
        }
        let rad = render_rad(&[s], &cfg, 0, Window::Rect).unwrap();
        let (r, a, d) = rad.argmax();
        assert_eq!(d, 8);
        for dd in 0..16 {
            if dd != 8 {
                assert!(rad.get(r, a, dd) < 1e-9 * rad.get(r, a, 8));
            }
        }
    }

    #[test]
    fn bin_centre_peaks_match_the_bin_oracles() {
        let cfg = quiet();
        for &(rb, ab, db) in &[(5usize, 16usize, 0i64), (20, 9, 3), (12, 25, -5), (30, 2, 7)] {
            let s = on_bins(&cfg, rb, ab, db);
            let rad = render_rad(&[s], &cfg, 0, Window::Rect).unwrap();
            let expected = (
                cfg.range_bin(s.range()).unwrap(),
                cfg.angle_bin(s.sin_azimuth().asin()).unwrap(),
                cfg.doppler_bin(s.radial_velocity).unwrap(),
            );
            assert_eq!(expected, (rb, ab, (8 + db) as usize));
            assert_eq!(rad.argmax(), expected);
        }
    }

    #[test]
    fn parseval_holds_per_stage() {
        let cfg = RadarConfig::default();
        let scat = [
            Scatterer::at_range_azimuth(1.1, -0.3, 0.7, 1.0),
            Scatterer::at_range_azimuth(2.4, 0.5, -1.2, 0.6),
        ];
        let cube = render_frame(&scat, &cfg, 3).unwrap();
        let e0 = cube.energy();
        let c1 = range_fft(&cube, Window::Rect).unwrap();
        let c2 = doppler_fft(&c1, Window::Rect).unwrap();
        let c3 = angle_fft(&c2, cfg.angle_bins, Window::Rect).unwrap();
        for e in [c1.energy(), c2.energy(), c3.energy()] {
            assert!((e - e0).abs() <= 1e-9 * e0);
        }
    }

    #[test]
    fn superposition_of_separated_scatterers() {
        let cfg = quiet();
        let a = on_bins(&cfg, 6, 10, 2);
        let b = on_bins(&cfg, 22, 24, -4);
        let ra = render_rad(&[a], &cfg, 0, Window::Rect).unwrap();
        let rb = render_rad(&[b], &cfg, 0, Window::Rect).unwrap();
        let both = render_rad(&[a, b], &cfg, 0, Window::Rect).unwrap();
        for single in [&ra, &rb] {
            let (r, an, d) = single.argmax();
            let rel = (both.get(r, an, d) - single.get(r, an, d)).abs() / single.get(r, an, d);
            assert!(rel < 0.01, "rel {rel}");
        }
    }

    #[test]
    fn noise_is_seeded() {
        let cfg = RadarConfig::default();
        let a = render_frame(&[], &cfg, 9).unwrap();
        let b = render_frame(&[], &cfg, 9).unwrap();
        let c = render_frame(&[], &cfg, 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let power = a.energy() / a.data().len() as f64;
        assert!((power - 1.0).abs() < 0.1);
    }

    #[test]
    fn hann_window_keeps_peak_location() {
        let cfg = quiet();
        let s = on_bins(&cfg, 14, 20, -3);
        let rad = render_rad(&[s], &cfg, 0, Window::Hann).unwrap();
        assert_eq!(rad.argmax(), (14, 20, 5));
    }

    #[test]
    fn rejects_impossible_grids() {
        let cube = IfCube::zeros(8, 4, 4);
        assert!(rad_fft(&cube, 16, 8, 4, Window::Rect).is_err());
        assert!(rad_fft(&cube, 8, 2, 4, Window::Rect).is_err());
        assert!(rad_fft(&cube, 8, 8, 8, Window::Rect).is_err());
    }
}
