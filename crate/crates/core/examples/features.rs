//! Dual-domain features of a synthetic frame, plus the RA/RD → RAD
//! reconstruction used for datasets that release only 2-D maps.
//!
//! `cargo run --release --example features`

use pulse::features::{
    doppler_spectrum, doppler_volume, normalize_frame, reconstruct_rad, resample_ra, spatial_magnitude, RaRdMaps,
    DEFAULT_RECONSTRUCTION_EPS,
};
use pulse::radarsim::{simulate_sequence, SynthSpec};

fn main() -> pulse::Result<()> {
    let spec = SynthSpec::default();
    let seq = simulate_sequence(&spec, 0)?;
    let frame = normalize_frame(&seq.frames[10]);
    let (nr, na, nd) = frame.dims();

    let spatial = spatial_magnitude(&frame);
    let body = spatial.values.iter().filter(|&&v| v > spatial.median()).count();
    println!("{} motion, frame 10: {nr}x{na}x{nd}, {body} cells above the median", seq.motion);

    let (r, a, _) = frame.argmax();
    let volume = doppler_volume(&frame);
    let spectrum = doppler_spectrum(&volume, r, a)?;
    println!("Doppler spectrum at the strongest cell ({r},{a}):");
    for (d, v) in spectrum.iter().enumerate() {
        println!("  bin {d:2} {:<40} {v:.3}", "#".repeat((v * 40.0) as usize));
    }

    // Collapse to RA and RD maps, then rebuild the cube.
    let mut ra = vec![0.0; nr * na];
    let mut rd = vec![0.0; nr * nd];
    for i in 0..nr {
        for j in 0..na {
            for k in 0..nd {
                let v = frame.get(i, j, k);
                ra[i * na + j] += v;
                rd[i * nd + k] += v;
            }
        }
    }
    let rebuilt = reconstruct_rad(&RaRdMaps {
        range_bins: nr,
        angle_bins: na,
        doppler_bins: nd,
        ra,
        rd: rd.clone(),
        eps: DEFAULT_RECONSTRUCTION_EPS,
    })?;
    let max_rd = rd.iter().copied().fold(0.0, f64::max);
    let mut worst: f64 = 0.0;
    for i in 0..nr {
        for k in 0..nd {
            let s: f64 = (0..na).map(|j| rebuilt.get(i, j, k)).sum();
            worst = worst.max((s - rd[i * nd + k]).abs() / max_rd);
        }
    }
    println!("reconstruction keeps the RD marginal to {worst:.1e} of its maximum");

    let coarse = resample_ra(&frame, 16, 16)?;
    println!("bilinear resample to {:?}, peak {:.3}", coarse.dims(), coarse.max());
    Ok(())
}
