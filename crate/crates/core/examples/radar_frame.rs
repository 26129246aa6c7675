//! Renders one FMCW frame of a two-reflector scene and checks where the
//! energy lands in the range–angle–Doppler tensor.
//!
//! `cargo run --release --example radar_frame`

use pulse::radarsim::{render_rad, RadarConfig, Scatterer, Window};

fn main() -> pulse::Result<()> {
    let cfg = RadarConfig {
        noise_std: 0.0,
        ..RadarConfig::default()
    };
    println!(
        "range res {:.3} m, max range {:.2} m, velocity res {:.3} m/s, max velocity {:.2} m/s",
        cfg.range_resolution(),
        cfg.max_range(),
        cfg.velocity_resolution(),
        cfg.max_velocity()
    );
    let scene = [
        Scatterer::at_range_azimuth(1.6, 0.25, 0.9, 1.0),
        Scatterer::at_range_azimuth(3.1, -0.4, -0.3, 0.6),
    ];
    let rad = render_rad(&scene, &cfg, 0, Window::Hann)?;
    let (r, a, d) = rad.dims();
    println!("RAD tensor {r}x{a}x{d}, peak at {:?}", rad.argmax());
    for s in &scene {
        println!(
            "reflector at {:.2} m, sin(az) {:+.2}, {:+.2} m/s -> bins (range {}, angle {}, doppler {})",
            s.range(),
            s.sin_azimuth(),
            s.radial_velocity,
            cfg.range_bin(s.range())?,
            cfg.angle_bin(s.sin_azimuth().asin())?,
            cfg.doppler_bin(s.radial_velocity)?
        );
    }
    Ok(())
}
