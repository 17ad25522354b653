//! Basic against multiresolution detection on the same forged video:
//! per-stage timings, the coarse map, the frames kept for refinement and
//! the accuracy of both maps.
//!
//! ```text
//! cargo run --release --example multires_speed -- [2d|3d]
//! ```

use vcmd::cli::{run_detector, Mode, RunConfig};
use vcmd::forgegen::{apply_copy_move, synth_texture, ForgerySpec, TextureKind};
use vcmd::metrics::score;
use vcmd::Dims;

fn main() -> vcmd::Result<()> {
    let three_d = std::env::args().nth(1).as_deref() == Some("3d");
    let (basic, fast) = if three_d {
        (Mode::Basic3d, Mode::Fast3d)
    } else {
        (Mode::Basic2d, Mode::Fast2d)
    };
    let texture = TextureKind::GaussianBlurNoise {
        sigma: 2.0,
        temporal_sigma: 1.5,
    };
    let video = synth_texture(Dims::new(40, 160, 240), texture, 3)?;
    let spec = ForgerySpec::translation([60.0, 70.0], 30.0, (5, 25), [40, 90, 0]);
    let forgery = apply_copy_move(&video, &spec)?;

    let mut totals = Vec::new();
    for mode in [basic, fast] {
        let det = run_detector(&forgery.forged, &RunConfig::for_mode(mode))?;
        println!("{}:", mode.name());
        for t in &det.timings {
            println!("  {:>20} {:7.2} s", t.stage, t.seconds);
        }
        if let (Some(coarse), Some(voi)) = (&det.coarse_map, &det.voi) {
            let frames = voi.frame_indices();
            println!(
                "  coarse map {} sites, refined frames {}..={}",
                coarse.count(),
                frames.first().copied().unwrap_or(0),
                frames.last().copied().unwrap_or(0)
            );
        }
        let s = score(&det.map, &forgery.gt)?;
        println!("  detected={} F={:.3}", det.decision.detected, s.f_measure);
        totals.push(det.total_seconds());
    }
    println!("speed-up {:.1}x", totals[0] / totals[1]);
    Ok(())
}
