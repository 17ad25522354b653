//! Writes a small evaluation set: pristine and forged synthetic videos as
//! PNG frame directories, each forgery with its ground-truth masks and spec.
//!
//! ```text
//! cargo run --release --example forge_dataset -- out_dir
//! ```

use std::fs;
use std::path::PathBuf;

use vcmd::forgegen::{
    apply_copy_move, degrade, synth_texture, Degradation, ForgeryKind, ForgerySpec, RegionShape,
    TextureKind,
};
use vcmd::io::{save_frames, save_mask};
use vcmd::Dims;

fn main() -> vcmd::Result<()> {
    let out = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "dataset".into()));
    let dims = Dims::new(30, 144, 192);
    let texture = TextureKind::GaussianBlurNoise {
        sigma: 2.0,
        temporal_sigma: 1.5,
    };
    let base = ForgerySpec::translation([50.0, 50.0], 26.0, (4, 20), [40, 90, 0]);
    let cases = [
        ("translation", base.clone()),
        (
            "rotated",
            ForgerySpec {
                rotation_deg: 20.0,
                ..base.clone()
            },
        ),
        (
            "flipped",
            ForgerySpec {
                temporal_flip: true,
                ..base.clone()
            },
        ),
        (
            "shifted_in_time",
            ForgerySpec {
                displacement: [40, 90, 6],
                ..base.clone()
            },
        ),
        (
            "occlusive_box",
            ForgerySpec {
                region: RegionShape::Box {
                    top_left: [20, 20],
                    size: [48, 56],
                },
                kind: ForgeryKind::Occlusive,
                ..base.clone()
            },
        ),
    ];

    for (i, (name, spec)) in cases.iter().enumerate() {
        let video = synth_texture(dims, texture, 40 + i as u64)?;
        let forgery = apply_copy_move(&video, spec)?;
        let dir = out.join(name);
        save_frames(&forgery.forged, &dir.join("video"))?;
        save_mask(&forgery.gt, &dir.join("gt"))?;
        let spec_path = dir.join("spec.json");
        fs::write(&spec_path, serde_json::to_string_pretty(spec).unwrap()).map_err(|source| {
            vcmd::Error::Io {
                path: spec_path.clone(),
                source,
            }
        })?;
        println!(
            "{name}: {} forged pixels, rho_max {:.1}, d_max {}",
            forgery.gt.count(),
            forgery.stats.rho_max,
            forgery.stats.d_max
        );
    }

    // Pristine references, one of them recompressed.
    for i in 0..3u64 {
        let mut video = synth_texture(dims, texture, 90 + i)?;
        if i == 2 {
            video = degrade(&video, Degradation::PerFrameJpeg { quality: 60 })?;
        }
        save_frames(&video, &out.join(format!("pristine_{i}")).join("video"))?;
    }
    println!("dataset written to {}", out.display());
    Ok(())
}
