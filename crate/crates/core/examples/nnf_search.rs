//! Nearest-neighbor field search on a video holding one clone: how fast the
//! true offset takes over the copied area, round by round.
//!
//! ```text
//! cargo run --release --example nnf_search -- [out.bin]
//! ```

use vcmd::forgegen::{apply_copy_move, synth_texture, ForgerySpec, TextureKind};
use vcmd::patchmatch::{run, write_nnf_dump, MatchConfig, Offset, SearchSpace};
use vcmd::zernike::{extract_field, FeatureConfig};
use vcmd::Dims;

fn main() -> vcmd::Result<()> {
    let texture = TextureKind::GaussianBlurNoise {
        sigma: 2.0,
        temporal_sigma: 1.5,
    };
    let video = synth_texture(Dims::new(16, 120, 160), texture, 5)?;
    let spec = ForgerySpec::translation([40.0, 40.0], 24.0, (2, 12), [50, 70, 0]);
    let forged = apply_copy_move(&video, &spec)?.forged;
    let features = extract_field(&forged, &FeatureConfig::default())?;
    let space = SearchSpace::new(&features, &features, 16.0)?;

    // Sites whose patch lies wholly inside the copy.
    let d = features.dims();
    let core: Vec<usize> = (2..14)
        .flat_map(|t| (74..=106).flat_map(move |r| (94..=126).map(move |c| (t, r, c))))
        .filter(|&(_, r, c)| {
            let (dy, dx) = (r as f64 - 90.0, c as f64 - 110.0);
            (dy * dy + dx * dx).sqrt() <= 16.0
        })
        .map(|(t, r, c)| d.index(t, r, c))
        .collect();
    let truth = Offset::new(-50, -70, 0);

    let mut field = None;
    for round in 1..=8 {
        let cfg = MatchConfig {
            iterations: 1,
            seed: round,
            ..Default::default()
        };
        let next = run(&space, &cfg, field.take())?;
        let found = core.iter().filter(|&&i| next.offset(i) == truth).count();
        println!(
            "round {round}: mean distance {:.4}, clone core on true offset {:.1}%",
            next.total_distance() / next.matched_count() as f64,
            100.0 * found as f64 / core.len() as f64
        );
        field = Some(next);
    }

    if let Some(path) = std::env::args().nth(1) {
        write_nnf_dump(field.as_ref().unwrap(), path.as_ref())?;
        println!("offset field written to {path}");
    }
    Ok(())
}
