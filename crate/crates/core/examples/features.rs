//! Dense Zernike features: per-frame magnitudes and the flip-invariant 3D
//! variant, with a look at how they react to rotation and time reversal.
//!
//! ```text
//! cargo run --release --example features
//! ```

use vcmd::forgegen::{synth_texture, TextureKind};
use vcmd::zernike::{
    compute_moments, default_moments_2d, extract_field, feature_2d, FeatureConfig, FeatureMode,
    MomentKernels,
};
use vcmd::{Dims, Video};

fn main() -> vcmd::Result<()> {
    let texture = TextureKind::GaussianBlurNoise {
        sigma: 1.5,
        temporal_sigma: 1.5,
    };
    let video = synth_texture(Dims::new(9, 64, 64), texture, 3)?;

    for mode in [FeatureMode::TwoD, FeatureMode::ThreeDFlipInvariant] {
        let cfg = FeatureConfig::with_mode(mode);
        let field = extract_field(&video, &cfg)?;
        println!(
            "{mode:?}: {} values per site, {} of {} sites valid",
            field.feature_len(),
            field.valid_count(),
            field.dims().len()
        );
    }

    // Rotating a patch by 90 degrees permutes the grid exactly, so the
    // moment magnitudes do not move at all.
    let r = 8;
    let w = 2 * r + 1;
    let frame = video.frame(4);
    let patch: Vec<f64> = (0..w * w)
        .map(|i| frame[(20 + i / w) * 64 + 20 + i % w])
        .collect();
    let turned: Vec<f64> = (0..w * w)
        .map(|i| patch[(i % w) * w + (w - 1 - i / w)])
        .collect();
    let kernels = MomentKernels::new(r, &default_moments_2d());
    let a = feature_2d(&kernels.moments_at(&patch, w, w, r, r).expect("patch fits"));
    let b = feature_2d(&kernels.moments_at(&turned, w, w, r, r).expect("patch fits"));
    let worst = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    println!("90 degree rotation: largest magnitude change {worst:.2e}");

    // Moments at a single site, straight from the video.
    let cfg = FeatureConfig::default();
    if let Some(m) = compute_moments(&video, 4, 32, 32, &cfg) {
        let mags: Vec<String> = m
            .iter()
            .take(4)
            .map(|z| format!("{:.4}", z.norm()))
            .collect();
        println!("site (4, 32, 32), first magnitudes: {}", mags.join(" "));
    }

    // The 3D features of a reversed video are the reversed features.
    let cfg = FeatureConfig::with_mode(FeatureMode::ThreeDFlipInvariant);
    let fwd = extract_field(&video, &cfg)?;
    let rev = extract_field(&video.reversed(), &cfg)?;
    let d = fwd.dims();
    let (i, j) = (d.index(2, 32, 32), d.index(d.frames - 3, 32, 32));
    println!(
        "time reversal: site features equal = {}",
        fwd.feature(i) == rev.feature(j)
    );

    let flat = Video::filled(Dims::new(1, 32, 32), 0.5);
    let f = extract_field(&flat, &FeatureConfig::default())?;
    let center = f.feature(f.dims().index(0, 16, 16));
    println!("flat frame, center site: {center:?}");
    Ok(())
}
