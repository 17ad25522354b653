//! Command-line workflows: detect, evaluate, forge and nnf.
//!
//! Every command takes a JSON run configuration holding all tunable
//! parameters with their defaults; command-line flags override the few
//! knobs that change between runs (mode, threads, seed, dumps).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::forgegen::{apply_copy_move, ForgerySpec, ForgeryStats};
use crate::io::{load_mask, load_video_auto, save_frames, save_mask, save_overlay};
use crate::metrics::{score, Score};
use crate::multires::{
    detect_basic_with, detect_multires_with, Detection, DetectorConfig, StageTiming,
};
use crate::patchmatch::{self, write_nnf_dump, SearchSpace};
use crate::video::{Dims, Video};
use crate::zernike::{extract_field, write_feature_dump, FeatureMode};

/// The four detector variants: single-level or three-level pipeline, with
/// per-frame (2D) or flip-invariant spatio-temporal (3D) features.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    #[default]
    Basic2d,
    Basic3d,
    Fast2d,
    Fast3d,
}

impl Mode {
    pub const ALL: [Mode; 4] = [Mode::Basic2d, Mode::Basic3d, Mode::Fast2d, Mode::Fast3d];

    pub fn feature_mode(self) -> FeatureMode {
        match self {
            Mode::Basic2d | Mode::Fast2d => FeatureMode::TwoD,
            Mode::Basic3d | Mode::Fast3d => FeatureMode::ThreeDFlipInvariant,
        }
    }

    pub fn is_fast(self) -> bool {
        matches!(self, Mode::Fast2d | Mode::Fast3d)
    }

    pub fn name(self) -> &'static str {
        match self {
            Mode::Basic2d => "basic2d",
            Mode::Basic3d => "basic3d",
            Mode::Fast2d => "fast2d",
            Mode::Fast3d => "fast3d",
        }
    }
}

/// Full run configuration as read from JSON.
///
/// `mode` selects the feature kind (overriding `detector.features.mode`),
/// `seed` replaces `detector.matching.seed`, the frames restored around
/// detections follow the temporal patch extent, and the search uses one
/// source slab per thread, so results depend on `threads` but are
/// reproducible for a given thread count.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub mode: Mode,
    pub threads: usize,
    pub seed: u64,
    pub dump_features: bool,
    pub dump_nnf: bool,
    pub detector: DetectorConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::default(),
            threads: 1,
            seed: 0,
            dump_features: false,
            dump_nnf: false,
            detector: DetectorConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn for_mode(mode: Mode) -> Self {
        RunConfig {
            mode,
            ..Default::default()
        }
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Detector configuration with mode, seed and thread count applied.
    pub fn effective(&self) -> Result<DetectorConfig> {
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        let mut d = self.detector.clone();
        d.features.mode = self.mode.feature_mode();
        d.matching.seed = self.seed;
        d.matching.slabs = self.threads;
        d.dlf.support_frames = match d.features.mode {
            FeatureMode::TwoD => 0,
            FeatureMode::ThreeDFlipInvariant => d.features.temporal_half_extent,
        };
        d.validate()?;
        Ok(d)
    }

    /// Runs `f` on a thread pool of `self.threads` workers.
    pub fn in_pool<T: Send>(&self, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(self.threads.max(1))
            .build()
            .map_err(|e| Error::Config(format!("cannot start thread pool: {e}")))?;
        pool.install(f)
    }
}

/// Runs the detector selected by `cfg.mode` on a pool of `cfg.threads`
/// workers.
pub fn run_detector(video: &Video, cfg: &RunConfig) -> Result<Detection> {
    run_detector_with_dumps(video, cfg, None)
}

fn run_detector_with_dumps(
    video: &Video,
    cfg: &RunConfig,
    dumps: Option<&Path>,
) -> Result<Detection> {
    let det_cfg = cfg.effective()?;
    cfg.in_pool(|| {
        let start = Instant::now();
        let f0 = extract_field(video, &det_cfg.features)?;
        let feature_time = start.elapsed().as_secs_f64();
        if let (Some(dir), true) = (dumps, cfg.dump_features) {
            write_feature_dump(&f0, &dir.join("features.bin"))?;
        }
        let mut det = if cfg.mode.is_fast() {
            detect_multires_with(&f0, &det_cfg)?
        } else {
            detect_basic_with(&f0, &det_cfg)?
        };
        det.timings.insert(
            0,
            StageTiming {
                stage: "features".into(),
                seconds: feature_time,
            },
        );
        if let (Some(dir), true) = (dumps, cfg.dump_nnf) {
            write_nnf_dump(&det.field, &dir.join("nnf.bin"))?;
        }
        Ok(det)
    })
}

/// `report.json` of the detect command. Everything except `timings` is a
/// deterministic function of inputs, mode, seed and thread count.
#[derive(Clone, Debug, Serialize)]
pub struct DetectReport {
    pub video: String,
    pub dims: Dims,
    pub mode: Mode,
    pub detected: bool,
    pub pixel_count: usize,
    pub coarse_pixel_count: Option<usize>,
    pub voi_frames: Option<Vec<usize>>,
    pub timings: Vec<StageTiming>,
    pub total_seconds: f64,
    pub config: RunConfig,
}

/// Detects copy-moves in `video_path` and writes `mask/`, `overlay/` and
/// `report.json` (plus requested dumps) under `out_dir`.
pub fn cmd_detect(video_path: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<DetectReport> {
    let video = load_video_auto(video_path)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let det = run_detector_with_dumps(&video, cfg, Some(out_dir))?;
    save_mask(&det.map, &out_dir.join("mask"))?;
    save_overlay(&video, &det.map, &out_dir.join("overlay"))?;
    let report = DetectReport {
        video: video_path.display().to_string(),
        dims: video.dims(),
        mode: cfg.mode,
        detected: det.decision.detected,
        pixel_count: det.decision.pixel_count,
        coarse_pixel_count: det.coarse_map.as_ref().map(|m| m.count()),
        voi_frames: det.voi.as_ref().map(|v| v.frame_indices()),
        total_seconds: det.total_seconds(),
        timings: det.timings,
        config: cfg.clone(),
    };
    write_json(&report, &out_dir.join("report.json"))?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct EvaluateReport {
    pub video: String,
    pub mode: Mode,
    pub score: Score,
}

/// Runs detection and scores the map against the ground-truth mask
/// directory `gt_path`.
pub fn cmd_evaluate(video_path: &Path, gt_path: &Path, cfg: &RunConfig) -> Result<EvaluateReport> {
    let video = load_video_auto(video_path)?;
    let gt = load_mask(gt_path)?;
    if gt.dims() != video.dims() {
        return Err(Error::DimMismatch {
            left: gt.dims(),
            right: video.dims(),
        });
    }
    let start = Instant::now();
    let det = run_detector(&video, cfg)?;
    let seconds = start.elapsed().as_secs_f64();
    let s = score(&det.map, &gt)?.with_run(det.decision.detected, seconds, video.dims().len());
    Ok(EvaluateReport {
        video: video_path.display().to_string(),
        mode: cfg.mode,
        score: s,
    })
}

#[derive(Clone, Debug, Serialize)]
pub struct ForgeReport {
    pub dims: Dims,
    pub stats: ForgeryStats,
    pub gt_pixels: usize,
}

/// Applies the forgery in `spec_path` to `src_video` and writes `video/`,
/// `gt/`, `spec.json` and `stats.json` under `out_dir`.
pub fn cmd_forge(spec_path: &Path, src_video: &Path, out_dir: &Path) -> Result<ForgeReport> {
    let text = fs::read_to_string(spec_path).map_err(|e| Error::io(spec_path, e))?;
    let spec: ForgerySpec = serde_json::from_str(&text)
        .map_err(|e| Error::Config(format!("{}: {e}", spec_path.display())))?;
    let video = load_video_auto(src_video)?;
    let out = apply_copy_move(&video, &spec)?;
    save_frames(&out.forged, &out_dir.join("video"))?;
    save_mask(&out.gt, &out_dir.join("gt"))?;
    write_json(&spec, &out_dir.join("spec.json"))?;
    let report = ForgeReport {
        dims: video.dims(),
        stats: out.stats,
        gt_pixels: out.gt.count(),
    };
    write_json(&report, &out_dir.join("stats.json"))?;
    Ok(report)
}

#[derive(Clone, Debug, Serialize)]
pub struct NnfReport {
    pub dims: Dims,
    pub matched: usize,
    pub mean_distance: f64,
}

/// Full-resolution PatchMatch of the video against itself, written as an
/// offset-field dump to `out`.
pub fn cmd_nnf(video_path: &Path, cfg: &RunConfig, out: &Path) -> Result<NnfReport> {
    let video = load_video_auto(video_path)?;
    let det_cfg = cfg.effective()?;
    let field = cfg.in_pool(|| {
        let f0 = extract_field(&video, &det_cfg.features)?;
        let space = SearchSpace::new(&f0, &f0, det_cfg.matching.min_offset)?;
        patchmatch::run(&space, &det_cfg.matching, None)
    })?;
    if let Some(dir) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    write_nnf_dump(&field, out)?;
    let matched = field.matched_count();
    Ok(NnfReport {
        dims: field.dims(),
        matched,
        mean_distance: if matched == 0 {
            0.0
        } else {
            field.total_distance() / matched as f64
        },
    })
}

fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    let mut text = serde_json::to_string_pretty(value).expect("serializable report");
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Process exit code for an error: 2 for configuration and input-shape
/// problems, 3 for I/O and decoding failures.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Io { .. }
        | Error::Decode { .. }
        | Error::FrameDims { .. }
        | Error::NoFrames { .. }
        | Error::Y4m { .. }
        | Error::Dump { .. } => 3,
        Error::DimMismatch { .. }
        | Error::InvalidMoment { .. }
        | Error::TooSmall { .. }
        | Error::Config(_)
        | Error::Forgery(_) => 2,
    }
}

/// Exit code for a panic inside a command.
pub const EXIT_INTERNAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "vcmd",
    version,
    about = "Copy-move forgery detection for video"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct RunFlags {
    /// JSON run configuration; defaults apply to missing keys.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    #[arg(long)]
    pub threads: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

impl RunFlags {
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        if let Some(t) = self.threads {
            cfg.threads = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect and localize copy-moves; writes masks, overlays and report.json.
    Detect {
        /// Frame directory (PNG/PGM) or .y4m file.
        video: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        #[arg(long)]
        dump_nnf: bool,
        #[arg(long)]
        dump_features: bool,
    },
    /// Detect and score against a ground-truth mask directory.
    Evaluate {
        video: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[command(flatten)]
        run: RunFlags,
        /// Also write the score as JSON here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Plant a copy-move described by a JSON spec into a video.
    Forge {
        #[arg(long)]
        spec: PathBuf,
        video: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compute the full-resolution nearest-neighbor field and dump it.
    Nnf {
        video: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        run: RunFlags,
    },
}

/// Executes a parsed command line, printing a JSON summary to stdout.
pub fn execute(cli: Cli) -> Result<()> {
    fn print<T: Serialize>(v: &T) {
        println!(
            "{}",
            serde_json::to_string(v).expect("serializable summary")
        );
    }
    match cli.command {
        Command::Detect {
            video,
            out,
            run,
            dump_nnf,
            dump_features,
        } => {
            let mut cfg = run.resolve()?;
            cfg.dump_nnf |= dump_nnf;
            cfg.dump_features |= dump_features;
            let r = cmd_detect(&video, &cfg, &out)?;
            print(&serde_json::json!({
                "detected": r.detected,
                "pixel_count": r.pixel_count,
                "report": out.join("report.json"),
            }));
        }
        Command::Evaluate {
            video,
            gt,
            run,
            out,
        } => {
            let r = cmd_evaluate(&video, &gt, &run.resolve()?)?;
            if let Some(p) = out {
                write_json(&r, &p)?;
            }
            print(&r);
        }
        Command::Forge { spec, video, out } => print(&cmd_forge(&spec, &video, &out)?),
        Command::Nnf { video, out, run } => print(&cmd_nnf(&video, &run.resolve()?, &out)?),
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mode_names_round_trip() {
        for m in Mode::ALL {
            let s = serde_json::to_string(&m).unwrap();
            assert_eq!(s, format!("\"{}\"", m.name()));
            assert_eq!(serde_json::from_str::<Mode>(&s).unwrap(), m);
        }
    }

    #[test]
    fn mode_fixes_feature_kind_and_threads_fix_slabs() {
        let cfg = RunConfig {
            threads: 3,
            seed: 9,
            ..RunConfig::for_mode(Mode::Fast3d)
        };
        let d = cfg.effective().unwrap();
        assert_eq!(d.features.mode, FeatureMode::ThreeDFlipInvariant);
        assert_eq!((d.matching.slabs, d.matching.seed), (3, 9));
    }

    #[test]
    fn unknown_key_is_named() {
        let err = serde_json::from_str::<RunConfig>(r#"{"detector": {"dlf": {"windw_half": 3}}}"#)
            .unwrap_err();
        assert!(err.to_string().contains("windw_half"), "{err}");
    }

    #[test]
    fn partial_config_keeps_defaults() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"mode": "fast2d", "detector": {"pyramid": {"stride": 2}}}"#)
                .unwrap();
        assert_eq!(cfg.mode, Mode::Fast2d);
        assert_eq!(cfg.detector.pyramid.stride, 2);
        assert_eq!(cfg.detector.pyramid.voi_margin, 5);
        assert_eq!(cfg.detector.dlf.error_threshold, 1.5);
    }

    #[test]
    fn zero_threads_is_a_config_error() {
        let cfg = RunConfig {
            threads: 0,
            ..Default::default()
        };
        assert_eq!(exit_code(&cfg.effective().unwrap_err()), 2);
    }
}
