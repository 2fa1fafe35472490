//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 bad input data (including any
//! skipped record in a batch command), 3 internal failure.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use crate::camera::{bev_to_perspective, perspective_to_bev, CameraModel};
use crate::grid::GridSpec;
use crate::io::calib::{load_kitti_calib, CameraMount};
use crate::io::grid_file::{export_grid, import_grid, GridFormat};
use crate::io::manifest::{read_annotations, AnnotationLine};
use crate::metrics::evaluate_scenes;
use crate::render::render;
use crate::scene::{sample, to_json, SampleRanges, SceneAttributes};
use crate::supervision::{encode_targets, DEFAULT_SIGMA_BINS};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_INTERNAL: i32 = 3;

/// Environment variable holding the log filter, e.g. `info` or `debug`.
pub const LOG_ENV: &str = "ROADLAYOUT_LOG";

#[derive(Debug, Parser)]
#[command(
    name = "roadlayout",
    version,
    about = "Parametric road layouts: sample, render, project, evaluate, annotate"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write randomly sampled scene annotations as JSONL.
    Sample {
        /// Random seed; the same seed always gives the same file.
        #[arg(long)]
        seed: u64,
        /// Number of annotations.
        #[arg(long)]
        count: u64,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
    },
    /// Render each annotation to a top-view semantic grid.
    Render {
        /// Annotation JSONL (bare annotations or frame records).
        #[arg(long)]
        annotations: PathBuf,
        /// Directory receiving one grid file per record.
        #[arg(long)]
        out_dir: PathBuf,
        /// Grid file format.
        #[arg(long, default_value = "png", value_parser = parse_format)]
        format: GridFormat,
    },
    /// Render each annotation and back-project it into the camera image.
    Project {
        /// Annotation JSONL (bare annotations or frame records).
        #[arg(long)]
        annotations: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
        /// Directory receiving one perspective label map per record.
        #[arg(long)]
        out_dir: PathBuf,
        /// Grid file format.
        #[arg(long, default_value = "png", value_parser = parse_format)]
        format: GridFormat,
    },
    /// Map a perspective label map onto the top-view grid.
    Ipm {
        /// Perspective label map (.png palette image or .raw grid).
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        camera: CameraArgs,
        /// Output top-view grid (.png or .raw).
        #[arg(long)]
        out: PathBuf,
    },
    /// Encode annotations as training targets (JSONL).
    Targets {
        /// Annotation JSONL (bare annotations or frame records).
        #[arg(long)]
        annotations: PathBuf,
        /// Output JSONL path.
        #[arg(long)]
        out: PathBuf,
        /// Gaussian width of the soft-bin targets, in bins.
        #[arg(long, default_value_t = DEFAULT_SIGMA_BINS)]
        sigma_bins: f64,
    },
    /// Score predicted annotations against ground truth.
    Evaluate {
        /// Predicted annotations (JSONL), matched to ground truth by id.
        #[arg(long)]
        pred: PathBuf,
        /// Ground-truth annotations (JSONL).
        #[arg(long)]
        gt: PathBuf,
        /// Object counts per ground-truth frame: one integer per line, or
        /// `{"frame_id": .., "object_count": ..}` objects.
        #[arg(long)]
        objects: Option<PathBuf>,
        /// Output JSON report path.
        #[arg(long)]
        report: PathBuf,
    },
    /// Serve the annotation API.
    Serve {
        /// Frame manifest (JSONL); rewritten in place on every save.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory that manifest image paths are relative to.
        #[arg(long)]
        images: PathBuf,
        /// Port to listen on.
        #[arg(long, default_value_t = 8080)]
        port: u16,
        /// Address to bind.
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        /// Named cameras (JSONL of `{"calib_id", "camera"}`).
        #[arg(long)]
        calibs: Option<PathBuf>,
        /// KITTI calibration used when a frame's calib_id is not listed.
        #[arg(long)]
        calib: Option<PathBuf>,
        #[command(flatten)]
        mount: MountArgs,
    },
}

#[derive(Debug, Args)]
struct MountArgs {
    /// Camera height above the ground plane, meters.
    #[arg(long, default_value_t = CameraMount::default().height)]
    height: f64,
    /// Camera pitch, radians (positive looks down).
    #[arg(long, default_value_t = CameraMount::default().pitch, allow_negative_numbers = true)]
    pitch: f64,
    /// Image width in pixels.
    #[arg(long, default_value_t = CameraMount::default().image_width)]
    image_width: u32,
    /// Image height in pixels.
    #[arg(long, default_value_t = CameraMount::default().image_height)]
    image_height: u32,
}

impl MountArgs {
    fn mount(&self) -> CameraMount {
        CameraMount {
            height: self.height,
            pitch: self.pitch,
            image_width: self.image_width,
            image_height: self.image_height,
        }
    }
}

#[derive(Debug, Args)]
struct CameraArgs {
    /// KITTI calibration file (intrinsics from its `P2:` line).
    #[arg(long)]
    calib: PathBuf,
    #[command(flatten)]
    mount: MountArgs,
}

impl CameraArgs {
    fn camera(&self) -> Result<CameraModel, Failure> {
        load_kitti_calib(&self.calib, self.mount.mount())
            .map_err(|e| Failure::data(format!("{}: {e}", self.calib.display())))
    }
}

fn parse_format(s: &str) -> Result<GridFormat, String> {
    s.parse()
}

fn format_for(path: &Path) -> GridFormat {
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("png") => GridFormat::Png,
        _ => GridFormat::Raw,
    }
}

#[derive(Debug)]
struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn data(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: EXIT_INTERNAL,
            message: message.into(),
        }
    }
}

/// Outcome of a batch command.
struct Summary {
    command: &'static str,
    ok: usize,
    skipped: Vec<String>,
}

impl Summary {
    fn finish(self) -> i32 {
        for reason in &self.skipped {
            eprintln!("skipped {reason}");
        }
        println!(
            "{}: {} ok, {} skipped",
            self.command,
            self.ok,
            self.skipped.len()
        );
        if self.skipped.is_empty() {
            EXIT_OK
        } else {
            EXIT_DATA
        }
    }
}

/// Parse `argv` (including the program name) and run the command.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, "warn"))
        .format_timestamp(None)
        .try_init();

    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match std::panic::catch_unwind(|| dispatch(cli.command)) {
        Ok(Ok(code)) => code,
        Ok(Err(failure)) => {
            eprintln!("error: {}", failure.message);
            failure.code
        }
        Err(_) => EXIT_INTERNAL,
    }
}

fn dispatch(command: Command) -> Result<i32, Failure> {
    match command {
        Command::Sample { seed, count, out } => cmd_sample(seed, count, &out),
        Command::Render {
            annotations,
            out_dir,
            format,
        } => cmd_render(&annotations, &out_dir, format),
        Command::Project {
            annotations,
            camera,
            out_dir,
            format,
        } => cmd_project(&annotations, &camera.camera()?, &out_dir, format),
        Command::Ipm { input, camera, out } => cmd_ipm(&input, &camera.camera()?, &out),
        Command::Targets {
            annotations,
            out,
            sigma_bins,
        } => cmd_targets(&annotations, &out, sigma_bins),
        Command::Evaluate {
            pred,
            gt,
            objects,
            report,
        } => cmd_evaluate(&pred, &gt, objects.as_deref(), &report),
        Command::Serve {
            manifest,
            images,
            port,
            host,
            calibs,
            calib,
            mount,
        } => cmd_serve(manifest, images, &host, port, calibs, calib, mount.mount()),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    fs::write(path, bytes).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))
}

fn create_dir(dir: &Path) -> Result<(), Failure> {
    fs::create_dir_all(dir).map_err(|e| Failure::internal(format!("{}: {e}", dir.display())))
}

fn load_lines(path: &Path) -> Result<Vec<AnnotationLine>, Failure> {
    read_annotations(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn cmd_sample(seed: u64, count: u64, out: &Path) -> Result<i32, Failure> {
    let ranges = SampleRanges::default();
    let lines = (0..count)
        .into_par_iter()
        .map(|i| {
            // Each record gets its own stream derived from the seed.
            let record_seed = seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(i);
            sample(record_seed, &ranges).map(|theta| to_json(&theta))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| Failure::internal(e.to_string()))?;
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    write_file(out, text.as_bytes())?;
    println!("sample: wrote {count} annotations to {}", out.display());
    Ok(EXIT_OK)
}

/// Run `job` over every parsed record in parallel, collecting skips.
fn batch<F>(command: &'static str, source: &Path, lines: &[AnnotationLine], job: F) -> Summary
where
    F: Fn(&str, &SceneAttributes) -> Result<(), String> + Sync,
{
    let results: Vec<Result<(), String>> = lines
        .par_iter()
        .map(|line| {
            let theta = line.attributes.as_ref().map_err(Clone::clone)?;
            job(&line.id, theta)
        })
        .collect();
    let mut summary = Summary {
        command,
        ok: 0,
        skipped: Vec::new(),
    };
    for (line, result) in lines.iter().zip(results) {
        match result {
            Ok(()) => summary.ok += 1,
            Err(e) => summary.skipped.push(format!(
                "{}:{} ({}): {e}",
                source.display(),
                line.line,
                line.id
            )),
        }
    }
    summary
}

fn safe_file_name(id: &str) -> Result<&str, String> {
    let ok = !id.is_empty()
        && id != "."
        && id != ".."
        && !id.contains(['/', '\\', '\0']);
    if ok {
        Ok(id)
    } else {
        Err(format!("frame id `{id}` is not usable as a file name"))
    }
}

fn cmd_render(annotations: &Path, out_dir: &Path, format: GridFormat) -> Result<i32, Failure> {
    let lines = load_lines(annotations)?;
    create_dir(out_dir)?;
    let spec = GridSpec::default();
    let summary = batch("render", annotations, &lines, |id, theta| {
        let grid = render(theta, &spec).map_err(|e| e.to_string())?;
        let path = out_dir.join(format!("{}.{}", safe_file_name(id)?, format.extension()));
        export_grid(&grid, format, &path).map_err(|e| e.to_string())
    });
    Ok(summary.finish())
}

fn cmd_project(
    annotations: &Path,
    cam: &CameraModel,
    out_dir: &Path,
    format: GridFormat,
) -> Result<i32, Failure> {
    let lines = load_lines(annotations)?;
    create_dir(out_dir)?;
    let spec = GridSpec::default();
    let summary = batch("project", annotations, &lines, |id, theta| {
        let bev = render(theta, &spec).map_err(|e| e.to_string())?;
        let persp = bev_to_perspective(&bev, &spec, cam).map_err(|e| e.to_string())?;
        let path = out_dir.join(format!("{}.{}", safe_file_name(id)?, format.extension()));
        export_grid(&persp, format, &path).map_err(|e| e.to_string())
    });
    Ok(summary.finish())
}

fn cmd_ipm(input: &Path, cam: &CameraModel, out: &Path) -> Result<i32, Failure> {
    let persp = import_grid(input, format_for(input))
        .map_err(|e| Failure::data(format!("{}: {e}", input.display())))?;
    let spec = GridSpec::default();
    let bev = perspective_to_bev(&persp, cam, &spec)
        .map_err(|e| Failure::data(format!("{}: {e}", input.display())))?;
    export_grid(&bev, format_for(out), out)
        .map_err(|e| Failure::internal(format!("{}: {e}", out.display())))?;
    println!("ipm: wrote {}", out.display());
    Ok(EXIT_OK)
}

fn cmd_targets(annotations: &Path, out: &Path, sigma_bins: f64) -> Result<i32, Failure> {
    if !(sigma_bins >= 0.0) || !sigma_bins.is_finite() {
        return Err(Failure {
            code: EXIT_USAGE,
            message: format!("--sigma-bins must be a finite non-negative number, got {sigma_bins}"),
        });
    }
    let lines = load_lines(annotations)?;
    let encoded: Vec<Result<String, String>> = lines
        .par_iter()
        .map(|line| {
            let theta = line.attributes.as_ref().map_err(Clone::clone)?;
            let targets = encode_targets(theta, sigma_bins).map_err(|e| e.to_string())?;
            let mut value = serde_json::to_value(&targets).map_err(|e| e.to_string())?;
            value["frame_id"] = serde_json::Value::String(line.id.clone());
            Ok(value.to_string())
        })
        .collect();
    let mut summary = Summary {
        command: "targets",
        ok: 0,
        skipped: Vec::new(),
    };
    let mut text = String::new();
    for (line, result) in lines.iter().zip(encoded) {
        match result {
            Ok(json) => {
                text.push_str(&json);
                text.push('\n');
                summary.ok += 1;
            }
            Err(e) => summary.skipped.push(format!(
                "{}:{} ({}): {e}",
                annotations.display(),
                line.line,
                line.id
            )),
        }
    }
    write_file(out, text.as_bytes())?;
    Ok(summary.finish())
}

fn parse_object_counts(path: &Path) -> Result<(Vec<usize>, HashMap<String, usize>), Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    let mut positional = Vec::new();
    let mut by_id = HashMap::new();
    for (idx, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Failure::data(format!("{}:{}: {msg}", path.display(), idx + 1));
        let value: serde_json::Value =
            serde_json::from_str(line).map_err(|e| bad(e.to_string()))?;
        match value {
            serde_json::Value::Number(n) => {
                let count = n
                    .as_u64()
                    .ok_or_else(|| bad(format!("object count must be a non-negative integer, got {n}")))?;
                positional.push(count as usize);
            }
            serde_json::Value::Object(map) => {
                let id = map
                    .get("frame_id")
                    .and_then(|v| v.as_str())
                    .ok_or_else(|| bad("missing string `frame_id`".into()))?;
                let count = map
                    .get("object_count")
                    .and_then(|v| v.as_u64())
                    .ok_or_else(|| bad("missing non-negative integer `object_count`".into()))?;
                by_id.insert(id.to_string(), count as usize);
            }
            other => return Err(bad(format!("expected an integer or an object, got {other}"))),
        }
    }
    Ok((positional, by_id))
}

fn cmd_evaluate(pred: &Path, gt: &Path, objects: Option<&Path>, report: &Path) -> Result<i32, Failure> {
    let pred_lines = load_lines(pred)?;
    let gt_lines = load_lines(gt)?;
    let counts = objects.map(parse_object_counts).transpose()?;

    let mut skipped = Vec::new();
    let mut preds_by_id: HashMap<&str, &SceneAttributes> = HashMap::new();
    for line in &pred_lines {
        match &line.attributes {
            Ok(theta) => {
                preds_by_id.insert(&line.id, theta);
            }
            Err(e) => skipped.push(format!("{}:{} ({}): {e}", pred.display(), line.line, line.id)),
        }
    }

    let mut pairs_pred = Vec::new();
    let mut pairs_gt = Vec::new();
    let mut pair_counts = Vec::new();
    for (position, line) in gt_lines.iter().enumerate() {
        let located = format!("{}:{} ({})", gt.display(), line.line, line.id);
        let theta = match &line.attributes {
            Ok(theta) => theta,
            Err(e) => {
                skipped.push(format!("{located}: {e}"));
                continue;
            }
        };
        let Some(p) = preds_by_id.get(line.id.as_str()) else {
            skipped.push(format!("{located}: no prediction with this id"));
            continue;
        };
        if let Some((positional, by_id)) = &counts {
            let count = by_id
                .get(&line.id)
                .copied()
                .or_else(|| positional.get(position).copied())
                .or(line.object_count.map(|c| c as usize));
            match count {
                Some(c) => pair_counts.push(c),
                None => {
                    skipped.push(format!("{located}: no object count"));
                    continue;
                }
            }
        }
        pairs_pred.push(**p);
        pairs_gt.push(*theta);
    }

    let spec = GridSpec::default();
    let result = evaluate_scenes(
        &pairs_pred,
        &pairs_gt,
        counts.as_ref().map(|_| pair_counts.as_slice()),
        &spec,
    )
    .map_err(|e| Failure::data(e.to_string()))?;
    let json = serde_json::to_string_pretty(&result).map_err(|e| Failure::internal(e.to_string()))?;
    write_file(report, format!("{json}\n").as_bytes())?;
    if let Some(table) = &result.occlusion_table {
        println!("{}", table.to_table_string());
    }
    let summary = Summary {
        command: "evaluate",
        ok: result.frames,
        skipped,
    };
    println!(
        "accu_bi {:.4}  accu_mc {:.4}  f1 {:.4}  mse {:.6}",
        result.accu_bi, result.accu_mc, result.f1, result.mse
    );
    let _ = std::io::stdout().flush();
    Ok(summary.finish())
}

fn cmd_serve(
    manifest: PathBuf,
    images: PathBuf,
    host: &str,
    port: u16,
    calibs: Option<PathBuf>,
    calib: Option<PathBuf>,
    mount: CameraMount,
) -> Result<i32, Failure> {
    use crate::service::{load_calib_records, serve, ServiceConfig};

    let mut config = ServiceConfig::new(manifest, images);
    if let Some(path) = calibs {
        config.calibs = load_calib_records(&path)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    }
    if let Some(path) = calib {
        config.default_camera = load_kitti_calib(&path, mount)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
    }
    let addr = format!("{host}:{port}");
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::internal(e.to_string()))?;
    runtime
        .block_on(serve(config, &addr))
        .map_err(|e| Failure {
            code: e.exit_code(),
            message: e.to_string(),
        })?;
    Ok(EXIT_OK)
}
