use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;
use tactile_core::slip::ContactState;

use crate::commands::FramePaths;
use crate::error::{CliError, Result};
use crate::output::{create, ensure_dir, write_json};
use crate::process::{check_dims, load_image, DepthSummary, ForceSummary, FrameContext, MarkerSummary, SlipSummary, Stages};
use crate::{Ctx, FrameInputs};

#[derive(Debug, Clone, Serialize)]
pub struct FrameRecord {
    pub index: usize,
    pub file: String,
    pub depth: DepthSummary,
    pub markers: MarkerSummary,
    pub slip: SlipSummary,
    pub force: ForceSummary,
}

#[derive(Serialize)]
struct Summary {
    frames: usize,
    states: BTreeMap<&'static str, usize>,
    max_depth_mm: f64,
    max_slip_score: f64,
    seed: u64,
    mesh: [usize; 2],
}

fn state_name(s: ContactState) -> &'static str {
    match s {
        ContactState::NoContact => "no_contact",
        ContactState::Stiction => "stiction",
        ContactState::IncipientSlip => "incipient_slip",
    }
}

/// Image files of a frame directory in name order.
pub fn list_frames(dir: &Path) -> Result<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::input(dir, e))?;
    let mut frames: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| matches!(e.to_ascii_lowercase().as_str(), "png" | "ppm" | "pnm"))
        })
        .collect();
    frames.sort();
    if frames.is_empty() {
        return Err(CliError::input(dir, "no frame images (png/ppm/pnm)"));
    }
    Ok(frames)
}

fn process_one(ctx: &Ctx, fc: &FrameContext, index: usize, path: &Path) -> Result<FrameRecord> {
    let raw = load_image(path)?;
    check_dims(&raw, &ctx.cfg, &path.display().to_string())?;
    let r = fc.process(raw, Stages::Full)?;
    let fem = fc.fem.as_ref().expect("fem context built");
    Ok(FrameRecord {
        index,
        file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        depth: DepthSummary::new(&r.reconstruction, ctx.cfg.slip.depth_threshold),
        markers: MarkerSummary::new(r.markers.as_ref().expect("markers"), r.motion.as_ref().expect("motion")),
        slip: SlipSummary::new(r.slip.as_ref().expect("slip")),
        force: ForceSummary::new(
            r.forces.as_ref().expect("forces"),
            r.displacement.as_ref().expect("displacement"),
            &fem.mesh,
        ),
    })
}

pub fn run(ctx: &Ctx, inputs: &FrameInputs, frames: Option<&PathBuf>, jobs: Option<usize>) -> Result<()> {
    let cfg = &ctx.cfg;
    let paths = FramePaths::resolve(ctx, inputs, false)?;
    let dir = cfg.require(frames, &cfg.paths.frames, "frame directory")?;
    let files = list_frames(&dir)?;
    if ctx.dry_run {
        log::info!("dry run: {} frames in {}", files.len(), dir.display());
        return Ok(());
    }

    let setup = Instant::now();
    let fc = paths.context(ctx, Stages::Full)?;
    log::info!("startup {:.3} s", setup.elapsed().as_secs_f64());

    let out = ensure_dir(&ctx.out)?;
    let mut records_out = create(&out.join("records.jsonl"))?;
    let write_err = |e: std::io::Error| CliError::Input(format!("cannot write records: {e}"));
    // Frames are processed a window at a time; records leave in frame order.
    let window = jobs.unwrap_or_else(rayon::current_num_threads).max(1);
    let mut records = Vec::with_capacity(files.len());
    let start = Instant::now();
    for (w, chunk) in files.chunks(window).enumerate() {
        let done: Vec<Result<FrameRecord>> = chunk
            .par_iter()
            .enumerate()
            .map(|(k, p)| process_one(ctx, &fc, w * window + k, p))
            .collect();
        for rec in done {
            let rec = rec?;
            let line = serde_json::to_string(&rec).map_err(|e| CliError::Numeric(e.to_string()))?;
            writeln!(records_out, "{line}").map_err(write_err)?;
            records.push(rec);
        }
    }
    records_out.flush().map_err(write_err)?;
    let elapsed = start.elapsed().as_secs_f64();
    let fps = records.len() as f64 / elapsed.max(1e-9);

    let mut states = BTreeMap::new();
    for s in [ContactState::NoContact, ContactState::Stiction, ContactState::IncipientSlip] {
        states.insert(state_name(s), records.iter().filter(|r| r.slip.state == s).count());
    }
    write_json(
        &out.join("summary.json"),
        &Summary {
            frames: records.len(),
            states,
            max_depth_mm: records.iter().map(|r| r.depth.max).fold(0.0, f64::max),
            max_slip_score: records.iter().map(|r| r.slip.score).fold(0.0, f64::max),
            seed: cfg.seed,
            mesh: cfg.fem.mesh,
        },
    )?;
    // Timing is the only nondeterministic output and stays out of the records.
    let report = format!(
        "frames: {}\nelapsed_s: {elapsed:.6}\nthroughput_fps: {fps:.3}\nworkers: {}\n",
        records.len(),
        rayon::current_num_threads()
    );
    std::fs::write(out.join("throughput.log"), &report).map_err(write_err)?;
    println!("throughput: {fps:.2} frames/s ({} frames in {elapsed:.3} s)", records.len());
    Ok(())
}
