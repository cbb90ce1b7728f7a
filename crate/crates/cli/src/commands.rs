use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use dip3d::eval::{
    depth_sweep, format_table, histogram_svg, score_frame, EvalReport, ResultDocument, SweepCell,
};
use dip3d::frame::{
    calibration_to_document, parse_calibration, parse_frame_with, FrameMeta, FrameOptions,
};
use dip3d::pointing::resolve as resolve_frame;
use dip3d::sim::{generate_batch, GroundTruth, SceneSpec};
use dip3d::{Frame, PipelineConfig};
use rayon::prelude::*;

use crate::files;
use crate::{EvaluateArgs, PipelineArgs, ResolveArgs, SimulateArgs, SweepArgs};

/// Runs `f` on a pool of `jobs` threads (0 = one per CPU).
fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    Ok(pool.install(f))
}

fn load_spec(path: &Path) -> Result<SceneSpec> {
    SceneSpec::from_document(&files::read(path, "spec")?)
        .map_err(|e| anyhow!("spec {}: {e}", path.display()))
}

fn load_frame(path: &Path, meta: &FrameMeta, opts: &FrameOptions) -> Result<Frame> {
    let doc = files::read(path, "frame")?;
    parse_frame_with(&doc, meta, opts).map_err(|e| anyhow!("frame {}: parse: {e}", path.display()))
}

pub fn resolve(args: ResolveArgs) -> Result<ExitCode> {
    let cfg = args.pipeline.load()?;
    let rig = parse_calibration(&files::read(&args.calib, "calibration")?)
        .map_err(|e| anyhow!("calibration {}: {e}", args.calib.display()))?;
    let meta = FrameMeta::from_rig(&rig);
    let opts = FrameOptions {
        require_shoulder: cfg.pointing.shoulder_filter,
    };
    let paths = files::collect(&args.frames, "frame")?;
    if paths.is_empty() {
        bail!("no frame documents found");
    }
    let resolve_cfg = cfg.resolve_config();

    let docs = with_jobs(cfg.run.jobs, || -> Result<Vec<ResultDocument>> {
        let mut frames = paths
            .par_iter()
            .map(|p| load_frame(p, &meta, &opts))
            .collect::<Result<Vec<_>>>()?;
        frames.sort_by(|a, b| a.frame_id.cmp(&b.frame_id));
        if let Some(w) = frames.windows(2).find(|w| w[0].frame_id == w[1].frame_id) {
            bail!("duplicate frame_id {:?}", w[0].frame_id);
        }
        Ok(frames
            .par_iter()
            .map(|f| ResultDocument::new(&f.frame_id, &resolve_frame(f, &rig, &resolve_cfg)))
            .collect())
    })??;

    if let Some(dir) = &args.out {
        let targets = docs
            .iter()
            .map(|d| Ok(dir.join(format!("{}.result", files::file_stem_for(d.frame_id())?))))
            .collect::<Result<Vec<PathBuf>>>()?;
        if !args.force {
            if let Some(t) = targets.iter().find(|t| t.exists()) {
                bail!("{} exists (use --force to overwrite)", t.display());
            }
        }
        for (doc, target) in docs.iter().zip(&targets) {
            files::write(target, &doc.to_document(), true)?;
        }
    } else {
        for doc in &docs {
            print!("{}", doc.to_document());
        }
    }

    let mut rejected = 0;
    for doc in &docs {
        if let ResultDocument::Rejected {
            frame_id,
            stage,
            reason,
            message,
            ..
        } = doc
        {
            rejected += 1;
            eprintln!("{frame_id}: rejected at {stage} stage: {reason}: {message}");
        }
    }
    eprintln!(
        "{} frames, {} resolved, {rejected} rejected",
        docs.len(),
        docs.len() - rejected
    );
    Ok(if rejected > 0 {
        ExitCode::from(2)
    } else {
        ExitCode::SUCCESS
    })
}

pub fn simulate(args: SimulateArgs) -> Result<ExitCode> {
    let spec = load_spec(&args.spec)?;
    let seed = args.seed.unwrap_or(spec.seed);
    let scenes = with_jobs(args.jobs.unwrap_or(0), || {
        generate_batch(&spec, args.count, seed)
    })?
    .with_context(|| format!("spec {}", args.spec.display()))?;
    files::prepare_dir(&args.out, args.force)?;
    for (frame, truth) in &scenes {
        let stem = files::file_stem_for(&frame.frame_id)?;
        files::write(
            &args.out.join(format!("{stem}.frame")),
            &frame.to_document(),
            true,
        )?;
        files::write(
            &args.out.join(format!("{stem}.truth")),
            &truth.to_document(),
            true,
        )?;
    }
    if let Some(path) = &args.calib_out {
        files::write(path, &calibration_to_document(&spec.rig), args.force)?;
    }
    eprintln!("wrote {} scenes to {}", scenes.len(), args.out.display());
    Ok(ExitCode::SUCCESS)
}

fn load_keyed<T>(
    dir: &Path,
    extension: &str,
    parse: impl Fn(&str) -> Result<T>,
    id: impl Fn(&T) -> &str,
) -> Result<BTreeMap<String, T>> {
    let paths = files::collect(&[dir.to_path_buf()], extension)?;
    if paths.is_empty() {
        bail!("no *.{extension} documents in {}", dir.display());
    }
    let mut out = BTreeMap::new();
    for p in paths {
        let doc =
            parse(&files::read(&p, extension)?).with_context(|| format!("{}", p.display()))?;
        let key = id(&doc).to_string();
        if out.insert(key.clone(), doc).is_some() {
            bail!("duplicate frame_id {key:?} in {}", dir.display());
        }
    }
    Ok(out)
}

fn id_mismatch(
    results: &BTreeMap<String, ResultDocument>,
    truths: &BTreeMap<String, GroundTruth>,
) -> Option<String> {
    let no_truth: Vec<&str> = results
        .keys()
        .filter(|k| !truths.contains_key(*k))
        .map(String::as_str)
        .collect();
    let no_result: Vec<&str> = truths
        .keys()
        .filter(|k| !results.contains_key(*k))
        .map(String::as_str)
        .collect();
    if no_truth.is_empty() && no_result.is_empty() {
        return None;
    }
    Some(format!(
        "IdMismatch: results without truth [{}]; truth without results [{}]",
        no_truth.join(", "),
        no_result.join(", ")
    ))
}

pub fn evaluate(args: EvaluateArgs) -> Result<ExitCode> {
    let base = PipelineArgs {
        config: args.config.clone(),
        ..Default::default()
    };
    let mut cfg = base.load()?;
    if let Some(r) = args.association_radius {
        cfg.evaluation.association_radius_px = r;
        cfg.validate()?;
    }
    let results = load_keyed(
        &args.results,
        "result",
        |s| ResultDocument::from_document(s).map_err(Into::into),
        |d| d.frame_id(),
    )?;
    let truths = load_keyed(
        &args.truth,
        "truth",
        |s| GroundTruth::from_document(s).map_err(Into::into),
        |t| &t.frame_id,
    )?;
    if let Some(msg) = id_mismatch(&results, &truths) {
        bail!(msg);
    }
    let records = results
        .iter()
        .map(|(id, doc)| score_frame(doc, &truths[id], cfg.evaluation.association_radius_px))
        .collect::<Result<Vec<_>, _>>()?;
    let report = EvalReport::new(records)?;
    let table = format_table(&report.summary);

    files::prepare_dir(&args.out, args.force)?;
    files::write(&args.out.join("report.json"), &report.to_document(), true)?;
    files::write(&args.out.join("table.txt"), &table, true)?;
    if args.plots {
        let svg = histogram_svg(&report.summary, "Selected object per true target");
        files::write(&args.out.join("histogram.svg"), &svg, true)?;
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}

fn stats(s: &Option<dip3d::eval::ErrorStats>) -> String {
    s.map_or_else(|| "-".to_string(), |e| e.to_string())
}

fn sweep_table(cells: &[SweepCell]) -> String {
    let mut out = format!(
        "{:>8} {:>8} {:>7} {:>9} {:>9} {:>22} {:>22}\n",
        "depth_m",
        "sigma_px",
        "frames",
        "accuracy",
        "rejected",
        "error correct (px)",
        "error all (px)"
    );
    for c in cells {
        let s = &c.summary;
        out.push_str(&format!(
            "{:>8.2} {:>8.2} {:>7} {:>9.3} {:>9} {:>22} {:>22}\n",
            c.depth_m,
            c.pixel_sigma,
            s.count,
            s.accuracy,
            s.rejected,
            stats(&s.correct_pixel_error),
            stats(&s.pixel_error)
        ));
    }
    out
}

pub fn sweep(args: SweepArgs) -> Result<ExitCode> {
    let mut cfg: PipelineConfig = args.pipeline.load()?;
    if let Some(r) = args.association_radius {
        cfg.evaluation.association_radius_px = r;
        cfg.validate()?;
    }
    let spec = load_spec(&args.spec)?;
    let seed = args.seed.unwrap_or(cfg.run.seed);
    let eval_cfg = cfg.eval_config();
    let cells = with_jobs(cfg.run.jobs, || {
        depth_sweep(&spec, &args.depths, &args.sigmas, args.n, seed, &eval_cfg)
    })??;

    let report = serde_json::json!({
        "schema_version": dip3d::frame::SCHEMA_VERSION,
        "seed": seed,
        "scenes_per_cell": args.n,
        "cells": cells,
    });
    let mut doc = serde_json::to_string_pretty(&report)?;
    doc.push('\n');
    let table = sweep_table(&cells);

    files::prepare_dir(&args.out, args.force)?;
    files::write(&args.out.join("sweep.json"), &doc, true)?;
    files::write(&args.out.join("sweep.txt"), &table, true)?;
    if args.plots {
        for c in &cells {
            let title = format!("depth {} m, sigma {} px", c.depth_m, c.pixel_sigma);
            let name = format!("cell_{}m_{}px.svg", c.depth_m, c.pixel_sigma);
            files::write(
                &args.out.join(name),
                &histogram_svg(&c.summary, &title),
                true,
            )?;
        }
    }
    print!("{table}");
    Ok(ExitCode::SUCCESS)
}
