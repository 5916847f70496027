//! Dataset stages: synth, craft, cov, threshold, filter.

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use pcst::craft::{default_patch_size, sample_target, CraftParams};
use pcst::filter::{build_histogram, cov_syr, filter_pairs, find_smin, residual, Binning};
use pcst::image::{psnr, Burst, Image};
use pcst::manifest::{resolve, write_manifest, PairRecord};
use pcst::noise::{synth_frames, NoiseModel};
use pcst::rng::{derive_seed, Rng};
use pcst::scene::{render_burst, SceneParams};
use pcst::stats::mean;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::args::{CraftArgs, FilterArgs, ManifestArgs, NoiseArgs, SynthArgs, ThresholdArgs};
use crate::files::{
    file_name, indexed_files, load_manifest, manifest_entry, read_image, subdirs, write_json,
    write_pcrf, IMAGE_EXTS,
};
use crate::{CmdResult, Failure, Outcome};

pub fn noise_model(a: &NoiseArgs) -> CmdResult<NoiseModel> {
    Ok(match a.theta {
        Some(theta) => NoiseModel::bilinear(a.sigma, theta)?,
        None => NoiseModel::flat(a.sigma, a.kernel_size)?,
    })
}

fn rendered_bursts(a: &SynthArgs) -> CmdResult<Vec<(String, Vec<Image>)>> {
    if a.scenes == 0 || a.frames == 0 || a.height == 0 || a.width == 0 || a.channels == 0 {
        return Err(Failure::Usage(
            "scene counts and sizes must be positive".into(),
        ));
    }
    Ok((0..a.scenes)
        .map(|b| {
            let fast = a.fast_every > 0 && (b + 1) % a.fast_every == 0;
            let params = SceneParams {
                channels: a.channels,
                height: a.height,
                width: a.width,
                frames: a.frames,
                motion: if fast { a.fast_motion } else { a.motion },
            };
            let mut rng = Rng::new(derive_seed(a.seed, "scene", b as u64));
            (format!("b{b:03}"), render_burst(&params, &mut rng))
        })
        .collect())
}

fn image_files(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let mut files: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.is_file()
                && p.extension()
                    .and_then(|e| e.to_str())
                    .is_some_and(|e| IMAGE_EXTS.contains(&e))
        })
        .collect();
    files.sort();
    Ok(files)
}

fn clean_bursts(dir: &Path) -> CmdResult<Vec<(String, Vec<Image>)>> {
    let mut dirs = subdirs(dir)?;
    if dirs.is_empty() {
        dirs.push(dir.to_path_buf());
    }
    let mut out = Vec::new();
    for d in dirs {
        let frames = image_files(&d)?
            .iter()
            .map(|p| read_image(p))
            .collect::<CmdResult<Vec<_>>>()?;
        match frames.first() {
            None => return Err(Failure::Runtime(format!("no images in {}", d.display()))),
            Some(f) if frames.iter().any(|g| !g.same_shape(f)) => {
                return Err(Failure::Runtime(format!(
                    "frames in {} differ in shape",
                    d.display()
                )))
            }
            _ => {}
        }
        out.push((file_name(&d)?, frames));
    }
    Ok(out)
}

pub fn synth(a: &SynthArgs) -> CmdResult<Outcome> {
    let model = noise_model(&a.noise)?;
    let bursts = match &a.clean_dir {
        Some(dir) => clean_bursts(dir)?,
        None => rendered_bursts(a)?,
    };
    let mut psnrs = Vec::new();
    for (b, (name, clean)) in bursts.iter().enumerate() {
        let noisy = synth_frames(clean, &model, derive_seed(a.seed, "noise", b as u64))?;
        let dir = a.out.join(name);
        fs::create_dir_all(&dir)?;
        for (i, (x, y)) in clean.iter().zip(&noisy).enumerate() {
            write_pcrf(x, &dir.join(format!("clean_{i}.pcrf")))?;
            write_pcrf(y, &dir.join(format!("noisy_{i}.pcrf")))?;
            psnrs.push(psnr(y, x, 255.0)?);
        }
    }
    Ok(Outcome::ok(json!({
        "command": "synth",
        "bursts": bursts.len(),
        "images": psnrs.len(),
        "noise": model,
        "psnr_mean": mean(&psnrs),
        "out": a.out,
    })))
}

fn input_indices(spec: &str, frames: usize) -> CmdResult<Vec<usize>> {
    if spec == "all" {
        return Ok((0..frames).collect());
    }
    match spec.parse::<usize>() {
        Ok(i) if i < frames => Ok(vec![i]),
        Ok(i) => Err(Failure::Usage(format!(
            "input index {i} out of range for {frames} frames"
        ))),
        Err(_) => Err(Failure::Usage(format!(
            "--input-index expects a number or 'all', got {spec:?}"
        ))),
    }
}

fn load_burst(dir: &Path) -> CmdResult<(Vec<PathBuf>, Burst)> {
    let files = indexed_files(dir, "noisy_")?;
    if files.len() < 2 {
        return Err(Failure::Runtime(format!(
            "{} holds {} noisy frame(s), need at least 2",
            dir.display(),
            files.len()
        )));
    }
    if let Some((pos, (i, _))) = files.iter().enumerate().find(|(pos, (i, _))| pos != i) {
        return Err(Failure::Runtime(format!(
            "{}: frame indices skip from {} to {i}",
            dir.display(),
            pos as i64 - 1
        )));
    }
    let frames = files
        .iter()
        .map(|(_, p)| read_image(p))
        .collect::<CmdResult<Vec<_>>>()?;
    let burst =
        Burst::new(frames, 0).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    Ok((files.into_iter().map(|(_, p)| p).collect(), burst))
}

/// Replaces the record with the same input, or appends.
fn upsert(records: &mut Vec<PairRecord>, record: PairRecord) {
    match records.iter_mut().find(|r| r.input == record.input) {
        Some(slot) => *slot = record,
        None => records.push(record),
    }
}

pub fn craft(a: &CraftArgs) -> CmdResult<Outcome> {
    let n = match (a.patch_size, a.sigma, a.kernel_size) {
        (Some(n), _, _) => n,
        (None, Some(s), Some(k)) => default_patch_size(s, k).ok_or_else(|| {
            Failure::Usage(format!("no tabulated patch size for sigma={s}, k={k}"))
        })?,
        _ => {
            return Err(Failure::Usage(
                "give --patch-size, or --sigma with --kernel-size".into(),
            ))
        }
    };
    CraftParams::new(n, a.search_box, a.knn, a.seed)?;
    fs::create_dir_all(&a.out)?;
    let manifest = a
        .manifest
        .clone()
        .unwrap_or_else(|| a.out.join("manifest.jsonl"));
    if let Some(parent) = manifest.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut records = if manifest.exists() {
        load_manifest(&manifest)?
    } else {
        Vec::new()
    };

    let mut names = HashSet::new();
    let mut distances = Vec::new();
    for dir in &a.burst_dir {
        let name = file_name(dir)?;
        if !names.insert(name.clone()) {
            return Err(Failure::Usage(format!(
                "two burst directories are named {name}"
            )));
        }
        let (paths, burst) = load_burst(dir)?;
        for i in input_indices(&a.input_index, burst.len())? {
            let seed = derive_seed(a.seed, &format!("craft:{name}"), i as u64);
            let params = CraftParams::new(n, a.search_box, a.knn, seed)?;
            let (target, meta) =
                sample_target(&burst.with_input(i)?, &params, &mut Rng::new(seed))?;
            if meta.patches_per_frame[i] != 0 {
                return Err(Failure::Runtime(format!(
                    "{name} frame {i}: target copies the input frame"
                )));
            }
            let stem = format!("{name}_t{i}");
            let target_path = a.out.join(format!("{stem}.pcrf"));
            write_pcrf(&target, &target_path)?;
            write_json(&meta, &a.out.join(format!("{stem}.json")))?;
            upsert(
                &mut records,
                PairRecord {
                    input: manifest_entry(&manifest, &paths[i])?,
                    targets: vec![manifest_entry(&manifest, &target_path)?],
                    offset_used: meta.offset,
                    s_yr: None,
                    retained: None,
                    seed_trail: vec![a.seed, seed],
                },
            );
            distances.push(meta.mean_distance);
        }
    }
    write_manifest(&manifest, &records)?;
    Ok(Outcome::ok(json!({
        "command": "craft",
        "targets": distances.len(),
        "records": records.len(),
        "patch_size": n,
        "search_box": a.search_box,
        "knn": a.knn,
        "mean_distance": mean(&distances),
        "manifest": manifest,
    })))
}

fn pair_syr(manifest: &Path, r: &PairRecord) -> CmdResult<f64> {
    if r.targets.is_empty() {
        return Err(Failure::Runtime(format!("{} has no targets", r.input)));
    }
    let y = read_image(&resolve(manifest, &r.input))?;
    let mut total = 0.0;
    for t in &r.targets {
        let target = read_image(&resolve(manifest, t))?;
        total += cov_syr(&y, &residual(&target, &y)?)?;
    }
    Ok(total / r.targets.len() as f64)
}

pub fn cov(a: &ManifestArgs) -> CmdResult<Outcome> {
    let mut records = load_manifest(&a.manifest)?;
    let values: Vec<f64> = records
        .par_iter()
        .map(|r| pair_syr(&a.manifest, r))
        .collect::<CmdResult<_>>()?;
    for (r, &s) in records.iter_mut().zip(&values) {
        r.s_yr = Some(s);
    }
    write_manifest(&a.manifest, &records)?;
    Ok(Outcome::ok(json!({
        "command": "cov",
        "records": records.len(),
        "mean_s_yr": if values.is_empty() { Value::Null } else { json!(mean(&values)) },
        "min_s_yr": values.iter().copied().reduce(f64::min),
        "max_s_yr": values.iter().copied().reduce(f64::max),
    })))
}

fn collected_syr(records: &[PairRecord]) -> CmdResult<Vec<f64>> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| {
            r.s_yr.ok_or_else(|| {
                Failure::Runtime(format!(
                    "record {i} ({}) has no s_yr; run cov first",
                    r.input
                ))
            })
        })
        .collect()
}

pub fn threshold(a: &ThresholdArgs) -> CmdResult<Outcome> {
    let samples = collected_syr(&load_manifest(&a.manifest)?)?;
    // a violated post-condition is a failed invariant, not a bad argument
    let result = find_smin(&samples).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(path) = &a.histogram {
        let hist = build_histogram(&samples, Binning::FreedmanDiaconis)?;
        fs::write(path, hist.to_csv())?;
    }
    let mut summary = json!({ "command": "threshold" });
    summary.as_object_mut().expect("object literal").extend(
        serde_json::to_value(&result)
            .expect("plain data")
            .as_object()
            .expect("struct")
            .clone(),
    );
    Ok(Outcome::ok(summary))
}

pub fn filter(a: &FilterArgs) -> CmdResult<Outcome> {
    let mut records = load_manifest(&a.manifest)?;
    let s_min = match a.s_min.as_deref() {
        Some("none") => None,
        Some(v) => Some(
            v.parse::<f64>()
                .ok()
                .filter(|x| !x.is_nan())
                .ok_or_else(|| {
                    Failure::Usage(format!("--s-min expects a number or 'none', got {v:?}"))
                })?,
        ),
        None => {
            find_smin(&collected_syr(&records)?)
                .map_err(|e| Failure::Runtime(e.to_string()))?
                .s_min
        }
    };
    filter_pairs(&mut records, s_min).map_err(|e| Failure::Runtime(e.to_string()))?;
    let out = a.out.as_ref().unwrap_or(&a.manifest);
    if out != &a.manifest {
        rebase(&mut records, &a.manifest, out)?;
    }
    write_manifest(out, &records)?;
    Ok(Outcome::ok(json!({
        "command": "filter",
        "s_min": s_min,
        "retained": records.iter().filter(|r| r.is_retained()).count(),
        "total": records.len(),
        "manifest": out,
    })))
}

/// Rewrites relative entries so they resolve the same from `to` as from `from`.
fn rebase(records: &mut [PairRecord], from: &Path, to: &Path) -> CmdResult<()> {
    if let Some(parent) = to.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let fix = |entry: &mut String| -> CmdResult<()> {
        if !Path::new(entry.as_str()).is_absolute() {
            *entry = manifest_entry(to, &resolve(from, entry))?;
        }
        Ok(())
    };
    for r in records.iter_mut() {
        fix(&mut r.input)?;
        for t in &mut r.targets {
            fix(t)?;
        }
    }
    Ok(())
}
