use std::fs;
use std::path::{Path, PathBuf};

use pcst::image::{load_image, load_tensor, save_tensor, Image};
use pcst::manifest::{read_manifest, PairRecord};
use serde::Serialize;

use crate::{CmdResult, Failure};

pub const IMAGE_EXTS: [&str; 3] = ["pcrf", "pgm", "ppm"];

/// Loads PCRF, PGM or PPM by extension.
pub fn read_image(path: &Path) -> CmdResult<Image> {
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let img = match ext {
        "pgm" | "ppm" => load_image(path),
        _ => load_tensor(path).and_then(Image::from_tensor),
    };
    img.map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

pub fn write_pcrf(img: &Image, path: &Path) -> CmdResult<()> {
    save_tensor(&img.to_tensor(), path)?;
    Ok(())
}

pub fn write_json(value: &impl Serialize, path: &Path) -> CmdResult<()> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Files named `<prefix><index>.<ext>` in `dir`, sorted by index.
pub fn indexed_files(dir: &Path, prefix: &str) -> CmdResult<Vec<(usize, PathBuf)>> {
    let mut found = Vec::new();
    for entry in
        fs::read_dir(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?
    {
        let path = entry?.path();
        let ext_ok = path
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| IMAGE_EXTS.contains(&e));
        let index = path
            .file_stem()
            .and_then(|s| s.to_str())
            .and_then(|s| s.strip_prefix(prefix))
            .and_then(|s| s.parse::<usize>().ok());
        if let (true, Some(i)) = (ext_ok, index) {
            found.push((i, path));
        }
    }
    found.sort();
    if let Some(w) = found.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Failure::Runtime(format!(
            "two files for {prefix}{} in {}",
            w[0].0,
            dir.display()
        )));
    }
    Ok(found)
}

/// Subdirectories of `dir`, sorted by name.
pub fn subdirs(dir: &Path) -> CmdResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in
        fs::read_dir(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?
    {
        let path = entry?.path();
        if path.is_dir() {
            out.push(path);
        }
    }
    out.sort();
    Ok(out)
}

/// How `file` is written into a manifest at `manifest`: relative to the
/// manifest's directory, so a dataset can move as a whole.
pub fn manifest_entry(manifest: &Path, file: &Path) -> CmdResult<String> {
    let file =
        fs::canonicalize(file).map_err(|e| Failure::Runtime(format!("{}: {e}", file.display())))?;
    let base = manifest
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    let base = fs::canonicalize(base)?;
    let chosen = pathdiff::diff_paths(&file, &base).unwrap_or(file);
    chosen
        .to_str()
        .map(str::to_owned)
        .ok_or_else(|| Failure::Runtime(format!("non UTF-8 path {}", chosen.display())))
}

pub fn file_name(path: &Path) -> CmdResult<String> {
    let canonical =
        fs::canonicalize(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
    canonical
        .file_name()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Failure::Runtime(format!("{} has no usable name", path.display())))
}

pub fn load_manifest(path: &Path) -> CmdResult<Vec<PairRecord>> {
    read_manifest(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}
