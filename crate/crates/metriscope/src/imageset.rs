//! Image sets on disk: one PGM per image, optional mask PGM, and a `set.json`
//! sidecar listing ids, mask files and labels in set order.

use std::fs;
use std::path::{Path, PathBuf};

use metriscope_core::{ImageSet, ImageVolume};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::pgm;

pub const SIDECAR: &str = "set.json";

#[derive(Debug, Serialize, Deserialize)]
struct Sidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    images: Vec<Entry>,
}

#[derive(Debug, Serialize, Deserialize)]
struct Entry {
    id: String,
    mask: Option<String>,
    class_label: Option<u32>,
    source_label: Option<u32>,
}

fn check_id(id: &str) -> Result<()> {
    if id.is_empty() || id.starts_with('.') || id.contains(['/', '\\']) {
        return Err(CliError::Config(format!("image id `{id}` cannot name a file")));
    }
    Ok(())
}

/// Rounds every pixel to the 16-bit grid used on disk.
pub fn quantize_set(set: &ImageSet) -> Result<ImageSet> {
    let images = set
        .images()
        .iter()
        .map(|img| img.with_pixels(img.pixels().iter().map(|&v| pgm::quantize(v)).collect()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ImageSet::new(set.name(), images)?)
}

/// Writes the set into `dir` and returns the paths written, sidecar last.
pub fn write_set(set: &ImageSet, dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let mut written = Vec::new();
    let mut entries = Vec::with_capacity(set.len());
    for img in set.images() {
        check_id(img.id())?;
        let path = dir.join(format!("{}.pgm", img.id()));
        pgm::write(&path, img.width(), img.height(), img.pixels())?;
        written.push(path);
        let mask = match img.mask() {
            Some(m) => {
                let name = format!("{}.mask.pgm", img.id());
                let path = dir.join(&name);
                let px: Vec<f64> = m.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
                pgm::write(&path, img.width(), img.height(), &px)?;
                written.push(path);
                Some(name)
            }
            None => None,
        };
        entries.push(Entry {
            id: img.id().to_string(),
            mask,
            class_label: img.class_label(),
            source_label: img.source_label(),
        });
    }
    let sidecar = Sidecar {
        name: Some(set.name().to_string()),
        images: entries,
    };
    let path = dir.join(SIDECAR);
    let text = serde_json::to_string_pretty(&sidecar).expect("sidecar serialises");
    fs::write(&path, text + "\n").map_err(|e| CliError::io(&path, e))?;
    written.push(path);
    Ok(written)
}

/// Reads a set from its directory or from the sidecar path itself.
pub fn read_set(path: &Path) -> Result<ImageSet> {
    let (dir, sidecar_path) = if path.is_dir() {
        (path.to_path_buf(), path.join(SIDECAR))
    } else {
        (path.parent().unwrap_or(Path::new(".")).to_path_buf(), path.to_path_buf())
    };
    let text = fs::read_to_string(&sidecar_path).map_err(|e| CliError::io(&sidecar_path, e))?;
    let sidecar: Sidecar = serde_json::from_str(&text).map_err(|e| CliError::format(&sidecar_path, e.to_string()))?;
    let mut images = Vec::with_capacity(sidecar.images.len());
    for entry in sidecar.images {
        check_id(&entry.id)?;
        let img_path = dir.join(format!("{}.pgm", entry.id));
        let (w, h, px) = pgm::read(&img_path)?;
        let mut img = ImageVolume::new(entry.id.clone(), w, h, px)?
            .with_class_label(entry.class_label)
            .with_source_label(entry.source_label);
        if let Some(mask_name) = entry.mask {
            let mask_path = dir.join(mask_name);
            let (mw, mh, m) = pgm::read(&mask_path)?;
            if (mw, mh) != (w, h) {
                return Err(CliError::format(&mask_path, "mask shape differs from its image"));
            }
            img = img.with_mask(Some(m.iter().map(|&v| v >= 0.5).collect()))?;
        }
        images.push(img);
    }
    let name = sidecar
        .name
        .unwrap_or_else(|| dir.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default());
    Ok(ImageSet::new(name, images)?)
}
