//! Attribution map files: an 8-bit PGM render plus an exact CSV sidecar, and
//! heatmap overlays.

use std::path::{Path, PathBuf};

use crate::attribution::AttributionMap;
use crate::netcore::Image;

use super::pnm::{encode_pnm, to_byte};
use super::{read_bytes, write_bytes, IoError};

/// Paths written by [`write_attribution`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AttributionFiles {
    pub pgm: PathBuf,
    pub csv: PathBuf,
}

/// Writes `{stem}.pgm` (`round(255 v)`) and `{stem}.csv` (one row per image
/// row, shortest round-trip float formatting).
pub fn write_attribution(map: &AttributionMap, stem: &Path) -> Result<AttributionFiles, IoError> {
    let (h, w) = map.dims();
    let img = Image::new(1, h, w, map.values().to_vec())?;
    let pgm = stem.with_extension("pgm");
    let csv = stem.with_extension("csv");
    write_bytes(&pgm, &encode_pnm(&img))?;
    let mut text = String::with_capacity(h * w * 8);
    for row in map.values().chunks(w) {
        let cells: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        text.push_str(&cells.join(","));
        text.push('\n');
    }
    write_bytes(&csv, text.as_bytes())?;
    Ok(AttributionFiles { pgm, csv })
}

pub fn read_attribution_csv(path: &Path) -> Result<AttributionMap, IoError> {
    let bytes = read_bytes(path)?;
    let text = std::str::from_utf8(&bytes).map_err(|_| IoError::Format(format!("{}: not UTF-8", path.display())))?;
    let mut values = Vec::new();
    let mut width = None;
    let mut height = 0;
    for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let row: Vec<f64> = line
            .split(',')
            .map(|c| c.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| IoError::Format(format!("{} line {}: {e}", path.display(), n + 1)))?;
        if *width.get_or_insert(row.len()) != row.len() {
            return Err(IoError::Format(format!("{} line {}: ragged row", path.display(), n + 1)));
        }
        values.extend(row);
        height += 1;
    }
    let width = width.ok_or_else(|| IoError::Format(format!("{}: empty map", path.display())))?;
    AttributionMap::new(height, width, values).map_err(|e| IoError::Format(format!("{}: {e}", path.display())))
}

/// Colormap from blue (0) to red (1), blended at 0.5 over the grayscale
/// version of `image`. Returns a 3-channel image.
pub fn overlay_image(map: &AttributionMap, image: &Image) -> Result<Image, IoError> {
    let [c, h, w] = image.dims();
    if map.dims() != (h, w) {
        return Err(IoError::Format(format!(
            "overlay of a {:?} map on a {h}×{w} image",
            map.dims()
        )));
    }
    let n = h * w;
    let v = image.values();
    let mut out = vec![0.0; 3 * n];
    for i in 0..n {
        let base = (0..c).map(|ch| v[ch * n + i]).sum::<f64>() / c as f64;
        let a = map.values()[i];
        let color = [a, 0.0, 1.0 - a];
        for ch in 0..3 {
            out[ch * n + i] = 0.5 * base + 0.5 * color[ch];
        }
    }
    Ok(Image::new(3, h, w, out)?)
}

pub fn overlay(map: &AttributionMap, image: &Image, path: &Path) -> Result<(), IoError> {
    let img = overlay_image(map, image)?;
    write_bytes(path, &encode_pnm(&img))
}

/// PGM byte of a map value.
pub fn map_byte(v: f64) -> u8 {
    to_byte(v)
}
