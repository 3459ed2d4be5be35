//! Dataset archives: a directory of PGM images plus a line-oriented manifest.
//!
//! ```text
//! fame-dataset 1
//! kind shapes | identities
//! seed <u64>
//! image <file> label <k> mask <file>               (shapes)
//! template <id> <p_1> ... <p_n>                     (identities)
//! image <file> identity <id> occlusion none|<r0>:<r1>
//! pair <a> <b> genuine|impostor
//! ```
//!
//! Pixel values are quantized to 8 bits on write.

use std::path::Path;

use crate::evaluation::GroundTruthMask;
use crate::training::{IdentityDataset, IdentityTemplate, Pair, ShapesDataset};

use super::pnm::{decode_pnm, encode_pnm};
use super::{read_bytes, write_bytes, IoError};
use crate::netcore::Image;

pub const MANIFEST: &str = "manifest.txt";
const HEADER: &str = "fame-dataset 1";

#[derive(Debug, Clone, PartialEq)]
pub enum Archive {
    Shapes(ShapesDataset),
    Identities(IdentityDataset),
}

pub fn write_shapes_archive(dir: &Path, ds: &ShapesDataset) -> Result<(), IoError> {
    let mut manifest = format!("{HEADER}\nkind shapes\nseed {}\n", ds.seed);
    for (i, ((img, label), mask)) in ds.images.iter().zip(&ds.labels).zip(&ds.masks).enumerate() {
        let image_file = format!("images/{i:05}.pgm");
        let mask_file = format!("masks/{i:05}.pgm");
        write_bytes(&dir.join(&image_file), &encode_pnm(img))?;
        let bits: Vec<f64> = mask.bits().iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        write_bytes(&dir.join(&mask_file), &encode_pnm(&Image::new(1, mask.height(), mask.width(), bits)?))?;
        manifest.push_str(&format!("image {image_file} label {label} mask {mask_file}\n"));
    }
    write_bytes(&dir.join(MANIFEST), manifest.as_bytes())
}

pub fn write_identity_archive(dir: &Path, ds: &IdentityDataset) -> Result<(), IoError> {
    let mut manifest = format!("{HEADER}\nkind identities\nseed {}\n", ds.seed);
    for (id, t) in ds.templates.iter().enumerate() {
        let params: Vec<String> = t.to_params().iter().map(|v| v.to_string()).collect();
        manifest.push_str(&format!("template {id} {}\n", params.join(" ")));
    }
    for (i, img) in ds.images.iter().enumerate() {
        let file = format!("images/{i:05}.pgm");
        write_bytes(&dir.join(&file), &encode_pnm(img))?;
        let occ = ds.occlusion[i].map_or("none".to_string(), |(a, b)| format!("{a}:{b}"));
        manifest.push_str(&format!("image {file} identity {} occlusion {occ}\n", ds.identity[i]));
    }
    for p in ds.pairs() {
        let label = if p.genuine { "genuine" } else { "impostor" };
        manifest.push_str(&format!("pair {} {} {label}\n", p.a, p.b));
    }
    write_bytes(&dir.join(MANIFEST), manifest.as_bytes())
}

fn num<T: std::str::FromStr>(tok: Option<&str>, line: usize) -> Result<T, IoError> {
    tok.and_then(|t| t.parse().ok())
        .ok_or_else(|| IoError::Format(format!("{MANIFEST} line {line}: expected a number")))
}

fn expect(tok: Option<&str>, word: &str, line: usize) -> Result<(), IoError> {
    if tok == Some(word) {
        Ok(())
    } else {
        Err(IoError::Format(format!("{MANIFEST} line {line}: expected `{word}`")))
    }
}

pub fn read_archive(dir: &Path) -> Result<Archive, IoError> {
    let bytes = read_bytes(&dir.join(MANIFEST))?;
    let text = String::from_utf8(bytes).map_err(|_| IoError::Format(format!("{MANIFEST} is not UTF-8")))?;
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())).filter(|(_, l)| !l.is_empty());
    if lines.next().map(|(_, l)| l) != Some(HEADER) {
        return Err(IoError::Format(format!("{MANIFEST}: missing `{HEADER}` header")));
    }
    let kind = match lines.next() {
        Some((_, "kind shapes")) => "shapes",
        Some((_, "kind identities")) => "identities",
        _ => return Err(IoError::Format(format!("{MANIFEST}: missing or unknown `kind` line"))),
    };
    let seed: u64 = match lines.next() {
        Some((n, l)) => {
            let mut t = l.split_whitespace();
            expect(t.next(), "seed", n)?;
            num(t.next(), n)?
        }
        None => return Err(IoError::Format(format!("{MANIFEST}: missing seed"))),
    };
    let load = |file: &str| -> Result<Image, IoError> {
        let path = dir.join(file);
        decode_pnm(&read_bytes(&path)?).map_err(|e| e.at_path(&path))
    };
    if kind == "shapes" {
        let mut ds = ShapesDataset {
            images: vec![],
            labels: vec![],
            masks: vec![],
            seed,
        };
        for (n, l) in lines {
            let mut t = l.split_whitespace();
            expect(t.next(), "image", n)?;
            let image = load(t.next().unwrap_or_default())?;
            expect(t.next(), "label", n)?;
            let label: usize = num(t.next(), n)?;
            expect(t.next(), "mask", n)?;
            let m = load(t.next().unwrap_or_default())?;
            let bits = m.values().iter().map(|&v| v >= 0.5).collect();
            let mask = GroundTruthMask::new(m.height(), m.width(), bits)
                .map_err(|e| IoError::Format(format!("{MANIFEST} line {n}: {e}")))?;
            ds.images.push(image);
            ds.labels.push(label);
            ds.masks.push(mask);
        }
        return Ok(Archive::Shapes(ds));
    }
    let mut ds = IdentityDataset {
        templates: vec![],
        images: vec![],
        identity: vec![],
        occlusion: vec![],
        genuine_pairs: vec![],
        impostor_pairs: vec![],
        seed,
    };
    for (n, l) in lines {
        let mut t = l.split_whitespace();
        match t.next() {
            Some("template") => {
                let id: usize = num(t.next(), n)?;
                if id != ds.templates.len() {
                    return Err(IoError::Format(format!("{MANIFEST} line {n}: templates out of order")));
                }
                let mut p = [0.0; IdentityTemplate::N_PARAMS];
                for v in p.iter_mut() {
                    *v = num(t.next(), n)?;
                }
                ds.templates.push(IdentityTemplate::from_params(&p));
            }
            Some("image") => {
                ds.images.push(load(t.next().unwrap_or_default())?);
                expect(t.next(), "identity", n)?;
                let id: usize = num(t.next(), n)?;
                if id >= ds.templates.len() {
                    return Err(IoError::Format(format!("{MANIFEST} line {n}: unknown identity {id}")));
                }
                ds.identity.push(id);
                expect(t.next(), "occlusion", n)?;
                ds.occlusion.push(match t.next() {
                    Some("none") => None,
                    Some(r) => {
                        let (a, b) = r
                            .split_once(':')
                            .ok_or_else(|| IoError::Format(format!("{MANIFEST} line {n}: bad occlusion")))?;
                        Some((num(Some(a), n)?, num(Some(b), n)?))
                    }
                    None => return Err(IoError::Format(format!("{MANIFEST} line {n}: missing occlusion"))),
                });
            }
            Some("pair") => {
                let a: usize = num(t.next(), n)?;
                let b: usize = num(t.next(), n)?;
                let genuine = match t.next() {
                    Some("genuine") => true,
                    Some("impostor") => false,
                    _ => return Err(IoError::Format(format!("{MANIFEST} line {n}: bad pair label"))),
                };
                if a >= ds.images.len() || b >= ds.images.len() || a == b {
                    return Err(IoError::Format(format!("{MANIFEST} line {n}: invalid pair {a} {b}")));
                }
                let p = Pair { a, b, genuine };
                if genuine {
                    ds.genuine_pairs.push(p);
                } else {
                    ds.impostor_pairs.push(p);
                }
            }
            _ => return Err(IoError::Format(format!("{MANIFEST} line {n}: unknown record"))),
        }
    }
    Ok(Archive::Identities(ds))
}
