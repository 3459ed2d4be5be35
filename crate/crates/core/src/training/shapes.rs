//! Four-class synthetic shapes over a noise background, with object masks.

use rand::Rng;

use crate::evaluation::GroundTruthMask;
use crate::netcore::Image;
use crate::seeds::item_rng;

pub const SHAPE_SIDE: usize = 32;
pub const SHAPE_CLASSES: [&str; 4] = ["square", "disk", "triangle", "cross"];

#[derive(Debug, Clone, PartialEq)]
pub struct ShapesDataset {
    pub images: Vec<Image>,
    pub labels: Vec<usize>,
    pub masks: Vec<GroundTruthMask>,
    pub seed: u64,
}

impl ShapesDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

fn inside(class: usize, dx: f64, dy: f64, r: f64) -> bool {
    match class {
        0 => dx.abs() <= 0.8 * r && dy.abs() <= 0.8 * r,
        1 => dx * dx + dy * dy <= r * r,
        // upward-pointing triangle: apex at dy = -r, base at dy = +r
        2 => dy.abs() <= r && dx.abs() <= (dy + r) / 2.0,
        _ => {
            let arm = r / 3.0;
            (dx.abs() <= r && dy.abs() <= arm) || (dy.abs() <= r && dx.abs() <= arm)
        }
    }
}

/// Renders one labelled sample from its own generator stream.
pub fn render_shape(seed: u64, index: u64) -> (Image, usize, GroundTruthMask) {
    let mut rng = item_rng(seed, index);
    let n = SHAPE_SIDE;
    let label = rng.random_range(0..4usize);
    let r: f64 = rng.random_range(5.0..10.0);
    let margin = r + 1.0;
    let cx: f64 = rng.random_range(margin..n as f64 - margin);
    let cy: f64 = rng.random_range(margin..n as f64 - margin);
    let intensity: f64 = rng.random_range(0.65..0.95);
    let mut values = vec![0.0; n * n];
    let mut bits = vec![false; n * n];
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let i = y * n + x;
            let noise: f64 = rng.random_range(0.0..0.25);
            if inside(label, dx, dy, r) {
                bits[i] = true;
                values[i] = (intensity + noise * 0.2).min(1.0);
            } else {
                values[i] = noise;
            }
        }
    }
    let image = Image::new(1, n, n, values).expect("rendered values in [0, 1]");
    let mask = GroundTruthMask::new(n, n, bits).expect("consistent mask");
    (image, label, mask)
}

pub fn gen_shapes(n: usize, seed: u64) -> ShapesDataset {
    let mut ds = ShapesDataset {
        images: Vec::with_capacity(n),
        labels: Vec::with_capacity(n),
        masks: Vec::with_capacity(n),
        seed,
    };
    for i in 0..n.max(1) {
        let (image, label, mask) = render_shape(seed, i as u64);
        ds.images.push(image);
        ds.labels.push(label);
        ds.masks.push(mask);
    }
    ds
}
