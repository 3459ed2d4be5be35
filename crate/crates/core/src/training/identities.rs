//! Procedural face-like identities: an ellipse with eye, brow, nose and mouth
//! blobs. Per-sample jitter, a lower-third occlusion band, and
//! downscale-upscale blur model the nuisance factors of verification data.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::netcore::Image;
use crate::seeds::{item_rng, stage_seed};

pub const FACE_SIDE: usize = 32;

/// Parameters shared by every render of one identity.
#[derive(Debug, Clone, PartialEq)]
pub struct IdentityTemplate {
    pub background: f64,
    pub skin: f64,
    pub face_rx: f64,
    pub face_ry: f64,
    pub eye_dy: f64,
    pub eye_dx: f64,
    pub eye_r: f64,
    pub eye_level: f64,
    pub brow_gap: f64,
    pub brow_tilt: f64,
    pub brow_level: f64,
    pub nose_len: f64,
    pub nose_w: f64,
    pub nose_level: f64,
    pub mouth_dy: f64,
    pub mouth_w: f64,
    pub mouth_h: f64,
    pub mouth_level: f64,
    pub hair: f64,
    pub hair_line: f64,
}

impl IdentityTemplate {

    pub const N_PARAMS: usize = 20;

    /// Parameters in declaration order.
    pub fn to_params(&self) -> [f64; Self::N_PARAMS] {
        [
            self.background,
            self.skin,
            self.face_rx,
            self.face_ry,
            self.eye_dy,
            self.eye_dx,
            self.eye_r,
            self.eye_level,
            self.brow_gap,
            self.brow_tilt,
            self.brow_level,
            self.nose_len,
            self.nose_w,
            self.nose_level,
            self.mouth_dy,
            self.mouth_w,
            self.mouth_h,
            self.mouth_level,
            self.hair,
            self.hair_line,
        ]
    }

    pub fn from_params(p: &[f64; Self::N_PARAMS]) -> Self {
        Self {
            background: p[0],
            skin: p[1],
            face_rx: p[2],
            face_ry: p[3],
            eye_dy: p[4],
            eye_dx: p[5],
            eye_r: p[6],
            eye_level: p[7],
            brow_gap: p[8],
            brow_tilt: p[9],
            brow_level: p[10],
            nose_len: p[11],
            nose_w: p[12],
            nose_level: p[13],
            mouth_dy: p[14],
            mouth_w: p[15],
            mouth_h: p[16],
            mouth_level: p[17],
            hair: p[18],
            hair_line: p[19],
        }
    }
    pub fn sample<R: Rng>(rng: &mut R) -> Self {
        Self {
            background: rng.random_range(0.05..0.3),
            skin: rng.random_range(0.45..0.8),
            face_rx: rng.random_range(9.0..12.5),
            face_ry: rng.random_range(11.5..14.5),
            eye_dy: rng.random_range(-5.5..-2.5),
            eye_dx: rng.random_range(3.0..6.0),
            eye_r: rng.random_range(1.2..2.6),
            eye_level: rng.random_range(0.0..0.25),
            brow_gap: rng.random_range(2.0..4.0),
            brow_tilt: rng.random_range(-0.4..0.4),
            brow_level: rng.random_range(0.0..0.35),
            nose_len: rng.random_range(2.5..6.5),
            nose_w: rng.random_range(0.8..2.2),
            nose_level: rng.random_range(0.85..1.0),
            mouth_dy: rng.random_range(4.5..8.0),
            mouth_w: rng.random_range(2.5..6.5),
            mouth_h: rng.random_range(0.8..2.2),
            mouth_level: rng.random_range(0.0..0.3),
            hair: rng.random_range(0.0..1.0),
            hair_line: rng.random_range(-12.0..-7.0),
        }
    }
}

/// Render nuisance options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RenderOptions {
    /// Scales translation (±1.5 px), brightness (±0.08) and pixel noise (σ 0.03).
    /// Zero renders the bare template.
    pub jitter: f64,
    pub occlude: bool,
    /// Box-downscale factor followed by bilinear upscale; 1 disables it.
    pub downscale: usize,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            jitter: 1.0,
            occlude: false,
            downscale: 1,
        }
    }
}

/// Rows `[start, end)` covered by the scarf-like occlusion band (lower third).
pub fn occlusion_rows() -> (usize, usize) {
    (FACE_SIDE * 2 / 3, FACE_SIDE)
}

fn soft_ellipse(dx: f64, dy: f64, rx: f64, ry: f64) -> f64 {
    let d = ((dx / rx).powi(2) + (dy / ry).powi(2)).sqrt();
    ((1.5 - d) * 2.0).clamp(0.0, 1.0)
}

fn blend(base: f64, value: f64, weight: f64) -> f64 {
    base * (1.0 - weight) + value * weight
}

pub fn render_identity<R: Rng>(t: &IdentityTemplate, opts: &RenderOptions, rng: &mut R) -> Image {
    let n = FACE_SIDE;
    let j = opts.jitter;
    let (ox, oy, gain) = if j > 0.0 {
        (
            rng.random_range(-1.5..1.5) * j,
            rng.random_range(-1.5..1.5) * j,
            1.0 + rng.random_range(-0.08..0.08) * j,
        )
    } else {
        (0.0, 0.0, 1.0)
    };
    let (cx, cy) = (n as f64 / 2.0 + ox, n as f64 / 2.0 + oy);
    let mut values = vec![0.0; n * n];
    for y in 0..n {
        for x in 0..n {
            let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
            let mut v = t.background;
            v = blend(v, t.skin, soft_ellipse(dx, dy, t.face_rx, t.face_ry));
            if dy < t.hair_line + 0.15 * dx.abs() && soft_ellipse(dx, dy, t.face_rx, t.face_ry) > 0.0 {
                v = blend(v, 0.1, t.hair);
            }
            for side in [-1.0, 1.0] {
                let ex = dx - side * t.eye_dx;
                let ey = dy - t.eye_dy;
                v = blend(v, t.eye_level, soft_ellipse(ex, ey, t.eye_r * 1.3, t.eye_r));
                let by = ey + t.brow_gap + side * t.brow_tilt * ex;
                v = blend(v, t.brow_level, soft_ellipse(ex, by, t.eye_r * 1.8, 0.7));
            }
            let ny = dy - t.nose_len / 2.0;
            v = blend(v, t.nose_level, soft_ellipse(dx, ny, t.nose_w, t.nose_len / 2.0) * 0.8);
            v = blend(v, t.mouth_level, soft_ellipse(dx, dy - t.mouth_dy, t.mouth_w, t.mouth_h));
            values[y * n + x] = v;
        }
    }
    if j > 0.0 {
        let noise = rand_distr::Normal::new(0.0, 0.03 * j).expect("positive");
        for v in &mut values {
            *v = *v * gain + rng.sample(noise);
        }
    }
    if opts.occlude {
        let (start, end) = occlusion_rows();
        for y in start..end {
            for x in 0..n {
                // woven scarf texture
                values[y * n + x] = 0.55 + 0.15 * (((x / 2 + y / 2) % 2) as f64);
            }
        }
    }
    if opts.downscale > 1 {
        values = down_up(&values, n, opts.downscale);
    }
    for v in &mut values {
        *v = v.clamp(0.0, 1.0);
    }
    Image::new(1, n, n, values).expect("clamped render")
}

/// Box downscale by `f` then bilinear upscale back to `n×n`.
fn down_up(values: &[f64], n: usize, f: usize) -> Vec<f64> {
    let m = n.div_ceil(f);
    let mut small = vec![0.0; m * m];
    for sy in 0..m {
        for sx in 0..m {
            let (mut acc, mut cnt) = (0.0, 0);
            for y in sy * f..((sy + 1) * f).min(n) {
                for x in sx * f..((sx + 1) * f).min(n) {
                    acc += values[y * n + x];
                    cnt += 1;
                }
            }
            small[sy * m + sx] = acc / cnt as f64;
        }
    }
    let src = |v: usize| ((v as f64 + 0.5) / f as f64 - 0.5).clamp(0.0, (m - 1) as f64);
    let mut out = vec![0.0; n * n];
    for y in 0..n {
        let fy = src(y);
        let (y0, ty) = (fy.floor() as usize, fy - fy.floor());
        let y1 = (y0 + 1).min(m - 1);
        for x in 0..n {
            let fx = src(x);
            let (x0, tx) = (fx.floor() as usize, fx - fx.floor());
            let x1 = (x0 + 1).min(m - 1);
            let top = small[y0 * m + x0] * (1.0 - tx) + small[y0 * m + x1] * tx;
            let bot = small[y1 * m + x0] * (1.0 - tx) + small[y1 * m + x1] * tx;
            out[y * n + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Image-index pair with its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pair {
    pub a: usize,
    pub b: usize,
    pub genuine: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdentityDataset {
    pub templates: Vec<IdentityTemplate>,
    pub images: Vec<Image>,
    /// Identity index of every image.
    pub identity: Vec<usize>,
    /// Occlusion band rows of every image, if occluded.
    pub occlusion: Vec<Option<(usize, usize)>>,
    pub genuine_pairs: Vec<Pair>,
    pub impostor_pairs: Vec<Pair>,
    pub seed: u64,
}

impl IdentityDataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    pub fn n_ids(&self) -> usize {
        self.templates.len()
    }

    /// Genuine then impostor pairs.
    pub fn pairs(&self) -> Vec<Pair> {
        self.genuine_pairs.iter().chain(&self.impostor_pairs).copied().collect()
    }
}

/// Dataset generation options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdentityOptions {
    pub render: RenderOptions,
    /// Every `occlude_every`-th sample of an identity (the probe side of its
    /// genuine pairs) gets the occlusion band; 0 disables it.
    pub occlude_every: usize,
}

impl Default for IdentityOptions {
    fn default() -> Self {
        Self {
            render: RenderOptions::default(),
            occlude_every: 0,
        }
    }
}

pub fn gen_identities(n_ids: usize, n_per_id: usize, seed: u64) -> IdentityDataset {
    gen_identities_with(n_ids, n_per_id, seed, &IdentityOptions::default())
}

/// Generates `n_ids` identities with `n_per_id` renders each.
///
/// Default pair protocol: genuine pairs join consecutive renders of each
/// identity; the same number of impostor pairs join renders of two distinct
/// identities, drawn without repetition.
pub fn gen_identities_with(n_ids: usize, n_per_id: usize, seed: u64, opts: &IdentityOptions) -> IdentityDataset {
    let n_ids = n_ids.max(2);
    let n_per_id = n_per_id.max(1);
    let template_seed = stage_seed(seed, "identity-templates");
    let render_seed = stage_seed(seed, "identity-renders");
    let templates: Vec<IdentityTemplate> = (0..n_ids)
        .map(|i| IdentityTemplate::sample(&mut item_rng(template_seed, i as u64)))
        .collect();
    let mut images = Vec::with_capacity(n_ids * n_per_id);
    let mut identity = Vec::with_capacity(n_ids * n_per_id);
    let mut occlusion = Vec::with_capacity(n_ids * n_per_id);
    for (id, t) in templates.iter().enumerate() {
        for k in 0..n_per_id {
            let index = id * n_per_id + k;
            let occlude = opts.occlude_every > 0 && k % opts.occlude_every == opts.occlude_every - 1;
            let render = RenderOptions { occlude, ..opts.render };
            images.push(render_identity(t, &render, &mut item_rng(render_seed, index as u64)));
            identity.push(id);
            occlusion.push(occlude.then(occlusion_rows));
        }
    }
    let mut genuine_pairs = Vec::new();
    for id in 0..n_ids {
        for k in 0..n_per_id.saturating_sub(1) {
            let a = id * n_per_id + k;
            genuine_pairs.push(Pair { a, b: a + 1, genuine: true });
        }
    }
    let mut rng = item_rng(stage_seed(seed, "identity-pairs"), 0);
    let mut candidates: Vec<(usize, usize)> = Vec::new();
    for a in 0..images.len() {
        for b in (a + 1)..images.len() {
            if identity[a] != identity[b] {
                candidates.push((a, b));
            }
        }
    }
    candidates.shuffle(&mut rng);
    let target = genuine_pairs.len().max(1);
    let mut impostor_pairs: Vec<Pair> = candidates
        .into_iter()
        .take(target)
        .map(|(a, b)| Pair { a, b, genuine: false })
        .collect();
    impostor_pairs.sort_by_key(|p| (p.a, p.b));
    IdentityDataset {
        templates,
        images,
        identity,
        occlusion,
        genuine_pairs,
        impostor_pairs,
        seed,
    }
}
