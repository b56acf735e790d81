//! Synthetic hand silhouettes with a known finger count.
//!
//! A silhouette is an egg-shaped palm, flatter on top and drawn out below
//! where a wrist would be, with `k` finger capsules in distinct angular
//! slots. There is no rotation; only position, scale, finger lengths and
//! intensities vary. Everything stays inside the frame, so whole-pixel moves
//! within the margin keep the shape intact.

use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DatasetError, DatasetManifest, Hand, Image, ManifestEntry, Result, Split, NUM_LABELS};

pub const CANVAS: usize = 128;

/// Finger directions in degrees clockwise from straight up.
pub const SLOTS: [f64; 5] = [-50.0, -25.0, 0.0, 25.0, 50.0];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Finger {
    /// Radians clockwise from straight up.
    pub angle: f64,
    /// Base and tip distance from the palm centre.
    pub base: f64,
    pub tip: f64,
    pub half_width: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SilhouetteSpec {
    pub width: usize,
    pub height: usize,
    pub cx: f64,
    pub cy: f64,
    /// Palm half-width, and its extent above and below the centre.
    pub palm_rx: f64,
    pub palm_ry: f64,
    pub palm_ry_bottom: f64,
    pub fingers: Vec<Finger>,
    pub foreground: [u8; 3],
    pub background: [u8; 3],
    pub noise: u8,
    pub noise_seed: u64,
}

impl SilhouetteSpec {
    /// A random hand with `k` raised fingers.
    pub fn random(k: usize, rng: &mut impl Rng) -> SilhouetteSpec {
        assert!(k < NUM_LABELS, "at most five fingers");
        let s = rng.random_range(0.85..1.1);
        let p = 19.0 * s;
        let mut slots: Vec<usize> = sample(rng, SLOTS.len(), k).into_vec();
        slots.sort_unstable();
        let fingers = slots
            .into_iter()
            .map(|i| {
                let jitter = rng.random_range(-2.5..2.5);
                Finger {
                    angle: (SLOTS[i] + jitter).to_radians(),
                    base: 0.5 * p,
                    tip: rng.random_range(1.6..1.9) * p,
                    half_width: rng.random_range(0.17..0.21) * p,
                }
            })
            .collect();
        let level: u8 = rng.random_range(150..=255);
        let tint = [0, 1, 2].map(|_| rng.random_range(0.85..=1.0));
        let peak = rng.random_range(0..3);
        let mut foreground = tint.map(|t: f64| (level as f64 * t).round() as u8);
        foreground[peak] = level;
        let dark: u8 = rng.random_range(0..=60);
        let background = [0, 1, 2].map(|_| dark.saturating_sub(rng.random_range(0..=10)));
        SilhouetteSpec {
            width: CANVAS,
            height: CANVAS,
            cx: CANVAS as f64 / 2.0 + rng.random_range(-3.0..3.0),
            cy: 72.0 + rng.random_range(-2.5..2.5),
            palm_rx: 1.2 * p,
            palm_ry: 0.8 * p,
            palm_ry_bottom: 1.4 * p,
            fingers,
            foreground,
            background,
            noise: 10,
            noise_seed: rng.random(),
        }
    }

    pub fn finger_count(&self) -> usize {
        self.fingers.len()
    }

    /// The same hand moved by whole pixels.
    pub fn translated(&self, dx: i32, dy: i32) -> SilhouetteSpec {
        SilhouetteSpec { cx: self.cx + dx as f64, cy: self.cy + dy as f64, ..self.clone() }
    }

    /// Whether the point `(x, y)` (image coordinates) lies on the hand.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (u, v) = (x - self.cx, y - self.cy);
        let ry = if v < 0.0 { self.palm_ry } else { self.palm_ry_bottom };
        if (u / self.palm_rx).powi(2) + (v / ry).powi(2) <= 1.0 {
            return true;
        }
        self.fingers.iter().any(|f| {
            let (dx, dy) = (f.angle.sin(), -f.angle.cos());
            let along = (u * dx + v * dy).clamp(f.base, f.tip);
            let (px, py) = (u - along * dx, v - along * dy);
            px * px + py * py <= f.half_width * f.half_width
        })
    }

    /// Ground-truth foreground, sampled at pixel centres.
    pub fn mask(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.width * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                out.push(self.contains(x as f64 + 0.5, y as f64 + 0.5));
            }
        }
        out
    }

    pub fn render(&self) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(self.noise_seed);
        let mask = self.mask();
        let mut pixels = Vec::with_capacity(3 * mask.len());
        for &on in &mask {
            let base = if on { self.foreground } else { self.background };
            for c in base {
                let n = rng.random_range(-(self.noise as i32)..=self.noise as i32);
                pixels.push((c as i32 + n).clamp(0, 255) as u8);
            }
        }
        Image::new(self.width, self.height, pixels).expect("canvas is non-empty")
    }
}

/// Seeded silhouettes, `n_per_class` for each label, in label-major order.
pub fn synth_specs(n_per_class: usize, seed: u64) -> Vec<SilhouetteSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..NUM_LABELS)
        .flat_map(|k| (0..n_per_class).map(move |_| k))
        .map(|k| SilhouetteSpec::random(k, &mut rng))
        .collect()
}

/// Renders `n_per_class` images per label into `out/<label>/NNNNN.png` and
/// writes the manifest. The last `val_per_class` images of each label are
/// tagged as validation.
pub fn synth_generate_split(
    n_per_class: usize,
    val_per_class: usize,
    seed: u64,
    out: &Path,
) -> Result<DatasetManifest> {
    if n_per_class == 0 {
        return Err(DatasetError::NoSamples);
    }
    let mut entries = Vec::with_capacity(n_per_class * NUM_LABELS);
    for (i, spec) in synth_specs(n_per_class, seed).iter().enumerate() {
        let label = spec.finger_count();
        let index = i % n_per_class;
        let dir = out.join(label.to_string());
        if index == 0 {
            fs::create_dir_all(&dir).map_err(|e| DatasetError::Io(dir.clone(), e))?;
        }
        let name = format!("{index:05}.png");
        spec.render().save_png(dir.join(&name))?;
        let split = if index + val_per_class >= n_per_class { Split::Val } else { Split::Train };
        entries.push(ManifestEntry { path: format!("{label}/{name}"), label: label as u8, hand: Hand::Unknown, split });
    }
    let manifest = DatasetManifest::new(out, entries)?;
    manifest.write()?;
    Ok(manifest)
}

pub fn synth_generate(n_per_class: usize, seed: u64, out: &Path) -> Result<DatasetManifest> {
    synth_generate_split(n_per_class, 0, seed, out)
}
