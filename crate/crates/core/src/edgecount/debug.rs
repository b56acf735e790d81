use std::fs;
use std::path::Path;

use super::{CountResult, EdgeError, Mask};
use crate::dataset::{DatasetError, Image};

fn mask_image(m: &Mask) -> Image {
    let pixels = m.data.iter().flat_map(|&b| if b { [255; 3] } else { [0; 3] }).collect();
    Image::new(m.width, m.height, pixels).expect("mask dims")
}

fn put(img: &mut Image, x: i64, y: i64, rgb: [u8; 3]) {
    if x >= 0 && y >= 0 && (x as usize) < img.width() && (y as usize) < img.height() {
        img.set_pixel(x as usize, y as usize, rgb);
    }
}

fn line(img: &mut Image, (x0, y0): (i64, i64), (x1, y1): (i64, i64), rgb: [u8; 3]) {
    let steps = (x1 - x0).abs().max((y1 - y0).abs()).max(1);
    for i in 0..=steps {
        let t = i as f64 / steps as f64;
        let x = x0 as f64 + t * (x1 - x0) as f64;
        let y = y0 as f64 + t * (y1 - y0) as f64;
        put(img, x.round() as i64, y.round() as i64, rgb);
    }
}

/// Writes one PNG per stage: HSV channels as RGB, raw mask, blurred mask,
/// contour, hull with circle, and the finger/wrist arcs.
pub(super) fn dump(r: &CountResult, dir: &Path) -> Result<(), EdgeError> {
    fs::create_dir_all(dir).map_err(|e| DatasetError::Io(dir.to_path_buf(), e))?;
    let hsv = Image::new(r.hsv.width, r.hsv.height, r.hsv.pixels.iter().flatten().copied().collect())?;
    hsv.save_png(dir.join("1-hsv.png"))?;
    mask_image(&r.mask).save_png(dir.join("2-mask.png"))?;
    mask_image(&r.blurred).save_png(dir.join("3-blurred.png"))?;

    let mut contour = mask_image(&r.blurred).dim();
    if let Some(c) = &r.contour {
        for &(x, y) in &c.points {
            put(&mut contour, x, y, [0, 255, 0]);
        }
    }
    contour.save_png(dir.join("4-contour.png"))?;

    let mut hull = contour.clone();
    for (i, &p) in r.hull.iter().enumerate() {
        line(&mut hull, p, r.hull[(i + 1) % r.hull.len()], [255, 0, 0]);
    }
    if let Some(c) = r.circle {
        put(&mut hull, c.cx.round() as i64, c.cy.round() as i64, [255, 255, 0]);
        let n = super::sample_count(c.radius);
        for i in 0..n {
            let t = i as f64 * std::f64::consts::TAU / n as f64;
            put(&mut hull, (c.cx + c.radius * t.cos()).round() as i64, (c.cy + c.radius * t.sin()).round() as i64, [0, 128, 255]);
        }
    }
    hull.save_png(dir.join("5-hull-circle.png"))?;

    let mut arcs = mask_image(r.hand.as_ref().unwrap_or(&r.blurred)).dim();
    if let Some(c) = r.circle {
        for s in &r.segments {
            let finger = r.fingers.contains(s);
            let rgb = if finger { [0, 255, 0] } else { [255, 0, 0] };
            for k in 0..s.samples {
                let t = s.start + s.extent * k as f64 / s.samples as f64;
                put(&mut arcs, (c.cx + c.radius * t.cos()).round() as i64, (c.cy + c.radius * t.sin()).round() as i64, rgb);
            }
        }
    }
    arcs.save_png(dir.join("6-arcs.png"))?;
    Ok(())
}

trait Dim {
    fn dim(self) -> Self;
}

impl Dim for Image {
    /// Quarter brightness, so overlays stand out.
    fn dim(self) -> Image {
        let pixels = self.pixels().iter().map(|&p| p / 4).collect();
        Image::new(self.width(), self.height(), pixels).expect("same dims")
    }
}
