use std::f64::consts::TAU;

use super::hull::Point;
use super::{EdgeError, Mask};

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct HullCircle {
    pub cx: f64,
    pub cy: f64,
    pub radius: f64,
}

/// Area centroid of the hull polygon; radius is `ratio` times the farthest
/// vertex distance.
pub fn hull_circle(hull: &[Point], ratio: f64) -> Result<HullCircle, EdgeError> {
    if hull.len() < 3 {
        return Err(EdgeError::DegenerateHull);
    }
    let (mut a2, mut sx, mut sy) = (0i64, 0i64, 0i64);
    for (i, &(x0, y0)) in hull.iter().enumerate() {
        let (x1, y1) = hull[(i + 1) % hull.len()];
        let c = x0 * y1 - x1 * y0;
        a2 += c;
        sx += (x0 + x1) * c;
        sy += (y0 + y1) * c;
    }
    if a2 == 0 {
        return Err(EdgeError::DegenerateHull);
    }
    let cx = sx as f64 / (3.0 * a2 as f64);
    let cy = sy as f64 / (3.0 * a2 as f64);
    let far = hull
        .iter()
        .map(|&(x, y)| (x as f64 - cx).hypot(y as f64 - cy))
        .fold(0.0, f64::max);
    Ok(HullCircle { cx, cy, radius: ratio * far })
}

/// A run of foreground samples along the circle.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct ArcSegment {
    /// Angle of the first covered sample, radians in `[0, 2π)`, measured
    /// from +x towards +y (clockwise on screen).
    pub start: f64,
    /// Angular extent in radians.
    pub extent: f64,
    /// Number of covered samples.
    pub samples: usize,
}

/// Number of angular samples used for a circle of radius `r`.
pub fn sample_count(r: f64) -> usize {
    ((4.0 * std::f64::consts::PI * r).ceil() as usize).max(360)
}

/// Whether the band of `band` concentric pixel rings around the circle hits
/// the mask at angle `theta`.
fn covered(mask: &Mask, c: &HullCircle, theta: f64, band: usize) -> bool {
    let half = (band / 2) as f64;
    (0..band.max(1)).any(|i| {
        let r = c.radius - half + i as f64;
        let x = (c.cx + r * theta.cos()).round() as i64;
        let y = (c.cy + r * theta.sin()).round() as i64;
        mask.get_signed(x, y)
    })
}

/// Circular runs of covered samples, in angular order.
pub fn circle_band_segments(mask: &Mask, circle: &HullCircle, band: usize) -> Vec<ArcSegment> {
    let n = sample_count(circle.radius);
    let step = TAU / n as f64;
    let on: Vec<bool> = (0..n).map(|i| covered(mask, circle, i as f64 * step, band)).collect();
    let Some(gap) = on.iter().position(|&b| !b) else {
        return if n > 0 { vec![ArcSegment { start: 0.0, extent: TAU, samples: n }] } else { vec![] };
    };
    // Walk once around starting just after a gap so no run wraps.
    let mut segments = Vec::new();
    let mut run: Option<(usize, usize)> = None;
    for k in 1..=n {
        let i = (gap + k) % n;
        match (on[i], run.as_mut()) {
            (true, Some((_, len))) => *len += 1,
            (true, None) => run = Some((i, 1)),
            (false, Some(_)) => {
                let (s, len) = run.take().expect("open run");
                segments.push(ArcSegment { start: s as f64 * step, extent: len as f64 * step, samples: len });
            }
            (false, None) => {}
        }
    }
    segments.sort_by(|a, b| a.start.total_cmp(&b.start));
    segments
}
