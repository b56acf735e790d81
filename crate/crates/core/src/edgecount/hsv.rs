use crate::dataset::Image;

/// 8-bit HSV: hue in half-degrees `0..=179`, saturation and value `0..=255`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HsvImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<[u8; 3]>,
}

impl HsvImage {
    pub fn get(&self, x: usize, y: usize) -> [u8; 3] {
        self.pixels[y * self.width + x]
    }
}

/// Rounded `num / den` for `den > 0`, halves away from zero.
fn div_round(num: i32, den: i32) -> i32 {
    if num >= 0 {
        (2 * num + den) / (2 * den)
    } else {
        -((-2 * num + den) / (2 * den))
    }
}

pub fn pixel_to_hsv([r, g, b]: [u8; 3]) -> [u8; 3] {
    let (r, g, b) = (r as i32, g as i32, b as i32);
    let v = r.max(g).max(b);
    let min = r.min(g).min(b);
    let diff = v - min;
    if diff == 0 {
        return [0, 0, v as u8];
    }
    let s = div_round(255 * diff, v);
    // Hue in half-degrees: 60° sectors become 30 units.
    let h = if v == r {
        div_round(30 * (g - b), diff)
    } else if v == g {
        60 + div_round(30 * (b - r), diff)
    } else {
        120 + div_round(30 * (r - g), diff)
    };
    let h = h.rem_euclid(180);
    [h as u8, s as u8, v as u8]
}

pub fn rgb_to_hsv(img: &Image) -> HsvImage {
    let pixels = img.pixels().chunks_exact(3).map(|p| pixel_to_hsv([p[0], p[1], p[2]])).collect();
    HsvImage { width: img.width(), height: img.height(), pixels }
}
