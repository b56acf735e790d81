use super::{EdgeError, HsvImage};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl Mask {
    pub fn new(width: usize, height: usize) -> Mask {
        Mask { width, height, data: vec![false; width * height] }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> bool) -> Mask {
        let mut m = Mask::new(width, height);
        for y in 0..height {
            for x in 0..width {
                m.data[y * width + x] = f(x, y);
            }
        }
        m
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    /// Out-of-bounds coordinates read as background.
    pub fn get_signed(&self, x: i64, y: i64) -> bool {
        x >= 0 && y >= 0 && (x as usize) < self.width && (y as usize) < self.height && self.get(x as usize, y as usize)
    }

    pub fn set(&mut self, x: usize, y: usize, on: bool) {
        self.data[y * self.width + x] = on;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    pub fn is_empty(&self) -> bool {
        !self.data.iter().any(|&b| b)
    }
}

/// Inclusive HSV window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct HsvRange {
    pub lo: [u8; 3],
    pub hi: [u8; 3],
}

impl Default for HsvRange {
    /// Bright pixels of any hue and saturation.
    fn default() -> HsvRange {
        HsvRange { lo: [0, 0, 90], hi: [179, 255, 255] }
    }
}

impl HsvRange {
    /// Clamps hue bounds to 0..=179 and rejects windows with `lo > hi`.
    pub fn normalized(self) -> Result<HsvRange, EdgeError> {
        let mut r = self;
        r.lo[0] = r.lo[0].min(179);
        r.hi[0] = r.hi[0].min(179);
        if (0..3).any(|c| r.lo[c] > r.hi[c]) {
            return Err(EdgeError::InvertedBounds { lo: self.lo, hi: self.hi });
        }
        Ok(r)
    }
}

pub fn in_range_mask(hsv: &HsvImage, range: HsvRange) -> Result<Mask, EdgeError> {
    let HsvRange { lo, hi } = range.normalized()?;
    let data = hsv.pixels.iter().map(|p| (0..3).all(|c| lo[c] <= p[c] && p[c] <= hi[c])).collect();
    Ok(Mask { width: hsv.width, height: hsv.height, data })
}

/// Normalized 1-D Gaussian weights.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Result<Vec<f64>, EdgeError> {
    if size < 3 || size % 2 == 0 {
        return Err(EdgeError::Kernel(size));
    }
    if !(sigma > 0.0) {
        return Err(EdgeError::Sigma(sigma));
    }
    let half = (size / 2) as f64;
    let w: Vec<f64> = (0..size).map(|i| (-(i as f64 - half).powi(2) / (2.0 * sigma * sigma)).exp()).collect();
    let total: f64 = w.iter().sum();
    Ok(w.into_iter().map(|v| v / total).collect())
}

/// Mirror index without repeating the edge pixel (`dcb|abcd|cba`).
fn reflect101(i: i64, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as i64 - 1);
    let m = i.rem_euclid(period);
    (if m < n as i64 { m } else { period - m }) as usize
}

/// Blurs the mask as a 0/255 image and keeps pixels above 127.
pub fn gaussian_blur(mask: &Mask, size: usize, sigma: f64) -> Result<Mask, EdgeError> {
    let k = gaussian_kernel(size, sigma)?;
    let half = (size / 2) as i64;
    let (w, h) = (mask.width, mask.height);
    let src: Vec<f64> = mask.data.iter().map(|&b| if b { 255.0 } else { 0.0 }).collect();
    let mut tmp = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * src[y * w + reflect101(x as i64 + i as i64 - half, w)])
                .sum();
        }
    }
    let mut out = Mask::new(w, h);
    for y in 0..h {
        for x in 0..w {
            let v: f64 = k
                .iter()
                .enumerate()
                .map(|(i, kv)| kv * tmp[reflect101(y as i64 + i as i64 - half, h) * w + x])
                .sum();
            out.data[y * w + x] = v > 127.0;
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::synth::SilhouetteSpec;
    use crate::edgecount::rgb_to_hsv;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hsv_of(pixels: Vec<[u8; 3]>, width: usize) -> HsvImage {
        HsvImage { width, height: pixels.len() / width, pixels }
    }

    #[test]
    fn full_range_selects_everything() {
        let hsv = hsv_of(vec![[0, 0, 0], [179, 255, 255], [90, 10, 200], [3, 3, 3]], 2);
        let m = in_range_mask(&hsv, HsvRange { lo: [0, 0, 0], hi: [179, 255, 255] }).unwrap();
        assert_eq!(m.count(), 4);
    }

    #[test]
    fn point_window_selects_exact_matches() {
        let hsv = hsv_of(vec![[10, 20, 30], [10, 20, 31], [10, 20, 30], [11, 20, 30]], 4);
        let m = in_range_mask(&hsv, HsvRange { lo: [10, 20, 30], hi: [10, 20, 30] }).unwrap();
        assert_eq!(m.data, [true, false, true, false]);
    }

    #[test]
    fn inverted_window_is_rejected() {
        let hsv = hsv_of(vec![[0, 0, 0]], 1);
        // The literal "lower 255, upper 90" value bounds.
        let r = HsvRange { lo: [0, 0, 255], hi: [179, 255, 90] };
        assert!(matches!(in_range_mask(&hsv, r), Err(EdgeError::InvertedBounds { .. })));
        // Hue bounds past 179 are clamped rather than rejected.
        assert!(in_range_mask(&hsv, HsvRange { lo: [0, 0, 0], hi: [255, 255, 255] }).is_ok());
    }

    #[test]
    fn value_window_recovers_synthetic_hand() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for k in 0..6 {
            let spec = SilhouetteSpec::random(k, &mut rng);
            let m = in_range_mask(&rgb_to_hsv(&spec.render()), HsvRange::default()).unwrap();
            assert_eq!(m.data, spec.mask());
        }
    }

    #[test]
    fn kernel_is_normalized() {
        for (size, sigma) in [(3, 0.5), (5, 1.0), (7, 2.0), (11, 3.5)] {
            let k = gaussian_kernel(size, sigma).unwrap();
            assert!((k.iter().sum::<f64>() - 1.0).abs() < 1e-6);
            let k2: f64 = k.iter().flat_map(|a| k.iter().map(move |b| a * b)).sum();
            assert!((k2 - 1.0).abs() < 1e-6);
        }
        assert!(matches!(gaussian_kernel(4, 1.0), Err(EdgeError::Kernel(4))));
        assert!(matches!(gaussian_kernel(1, 1.0), Err(EdgeError::Kernel(1))));
    }

    #[test]
    fn constant_masks_are_fixed_points() {
        let full = Mask::from_fn(7, 5, |_, _| true);
        assert_eq!(gaussian_blur(&full, 5, 1.0).unwrap(), full);
        let empty = Mask::new(7, 5);
        assert_eq!(gaussian_blur(&empty, 5, 1.0).unwrap(), empty);
    }

    #[test]
    fn isolated_pixel_is_removed() {
        // Its blurred value is 255 times the centre weight of the 2-D kernel.
        let k = gaussian_kernel(5, 1.0).unwrap();
        assert!(255.0 * k[2] * k[2] < 127.0);
        let m = Mask::from_fn(9, 9, |x, y| x == 4 && y == 4);
        assert!(gaussian_blur(&m, 5, 1.0).unwrap().is_empty());
    }

    #[test]
    fn solid_block_survives() {
        let m = Mask::from_fn(20, 20, |x, y| (5..15).contains(&x) && (5..15).contains(&y));
        let b = gaussian_blur(&m, 5, 1.0).unwrap();
        assert!(b.get(10, 10) && b.get(5, 10) && !b.get(2, 2));
    }

    #[test]
    fn reflect_indices() {
        let got: Vec<usize> = (-3..8).map(|i| reflect101(i, 5)).collect();
        assert_eq!(got, [3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
    }
}
