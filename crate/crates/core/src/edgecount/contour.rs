use std::collections::VecDeque;

use super::Mask;

/// Outer boundary of one 8-connected foreground component.
#[derive(Debug, Clone, PartialEq)]
pub struct Contour {
    /// Boundary pixels in tracing order; the last is adjacent to the first.
    pub points: Vec<(i64, i64)>,
    /// Pixel count of the component.
    pub area: usize,
    /// Length of the closed boundary polyline.
    pub perimeter: f64,
    /// Component label in the accompanying [`Components`] map.
    pub label: u32,
}

/// Per-pixel component labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Components {
    pub width: usize,
    pub height: usize,
    pub labels: Vec<u32>,
}

impl Components {
    pub fn mask_of(&self, label: u32) -> Mask {
        Mask { width: self.width, height: self.height, data: self.labels.iter().map(|&l| l == label).collect() }
    }
}

/// Clockwise neighbour offsets (y down) starting west.
const RING: [(i64, i64); 8] = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];

pub fn label_components(mask: &Mask) -> (Components, Vec<usize>) {
    let (w, h) = (mask.width, mask.height);
    let mut labels = vec![0u32; w * h];
    let mut areas = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..w * h {
        if !mask.data[start] || labels[start] != 0 {
            continue;
        }
        let label = areas.len() as u32 + 1;
        let mut area = 0;
        labels[start] = label;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            area += 1;
            let (x, y) = ((i % w) as i64, (i / w) as i64);
            for (dx, dy) in RING {
                let (nx, ny) = (x + dx, y + dy);
                if mask.get_signed(nx, ny) {
                    let j = ny as usize * w + nx as usize;
                    if labels[j] == 0 {
                        labels[j] = label;
                        queue.push_back(j);
                    }
                }
            }
        }
        areas.push(area);
    }
    (Components { width: w, height: h, labels }, areas)
}

/// Moore-neighbour tracing from the component's first pixel in raster order,
/// stopping when the starting move repeats.
fn trace(comp: &Components, label: u32, start: (i64, i64)) -> Vec<(i64, i64)> {
    let inside = |(x, y): (i64, i64)| {
        x >= 0
            && y >= 0
            && (x as usize) < comp.width
            && (y as usize) < comp.height
            && comp.labels[y as usize * comp.width + x as usize] == label
    };
    // Raster-first pixel: its west neighbour is background.
    let next = |p: (i64, i64), from: usize| -> Option<(usize, (i64, i64))> {
        (0..8).map(|k| (from + k) % 8).find_map(|d| {
            let q = (p.0 + RING[d].0, p.1 + RING[d].1);
            inside(q).then_some((d, q))
        })
    };
    let mut points = vec![start];
    let Some((first_dir, first)) = next(start, 0) else {
        return points;
    };
    let (mut cur, mut dir) = (first, first_dir);
    loop {
        // Resume the sweep just past the neighbour we came from.
        let back = (dir + 4) % 8;
        let (d, q) = next(cur, (back + 1) % 8).expect("a traced pixel has a neighbour");
        if cur == start && d == first_dir {
            break;
        }
        points.push(cur);
        cur = q;
        dir = d;
    }
    points
}

fn perimeter(points: &[(i64, i64)]) -> f64 {
    if points.len() < 2 {
        return 0.0;
    }
    points
        .iter()
        .zip(points.iter().cycle().skip(1))
        .map(|(a, b)| if a.0 != b.0 && a.1 != b.1 { std::f64::consts::SQRT_2 } else { 1.0 })
        .sum()
}

/// One external contour per 8-connected component, largest area first.
pub fn find_contours(mask: &Mask) -> (Vec<Contour>, Components) {
    let (comp, areas) = label_components(mask);
    let mut firsts = vec![None; areas.len()];
    for (i, &l) in comp.labels.iter().enumerate() {
        if l != 0 && firsts[l as usize - 1].is_none() {
            firsts[l as usize - 1] = Some(((i % comp.width) as i64, (i / comp.width) as i64));
        }
    }
    let mut contours: Vec<Contour> = areas
        .iter()
        .enumerate()
        .map(|(i, &area)| {
            let label = i as u32 + 1;
            let points = trace(&comp, label, firsts[i].expect("non-empty component"));
            Contour { perimeter: perimeter(&points), points, area, label }
        })
        .collect();
    // Stable sort keeps raster order among equal areas.
    contours.sort_by(|a, b| b.area.cmp(&a.area));
    (contours, comp)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn adjacent(a: (i64, i64), b: (i64, i64)) -> bool {
        (a.0 - b.0).abs() <= 1 && (a.1 - b.1).abs() <= 1
    }

    #[test]
    fn empty_mask() {
        assert!(find_contours(&Mask::new(6, 4)).0.is_empty());
    }

    #[test]
    fn full_frame() {
        let m = Mask::from_fn(7, 5, |_, _| true);
        let (c, _) = find_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].area, 35);
        // Boundary ring of a 7x5 rectangle.
        assert_eq!(c[0].points.len(), 2 * 7 + 2 * 5 - 4);
        assert_eq!(c[0].perimeter, 20.0);
    }

    #[test]
    fn two_blocks() {
        let m = Mask::from_fn(12, 6, |x, y| (1..4).contains(&y) && ((1..4).contains(&x) || (7..10).contains(&x)));
        let (c, comp) = find_contours(&m);
        assert_eq!(c.iter().map(|c| c.area).collect::<Vec<_>>(), [9, 9]);
        assert_eq!(c[0].points.len(), 8);
        assert_eq!(comp.mask_of(c[1].label).count(), 9);
        assert!(c[1].points.iter().all(|p| p.0 >= 7));
    }

    #[test]
    fn diagonal_pixels_connect() {
        let m = Mask::from_fn(4, 4, |x, y| x == y);
        let (c, _) = find_contours(&m);
        assert_eq!(c.len(), 1);
        assert_eq!(c[0].area, 4);
        assert_eq!(c[0].points, [(0, 0), (1, 1), (2, 2), (3, 3), (2, 2), (1, 1)]);
    }

    #[test]
    fn single_pixel() {
        let (c, _) = find_contours(&Mask::from_fn(3, 3, |x, y| x == 1 && y == 1));
        assert_eq!(c[0].points, [(1, 1)]);
        assert_eq!(c[0].perimeter, 0.0);
    }

    #[test]
    fn sorted_by_area() {
        let m = Mask::from_fn(10, 10, |x, y| (x < 2 && y < 2) || (x > 4 && y > 4));
        let (c, _) = find_contours(&m);
        assert_eq!(c.iter().map(|c| c.area).collect::<Vec<_>>(), [25, 4]);
    }

    proptest! {
        #[test]
        fn contours_are_closed_boundaries(bits in proptest::collection::vec(any::<bool>(), 64)) {
            let m = Mask::from_fn(8, 8, |x, y| bits[y * 8 + x]);
            let (contours, comp) = find_contours(&m);
            let total: usize = contours.iter().map(|c| c.area).sum();
            prop_assert!(total <= m.count());
            for c in &contours {
                prop_assert!(c.area >= 1);
                let own = comp.mask_of(c.label);
                for w in c.points.windows(2) {
                    prop_assert!(adjacent(w[0], w[1]));
                }
                prop_assert!(adjacent(c.points[0], *c.points.last().unwrap()));
                for &(x, y) in &c.points {
                    prop_assert!(own.get(x as usize, y as usize));
                    // Every traced pixel touches background (or the frame).
                    let edge = RING.iter().any(|(dx, dy)| !own.get_signed(x + dx, y + dy));
                    prop_assert!(edge);
                }
            }
            for w in contours.windows(2) {
                prop_assert!(w[0].area >= w[1].area);
            }
        }
    }
}
