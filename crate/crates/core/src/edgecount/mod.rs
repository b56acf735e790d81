//! Classical finger counting: HSV window → blurred mask → largest contour →
//! convex hull → centroid circle → arcs of the circle covered by the hand.
//! Arcs wider than the wrist threshold are the wrist; the rest are fingers.

use std::f64::consts::TAU;
use std::path::Path;

use serde::{Deserialize, Serialize};

mod circle;
mod contour;
mod debug;
mod hsv;
mod hull;
mod mask;

pub use self::circle::{circle_band_segments, hull_circle, sample_count, ArcSegment, HullCircle};
pub use self::contour::{find_contours, label_components, Components, Contour};
pub use self::hsv::{pixel_to_hsv, rgb_to_hsv, HsvImage};
pub use self::hull::{convex_hull, cross, Point};
pub use self::mask::{gaussian_blur, gaussian_kernel, in_range_mask, HsvRange, Mask};

use crate::dataset::{DatasetError, Image};

/// Largest count reported; one above the five a hand can show.
pub const MAX_COUNT: u8 = 6;

#[derive(Debug, thiserror::Error)]
pub enum EdgeError {
    #[error("HSV bounds are inverted: lo {lo:?} > hi {hi:?}")]
    InvertedBounds { lo: [u8; 3], hi: [u8; 3] },
    #[error("blur kernel size {0} must be odd and at least 3")]
    Kernel(usize),
    #[error("blur sigma {0} must be positive")]
    Sigma(f64),
    #[error("convex hull has no area")]
    DegenerateHull,
    #[error("radius ratio {0} must be positive")]
    Ratio(f64),
    #[error(transparent)]
    Image(#[from] DatasetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EdgeConfig {
    pub range: HsvRange,
    pub blur_kernel: usize,
    pub blur_sigma: f64,
    /// Circle radius as a fraction of the farthest hull vertex.
    pub radius_ratio: f64,
    /// Arcs wider than this (radians) are taken as the wrist.
    pub wrist_max_angle: f64,
    /// Thickness of the sampling band in pixels.
    pub band: usize,
    /// Runs shorter than this arc length (pixels) are band aliasing where
    /// the circle grazes an edge, not fingers.
    pub min_segment_px: f64,
}

impl Default for EdgeConfig {
    fn default() -> EdgeConfig {
        EdgeConfig {
            range: HsvRange::default(),
            blur_kernel: 5,
            blur_sigma: 1.0,
            radius_ratio: 0.7,
            wrist_max_angle: 0.25 * TAU,
            band: 3,
            min_segment_px: 5.0,
        }
    }
}

impl EdgeConfig {
    pub fn validate(&self) -> Result<(), EdgeError> {
        self.range.normalized()?;
        gaussian_kernel(self.blur_kernel, self.blur_sigma)?;
        if !(self.radius_ratio > 0.0) {
            return Err(EdgeError::Ratio(self.radius_ratio));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub enum CountOutcome {
    Fingers(u8),
    /// Nothing survived masking and blurring.
    NoHand,
}

impl CountOutcome {
    pub fn count(self) -> Option<u8> {
        match self {
            CountOutcome::Fingers(n) => Some(n),
            CountOutcome::NoHand => None,
        }
    }
}

/// Result of the pipeline plus every intermediate stage.
#[derive(Debug, Clone)]
pub struct CountResult {
    pub outcome: CountOutcome,
    pub hsv: HsvImage,
    pub mask: Mask,
    pub blurred: Mask,
    /// Largest contour, when any.
    pub contour: Option<Contour>,
    /// Mask of the largest component only.
    pub hand: Option<Mask>,
    pub hull: Vec<Point>,
    pub circle: Option<HullCircle>,
    pub segments: Vec<ArcSegment>,
    /// Segments kept as fingers.
    pub fingers: Vec<ArcSegment>,
}

impl CountResult {
    pub fn save_debug(&self, dir: &Path) -> Result<(), EdgeError> {
        debug::dump(self, dir)
    }
}

pub fn count_fingers(img: &Image, config: &EdgeConfig) -> Result<CountResult, EdgeError> {
    config.validate()?;
    let hsv = rgb_to_hsv(img);
    let mask = in_range_mask(&hsv, config.range)?;
    let blurred = gaussian_blur(&mask, config.blur_kernel, config.blur_sigma)?;
    let (mut contours, components) = find_contours(&blurred);
    let mut result = CountResult {
        outcome: CountOutcome::NoHand,
        hsv,
        mask,
        blurred,
        contour: None,
        hand: None,
        hull: Vec::new(),
        circle: None,
        segments: Vec::new(),
        fingers: Vec::new(),
    };
    if contours.is_empty() {
        return Ok(result);
    }
    let contour = contours.swap_remove(0);
    let hand = components.mask_of(contour.label);
    result.hull = convex_hull(&contour.points);
    result.contour = Some(contour);
    // A sliver with no area shows no fingers.
    let circle = match hull_circle(&result.hull, config.radius_ratio) {
        Ok(c) => c,
        Err(EdgeError::DegenerateHull) => {
            result.hand = Some(hand);
            result.outcome = CountOutcome::Fingers(0);
            return Ok(result);
        }
        Err(e) => return Err(e),
    };
    result.segments = circle_band_segments(&hand, &circle, config.band);
    result.fingers = result
        .segments
        .iter()
        .copied()
        .filter(|s| s.extent <= config.wrist_max_angle && s.extent * circle.radius >= config.min_segment_px)
        .collect();
    result.outcome = CountOutcome::Fingers((result.fingers.len() as u8).min(MAX_COUNT));
    result.circle = Some(circle);
    result.hand = Some(hand);
    Ok(result)
}
