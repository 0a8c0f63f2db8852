//! Overlapping spatial-temporal segmentation at the eye-fixation scale.
//!
//! Segments are `W x H x T` sub-volumes laid out on a stride grid with 50%
//! spatial overlap by default; temporal windows are disjoint and consecutive.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::media::{Clip, ClipMetadata};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SegmentConfig {
    pub seg_width: usize,
    pub seg_height: usize,
    /// Temporal window length in seconds.
    pub seg_duration: f64,
    /// Fraction of spatial overlap between neighbouring segments, in [0, 1).
    pub spatial_overlap: f64,
}

impl Default for SegmentConfig {
    fn default() -> Self {
        SegmentConfig {
            seg_width: 320,
            seg_height: 180,
            seg_duration: 0.5,
            spatial_overlap: 0.5,
        }
    }
}

impl SegmentConfig {
    fn validate(&self) -> Result<()> {
        if self.seg_width == 0 || self.seg_height == 0 {
            return Err(Error::Config("segment dimensions must be positive".into()));
        }
        if self.seg_duration <= 0.0 {
            return Err(Error::Config("segment duration must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.spatial_overlap) {
            return Err(Error::Config(format!(
                "spatial overlap {} outside [0, 1)",
                self.spatial_overlap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SegmentIndex {
    pub w: usize,
    pub h: usize,
    pub t: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentLayout {
    pub cols: usize,
    pub rows: usize,
    pub windows: usize,
    pub x_stride: usize,
    pub y_stride: usize,
    pub frames_per_window: usize,
}

impl SegmentLayout {
    pub fn total(&self) -> usize {
        self.cols * self.rows * self.windows
    }

    pub fn contains(&self, index: SegmentIndex) -> bool {
        index.w < self.cols && index.h < self.rows && index.t < self.windows
    }

    /// Enumerate indices in (t, h, w) row-major order — the canonical
    /// ordering used by score arrays and feature extraction.
    pub fn indices(&self) -> impl Iterator<Item = SegmentIndex> + '_ {
        let (cols, rows, windows) = (self.cols, self.rows, self.windows);
        (0..windows).flat_map(move |t| {
            (0..rows).flat_map(move |h| (0..cols).map(move |w| SegmentIndex { w, h, t }))
        })
    }

    /// Position of `index` in the canonical (t, h, w) ordering.
    pub fn flat_index(&self, index: SegmentIndex) -> usize {
        (index.t * self.rows + index.h) * self.cols + index.w
    }
}

/// A borrowed rectangular, frame-bounded view into a clip.
#[derive(Debug, Clone, Copy)]
pub struct SegmentView<'a> {
    pub clip: &'a Clip,
    pub index: SegmentIndex,
    pub x: usize,
    pub y: usize,
    pub width: usize,
    pub height: usize,
    pub frame_start: usize,
    pub frame_end: usize,
}

impl<'a> SegmentView<'a> {
    pub fn frame_count(&self) -> usize {
        self.frame_end - self.frame_start
    }

    /// Luma sample at segment-relative coordinates, frame relative to the
    /// segment's first frame.
    #[inline]
    pub fn sample(&self, frame_rel: usize, x: usize, y: usize) -> u8 {
        self.clip.frames[self.frame_start + frame_rel]
            .luma
            .sample(self.x + x, self.y + y)
    }
}

/// Compute the segment grid for a clip. The right/bottom remainder that does
/// not fit a full stride step is truncated, and the trailing partial temporal
/// window is dropped.
pub fn layout(metadata: &ClipMetadata, config: &SegmentConfig) -> Result<SegmentLayout> {
    config.validate()?;
    if config.seg_width > metadata.width || config.seg_height > metadata.height {
        return Err(Error::Config(format!(
            "segment {}x{} larger than frame {}x{}",
            config.seg_width, config.seg_height, metadata.width, metadata.height
        )));
    }
    let x_stride = ((config.seg_width as f64) * (1.0 - config.spatial_overlap)).ceil() as usize;
    let y_stride = ((config.seg_height as f64) * (1.0 - config.spatial_overlap)).ceil() as usize;
    if x_stride == 0 || y_stride == 0 {
        return Err(Error::Config("stride rounds to zero".into()));
    }
    let cols = (metadata.width - config.seg_width) / x_stride + 1;
    let rows = (metadata.height - config.seg_height) / y_stride + 1;
    let frames_per_window =
        (config.seg_duration * metadata.frame_rate.as_f64()).round() as usize;
    if frames_per_window == 0 {
        return Err(Error::Config(
            "temporal window shorter than one frame".into(),
        ));
    }
    let mut windows = (metadata.duration() / config.seg_duration).floor() as usize;
    // Rounded frames_per_window can overshoot the clip on fractional
    // T x fps; keep every window fully inside the frame range.
    if metadata.frame_count > 0 {
        windows = windows.min(metadata.frame_count / frames_per_window);
    }
    if windows == 0 {
        return Err(Error::Config(format!(
            "clip of {:.3}s shorter than one {}s window",
            metadata.duration(),
            config.seg_duration
        )));
    }
    Ok(SegmentLayout {
        cols,
        rows,
        windows,
        x_stride,
        y_stride,
        frames_per_window,
    })
}

/// Resolve a segment index to a pixel rectangle and frame range on a clip.
pub fn extract<'a>(
    clip: &'a Clip,
    index: SegmentIndex,
    layout: &SegmentLayout,
    config: &SegmentConfig,
) -> Result<SegmentView<'a>> {
    if !layout.contains(index) {
        return Err(Error::Bounds(format!(
            "segment index ({}, {}, {}) outside {}x{}x{} grid",
            index.w, index.h, index.t, layout.cols, layout.rows, layout.windows
        )));
    }
    Ok(SegmentView {
        clip,
        index,
        x: index.w * layout.x_stride,
        y: index.h * layout.y_stride,
        width: config.seg_width,
        height: config.seg_height,
        frame_start: index.t * layout.frames_per_window,
        frame_end: (index.t + 1) * layout.frames_per_window,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::media::{ChromaLayout, FrameRate};

    fn meta(width: usize, height: usize, fps: u32, seconds: usize) -> ClipMetadata {
        ClipMetadata {
            width,
            height,
            frame_rate: FrameRate { num: fps, den: 1 },
            frame_count: fps as usize * seconds,
            chroma_layout: ChromaLayout::C420,
            bit_depth: 8,
        }
    }

    /// Brute-force position enumeration, independent of the stride formula.
    fn enumerate_positions(extent: usize, seg: usize, stride: usize) -> usize {
        let mut count = 0;
        let mut origin = 0;
        while origin + seg <= extent {
            count += 1;
            origin += stride;
        }
        count
    }

    #[test]
    fn grid_720p_matches_paper_count() {
        let l = layout(&meta(1280, 720, 30, 5), &SegmentConfig::default()).unwrap();
        assert_eq!((l.cols, l.rows, l.windows), (7, 7, 10));
        assert_eq!(l.total(), 490);
        assert_eq!(l.frames_per_window, 15);
    }

    #[test]
    fn grid_1080p_matches_enumeration_oracle() {
        let l = layout(&meta(1920, 1080, 30, 5), &SegmentConfig::default()).unwrap();
        assert_eq!(l.cols, enumerate_positions(1920, 320, 160));
        assert_eq!(l.rows, enumerate_positions(1080, 180, 90));
        assert_eq!((l.cols, l.rows, l.windows), (11, 11, 10));
        assert_eq!(l.total(), 1210);
    }

    #[test]
    fn grid_360p_matches_enumeration_oracle() {
        let l = layout(&meta(640, 360, 30, 5), &SegmentConfig::default()).unwrap();
        assert_eq!(l.cols, enumerate_positions(640, 320, 160));
        assert_eq!((l.cols, l.rows, l.windows), (3, 3, 10));
        assert_eq!(l.total(), 90);
    }

    #[test]
    fn oversized_segment_is_config_error() {
        let cfg = SegmentConfig {
            seg_width: 400,
            ..SegmentConfig::default()
        };
        assert!(matches!(
            layout(&meta(360, 240, 30, 5), &cfg),
            Err(Error::Config(_))
        ));
    }

    fn clip_720p(seconds: usize) -> Clip {
        let planes = (0..30 * seconds)
            .map(|_| crate::media::Plane::filled(1280, 720, 128))
            .collect();
        crate::media::clip_from_luma(
            planes,
            FrameRate { num: 30, den: 1 },
            crate::media::ClipRole::Reference,
        )
        .unwrap()
    }

    #[test]
    fn extract_origin_segment() {
        let clip = clip_720p(5);
        let cfg = SegmentConfig::default();
        let l = layout(&clip.metadata, &cfg).unwrap();
        let v = extract(&clip, SegmentIndex { w: 0, h: 0, t: 0 }, &l, &cfg).unwrap();
        assert_eq!((v.x, v.y, v.width, v.height), (0, 0, 320, 180));
        assert_eq!((v.frame_start, v.frame_end), (0, 15));
    }

    #[test]
    fn extract_far_corner_segment() {
        let clip = clip_720p(5);
        let cfg = SegmentConfig::default();
        let l = layout(&clip.metadata, &cfg).unwrap();
        let v = extract(&clip, SegmentIndex { w: 6, h: 6, t: 9 }, &l, &cfg).unwrap();
        assert_eq!((v.x, v.y), (960, 540));
        assert_eq!((v.frame_start, v.frame_end), (135, 150));
        // Rectangle stays inside the frame.
        assert!(v.x + v.width <= 1280 && v.y + v.height <= 720);
    }

    #[test]
    fn extract_out_of_grid_is_bounds_error() {
        let clip = clip_720p(5);
        let cfg = SegmentConfig::default();
        let l = layout(&clip.metadata, &cfg).unwrap();
        assert!(matches!(
            extract(&clip, SegmentIndex { w: 7, h: 0, t: 0 }, &l, &cfg),
            Err(Error::Bounds(_))
        ));
    }

    #[test]
    fn interior_pixels_covered_at_least_four_times() {
        let cfg = SegmentConfig::default();
        let l = layout(&meta(1280, 720, 30, 5), &cfg).unwrap();
        let mut coverage = vec![0u8; 1280 * 720];
        for h in 0..l.rows {
            for w in 0..l.cols {
                for y in h * l.y_stride..h * l.y_stride + cfg.seg_height {
                    for x in w * l.x_stride..w * l.x_stride + cfg.seg_width {
                        coverage[y * 1280 + x] += 1;
                    }
                }
            }
        }
        // Reachable area is the grid span; the right/bottom remainder bands
        // (none for 720p) are excluded by construction.
        let span_x = (l.cols - 1) * l.x_stride + cfg.seg_width;
        let span_y = (l.rows - 1) * l.y_stride + cfg.seg_height;
        assert_eq!((span_x, span_y), (1280, 720));
        for y in 0..span_y {
            for x in 0..span_x {
                assert!(coverage[y * 1280 + x] >= 1);
            }
        }
        // Interior pixels sit inside four overlapping segments.
        for y in cfg.seg_height..span_y - cfg.seg_height {
            for x in cfg.seg_width..span_x - cfg.seg_width {
                assert!(coverage[y * 1280 + x] >= 4, "({x},{y})");
            }
        }
    }

    #[test]
    fn temporal_windows_are_disjoint_and_consecutive() {
        let cfg = SegmentConfig::default();
        let clip = clip_720p(5);
        let l = layout(&clip.metadata, &cfg).unwrap();
        let mut prev_end = 0;
        for t in 0..l.windows {
            let v = extract(&clip, SegmentIndex { w: 0, h: 0, t }, &l, &cfg).unwrap();
            assert_eq!(v.frame_start, prev_end);
            prev_end = v.frame_end;
        }
        assert!(prev_end <= clip.metadata.frame_count);
    }

    #[test]
    fn layout_is_deterministic() {
        let m = meta(1280, 720, 30, 5);
        let cfg = SegmentConfig::default();
        assert_eq!(layout(&m, &cfg).unwrap(), layout(&m, &cfg).unwrap());
    }

    #[test]
    fn fractional_window_rounds_and_never_overruns() {
        // 15 fps, T=0.5s -> 7.5 frames per window, rounds to 8.
        let m = meta(640, 360, 15, 2); // 30 frames
        let l = layout(&m, &SegmentConfig::default()).unwrap();
        assert_eq!(l.frames_per_window, 8);
        assert!(l.windows * l.frames_per_window <= m.frame_count);
    }
}
