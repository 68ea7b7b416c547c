//! Visual token accounting and position planning for multimodal samples.
//!
//! Images are tiled on a ceiling grid of fixed-size tiles, each tile encoded
//! as a constant number of visual tokens after 2x2 pixel unshuffle. Position
//! indices advance by 1 per text token and by a fractional increment delta
//! per visual token, so a long slice series or frame sequence occupies a
//! compressed span of the positional space. [`budget_check`] combines both
//! to decide whether a sample fits a context budget.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sample::{strip_media_placeholders, MediaRef, VqaSample};

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("delta must be in (0, 1], got {0}")]
    DeltaOutOfRange(f64),
    #[error("tile geometry invalid: tile size {tile_size} not divisible by patch size {patch_size}")]
    BadTileGeometry { tile_size: u32, patch_size: u32 },
    #[error("cannot resolve dimensions of {path}: {source}")]
    UnresolvableMedia {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("video {uri} has no recorded frame size")]
    MissingFrameSize { uri: String },
}

/// Tiling geometry. Defaults: 448 px tiles, 14 px patches, 2x2 pixel
/// unshuffle, at most 12 tiles per image.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileConfig {
    pub tile_size: u32,
    pub patch_size: u32,
    /// Pixel unshuffle merges `unshuffle x unshuffle` patch blocks into one
    /// token, dividing the token count by its square.
    pub unshuffle: u32,
    pub max_tiles: u32,
}

impl Default for TileConfig {
    fn default() -> Self {
        TileConfig { tile_size: 448, patch_size: 14, unshuffle: 2, max_tiles: 12 }
    }
}

impl TileConfig {
    /// Visual tokens produced per tile. 448/14 = 32 patches per side, 1024
    /// patches per tile, divided by 4 after unshuffle: 256.
    pub fn tokens_per_tile(&self) -> Result<u32, GeometryError> {
        if !self.tile_size.is_multiple_of(self.patch_size) {
            return Err(GeometryError::BadTileGeometry {
                tile_size: self.tile_size,
                patch_size: self.patch_size,
            });
        }
        let per_side = self.tile_size / self.patch_size;
        Ok(per_side * per_side / (self.unshuffle * self.unshuffle))
    }
}

/// Tiling outcome for one image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilePlan {
    pub width: u32,
    pub height: u32,
    pub tiles_wide: u32,
    pub tiles_high: u32,
    pub tile_count: u32,
    pub tokens_per_tile: u32,
    pub total_tokens: u32,
}

/// Plans the tile grid for a `width` x `height` image.
///
/// The grid is `ceil(w/tile) x ceil(h/tile)`. When that exceeds
/// `max_tiles`, the image is treated as resized (aspect preserved) onto the
/// largest grid that fits the cap: the longer grid axis is shrunk first
/// until the product fits.
pub fn plan_tiles(width: u32, height: u32, cfg: &TileConfig) -> Result<TilePlan, GeometryError> {
    assert!(width > 0 && height > 0, "image dimensions must be positive");
    let tokens_per_tile = cfg.tokens_per_tile()?;
    let mut tiles_wide = width.div_ceil(cfg.tile_size).max(1);
    let mut tiles_high = height.div_ceil(cfg.tile_size).max(1);
    while tiles_wide * tiles_high > cfg.max_tiles.max(1) {
        if tiles_wide >= tiles_high && tiles_wide > 1 {
            tiles_wide -= 1;
        } else if tiles_high > 1 {
            tiles_high -= 1;
        } else {
            break;
        }
    }
    let tile_count = tiles_wide * tiles_high;
    Ok(TilePlan {
        width,
        height,
        tiles_wide,
        tiles_high,
        tile_count,
        tokens_per_tile,
        total_tokens: tile_count * tokens_per_tile,
    })
}

/// Position increment policy: text advances by 1, visual by `delta`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionConfig {
    pub delta: f64,
}

impl PositionConfig {
    pub fn new(delta: f64) -> Result<Self, GeometryError> {
        if !(delta > 0.0 && delta <= 1.0) {
            return Err(GeometryError::DeltaOutOfRange(delta));
        }
        Ok(PositionConfig { delta })
    }
}

impl Default for PositionConfig {
    /// delta = 0.25, mirroring the 4x token reduction of pixel unshuffle.
    fn default() -> Self {
        PositionConfig { delta: 0.25 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TokenType {
    Text,
    Visual,
}

/// Positions assigned to a token sequence.
///
/// `extent` is the total positional span the sequence consumes: the sum of
/// every token's increment, i.e. `#text + delta * #visual`. The first
/// position is anchored at 0, so for non-empty sequences the last position
/// equals `extent` minus the first token's increment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionPlan {
    pub positions: Vec<f64>,
    pub extent: f64,
}

/// Assigns a position to each token: p0 = 0, p_i = p_{i-1} + inc(type_i)
/// with inc(text) = 1 and inc(visual) = delta. With delta = 1 this is
/// ordinary integer indexing. An empty sequence yields an empty plan with
/// extent 0.
pub fn assign_positions(types: &[TokenType], cfg: &PositionConfig) -> Result<PositionPlan, GeometryError> {
    let cfg = PositionConfig::new(cfg.delta)?;
    let inc = |t: TokenType| match t {
        TokenType::Text => 1.0,
        TokenType::Visual => cfg.delta,
    };
    let mut positions = Vec::with_capacity(types.len());
    let mut pos = 0.0;
    for (i, &t) in types.iter().enumerate() {
        if i > 0 {
            pos += inc(t);
        }
        positions.push(pos);
    }
    let extent = types.iter().map(|&t| inc(t)).sum();
    Ok(PositionPlan { positions, extent })
}

/// Counts text tokens for budget purposes.
pub trait TokenCounter {
    fn count(&self, text: &str) -> u64;
}

/// Whitespace-split word count. A crude stand-in for a real tokenizer, but
/// deterministic and dependency-free; budgets computed with it should carry
/// a safety margin.
#[derive(Debug, Clone, Copy, Default)]
pub struct WhitespaceCounter;

impl TokenCounter for WhitespaceCounter {
    fn count(&self, text: &str) -> u64 {
        text.split_whitespace().count() as u64
    }
}

/// Outcome of a context-budget check for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport {
    pub sample_id: String,
    pub text_tokens: u64,
    pub visual_tokens: u64,
    pub extent: f64,
    pub max_extent: f64,
    pub within_budget: bool,
}

/// Computes the token budget for `sample`.
///
/// Text tokens are counted over every turn with media placeholders removed.
/// Visual tokens come from [`plan_tiles`] per image, per slice, or per
/// sampled video frame; image and slice dimensions are read from the file
/// headers under `media_root`, video frame sizes must have been recorded at
/// ingest. The extent follows the position recurrence:
/// `text_tokens + delta * visual_tokens`.
pub fn budget_check(
    sample: &VqaSample,
    media_root: &Path,
    counter: &dyn TokenCounter,
    tile_cfg: &TileConfig,
    pos_cfg: &PositionConfig,
    max_extent: f64,
) -> Result<BudgetReport, GeometryError> {
    let text_tokens: u64 = sample
        .turns
        .iter()
        .map(|t| counter.count(&strip_media_placeholders(&t.text)))
        .sum();

    let mut visual_tokens: u64 = 0;
    for media in &sample.media {
        visual_tokens += match media {
            MediaRef::Image { uri } => tokens_for_file(media_root, uri, tile_cfg)?,
            MediaRef::SliceSeries { slices, .. } => {
                let mut total = 0;
                for slice in slices {
                    total += tokens_for_file(media_root, slice, tile_cfg)?;
                }
                total
            }
            MediaRef::Video { uri, sampled_frames, frame_size, .. } => {
                let (w, h) = frame_size
                    .ok_or_else(|| GeometryError::MissingFrameSize { uri: uri.clone() })?;
                let per_frame = plan_tiles(w, h, tile_cfg)?.total_tokens as u64;
                per_frame * sampled_frames.len() as u64
            }
        };
    }

    let extent = text_tokens as f64 + pos_cfg.delta * visual_tokens as f64;
    Ok(BudgetReport {
        sample_id: sample.id.clone(),
        text_tokens,
        visual_tokens,
        extent,
        max_extent,
        within_budget: extent <= max_extent,
    })
}

fn tokens_for_file(root: &Path, uri: &str, cfg: &TileConfig) -> Result<u64, GeometryError> {
    let path = root.join(uri);
    let (w, h) = image::image_dimensions(&path)
        .map_err(|source| GeometryError::UnresolvableMedia { path, source })?;
    Ok(plan_tiles(w, h, cfg)?.total_tokens as u64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn plan(w: u32, h: u32) -> TilePlan {
        plan_tiles(w, h, &TileConfig::default()).unwrap()
    }

    #[test]
    fn single_tile_is_256_tokens() {
        let p = plan(448, 448);
        assert_eq!(p.tile_count, 1);
        assert_eq!(p.total_tokens, 256);
    }

    #[test]
    fn wide_image_tiles_horizontally() {
        let p = plan(896, 448);
        assert_eq!((p.tiles_wide, p.tiles_high), (2, 1));
        assert_eq!(p.total_tokens, 512);
    }

    #[test]
    fn non_aligned_dimensions_round_up() {
        let p = plan(1000, 600);
        assert_eq!((p.tiles_wide, p.tiles_high), (3, 2));
        assert_eq!(p.tile_count, 6);
        assert_eq!(p.total_tokens, 1536);
    }

    #[test]
    fn tile_cap_respected() {
        let p = plan(448 * 10, 448 * 10);
        assert!(p.tile_count <= TileConfig::default().max_tiles);
        assert!(p.tile_count >= 1);
    }

    #[test]
    fn mixed_sequence_positions() {
        use TokenType::*;
        let types = [Text, Visual, Visual, Visual, Visual, Text];
        let plan = assign_positions(&types, &PositionConfig::new(0.25).unwrap()).unwrap();
        assert_eq!(plan.positions, vec![0.0, 0.25, 0.5, 0.75, 1.0, 2.0]);
        assert!((plan.extent - 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_text_reduces_to_standard_indexing() {
        let types = [TokenType::Text; 5];
        let plan = assign_positions(&types, &PositionConfig::new(0.7).unwrap()).unwrap();
        assert_eq!(plan.positions, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
        assert_eq!(plan.extent, 5.0);
    }

    #[test]
    fn delta_one_is_identity() {
        use TokenType::*;
        let types = [Text, Visual, Text, Visual, Visual];
        let plan = assign_positions(&types, &PositionConfig::new(1.0).unwrap()).unwrap();
        assert_eq!(plan.positions, vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn delta_out_of_range_rejected() {
        assert!(PositionConfig::new(0.0).is_err());
        assert!(PositionConfig::new(1.5).is_err());
        assert!(PositionConfig::new(-0.1).is_err());
        assert!(PositionConfig::new(f64::NAN).is_err());
    }

    #[test]
    fn budget_extent_example() {
        // 8 single-tile slices = 2048 visual tokens; 100 text tokens;
        // delta 0.25 gives extent 100 + 512 = 612.
        let dir = tempfile::tempdir().unwrap();
        let mut slices = Vec::new();
        for i in 0..8 {
            let name = format!("slice_{i}.png");
            let img = image::RgbImage::new(64, 64);
            img.save(dir.path().join(&name)).unwrap();
            slices.push(name);
        }
        let mut sample = crate::sample::test_support::open_qa_sample("budget");
        sample.media = vec![MediaRef::SliceSeries { slices, source_depth: 100 }];
        sample.turns[0].text =
            format!("{} {}", crate::sample::media_placeholder(0), vec!["tok"; 99].join(" "));
        sample.turns[1].text = "fine".to_string();

        let report = budget_check(
            &sample,
            dir.path(),
            &WhitespaceCounter,
            &TileConfig::default(),
            &PositionConfig::default(),
            1000.0,
        )
        .unwrap();
        assert_eq!(report.text_tokens, 100);
        assert_eq!(report.visual_tokens, 2048);
        assert!((report.extent - 612.0).abs() < 1e-9);
        assert!(report.within_budget);
    }

    #[test]
    fn text_only_extent_is_word_count() {
        let dir = tempfile::tempdir().unwrap();
        let mut sample = crate::sample::test_support::open_qa_sample("t");
        sample.media.clear();
        sample.turns[0].text = "what does the report conclude".to_string();
        sample.turns[1].text = "nothing remarkable".to_string();
        let report = budget_check(
            &sample,
            dir.path(),
            &WhitespaceCounter,
            &TileConfig::default(),
            &PositionConfig::default(),
            3.0,
        )
        .unwrap();
        assert_eq!(report.extent, 7.0);
        assert!(!report.within_budget);
        assert_eq!(report.sample_id, "t");
    }

    #[test]
    fn video_without_frame_size_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let mut sample = crate::sample::test_support::open_qa_sample("v");
        sample.media = vec![MediaRef::Video {
            uri: "v.mp4".into(),
            frame_count: 100,
            fps: 30.0,
            sampled_frames: vec![0, 10],
            frame_size: None,
        }];
        let err = budget_check(
            &sample,
            dir.path(),
            &WhitespaceCounter,
            &TileConfig::default(),
            &PositionConfig::default(),
            1e9,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::MissingFrameSize { .. }));
    }

    #[test]
    fn missing_image_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let sample = crate::sample::test_support::open_qa_sample("m");
        let err = budget_check(
            &sample,
            dir.path(),
            &WhitespaceCounter,
            &TileConfig::default(),
            &PositionConfig::default(),
            1e9,
        )
        .unwrap_err();
        assert!(matches!(err, GeometryError::UnresolvableMedia { .. }));
    }

    /// Brute-force tiler: walk the image in tile-size steps and count.
    fn count_tiles_by_walking(w: u32, h: u32, tile: u32) -> u32 {
        let mut count = 0;
        let mut y = 0;
        while y < h {
            let mut x = 0;
            while x < w {
                count += 1;
                x += tile;
            }
            y += tile;
        }
        count
    }

    proptest! {
        #[test]
        fn grid_matches_walking_oracle_under_cap(w in 1u32..2000, h in 1u32..2000) {
            let cfg = TileConfig { max_tiles: u32::MAX, ..TileConfig::default() };
            let plan = plan_tiles(w, h, &cfg).unwrap();
            prop_assert_eq!(plan.tile_count, count_tiles_by_walking(w, h, cfg.tile_size));
        }

        #[test]
        fn token_count_is_multiple_of_tokens_per_tile(w in 1u32..6000, h in 1u32..6000) {
            let plan = plan(w, h);
            prop_assert_eq!(plan.total_tokens % plan.tokens_per_tile, 0);
            prop_assert!(plan.tile_count >= 1);
            prop_assert!(plan.tile_count <= TileConfig::default().max_tiles);
        }

        #[test]
        fn positions_non_decreasing(
            types in proptest::collection::vec(
                prop_oneof![Just(TokenType::Text), Just(TokenType::Visual)], 0..200),
            delta in 0.01f64..=1.0,
        ) {
            let plan = assign_positions(&types, &PositionConfig::new(delta).unwrap()).unwrap();
            prop_assert!(plan.positions.windows(2).all(|w| w[0] <= w[1]));
        }

        #[test]
        fn extent_is_additive_over_concatenation(
            a in proptest::collection::vec(
                prop_oneof![Just(TokenType::Text), Just(TokenType::Visual)], 0..100),
            b in proptest::collection::vec(
                prop_oneof![Just(TokenType::Text), Just(TokenType::Visual)], 0..100),
            delta in 0.01f64..=1.0,
        ) {
            let cfg = PositionConfig::new(delta).unwrap();
            let whole: Vec<_> = a.iter().chain(b.iter()).copied().collect();
            let lhs = assign_positions(&whole, &cfg).unwrap().extent;
            let rhs = assign_positions(&a, &cfg).unwrap().extent
                + assign_positions(&b, &cfg).unwrap().extent;
            prop_assert!((lhs - rhs).abs() < 1e-9);
        }

        #[test]
        fn extent_grows_with_delta_when_visual_present(
            mut types in proptest::collection::vec(
                prop_oneof![Just(TokenType::Text), Just(TokenType::Visual)], 1..100),
            lo in 0.01f64..0.5,
            hi in 0.51f64..=1.0,
        ) {
            types.push(TokenType::Visual);
            let e_lo = assign_positions(&types, &PositionConfig::new(lo).unwrap()).unwrap().extent;
            let e_hi = assign_positions(&types, &PositionConfig::new(hi).unwrap()).unwrap().extent;
            prop_assert!(e_lo < e_hi);
        }
    }
}
