//! Task-level scoring.
//!
//! Every function here is pure and deterministic: identical inputs give
//! bit-identical outputs regardless of thread count.

mod caption;
mod detection;
mod grounding;
mod kdtree;
mod matching;
mod pointmap;

pub use caption::{bleu4, caption_scores, cider_d, rouge_l, tokenize, CaptionScores, CIDER_SIGMA, ROUGE_BETA};
pub use detection::{detection_prf, normalize_label, DetectionMetrics, DetectionScene};
pub use grounding::{frame_accuracy, grounding_accuracy, GroundingResult};
pub use kdtree::KdTree;
pub use matching::{max_weight_assignment, maximum_matching};
pub use pointmap::{
    aggregate_scenes, median, pointmap_eval, pointmap_eval_pooled, EvalMode, PointmapMetrics, Stat,
};
