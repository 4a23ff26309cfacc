//! Inception-style score and Fréchet distance over a small surrogate feature
//! network, plus parameter-reduction reporting.

mod evaluate;
mod score;
mod surrogate;

pub use evaluate::{
    evaluate_generator, param_reduction_report, real_feature_stats, write_metrics_csv, EvalConfig, EvalSummary,
    MetricValue,
};
pub use score::{frechet_distance, frechet_report, inception_style_score, FeatureAccumulator, FeatureStats, FrechetReport};
pub use surrogate::{class_names, Extracted, Surrogate, SurrogateTrainConfig, BUNDLED_SHA256, CLASSES, FEATURE_DIM};
