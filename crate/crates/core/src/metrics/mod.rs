//! Distribution, rhythm and text-agreement scores for generated motion.

mod beat;
mod encoder;
mod features;
mod fid;
mod report;

pub use beat::{beat_alignment, beat_alignment_score, default_sigma, kinematic_beats, mean_joint_speed};
pub use encoder::{
    clip_semantic_matching, cosine, lyric_pairs, retrieval_report, semantic_matching, train_motion_encoder,
    EncoderConfig, EncoderPair, MotionEncoder, RetrievalReport, ENCODER_MAGIC, MIN_PAIR_FRAMES,
};
pub use features::{
    geometric_features, kinetic_features, GeometricFeatures, KineticFeatures, GEOMETRIC_DIM, GEOMETRIC_PREDICATES,
    KINETIC_DIM,
};
pub use fid::{diversity, fid, frechet_distance, FeatureSet, GaussianStats, COVARIANCE_RIDGE, MAX_DIVERSITY_PAIRS};
pub use report::{evaluate, EvaluatedClip, EvaluationReport, EvaluationSettings, MeanStd};
