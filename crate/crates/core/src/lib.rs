pub mod autodiff;
pub mod conditioning;
pub mod consistency;
pub mod dataio;
pub mod diffusion;
pub mod error;
pub mod metrics;
pub mod nn;
pub mod sampling;
pub mod scalar;
pub mod skeleton;
pub mod tensor;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use tensor::Matrix;

/// Frame width of the pose vector: root translation plus 24 joints in 6D form.
pub const POSE_DIM: usize = skeleton::POSE_DIM;
/// Width of a conditioning frame: audio features followed by the lyric embedding.
pub const COND_DIM: usize = conditioning::AUDIO_DIM + conditioning::LYRIC_DIM;

pub type MotionSequence = skeleton::MotionSequence<f32>;
pub type MotionSequence64 = skeleton::MotionSequence<f64>;
pub type Skeleton = skeleton::Skeleton<f32>;
pub type Skeleton64 = skeleton::Skeleton<f64>;
pub type ConditioningTrack = conditioning::ConditioningTrack<f32>;
pub type DiffusionSchedule = diffusion::DiffusionSchedule<f32>;
pub type DenoiserModel = diffusion::DenoiserModel<f32>;
pub type DenoiserModel64 = diffusion::DenoiserModel<f64>;
pub type ConsistencyModel = consistency::ConsistencyModel<f32>;
pub type ConsistencyModel64 = consistency::ConsistencyModel<f64>;
pub type MotionEncoder = metrics::MotionEncoder<f32>;
