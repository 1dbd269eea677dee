pub mod config;
pub mod error;
pub mod evaluation;
pub mod flow;
pub mod formats;
pub mod frame;
pub mod keypoint;
pub mod langevin;
pub mod pipeline;
pub mod segmentation;
pub mod synth;

pub use error::{Error, Result};
pub use flow::{compute_dense_flow, FlowField, FlowParams};
pub use frame::Frame;
pub use keypoint::KeypointParams;
pub use langevin::{GroupForces, LangevinParams, NoiseSource};
pub use segmentation::{Group, ParticleState, SegmentationMap};
pub use pipeline::{segment_video, PipelineConfig, RunResult};
