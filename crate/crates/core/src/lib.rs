//! Bayesian optimization with a noise-free kriging surrogate and expected
//! improvement, plus inverse estimation of the settings that best explain an
//! observed search trajectory.
//!
//! Everything numeric is generic over [`Scalar`] (`f64` or `f32`). The crate-root
//! aliases fix the scalar to `f64`; the `*F32` aliases fix it to `f32`.

pub mod acquisition;
pub mod gp;
pub mod ibo;
pub mod linalg;
pub mod local;
pub mod sampling;
pub mod scalar;
pub mod space;

pub use acquisition::{BoError, StepOutcome, Termination};
pub use gp::GpError;
pub use ibo::IboError;
pub use sampling::{derive_seed, SamplingError};
pub use scalar::Scalar;
pub use space::{SpaceError, TrajectoryError};

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

pub type SearchSpace = space::SearchSpace<f64>;
pub type Sample = space::Sample<f64>;
pub type Trajectory = space::Trajectory<f64>;
pub type Normalizer = space::Normalizer<f64>;
pub type GpModel = gp::GpModel<f64>;
pub type BoParams = acquisition::BoParams<f64>;
pub type BoLoop = acquisition::BoLoop<f64>;
pub type BoRunRecord = acquisition::BoRunRecord<f64>;
pub type ProposalConfig = sampling::ProposalConfig<f64>;
pub type IboConfig = ibo::IboConfig<f64>;
pub type IboEstimate = ibo::IboEstimate<f64>;
pub type PreparedTrajectory = ibo::PreparedTrajectory<f64>;

pub type SearchSpaceF32 = space::SearchSpace<f32>;
pub type TrajectoryF32 = space::Trajectory<f32>;
pub type GpModelF32 = gp::GpModel<f32>;
pub type BoParamsF32 = acquisition::BoParams<f32>;
pub type IboConfigF32 = ibo::IboConfig<f32>;
pub type IboEstimateF32 = ibo::IboEstimate<f32>;
