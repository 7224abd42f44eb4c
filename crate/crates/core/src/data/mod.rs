//! Parameter-space sampling, database generation and persistence, train/test
//! splitting, min-max scaling, and sequence slicing.

mod dataset;
mod sampling;
mod scaler;
mod slicing;

pub use dataset::{
    apply_split, diffusion_space, generate_dataset, index_by_id, manifest_path_for, read_dataset, select,
    simulate_dataset, split_dataset, streams, write_dataset, GenerationConfig, Manifest, Split, FORMAT_VERSION,
};
pub(crate) use dataset::{with_jobs, write_atomic};
pub use sampling::{ParamDim, ParamSpace, Sampler, Scale};
pub use scaler::Scaler;
pub use slicing::{downsample, slice_at, slice_variable_length};
