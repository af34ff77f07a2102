pub mod analysis;
pub mod autograd;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod model;
pub mod graph;
pub mod ops;
pub mod params;
pub mod tensor;
pub mod train;

pub use autograd::{Gradients, Tape, Var};
pub use error::{Error, Result};
pub use graph::{Eager, Graph, ShapeTrace, Traced};
pub use ops::{ConvSpec, ResizeKind};
pub use params::{Param, ParamStore};
pub use tensor::{Precision, Scalar, Tensor4};
pub use model::{init_model, MrenModel, ModelConfig, Variant};
