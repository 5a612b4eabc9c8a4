//! Encoder + projector models, the InfoNCE objective with analytic
//! gradients, and benign local training.

mod arch;
mod loss;
mod net;
mod train;

pub use arch::{Activation, LayerSpec, Model, ModelArch};
pub use loss::info_nce_loss;
pub use net::{encode, project};
pub(crate) use net::{Part, Trace};
pub use train::{benign_local_train, ContrastiveConfig};
