//! Future-gradient generators: the linear lag combination with exponentiated-gradient
//! meta updates, the neural attention generator, and the smoothing wrapper.

mod linear;
mod neural;
mod simplex;
mod smoothing;

pub use linear::{combine, lag_gradients, linear_forward, meta_loss_and_grad, LagWindow, MetaQuadratic};
pub use neural::{
    domain_summaries, neural_forward, neural_train_step, ForwardCache, NeuralConfig, NeuralMfgg,
    TrajectoryBuffer,
};
pub use simplex::{bregman, eg_update, neg_entropy, SimplexWeights, SIMPLEX_FLOOR};
pub use smoothing::{average, forecast_error, smoothed_generator, unsmooth};
