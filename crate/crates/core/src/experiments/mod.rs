//! Synthetic tasks, label noise, and the evaluation curves used to judge
//! data values.

mod descent;
mod detection;
mod noise;
mod removal;
mod synth;

pub use descent::{
    descent_bound_check, softmax_descent_check, softmax_lipschitz_bound, DescentCheck,
};
pub use detection::{default_grid, detection_curve, DetectionReport};
pub use noise::{inject_label_noise, NoiseSpec};
pub use removal::{point_removal_curve, RemovalCurve, RemovalOrder};
pub use synth::{make_synthetic_dataset, SyntheticTask};
