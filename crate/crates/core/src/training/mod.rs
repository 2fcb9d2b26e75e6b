pub mod config;
pub mod early_stop;
pub mod eval;
pub mod losses;
pub mod metrics;
pub mod sampler;
pub mod twostage;
pub mod wsuda;

pub use config::{PseudoLabelConfig, TrainConfig};
pub use early_stop::{early_stop, EarlyStopper, StopDecision};
pub use eval::{accuracy, evaluate, predict_labels, validation_accuracy, LabeledSet, Predictor, Validation};
pub use metrics::EpochMetrics;
pub use twostage::{train_2studa, PseudoLabelState, RoundRecord, TwoStageOutcome};
pub use wsuda::{train_wsuda, WsudaOutcome};
