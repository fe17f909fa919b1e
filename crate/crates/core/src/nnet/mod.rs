//! Minimal differentiable numeric core: dense arrays, LSTM / bi-LSTM with
//! backpropagation through time, softmax + NLL, orthogonal initialization,
//! optimizers and a finite-difference gradient checker.

pub mod array;
pub mod checkpoint;
pub mod gradcheck;
pub mod init;
pub mod lstm;
pub mod ops;
pub mod optim;

pub use array::{Array, Real};
pub use checkpoint::Container;
pub use init::orthogonal_init;
pub use lstm::{bilstm, bilstm_backward, lstm_backward, lstm_forward, lstm_step, BiLstmOutput, BiLstmParams, LstmParams};
pub use ops::{argmax, linear, log_softmax, nll, softmax};
pub use optim::{adam_step, clip_gradients, sgd_step, AdamState};
