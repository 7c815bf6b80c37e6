//! From-scratch recurrent network: LSTM/GRU cells, the stacked network with
//! dropout and a dense head, exact BPTT, and the finite-difference oracle.

mod cell;
mod checkpoint;
mod config;
mod gradcheck;
mod network;
mod params;

pub use cell::{gru_cell_forward, lstm_cell_forward, GruStep, LstmStep};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint};
pub use config::{CellKind, NetworkConfig};
pub use gradcheck::{
    compare_gradients, gradient_check, numerical_gradient, numerical_gradient_with, relative_error,
    small_check_setup, GradientComparison,
    RELATIVE_ERROR_FLOOR,
};
pub use network::{dropout_mask, network_backward, network_forward, ForwardCache, LayerCache, Mode, StepCache};
pub use params::{init_params, CellParams, GruCellParams, LstmCellParams, NetworkParams, GRU_GATES, LSTM_GATES};

#[cfg(test)]
mod tests;
