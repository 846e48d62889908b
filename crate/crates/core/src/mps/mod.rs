//! Translation-invariant MPS machinery: site tensors, transfer matrices,
//! open-network contraction and dense verification states.

pub mod cache;
pub mod network;
pub mod state;
pub mod tensor;
pub mod transfer;

pub use network::{compute_network_set, EffNetworkMatrix, NetworkKind, NetworkSet, RingContext};
pub use state::{bloch_state_vector, impurity_state_vector, ti_mps_state_vector, StateVector};
pub use tensor::SiteTensor;
pub use transfer::{transfer_matrix, transfer_power_approx, TransferMatrix};
