//! Transceiver optimization for a wireless-powered MIMO amplify-and-forward
//! relay with power-splitting energy harvesting.

pub mod channel;
pub mod diag;
pub mod error;
pub mod experiment;
pub mod joint;
pub mod linalg;
pub mod relay;
pub mod sdp;
pub mod source;
pub mod wmse;

pub use channel::{ChannelSet, EnergyCovariance, SystemParams};
pub use error::{Error, Result};
pub use experiment::{ResultTable, Scenario, Scheme};
pub use linalg::{CMat, CVec, RMat, RVec};
