//! Twin-timescale resource management for URLLC vehicle-to-infrastructure
//! downlinks with a massive-MIMO base station.
//!
//! The slow timescale ([`stage1`]) picks a bandwidth once per coherence
//! interval of the traffic, from the worst-case vehicle at the road edge. The
//! fast timescale ([`stage2`]) splits the base-station power among vehicles
//! to minimize the largest finite-blocklength latency. [`montecarlo`]
//! checks the closed-form ergodic rate against simulated fading, and
//! [`experiments`] wires everything into parameter sweeps that write CSV.
//!
//! ```
//! use twinscale::prelude::*;
//!
//! let sys = SystemConfig::default();
//! let s1 = sys.stage1(Precoder::Zf, CsiMode::Imperfect).unwrap();
//! assert!(s1.bandwidth > 100e3 && s1.bandwidth < 300e3);
//! ```

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod error;
pub mod experiments;
pub mod fbl;
pub mod montecarlo;
pub mod numerics;
pub mod stage1;
pub mod stage2;
pub mod traffic;

pub use error::{Error, Result};

/// The types most callers need.
pub mod prelude {
    pub use crate::channel::{
        ChannelConfig, EffectiveSinrModel, Placement, Precoder, Vue,
    };
    pub use crate::error::{Error, Result};
    pub use crate::experiments::{CsiMode, SystemConfig};
    pub use crate::fbl::QosTarget;
    pub use crate::montecarlo::{InterferenceSampling, McConfig};
    pub use crate::stage1::{Stage1Inputs, Stage1Result};
    pub use crate::stage2::{
        dinkelbach_allocate, epa_allocate, AllocationResult, DinkelbachConfig, PowerProblem,
    };
    pub use crate::traffic::TrafficModel;
}
