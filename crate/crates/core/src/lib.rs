//! Multi-channel ALOHA and CSMA in continuous time.
//!
//! Messages arrive as a Poisson process of intensity `lambda` and occupy one
//! of `kappa` channels for one time unit. The crate provides
//!
//! * [`event_sim`]: a discrete-event simulator of both protocols,
//! * [`kernel`]: the Markov renewal chain of admissions `(A_i, sigma_i)`,
//! * [`throughput`]: closed-form long-run throughputs,
//! * [`estimators`]: counting-process reconstruction and plug-in estimators,
//! * [`ldp`]: numerical large-deviation rate functions for attempts and
//!   successes,
//! * [`cli`]: the `mac-renewal` command-line front end.
//!
//! ```
//! use mac_renewal::{s_csma, Params};
//!
//! let s = s_csma(Params::new(1.0, 1)?)?;
//! assert!((s.value - 0.5).abs() < 1e-12);
//! # Ok::<(), mac_renewal::Error>(())
//! ```

pub mod cli;
pub mod error;
pub mod estimators;
pub mod event_sim;
pub mod kernel;
pub mod ldp;
pub mod model;
pub mod optimize;
pub mod throughput;

pub use error::{Error, Result};
pub use model::{validate_params, Counts, HistoryWindow, Params, ProtocolKind, RandomSource, StepRecord};
pub use throughput::{s_aloha, s_csma, throughput, ThroughputResult};

#[cfg(doctest)]
#[doc = include_str!("../../../README.md")]
mod readme {}

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/simulation.md")]
    mod simulation {}
    #[doc = include_str!("../../../book/src/chain.md")]
    mod chain {}
    #[doc = include_str!("../../../book/src/throughput.md")]
    mod throughput {}
    #[doc = include_str!("../../../book/src/estimators.md")]
    mod estimators {}
    #[doc = include_str!("../../../book/src/large-deviations.md")]
    mod large_deviations {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
