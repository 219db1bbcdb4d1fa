pub mod bogoliubov;
pub mod dynamics;
pub mod eigen;
pub mod error;
pub mod freqplan;
pub mod hilbert;
pub mod meanfield;
pub mod model;
pub mod observables;
pub mod operators;
pub mod sparse;
pub mod spectral;

pub use error::{Error, Result};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/overview.md")]
    mod overview {}
    #[doc = include_str!("../../../book/src/model.md")]
    mod model {}
    #[doc = include_str!("../../../book/src/spectrum.md")]
    mod spectrum {}
    #[doc = include_str!("../../../book/src/meanfield.md")]
    mod meanfield {}
    #[doc = include_str!("../../../book/src/dynamics.md")]
    mod dynamics {}
    #[doc = include_str!("../../../book/src/freqplan.md")]
    mod freqplan {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
