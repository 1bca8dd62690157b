//! Multilevel Monte Carlo estimation of expected system lifetime for
//! coherent systems described by minimal cut sets.
//!
//! A system is a two-terminal network of unreliable components; its
//! lifetime is the minimum over minimal cut sets of the maximum member
//! failure time. Estimating the expected lifetime by plain Monte Carlo
//! costs a full pass over every cut set per sample, which becomes
//! painful as cut-set counts grow combinatorially. The multilevel
//! estimator instead telescopes over a nested sequence of cut-set
//! subsets chosen by a pilot simulation, sampling cheap coarse
//! approximations often and expensive corrections rarely.
//!
//! ```
//! use relmc::dist::RngStream;
//! use relmc::estimator::{run_mlmc, run_mc, McConfig};
//! use relmc::generator::{grow, GrowthConfig};
//! use relmc::levels::{build_partition, pilot_scores};
//!
//! let cfg = GrowthConfig { target: 20, ..Default::default() };
//! let sys = grow(&cfg, RngStream::new(7, 0)).unwrap().system;
//!
//! let pilot = pilot_scores(&sys, 100, RngStream::new(7, 1), false).unwrap();
//! let partition = build_partition(&sys, &pilot, None).unwrap();
//! let result = run_mlmc(&sys, &partition, 1.0 / 16.0, RngStream::new(7, 2), false).unwrap();
//! assert!(result.estimate > 0.0);
//! ```
//!
//! The `relmc` binary exposes the same pipeline as subcommands
//! (`generate`, `cutsets`, `select-levels`, `mc`, `mlmc`, `simulate`,
//! `diagnose`, `speedup`); see the guide in `book/` for a walkthrough.

pub mod cli;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod estimator;
pub mod generator;
pub mod io;
pub mod levels;
pub mod simulator;
pub mod system;

pub use error::{Error, Result};

// The guide's code blocks double as doc-tests so the book can never
// drift from the API.
#[cfg(doctest)]
mod book {
    macro_rules! chapter {
        ($name:ident, $path:literal) => {
            #[doc = include_str!($path)]
            mod $name {}
        };
    }
    chapter!(ch01, "../../../book/src/systems-and-cut-sets.md");
    chapter!(ch02, "../../../book/src/sampling-lifetimes.md");
    chapter!(ch03, "../../../book/src/multilevel-estimation.md");
    chapter!(ch04, "../../../book/src/level-selection.md");
    chapter!(ch05, "../../../book/src/repairable-systems.md");
    chapter!(ch06, "../../../book/src/diagnostics.md");
}
