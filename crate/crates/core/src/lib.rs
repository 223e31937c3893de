//! Ergonomic role allocation for human-robot assembly.
//!
//! An assembly task is an AND/OR graph ([`graph`]) whose hyper-arcs are
//! duplicated once per worker. The [`planner`] finds the cheapest way to build
//! the whole part from the current progress. Human hyper-arcs are priced from
//! a per-joint kinematic wear model ([`ergo`]) whose prediction coefficients
//! come from repeated trials ([`calibration`]). A [`session`] closes the loop:
//! after every completed action the wear is updated, costs are recomputed and
//! the next `(action, worker)` pair is suggested.
//!
//! ```
//! use ergoaog::scenario::corner_joint;
//!
//! let report = corner_joint().run().unwrap();
//! assert_eq!(report.online_letters(), "H,R,H,H,R");
//! assert_eq!(report.offline_letters(), "H,H,H,H,H");
//! ```

pub mod bench;
pub mod calibration;
pub mod ergo;
pub mod graph;
pub mod joint;
pub mod planner;
pub mod scenario;
pub mod session;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../README.md")]
    mod readme {}
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/graphs.md")]
    mod graphs {}
    #[doc = include_str!("../../../book/src/planning.md")]
    mod planning {}
    #[doc = include_str!("../../../book/src/wear.md")]
    mod wear {}
    #[doc = include_str!("../../../book/src/calibration.md")]
    mod calibration {}
    #[doc = include_str!("../../../book/src/sessions.md")]
    mod sessions {}
    #[doc = include_str!("../../../book/src/benchmarks.md")]
    mod benchmarks {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
    #[doc = include_str!("../../../book/src/protocol.md")]
    mod protocol {}
}
