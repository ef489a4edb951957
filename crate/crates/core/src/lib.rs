//! Trace-driven simulation of adaptive scalable (SVC) video streaming over a
//! variable-bandwidth bottleneck, with the quality metrics used to compare the
//! CGS, FGS and MGS quality-scalability schemes.
//!
//! The pipeline mirrors an offline evaluation toolchain:
//!
//! 1. [`trace::synthesize_trace`] produces a NALU trace from a bitrate ladder,
//!    or a real trace is loaded with [`trace::read_nalu_trace`];
//! 2. [`trace::packetize`] fragments NALUs into transport packets;
//! 3. [`netsim::run_link`] pushes packets through a drop-tail bottleneck while
//!    an [`adaptation::AdaptationUnit`] filters layers at the source;
//! 4. [`receiver`] reassembles, applies the playout deadline and prunes
//!    undecodable units using the [`svc`] dependency graph;
//! 5. [`metrics`] turns frame outcomes into PSNR, MOS and network statistics.
//!
//! [`scenario`] wires these together and writes every intermediate trace.

pub mod adaptation;
pub mod error;
pub mod metrics;
pub mod netsim;
pub mod receiver;
pub mod scenario;
pub mod svc;
pub mod time;
pub mod trace;

pub use error::{Error, Result};
pub use time::SimTime;
