//! Cooperative model matching for heterogeneous nonlinear multi-agent
//! systems.
//!
//! A fleet of nonlinear agents in output-feedback form tracks the output
//! of an input-driven reference system (the leader) over a weighted
//! communication digraph. The crate provides:
//!
//! * graph analysis — Laplacian, follower submatrix `H`, connectivity and
//!   spectrum ([`graph`]),
//! * certified gain synthesis — Riccati solutions, coupling and observer
//!   gains, chain-feedback coefficients ([`synthesis`]),
//! * the agent/leader dynamics and three built-in example oscillators
//!   ([`plant`]),
//! * four control laws: full order (leader observer), reduced order
//!   (direct coupling), fully distributed adaptive sign-based, and its
//!   saturated approximation ([`controllers`]),
//! * a deterministic fixed-step simulation engine with optional rayon
//!   dispatch across agents ([`sim`], [`exec`]),
//! * declarative TOML scenarios, CSV trace export and summary documents
//!   ([`scenario`], [`trace`], [`report`]).
//!
//! ```
//! use coopmatch::sim::{run, tracking_report, Scenario};
//! use coopmatch::controllers::ControlLaw;
//!
//! let mut scn = Scenario::perfect_start(ControlLaw::ReducedOrder);
//! scn.t_final = 0.5;
//! let trace = run(&scn).unwrap();
//! let report = tracking_report(&trace, 0.2).unwrap();
//! assert!(report.max_tail_error < 1e-9);
//! ```

pub mod controllers;
pub mod error;
pub mod exec;
pub mod graph;
pub mod plant;
pub mod poly;
pub mod report;
pub mod scenario;
pub mod sim;
pub mod synthesis;
pub mod trace;
mod util;

pub use error::{Error, Result};
