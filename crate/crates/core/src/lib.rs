//! Decision-tree induction as a finite MDP over feature bounds.
//!
//! A classification dataset induces an Iterative Bounding MDP whose
//! deterministic reactive policies are exactly the decision trees of bounded
//! depth. This crate builds the equivalent fully observable MDP over
//! observations ([`obs_mdp::ObservationMdp`]), evaluates policies on it
//! exactly, and searches it with value iteration, ERPI and tabular policy
//! gradient. Trees are extracted from the resulting policies and compared
//! against a greedy CART-style baseline.
//!
//! ```
//! use ibmdp::dataset::toy_task;
//! use ibmdp::ibmdp::IbmdpConfig;
//! use ibmdp::obs_mdp::ObservationMdp;
//! use ibmdp::solvers::solve_value_iteration;
//!
//! let data = toy_task(0).unwrap();
//! let config = IbmdpConfig::new(&data, 0.5, 0.99, 1, 2).unwrap();
//! let mdp = ObservationMdp::build(&data, &config).unwrap();
//! let report = solve_value_iteration(&mdp, 1e-10).unwrap();
//! assert_eq!(report.tree.accuracy(&data).unwrap(), 1.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod dataset;
pub mod error;
pub mod exec;
pub mod experiments;
pub mod ibmdp;
pub mod obs_mdp;
pub mod policy;
pub mod solvers;
pub mod trees;

pub use dataset::Dataset;
pub use error::{Error, Result};
pub use exec::Execution;
pub use ibmdp::{Action, IbmdpConfig, Observation, ObservationSet};
pub use obs_mdp::{EvaluationResult, ObservationMdp};
pub use policy::{DeterministicPolicy, TabularPolicy};
pub use solvers::{SolveReport, SolverKind};
pub use trees::DecisionTree;
