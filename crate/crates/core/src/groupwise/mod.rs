//! Groupwise likelihood over direct and indirect relations and its staged
//! maximization.

mod fitness;
mod greedy;
mod group;
mod pso;
mod refine;
mod solver;

pub use fitness::{fitness_full, fitness_rotation, fitness_translation};
pub use greedy::{greedy_init, EstimatorGraph, GreedyInit};
pub use group::{ImageGroup, RelationMask};
pub use pso::{pso_minimize, Bound, PsoConfig, PsoResult};
pub use refine::{bfgs_ascent, compass_polish, local_ascent, RefineConfig};
pub use solver::{solve_direct_pso, solve_sequential, GroupSolution, SolverConfig, StageRecord};
