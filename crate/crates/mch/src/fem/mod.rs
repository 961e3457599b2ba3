//! Q1 finite element assembly on structured subgrids, sparse SPD solves and
//! saddle-point (KKT) solves with equality constraints.

pub mod constraints;
pub mod csr;
pub mod fine;
pub mod q1;
pub mod saddle;
pub mod stiffness;

pub use constraints::{assemble_constraints, ConstraintRow, ConstraintSystem};
pub use csr::Csr;
pub use fine::{global_region, solve_fine_reference, FineSolution};
pub use saddle::{factor_saddle, SaddleFactor, SaddleSolution};
pub use stiffness::{assemble_stiffness, StiffnessSystem};
