//! Maximal surface graphs over planar domains: a P1 finite element solver,
//! Lorentzian gradient algebra, discrete 1-forms, the conjugate duality with
//! minimal surfaces and numerical uniqueness experiments.

pub mod duality;
pub mod field;
pub mod forms;
pub mod io;
pub mod linalg;
pub mod lorentz;
pub mod mesh;
pub mod solver;
pub mod uniqueness;

pub use field::{p1_gradient, FieldError, GradientField, ScalarField};
pub use forms::{FormError, OneForm};
pub use mesh::{Mesh, MeshError, VertexClass};
pub use solver::{Metric, SolveError, SolveReport, Solution, SolverConfig};
