//! Fiber exterior algebra and discrete graded de Rham complexes.

pub mod complex;
pub mod fiber;
pub mod ops;

pub use complex::{build_graded_complex, circle_mode_eigenvalue, sector_embedding, BoundaryCondition, ComplexSpec, Dof, Family, GradedComplex};
pub use fiber::{fiber_apply, tau_weights, FiberElement, FiberKind, C64};
pub use ops::{
    conformal_codifferential, dirac_commutator_residual, identification_adjointness, identification_maps, probe_norm,
    refinement_orders, CodifferentialCheck, IdentificationMaps,
};
