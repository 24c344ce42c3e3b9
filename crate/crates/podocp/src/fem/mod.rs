//! Taylor-Hood finite elements on the bifurcation mesh: dof layout, form
//! assembly, problem data, and norms.

pub mod assemble;
pub mod functions;
pub mod layout;
pub mod norms;
pub mod shape;

pub use assemble::{
    assemble_boundary_form, assemble_convection, assemble_convection_hessian,
    assemble_domain_form, assemble_velocity_load, evaluate_in_triangle, interpolate_pressure,
    interpolate_velocity, pressure_error, trilinear, velocity_error, BoundaryForm, DomainForm,
    DomainSel,
};
pub use functions::{
    inflow_amplitude, inflow_profile, target_amplitude, target_profile, unit_lift, unit_target,
};
pub use layout::{build_layout, DofLayout, EdgeFacet};
pub use norms::{apply_per_slice, spacetime_inner, spacetime_norm, weighted_inner, weighted_norm};
