//! Perspective (PPA) and orthographic (OPA) phase-angle models for
//! polarimetric 3D reconstruction: polarization-state extraction, phase
//! prediction, normal estimation, contour tracing and a synthetic oracle.

pub mod angle;
pub mod camera;
pub mod contour;
pub mod eigen;
pub mod eval;
pub mod io;
pub mod normal;
pub mod phase;
pub mod polarization;
pub mod raster;
pub mod synth;
