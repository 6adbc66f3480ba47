//! Flat surfaces with cone singularities, assembled from Euclidean triangles
//! with complex edge coordinates.
//!
//! The crate builds surfaces by gluing triangles (`surface`), assembles and
//! analyzes the linear systems their edge coordinates satisfy (`linsys`),
//! triangulates surfaces by sweeping the vertical flow (`flow`), measures
//! distances between singularities and constructs geodesic forests
//! (`forest`), models marked flat tori explicitly (`torus`), and estimates
//! energy integrals over chart domains by layered importance sampling
//! (`mc`). Seeded generators for test corpora live in `samples`.

pub mod error;
pub mod flow;
pub mod forest;
pub mod geom;
pub mod linsys;
pub mod mc;
mod mesh;
pub mod samples;
pub mod schema;
pub mod surface;
pub mod torus;

pub use error::{FlowError, ForestError, LinsysError, McError, SurfaceError, TorusError};
pub use geom::{Complex, Tol};
pub use surface::{AngleData, BoundaryPair, EdgeVector, GluedSurface, SurfaceDiagnostics, Tree};
