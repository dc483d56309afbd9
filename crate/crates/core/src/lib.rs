//! Coarse Ricci curvature of diffusions on model manifolds via Gaussian
//! couplings, coupled simulation and spectral-gap bounds.

pub mod assignment;
pub mod coupling;
pub mod curvature;
pub mod error;
pub mod fields;
pub mod linalg;
pub mod manifold;
pub mod rng;
pub mod simulate;
pub mod spectral;

pub use coupling::{CostBilinear, CouplingCovariance, Feasibility, SymPsd};
pub use curvature::{CurvatureReport, CurvatureTerms, DirectEstimate, Location};
pub use error::{Error, Result};
pub use fields::{DiffusionField, DiffusionSpec, DriftField, Potential, RiemannLikeTensor};
pub use manifold::{DistanceJet, ManifoldKind, ModelManifold, Point, TangentVector};
pub use simulate::{CoupledTrajectory, Noise, Scheme, SimConfig, StepOptions};
pub use spectral::{BoundsReport, DiscretizedOperator, GridKind};
