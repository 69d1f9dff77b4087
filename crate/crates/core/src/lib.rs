//! Structured implicit functions: shapes represented as a level set of a
//! sum of scaled anisotropic Gaussians, plus everything needed to fit such
//! templates to meshes and work with the results (sampling, isosurface
//! extraction, correspondence, interpolation).
//!
//! All numeric code is generic over the scalar type through [`Real`];
//! concrete `f32`/`f64` aliases live at the crate root.

pub mod analysis;
pub mod element;
pub mod error;
pub mod fd;
pub mod fitter;
pub mod isosurface;
pub mod losses;
pub mod marching;
pub mod mc_tables;
pub mod mesh;
pub mod raycast;
pub mod real;
pub mod sampling;
pub mod template;
pub mod vec3;
pub mod voxel;

pub use analysis::{
    correspond, cosine_distance, f_score, interpolate, template_coordinates, CoordinateMagnitude,
    CorrespondenceEntry, CorrespondenceMap, FScoreReport, TemplateCoordinates,
};
pub use element::{ElementGrad, ShapeElement, PARAMS_PER_ELEMENT, RADIUS_FLOOR};
pub use error::{Error, Result};
pub use fitter::{
    classification_accuracy, fit, fit_from, init_template, FitConfig, FitOutcome, FitSamples,
    FitTrace, TraceRow,
};
pub use isosurface::{
    accumulate_field, accumulate_field_in, extract, extraction_domain, influence_bounds,
    DEFAULT_EXTRACTION_RESOLUTION, DEFAULT_INFLUENCE_EPSILON, DEFAULT_MIN_COMPONENT_AREA,
};
pub use losses::{
    loss_center, loss_surface, loss_total, loss_uniform, LossReport, LossTerm, LossWeights,
    DEFAULT_BETA,
};
pub use marching::{filter_small_components, marching_cubes, ScalarGrid};
pub use mesh::{ManifoldReport, NormalizeTransform, ObjLoad, TriangleMesh};
pub use raycast::{ClosestPoint, Hit, MeshBvh, PARITY_BUDGET};
pub use real::{mix_seed, sigmoid, Real};
pub use sampling::{
    load_labeled_samples, load_labeled_samples_text, load_surface_samples,
    load_surface_samples_text, sample_near_surface, sample_surface, sample_uniform,
    save_labeled_samples, save_labeled_samples_text, save_surface_samples,
    save_surface_samples_text, LabeledSample, SurfaceSample, DEFAULT_TRUNCATION,
    NEAR_SURFACE_RETRY_BUDGET, SAMPLE_FORMAT_VERSION,
};
pub use template::{FieldSample, Label, Template, DEFAULT_ALPHA, DEFAULT_ISOLEVEL};
pub use vec3::{Aabb, Vec3};
pub use voxel::{tri_box_overlap, CellState, FillReport, VoxelGrid};

pub type Vec3f = Vec3<f32>;
pub type Vec3d = Vec3<f64>;
pub type Element32 = ShapeElement<f32>;
pub type Element64 = ShapeElement<f64>;
pub type Template32 = Template<f32>;
pub type Template64 = Template<f64>;
