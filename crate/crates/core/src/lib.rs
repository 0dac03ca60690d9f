//! CPU laboratory for rendering large sets of transparent 3D lines.
//!
//! Polylines are turned into tube meshes and drawn with exact compositors
//! (sorted fragment lists, depth peeling, ray tracing) and approximate ones
//! (multi-layer alpha blending, moment-based transparency, voxelized ray casting).

// Per-channel loops read better indexed; `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod camera;
pub mod exact;
pub mod geometry;
pub mod harness;
pub mod image;
pub mod intersect;
pub mod math;
pub mod mboit;
pub mod metrics;
pub mod mlab;
pub mod raster;
pub mod raytracer;
pub mod scenes;
pub mod vrc;

pub use camera::{Camera, CameraError, ViewTransform};
pub use exact::{
    composite_front_to_back, depth_peel, depth_peel_prepared, render_fragment_lists, Framebuffer, PeelStats, SortKey,
    SortStats, Sorter,
};
pub use geometry::{
    apply_transfer, generate_tube_mesh, load_lineset, parse_lineset, save_lineset, synth_lineset, write_lineset,
    GeometryError, LineSet, LineVertex, Rgba, SynthKind, TransferFunction, TriMesh,
};
pub use harness::{run, HarnessError, RunConfig, RunReport, Technique};
pub use image::{Image, ImageError};
pub use math::{Aabb, Ray, Vec3};
pub use mboit::{mboit_render, MboitParams, MboitStats, MomentBounds, MomentPixel};
pub use metrics::{abs_error_image, luminance, psnr, psnr_masked, ssim, MetricsError};
pub use mlab::{
    mlab_render, mlabdb_render, BlendArray, BlendLayer, BucketBounds, MergePolicy, MlabParams, MlabStats, MlabdbParams,
};
pub use raster::{
    depth_complexity, interior_mask, rasterize, shade_fragment, DepthComplexity, Fragment, FragmentBuffer,
    PreparedScene, Shading,
};
pub use raytracer::{
    raytrace_image, trace_blend, Bvh, Hit, HitScene, RtError, RtParams, RtStats, TriangleScene, TubeScene,
};
pub use scenes::{default_camera, framing_camera, Regime, Scene};
pub use vrc::{
    vrc_render, vrc_trace, DisplacementReport, Neighborhood, QuantizedEndpoint, VoxelGrid, VoxelPiece, VoxelStep,
    VrcError, VrcParams, VrcStats,
};
