pub mod camera;
pub mod error;
pub mod field;
pub mod gamma;
pub mod geometry;
pub mod losses;
pub mod metrics;
pub mod planefit;
pub mod synth;
pub mod warp;

pub use camera::{depth_to_pointcloud, projected_gap, CameraIntrinsics, Pixel};
pub use error::{Error, Result};
pub use field::{FieldRole, NormalField, PointCloud, RgbImage, ScalarField};
pub use gamma::{Epipole, GammaRange};
pub use geometry::{PlaneModel, RelativePose};
pub use planefit::{FittedPlane, RansacConfig, RoadMaskConfig, Trapezoid};
pub use warp::{Homography, SamplingGrid};
pub use losses::{LossComponents, LossReport, LossWeights};
pub use metrics::{DepthMetrics, EvalConfig, GammaMetrics};
pub use synth::{render_pair, render_view, Label, Primitive, RandomSceneConfig, RenderedPair, RenderedView, SceneSpec, TextureSpec};
