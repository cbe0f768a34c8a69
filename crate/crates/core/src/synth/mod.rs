//! Analytic two-view road scenes rendered by ray casting.
//!
//! Scenes are described in a road frame attached to the ground plane below
//! the target camera: `x` to the right, `y` up (height above the road),
//! `z` forward along the road.

mod fixture;
mod texture;

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::field::{FieldRole, NormalField, RgbImage, ScalarField};
use crate::geometry::{PlaneModel, RelativePose};

pub use fixture::{worked_fixture, worked_rows, FixtureFields, FixtureRow, ObjectSample};
pub use texture::TextureSpec;

/// Scene objects, positioned in road-frame coordinates (meters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Primitive {
    /// Gaussian height bump with standard deviation `radius`, truncated at
    /// four radii and blended to zero there.
    Bump { x: f64, z: f64, height: f64, radius: f64 },
    /// Axis-aligned block standing on the road, centered at `(x, z)`.
    Box { x: f64, z: f64, width: f64, length: f64, height: f64 },
    /// Wedge rising from the road at `z` over `length`, ending in a vertical
    /// back face.
    Ramp { x: f64, z: f64, width: f64, length: f64, slope_deg: f64 },
}

impl Primitive {
    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Primitive::Bump { height, radius, .. } => height > 0.0 && radius > 0.0,
            Primitive::Box { width, length, height, .. } => width > 0.0 && length > 0.0 && height > 0.0,
            Primitive::Ramp { width, length, slope_deg, .. } => {
                width > 0.0 && length > 0.0 && slope_deg > 0.0 && slope_deg < 89.0
            }
        };
        if !ok {
            return Err(Error::InvalidParameter(format!("malformed primitive {self:?}")));
        }
        Ok(())
    }

    fn tint(&self, index: usize) -> [f64; 3] {
        let k = index as f64 * 0.07;
        match self {
            Primitive::Bump { .. } => [0.45, 0.42, 0.40],
            Primitive::Box { .. } => [0.35 + k, 0.55, 0.35],
            Primitive::Ramp { .. } => [0.55, 0.45 + k, 0.35],
        }
    }

    /// Half-spaces `a·X ≤ b` (road frame) of the convex primitives.
    fn half_spaces(&self) -> Option<Vec<(Vector3<f64>, f64)>> {
        match *self {
            Primitive::Bump { .. } => None,
            Primitive::Box { x, z, width, length, height } => Some(vec![
                (Vector3::x(), x + width / 2.0),
                (-Vector3::x(), -(x - width / 2.0)),
                (Vector3::y(), height),
                (-Vector3::y(), 0.0),
                (Vector3::z(), z + length / 2.0),
                (-Vector3::z(), -(z - length / 2.0)),
            ]),
            Primitive::Ramp { x, z, width, length, slope_deg } => {
                let s = slope_deg.to_radians().tan();
                Some(vec![
                    (Vector3::x(), x + width / 2.0),
                    (-Vector3::x(), -(x - width / 2.0)),
                    (-Vector3::y(), 0.0),
                    (Vector3::z(), z + length),
                    (Vector3::new(0.0, 1.0, -s), -s * z),
                ])
            }
        }
    }
}

const BUMP_CUTOFF: f64 = 4.0;

fn bump_profile(rho2: f64, r: f64) -> f64 {
    let floor = (-BUMP_CUTOFF * BUMP_CUTOFF / 2.0f64).exp();
    if rho2 >= (BUMP_CUTOFF * r).powi(2) {
        return 0.0;
    }
    ((-rho2 / (2.0 * r * r)).exp() - floor) / (1.0 - floor)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneSpec {
    pub camera: CameraIntrinsics,
    /// Ground-truth road plane in the target camera frame.
    pub plane: PlaneModel,
    pub primitives: Vec<Primitive>,
    pub texture: TextureSpec,
    /// Target-to-source pose `T_{t→s}`.
    pub source_pose: RelativePose,
    /// Hits farther than this from the camera count as sky (meters).
    pub max_distance: f64,
    pub sky_color: [f32; 3],
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            camera: CameraIntrinsics::new(320.0, 320.0, 320.0, 96.0, 640, 192).expect("valid default camera"),
            plane: PlaneModel::level(1.65).expect("valid default plane"),
            primitives: Vec::new(),
            texture: TextureSpec::default(),
            source_pose: RelativePose::from_source_center(Matrix3::identity(), Vector3::new(0.0, 0.0, 0.5))
                .expect("valid default pose"),
            max_distance: 100.0,
            sky_color: [0.62, 0.74, 0.88],
        }
    }
}

/// What a pixel ray hit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Label {
    Sky,
    Road,
    Primitive(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedView {
    pub image: RgbImage,
    pub depth: ScalarField,
    pub gamma: ScalarField,
    pub height: ScalarField,
    /// Analytic surface normals in this view's camera frame.
    pub normals: NormalField,
    pub labels: Vec<Label>,
}

impl RenderedView {
    pub fn label(&self, u: usize, v: usize) -> Label {
        self.labels[v * self.image.width() + u]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderedPair {
    pub target: RenderedView,
    pub source: RenderedView,
    pub pose: RelativePose,
    /// Target pixels whose surface point is visible in the source and whose
    /// bilinear footprint stays on the same surface.
    pub covisible: Vec<bool>,
}

struct RoadFrame {
    origin: Vector3<f64>,
    /// Rows are the right, up and forward axes in camera coordinates.
    basis: Matrix3<f64>,
}

impl RoadFrame {
    fn new(plane: &PlaneModel) -> Result<Self> {
        let up = *plane.normal();
        let z = Vector3::z();
        let fwd = z - up * z.dot(&up);
        if fwd.norm() < 1e-6 {
            return Err(Error::InvalidParameter("road plane faces the camera axis".into()));
        }
        let fwd = fwd.normalize();
        let right = fwd.cross(&up);
        Ok(Self {
            origin: -up * plane.camera_height(),
            basis: Matrix3::from_rows(&[right.transpose(), up.transpose(), fwd.transpose()]),
        })
    }

    fn point_to_road(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.basis * (p - self.origin)
    }

    fn dir_to_road(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.basis * d
    }

    fn dir_from_road(&self, d: &Vector3<f64>) -> Vector3<f64> {
        self.basis.transpose() * d
    }
}

struct Hit {
    t: f64,
    label: Label,
    /// Surface normal, road frame.
    normal: Vector3<f64>,
}

struct Tracer<'a> {
    spec: &'a SceneSpec,
    frame: RoadFrame,
    convex: Vec<(usize, Vec<(Vector3<f64>, f64)>)>,
    bumps: Vec<(usize, f64, f64, f64, f64)>,
}

impl<'a> Tracer<'a> {
    fn new(spec: &'a SceneSpec) -> Result<Self> {
        let frame = RoadFrame::new(&spec.plane)?;
        let mut convex = Vec::new();
        let mut bumps = Vec::new();
        for (i, p) in spec.primitives.iter().enumerate() {
            p.validate()?;
            match *p {
                Primitive::Bump { x, z, height, radius } => bumps.push((i, x, z, height, radius)),
                _ => convex.push((i, p.half_spaces().expect("convex primitive"))),
            }
        }
        Ok(Self { spec, frame, convex, bumps })
    }

    fn ground_height(&self, x: f64, z: f64) -> (f64, Option<usize>) {
        let mut total = 0.0;
        let mut owner = None;
        let mut best = 0.0;
        for &(i, bx, bz, h, r) in &self.bumps {
            let b = h * bump_profile((x - bx).powi(2) + (z - bz).powi(2), r);
            total += b;
            if b > best {
                best = b;
                owner = Some(i);
            }
        }
        (total, owner)
    }

    fn ground_normal(&self, x: f64, z: f64) -> Vector3<f64> {
        let (mut gx, mut gz) = (0.0, 0.0);
        let floor = (-BUMP_CUTOFF * BUMP_CUTOFF / 2.0f64).exp();
        for &(_, bx, bz, h, r) in &self.bumps {
            let rho2 = (x - bx).powi(2) + (z - bz).powi(2);
            if rho2 >= (BUMP_CUTOFF * r).powi(2) {
                continue;
            }
            let e = h * (-rho2 / (2.0 * r * r)).exp() / (1.0 - floor);
            gx -= e * (x - bx) / (r * r);
            gz -= e * (z - bz) / (r * r);
        }
        Vector3::new(-gx, 1.0, -gz).normalize()
    }

    fn convex_hit(o: &Vector3<f64>, d: &Vector3<f64>, planes: &[(Vector3<f64>, f64)]) -> Option<(f64, Vector3<f64>)> {
        let (mut t0, mut t1) = (f64::NEG_INFINITY, f64::INFINITY);
        let mut normal = Vector3::zeros();
        for (a, b) in planes {
            let num = b - a.dot(o);
            let den = a.dot(d);
            if den.abs() < 1e-15 {
                if num < 0.0 {
                    return None;
                }
            } else if den < 0.0 {
                let t = num / den;
                if t > t0 {
                    t0 = t;
                    normal = *a;
                }
            } else {
                t1 = t1.min(num / den);
            }
        }
        // tolerate grazing hits on edges
        let slack = 1e-12 * t1.abs().max(1.0);
        (t0 > 0.0 && t0 <= t1 + slack).then(|| (t0, normal.normalize()))
    }

    /// Root of `y(t) − H(x(t), z(t))` on `[a, b]`, scanning then bisecting.
    fn ground_root(&self, o: &Vector3<f64>, d: &Vector3<f64>, a: f64, b: f64, step: f64) -> Option<f64> {
        let f = |t: f64| {
            let p = o + d * t;
            p.y - self.ground_height(p.x, p.z).0
        };
        let n = (((b - a) / step).ceil() as usize).clamp(8, 20_000);
        let mut prev_t = a;
        if f(a) <= 0.0 {
            return Some(a);
        }
        for i in 1..=n {
            let t = a + (b - a) * i as f64 / n as f64;
            let ft = f(t);
            if ft <= 0.0 {
                let (mut lo, mut hi) = (prev_t, t);
                for _ in 0..200 {
                    let mid = 0.5 * (lo + hi);
                    if mid <= lo || mid >= hi {
                        break;
                    }
                    if f(mid) > 0.0 {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Some(hi);
            }
            prev_t = t;
        }
        None
    }

    fn ground_hit(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        let plane_t = (d.y < 0.0 && o.y >= 0.0).then(|| -o.y / d.y);
        let mut best: Option<f64> = None;
        let horiz = d.x.hypot(d.z).max(1e-12);
        for &(_, bx, bz, h, r) in &self.bumps {
            let ext = BUMP_CUTOFF * r;
            let (mut t0, mut t1) = (0.0f64, f64::INFINITY);
            for (oc, dc, lo, hi) in [(o.x, d.x, bx - ext, bx + ext), (o.y, d.y, 0.0, h), (o.z, d.z, bz - ext, bz + ext)] {
                if dc.abs() < 1e-15 {
                    if oc < lo || oc > hi {
                        t0 = f64::INFINITY;
                    }
                    continue;
                }
                let (ta, tb) = ((lo - oc) / dc, (hi - oc) / dc);
                t0 = t0.max(ta.min(tb));
                t1 = t1.min(ta.max(tb));
            }
            if t0 > t1 || !t1.is_finite() && t0.is_infinite() {
                continue;
            }
            if best.is_some_and(|b| b <= t0) {
                continue;
            }
            if let Some(t) = self.ground_root(o, d, t0, t1, r / (16.0 * horiz)) {
                best = Some(best.map_or(t, |b: f64| b.min(t)));
            }
        }
        if let Some(tp) = plane_t {
            let p = o + d * tp;
            if self.ground_height(p.x, p.z).0 == 0.0 && best.is_none_or(|b| tp < b) {
                return Some(Hit { t: tp, label: Label::Road, normal: Vector3::y() });
            }
        }
        let t = best?;
        let p = o + d * t;
        let label = match self.ground_height(p.x, p.z).1 {
            Some(i) => Label::Primitive(i),
            None => Label::Road,
        };
        Some(Hit { t, label, normal: self.ground_normal(p.x, p.z) })
    }

    /// Nearest hit along `o + t·d` (road frame), within the scene range.
    fn trace(&self, o: &Vector3<f64>, d: &Vector3<f64>) -> Option<Hit> {
        let mut best = self.ground_hit(o, d);
        for (i, planes) in &self.convex {
            if let Some((t, n)) = Self::convex_hit(o, d, planes) {
                if best.as_ref().is_none_or(|b| t < b.t) {
                    best = Some(Hit { t, label: Label::Primitive(*i), normal: n });
                }
            }
        }
        best.filter(|h| h.t * d.norm() <= self.spec.max_distance)
    }

    fn tint(&self, label: Label) -> [f64; 3] {
        match label {
            Label::Primitive(i) => self.spec.primitives[i].tint(i),
            _ => [0.5, 0.5, 0.5],
        }
    }
}

impl SceneSpec {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        if !(self.max_distance > 0.0) {
            return Err(Error::InvalidParameter("max_distance must be positive".into()));
        }
        if !(self.texture.cell > 0.0) {
            return Err(Error::InvalidParameter("texture cell must be positive".into()));
        }
        for p in &self.primitives {
            p.validate()?;
        }
        Ok(())
    }

    /// Ground-truth plane as seen from a camera at `pose` (target → view).
    pub fn plane_in_view(&self, pose: &RelativePose) -> Result<PlaneModel> {
        let n = pose.rotation() * self.plane.normal();
        let c = pose.source_center();
        PlaneModel::new(n, self.plane.height_of(&c))
    }
}

/// Renders the scene from a camera at `pose` relative to the target camera
/// (identity renders the target view).
pub fn render_view(spec: &SceneSpec, pose: &RelativePose) -> Result<RenderedView> {
    spec.validate()?;
    let tracer = Tracer::new(spec)?;
    let k = &spec.camera;
    let (w, h) = k.dims();
    let rt = pose.rotation().transpose();
    let center = pose.source_center();
    let o = tracer.frame.point_to_road(&center);

    let hits: Vec<Option<(Hit, Vector3<f64>)>> = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let d = tracer.frame.dir_to_road(&(rt * k.ray((i % w) as f64, (i / w) as f64)));
            tracer.trace(&o, &d).map(|hit| {
                let p = o + d * hit.t;
                (hit, p)
            })
        })
        .collect();

    let n = w * h;
    let mut colors = Vec::with_capacity(n);
    let mut depth = vec![0.0; n];
    let mut height = vec![0.0; n];
    let mut gamma = vec![0.0; n];
    let mut valid = vec![false; n];
    let mut normals = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for (i, hit) in hits.into_iter().enumerate() {
        match hit {
            Some((hit, p)) => {
                let hv = if hit.label == Label::Road { 0.0 } else { p.y };
                // the view ray has unit z in its own frame, so t is depth
                depth[i] = hit.t;
                height[i] = hv;
                gamma[i] = hv / hit.t;
                valid[i] = true;
                colors.push(spec.texture.color(&p, tracer.tint(hit.label)));
                normals.push(Some(pose.rotation() * tracer.frame.dir_from_road(&hit.normal)));
                labels.push(hit.label);
            }
            None => {
                colors.push(spec.sky_color);
                normals.push(None);
                labels.push(Label::Sky);
            }
        }
    }
    if !valid.iter().any(|&b| b) {
        return Err(Error::EmptyScene);
    }
    Ok(RenderedView {
        image: RgbImage::new(w, h, colors)?,
        depth: ScalarField::with_validity(w, h, FieldRole::Depth, depth, valid.clone())?,
        gamma: ScalarField::with_validity(w, h, FieldRole::Gamma, gamma, valid.clone())?,
        height: ScalarField::with_validity(w, h, FieldRole::Height, height, valid)?,
        normals: NormalField::from_fn(w, h, |u, v| normals[v * w + u].map(|n| [n.x, n.y, n.z])),
        labels,
    })
}

/// Target view, source view at `spec.source_pose`, and the target pixels
/// that are reliably observed in the source.
pub fn render_pair(spec: &SceneSpec) -> Result<RenderedPair> {
    let target = render_view(spec, &RelativePose::identity())?;
    let pose = spec.source_pose;
    let source = render_view(spec, &pose)?;
    let tracer = Tracer::new(spec)?;
    let k = &spec.camera;
    let (w, h) = k.dims();
    let c_road = tracer.frame.point_to_road(&pose.source_center());
    let covisible = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (u, v) = (i % w, i / w);
            let label = target.label(u, v);
            let Some(d_t) = target.depth.get(u, v) else { return false };
            let x = k.ray(u as f64, v as f64) * d_t;
            let ps = pose.transform_point(&x);
            if !(ps.z > 1e-6) {
                return false;
            }
            let Ok(px) = k.project(&ps) else { return false };
            if !(px.u >= 0.0 && px.v >= 0.0 && px.u <= (w - 1) as f64 && px.v <= (h - 1) as f64) {
                return false;
            }
            // line of sight from the source camera
            let to = tracer.frame.point_to_road(&x) - c_road;
            if tracer.trace(&c_road, &to).is_some_and(|hit| hit.t < 1.0 - 1e-6) {
                return false;
            }
            let (x0, y0) = (px.u.floor() as usize, px.v.floor() as usize);
            let (x1, y1) = ((x0 + 1).min(w - 1), (y0 + 1).min(h - 1));
            [(x0, y0), (x1, y0), (x0, y1), (x1, y1)].iter().all(|&(a, b)| {
                source.label(a, b) == label
                    && source.depth.get(a, b).is_some_and(|d| (d - ps.z).abs() <= 0.05 * ps.z)
            })
        })
        .collect();
    Ok(RenderedPair { target, source, pose, covisible })
}

/// Ranges for [`random_scene`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RandomSceneConfig {
    pub min_primitives: usize,
    pub max_primitives: usize,
    /// Forward offset of the source camera (meters).
    pub t_z_min: f64,
    pub t_z_max: f64,
    /// Maximum plane tilt (degrees).
    pub max_tilt: f64,
    pub max_distance: f64,
    /// Forward placement range of primitives (meters, road frame).
    pub near: f64,
    pub far: f64,
    /// Coarsest texture cell (meters).
    pub texture_cell: f64,
}

impl Default for RandomSceneConfig {
    fn default() -> Self {
        Self {
            min_primitives: 0,
            max_primitives: 3,
            t_z_min: 0.2,
            t_z_max: 1.0,
            max_tilt: 2.0,
            max_distance: 100.0,
            near: 5.0,
            far: 20.0,
            texture_cell: 4.0,
        }
    }
}

/// A seeded road scene with up to `max_primitives` objects in front of the
/// camera and a forward-moving source camera.
pub fn random_scene(seed: u64, camera: CameraIntrinsics, cfg: &RandomSceneConfig) -> Result<SceneSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h_c = rng.random_range(1.3..1.9);
    let tilt = cfg.max_tilt.to_radians();
    let plane = PlaneModel::level(h_c)?
        .tilted(Vector3::x(), rng.random_range(-tilt..=tilt))?
        .tilted(Vector3::z(), rng.random_range(-tilt..=tilt))?;
    if cfg.min_primitives > cfg.max_primitives || !(cfg.t_z_min <= cfg.t_z_max) || !(0.0 < cfg.near && cfg.near < cfg.far) {
        return Err(Error::InvalidParameter("empty random scene range".into()));
    }
    let count = rng.random_range(cfg.min_primitives..=cfg.max_primitives);
    let mut primitives = Vec::with_capacity(count);
    for _ in 0..count {
        let z = rng.random_range(cfg.near..cfg.far);
        let lateral = 0.25 * z;
        let p = match rng.random_range(0..3) {
            0 => Primitive::Bump {
                x: rng.random_range(-lateral..lateral),
                z,
                height: rng.random_range(0.05..0.3),
                radius: rng.random_range(0.3..0.9),
            },
            1 => Primitive::Box {
                x: rng.random_range(-lateral..lateral),
                z,
                width: rng.random_range(0.5..2.0),
                length: rng.random_range(0.5..2.0),
                height: rng.random_range(0.5..2.5),
            },
            _ => Primitive::Ramp {
                x: rng.random_range(-lateral..lateral),
                z,
                width: rng.random_range(1.0..3.0),
                length: rng.random_range(1.0..3.0),
                slope_deg: rng.random_range(3.0..12.0),
            },
        };
        primitives.push(p);
    }
    let yaw = rng.random_range(-0.5f64..0.5).to_radians();
    let rot = nalgebra::Rotation3::from_axis_angle(&Vector3::y_axis(), yaw).into_inner();
    let center = Vector3::new(
        rng.random_range(-0.05..0.05),
        rng.random_range(-0.02..0.02),
        rng.random_range(cfg.t_z_min..=cfg.t_z_max),
    );
    Ok(SceneSpec {
        camera,
        plane,
        primitives,
        texture: TextureSpec { seed: rng.random(), cell: cfg.texture_cell, ..TextureSpec::default() },
        source_pose: RelativePose::from_source_center(rot, center)?,
        max_distance: cfg.max_distance,
        ..SceneSpec::default()
    })
}

/// Tall block whose front face sits 3 m ahead; the pixel row 61 of the
/// default camera grazes its 2 m top edge.
pub fn tree_scene() -> SceneSpec {
    SceneSpec {
        camera: CameraIntrinsics::new(300.0, 300.0, 320.0, 96.0, 640, 192).expect("valid camera"),
        primitives: vec![Primitive::Box { x: 0.0, z: 3.25, width: 0.6, length: 0.5, height: 2.0 }],
        ..SceneSpec::default()
    }
}

/// 0.15 m bump centered 3 m ahead; its apex projects onto pixel (320, 160).
pub fn bump_scene() -> SceneSpec {
    SceneSpec {
        camera: CameraIntrinsics::new(200.0, 200.0, 320.0, 60.0, 640, 192).expect("valid camera"),
        primitives: vec![Primitive::Bump { x: 0.0, z: 3.0, height: 0.15, radius: 0.4 }],
        ..SceneSpec::default()
    }
}
