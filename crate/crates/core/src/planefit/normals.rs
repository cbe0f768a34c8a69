use nalgebra::Vector3;

use crate::camera::CameraIntrinsics;
use crate::error::{Error, Result};
use crate::field::{FieldRole, NormalField, ScalarField};

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let mut i = i;
    // Offsets are small relative to the image, a couple of bounces at most.
    while i < 0 || i >= n {
        if i < 0 {
            i = -i;
        }
        if i >= n {
            i = 2 * (n - 1) - i;
        }
    }
    i as usize
}

/// Per-pixel surface normals from a depth map.
///
/// Pixels are backprojected to 3D, centered differences are taken `delta`
/// pixels apart along each image axis (reflection padding at borders), and the
/// normalized cross product is oriented toward the camera. Pixels with an
/// invalid tap or a cross-product norm below 1e-12 are undefined.
pub fn local_normals(depth: &ScalarField, k: &CameraIntrinsics, delta: usize) -> Result<NormalField> {
    depth.expect_role(FieldRole::Depth)?;
    if delta < 1 {
        return Err(Error::InvalidParameter("normal offset must be at least 1 pixel".into()));
    }
    if depth.valid_count() == 0 {
        return Err(Error::EmptyInput);
    }
    let (w, h) = depth.dims();
    let point = |u: usize, v: usize| -> Option<Vector3<f64>> {
        depth.get(u, v).map(|d| k.ray(u as f64, v as f64) * d)
    };
    let dl = delta as isize;
    Ok(NormalField::from_fn(w, h, |u, v| {
        let center = point(u, v)?;
        let (ui, vi) = (u as isize, v as isize);
        let dx = point(reflect(ui + dl, w), v)? - point(reflect(ui - dl, w), v)?;
        let dy = point(u, reflect(vi + dl, h))? - point(u, reflect(vi - dl, h))?;
        let mut n = dx.cross(&dy);
        if n.dot(&center) > 0.0 {
            n = -n;
        }
        Some([n.x, n.y, n.z])
    }))
}
