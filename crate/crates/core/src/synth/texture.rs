use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

/// Band-limited 3D value noise evaluated at world points, so every view of
/// a surface point sees the same color.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextureSpec {
    pub seed: u64,
    /// Lattice spacing of the coarsest octave (meters).
    pub cell: f64,
    pub octaves: u32,
    /// Peak deviation from mid-gray.
    pub contrast: f64,
}

impl Default for TextureSpec {
    fn default() -> Self {
        Self {
            seed: 0,
            cell: 4.0,
            octaves: 2,
            contrast: 0.35,
        }
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn lattice(seed: u64, i: i64, j: i64, k: i64, channel: u64) -> f64 {
    let mut h = splitmix(seed ^ channel.wrapping_mul(0x632b_e59b_d9b4_e019));
    h = splitmix(h ^ i as u64);
    h = splitmix(h ^ j as u64);
    h = splitmix(h ^ k as u64);
    (h >> 11) as f64 / (1u64 << 53) as f64
}

// quintic fade keeps the field C2 across cell faces
fn fade(t: f64) -> f64 {
    t * t * t * (t * (t * 6.0 - 15.0) + 10.0)
}

fn value_noise(seed: u64, p: &Vector3<f64>, channel: u64) -> f64 {
    let (fx, fy, fz) = (p.x.floor(), p.y.floor(), p.z.floor());
    let (i, j, k) = (fx as i64, fy as i64, fz as i64);
    let (tx, ty, tz) = (fade(p.x - fx), fade(p.y - fy), fade(p.z - fz));
    let lerp = |a: f64, b: f64, t: f64| a + (b - a) * t;
    let c = |di: i64, dj: i64, dk: i64| lattice(seed, i + di, j + dj, k + dk, channel);
    let x00 = lerp(c(0, 0, 0), c(1, 0, 0), tx);
    let x10 = lerp(c(0, 1, 0), c(1, 1, 0), tx);
    let x01 = lerp(c(0, 0, 1), c(1, 0, 1), tx);
    let x11 = lerp(c(0, 1, 1), c(1, 1, 1), tx);
    lerp(lerp(x00, x10, ty), lerp(x01, x11, ty), tz)
}

impl TextureSpec {
    /// Color at a road-frame point, channels in (0, 1).
    pub fn color(&self, p: &Vector3<f64>, tint: [f64; 3]) -> [f32; 3] {
        let mut out = [0.0f32; 3];
        for (c, o) in out.iter_mut().enumerate() {
            let (mut sum, mut norm, mut amp, mut scale) = (0.0, 0.0, 1.0, 1.0 / self.cell);
            for _ in 0..self.octaves.max(1) {
                sum += amp * (value_noise(self.seed, &(p * scale), c as u64) - 0.5);
                norm += amp;
                amp *= 0.5;
                scale *= 2.0;
            }
            let x = tint[c] + 2.0 * self.contrast * sum / norm;
            *o = x.clamp(0.02, 0.98) as f32;
        }
        out
    }
}
