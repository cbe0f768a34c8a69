//! Run configuration: a TOML file layered over built-in defaults, with
//! `--set section.key=value` overrides applied last.
//!
//! ```toml
//! # every section is optional
//! [camera]
//! fx = 721.5
//! fy = 721.5
//! cx = 609.6
//! cy = 172.9
//! width = 1242
//! height = 375
//!
//! [plane]
//! source = "fixed"          # "fixed" | "ransac" | "file"
//! normal = [0.0, -1.0, 0.0]
//! camera_height = 1.65
//!
//! [gamma_range]
//! gamma_min = -0.1
//! gamma_max = 5.0
//! alpha = 0.5
//!
//! [eval]
//! depth_cap = 80.0
//! ```

use std::path::{Path, PathBuf};

use roadgamma::gamma::GammaRange;
use roadgamma::{CameraIntrinsics, EvalConfig, LossWeights, PlaneModel, RansacConfig, RoadMaskConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;

/// Where the road plane comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlaneSource {
    /// Upward unit normal in the camera frame and camera height (m).
    Fixed { normal: [f64; 3], camera_height: f64 },
    /// Fit to the input depth with RANSAC.
    Ransac,
    /// A plane record on disk.
    File { path: PathBuf },
}

impl Default for PlaneSource {
    fn default() -> Self {
        PlaneSource::Fixed { normal: [0.0, -1.0, 0.0], camera_height: 1.65 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub camera: Option<CameraIntrinsics>,
    pub plane: PlaneSource,
    pub gamma_range: GammaRange,
    /// Reference normal for plane orientation and normal consistency.
    pub n_ref: [f64; 3],
    pub eval: EvalConfig,
    pub ransac: RansacConfig,
    pub road_mask: RoadMaskConfig,
    pub loss: LossWeights,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            camera: None,
            plane: PlaneSource::default(),
            gamma_range: GammaRange::kitti(),
            n_ref: [0.0, -1.0, 0.0],
            eval: EvalConfig::default(),
            ransac: RansacConfig::default(),
            road_mask: RoadMaskConfig::default(),
            loss: LossWeights::default(),
        }
    }
}

impl RunConfig {
    /// Defaults, then the file (if any), then each `key=value` override.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> CliResult<Self> {
        let mut table = match path {
            Some(p) => {
                let text = io::read_text(p)?;
                text.parse::<toml::Table>().map_err(|e| {
                    CliError::format(p, e.span().map_or(0, |s| s.start as u64), e.message().to_string())
                })?
            }
            None => toml::Table::new(),
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))?;
        // relative plane paths are resolved against the config file
        if let (PlaneSource::File { path: plane }, Some(p)) = (&mut cfg.plane, path) {
            if plane.is_relative() {
                if let Some(dir) = p.parent() {
                    *plane = dir.join(&*plane);
                }
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.gamma_range.validate()?;
        self.eval.validate()?;
        self.ransac.validate()?;
        self.road_mask.validate()?;
        self.loss.validate()?;
        if let PlaneSource::Fixed { normal, camera_height } = &self.plane {
            PlaneModel::new((*normal).into(), *camera_height)?;
        }
        if self.n_ref.iter().all(|x| *x == 0.0) || self.n_ref.iter().any(|x| !x.is_finite()) {
            return Err(CliError::Usage("config: n_ref must be a finite nonzero vector".into()));
        }
        Ok(())
    }

    pub fn camera(&self) -> CliResult<CameraIntrinsics> {
        self.camera.ok_or_else(|| CliError::Usage("config: [camera] section is required".into()))
    }

    pub fn n_ref(&self) -> nalgebra::Vector3<f64> {
        nalgebra::Vector3::from(self.n_ref).normalize()
    }

    /// The plane for commands that cannot fit one themselves.
    pub fn known_plane(&self) -> CliResult<PlaneModel> {
        match &self.plane {
            PlaneSource::Fixed { normal, camera_height } => Ok(PlaneModel::new((*normal).into(), *camera_height)?),
            PlaneSource::File { path } => io::read_plane(path),
            PlaneSource::Ransac => Err(CliError::Usage(
                "this command needs a fixed or file plane source (set plane.source or pass --plane)".into(),
            )),
        }
    }

    /// Stable across runs and platforms: hash of the canonical JSON form.
    pub fn hash(&self) -> String {
        io::sha256_hex(serde_json::to_string(self).expect("config serializes").as_bytes())
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> CliResult<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override {spec:?} is not key=value")))?;
    let value = parse_value(raw.trim());
    let parts: Vec<&str> = key.trim().split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(CliError::Usage(format!("override key {key:?} is malformed")));
    }
    let (last, sections) = parts.split_last().expect("non-empty");
    let mut cur = table;
    for s in sections {
        let entry = cur.entry(s.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| CliError::Usage(format!("override {key:?}: {s} is not a section")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// TOML literal if it parses as one, otherwise a bare string.
fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}
