use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use roadgamma::gamma::{depth_from_gamma, epipole, gamma_from_depth_plane, height_from_gamma, residual_flow, sigmoid_field_to_gamma, source_height};
use roadgamma::losses::{evaluate_objective, LossInputs, SourceView};
use roadgamma::metrics::{depth_metrics, gamma_metrics, gamma_metrics_with_depth, range_capped_eval};
use roadgamma::planefit::{gamma_from_depth_ransac, ransac_plane};
use roadgamma::synth::{random_scene, render_pair, worked_fixture, worked_rows, RandomSceneConfig, SceneSpec};
use roadgamma::warp::{bilinear_sample, depth_reprojection_grid, homography_warp, parallax_warp, plane_homography};
use roadgamma::{depth_to_pointcloud, CameraIntrinsics, DepthMetrics, EvalConfig, FieldRole, GammaMetrics, RgbImage, ScalarField};
use serde::Serialize;
use serde_json::json;

use crate::config::{PlaneSource, RunConfig};
use crate::error::{CliError, CliResult};
use crate::io;

#[derive(Debug, Parser)]
#[command(name = "roadgamma", version, about = "Road-plane γ geometry: conversion, warping, plane fitting, losses and metrics")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Override a config value, e.g. `--set ransac.iterations=2000`.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// RANSAC seed (overrides `ransac.seed`).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Plane record to use instead of the configured plane source.
    #[arg(long, value_name = "FILE")]
    pub plane: Option<PathBuf>,
}

impl Common {
    pub fn load(&self) -> CliResult<RunConfig> {
        let mut cfg = RunConfig::load(self.config.as_deref(), &self.overrides)?;
        if let Some(s) = self.seed {
            cfg.ransac.seed = s;
        }
        if let Some(p) = &self.plane {
            cfg.plane = PlaneSource::File { path: p.clone() };
        }
        Ok(cfg)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Kind {
    Depth,
    Gamma,
    Height,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Metric depth (and optionally height) from a γ map and the road plane.
    Gamma2depth {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        gamma: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        height_out: Option<PathBuf>,
        /// Input holds sigmoid activations; map them through `gamma_range`.
        #[arg(long)]
        sigmoid: bool,
        /// Depth map to compare against; reports the maximum relative error.
        #[arg(long)]
        reference: Option<PathBuf>,
    },
    /// γ map from a depth map, fitting the plane with RANSAC unless a plane is given.
    Depth2gamma {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        plane_out: Option<PathBuf>,
    },
    /// RANSAC road-plane fit; prints the plane record.
    FitPlane {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Synthesizes the target view from a source image.
    Warp {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        source: PathBuf,
        /// Target-to-source pose record.
        #[arg(long)]
        pose: PathBuf,
        /// Plane homography only.
        #[arg(long, conflicts_with_all = ["depth", "gamma"])]
        homography: bool,
        /// Reproject through a target depth map.
        #[arg(long, conflicts_with = "gamma")]
        depth: Option<PathBuf>,
        /// Homography plus residual parallax from a target γ map.
        #[arg(long)]
        gamma: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Depth, γ or height metrics as CSV.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gt: PathBuf,
        #[arg(long, value_enum)]
        kind: Kind,
        /// Near-range caps in meters, ascending.
        #[arg(long, value_delimiter = ',')]
        caps: Vec<f64>,
        #[arg(long)]
        median_scale: bool,
        /// Ground-truth depth used to range-cap γ and height evaluations.
        #[arg(long)]
        gt_depth: Option<PathBuf>,
        /// Write the CSV here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-pixel absolute errors as CSV.
        #[arg(long)]
        per_pixel: Option<PathBuf>,
    },
    /// Evaluates the self-supervised objective for one target frame.
    Loss {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        target: PathBuf,
        /// Source images; pair each with a `--pose`.
        #[arg(long, required = true)]
        source: Vec<PathBuf>,
        #[arg(long, required = true)]
        pose: Vec<PathBuf>,
        #[arg(long)]
        gamma: PathBuf,
        /// Scalar map; pixels at or below 0.5 are excluded.
        #[arg(long)]
        valid_mask: Option<PathBuf>,
    },
    /// Back-projects a depth map to an ASCII PLY point cloud.
    Pointcloud {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        depth: PathBuf,
        #[arg(long)]
        image: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Renders a synthetic two-view scene or writes the worked fixture.
    GenSynthetic {
        /// Scene description (TOML).
        #[arg(long, conflicts_with_all = ["random", "fixture"])]
        scene: Option<PathBuf>,
        /// Seed for a randomly generated scene.
        #[arg(long, conflicts_with = "fixture")]
        random: Option<u64>,
        /// Named fixture; only `worked` exists.
        #[arg(long)]
        fixture: Option<String>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

/// Runs one command; returns what should be printed on stdout.
pub fn run(cli: Cli) -> CliResult<String> {
    match cli.command {
        Command::Gamma2depth { common, gamma, out, height_out, sigmoid, reference } => {
            gamma2depth(&common, &gamma, &out, height_out.as_deref(), sigmoid, reference.as_deref())
        }
        Command::Depth2gamma { common, depth, out, plane_out } => depth2gamma(&common, &depth, &out, plane_out.as_deref()),
        Command::FitPlane { common, depth, out } => fit_plane(&common, &depth, out.as_deref()),
        Command::Warp { common, source, pose, homography, depth, gamma, out } => {
            let mode = match (homography, depth, gamma) {
                (true, None, None) => WarpMode::Homography,
                (false, Some(d), None) => WarpMode::Depth(d),
                (false, None, Some(g)) => WarpMode::Gamma(g),
                _ => return Err(CliError::Usage("warp needs exactly one of --homography, --depth, --gamma".into())),
            };
            warp(&common, &source, &pose, mode, &out)
        }
        Command::Evaluate { common, pred, gt, kind, caps, median_scale, gt_depth, out, per_pixel } => evaluate(
            &common,
            &EvalArgs { pred, gt, kind, caps, median_scale, gt_depth, out, per_pixel },
        ),
        Command::Loss { common, target, source, pose, gamma, valid_mask } => {
            loss(&common, &target, &source, &pose, &gamma, valid_mask.as_deref())
        }
        Command::Pointcloud { common, depth, image, out } => pointcloud(&common, &depth, image.as_deref(), &out),
        Command::GenSynthetic { scene, random, fixture, out_dir } => match (scene, random, fixture) {
            (Some(s), None, None) => {
                let text = io::read_text(&s)?;
                let spec: SceneSpec = toml::from_str(&text).map_err(|e| {
                    CliError::format(&s, e.span().map_or(0, |r| r.start as u64), e.message().to_string())
                })?;
                gen_scene(&spec, &out_dir)
            }
            (None, Some(seed), None) => {
                let base = SceneSpec::default();
                gen_scene(&random_scene(seed, base.camera, &RandomSceneConfig::default())?, &out_dir)
            }
            (None, None, Some(name)) if name == "worked" => gen_fixture(&out_dir),
            (None, None, Some(name)) => Err(CliError::Usage(format!("unknown fixture {name:?}"))),
            _ => Err(CliError::Usage("gen-synthetic needs one of --scene, --random, --fixture".into())),
        },
    }
}

fn check_dims(what: &Path, dims: (usize, usize), k: &CameraIntrinsics) -> CliResult<()> {
    if dims != k.dims() {
        return Err(CliError::Data(format!(
            "{}: size {}x{} does not match the camera {}x{}",
            what.display(),
            dims.0,
            dims.1,
            k.dims().0,
            k.dims().1
        )));
    }
    Ok(())
}

fn provenance(cfg: &RunConfig, inputs: &[(&str, &Path)]) -> CliResult<serde_json::Value> {
    let mut hashes = BTreeMap::new();
    for (name, p) in inputs {
        hashes.insert(name.to_string(), io::sha256_file(p)?);
    }
    Ok(json!({ "inputs": hashes, "config_sha256": cfg.hash() }))
}

fn gamma2depth(
    common: &Common,
    gamma_path: &Path,
    out: &Path,
    height_out: Option<&Path>,
    sigmoid: bool,
    reference: Option<&Path>,
) -> CliResult<String> {
    let cfg = common.load()?;
    let k = cfg.camera()?;
    let plane = cfg.known_plane()?;
    let input = io::read_field(gamma_path, if sigmoid { FieldRole::Scalar } else { FieldRole::Gamma })?;
    check_dims(gamma_path, input.dims(), &k)?;
    let gamma = if sigmoid { sigmoid_field_to_gamma(&input, &cfg.gamma_range)? } else { input };
    let depth = depth_from_gamma(&gamma, &plane, &k)?;
    io::write_field(out, &depth)?;
    if let Some(h) = height_out {
        io::write_field(h, &height_from_gamma(&gamma, &depth)?)?;
    }
    let mut report = json!({
        "valid_pixels": depth.valid_count(),
        "plane": plane,
        "provenance": provenance(&cfg, &[("gamma", gamma_path)])?,
    });
    if let Some(r) = reference {
        let truth = io::read_field(r, FieldRole::Depth)?;
        truth.expect_same_shape(depth.dims()).map_err(CliError::from)?;
        // compare against what was written, so the figure reflects the file
        let written = io::read_field(out, FieldRole::Depth)?;
        let (mut worst, mut n) = (0.0f64, 0usize);
        for (u, v, d) in truth.iter_valid() {
            if let Some(x) = written.get(u, v) {
                worst = worst.max((x - d).abs() / d);
                n += 1;
            }
        }
        report["reference"] = json!({ "max_rel_error": worst, "count": n });
    }
    Ok(io::to_json(&report))
}

fn depth2gamma(common: &Common, depth_path: &Path, out: &Path, plane_out: Option<&Path>) -> CliResult<String> {
    let cfg = common.load()?;
    let k = cfg.camera()?;
    let depth = io::read_field(depth_path, FieldRole::Depth)?;
    check_dims(depth_path, depth.dims(), &k)?;
    let (gamma, plane_json) = match cfg.plane {
        PlaneSource::Ransac => {
            let (g, fitted) = gamma_from_depth_ransac(&depth, &k, &cfg.ransac, &cfg.n_ref())?;
            if let Some(p) = plane_out {
                io::write_json(p, &fitted)?;
            }
            (g, serde_json::to_value(fitted).expect("plane serializes"))
        }
        _ => {
            let plane = cfg.known_plane()?;
            if let Some(p) = plane_out {
                io::write_json(p, &plane)?;
            }
            (gamma_from_depth_plane(&depth, &plane, &k)?, serde_json::to_value(plane).expect("plane serializes"))
        }
    };
    io::write_field(out, &gamma)?;
    Ok(io::to_json(&json!({
        "valid_pixels": gamma.valid_count(),
        "plane": plane_json,
        "provenance": provenance(&cfg, &[("depth", depth_path)])?,
    })))
}

fn fit_plane(common: &Common, depth_path: &Path, out: Option<&Path>) -> CliResult<String> {
    let cfg = common.load()?;
    let k = cfg.camera()?;
    let depth = io::read_field(depth_path, FieldRole::Depth)?;
    check_dims(depth_path, depth.dims(), &k)?;
    let fitted = ransac_plane(&depth, &k, &cfg.ransac, &cfg.n_ref())?;
    if let Some(p) = out {
        io::write_json(p, &fitted)?;
    }
    Ok(io::to_json(&fitted))
}

pub enum WarpMode {
    Homography,
    Depth(PathBuf),
    Gamma(PathBuf),
}

fn warp(common: &Common, source_path: &Path, pose_path: &Path, mode: WarpMode, out: &Path) -> CliResult<String> {
    let cfg = common.load()?;
    let k = cfg.camera()?;
    let source = io::read_rgb(source_path)?;
    check_dims(source_path, source.dims(), &k)?;
    let pose = io::read_pose(pose_path)?;
    let mut inputs = vec![("source", source_path), ("pose", pose_path)];
    let synth = match &mode {
        WarpMode::Homography => homography_warp(&source, &plane_homography(&pose, &cfg.known_plane()?, &k)?)?,
        WarpMode::Depth(d) => {
            let depth = io::read_field(d, FieldRole::Depth)?;
            check_dims(d, depth.dims(), &k)?;
            inputs.push(("depth", d));
            bilinear_sample(&source, &depth_reprojection_grid(&depth, &pose, &k)?)?
        }
        WarpMode::Gamma(g) => {
            let gamma = io::read_field(g, FieldRole::Gamma)?;
            check_dims(g, gamma.dims(), &k)?;
            inputs.push(("gamma", g));
            let plane = cfg.known_plane()?;
            let h = plane_homography(&pose, &plane, &k)?;
            let epi = epipole(&k, &pose)?;
            let (fu, fv) = residual_flow(&gamma, epi.t_z, source_height(&plane, &pose), &epi)?;
            parallax_warp(&source, &h, &fu, &fv)?
        }
    };
    io::write_rgb(out, &synth)?;
    Ok(io::to_json(&json!({
        "valid_pixels": synth.valid_count(),
        "provenance": provenance(&cfg, &inputs)?,
    })))
}

pub struct EvalArgs {
    pub pred: PathBuf,
    pub gt: PathBuf,
    pub kind: Kind,
    pub caps: Vec<f64>,
    pub median_scale: bool,
    pub gt_depth: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub per_pixel: Option<PathBuf>,
}

pub const DEPTH_CSV_HEADER: [&str; 13] = [
    "kind", "cap", "count", "abs_rel", "sq_rel", "rmse", "rmse_log", "delta1", "delta2", "delta3", "pred_sha256",
    "gt_sha256", "config_sha256",
];
pub const GAMMA_CSV_HEADER: [&str; 13] = [
    "kind", "cap", "count", "abs_diff", "rmse", "rmse_log", "delta1", "delta2", "delta3", "log_offset", "pred_sha256",
    "gt_sha256", "config_sha256",
];
pub const HEIGHT_CSV_HEADER: [&str; 8] = ["kind", "cap", "count", "abs_diff", "rmse", "pred_sha256", "gt_sha256", "config_sha256"];

fn fmt(x: f64) -> String {
    // shortest round-trip form keeps records bit-reproducible
    format!("{x}")
}

fn depth_row(cap: f64, m: &roadgamma::Result<DepthMetrics>) -> Vec<String> {
    match m {
        Ok(m) => [m.abs_rel, m.sq_rel, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3]
            .iter()
            .map(|&x| fmt(x))
            .fold(vec!["depth".into(), fmt(cap), m.count.to_string()], |mut r, x| {
                r.push(x);
                r
            }),
        Err(_) => {
            let mut r = vec!["depth".into(), fmt(cap), "0".into()];
            r.extend(std::iter::repeat_n("NaN".to_string(), 7));
            r
        }
    }
}

fn gamma_row(cap: f64, m: &roadgamma::Result<GammaMetrics>, log_offset: f64) -> Vec<String> {
    let mut r = vec!["gamma".into(), fmt(cap)];
    match m {
        Ok(m) => {
            r.push(m.count.to_string());
            r.extend([m.abs_diff, m.rmse, m.rmse_log, m.delta1, m.delta2, m.delta3, m.log_offset].map(fmt));
        }
        Err(_) => {
            r.push("0".into());
            r.extend(std::iter::repeat_n("NaN".to_string(), 6));
            r.push(fmt(log_offset));
        }
    }
    r
}

/// Mean absolute and RMS difference over pixels valid in both fields.
fn height_errors(pred: &ScalarField, gt: &ScalarField, gt_depth: Option<&ScalarField>, cap: f64) -> roadgamma::Result<(usize, f64, f64)> {
    pred.expect_same_shape(gt.dims())?;
    let (mut n, mut abs, mut sq) = (0usize, 0.0, 0.0);
    for (u, v, g) in gt.iter_valid() {
        let Some(x) = pred.get(u, v) else { continue };
        if let Some(d) = gt_depth {
            if !d.get(u, v).is_some_and(|d| d > roadgamma::metrics::MIN_DEPTH && d <= cap) {
                continue;
            }
        }
        n += 1;
        abs += (x - g).abs();
        sq += (x - g) * (x - g);
    }
    if n == 0 {
        return Err(roadgamma::Error::EmptyEvaluation);
    }
    Ok((n, abs / n as f64, (sq / n as f64).sqrt()))
}

fn evaluate(common: &Common, a: &EvalArgs) -> CliResult<String> {
    let mut cfg = common.load()?;
    if a.median_scale {
        cfg.eval.median_scale = true;
    }
    let role = match a.kind {
        Kind::Depth => FieldRole::Depth,
        Kind::Gamma => FieldRole::Gamma,
        Kind::Height => FieldRole::Height,
    };
    let pred = io::read_field(&a.pred, role)?;
    let gt = io::read_field(&a.gt, role)?;
    pred.expect_same_shape(gt.dims()).map_err(CliError::from)?;
    let gt_depth = a.gt_depth.as_deref().map(|p| io::read_field(p, FieldRole::Depth)).transpose()?;
    if a.kind != Kind::Depth && !a.caps.is_empty() && gt_depth.is_none() {
        return Err(CliError::Usage("--caps with γ or height needs --gt-depth".into()));
    }
    if a.caps.windows(2).any(|w| w[0] > w[1]) || a.caps.iter().any(|c| !(*c > 0.0)) {
        return Err(CliError::Usage("--caps must be positive and ascending".into()));
    }
    let hashes = [io::sha256_file(&a.pred)?, io::sha256_file(&a.gt)?, cfg.hash()];
    let caps: Vec<Option<f64>> = if a.caps.is_empty() { vec![None] } else { a.caps.iter().map(|&c| Some(c)).collect() };
    let row_cfg = |c: Option<f64>| EvalConfig { near_cap: c.or(cfg.eval.near_cap), ..cfg.eval };

    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Data(e.to_string());
    match a.kind {
        Kind::Depth => {
            w.write_record(DEPTH_CSV_HEADER).map_err(csv_err)?;
            let rows = if a.caps.is_empty() {
                vec![(cfg.eval.effective_cap(), depth_metrics(&pred, &gt, &cfg.eval))]
            } else {
                range_capped_eval(&pred, &gt, &a.caps, &cfg.eval)?
                    .into_iter()
                    .map(|(c, m)| (row_cfg(Some(c)).effective_cap(), m))
                    .collect()
            };
            if let [(_, Err(e))] = rows.as_slice() {
                return Err(e.clone().into());
            }
            for (cap, m) in &rows {
                let mut r = depth_row(*cap, m);
                r.extend(hashes.iter().cloned());
                w.write_record(&r).map_err(csv_err)?;
            }
        }
        Kind::Gamma => {
            w.write_record(GAMMA_CSV_HEADER).map_err(csv_err)?;
            let rows: Vec<_> = caps
                .iter()
                .map(|&c| {
                    let rc = row_cfg(c);
                    let m = match &gt_depth {
                        Some(d) => gamma_metrics_with_depth(&pred, &gt, d, &rc),
                        None => gamma_metrics(&pred, &gt, &rc),
                    };
                    (rc.effective_cap(), m)
                })
                .collect();
            if let [(_, Err(e))] = rows.as_slice() {
                return Err(e.clone().into());
            }
            for (cap, m) in &rows {
                let mut r = gamma_row(*cap, m, cfg.eval.log_offset);
                r.extend(hashes.iter().cloned());
                w.write_record(&r).map_err(csv_err)?;
            }
        }
        Kind::Height => {
            w.write_record(HEIGHT_CSV_HEADER).map_err(csv_err)?;
            for &c in &caps {
                let cap = row_cfg(c).effective_cap();
                let mut r = vec!["height".to_string(), fmt(cap)];
                match height_errors(&pred, &gt, gt_depth.as_ref(), cap) {
                    Ok((n, abs, rmse)) => r.extend([n.to_string(), fmt(abs), fmt(rmse)]),
                    Err(e) if caps.len() == 1 => return Err(e.into()),
                    Err(_) => r.extend(["0".to_string(), "NaN".into(), "NaN".into()]),
                }
                r.extend(hashes.iter().cloned());
                w.write_record(&r).map_err(csv_err)?;
            }
        }
    }
    let csv_text = String::from_utf8(w.into_inner().map_err(|e| CliError::Data(e.to_string()))?).expect("utf-8 csv");

    if let Some(p) = &a.per_pixel {
        let mut pw = csv::Writer::from_writer(Vec::new());
        pw.write_record(["u", "v", "pred", "gt", "abs_error"]).map_err(csv_err)?;
        for (u, v, g) in gt.iter_valid() {
            if let Some(x) = pred.get(u, v) {
                pw.write_record([u.to_string(), v.to_string(), fmt(x), fmt(g), fmt((x - g).abs())])
                    .map_err(csv_err)?;
            }
        }
        io::write_atomic(p, &pw.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
    }
    match &a.out {
        Some(p) => {
            io::write_atomic(p, csv_text.as_bytes())?;
            Ok(String::new())
        }
        None => Ok(csv_text),
    }
}

fn loss(
    common: &Common,
    target_path: &Path,
    sources: &[PathBuf],
    poses: &[PathBuf],
    gamma_path: &Path,
    valid_mask: Option<&Path>,
) -> CliResult<String> {
    if sources.len() != poses.len() {
        return Err(CliError::Usage(format!("{} sources but {} poses", sources.len(), poses.len())));
    }
    let cfg = common.load()?;
    let k = cfg.camera()?;
    let plane = cfg.known_plane()?;
    let target = io::read_rgb(target_path)?;
    check_dims(target_path, target.dims(), &k)?;
    let gamma = io::read_field(gamma_path, FieldRole::Gamma)?;
    check_dims(gamma_path, gamma.dims(), &k)?;
    let images = sources
        .iter()
        .map(|s| {
            let img = io::read_rgb(s)?;
            check_dims(s, img.dims(), &k)?;
            Ok(img)
        })
        .collect::<CliResult<Vec<RgbImage>>>()?;
    let pose_vals = poses.iter().map(|p| io::read_pose(p)).collect::<CliResult<Vec<_>>>()?;
    let mask: Option<Vec<bool>> = match valid_mask {
        Some(p) => {
            let m = io::read_field(p, FieldRole::Scalar)?;
            check_dims(p, m.dims(), &k)?;
            let (w, h) = m.dims();
            Some((0..w * h).map(|i| m.get(i % w, i / w).is_some_and(|x| x > 0.5)).collect())
        }
        None => None,
    };
    let inputs = LossInputs {
        target: &target,
        sources: images.iter().zip(&pose_vals).map(|(image, &pose)| SourceView { image, pose }).collect(),
        gamma: &gamma,
        plane,
        k,
        n_ref: cfg.n_ref(),
        valid_mask: mask.as_deref(),
    };
    let report = evaluate_objective(&inputs, &cfg.loss, &cfg.road_mask)?;
    let mut named: Vec<(&str, &Path)> = vec![("target", target_path), ("gamma", gamma_path)];
    let labels: Vec<String> = (0..sources.len()).flat_map(|i| [format!("source{i}"), format!("pose{i}")]).collect();
    for (i, (s, p)) in sources.iter().zip(poses).enumerate() {
        named.push((&labels[2 * i], s));
        named.push((&labels[2 * i + 1], p));
    }
    if let Some(m) = valid_mask {
        named.push(("valid_mask", m));
    }
    Ok(io::to_json(&json!({ "loss": report, "provenance": provenance(&cfg, &named)? })))
}

fn pointcloud(common: &Common, depth_path: &Path, image: Option<&Path>, out: &Path) -> CliResult<String> {
    let cfg = common.load()?;
    let k = cfg.camera()?;
    let depth = io::read_field(depth_path, FieldRole::Depth)?;
    check_dims(depth_path, depth.dims(), &k)?;
    let color = image.map(io::read_rgb).transpose()?;
    if let (Some(c), Some(p)) = (&color, image) {
        check_dims(p, c.dims(), &k)?;
    }
    let cloud = depth_to_pointcloud(&depth, &k, color.as_ref())?;
    io::write_ply(out, &cloud)?;
    let mut inputs = vec![("depth", depth_path)];
    if let Some(p) = image {
        inputs.push(("image", p));
    }
    Ok(io::to_json(&json!({ "points": cloud.len(), "provenance": provenance(&cfg, &inputs)? })))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

#[derive(Serialize)]
struct Manifest {
    files: BTreeMap<String, String>,
}

fn write_manifest(dir: &Path, names: &[&str]) -> CliResult<()> {
    let mut files = BTreeMap::new();
    for n in names {
        files.insert(n.to_string(), io::sha256_file(&dir.join(n))?);
    }
    io::write_json(&dir.join("manifest.json"), &Manifest { files })
}

/// Files: target/source PNGs, `*_depth|gamma|height.pfm` per view,
/// `covisible.pfm`, `pose.json`, `plane.json`, `scene.toml`, and a
/// `run.toml` configured for this camera and plane.
fn gen_scene(spec: &SceneSpec, dir: &Path) -> CliResult<String> {
    let pair = render_pair(spec)?;
    create_dir(dir)?;
    for (name, view) in [("target", &pair.target), ("source", &pair.source)] {
        io::write_rgb(&dir.join(format!("{name}.png")), &view.image)?;
        io::write_field(&dir.join(format!("{name}_depth.pfm")), &view.depth)?;
        io::write_field(&dir.join(format!("{name}_gamma.pfm")), &view.gamma)?;
        io::write_field(&dir.join(format!("{name}_height.pfm")), &view.height)?;
    }
    let (w, h) = spec.camera.dims();
    let covis = ScalarField::new(w, h, FieldRole::Mask, pair.covisible.iter().map(|&c| c as u8 as f64).collect())?;
    io::write_field(&dir.join("covisible.pfm"), &covis)?;
    io::write_json(&dir.join("pose.json"), &pair.pose)?;
    io::write_json(&dir.join("plane.json"), &spec.plane)?;
    let scene_toml = toml::to_string(spec).map_err(|e| CliError::Data(e.to_string()))?;
    io::write_atomic(&dir.join("scene.toml"), scene_toml.as_bytes())?;
    let run = RunConfig {
        camera: Some(spec.camera),
        plane: PlaneSource::Fixed { normal: (*spec.plane.normal()).into(), camera_height: spec.plane.camera_height() },
        ..RunConfig::default()
    };
    let run_toml = toml::to_string(&run).map_err(|e| CliError::Data(e.to_string()))?;
    io::write_atomic(&dir.join("run.toml"), run_toml.as_bytes())?;
    let names = [
        "target.png", "target_depth.pfm", "target_gamma.pfm", "target_height.pfm", "source.png", "source_depth.pfm",
        "source_gamma.pfm", "source_height.pfm", "covisible.pfm", "pose.json", "plane.json", "scene.toml", "run.toml",
    ];
    write_manifest(dir, &names)?;
    Ok(io::to_json(&json!({
        "out_dir": dir,
        "valid_pixels": pair.target.depth.valid_count(),
        "covisible_pixels": pair.covisible.iter().filter(|&&c| c).count(),
        "scene_sha256": io::sha256_hex(scene_toml.as_bytes()),
    })))
}

/// The two-object fixture as 2×1 maps (column 0 tree, column 1 bump) plus
/// `fixture.csv` with the per-object errors.
fn gen_fixture(dir: &Path) -> CliResult<String> {
    let f = worked_fixture()?;
    create_dir(dir)?;
    for (name, field) in [
        ("gt_depth.pfm", &f.gt_depth),
        ("gt_height.pfm", &f.gt_height),
        ("gt_gamma.pfm", &f.gt_gamma),
        ("pred_depth.pfm", &f.pred_depth),
        ("pred_height.pfm", &f.pred_height),
        ("pred_gamma.pfm", &f.pred_gamma),
    ] {
        io::write_field(&dir.join(name), field)?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| CliError::Data(e.to_string());
    w.write_record([
        "name", "gt_depth", "gt_height", "gt_gamma", "pred_depth", "pred_height", "pred_gamma", "abs_depth",
        "abs_gamma", "abs_height",
    ])
    .map_err(csv_err)?;
    let mut rows = Vec::new();
    for r in worked_rows() {
        let (dd, dg, dh) = r.abs_errors();
        w.write_record(
            [r.name.to_string()].into_iter().chain(
                [r.gt.depth, r.gt.height, r.gt.gamma, r.pred.depth, r.pred.height, r.pred.gamma, dd, dg, dh].map(fmt),
            ),
        )
        .map_err(csv_err)?;
        rows.push(json!({ "name": r.name, "abs_depth": dd, "abs_gamma": dg, "abs_height": dh }));
    }
    io::write_atomic(&dir.join("fixture.csv"), &w.into_inner().map_err(|e| CliError::Data(e.to_string()))?)?;
    write_manifest(
        dir,
        &["gt_depth.pfm", "gt_height.pfm", "gt_gamma.pfm", "pred_depth.pfm", "pred_height.pfm", "pred_gamma.pfm", "fixture.csv"],
    )?;
    Ok(io::to_json(&json!({ "out_dir": dir, "rows": rows })))
}
