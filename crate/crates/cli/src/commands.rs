use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::anyhow;
use circlecal::calibration::{calibrate as run_calibration, CalibrationOptions, CalibrationProblem, Termination};
use circlecal::camera::PoseRecord;
use circlecal::io::{read_json, read_measurements, read_pose_pairs, write_atomic, write_json, write_measurements, write_residuals, SCHEMA_VERSION};
use circlecal::pose_eval::{pose_error, solve_axxb, PosePair, PosePairSet};
use circlecal::synthetic::{
    generate_scene, measure_centroids, oracle_measurements_with, render_view, run_sweep, sweep_to_csv, GrayImage,
    Measurement, SceneConfig, SweepConfig, SyntheticScene, TargetSpec,
};
use circlecal::{DistortionModel, Error, Execution, Intrinsics, PoseSE3};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::{CalibrateArgs, EvalPoseArgs, GenSceneArgs, MeasureArgs, SweepArgs};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub error: anyhow::Error,
}

pub type Outcome = std::result::Result<(), Failure>;

pub fn config(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: e.into() }
}

pub fn compute(e: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: e.into() }
}

/// Bad inputs exit with 2, everything else with 1.
fn classify(e: Error) -> Failure {
    match e {
        Error::InvalidParameter(_)
        | Error::InvalidDistortion { .. }
        | Error::NonPositiveRadius(_)
        | Error::Format(_) => config(e),
        _ => compute(e),
    }
}

fn read_input<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    read_json(path).map_err(config)
}

fn context(path: &Path) -> impl Fn(Error) -> Failure + '_ {
    move |e| compute(anyhow!("{}: {e}", path.display()))
}

fn create_dir(dir: &Path) -> Outcome {
    fs::create_dir_all(dir).map_err(|e| config(anyhow!("cannot create {}: {e}", dir.display())))
}

fn image_name(view: usize) -> String {
    format!("view_{view:04}.pgm")
}

#[derive(Debug, Serialize, Deserialize)]
struct MocapView {
    view_id: usize,
    t_mo: PoseRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct MocapFile {
    schema_version: u32,
    seed: u64,
    views: Vec<MocapView>,
}

#[derive(Debug, Serialize, Deserialize)]
struct HandEyeTruth {
    schema_version: u32,
    x: PoseRecord,
    y: PoseRecord,
}

fn random_pose(rng: &mut ChaCha8Rng, angle: f64, offset: f64) -> PoseSE3 {
    let mut v = || Vector3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
    let w = v().normalize() * angle;
    PoseSE3::from_axis_angle(w, v() * offset)
}

pub fn gen_scene(a: GenSceneArgs, exec: Execution) -> Outcome {
    let mut cfg = match &a.config {
        Some(p) => read_input::<SceneConfig>(p)?,
        None => {
            let seed = a.seed.ok_or_else(|| config(anyhow!("--seed is required without --config")))?;
            SceneConfig::reference(DistortionModel::new(&[-0.2]).map_err(classify)?, 100, seed)
        }
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(n) = a.views {
        cfg.n_views = n;
    }
    if let Some(d) = &a.distortion {
        cfg.distortion = DistortionModel::new(d).map_err(classify)?;
    }
    if let Some(b) = a.blur {
        cfg.blur_sigma = b;
    }
    cfg.validate().map_err(classify)?;
    let scene = generate_scene(&cfg).map_err(|e| match e {
        Error::SceneInfeasible(0) => compute(anyhow!(
            "distortion {:?} is not invertible over the image; adjust the higher coefficients",
            cfg.distortion.higher()
        )),
        e => classify(e),
    })?;

    create_dir(&a.out)?;
    write_json(&a.out.join("scene.json"), &scene).map_err(compute)?;
    if !a.no_images {
        let written = exec.map_range(scene.n_views(), |v| -> circlecal::Result<()> {
            render_view(&scene, v, Execution::Sequential)?.write_pgm(&a.out.join(image_name(v)))
        });
        written.into_iter().collect::<circlecal::Result<Vec<_>>>().map_err(compute)?;
    }
    if a.hand_eye {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let x = random_pose(&mut rng, 0.6, 0.05);
        let y = random_pose(&mut rng, 1.0, 1.0);
        let x_inv = x.inverse();
        let views = (0..scene.n_views())
            .map(|v| {
                let t_ct = scene.pose(v)?;
                Ok(MocapView { view_id: v, t_mo: PoseRecord::from(&y.compose(&t_ct).compose(&x_inv)) })
            })
            .collect::<circlecal::Result<Vec<_>>>()
            .map_err(compute)?;
        let mocap = MocapFile { schema_version: SCHEMA_VERSION, seed: cfg.seed, views };
        write_json(&a.out.join("mocap.json"), &mocap).map_err(compute)?;
        let truth = HandEyeTruth { schema_version: SCHEMA_VERSION, x: PoseRecord::from(&x), y: PoseRecord::from(&y) };
        write_json(&a.out.join("hand_eye.json"), &truth).map_err(compute)?;
    }
    println!(
        "scene: {} views, seed {}, distortion {:?}, blur {} -> {}",
        scene.n_views(),
        cfg.seed,
        cfg.distortion.higher(),
        cfg.blur_sigma,
        a.out.display()
    );
    Ok(())
}

enum Source {
    Oracle(usize),
    Render(SyntheticScene),
    Images(PathBuf),
}

pub fn measure(a: MeasureArgs, exec: Execution) -> Outcome {
    let scene: SyntheticScene = read_input(&a.scene)?;
    scene.config.validate().map_err(classify)?;
    let source = if a.oracle {
        let n = a.oracle_samples.unwrap_or(circlecal::estimators::ORACLE_SAMPLES);
        if n < 4 {
            return Err(config(anyhow!("--oracle-samples must be at least 4")));
        }
        Source::Oracle(n)
    } else if a.render {
        let mut s = scene.clone();
        if let Some(b) = a.blur {
            if !(b >= 0.0) {
                return Err(config(anyhow!("--blur must be non-negative")));
            }
            s.config.blur_sigma = b;
        }
        Source::Render(s)
    } else {
        let dir = a
            .images
            .clone()
            .unwrap_or_else(|| a.scene.parent().map(Path::to_path_buf).unwrap_or_default());
        if !dir.join(image_name(0)).is_file() {
            return Err(config(anyhow!("no {} in {}", image_name(0), dir.display())));
        }
        Source::Images(dir)
    };

    let mode = a.weight.into();
    let per_view = exec.map_range(scene.n_views(), |v| -> circlecal::Result<Vec<Measurement>> {
        match &source {
            Source::Oracle(n) => oracle_measurements_with(&scene, v, *n, Execution::Sequential),
            Source::Render(s) => measure_centroids(&render_view(s, v, Execution::Sequential)?, s, v, mode),
            Source::Images(dir) => {
                let path = dir.join(image_name(v));
                let img = GrayImage::read_pgm(&path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
                measure_centroids(&img, &scene, v, mode)
            }
        }
    });

    let mut all = Vec::new();
    let mut failed = 0;
    for (v, r) in per_view.into_iter().enumerate() {
        match r {
            Ok(ms) => all.extend(ms),
            Err(e) => {
                failed += 1;
                eprintln!("view {v}: {e}");
            }
        }
    }
    write_measurements(&a.out, &all).map_err(compute)?;
    println!("{} measurements from {} views -> {}", all.len(), scene.n_views() - failed, a.out.display());
    if failed > 0 {
        return Err(compute(anyhow!("{failed} of {} views failed", scene.n_views())));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
struct ViewPose {
    view_id: usize,
    pose: PoseRecord,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationRun {
    view_ids: Vec<usize>,
    intrinsics: Intrinsics,
    distortion: DistortionModel,
    rms: f64,
    final_cost: f64,
    iterations: usize,
    termination: Termination,
    poses: Vec<ViewPose>,
}

#[derive(Debug, Serialize, Deserialize)]
struct ParameterStats {
    name: String,
    mean: f64,
    std: f64,
}

#[derive(Debug, Serialize, Deserialize)]
struct CalibrationFile {
    schema_version: u32,
    seed: Option<u64>,
    options: CalibrationOptions,
    runs: Vec<CalibrationRun>,
    summary: Vec<ParameterStats>,
}

fn parameters(run: &CalibrationRun) -> Vec<(String, f64)> {
    let k = &run.intrinsics;
    let mut out = vec![
        ("fx".to_string(), k.fx),
        ("fy".to_string(), k.fy),
        ("skew".to_string(), k.skew),
        ("cx".to_string(), k.cx),
        ("cy".to_string(), k.cy),
    ];
    out.extend(run.distortion.higher().iter().enumerate().map(|(i, &d)| (format!("d{}", i + 1), d)));
    out
}

fn summarize(runs: &[CalibrationRun]) -> Vec<ParameterStats> {
    let names = parameters(&runs[0]);
    let n = runs.len() as f64;
    names
        .iter()
        .enumerate()
        .map(|(i, (name, _))| {
            let vals: Vec<f64> = runs.iter().map(|r| parameters(r)[i].1).collect();
            let mean = vals.iter().sum::<f64>() / n;
            let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            ParameterStats { name: name.clone(), mean, std: var.sqrt() }
        })
        .collect()
}

pub fn calibrate(a: CalibrateArgs, exec: Execution) -> Outcome {
    let circles = match (&a.scene, &a.target) {
        (Some(p), _) => read_input::<SyntheticScene>(p)?.circles(),
        (None, Some(p)) => {
            let t: TargetSpec = read_input(p)?;
            t.validate().map_err(classify)?;
            t.circles()
        }
        (None, None) => return Err(config(anyhow!("--scene or --target is required"))),
    };
    let mut options = match &a.config {
        Some(p) => read_input::<CalibrationOptions>(p)?,
        None => CalibrationOptions::default(),
    };
    if let Some(e) = a.estimator {
        options.estimator = e;
    }
    if let Some(n) = a.n_distortion {
        options.n_distortion = n;
    }
    options.estimate_skew |= a.skew;
    options.execution = exec;

    let ms = read_measurements(&a.measurements).map_err(config)?;
    let problem = CalibrationProblem::from_measurements(circles, &ms, options).map_err(classify)?;
    if a.repeats == 0 {
        return Err(config(anyhow!("--repeats must be positive")));
    }

    let subsets: Vec<Vec<usize>> = match a.subset {
        None if a.repeats > 1 => return Err(config(anyhow!("--repeats needs --subset"))),
        None => vec![(0..problem.views.len()).collect()],
        Some(k) => {
            let seed = a.seed.ok_or_else(|| config(anyhow!("--subset needs --seed")))?;
            if k < 3 || k > problem.views.len() {
                return Err(config(anyhow!("--subset must lie in [3, {}]", problem.views.len())));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..a.repeats)
                .map(|_| {
                    let mut idx = rand::seq::index::sample(&mut rng, problem.views.len(), k).into_vec();
                    idx.sort_unstable();
                    idx
                })
                .collect()
        }
    };

    let mut runs = Vec::with_capacity(subsets.len());
    let mut first_residuals = None;
    for idx in &subsets {
        let sub = CalibrationProblem {
            views: idx.iter().map(|&i| problem.views[i].clone()).collect(),
            ..problem.clone()
        };
        let r = run_calibration(&sub).map_err(compute)?;
        if first_residuals.is_none() {
            first_residuals = Some(r.residuals.clone());
        }
        runs.push(CalibrationRun {
            poses: r
                .view_ids
                .iter()
                .zip(&r.poses)
                .map(|(&view_id, p)| ViewPose { view_id, pose: PoseRecord::from(p) })
                .collect(),
            view_ids: r.view_ids,
            intrinsics: r.intrinsics,
            distortion: r.distortion,
            rms: r.rms,
            final_cost: r.final_cost,
            iterations: r.iterations,
            termination: r.termination,
        });
    }

    let summary = summarize(&runs);
    print_table(&runs, &summary);
    let file = CalibrationFile { schema_version: SCHEMA_VERSION, seed: a.seed, options, runs, summary };
    create_dir(&a.out)?;
    write_json(&a.out.join("calibration.json"), &file).map_err(compute)?;
    write_residuals(&a.out.join("residuals.csv"), &first_residuals.unwrap_or_default()).map_err(compute)?;
    Ok(())
}

fn print_table(runs: &[CalibrationRun], summary: &[ParameterStats]) {
    for (i, r) in runs.iter().enumerate() {
        println!(
            "run {i}: {} views, rms {:.3e} px, {} iterations, {}",
            r.view_ids.len(),
            r.rms,
            r.iterations,
            termination_name(r.termination)
        );
    }
    println!("{:<6} {:>16} {:>12}", "param", "mean", "std");
    for s in summary {
        println!("{:<6} {:>16.6} {:>12.3e}", s.name, s.mean, s.std);
    }
}

fn termination_name(t: Termination) -> impl Display {
    serde_json::to_value(t).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

pub fn sweep(a: SweepArgs, exec: Execution) -> Outcome {
    let mut cfg = match &a.config {
        Some(p) => read_input::<SweepConfig>(p)?,
        None => {
            let seed = a.seed.ok_or_else(|| config(anyhow!("--seed is required without --config")))?;
            SweepConfig { seed, ..Default::default() }
        }
    };
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(r) = a.radii {
        cfg.radii = r;
    }
    if let Some(d) = a.d1 {
        cfg.d1 = d;
    }
    if let Some(n) = a.scenes {
        cfg.n_scenes = n;
    }
    if let Some(e) = a.estimator {
        cfg.estimators = e;
    }
    if let Some(n) = a.oracle_samples {
        cfg.oracle_samples = n;
    }
    cfg.validate().map_err(classify)?;
    let rows = run_sweep(&cfg, exec).map_err(classify)?;
    write_atomic(&a.out, sweep_to_csv(&rows).as_bytes()).map_err(compute)?;

    let mut worst: BTreeMap<String, f64> = BTreeMap::new();
    for r in &rows {
        let e = worst.entry(r.estimator.to_string()).or_insert(0.0);
        *e = e.max(r.max_error);
    }
    println!("{} rows -> {}", rows.len(), a.out.display());
    for (name, w) in worst {
        println!("{name:<16} worst error {w:.3e} px");
    }
    Ok(())
}

#[derive(Debug, Serialize)]
struct PoseReport {
    schema_version: u32,
    n_pairs: usize,
    x: PoseRecord,
    y: PoseRecord,
    rotation_deg: f64,
    translation_mm: f64,
}

pub fn eval_pose(a: EvalPoseArgs) -> Outcome {
    let pairs = match (&a.pairs, &a.calibration, &a.mocap) {
        (Some(p), _, _) => read_pose_pairs(p).map_err(config)?,
        (None, Some(c), Some(m)) => {
            let cal: CalibrationFile = read_input(c)?;
            let mocap: MocapFile = read_input(m)?;
            let run = cal.runs.first().ok_or_else(|| config(anyhow!("{} has no runs", c.display())))?;
            let t_mo: BTreeMap<usize, PoseRecord> = mocap.views.iter().map(|v| (v.view_id, v.t_mo)).collect();
            run.poses
                .iter()
                .filter_map(|v| {
                    t_mo.get(&v.view_id).map(|m| PosePair { t_mo: PoseSE3::from(m), t_ct: PoseSE3::from(&v.pose) })
                })
                .collect()
        }
        _ => return Err(config(anyhow!("give --pairs, or --calibration with --mocap"))),
    };
    let set = PosePairSet::new(pairs).map_err(classify)?;
    let (x, y) = solve_axxb(&set).map_err(context(a.pairs.as_deref().unwrap_or(Path::new("pose pairs"))))?;
    let err = pose_error(&set, &x, &y);
    let report = PoseReport {
        schema_version: SCHEMA_VERSION,
        n_pairs: set.len(),
        x: PoseRecord::from(&x),
        y: PoseRecord::from(&y),
        rotation_deg: err.rotation_deg,
        translation_mm: err.translation_mm,
    };
    write_json(&a.out, &report).map_err(compute)?;
    println!(
        "{} pairs: rotation error {:.3e} deg, translation error {:.3e} mm",
        set.len(),
        err.rotation_deg,
        err.translation_mm
    );
    Ok(())
}
