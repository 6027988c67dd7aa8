use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crack_repair::geometry::Point3;
use crack_repair::perception::write_waypoints_csv;
use crack_repair::profile::CalibrationModel;
use crack_repair::raster::MaskImage;
use crack_repair::repair::{
    calibration_experiment, derive_seed, localize, refine, run_fill, FillMode, FillRun, FillSummary,
    LocalizationReport, Scene,
};
use log::info;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{CalibrationSource, ScenarioConfig};
use crate::error::CliError;

/// Collects written artifact paths under one output directory.
pub struct Output {
    dir: PathBuf,
    pub written: Vec<PathBuf>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), written: Vec::new() })
    }

    pub fn write(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut BufWriter<File>) -> io::Result<()>,
    ) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        f(&mut w).and_then(|_| w.flush()).map_err(|e| CliError::io(&path, e))?;
        info!("wrote {}", path.display());
        self.written.push(path);
        Ok(())
    }

    pub fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value).map_err(io::Error::other)?;
            writeln!(w)
        })
    }
}

/// Runs `f` over `items` in order, on `threads` workers when more than one.
fn par_map<T, R, F>(threads: usize, items: &[T], f: F) -> Result<Vec<R>, CliError>
where
    T: Sync,
    R: Send,
    F: Fn(&T) -> Result<R, CliError> + Sync + Send,
{
    if threads <= 1 {
        return items.iter().map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    pool.install(|| items.par_iter().map(f).collect())
}

fn calibrate_synthetic(
    scene: &Scene,
    cfg: &ScenarioConfig,
) -> Result<Option<crack_repair::repair::CalibrationRun>, CliError> {
    match &cfg.calibration {
        CalibrationSource::Synthetic { strips } => Ok(Some(calibration_experiment(scene, strips)?)),
        CalibrationSource::File { .. } => Ok(None),
    }
}

fn calibration(scene: &Scene, cfg: &ScenarioConfig) -> Result<CalibrationModel, CliError> {
    match &cfg.calibration {
        CalibrationSource::File { path } => ScenarioConfig::read_calibration(path),
        CalibrationSource::Synthetic { strips } => Ok(calibration_experiment(scene, strips)?.model),
    }
}

fn write_calibration(out: &mut Output, model: &CalibrationModel) -> Result<(), CliError> {
    out.json("calibration.json", model)?;
    out.write("calibration.csv", |w| model.write_csv(w))
}

/// Prints and scans calibration strips, then fits the flow model.
pub fn cmd_calibrate(cfg: &ScenarioConfig, out: &mut Output) -> Result<(), CliError> {
    let scene = cfg.scene();
    let run = match calibrate_synthetic(&scene, cfg)? {
        Some(run) => run,
        None => return Err(CliError::Config("calibrate needs a synthetic calibration source".into())),
    };
    write_calibration(out, &run.model)?;
    for (v, profiles) in &run.strip_scans {
        for (k, p) in profiles.iter().enumerate() {
            out.write(&format!("strips/speed_{v}_station_{k:02}.csv"), |w| p.write_csv(w))?;
        }
    }
    Ok(())
}

/// The full pipeline on one specimen in `cfg.fill_mode`.
pub fn cmd_fill(cfg: &ScenarioConfig, out: &mut Output) -> Result<(), CliError> {
    let scene = cfg.scene();
    let calib = calibration(&scene, cfg)?;
    let hf = scene.specimen()?;
    let seg = cfg.segmenter();
    let loc = localize(&scene, &hf, seg.as_ref(), &scene.noise)?;
    let refinement = refine(&scene, &hf, &loc, &scene.noise)?;
    let setup = scene.scan_setup(loc.orientation, &scene.noise);
    let run = run_fill(&scene, &hf, &refinement, &setup, &calib, cfg.fill_mode)?;
    out.write("waypoints.csv", |w| write_waypoints_csv(w, &run.plan.waypoints))?;
    out.write("heightfield_pre.pgm", |w| hf.write_pgm(w))?;
    out.write("heightfield_post.pgm", |w| run.hf_after.write_pgm(w))?;
    out.write("fill_report.csv", |w| run.report.write_csv(w))?;
    out.json("fill_summary.json", &run.report.summary())
}

fn mode_label(m: FillMode) -> String {
    match m {
        FillMode::Adaptive => "Adaptive".into(),
        FillMode::Fixed(v) => format!("{v}"),
    }
}

pub fn write_table2_csv<W: Write + ?Sized>(w: &mut W, rows: &[FillSummary]) -> io::Result<()> {
    writeln!(w, "Speed (mm/s),Mean,Std. Dev.,Median,Time (s)")?;
    for r in rows {
        writeln!(w, "{},{:.6},{:.6},{:.6},{:.6}", mode_label(r.mode), r.mean, r.std, r.median, r.time_s)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Table2<'a> {
    calibration_q: f64,
    rows: &'a [FillSummary],
}

/// Table 2 runs: every configured mode on identical fresh specimens.
pub fn table2_runs(cfg: &ScenarioConfig, threads: usize) -> Result<(CalibrationModel, Vec<FillRun>), CliError> {
    let scene = cfg.scene();
    let calib = calibration(&scene, cfg)?;
    let hf = scene.specimen()?;
    let seg = cfg.segmenter();
    let loc = localize(&scene, &hf, seg.as_ref(), &scene.noise)?;
    let refinement = refine(&scene, &hf, &loc, &scene.noise)?;
    let setup = scene.scan_setup(loc.orientation, &scene.noise);
    let runs = par_map(threads, &cfg.modes, |&m| Ok(run_fill(&scene, &hf, &refinement, &setup, &calib, m)?))?;
    Ok((calib, runs))
}

pub fn cmd_experiment(cfg: &ScenarioConfig, out: &mut Output, threads: usize) -> Result<(), CliError> {
    let (calib, runs) = table2_runs(cfg, threads)?;
    let rows: Vec<FillSummary> = runs.iter().map(|r| r.report.summary()).collect();
    out.write("table2.csv", |w| write_table2_csv(w, &rows))?;
    out.json("table2.json", &Table2 { calibration_q: calib.q, rows: &rows })?;
    for r in &runs {
        let name = format!("fill_reports/{}.csv", mode_label(r.report.mode).to_lowercase());
        out.write(&name, |w| r.report.write_csv(w))?;
    }
    Ok(())
}

pub fn localization_report(cfg: &ScenarioConfig, threads: usize) -> Result<LocalizationReport, CliError> {
    let scene = cfg.scene();
    let hf = scene.specimen()?;
    let seg = cfg.segmenter();
    let scans: Vec<u64> = (0..cfg.localization_scans as u64).collect();
    let per_scan = par_map(threads, &scans, |&s| {
        let noise = scene.noise.with_seed(derive_seed(scene.noise.seed, s));
        let loc = localize(&scene, &hf, seg.as_ref(), &noise)?;
        let refined = refine(&scene, &hf, &loc, &noise)?;
        Ok(LocalizationReport::pairs_of(&refined.waypoints))
    })?;
    let pairs: Vec<(Point3, Point3)> = per_scan.into_iter().flatten().collect();
    Ok(LocalizationReport::from_pairs(&pairs, Some(&scene.crack)))
}

pub fn write_table3_csv<W: Write + ?Sized>(w: &mut W, r: &LocalizationReport) -> io::Result<()> {
    writeln!(w, "Coordinate,Average Difference (mm),Std. Dev. (mm)")?;
    for (name, s) in [("X", r.x), ("Y", r.y), ("Z", r.z), ("Distance", r.distance)] {
        writeln!(w, "{name},{:.6},{:.6}", s.mean, s.std)?;
    }
    Ok(())
}

pub fn cmd_localize(cfg: &ScenarioConfig, out: &mut Output, threads: usize) -> Result<(), CliError> {
    let report = localization_report(cfg, threads)?;
    out.json("table3.json", &report)?;
    out.write("table3.csv", |w| write_table3_csv(w, &report))
}

/// Sensor views and intermediate perception products, no deposition.
pub fn cmd_scan(cfg: &ScenarioConfig, out: &mut Output) -> Result<(), CliError> {
    let scene = cfg.scene();
    let hf = scene.specimen()?;
    let seg = cfg.segmenter();
    let loc = localize(&scene, &hf, seg.as_ref(), &scene.noise)?;
    let refinement = refine(&scene, &hf, &loc, &scene.noise)?;
    let sk = &loc.skeleton.image;
    let skeleton = MaskImage {
        width: sk.width,
        height: sk.height,
        data: sk.data.iter().map(|&b| if b { 255 } else { 0 }).collect(),
    };
    out.write("heightfield.pgm", |w| hf.write_pgm(w))?;
    out.write("depth.pgm", |w| loc.depth.write_pgm(w))?;
    out.write("mask.pgm", |w| loc.mask.write_pgm(w))?;
    out.write("skeleton.pgm", |w| skeleton.write_pgm(w))?;
    out.write("waypoints.csv", |w| write_waypoints_csv(w, &refinement.waypoints))?;
    for st in &refinement.stations {
        out.write(&format!("profiles/station_{:02}.csv", st.index), |w| st.profile.write_csv(w))?;
    }
    Ok(())
}
