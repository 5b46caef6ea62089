//! End-to-end run: features, matching and voting, groupwise solve, guided
//! registration and evaluation, plus artifact emission and the on-disk
//! cache for features and Hough spaces.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::PipelineConfig;
use super::scenario::{generate_scenario, SyntheticScenario};
use crate::error::{Error, Result};
use crate::eval::{fit_rigid, rigid_component_errors, rmse, write_ground_truth, write_metrics, GroundTruthCorrespondences, MetricsRow};
use crate::features::cache::{read_features, write_features};
use crate::features::{dense_sample, top_k_matches, FeatureSet, ImageGrid};
use crate::geometry::{angle_diff, Homography, Point, RigidTransform};
use crate::groupwise::{solve_sequential, GroupSolution, ImageGroup, RelationMask};
use crate::guided::{register_to_reference, write_registrations, Registration};
use crate::hough::io::{read_hough, write_hough};
use crate::hough::{build_hough_space, HoughSpace};

/// Environment variable naming the cache directory.
pub const CACHE_ENV: &str = "GROUPREG_CACHE_DIR";

/// Images of one group and optional ground truth keyed by image id.
#[derive(Debug, Clone)]
pub struct PipelineInputs {
    pub reference: ImageGrid,
    pub historical: Vec<ImageGrid>,
    pub ids: Vec<String>,
    pub ground_truth: BTreeMap<String, GroundTruthCorrespondences>,
}

impl PipelineInputs {
    /// Ids default to `hist_00`, `hist_01`, ...
    pub fn new(reference: ImageGrid, historical: Vec<ImageGrid>) -> Self {
        let ids = (0..historical.len()).map(|k| format!("hist_{k:02}")).collect();
        Self {
            reference,
            historical,
            ids,
            ground_truth: BTreeMap::new(),
        }
    }

    /// Ids are the file stems of the historical images.
    pub fn load(reference: &Path, historical: &[PathBuf], ground_truth: Option<&Path>, meters_per_px: f64) -> Result<Self> {
        if historical.is_empty() {
            return Err(Error::InvalidInput("no historical images given".into()));
        }
        let reference = ImageGrid::load(reference, meters_per_px)?;
        let images = historical
            .iter()
            .map(|p| ImageGrid::load(p, meters_per_px))
            .collect::<Result<Vec<_>>>()?;
        let ids: Vec<String> = historical
            .iter()
            .map(|p| p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default())
            .collect();
        for (i, id) in ids.iter().enumerate() {
            if ids[..i].contains(id) {
                return Err(Error::InvalidInput(format!("duplicate image id `{id}`")));
            }
        }
        let ground_truth = match ground_truth {
            Some(p) => crate::eval::read_ground_truth(File::open(p)?)?,
            None => BTreeMap::new(),
        };
        if let Some(unknown) = ground_truth.keys().find(|k| !ids.contains(k)) {
            return Err(Error::InvalidInput(format!("ground truth for unknown image `{unknown}`")));
        }
        Ok(Self {
            reference,
            historical: images,
            ids,
            ground_truth,
        })
    }

    fn from_scenario(spec: &SyntheticScenario) -> Result<Self> {
        let imgs = generate_scenario(spec)?;
        let mut inputs = Self::new(imgs.reference, imgs.historical);
        inputs.ground_truth = inputs.ids.iter().cloned().zip(imgs.ground_truth).collect();
        Ok(inputs)
    }
}

/// Feature and Hough space cache. Unreadable entries are recomputed.
#[derive(Debug, Clone, Default)]
pub struct Cache {
    dir: Option<PathBuf>,
}

impl Cache {
    pub fn disabled() -> Self {
        Self { dir: None }
    }

    pub fn at(dir: impl Into<PathBuf>) -> Self {
        Self { dir: Some(dir.into()) }
    }

    /// Uses the directory named by [`CACHE_ENV`], if set.
    pub fn from_env() -> Self {
        Self {
            dir: std::env::var_os(CACHE_ENV).filter(|v| !v.is_empty()).map(PathBuf::from),
        }
    }

    pub fn dir(&self) -> Option<&Path> {
        self.dir.as_deref()
    }

    fn path(&self, kind: &str, key: &str) -> Option<PathBuf> {
        self.dir.as_ref().map(|d| d.join(kind).join(format!("{key}.bin")))
    }

    fn load<T>(&self, kind: &str, key: &str, read: impl FnOnce(BufReader<File>) -> Result<T>) -> Option<T> {
        let path = self.path(kind, key)?;
        let file = File::open(&path).ok()?;
        match read(BufReader::new(file)) {
            Ok(v) => Some(v),
            Err(e) => {
                log::warn!("ignoring unreadable cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn store(&self, kind: &str, key: &str, write: impl FnOnce(&mut BufWriter<File>) -> Result<()>) -> Result<()> {
        let Some(path) = self.path(kind, key) else { return Ok(()) };
        let dir = path.parent().expect("cache paths have a parent");
        std::fs::create_dir_all(dir)?;
        // Written aside and renamed so readers never see partial entries.
        let tmp = dir.join(format!("{key}.{}.tmp", std::process::id()));
        let mut w = BufWriter::new(File::create(&tmp)?);
        write(&mut w)?;
        w.flush()?;
        drop(w);
        std::fs::rename(&tmp, &path)?;
        Ok(())
    }
}

/// Counts of work skipped or done, for cache diagnostics.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheStats {
    pub feature_hits: usize,
    pub hough_hits: usize,
    /// Image pairs whose matches were computed.
    pub pairs_matched: usize,
}

fn hex(d: impl AsRef<[u8]>) -> String {
    d.as_ref().iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn feature_key(img: &ImageGrid, cfg: &PipelineConfig) -> String {
    let mut h = Sha256::new();
    h.update(b"dense-v1");
    h.update((img.width() as u64).to_le_bytes());
    h.update((img.height() as u64).to_le_bytes());
    h.update(img.meters_per_px().to_le_bytes());
    h.update(cfg.feature_step.to_le_bytes());
    h.update(cfg.feature_support.to_le_bytes());
    for p in img.pixels() {
        h.update(p.to_le_bytes());
    }
    hex(h.finalize())
}

fn hough_key(a: &str, b: &str, cfg: &PipelineConfig) -> String {
    let p = &cfg.hough;
    let mut h = Sha256::new();
    h.update(b"hough-v1");
    h.update(a.as_bytes());
    h.update(b.as_bytes());
    h.update((cfg.top_k as u64).to_le_bytes());
    h.update(cfg.zoning.to_le_bytes());
    h.update((p.rot_bins as u64).to_le_bytes());
    for v in [p.trans_bin, p.extent, p.smoothing_sigma, p.truncate] {
        h.update(v.to_le_bytes());
    }
    hex(h.finalize())
}

/// Dense features of every image, through the cache.
pub fn extract_all(images: &[&ImageGrid], cfg: &PipelineConfig, cache: &Cache, stats: &mut CacheStats) -> Result<(Vec<FeatureSet>, Vec<String>)> {
    let keys: Vec<String> = images.par_iter().map(|img| feature_key(img, cfg)).collect();
    let mut out = Vec::with_capacity(images.len());
    for (img, key) in images.iter().zip(&keys) {
        if let Some(f) = cache.load("features", key, read_features) {
            stats.feature_hits += 1;
            out.push(f);
            continue;
        }
        let f = dense_sample(img, cfg.feature_step, cfg.feature_support)?;
        cache.store("features", key, |w| write_features(&f, w))?;
        out.push(f);
    }
    Ok((out, keys))
}

/// Voting spaces of `a → b` and, when `both`, of `b → a`, through the cache.
fn pair_spaces(
    fa: (&FeatureSet, &str),
    fb: (&FeatureSet, &str),
    both: bool,
    cfg: &PipelineConfig,
    cache: &Cache,
    stats: &mut CacheStats,
) -> Result<(HoughSpace, Option<HoughSpace>)> {
    let kab = hough_key(fa.1, fb.1, cfg);
    let kba = hough_key(fb.1, fa.1, cfg);
    let ab = cache.load("hough", &kab, read_hough);
    let ba = if both { cache.load("hough", &kba, read_hough) } else { None };
    if let (Some(ab), true) = (&ab, !both || ba.is_some()) {
        stats.hough_hits += 1;
        return Ok((ab.clone(), ba));
    }
    stats.pairs_matched += 1;
    let m = top_k_matches(fa.0, fb.0, cfg.top_k);
    let (ab, ba) = rayon::join(
        || build_hough_space(&m, cfg.zoning, &cfg.hough),
        || both.then(|| build_hough_space(&m.swapped(), cfg.zoning, &cfg.hough)).transpose(),
    );
    let (ab, ba) = (ab?, ba?);
    cache.store("hough", &kab, |w| write_hough(&ab, w))?;
    if let Some(ba) = &ba {
        cache.store("hough", &kba, |w| write_hough(ba, w))?;
    }
    Ok((ab, ba))
}

/// All direct and pairwise voting spaces of a group.
pub fn build_group(features: &[FeatureSet], keys: &[String], cfg: &PipelineConfig, cache: &Cache, stats: &mut CacheStats) -> Result<ImageGroup> {
    let n = features.len() - 1;
    let f = |k: usize| (&features[k], keys[k].as_str());
    let mut direct = Vec::with_capacity(n);
    for k in 0..n {
        direct.push(pair_spaces(f(k), f(n), false, cfg, cache, stats)?.0);
    }
    let mut pairs = BTreeMap::new();
    for k in 0..n {
        for l in k + 1..n {
            let (kl, lk) = pair_spaces(f(k), f(l), true, cfg, cache, stats)?;
            pairs.insert((k, l), kl);
            pairs.insert((l, k), lk.expect("both orders requested"));
        }
    }
    ImageGroup::new(direct, pairs)
}

/// Spread of solutions over solver seeds for one image.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageStability {
    pub mean: RigidTransform,
    /// Root of the summed per-axis sample variances, meters.
    pub trans_std_m: f64,
    /// Sample standard deviation of the rotation about its circular mean.
    pub rot_std_deg: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    pub seeds: Vec<u64>,
    pub images: Vec<ImageStability>,
}

impl StabilityReport {
    /// Needs at least two solutions of equal size.
    pub fn from_solutions(seeds: Vec<u64>, solutions: &[GroupSolution]) -> Result<Self> {
        let r = solutions.len();
        if r < 2 || seeds.len() != r {
            return Err(Error::InvalidInput("stability needs at least two seeded solutions".into()));
        }
        let n = solutions[0].transforms.len();
        if solutions.iter().any(|s| s.transforms.len() != n) {
            return Err(Error::InvalidInput("solutions differ in size".into()));
        }
        let images = (0..n)
            .map(|k| {
                let ts: Vec<&RigidTransform> = solutions.iter().map(|s| &s.transforms[k]).collect();
                let mean_v = ts.iter().map(|t| t.translation()).sum::<nalgebra::Vector2<f64>>() / r as f64;
                let (sin, cos) = ts.iter().fold((0.0, 0.0), |(s, c), t| (s + t.gamma().sin(), c + t.gamma().cos()));
                let mean_g = sin.atan2(cos);
                let var_t = ts.iter().map(|t| (t.translation() - mean_v).norm_squared()).sum::<f64>() / (r - 1) as f64;
                let var_g = ts.iter().map(|t| angle_diff(t.gamma(), mean_g).powi(2)).sum::<f64>() / (r - 1) as f64;
                ImageStability {
                    mean: RigidTransform::new(mean_v.x, mean_v.y, mean_g),
                    trans_std_m: var_t.sqrt(),
                    rot_std_deg: var_g.sqrt().to_degrees(),
                }
            })
            .collect();
        Ok(Self { seeds, images })
    }

    pub fn max_trans_std(&self) -> f64 {
        self.images.iter().map(|s| s.trans_std_m).fold(0.0, f64::max)
    }

    pub fn max_rot_std(&self) -> f64 {
        self.images.iter().map(|s| s.rot_std_deg).fold(0.0, f64::max)
    }

    pub fn to_text(&self, ids: &[String]) -> String {
        let mut s = format!("# {} solver seeds\nimage_id,mean_vx_m,mean_vy_m,mean_gamma_deg,trans_std_m,rot_std_deg\n", self.seeds.len());
        for (id, st) in ids.iter().zip(&self.images) {
            let _ = writeln!(
                s,
                "{id},{:.4},{:.4},{:.4},{:.4},{:.4}",
                st.mean.vx,
                st.mean.vy,
                st.mean.gamma_degrees(),
                st.trans_std_m,
                st.rot_std_deg
            );
        }
        s
    }
}

#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub solution: GroupSolution,
    pub registrations: Vec<Registration>,
    /// One row per image with ground truth.
    pub metrics: Vec<MetricsRow>,
    /// Present when more than one run was requested.
    pub stability: Option<StabilityReport>,
    /// Wall-clock seconds per pipeline stage.
    pub timings: Vec<(&'static str, f64)>,
    pub cache: CacheStats,
}

impl PipelineOutput {
    pub fn timing_report(&self) -> String {
        let mut s = String::from("stage,seconds\n");
        for (name, t) in &self.timings {
            let _ = writeln!(s, "{name},{t:.3}");
        }
        for st in &self.solution.stages {
            let _ = writeln!(s, "solver/{},{:.3}", st.name, st.seconds);
        }
        let total: f64 = self.timings.iter().map(|t| t.1).sum();
        let _ = writeln!(s, "total,{total:.3}");
        s
    }
}

fn timed<T>(timings: &mut Vec<(&'static str, f64)>, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
    let t0 = Instant::now();
    let out = f().map_err(|e| e.in_stage(stage));
    timings.push((stage, t0.elapsed().as_secs_f64()));
    out
}

/// Features and voting spaces only, as used by `register` and `guided`.
pub fn prepare_group(inputs: &PipelineInputs, cfg: &PipelineConfig, cache: &Cache) -> Result<(ImageGroup, CacheStats)> {
    let mut stats = CacheStats::default();
    let images: Vec<&ImageGrid> = inputs.historical.iter().chain(std::iter::once(&inputs.reference)).collect();
    let (features, keys) = extract_all(&images, cfg, cache, &mut stats).map_err(|e| e.in_stage("features"))?;
    let group = build_group(&features, &keys, cfg, cache, &mut stats).map_err(|e| e.in_stage("hough"))?;
    Ok((group, stats))
}

/// Ground-truth metrics for every image that has correspondences.
pub fn evaluate(inputs: &PipelineInputs, solution: &GroupSolution, homographies: &[Homography]) -> Vec<MetricsRow> {
    inputs
        .ids
        .iter()
        .enumerate()
        .filter_map(|(k, id)| {
            let gt = inputs.ground_truth.get(id)?;
            let (t, r) = rigid_component_errors(&solution.transforms[k], &fit_rigid(gt));
            Some(MetricsRow {
                image_id: id.clone(),
                rmse_m: rmse(gt, |p| homographies[k].apply(p)),
                trans_err_m: t,
                rot_err_deg: r,
            })
        })
        .collect()
}

/// Runs every stage in order. Errors name the stage they surfaced in.
pub fn run_stages(inputs: &PipelineInputs, cfg: &PipelineConfig, cache: &Cache) -> Result<PipelineOutput> {
    cfg.validate()?;
    if inputs.historical.is_empty() || inputs.ids.len() != inputs.historical.len() {
        return Err(Error::InvalidInput("inputs need one id per historical image".into()));
    }
    let mut timings = Vec::new();
    let mut stats = CacheStats::default();
    let images: Vec<&ImageGrid> = inputs.historical.iter().chain(std::iter::once(&inputs.reference)).collect();
    let (features, keys) = timed(&mut timings, "features", || extract_all(&images, cfg, cache, &mut stats))?;
    let group = timed(&mut timings, "hough", || build_group(&features, &keys, cfg, cache, &mut stats))?;
    drop(features);
    let mask = RelationMask::full(group.len());
    let solution = timed(&mut timings, "groupwise", || solve_sequential(&group, &mask, &cfg.seeded_solver(cfg.rng_seed)))?;
    let stability = timed(&mut timings, "stability", || {
        if cfg.runs < 2 {
            return Ok(None);
        }
        let seeds: Vec<u64> = (0..cfg.runs as u64).map(|i| cfg.rng_seed.wrapping_add(i)).collect();
        let mut sols = vec![solution.clone()];
        for &s in &seeds[1..] {
            sols.push(solve_sequential(&group, &mask, &cfg.seeded_solver(s))?);
        }
        StabilityReport::from_solutions(seeds, &sols).map(Some)
    })?;
    let registrations = timed(&mut timings, "guided", || {
        register_to_reference(&inputs.historical, &inputs.reference, &group, &mask, &solution, &cfg.seeded_guided())
    })?;
    let homographies: Vec<Homography> = registrations.iter().map(|r| r.homography).collect();
    let metrics = timed(&mut timings, "eval", || Ok(evaluate(inputs, &solution, &homographies)))?;
    Ok(PipelineOutput {
        solution,
        registrations,
        metrics,
        stability,
        timings,
        cache: stats,
    })
}

/// Reference image with historical images shown in alternating checkerboard
/// cells of `cell_px` pixels. Visual inspection only.
pub fn checkerboard_mosaic(reference: &ImageGrid, historical: &[ImageGrid], homographies: &[Homography], cell_px: usize) -> Result<ImageGrid> {
    if historical.len() != homographies.len() || cell_px == 0 {
        return Err(Error::InvalidInput("mosaic needs one homography per image and a positive cell".into()));
    }
    let inv = homographies.iter().map(Homography::inverse).collect::<Result<Vec<_>>>()?;
    let (w, h) = (reference.width(), reference.height());
    let px = (0..w * h)
        .into_par_iter()
        .map(|i| {
            let (c, r) = (i % w, i / w);
            let base = reference.get(c, r);
            let (cx, cy) = (c / cell_px, r / cell_px);
            if (cx + cy) % 2 == 0 {
                return base;
            }
            let p: Point = reference.to_meters(c as f64, r as f64);
            let covering: Vec<f32> = historical
                .iter()
                .zip(&inv)
                .filter_map(|(img, hi)| {
                    let (hc, hr) = img.to_pixel(&hi.apply(&p));
                    img.sample(hc, hr)
                })
                .collect();
            if covering.is_empty() {
                base
            } else {
                covering[(cx + cy) / 2 % covering.len()]
            }
        })
        .collect();
    ImageGrid::new(w, h, px, reference.meters_per_px())
}

/// Writes `solution.txt`, `homographies.csv`, `timing.csv`, the effective
/// `config.txt`, and when available `metrics.csv`, `stability.csv` and
/// `mosaic.png`.
pub fn write_outputs(out: &PipelineOutput, inputs: &PipelineInputs, cfg: &PipelineConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut sol = String::new();
    for (k, id) in inputs.ids.iter().enumerate() {
        let _ = writeln!(sol, "# image {k} = {id}");
    }
    sol.push_str(&out.solution.to_text());
    std::fs::write(dir.join("solution.txt"), sol)?;
    write_registrations(&out.registrations, &inputs.ids, BufWriter::new(File::create(dir.join("homographies.csv"))?))?;
    if !out.metrics.is_empty() {
        write_metrics(&out.metrics, File::create(dir.join("metrics.csv"))?)?;
    }
    if let Some(st) = &out.stability {
        std::fs::write(dir.join("stability.csv"), st.to_text(&inputs.ids))?;
    }
    std::fs::write(dir.join("timing.csv"), out.timing_report())?;
    std::fs::write(dir.join("config.txt"), cfg.to_text())?;
    if cfg.mosaic {
        let hs: Vec<Homography> = out.registrations.iter().map(|r| r.homography).collect();
        let cell = (inputs.reference.width().max(inputs.reference.height()) / 8).max(1);
        checkerboard_mosaic(&inputs.reference, &inputs.historical, &hs, cell)?.save(&dir.join("mosaic.png"))?;
    }
    Ok(())
}

/// Full pipeline with artifacts written to `out_dir`.
pub fn run_pipeline(inputs: &PipelineInputs, cfg: &PipelineConfig, cache: &Cache, out_dir: &Path) -> Result<PipelineOutput> {
    let out = run_stages(inputs, cfg, cache)?;
    write_outputs(&out, inputs, cfg, out_dir).map_err(|e| e.in_stage("output"))?;
    Ok(out)
}

/// Runs `f` on a pool of `threads` workers, or on the global pool for 0.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    if threads == 0 {
        return Ok(f());
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::InvalidInput(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Renders a scenario and writes `reference.png`, `hist_XX.png`,
/// `ground_truth.csv` and the planted transforms as `truth.txt`. Returns the
/// historical image paths.
pub fn write_scenario(spec: &SyntheticScenario, dir: &Path) -> Result<Vec<PathBuf>> {
    let inputs = PipelineInputs::from_scenario(spec)?;
    std::fs::create_dir_all(dir)?;
    inputs.reference.save(&dir.join("reference.png"))?;
    let mut paths = Vec::new();
    for (img, id) in inputs.historical.iter().zip(&inputs.ids) {
        let p = dir.join(format!("{id}.png"));
        img.save(&p)?;
        paths.push(p);
    }
    write_ground_truth(&inputs.ground_truth, File::create(dir.join("ground_truth.csv"))?)?;
    let truth = GroupSolution {
        transforms: spec.transforms.clone(),
        fitness: 0.0,
        stages: Vec::new(),
    };
    std::fs::write(dir.join("truth.txt"), format!("# planted transforms\n{}", truth.to_text()))?;
    Ok(paths)
}

/// In-memory inputs of a rendered scenario, with ground truth.
pub fn scenario_inputs(spec: &SyntheticScenario) -> Result<PipelineInputs> {
    PipelineInputs::from_scenario(spec)
}
