//! Pipeline configuration as a plain `key = value` file. Later settings
//! (including command-line overrides) replace earlier ones.

use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::groupwise::SolverConfig;
use crate::guided::GuidedMatchConfig;
use crate::hough::HoughParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    /// Ground sampling distance of all input images.
    pub meters_per_px: f64,
    /// Dense sampling step, meters.
    pub feature_step: f64,
    /// Dense descriptor support diameter, meters.
    pub feature_support: f64,
    /// Distance-ratio threshold for inlier-ratio measurements.
    pub ratio_tau: f64,
    pub hough: HoughParams,
    /// Matches kept per image pair.
    pub top_k: usize,
    /// Correspondence zoning cell, meters.
    pub zoning: f64,
    pub solver: SolverConfig,
    pub guided: GuidedMatchConfig,
    pub rng_seed: u64,
    /// Solver repetitions for the stability report.
    pub runs: usize,
    /// Worker threads, 0 for all cores.
    pub threads: usize,
    pub mosaic: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            meters_per_px: 1.0,
            feature_step: 40.0,
            feature_support: 240.0,
            ratio_tau: 0.7,
            hough: HoughParams::default(),
            top_k: 100_000,
            zoning: 100.0,
            solver: SolverConfig::default(),
            guided: GuidedMatchConfig::default(),
            rng_seed: 0,
            runs: 50,
            threads: 0,
            mosaic: true,
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::format("config", format!("`{key}`: cannot parse `{value}`")))
}

impl PipelineConfig {
    /// Settings for 512 px synthetic scenes at 1 m per pixel.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.feature_step = 8.0;
        c.feature_support = 64.0;
        c.top_k = 10_000;
        c.zoning = 32.0;
        c.hough.extent = 600.0;
        c.guided.position_threshold = 100.0;
        c.runs = 10;
        c
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "full" | "default" => Ok(Self::default()),
            "desk" => Ok(Self::desk()),
            _ => Err(Error::InvalidInput(format!("unknown preset `{name}` (full, desk)"))),
        }
    }

    /// Applies one setting.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key.trim() {
            "meters_per_px" => self.meters_per_px = parse(key, v)?,
            "feature_step" => self.feature_step = parse(key, v)?,
            "feature_support" => self.feature_support = parse(key, v)?,
            "ratio_tau" => self.ratio_tau = parse(key, v)?,
            "rot_bins" => self.hough.rot_bins = parse(key, v)?,
            "trans_bin" => self.hough.trans_bin = parse(key, v)?,
            "extent" => self.hough.extent = parse(key, v)?,
            "sigma_t" => self.hough.smoothing_sigma = parse(key, v)?,
            "truncate" => self.hough.truncate = parse(key, v)?,
            "top_k" => self.top_k = parse(key, v)?,
            "zoning" => self.zoning = parse(key, v)?,
            "pso_particles" => self.solver.pso.particle_count = parse(key, v)?,
            "pso_iterations" => self.solver.pso.max_iters = parse(key, v)?,
            "pso_inertia" => self.solver.pso.inertia = parse(key, v)?,
            "pso_cognitive" => self.solver.pso.cognitive = parse(key, v)?,
            "pso_social" => self.solver.pso.social = parse(key, v)?,
            "pso_stall_iterations" => self.solver.pso.stall_iters = parse(key, v)?,
            "pso_stall_tol" => self.solver.pso.stall_tol = parse(key, v)?,
            "randomize_fraction" => self.solver.randomize_fraction = parse(key, v)?,
            "translation_sigma" => self.solver.translation_sigma = parse(key, v)?,
            "reference_particles" => self.solver.reference_particles = parse(key, v)?,
            "refine_step_m" => self.solver.refine_step_m = parse(key, v)?,
            "refine_step_deg" => self.solver.refine_step_deg = parse(key, v)?,
            "guided_position" => self.guided.position_threshold = parse(key, v)?,
            "guided_scale_ratio" => self.guided.scale_ratio_max = parse(key, v)?,
            "ransac_iters" => self.guided.ransac_iters = parse(key, v)?,
            "ransac_threshold" => self.guided.ransac_inlier_threshold = parse(key, v)?,
            "ransac_min_inliers" => self.guided.ransac_min_inliers = parse(key, v)?,
            "descriptor_radius" => self.guided.descriptor_radius = parse(key, v)?,
            "rng_seed" => self.rng_seed = parse(key, v)?,
            "runs" => self.runs = parse(key, v)?,
            "threads" => self.threads = parse(key, v)?,
            "mosaic" => self.mosaic = parse(key, v)?,
            other => return Err(Error::format("config", format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `#` starts a comment. A `preset = name`
    /// line resets everything to that preset first.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::format("config", format!("line {}: expected key = value", i + 1)))?;
            if k.trim() == "preset" {
                *self = Self::preset(v.trim())?;
            } else {
                self.set(k, v)?;
            }
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Applies `key=value` overrides, e.g. from the command line.
    pub fn apply_overrides<S: AsRef<str>>(&mut self, overrides: &[S]) -> Result<()> {
        for o in overrides {
            let (k, v) = o
                .as_ref()
                .split_once('=')
                .ok_or_else(|| Error::InvalidInput(format!("override `{}` is not key=value", o.as_ref())))?;
            self.set(k, v)?;
        }
        self.validate()
    }

    /// The solver and guided settings with the pipeline seed applied.
    pub fn seeded_solver(&self, seed: u64) -> SolverConfig {
        let mut s = self.solver.clone();
        s.pso.rng_seed = seed;
        s
    }

    pub fn seeded_guided(&self) -> GuidedMatchConfig {
        GuidedMatchConfig {
            rng_seed: self.rng_seed,
            ..self.guided
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidInput(format!("config: {m}")));
        if !(self.meters_per_px > 0.0) {
            return bad("meters_per_px must be positive");
        }
        if !(self.feature_step > 0.0 && self.feature_support > 0.0) {
            return bad("feature_step and feature_support must be positive");
        }
        if !(self.ratio_tau > 0.0 && self.ratio_tau <= 1.0) {
            return bad("ratio_tau must lie in (0, 1]");
        }
        if self.hough.rot_bins == 0 || !(self.hough.trans_bin > 0.0) || !(self.hough.extent > 0.0) {
            return bad("invalid Hough quantization");
        }
        if self.top_k == 0 || self.zoning < 0.0 {
            return bad("top_k must be positive and zoning non-negative");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        self.solver.pso.validate()?;
        self.guided.validate()
    }

    /// Canonical text form; parsing it reproduces the configuration.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        kv("meters_per_px", self.meters_per_px.to_string());
        kv("feature_step", self.feature_step.to_string());
        kv("feature_support", self.feature_support.to_string());
        kv("ratio_tau", self.ratio_tau.to_string());
        kv("rot_bins", self.hough.rot_bins.to_string());
        kv("trans_bin", self.hough.trans_bin.to_string());
        kv("extent", self.hough.extent.to_string());
        kv("sigma_t", self.hough.smoothing_sigma.to_string());
        kv("truncate", self.hough.truncate.to_string());
        kv("top_k", self.top_k.to_string());
        kv("zoning", self.zoning.to_string());
        kv("pso_particles", self.solver.pso.particle_count.to_string());
        kv("pso_iterations", self.solver.pso.max_iters.to_string());
        kv("pso_inertia", self.solver.pso.inertia.to_string());
        kv("pso_cognitive", self.solver.pso.cognitive.to_string());
        kv("pso_social", self.solver.pso.social.to_string());
        kv("pso_stall_iterations", self.solver.pso.stall_iters.to_string());
        kv("pso_stall_tol", self.solver.pso.stall_tol.to_string());
        kv("randomize_fraction", self.solver.randomize_fraction.to_string());
        kv("translation_sigma", self.solver.translation_sigma.to_string());
        kv("reference_particles", self.solver.reference_particles.to_string());
        kv("refine_step_m", self.solver.refine_step_m.to_string());
        kv("refine_step_deg", self.solver.refine_step_deg.to_string());
        kv("guided_position", self.guided.position_threshold.to_string());
        kv("guided_scale_ratio", self.guided.scale_ratio_max.to_string());
        kv("ransac_iters", self.guided.ransac_iters.to_string());
        kv("ransac_threshold", self.guided.ransac_inlier_threshold.to_string());
        kv("ransac_min_inliers", self.guided.ransac_min_inliers.to_string());
        kv("descriptor_radius", self.guided.descriptor_radius.to_string());
        kv("rng_seed", self.rng_seed.to_string());
        kv("runs", self.runs.to_string());
        kv("threads", self.threads.to_string());
        kv("mosaic", self.mosaic.to_string());
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_the_published_constants() {
        let c = PipelineConfig::default();
        assert_eq!((c.feature_step, c.feature_support, c.ratio_tau), (40.0, 240.0, 0.7));
        assert_eq!((c.hough.rot_bins, c.hough.trans_bin, c.hough.smoothing_sigma), (18, 1.0, 5.0));
        assert_eq!((c.top_k, c.zoning), (100_000, 100.0));
        assert_eq!((c.guided.position_threshold, c.guided.scale_ratio_max), (500.0, 1.4));
        assert_eq!(c.solver.pso.particle_count, 150);
        assert_eq!(c.runs, 50);
    }

    #[test]
    fn text_round_trip() {
        for c in [PipelineConfig::default(), PipelineConfig::desk()] {
            assert_eq!(PipelineConfig::from_text(&c.to_text()).unwrap(), c);
        }
    }

    #[test]
    fn preset_then_overrides() {
        let mut c = PipelineConfig::from_text("# desk scale\npreset = desk\nzoning = 20 # finer\n").unwrap();
        assert_eq!(c.zoning, 20.0);
        assert_eq!(c.top_k, 10_000);
        c.apply_overrides(&["rng_seed=7", "top_k=500"]).unwrap();
        assert_eq!((c.rng_seed, c.top_k), (7, 500));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(PipelineConfig::from_text("nonsense = 1").is_err());
        assert!(PipelineConfig::from_text("top_k = many").is_err());
        assert!(PipelineConfig::from_text("zoning").is_err());
        assert!(PipelineConfig::from_text("guided_scale_ratio = 0.9").is_err());
        assert!(PipelineConfig::from_text("preset = huge").is_err());
        assert!(PipelineConfig::default().apply_overrides(&["top_k"]).is_err());
    }
}
