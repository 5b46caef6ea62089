use std::f64::consts::TAU;
use std::fmt::Write as _;
use std::time::Instant;

use nalgebra::Vector2;
use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::fitness::{FullObjective, RotationObjective, TranslationObjective};
use super::greedy::{greedy_init, least_confident, EstimatorGraph};
use super::group::{ImageGroup, RelationMask};
use super::pso::{pso_minimize, Bound, PsoConfig};
use super::refine::{local_ascent, RefineConfig};
use crate::error::{Error, Result};
use crate::geometry::RigidTransform;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub pso: PsoConfig,
    /// Share of least confident rotation dimensions re-drawn per particle.
    pub randomize_fraction: f64,
    /// Per-particle Gaussian perturbation of initial translations, meters.
    pub translation_sigma: f64,
    pub reference_particles: usize,
    pub pad_sigma_m: f64,
    pub pad_sigma_deg: f64,
    pub refine_step_m: f64,
    pub refine_step_deg: f64,
    pub refine: RefineConfig,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            pso: PsoConfig::default(),
            randomize_fraction: 0.3,
            translation_sigma: 3.0,
            reference_particles: 5,
            pad_sigma_m: 10.0,
            pad_sigma_deg: 2.0,
            refine_step_m: 0.5,
            refine_step_deg: 0.5,
            refine: RefineConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageRecord {
    pub name: String,
    /// Value of the stage's own objective at its result.
    pub fitness: f64,
    pub seconds: f64,
}

/// Transforms of every historical image into the reference frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupSolution {
    pub transforms: Vec<RigidTransform>,
    pub fitness: f64,
    pub stages: Vec<StageRecord>,
}

impl GroupSolution {
    /// Equality ignoring wall-clock timings.
    pub fn same_result(&self, other: &GroupSolution) -> bool {
        self.transforms == other.transforms
            && self.fitness.to_bits() == other.fitness.to_bits()
            && self.stages.len() == other.stages.len()
            && self
                .stages
                .iter()
                .zip(&other.stages)
                .all(|(a, b)| a.name == b.name && a.fitness.to_bits() == b.fitness.to_bits())
    }

    /// Line-oriented text: `fitness`, one `image` line per transform
    /// (`vx vy gamma_deg`), then `stage name fitness seconds` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "fitness {}", self.fitness);
        for (k, t) in self.transforms.iter().enumerate() {
            let _ = writeln!(s, "image {k} {t}");
        }
        for st in &self.stages {
            let _ = writeln!(s, "stage {} {} {:.6}", st.name, st.fitness, st.seconds);
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::format("group solution", msg);
        let mut fitness = None;
        let mut transforms = Vec::new();
        let mut stages = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, rest) = line.split_once(' ').ok_or_else(|| bad(format!("line {}: {line}", i + 1)))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| bad(format!("line {}: bad number {s}", i + 1)));
            match key {
                "fitness" => fitness = Some(num(rest.trim())?),
                "image" => {
                    let (idx, t) = rest.split_once(' ').ok_or_else(|| bad(format!("line {}", i + 1)))?;
                    if idx.parse::<usize>().ok() != Some(transforms.len()) {
                        return Err(bad(format!("line {}: images must be listed in order", i + 1)));
                    }
                    transforms.push(t.parse()?);
                }
                "stage" => {
                    let f: Vec<&str> = rest.split_whitespace().collect();
                    if f.len() != 3 {
                        return Err(bad(format!("line {}: expected name fitness seconds", i + 1)));
                    }
                    stages.push(StageRecord {
                        name: f[0].to_string(),
                        fitness: num(f[1])?,
                        seconds: num(f[2])?,
                    });
                }
                _ => return Err(bad(format!("line {}: unknown record {key}", i + 1))),
            }
        }
        Ok(Self {
            transforms,
            fitness: fitness.ok_or_else(|| bad("missing fitness".into()))?,
            stages,
        })
    }
}

fn with_leading<T: Copy>(first: T, rest: &[T]) -> Vec<T> {
    std::iter::once(first).chain(rest.iter().copied()).collect()
}

fn finite(stage: &'static str, v: f64) -> Result<f64> {
    if v.is_finite() {
        Ok(v)
    } else {
        Err(Error::NonFiniteFitness(stage))
    }
}

fn stage_cfg(base: &PsoConfig, rng: &mut ChaCha8Rng) -> PsoConfig {
    PsoConfig {
        rng_seed: rng.random(),
        ..*base
    }
}

/// Greedy graph over historical images weighted by inverse rotation peaks.
fn rotation_graph(group: &ImageGroup, mask: &RelationMask) -> Result<EstimatorGraph> {
    let n = group.len();
    let mut g = EstimatorGraph::new(n);
    for k in 0..n {
        for l in k + 1..n {
            if !mask.get(k, l) {
                continue;
            }
            let (ekl, elk) = (group.rotation_estimator(k, l)?, group.rotation_estimator(l, k)?);
            let (gkl, pkl) = ekl.argmax();
            let (glk, plk) = elk.argmax();
            g.add_relation(k, l, 2.0 / (pkl + plk), RigidTransform::new(0.0, 0.0, gkl))?;
            g.set_directed(l, k, RigidTransform::new(0.0, 0.0, glk));
        }
    }
    Ok(g)
}

/// Greedy graph weighted by inverse translation peaks at fixed rotations.
fn translation_graph(group: &ImageGroup, mask: &RelationMask, rotations: &[f64], obj: &TranslationObjective) -> Result<EstimatorGraph> {
    let n = group.len();
    let mut g = EstimatorGraph::new(n);
    let edge = |a: usize, b: usize| -> Result<Option<(RigidTransform, f64)>> {
        let gamma = rotations[a] - rotations[b];
        let est = match obj.estimator(a, b) {
            Some(e) => e.clone(),
            None => match crate::hough::translation_estimator(group.require_pair(a, b)?, gamma) {
                Ok(e) => e,
                Err(Error::UninformativeEstimator { .. }) => return Ok(None),
                Err(e) => return Err(e),
            },
        };
        let (v, p) = est.argmax();
        Ok(Some((RigidTransform::new(v.x, v.y, gamma), p)))
    };
    for k in 0..n {
        for l in k + 1..n {
            if !mask.get(k, l) {
                continue;
            }
            match (edge(k, l)?, edge(l, k)?) {
                (Some((tkl, p1)), Some((tlk, p2))) => {
                    g.add_relation(k, l, 2.0 / (p1 + p2), tkl)?;
                    g.set_directed(l, k, tlk);
                }
                (Some((t, p)), None) => g.add_relation(k, l, 1.0 / p, t)?,
                (None, Some((t, p))) => g.add_relation(l, k, 1.0 / p, t)?,
                (None, None) => {}
            }
        }
    }
    Ok(g)
}

fn flatten(ts: &[RigidTransform]) -> Vec<f64> {
    ts.iter().flat_map(|t| [t.vx, t.vy, t.gamma()]).collect()
}

fn unflatten(x: &[f64]) -> Vec<RigidTransform> {
    x.chunks_exact(3).map(|c| RigidTransform::new(c[0], c[1], c[2])).collect()
}

fn rigid_bounds(n: usize, extent: f64) -> Vec<Bound> {
    (0..n)
        .flat_map(|_| [Bound::Clamp(-extent, extent), Bound::Clamp(-extent, extent), Bound::Wrap(0.0, TAU)])
        .collect()
}

/// Staged maximization: rotations among historical images, translations
/// among them, the placement of the whole group on the reference, then a
/// joint local refinement of all parameters.
pub fn solve_sequential(group: &ImageGroup, mask: &RelationMask, cfg: &SolverConfig) -> Result<GroupSolution> {
    cfg.pso.validate()?;
    let n = group.len();
    let extent = group.params().extent;
    let full = FullObjective::new(group, mask)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pso.rng_seed);
    let mut stages = Vec::new();

    // Rotations into image 0.
    let mut rotations = vec![0.0; n];
    if n > 1 {
        let clock = Instant::now();
        let obj = RotationObjective::new(group, mask)?;
        let init = greedy_init(&rotation_graph(group, mask)?, 0).map_err(|e| e.in_stage("rotation"))?;
        let start: Vec<f64> = init.values[1..].iter().map(|t| t.gamma()).collect();
        let redraw = least_confident(&init.confidences, cfg.randomize_fraction);
        let mut particles = vec![start.clone()];
        for _ in 1..cfg.pso.particle_count {
            let mut p = start.clone();
            for &k in &redraw {
                p[k - 1] = rng.random_range(0.0..TAU);
            }
            particles.push(p);
        }
        let pso = stage_cfg(&cfg.pso, &mut rng);
        let res = pso_minimize(|x| -obj.eval(&with_leading(0.0, x)), &vec![Bound::Wrap(0.0, TAU); n - 1], &particles, &pso)?;
        rotations = with_leading(0.0, &res.position);
        stages.push(StageRecord {
            name: "rotation".into(),
            fitness: finite("rotation", -res.value)?,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }

    // Translations into image 0 at the fixed rotations.
    let mut translations = vec![Vector2::zeros(); n];
    if n > 1 {
        let clock = Instant::now();
        let obj = TranslationObjective::new(group, mask, &rotations)?;
        let graph = translation_graph(group, mask, &rotations, &obj)?;
        let init = greedy_init(&graph, 0).map_err(|e| e.in_stage("translation"))?;
        let start: Vec<f64> = init.values[1..].iter().flat_map(|t| [t.vx, t.vy]).collect();
        let noise = Normal::new(0.0, cfg.translation_sigma.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?;
        let mut particles = vec![start.clone()];
        for _ in 1..cfg.pso.particle_count {
            particles.push(start.iter().map(|&x| x + noise.sample(&mut rng)).collect());
        }
        let to_vecs = |x: &[f64]| -> Vec<Vector2<f64>> {
            with_leading(Vector2::zeros(), &x.chunks_exact(2).map(|c| Vector2::new(c[0], c[1])).collect::<Vec<_>>())
        };
        let pso = stage_cfg(&cfg.pso, &mut rng);
        let bounds = vec![Bound::Clamp(-extent, extent); 2 * (n - 1)];
        let res = pso_minimize(|x| -obj.eval(&to_vecs(x)), &bounds, &particles, &pso)?;
        translations = to_vecs(&res.position);
        stages.push(StageRecord {
            name: "translation".into(),
            fitness: finite("translation", -res.value)?,
            seconds: clock.elapsed().as_secs_f64(),
        });
    }

    // Placement of image 0 (and with it the group) on the reference.
    let clock = Instant::now();
    let rel: Vec<RigidTransform> = (0..n)
        .map(|k| RigidTransform::new(translations[k].x, translations[k].y, rotations[k]))
        .collect();
    let place = |t0: &RigidTransform| -> Vec<RigidTransform> { rel.iter().map(|r| t0.after(r)).collect() };
    // The indirect terms do not depend on the placement, so candidates are
    // ranked and searched on the direct terms alone.
    let mut candidates: Vec<(f64, usize, RigidTransform)> = (0..n)
        .map(|k| {
            let t0 = group.direct_summary(k).argmax.after(&rel[k].inverse());
            (full.direct_sum(&place(&t0)), k, t0)
        })
        .collect();
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    let m = cfg.reference_particles.max(1);
    let mut particles: Vec<Vec<f64>> = candidates.iter().take(m).map(|c| flatten(&[c.2])).collect();
    let best = candidates[0].2;
    let (nm, nd) = (
        Normal::new(0.0, cfg.pad_sigma_m.max(0.0)).map_err(|e| Error::InvalidInput(e.to_string()))?,
        Normal::new(0.0, cfg.pad_sigma_deg.max(0.0).to_radians()).map_err(|e| Error::InvalidInput(e.to_string()))?,
    );
    while particles.len() < m {
        particles.push(vec![
            best.vx + nm.sample(&mut rng),
            best.vy + nm.sample(&mut rng),
            best.gamma() + nd.sample(&mut rng),
        ]);
    }
    let pso = PsoConfig {
        particle_count: m,
        ..stage_cfg(&cfg.pso, &mut rng)
    };
    let res = pso_minimize(|x| -full.direct_sum(&place(&unflatten(x)[0])), &rigid_bounds(1, extent), &particles, &pso)?;
    let placed = place(&unflatten(&res.position)[0]);
    let placed_fitness = finite("reference", full.eval(&placed))?;
    stages.push(StageRecord {
        name: "reference".into(),
        fitness: placed_fitness,
        seconds: clock.elapsed().as_secs_f64(),
    });

    // Joint refinement of all 3N parameters.
    let clock = Instant::now();
    let (transforms, fitness) = refine_all(&full, &placed, placed_fitness, cfg);
    stages.push(StageRecord {
        name: "refinement".into(),
        fitness: finite("refinement", fitness)?,
        seconds: clock.elapsed().as_secs_f64(),
    });
    Ok(GroupSolution {
        transforms,
        fitness,
        stages,
    })
}

/// Local ascent from `start`; keeps `start` unless strictly improved.
fn refine_all(full: &FullObjective, start: &[RigidTransform], start_fitness: f64, cfg: &SolverConfig) -> (Vec<RigidTransform>, f64) {
    let steps: Vec<f64> = (0..start.len())
        .flat_map(|_| [cfg.refine_step_m, cfg.refine_step_m, cfg.refine_step_deg.to_radians()])
        .collect();
    let (x, _) = local_ascent(|x| full.eval(&unflatten(x)), &flatten(start), &steps, &cfg.refine);
    let refined = unflatten(&x);
    let f = full.eval(&refined);
    if f > start_fitness {
        (refined, f)
    } else {
        (start.to_vec(), start_fitness)
    }
}

/// One PSO over all 3N parameters, particles sampled from each image's
/// direct space read as a discrete distribution.
pub fn solve_direct_pso(group: &ImageGroup, mask: &RelationMask, particle_count: usize, cfg: &SolverConfig) -> Result<GroupSolution> {
    let pso = PsoConfig {
        particle_count,
        ..cfg.pso
    };
    pso.validate()?;
    let n = group.len();
    let full = FullObjective::new(group, mask)?;
    let clock = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.pso.rng_seed);
    let mut samplers = Vec::with_capacity(n);
    for k in 0..n {
        let h = group.direct(k);
        let recs: Vec<(i32, i32, usize, f64)> = h.records().collect();
        let w = WeightedIndex::new(recs.iter().map(|r| r.3)).map_err(|_| Error::EmptyEstimator)?;
        samplers.push((recs, w, *h.params()));
    }
    let particles: Vec<Vec<f64>> = (0..particle_count)
        .map(|_| {
            samplers
                .iter()
                .flat_map(|(recs, w, p)| {
                    let (ix, iy, ig, _) = recs[w.sample(&mut rng)];
                    [ix as f64 * p.trans_bin, iy as f64 * p.trans_bin, p.bin_angle(ig)]
                })
                .collect()
        })
        .collect();
    let pso = stage_cfg(&pso, &mut rng);
    let res = pso_minimize(|x| -full.eval(&unflatten(x)), &rigid_bounds(n, group.params().extent), &particles, &pso)?;
    let transforms = unflatten(&res.position);
    let fitness = finite("direct pso", full.eval(&transforms))?;
    Ok(GroupSolution {
        transforms,
        fitness,
        stages: vec![StageRecord {
            name: "direct_pso".into(),
            fitness,
            seconds: clock.elapsed().as_secs_f64(),
        }],
    })
}
