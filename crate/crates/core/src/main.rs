use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use groupreg::eval::{fit_rigid, read_ground_truth, rigid_component_errors, rmse, write_metrics, MetricsRow};
use groupreg::features::cache::{read_features, write_features};
use groupreg::features::{dense_sample, top_k_matches, ImageGrid};
use groupreg::geometry::RigidTransform;
use groupreg::groupwise::{solve_sequential, GroupSolution, RelationMask};
use groupreg::guided::{read_registrations, register_to_reference, write_registrations};
use groupreg::harness::pipeline::{prepare_group, with_threads, write_scenario};
use groupreg::harness::scenario::{Corruption, SyntheticScenario};
use groupreg::harness::{run_pipeline, Cache, PipelineConfig, PipelineInputs, CACHE_ENV};
use groupreg::hough::build_hough_space;
use groupreg::hough::io::write_hough;
use groupreg::{Error, Result};

#[derive(Parser)]
#[command(name = "groupreg", version, about = "Groupwise registration of aerial images to a reference map")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// key = value configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Base preset applied before the config file: full or desk.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Single setting, key=value; repeatable, applied last.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Solver repetitions for the stability report.
    #[arg(long, global = true)]
    runs: Option<usize>,
    /// Cache directory; defaults to $GROUPREG_CACHE_DIR.
    #[arg(long, global = true)]
    cache_dir: Option<PathBuf>,
}

#[derive(Args)]
struct GroupArgs {
    #[arg(long)]
    reference: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    images: Vec<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Dense features of one image.
    Extract {
        image: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Top-K matches and the voting space of a → b from two feature files.
    Hough {
        a: PathBuf,
        b: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Groupwise rigid registration; writes the solution text.
    Register {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Guided matching from a solution; writes the homography CSV.
    Guided {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long)]
        solution: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Metrics from a homography CSV and ground truth.
    Eval {
        #[arg(long)]
        homographies: PathBuf,
        #[arg(long)]
        ground_truth: PathBuf,
        /// Solution text, for rigid component errors; ids follow the CSV order.
        #[arg(long)]
        solution: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Renders a synthetic group with ground truth.
    Synth {
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 512)]
        size: usize,
        #[arg(long, default_value_t = 5)]
        n: usize,
        #[arg(long, default_value_t = 180.0)]
        max_rot_deg: f64,
        #[arg(long, default_value_t = 150.0)]
        max_shift: f64,
        #[arg(long, default_value_t = 0.3)]
        occlusion: f64,
        #[arg(long, default_value_t = 0.05)]
        brightness: f64,
        #[arg(long, default_value_t = 0.02)]
        noise: f64,
        #[arg(long, default_value_t = 1)]
        scenario_seed: u64,
    },
    /// Full pipeline.
    Run {
        #[command(flatten)]
        group: GroupArgs,
        #[arg(long)]
        ground_truth: Option<PathBuf>,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn config(c: &Common) -> Result<PipelineConfig> {
    let mut cfg = match &c.preset {
        Some(p) => PipelineConfig::preset(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(path) = &c.config {
        cfg.apply_text(&std::fs::read_to_string(path)?)?;
    }
    let mut flags = c.overrides.clone();
    if let Some(t) = c.threads {
        flags.push(format!("threads={t}"));
    }
    if let Some(s) = c.seed {
        flags.push(format!("rng_seed={s}"));
    }
    if let Some(r) = c.runs {
        flags.push(format!("runs={r}"));
    }
    cfg.apply_overrides(&flags)?;
    Ok(cfg)
}

fn cache(c: &Common) -> Cache {
    match &c.cache_dir {
        Some(d) => Cache::at(d),
        None => Cache::from_env(),
    }
}

fn load_group(g: &GroupArgs, cfg: &PipelineConfig) -> Result<PipelineInputs> {
    PipelineInputs::load(&g.reference, &g.images, None, cfg.meters_per_px).map_err(|e| e.in_stage("load"))
}

fn read_solution(path: &Path) -> Result<GroupSolution> {
    GroupSolution::from_text(&std::fs::read_to_string(path)?)
}

fn execute(cli: Cli) -> Result<()> {
    let cfg = config(&cli.common)?;
    let cache = cache(&cli.common);
    if let Some(d) = cache.dir() {
        log::info!("cache directory {} (override with --cache-dir or {CACHE_ENV})", d.display());
    }
    match cli.cmd {
        Cmd::Extract { image, out } => {
            let img = ImageGrid::load(&image, cfg.meters_per_px)?;
            let f = dense_sample(&img, cfg.feature_step, cfg.feature_support)?;
            write_features(&f, BufWriter::new(File::create(out)?))?;
            println!("{} features", f.len());
        }
        Cmd::Hough { a, b, out } => {
            let fa = read_features(BufReader::new(File::open(a)?))?;
            let fb = read_features(BufReader::new(File::open(b)?))?;
            let m = top_k_matches(&fa, &fb, cfg.top_k);
            let h = build_hough_space(&m, cfg.zoning, &cfg.hough)?;
            write_hough(&h, BufWriter::new(File::create(out)?))?;
            println!("{} matches, {} cells", m.len(), h.entry_count());
        }
        Cmd::Register { group, out } => {
            let inputs = load_group(&group, &cfg)?;
            let (g, _) = prepare_group(&inputs, &cfg, &cache)?;
            let mask = RelationMask::full(g.len());
            let sol = solve_sequential(&g, &mask, &cfg.seeded_solver(cfg.rng_seed)).map_err(|e| e.in_stage("groupwise"))?;
            std::fs::write(&out, sol.to_text())?;
            for (id, t) in inputs.ids.iter().zip(&sol.transforms) {
                println!("{id}: {t}");
            }
        }
        Cmd::Guided { group, solution, out } => {
            let inputs = load_group(&group, &cfg)?;
            let sol = read_solution(&solution)?;
            let (g, _) = prepare_group(&inputs, &cfg, &cache)?;
            let mask = RelationMask::full(g.len());
            let regs = register_to_reference(&inputs.historical, &inputs.reference, &g, &mask, &sol, &cfg.seeded_guided())
                .map_err(|e| e.in_stage("guided"))?;
            write_registrations(&regs, &inputs.ids, BufWriter::new(File::create(out)?))?;
        }
        Cmd::Eval {
            homographies,
            ground_truth,
            solution,
            out,
        } => {
            let regs = read_registrations(File::open(homographies)?)?;
            let gt = read_ground_truth(File::open(ground_truth)?)?;
            let sol = solution.as_deref().map(read_solution).transpose()?;
            let mut rows = Vec::new();
            for (k, (id, _, h, _)) in regs.iter().enumerate() {
                let Some(g) = gt.get(id) else { continue };
                let (t, r) = match &sol {
                    Some(s) => {
                        let est: &RigidTransform = s
                            .transforms
                            .get(k)
                            .ok_or_else(|| Error::InvalidInput(format!("solution has no image {k}")))?;
                        rigid_component_errors(est, &fit_rigid(g))
                    }
                    None => (f64::NAN, f64::NAN),
                };
                rows.push(MetricsRow {
                    image_id: id.clone(),
                    rmse_m: rmse(g, |p| h.apply(p)),
                    trans_err_m: t,
                    rot_err_deg: r,
                });
            }
            write_metrics(&rows, File::create(out)?)?;
        }
        Cmd::Synth {
            out,
            size,
            n,
            max_rot_deg,
            max_shift,
            occlusion,
            brightness,
            noise,
            scenario_seed,
        } => {
            let mut spec = SyntheticScenario::random(size, n, max_rot_deg, max_shift, scenario_seed);
            spec.meters_per_px = cfg.meters_per_px;
            spec.corruption = Corruption {
                occlusion,
                brightness,
                noise_sigma: noise,
            };
            let paths = write_scenario(&spec, &out)?;
            println!("wrote reference and {} images to {}", paths.len(), out.display());
        }
        Cmd::Run { group, ground_truth, out } => {
            let inputs = PipelineInputs::load(&group.reference, &group.images, ground_truth.as_deref(), cfg.meters_per_px)
                .map_err(|e| e.in_stage("load"))?;
            let res = run_pipeline(&inputs, &cfg, &cache, &out)?;
            print!("{}", res.timing_report());
            for m in &res.metrics {
                println!("{}: rmse {:.2} m, translation {:.2} m, rotation {:.2} deg", m.image_id, m.rmse_m, m.trans_err_m, m.rot_err_deg);
            }
            if let Some(st) = &res.stability {
                println!(
                    "{} seeds: max translation std {:.3} m, max rotation std {:.3} deg",
                    st.seeds.len(),
                    st.max_trans_std(),
                    st.max_rot_std()
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let threads = match config(&cli.common) {
        Ok(c) => c.threads,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    match with_threads(threads, || execute(cli)).and_then(|r| r) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
