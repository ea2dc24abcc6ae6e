use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use zlab_core::catalog::entry;
use zlab_core::config::RunConfig;
use zlab_core::expr::{eval_scalar, parse};
use zlab_core::geometry::DomainSpec;
use zlab_core::marty::SweepMode;
use zlab_core::pipeline::{self, PipelineError, RunOutput};
use zlab_core::{Complex64, TargetMetric};

#[derive(Parser)]
#[command(name = "zlab", version, about = "Non-normality lab for holomorphic families")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Derivative (or Kobayashi quotient) suprema over a grid and schedule.
    MartySweep {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_parser = parse_mode)]
        mode: Option<SweepMode>,
        /// Index schedule, e.g. `1,2,4,8`.
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<u64>>,
    },
    /// Flag mu1-points, classify the locus, and report a verdict.
    MuScan {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<u64>>,
    },
    /// Classify a point cloud (JSON list of points or a mu-scan report).
    #[command(alias = "classify-locus")]
    Classify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        points: Option<PathBuf>,
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<u64>>,
    },
    /// Build a rescaling sequence at a point and test its convergence.
    Rescale {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',')]
        point: Option<Vec<String>>,
        /// `lemma`, `derivative`, or `explicit`.
        #[arg(long)]
        strategy: Option<String>,
        /// Explicit center component in `n` (repeat per coordinate).
        #[arg(long)]
        center: Vec<String>,
        /// Explicit scale in `n`.
        #[arg(long)]
        scale: Option<String>,
        #[arg(long, value_delimiter = ',')]
        schedule: Option<Vec<u64>>,
        #[arg(long)]
        grid_radius: Option<f64>,
        #[arg(long)]
        grid_resolution: Option<usize>,
        /// Claimed limit component in `z1..zn` (repeat per target component).
        #[arg(long)]
        reference: Vec<String>,
        /// Skip the mu1 check at the base point.
        #[arg(long)]
        override_check: bool,
    },
    /// Run every catalog entry end to end against its expectations.
    VerifyCatalog {
        /// Directory of entry files; the built-in catalog otherwise.
        #[arg(long)]
        catalog_dir: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Write the built-in catalog as TOML files.
    ExportCatalog {
        #[arg(long, default_value = "catalog")]
        dir: PathBuf,
    },
}

#[derive(Args, Default)]
struct Common {
    /// TOML run configuration; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Catalog name, family file, or component expressions (repeat).
    #[arg(long)]
    family: Vec<String>,
    #[arg(long)]
    dim: Option<usize>,
    /// `name=value`, value an expression such as `0.5+0.2*i` (repeatable).
    #[arg(long = "const")]
    constants: Vec<String>,
    /// `disc`, `polydisc[:r]`, `ball[:r]`, or `full[:half_width]`.
    #[arg(long)]
    domain: Option<String>,
    /// `sphere` or `euclidean:k`.
    #[arg(long)]
    metric: Option<TargetMetric>,
    #[arg(long)]
    resolution: Option<usize>,
    #[arg(long)]
    margin: Option<f64>,
    #[arg(long)]
    max_exponent: Option<u32>,
    #[arg(long)]
    slope: Option<f64>,
    #[arg(long)]
    growth: Option<f64>,
    #[arg(long)]
    straddle: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    escape_radius: Option<f64>,
    #[arg(long)]
    max_degree: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default `zlab-out`).
    #[arg(short, long)]
    output: Option<PathBuf>,
    /// Also write `heatmap.svg`.
    #[arg(long)]
    svg: bool,
}

fn parse_mode(s: &str) -> Result<SweepMode, String> {
    match s {
        "derivative" => Ok(SweepMode::Derivative),
        "quotient" => Ok(SweepMode::Quotient),
        _ => Err(format!("unknown mode '{s}' (derivative or quotient)")),
    }
}

fn usage(msg: impl Into<String>) -> PipelineError {
    PipelineError::Usage(msg.into())
}

fn complex(src: &str) -> Result<Complex64, PipelineError> {
    let e = parse(src.trim(), 0).map_err(|e| usage(format!("'{src}': {e}")))?;
    eval_scalar(&e, &[], 1.0).map_err(|e| usage(format!("'{src}': {e}")))
}

fn constant(src: &str) -> Result<(String, Complex64), PipelineError> {
    let (name, value) = src
        .split_once('=')
        .ok_or_else(|| usage(format!("constant '{src}' is not name=value")))?;
    Ok((name.trim().to_string(), complex(value)?))
}

impl Common {
    fn config(&self) -> Result<RunConfig, PipelineError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        match self.family.as_slice() {
            [] => {}
            [one] if entry(one).is_some() => {
                cfg.family = Default::default();
                cfg.family.catalog = Some(one.clone());
            }
            [one] if Path::new(one).is_file() => {
                cfg.family = Default::default();
                cfg.family.file = Some(PathBuf::from(one));
            }
            many => {
                cfg.family.catalog = None;
                cfg.family.file = None;
                cfg.family.components = Some(many.to_vec());
            }
        }
        if let Some(d) = self.dim {
            cfg.family.dim = Some(d);
        }
        if cfg.family.components.is_some() {
            for c in &self.constants {
                let (k, v) = constant(c)?;
                cfg.family.constants.insert(k, v);
            }
        }
        if let Some(d) = &self.domain {
            cfg.domain = Some(DomainSpec::parse_short(d)?);
        }
        set(&mut cfg.metric, self.metric);
        set(&mut cfg.grid.resolution, self.resolution);
        set(&mut cfg.grid.margin, self.margin);
        set(&mut cfg.schedule.max_exponent, self.max_exponent);
        if self.max_exponent.is_some() {
            cfg.schedule.indices = None;
        }
        set(&mut cfg.thresholds.slope, self.slope);
        set(&mut cfg.thresholds.growth, self.growth);
        set(&mut cfg.thresholds.straddle, self.straddle);
        set(&mut cfg.thresholds.tol, self.tol);
        set(&mut cfg.thresholds.escape_radius, self.escape_radius);
        set(&mut cfg.max_degree, self.max_degree);
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if self.output.is_some() {
            cfg.output = self.output.clone();
        }
        cfg.svg |= self.svg;
        Ok(cfg)
    }
}

fn set<T>(slot: &mut Option<T>, value: Option<T>) {
    if value.is_some() {
        *slot = value;
    }
}

fn output_dir(cfg: &RunConfig) -> PathBuf {
    cfg.output.clone().unwrap_or_else(|| PathBuf::from("zlab-out"))
}

/// Points from a JSON list of points, or from the `flagged` list of a
/// mu-scan report.
fn read_points(path: &Path) -> Result<Vec<Vec<Complex64>>, PipelineError> {
    let text = std::fs::read_to_string(path)?;
    let v: serde_json::Value =
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let list = match v.get("result").and_then(|r| r.get("flagged")) {
        Some(f) => f.clone(),
        None => v,
    };
    serde_json::from_value(list).map_err(|e| usage(format!("{}: expected a list of points: {e}", path.display())))
}

fn finish(out: &RunOutput, dir: &Path) -> Result<(), PipelineError> {
    for path in out.write(dir)? {
        eprintln!("wrote {}", path.display());
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, PipelineError> {
    match cli.command {
        Command::MartySweep { common, mode, schedule } => {
            let mut cfg = common.config()?;
            if schedule.is_some() {
                cfg.schedule.indices = schedule;
            }
            set(&mut cfg.mode, mode);
            let r = cfg.resolve()?;
            let out = pipeline::run_marty_sweep(&r, cfg.svg)?;
            let sups = out.report.result["sups"].to_string();
            println!("sups: {sups}");
            finish(&out, &output_dir(&cfg))?;
            Ok(true)
        }
        Command::MuScan { common, schedule } => {
            let mut cfg = common.config()?;
            if schedule.is_some() {
                cfg.schedule.indices = schedule;
            }
            let r = cfg.resolve()?;
            let out = pipeline::run_mu_scan(&r, cfg.svg)?;
            print_scan(&out);
            finish(&out, &output_dir(&cfg))?;
            Ok(true)
        }
        Command::Classify { common, points, schedule } => {
            let mut cfg = common.config()?;
            if schedule.is_some() {
                cfg.schedule.indices = schedule;
            }
            let out = match points {
                Some(path) => {
                    let pts = read_points(&path)?;
                    let dim = match (common.dim, pts.first()) {
                        (Some(d), _) => d,
                        (None, Some(p)) => p.len(),
                        (None, None) => return Err(usage("empty point list needs --dim")),
                    };
                    let degree = cfg.max_degree.unwrap_or(4);
                    pipeline::run_classify_points(&pts, dim, degree, cfg.seed)?
                }
                None => {
                    let r = cfg.resolve()?;
                    let mut out = pipeline::run_mu_scan(&r, cfg.svg)?;
                    out.report.command = "classify".into();
                    out
                }
            };
            print_scan(&out);
            finish(&out, &output_dir(&cfg))?;
            Ok(true)
        }
        Command::Rescale {
            common,
            point,
            strategy,
            center,
            scale,
            schedule,
            grid_radius,
            grid_resolution,
            reference,
            override_check,
        } => {
            let mut cfg = common.config()?;
            let rs = &mut cfg.rescale;
            if let Some(p) = point {
                rs.point = Some(p.iter().map(|s| complex(s)).collect::<Result<_, _>>()?);
            }
            set(&mut rs.strategy, strategy);
            if !center.is_empty() {
                rs.center = Some(center);
            }
            set(&mut rs.scale, scale);
            set(&mut rs.schedule, schedule);
            set(&mut rs.grid_radius, grid_radius);
            set(&mut rs.grid_resolution, grid_resolution);
            if !reference.is_empty() {
                rs.reference = Some(reference);
            }
            rs.override_check |= override_check;
            for c in &common.constants {
                let (k, v) = constant(c)?;
                rs.constants.insert(k, v);
            }
            let r = cfg.resolve()?;
            let out = pipeline::run_rescale(&r, cfg.svg)?;
            let res = &out.report.result;
            println!(
                "outcome: {}  cauchy defect: {}  deviation: {}",
                res["outcome"].as_str().unwrap_or("?"),
                res["convergence"]["cauchy_defect"],
                res["deviation"]
            );
            finish(&out, &output_dir(&cfg))?;
            Ok(true)
        }
        Command::VerifyCatalog {
            catalog_dir,
            seed,
            output,
        } => {
            let entries = match &catalog_dir {
                Some(d) => Some(pipeline::load_catalog_dir(d)?),
                None => None,
            };
            let start = Instant::now();
            let out = pipeline::verify_catalog(entries, seed.unwrap_or(0));
            for e in out.report.result["entries"].as_array().into_iter().flatten() {
                let status = match e["pass"].as_bool() {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "RECORDED",
                };
                println!(
                    "{status:<8} {:<16} verdict {} (expected {})",
                    e["name"].as_str().unwrap_or("?"),
                    e["measured_verdict"].as_str().unwrap_or("none"),
                    e["expected_verdict"].as_str().unwrap_or("?")
                );
                for c in e["checks"].as_array().into_iter().flatten() {
                    if c["pass"] == false {
                        println!(
                            "         {}: expected {}, measured {}",
                            c["name"].as_str().unwrap_or("?"),
                            c["expected"].as_str().unwrap_or("?"),
                            c["measured"].as_str().unwrap_or("?")
                        );
                    }
                }
            }
            println!("{:.2} s", start.elapsed().as_secs_f64());
            finish(&out, &output.unwrap_or_else(|| PathBuf::from("zlab-out")))?;
            Ok(!out.mismatch)
        }
        Command::ExportCatalog { dir } => {
            for path in pipeline::export_catalog(&dir)? {
                eprintln!("wrote {}", path.display());
            }
            Ok(true)
        }
    }
}

fn print_scan(out: &RunOutput) {
    let res = &out.report.result;
    let flagged = res["flagged"].as_array().map_or(0, Vec::len);
    match res.get("grid_size").and_then(|g| g.as_u64()) {
        Some(n) => println!("flagged {flagged} of {n} grid points"),
        None => println!("{} points", res["points"]),
    }
    println!(
        "locus: {}  polynomial: {}",
        res["classification"]["kind"].as_str().unwrap_or("none"),
        res["polynomial"].as_str().unwrap_or("-")
    );
    println!("verdict: {}", res["verdict"].as_str().unwrap_or("?"));
}

fn init_threads() -> Result<(), PipelineError> {
    if let Ok(v) = std::env::var("ZL_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .map_err(|_| usage(format!("ZL_THREADS must be a positive integer, got '{v}'")))?;
        if n == 0 {
            return Err(usage("ZL_THREADS must be positive"));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| usage(e.to_string()))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = init_threads().and_then(|()| run(cli));
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
