//! `prism`: reproducible stress tests, benchmarks and the acceptance runner.

mod manifest;

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use prism_core::config::{parse_center, read_config, render_config};
use prism_core::experiments::{
    bench_csv, image_seeds, occlusion_stress, rotation_stress, scan_bench, BenchMethod, BenchSetup, StressSetup,
};
use prism_core::io::read_prfm;
use prism_core::prism::{Backbone, CenterPolicy};
use prism_core::verify::{verify, VerifyOptions, CRITERIA};
use prism_core::{BackboneConfig, GridCenter, PcfMode, PrismError, ScanChoice};

use manifest::RunManifest;

#[derive(Parser, Debug)]
#[command(name = "prism", version, about = "Ring-scan state-space kernels: stress tests, benchmarks, verification")]
struct Cli {
    /// Base seed for weights and synthetic images.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Write the result here (plus `<out>.manifest.json`) instead of stdout.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Backbone config file; its token_width, state_width and delta_r also
    /// apply to the stress and benchmark commands.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// MAC counts and median wall time per scan order.
    ScanBench(BenchArgs),
    /// Deviation of scan outputs under image rotation.
    RotationStress(RotationArgs),
    /// Deviation of scan outputs under a dropped square tile.
    OcclusionStress(OcclusionArgs),
    /// Run the acceptance suite; exit 1 if any criterion fails.
    Verify(VerifyArgs),
    /// Run the toy backbone on a PRFM feature map and print class scores.
    BackboneDemo(DemoArgs),
}

#[derive(Args, Debug)]
struct Geometry {
    /// Ring width Δr.
    #[arg(long, value_parser = positive_real)]
    delta_r: Option<f64>,
    /// Ring center `cx,cy`; defaults to the grid's symmetric center.
    #[arg(long, value_parser = center, allow_hyphen_values = true)]
    center: Option<GridCenter>,
}

#[derive(Args, Debug)]
struct BenchArgs {
    /// Comma-separated scan ids (`s1`…`s21`, `ring`).
    #[arg(long, value_delimiter = ',', default_value = "s1,ring")]
    scans: Vec<ScanChoice>,
    /// Side length of the square input.
    #[arg(long, default_value = "32", value_parser = positive)]
    size: usize,
    #[arg(long, default_value = "64", value_parser = positive)]
    channels: usize,
    /// Number of seeded images.
    #[arg(long, default_value = "3", value_parser = positive)]
    seeds: usize,
    /// Channel filtering modes for `ring` rows, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "mean")]
    pcf: Vec<PcfMode>,
    /// Zero the upper half of the channels.
    #[arg(long)]
    half_dead: bool,
    /// Timed repetitions per row; the median is reported.
    #[arg(long, default_value = "5", value_parser = at_least_five)]
    reps: usize,
    #[command(flatten)]
    geometry: Geometry,
}

#[derive(Args, Debug)]
struct StressArgs {
    #[arg(long, value_delimiter = ',', default_value = "s1,s2,s5,ring")]
    scans: Vec<ScanChoice>,
    #[arg(long, default_value = "32", value_parser = positive)]
    size: usize,
    #[arg(long, default_value = "4", value_parser = positive)]
    channels: usize,
    #[arg(long, default_value = "30", value_parser = positive)]
    seeds: usize,
    /// Channel filtering inside the ring branch.
    #[arg(long, default_value = "off")]
    pcf: PcfMode,
    /// Saturate the angular decay so ring descriptors forget order.
    #[arg(long)]
    memoryless: bool,
    #[command(flatten)]
    geometry: Geometry,
}

#[derive(Args, Debug)]
struct RotationArgs {
    /// Rotation angles in degrees, comma-separated.
    #[arg(long, value_delimiter = ',', default_value = "0,30,60,90", allow_hyphen_values = true)]
    angles: Vec<f64>,
    #[command(flatten)]
    stress: StressArgs,
}

#[derive(Args, Debug)]
struct OcclusionArgs {
    /// Tile grid divisions; each must divide `--size`.
    #[arg(long, value_delimiter = ',', default_value = "2,4", value_parser = positive)]
    grid_div: Vec<usize>,
    #[command(flatten)]
    stress: StressArgs,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// Criterion ids to run, comma-separated; all by default.
    #[arg(long, value_delimiter = ',')]
    only: Option<Vec<u8>>,
    /// Scale analytic kernel gradients by 1 + 1e-4 to check that the checker fails.
    #[arg(long, hide = true)]
    perturb_kernel: bool,
}

#[derive(Args, Debug)]
struct DemoArgs {
    /// PRFM feature map with `in_channels` channels.
    input: PathBuf,
}

fn positive(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(0) => Err("must be at least 1".into()),
        Ok(n) => Ok(n),
        Err(e) => Err(e.to_string()),
    }
}

fn at_least_five(s: &str) -> Result<usize, String> {
    match s.parse::<usize>() {
        Ok(n) if n >= 5 => Ok(n),
        Ok(_) => Err("at least 5 repetitions are required".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(x) if x.is_finite() && x > 0.0 => Ok(x),
        Ok(_) => Err("must be a positive finite number".into()),
        Err(e) => Err(e.to_string()),
    }
}

fn center(s: &str) -> Result<GridCenter, String> {
    parse_center(s).map_err(|e| e.to_string())
}

/// How a run ended, mapped onto the stable exit codes.
enum Failure {
    /// Bad arguments or inputs: exit 2.
    Usage(String),
    /// A checked property does not hold: exit 1.
    Property(String),
}

impl From<PrismError> for Failure {
    fn from(e: PrismError) -> Self {
        Failure::Usage(e.to_string())
    }
}

fn io_failure(path: &Path, e: impl Display) -> Failure {
    Failure::Usage(format!("{}: {e}", path.display()))
}

/// What a subcommand produced: the body to emit and the manifest fields
/// that describe it.
struct Output {
    body: String,
    config: serde_json::Value,
    seeds: Vec<u64>,
    failed: Option<String>,
}

fn setup_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("PRISM_THREADS") else {
        return Ok(());
    };
    let n = positive(raw.trim()).map_err(|e| Failure::Usage(format!("PRISM_THREADS: {e}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Usage(format!("PRISM_THREADS: {e}")))
}

fn load_config(path: Option<&Path>) -> Result<BackboneConfig, Failure> {
    match path {
        None => Ok(BackboneConfig::default()),
        Some(p) => read_config(p).map_err(|e| io_failure(p, e)),
    }
}

fn center_policy(c: Option<GridCenter>) -> CenterPolicy {
    c.map_or(CenterPolicy::Symmetric, CenterPolicy::Fixed)
}

fn center_json(c: Option<GridCenter>) -> serde_json::Value {
    match c {
        None => json!("symmetric"),
        Some(c) => json!([c.cx, c.cy]),
    }
}

fn list<T: Display>(items: &[T]) -> String {
    items.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn stress_setup(args: &StressArgs, cfg: &BackboneConfig, seed: u64) -> StressSetup {
    StressSetup {
        size: args.size,
        channels: args.channels,
        token_width: cfg.token_width,
        state_width: cfg.state_width,
        delta_r: args.geometry.delta_r.unwrap_or(cfg.delta_r),
        center: center_policy(args.geometry.center),
        pcf: args.pcf,
        param_seed: seed,
        memoryless: args.memoryless,
    }
}

fn stress_json(args: &StressArgs, setup: &StressSetup) -> serde_json::Value {
    json!({
        "scans": list(&args.scans),
        "size": setup.size,
        "channels": setup.channels,
        "seeds": args.seeds,
        "token_width": setup.token_width,
        "state_width": setup.state_width,
        "delta_r": setup.delta_r,
        "center": center_json(args.geometry.center),
        "pcf": setup.pcf.to_string(),
        "memoryless": setup.memoryless,
    })
}

fn run_bench(args: &BenchArgs, cfg: &BackboneConfig, seed: u64) -> Result<Output, Failure> {
    let setup = BenchSetup {
        size: args.size,
        channels: args.channels,
        token_width: cfg.token_width,
        state_width: cfg.state_width,
        delta_r: args.geometry.delta_r.unwrap_or(cfg.delta_r),
        center: center_policy(args.geometry.center),
        reps: args.reps,
        half_dead: args.half_dead,
        param_seed: seed,
    };
    let methods: Vec<BenchMethod> = args
        .scans
        .iter()
        .flat_map(|s| match *s {
            ScanChoice::Fixed(id) => vec![BenchMethod::Fixed(id)],
            ScanChoice::Ring => args.pcf.iter().map(|&m| BenchMethod::Ring(m)).collect(),
        })
        .collect();
    let seeds = image_seeds(seed, args.seeds);
    let rows = scan_bench(&setup, &methods, &seeds)?;
    let config = json!({
        "scans": list(&args.scans),
        "size": setup.size,
        "channels": setup.channels,
        "seeds": args.seeds,
        "pcf": list(&args.pcf),
        "half_dead": setup.half_dead,
        "reps": setup.reps,
        "token_width": setup.token_width,
        "state_width": setup.state_width,
        "delta_r": setup.delta_r,
        "center": center_json(args.geometry.center),
    });
    Ok(Output { body: bench_csv(&rows), config, seeds, failed: None })
}

fn run_rotation(args: &RotationArgs, cfg: &BackboneConfig, seed: u64) -> Result<Output, Failure> {
    let setup = stress_setup(&args.stress, cfg, seed);
    let seeds = image_seeds(seed, args.stress.seeds);
    let report = rotation_stress(&setup, &args.angles, &seeds, &args.stress.scans)?;
    let mut config = stress_json(&args.stress, &setup);
    config["angles"] = json!(args.angles);
    Ok(Output { body: report.to_csv(), config, seeds, failed: None })
}

fn run_occlusion(args: &OcclusionArgs, cfg: &BackboneConfig, seed: u64) -> Result<Output, Failure> {
    let setup = stress_setup(&args.stress, cfg, seed);
    let seeds = image_seeds(seed, args.stress.seeds);
    let report = occlusion_stress(&setup, &args.grid_div, &seeds, &args.stress.scans)?;
    let mut config = stress_json(&args.stress, &setup);
    config["grid_div"] = json!(args.grid_div);
    Ok(Output { body: report.to_csv(), config, seeds, failed: None })
}

fn run_verify(args: &VerifyArgs, seed: u64) -> Result<Output, Failure> {
    if let Some(bad) = args.only.iter().flatten().find(|id| !CRITERIA.iter().any(|(c, _)| c == *id)) {
        return Err(Failure::Usage(format!("unknown acceptance criterion {bad}; ids are 1-{}", CRITERIA.len())));
    }
    let opts = VerifyOptions { only: args.only.clone(), perturb_kernel: args.perturb_kernel, seed };
    let reports = verify(&opts);
    let mut body = String::new();
    for r in &reports {
        body.push_str(&format!("{r}\n"));
    }
    let failing: Vec<String> = reports.iter().filter(|r| !r.passed).map(|r| format!("{}. {}", r.id, r.name)).collect();
    let passed = reports.len() - failing.len();
    body.push_str(&format!("{passed} of {} criteria passed\n", reports.len()));
    let config = json!({
        "only": args.only,
        "perturb_kernel": args.perturb_kernel,
    });
    let failed = (!failing.is_empty()).then(|| format!("failing: {}", failing.join("; ")));
    Ok(Output { body, config, seeds: vec![seed], failed })
}

fn run_demo(args: &DemoArgs, cfg: &BackboneConfig, seed: Option<u64>) -> Result<Output, Failure> {
    let image = read_prfm(&args.input).map_err(|e| io_failure(&args.input, e))?;
    let cfg = BackboneConfig { seed: seed.unwrap_or(cfg.seed), ..cfg.clone() };
    let trace = Backbone::new(&cfg)?.forward_traced(&image)?;
    let mut body = String::from("class,score\n");
    for (k, s) in trace.scores.iter().enumerate() {
        body.push_str(&format!("{k},{s}\n"));
    }
    let config = json!({
        "input": args.input.display().to_string(),
        "backbone": render_config(&cfg),
        "stage_shapes": trace.stage_shapes,
    });
    Ok(Output { body, config, seeds: vec![cfg.seed], failed: None })
}

fn emit(out: Option<&Path>, body: &str, manifest: impl FnOnce(Vec<String>) -> RunManifest) -> Result<(), Failure> {
    match out {
        None => {
            print!("{body}");
            Ok(())
        }
        Some(path) => {
            std::fs::write(path, body).map_err(|e| io_failure(path, e))?;
            let mpath = manifest::path_for(path);
            let m = manifest(vec![path.display().to_string(), mpath.display().to_string()]);
            m.write(&mpath).map_err(|e| io_failure(&mpath, e))
        }
    }
}

fn run(cli: Cli) -> Result<(), Failure> {
    setup_threads()?;
    let started = Instant::now();
    let started_at = manifest::unix_millis();
    let cfg = load_config(cli.config.as_deref())?;
    let seed = cli.seed.unwrap_or(0);
    let (name, output) = match &cli.command {
        Command::ScanBench(a) => ("scan-bench", run_bench(a, &cfg, seed)?),
        Command::RotationStress(a) => ("rotation-stress", run_rotation(a, &cfg, seed)?),
        Command::OcclusionStress(a) => ("occlusion-stress", run_occlusion(a, &cfg, seed)?),
        Command::Verify(a) => ("verify", run_verify(a, seed)?),
        Command::BackboneDemo(a) => ("backbone-demo", run_demo(a, &cfg, cli.seed)?),
    };
    let Output { body, mut config, seeds, failed } = output;
    config["seed"] = json!(seed);
    config["config_file"] = json!(cli.config.as_ref().map(|p| p.display().to_string()));
    emit(cli.out.as_deref(), &body, |outputs| RunManifest {
        subcommand: name.into(),
        command_line: std::env::args().collect(),
        config,
        seeds,
        outputs,
        tool_version: env!("CARGO_PKG_VERSION").into(),
        started_unix_ms: started_at,
        wall_seconds: started.elapsed().as_secs_f64(),
    })?;
    match failed {
        None => Ok(()),
        Some(msg) => Err(Failure::Property(msg)),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Property(msg)) => {
            eprintln!("prism: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(msg)) => {
            eprintln!("prism: {msg}");
            ExitCode::from(2)
        }
    }
}
