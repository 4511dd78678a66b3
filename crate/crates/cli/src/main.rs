use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{info, warn};

use occflow::bev::{height_pgm, labels_csv, project_height, project_label};
use occflow::flow::{correspondences_csv, estimate_flow, flow_field, save_flow, FlowParams};
use occflow::forecast::{copy_paste, forecast, forecast_iterated, ForecastParams, WarpMode};
use occflow::fusion::{
    combined_loss, load_feature, GateWeight, IdentityRefiner, QualityFusion, WeightOrder,
    DEFAULT_LAMBDA,
};
use occflow::grid::{
    export_raw, import_raw, load_grid_with_classes, load_sequence, save_grid, save_sequence,
    OccGrid, OccSequence, DEFAULT_NUM_CLASSES,
};
use occflow::metrics::{evaluate_horizons, ClassSet};
use occflow::pipeline::{homography_text, run, RunConfig, DEFAULT_SEED};
use occflow::selftest::run_self_test;
use occflow::synth::{generate, preset, scenario_presets, SynthRecord};
use occflow::Error;

/// Exit status for every typed error.
const ERROR_EXIT: u8 = 2;

#[derive(Parser, Debug)]
#[command(
    name = "occflow",
    version,
    about = "Occupancy forecasting with BEV scene flow"
)]
struct Cli {
    /// Worker threads for internal parallelism (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for every random choice (RANSAC sampling, synthetic scenes).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (-v info, -vv debug); RUST_LOG overrides.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert between raw label dumps, OCCV grids, OCCS sequences and directories.
    Convert(ConvertArgs),
    /// Project a grid to a 16-bit PGM height map and a label CSV.
    Bev(BevArgs),
    /// Estimate the homography between two grids' height maps.
    Flow(FlowArgs),
    /// Forecast future frames by warping the last history frame.
    Forecast(ForecastArgs),
    /// Baseline forecasts.
    Baseline(BaselineArgs),
    /// Gated, class-weighted fusion of two predictions.
    Fuse(FuseArgs),
    /// Softmax cross-entropy and Lovasz-softmax of a probability dump.
    Loss(LossArgs),
    /// IoU / mIoU per horizon as CSV (or JSON).
    Eval(EvalArgs),
    /// Generate a synthetic scene sequence with ground-truth motion.
    Synth(SynthArgs),
    /// Run the whole pipeline from a TOML config.
    Run(RunArgs),
    /// Check invariants on the synthetic presets.
    SelfTest,
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// `.raw`, `.occv`, `.occs`, or a directory of `.occv` files.
    #[arg(long)]
    input: PathBuf,
    /// `.raw`, `.occv`, `.occs`, or a directory (created) for `.occv` frames.
    #[arg(long)]
    output: PathBuf,
    /// Grid size for raw input, e.g. `200,200,16`.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
}

#[derive(Args, Debug)]
struct BevArgs {
    /// `.occv` grid or `.occs` sequence.
    #[arg(long)]
    input: PathBuf,
    /// Frame of a sequence to project (default: last).
    #[arg(long)]
    frame: Option<usize>,
    #[arg(long)]
    pgm: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
}

#[derive(Args, Debug, Clone)]
struct FlowOpts {
    #[arg(long, default_value_t = 9)]
    block_size: usize,
    #[arg(long, default_value_t = 12)]
    search_radius: usize,
    #[arg(long, default_value_t = 0.5)]
    min_texture: f64,
    #[arg(long, default_value_t = 1000)]
    ransac_iters: usize,
    #[arg(long, default_value_t = 1.0)]
    inlier_thresh: f64,
    #[arg(long, default_value_t = 12)]
    min_inliers: usize,
}

impl FlowOpts {
    fn params(&self, seed: u64) -> FlowParams {
        FlowParams {
            block_size: self.block_size,
            search_radius: self.search_radius,
            min_texture: self.min_texture,
            ransac_iters: self.ransac_iters,
            inlier_thresh: self.inlier_thresh,
            min_inliers: self.min_inliers,
            seed,
        }
    }
}

#[derive(Args, Debug)]
struct FlowArgs {
    /// Earlier grid (`.occv`), or a sequence whose last two frames are used.
    #[arg(long)]
    from: PathBuf,
    /// Later grid (`.occv`); omit when `--from` is a sequence.
    #[arg(long)]
    to: Option<PathBuf>,
    /// Dense flow field output (FLOW format).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Correspondence CSV output.
    #[arg(long)]
    matches: Option<PathBuf>,
    #[command(flatten)]
    flow: FlowOpts,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Mode {
    Backward,
    Forward,
}

impl From<Mode> for WarpMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Backward => WarpMode::BackwardNn,
            Mode::Forward => WarpMode::ForwardSplat,
        }
    }
}

#[derive(Args, Debug)]
struct ForecastArgs {
    /// History sequence (`.occs` or a directory of `.occv`).
    #[arg(long)]
    history: PathBuf,
    #[arg(long, default_value_t = 4)]
    horizon: usize,
    #[arg(long, value_enum, default_value_t = Mode::Backward)]
    mode: Mode,
    /// Re-warp each predicted frame instead of composing the motion.
    #[arg(long)]
    iterated: bool,
    #[arg(long)]
    out: PathBuf,
    /// Also write the per-frame homography as text.
    #[arg(long)]
    homography: Option<PathBuf>,
    #[command(flatten)]
    flow: FlowOpts,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum BaselineKind {
    CopyPaste,
}

#[derive(Args, Debug)]
struct BaselineArgs {
    #[arg(value_enum)]
    kind: BaselineKind,
    #[arg(long)]
    history: PathBuf,
    #[arg(long, default_value_t = 4)]
    horizon: usize,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum Order {
    FrequentHigh,
    RareHigh,
}

#[derive(Args, Debug)]
struct FuseArgs {
    /// Flow-branch prediction (`.occv` or `.occs`).
    #[arg(long)]
    a: PathBuf,
    /// Second prediction, same kind as `--a`; source of the class weights.
    #[arg(long)]
    b: PathBuf,
    /// Gate weight toward `--b`, in [0, 1].
    #[arg(long)]
    w: f64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Order::FrequentHigh)]
    order: Order,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
}

#[derive(Args, Debug)]
struct LossArgs {
    /// Probability dump (FEAT).
    #[arg(long)]
    pred: PathBuf,
    /// Ground-truth grid (`.occv`).
    #[arg(long)]
    gt: PathBuf,
    #[arg(long, default_value_t = DEFAULT_LAMBDA)]
    lambda: f64,
    /// Lovasz classes, e.g. `1,2,3` (default: every channel).
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<u8>>,
    /// Leave free voxels out of the cross-entropy.
    #[arg(long)]
    ignore_free: bool,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Prediction (`.occv`, `.occs` or directory).
    #[arg(long)]
    pred: PathBuf,
    /// Ground truth, same frame count as `--pred`.
    #[arg(long)]
    gt: PathBuf,
    /// Evaluated classes, e.g. `1,2,3` (default: Occ3D 1..=16).
    #[arg(long, value_delimiter = ',')]
    classes: Option<Vec<u8>>,
    #[arg(long, default_value_t = DEFAULT_NUM_CLASSES)]
    num_classes: usize,
    /// Structured JSON report instead of CSV.
    #[arg(long)]
    json: bool,
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// One of the named presets; `--list` shows them.
    #[arg(long, required_unless_present = "list")]
    preset: Option<String>,
    #[arg(long)]
    list: bool,
    #[arg(long, required_unless_present = "list")]
    out: Option<PathBuf>,
    /// Ground-truth sidecar (default: `<out>.motion.toml`).
    #[arg(long)]
    motion: Option<PathBuf>,
    /// Override the preset's grid size, e.g. `200,200,8`.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<[usize; 3]>,
    #[arg(long)]
    frames: Option<usize>,
    /// Write only the first N frames to `--out` and the rest to `--future`.
    #[arg(long, requires = "future")]
    history_frames: Option<usize>,
    #[arg(long)]
    future: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
}

fn parse_dims(s: &str) -> Result<[usize; 3], String> {
    let parts: Vec<usize> = s
        .split([',', 'x'])
        .map(|p| p.trim().parse().map_err(|_| format!("bad dimension {p:?}")))
        .collect::<Result<_, _>>()?;
    <[usize; 3]>::try_from(parts).map_err(|_| "expected three dimensions".to_string())
}

fn create_parent(path: &Path) -> Result<(), Error> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() => {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
        }
        _ => Ok(()),
    }
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    create_parent(path)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn extension(path: &Path) -> String {
    path.extension()
        .and_then(|e| e.to_str())
        .unwrap_or("")
        .to_ascii_lowercase()
}

fn is_grid_file(path: &Path) -> bool {
    extension(path) == "occv"
}

/// A single grid or a sequence, chosen by extension.
fn load_frames(path: &Path, num_classes: usize) -> Result<OccSequence, Error> {
    if is_grid_file(path) {
        OccSequence::new(
            vec![load_grid_with_classes(path, num_classes)?],
            occflow::grid::format::DEFAULT_FRAME_PERIOD_S,
        )
    } else {
        load_sequence(path, num_classes)
    }
}

fn save_frames(seq: &OccSequence, path: &Path, single: bool) -> Result<(), Error> {
    create_parent(path)?;
    if single {
        save_grid(&seq.frames()[0], path)
    } else {
        save_sequence(seq, path)
    }
}

fn convert(a: ConvertArgs) -> Result<(), Error> {
    let (src, dst) = (extension(&a.input), extension(&a.output));
    match (src.as_str(), dst.as_str()) {
        ("raw", _) => {
            let dims = a
                .dims
                .ok_or_else(|| Error::InvalidParams("raw input needs --dims".into()))?;
            let grid = import_raw(&a.input, dims, a.num_classes)?;
            create_parent(&a.output)?;
            save_grid(&grid, &a.output)
        }
        ("occv", "raw") => {
            let grid = load_grid_with_classes(&a.input, a.num_classes)?;
            create_parent(&a.output)?;
            export_raw(&grid, &a.output)
        }
        ("occs", "") => {
            let seq = load_sequence(&a.input, a.num_classes)?;
            fs::create_dir_all(&a.output).map_err(|e| Error::io(&a.output, e))?;
            let width = seq.len().to_string().len().max(3);
            for (i, frame) in seq.frames().iter().enumerate() {
                save_grid(frame, a.output.join(format!("{i:0width$}.occv")))?;
            }
            Ok(())
        }
        (_, "occs") | (_, "occv") => {
            let seq = load_frames(&a.input, a.num_classes)?;
            let single = dst == "occv";
            if single && seq.len() != 1 {
                return Err(Error::InvalidParams(format!(
                    "{} frames cannot go into one .occv",
                    seq.len()
                )));
            }
            save_frames(&seq, &a.output, single)
        }
        _ => Err(Error::InvalidParams(format!(
            "no conversion from {:?} to {:?}",
            a.input, a.output
        ))),
    }
}

fn bev(a: BevArgs) -> Result<(), Error> {
    let seq = load_frames(&a.input, a.num_classes)?;
    let index = a.frame.unwrap_or(seq.len() - 1);
    let grid = seq
        .frames()
        .get(index)
        .ok_or_else(|| Error::InvalidParams(format!("frame {index} of {} frames", seq.len())))?;
    if a.pgm.is_none() && a.labels.is_none() {
        return Err(Error::InvalidParams(
            "nothing to write: pass --pgm and/or --labels".into(),
        ));
    }
    if let Some(p) = &a.pgm {
        write_bytes(p, &height_pgm(&project_height(grid)))?;
    }
    if let Some(p) = &a.labels {
        write_bytes(p, labels_csv(&project_label(grid)).as_bytes())?;
    }
    Ok(())
}

fn flow(a: FlowArgs, seed: u64) -> Result<(), Error> {
    let (g0, g1): (OccGrid, OccGrid) = match &a.to {
        Some(to) => (
            load_grid_with_classes(&a.from, a.num_classes)?,
            load_grid_with_classes(to, a.num_classes)?,
        ),
        None => {
            let seq = load_frames(&a.from, a.num_classes)?;
            let n = seq.len();
            if n < 2 {
                return Err(Error::HistoryTooShort {
                    found: n,
                    required: 2,
                });
            }
            let frames = seq.into_frames();
            let mut it = frames.into_iter().skip(n - 2);
            (
                it.next().expect("two frames"),
                it.next().expect("two frames"),
            )
        }
    };
    let params = a.flow.params(seed);
    let est = estimate_flow(&project_height(&g0), &project_height(&g1), &params)?;
    if let Some(p) = &a.matches {
        let mask = est.fit.as_ref().ok().map(|f| f.inliers.as_slice());
        write_bytes(
            p,
            correspondences_csv(&est.correspondences, mask).as_bytes(),
        )?;
    }
    let fit = est.fit?;
    info!(
        "{} correspondences, {} inliers",
        est.correspondences.len(),
        fit.inlier_count()
    );
    let h = fit.homography;
    let numbers: Vec<String> = h.to_row_major().iter().map(|v| v.to_string()).collect();
    println!("{}", numbers.join(" "));
    if let Some(p) = &a.out {
        let [w, hh, _] = g0.dims();
        create_parent(p)?;
        save_flow(&flow_field(&h, w, hh)?, p)?;
    }
    Ok(())
}

fn run_forecast(a: ForecastArgs, seed: u64) -> Result<(), Error> {
    let history = load_sequence(&a.history, a.num_classes)?;
    let params = ForecastParams {
        horizon: a.horizon,
        warp: a.mode.into(),
        flow: a.flow.params(seed),
    };
    let fc = if a.iterated {
        forecast_iterated(&history, &params)?
    } else {
        forecast(&history, &params)?
    };
    if let Some(fb) = &fc.fallback {
        warn!("fell back to copy-paste: code={} {}", fb.code, fb.message);
    }
    save_frames(&fc.frames, &a.out, false)?;
    if let Some(p) = &a.homography {
        write_bytes(p, homography_text(&fc.homography).as_bytes())?;
    }
    Ok(())
}

fn baseline(a: BaselineArgs) -> Result<(), Error> {
    match a.kind {
        BaselineKind::CopyPaste => {
            let history = load_sequence(&a.history, a.num_classes)?;
            save_frames(&copy_paste(&history, a.horizon)?, &a.out, false)
        }
    }
}

fn fuse(a: FuseArgs) -> Result<(), Error> {
    let pa = load_frames(&a.a, a.num_classes)?;
    let pb = load_frames(&a.b, a.num_classes)?;
    if pa.len() != pb.len() {
        return Err(Error::LengthMismatch {
            pred: pa.len(),
            gt: pb.len(),
        });
    }
    let fusion = QualityFusion {
        gate: GateWeight::new(a.w)?,
        num_classes: a.num_classes,
        order: match a.order {
            Order::FrequentHigh => WeightOrder::FrequentHigh,
            Order::RareHigh => WeightOrder::RareHigh,
        },
    };
    let frames = pa
        .frames()
        .iter()
        .zip(pb.frames())
        .map(|(x, y)| fusion.fuse(x, y, &IdentityRefiner))
        .collect::<Result<Vec<_>, _>>()?;
    let out = OccSequence::new(frames, pa.frame_period_s())?;
    save_frames(&out, &a.out, is_grid_file(&a.out))
}

fn loss(a: LossArgs) -> Result<(), Error> {
    let pred = load_feature(&a.pred)?;
    let gt = load_grid_with_classes(&a.gt, pred.num_classes())?;
    let classes: Vec<u8> = match a.classes {
        Some(c) => c,
        None => (0..pred.num_classes()).map(|c| c as u8).collect(),
    };
    let r = combined_loss(&pred, &gt, &classes, a.lambda, a.ignore_free)?;
    println!("softmax_ce {}", r.softmax);
    println!("lovasz_softmax {}", r.lovasz);
    println!("lambda {}", r.lambda);
    println!("total {}", r.total);
    Ok(())
}

fn eval(a: EvalArgs) -> Result<(), Error> {
    let pred = load_frames(&a.pred, a.num_classes)?;
    let gt = load_frames(&a.gt, a.num_classes)?;
    let classes = match a.classes {
        Some(c) => ClassSet::new(a.num_classes, c)?,
        None if a.num_classes == DEFAULT_NUM_CLASSES => ClassSet::default(),
        None => ClassSet::new(a.num_classes, (1..a.num_classes as u8).collect())?,
    };
    let table = evaluate_horizons(&pred, &gt, &classes)?;
    let text = if a.json {
        table.to_json() + "\n"
    } else {
        table.to_csv()
    };
    match &a.out {
        Some(p) => write_bytes(p, text.as_bytes()),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn synth(a: SynthArgs, seed: Option<u64>) -> Result<(), Error> {
    if a.list {
        for (name, sc) in scenario_presets() {
            println!(
                "{name}: dims {:?}, {} frames, {} objects, ego {:?}/frame {} deg, seed {}",
                sc.dims,
                sc.frames,
                sc.objects.len(),
                sc.ego.translation,
                sc.ego.yaw_deg,
                sc.seed
            );
        }
        return Ok(());
    }
    let name = a.preset.expect("clap enforces --preset");
    let out = a.out.expect("clap enforces --out");
    let mut sc = preset(&name)?;
    if let Some(s) = seed {
        sc = sc.with_seed(s);
    }
    if let Some(d) = a.dims {
        sc = sc.with_dims(d);
    }
    if let Some(f) = a.frames {
        sc.frames = f;
    }
    let (seq, motion) = generate(&sc)?;
    match (a.history_frames, &a.future) {
        (Some(k), Some(future)) => {
            if k == 0 || k >= seq.len() {
                return Err(Error::InvalidParams(format!(
                    "--history-frames {k} must split {} frames",
                    seq.len()
                )));
            }
            save_frames(&seq.slice(0..k)?, &out, false)?;
            save_frames(&seq.slice(k..seq.len())?, future, false)?;
        }
        _ => save_frames(&seq, &out, false)?,
    }
    let record = SynthRecord {
        preset: Some(name),
        scenario: sc,
        motion,
    };
    let motion_path = a.motion.unwrap_or_else(|| {
        let mut p = out.clone().into_os_string();
        p.push(".motion.toml");
        PathBuf::from(p)
    });
    write_bytes(&motion_path, record.to_toml()?.as_bytes())
}

fn run_config(a: RunArgs, seed: Option<u64>) -> Result<(), Error> {
    let mut config = RunConfig::load(&a.config)?;
    if let Some(s) = seed {
        config.seed = s;
    }
    let summary = run(&config)?;
    if let Some(fb) = &summary.fallback {
        warn!(
            "forecast fell back to copy-paste: code={} {}",
            fb.code, fb.message
        );
    }
    for p in &summary.artifacts {
        println!("{}", p.display());
    }
    Ok(())
}

fn self_test(seed: u64) -> Result<bool, Error> {
    let report = run_self_test(seed);
    let mut stdout = std::io::stdout().lock();
    for r in &report.results {
        let status = if r.passed { "PASS" } else { "FAIL" };
        writeln!(
            stdout,
            "{status} {} ({:.0} ms) {}",
            r.name,
            r.elapsed.as_secs_f64() * 1e3,
            r.detail
        )
        .ok();
    }
    let passed = report.results.iter().filter(|r| r.passed).count();
    writeln!(
        stdout,
        "{passed}/{} properties passed in {:.2} s",
        report.results.len(),
        report.elapsed.as_secs_f64()
    )
    .ok();
    Ok(report.all_passed())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn fail(code: &str, message: &str) -> ExitCode {
    eprintln!("error code={code} message={}", one_line(message));
    ExitCode::from(ERROR_EXIT)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(
                e.kind(),
                ErrorKind::DisplayHelp
                    | ErrorKind::DisplayVersion
                    | ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand
            ) {
                let _ = e.print();
                return if e.kind() == ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand {
                    ExitCode::from(ERROR_EXIT)
                } else {
                    ExitCode::SUCCESS
                };
            }
            let rendered = e.render().to_string();
            let first = rendered
                .lines()
                .next()
                .unwrap_or("")
                .trim_start_matches("error: ");
            return fail("USAGE", first);
        }
    };

    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    if let Some(n) = cli.threads {
        if n == 0 {
            return fail("INVALID_PARAMS", "--threads must be >= 1");
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
        {
            return fail("INVALID_PARAMS", &e.to_string());
        }
    }

    let seed = cli.seed.unwrap_or(DEFAULT_SEED);
    let result = match cli.command {
        Command::Convert(a) => convert(a),
        Command::Bev(a) => bev(a),
        Command::Flow(a) => flow(a, seed),
        Command::Forecast(a) => run_forecast(a, seed),
        Command::Baseline(a) => baseline(a),
        Command::Fuse(a) => fuse(a),
        Command::Loss(a) => loss(a),
        Command::Eval(a) => eval(a),
        Command::Synth(a) => synth(a, cli.seed),
        Command::Run(a) => run_config(a, cli.seed),
        Command::SelfTest => match self_test(seed) {
            Ok(true) => Ok(()),
            Ok(false) => return ExitCode::FAILURE,
            Err(e) => Err(e),
        },
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(e.code(), &e.to_string()),
    }
}
