//! Command-line front end for event-based dense optical flow.
//!
//! Three subcommands:
//! - `estimate`: event file in, per-slice flow out as Middlebury `.flo`
//!   displacement, with optional warped-event and color-wheel images.
//! - `metrics`: score predicted flow against ground truth (endpoint error,
//!   outlier percentage, flow warp loss), one row per slice plus a mean row.
//! - `synth`: generate a constant-motion synthetic scene with its ground
//!   truth, for end-to-end checks of the other two.
//!
//! Logs are key=value lines on stderr; stdout carries only tab-separated
//! result tables (header lines start with `#`). Exit code 0 means every
//! requested output was written and no slice failed.

use evflow_cli::{config, flo, pnm, render};

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use evflow_core::events::{
    generate_linear_motion_events, load_events_text, save_events_text, slice_by_count, EventSlice,
    ScenePattern,
};
use evflow_core::metrics::{aee_and_outliers, displacement_field, fwl, EvalMask};
use evflow_core::objective::WarpPlan;
use evflow_core::pde::{build_volume, Scheme};
use evflow_core::solver::{solve_multiscale, solve_sequence};
use evflow_core::warp::{accumulate_iwe, warp_events, warp_events_time_aware};
use evflow_core::{DenseFlow64, SolveConfig64, SolveResult64};

const DEFAULT_SLICE_EVENTS: usize = 30_000;
const DEFAULT_SCALES: u32 = 5;
const DEFAULT_LAMBDA: f64 = 0.0025;
const DEFAULT_BINS: usize = 5;
const DEFAULT_MAX_ITERS: usize = 20;
/// Endpoint-error threshold for the outlier percentage, pixels.
const OUTLIER_PX: f64 = 3.0;
/// Splat width of emitted warped-event images, matching the objective.
const SPLAT_SIGMA: f64 = 1.0;

/// Fixed scene of the `synth` subcommand: random dots drifting 8 px across
/// the span, the same workload the acceptance checks solve.
const SYNTH_VELOCITY: (f64, f64) = (80.0, 0.0);
const SYNTH_DURATION: f64 = 0.1;
const SYNTH_DENSITY: f64 = 0.12;

#[derive(Parser)]
#[command(name = "evflow", version, about = "Dense optical flow from event-camera streams")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Estimate per-slice dense flow from an event text file.
    Estimate(EstimateArgs),
    /// Score predicted .flo files against ground truth.
    Metrics(MetricsArgs),
    /// Generate a synthetic constant-motion scene plus ground truth.
    Synth(SynthArgs),
}

#[derive(Args)]
struct EstimateArgs {
    /// Event text file, one "t x y p" record per line.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Sensor width, pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Sensor height, pixels.
    #[arg(long)]
    height: Option<usize>,
    /// Events per slice; a stream shorter than one slice forms a single
    /// short slice, otherwise a short tail is dropped.
    #[arg(long)]
    num_events: Option<usize>,
    /// Pyramid depth (tile grids 1x1, 2x2, 4x4, ...).
    #[arg(long)]
    scales: Option<u32>,
    /// Weight of the total-variation regularizer.
    #[arg(long)]
    lambda: Option<f64>,
    /// Transport of the flow across the slice span: none, upwind or burgers.
    #[arg(long)]
    time_aware: Option<String>,
    /// Time bins of the transported flow volume.
    #[arg(long)]
    bins: Option<usize>,
    /// Iteration cap per pyramid scale.
    #[arg(long)]
    max_iters: Option<usize>,
    /// Directory for flow_NNNNNN.flo and optional images.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Also write the warped-event image per slice (iwe_NNNNNN.pgm).
    #[arg(long)]
    emit_iwe: bool,
    /// Also write the color-wheel flow render per slice (color_NNNNNN.ppm).
    #[arg(long)]
    emit_color: bool,
    /// Worker threads. Above 1, slices solve independently instead of
    /// warm-starting from the previous slice.
    #[arg(long)]
    threads: Option<usize>,
    /// key=value defaults file; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Event text file the predictions were estimated from.
    #[arg(long)]
    events: Option<PathBuf>,
    /// Sensor width, pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Sensor height, pixels.
    #[arg(long)]
    height: Option<usize>,
    /// Events per slice; must match the estimate run.
    #[arg(long)]
    num_events: Option<usize>,
    /// Directory holding predicted flow_NNNNNN.flo files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Ground-truth displacement: a directory of per-slice flow_NNNNNN.flo
    /// files, or a single .flo spanning the whole stream, rescaled to each
    /// slice's time span. Pixels with non-finite ground truth are skipped.
    #[arg(long)]
    gt: Option<PathBuf>,
    /// key=value defaults file; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Frame width, pixels.
    #[arg(long)]
    width: Option<usize>,
    /// Frame height, pixels.
    #[arg(long)]
    height: Option<usize>,
    /// Target number of emitted events (the generator may emit slightly
    /// more; never fewer unless the scene cannot supply them).
    #[arg(long)]
    num_events: Option<usize>,
    /// Seed for the dot pattern and event timestamps.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for events.txt and gt.flo.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// key=value defaults file; command-line flags win.
    #[arg(long)]
    config: Option<PathBuf>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.cmd {
        Cmd::Estimate(a) => run_estimate(a),
        Cmd::Metrics(a) => run_metrics(a),
        Cmd::Synth(a) => run_synth(a),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// One stderr record: space-separated key=value pairs.
fn log_kv(pairs: &[(&str, String)]) {
    let line: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("{}", line.join(" "));
}

fn load_file_config(path: &Option<PathBuf>) -> Result<HashMap<String, String>> {
    match path {
        Some(p) => config::load_config(p),
        None => Ok(HashMap::new()),
    }
}

/// Boolean config key for flags that are store-true on the command line.
fn config_flag(map: &HashMap<String, String>, key: &str) -> Result<bool> {
    match map.get(key).map(String::as_str) {
        None => Ok(false),
        Some("true") | Some("1") | Some("yes") => Ok(true),
        Some("false") | Some("0") | Some("no") => Ok(false),
        Some(other) => bail!("config key {key}={other:?}: expected a boolean"),
    }
}

/// Full slices of `n` events. A non-empty stream shorter than `n` still
/// yields one (short) slice so small captures remain usable.
fn slice_stream(stream: &EventSlice, n: usize) -> Result<Vec<EventSlice>> {
    let slices = slice_by_count(stream, n, false)?;
    if slices.is_empty() {
        return Ok(slice_by_count(stream, n, true)?);
    }
    Ok(slices)
}

struct EstimateCfg {
    events: PathBuf,
    width: usize,
    height: usize,
    slice_events: usize,
    out_dir: PathBuf,
    emit_iwe: bool,
    emit_color: bool,
    threads: usize,
    solve: SolveConfig64,
}

fn resolve_estimate(args: EstimateArgs) -> Result<EstimateCfg> {
    let map = load_file_config(&args.config)?;
    let mut events = args.events;
    let mut width = args.width;
    let mut height = args.height;
    let mut num_events = args.num_events;
    let mut scales = args.scales;
    let mut lambda = args.lambda;
    let mut time_aware = args.time_aware;
    let mut bins = args.bins;
    let mut max_iters = args.max_iters;
    let mut out_dir = args.out_dir;
    let mut threads = args.threads;
    config::fill(&mut events, &map, "events")?;
    config::fill(&mut width, &map, "width")?;
    config::fill(&mut height, &map, "height")?;
    config::fill(&mut num_events, &map, "num-events")?;
    config::fill(&mut scales, &map, "scales")?;
    config::fill(&mut lambda, &map, "lambda")?;
    config::fill(&mut time_aware, &map, "time-aware")?;
    config::fill(&mut bins, &map, "bins")?;
    config::fill(&mut max_iters, &map, "max-iters")?;
    config::fill(&mut out_dir, &map, "out-dir")?;
    config::fill(&mut threads, &map, "threads")?;
    let emit_iwe = args.emit_iwe || config_flag(&map, "emit-iwe")?;
    let emit_color = args.emit_color || config_flag(&map, "emit-color")?;

    let warp_mode: Scheme = match time_aware.as_deref() {
        None => Scheme::None,
        Some(s) => s.parse()?,
    };
    let threads = threads.unwrap_or(1);
    if threads == 0 {
        bail!("--threads must be at least 1");
    }
    Ok(EstimateCfg {
        events: events.context("--events is required")?,
        width: width.context("--width is required")?,
        height: height.context("--height is required")?,
        slice_events: num_events.unwrap_or(DEFAULT_SLICE_EVENTS),
        out_dir: out_dir.context("--out-dir is required")?,
        emit_iwe,
        emit_color,
        threads,
        solve: SolveConfig64 {
            n_scales: scales.unwrap_or(DEFAULT_SCALES),
            lambda: lambda.unwrap_or(DEFAULT_LAMBDA),
            max_iters_per_scale: max_iters.unwrap_or(DEFAULT_MAX_ITERS),
            warp_mode,
            n_bins: bins.unwrap_or(DEFAULT_BINS),
            ..SolveConfig64::default()
        },
    })
}

fn run_estimate(args: EstimateArgs) -> Result<bool> {
    let cfg = resolve_estimate(args)?;
    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let (stream, load) = load_events_text(&cfg.events, cfg.width, cfg.height)?;
    log_kv(&[
        ("cmd", "estimate".into()),
        ("events", cfg.events.display().to_string()),
        ("loaded", stream.len().to_string()),
        ("dropped_oob", load.dropped_out_of_bounds.to_string()),
        ("sorted_on_load", load.sorted_on_load.to_string()),
    ]);
    let slices = slice_stream(&stream, cfg.slice_events)?;
    let sliced: usize = slices.iter().map(EventSlice::len).sum();
    log_kv(&[
        ("slices", slices.len().to_string()),
        ("slice_events", cfg.slice_events.to_string()),
        ("tail_dropped", (stream.len() - sliced).to_string()),
        ("scales", cfg.solve.n_scales.to_string()),
        ("lambda", cfg.solve.lambda.to_string()),
        ("time_aware", cfg.solve.warp_mode.to_string()),
        ("bins", cfg.solve.n_bins.to_string()),
        ("max_iters", cfg.solve.max_iters_per_scale.to_string()),
        ("threads", cfg.threads.to_string()),
    ]);

    let results = if cfg.threads > 1 {
        solve_parallel(&slices, &cfg.solve, cfg.threads)
    } else {
        solve_sequence(&slices, &cfg.solve)
    };

    println!("# slice\tt_start\tt_end\tevents\tf\tfwl\tcost\tfile");
    let mut all_ok = true;
    for (i, (slice, res)) in slices.iter().zip(&results).enumerate() {
        let row = match res {
            Ok(sr) => emit_slice(i, slice, sr, &cfg),
            Err(e) => Err(anyhow::anyhow!("{e}")),
        };
        match row {
            Ok(line) => println!("{line}"),
            Err(e) => {
                all_ok = false;
                log_kv(&[
                    ("slice", i.to_string()),
                    ("status", "failed".into()),
                    ("error", e.to_string()),
                ]);
            }
        }
    }
    log_kv(&[("done", all_ok.to_string())]);
    Ok(all_ok)
}

/// Writes one slice's outputs and returns its stdout table row.
fn emit_slice(i: usize, slice: &EventSlice, sr: &SolveResult64, cfg: &EstimateCfg) -> Result<String> {
    let flo_name = format!("flow_{i:06}.flo");
    let displacement = displacement_field(&sr.dense, slice.span())?;
    flo::write_flo(&displacement, &cfg.out_dir.join(&flo_name))?;

    // FWL and the optional image use the same warp the solver scored.
    let volume = match cfg.solve.warp_mode {
        Scheme::None => None,
        scheme => Some(build_volume(&sr.dense, slice, cfg.solve.n_bins, scheme)?),
    };
    let fwl_val = {
        let plan = match &volume {
            None => WarpPlan::Constant(&sr.dense),
            Some(v) => WarpPlan::TimeAware(v),
        };
        match fwl(slice, &plan) {
            Ok(v) => v,
            Err(e) => {
                log_kv(&[("slice", i.to_string()), ("fwl_error", e.to_string())]);
                f64::NAN
            }
        }
    };
    if cfg.emit_iwe {
        let warped = match &volume {
            None => warp_events(slice, &sr.dense, slice.t_mid())?,
            Some(v) => warp_events_time_aware(slice, v, slice.t_mid())?,
        };
        let iwe = accumulate_iwe(&warped, slice.width(), slice.height(), SPLAT_SIGMA)?;
        pnm::write_iwe_image(&iwe, &cfg.out_dir.join(format!("iwe_{i:06}.pgm")))?;
    }
    if cfg.emit_color {
        let rgb = render::render_flow_color(&displacement);
        pnm::write_rgb_image(
            displacement.width(),
            displacement.height(),
            &rgb,
            &cfg.out_dir.join(format!("color_{i:06}.ppm")),
        )?;
    }

    let report = &sr.scales.last().context("solve returned no scales")?.report;
    log_kv(&[
        ("slice", i.to_string()),
        ("status", "ok".into()),
        ("iterations", sr.total_iterations().to_string()),
        ("file", flo_name.clone()),
    ]);
    Ok(format!(
        "{i}\t{:.6}\t{:.6}\t{}\t{:.6}\t{:.6}\t{:.6}\t{}",
        slice.t_first(),
        slice.t_last(),
        slice.len(),
        report.f,
        fwl_val,
        report.cost,
        flo_name
    ))
}

/// Cold-solves slices across `threads` workers; result order matches input.
fn solve_parallel(
    slices: &[EventSlice],
    solve: &SolveConfig64,
    threads: usize,
) -> Vec<evflow_core::Result<SolveResult64>> {
    let n = slices.len();
    let mut results: Vec<Option<evflow_core::Result<SolveResult64>>> = Vec::new();
    results.resize_with(n, || None);
    let results = std::sync::Mutex::new(results);
    let next = std::sync::atomic::AtomicUsize::new(0);
    std::thread::scope(|scope| {
        for _ in 0..threads.min(n.max(1)) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let res = solve_multiscale(&slices[i], solve, None);
                results.lock().expect("result store poisoned")[i] = Some(res);
            });
        }
    });
    results
        .into_inner()
        .expect("result store poisoned")
        .into_iter()
        .map(|slot| slot.expect("every slice index visited"))
        .collect()
}

/// Where each slice's ground-truth displacement comes from.
enum GtSource {
    /// Directory of per-slice flow_NNNNNN.flo files, used as-is.
    PerSlice(PathBuf),
    /// One field spanning the whole stream, rescaled to each slice's span.
    Whole { field: DenseFlow64, stream_span: f64 },
}

impl GtSource {
    fn open(path: &Path, stream_span: f64) -> Result<Self> {
        if path.is_dir() {
            return Ok(GtSource::PerSlice(path.to_path_buf()));
        }
        if stream_span <= 0.0 {
            bail!("whole-stream ground truth needs a positive stream time span");
        }
        Ok(GtSource::Whole {
            field: flo::read_flo(path)?,
            stream_span,
        })
    }

    fn for_slice(&self, i: usize, slice: &EventSlice) -> Result<DenseFlow64> {
        match self {
            GtSource::PerSlice(dir) => flo::read_flo(&dir.join(format!("flow_{i:06}.flo"))),
            GtSource::Whole { field, stream_span } => {
                let ratio = slice.span() / stream_span;
                Ok(displacement_field(field, ratio)?)
            }
        }
    }
}

struct MetricsCfg {
    events: PathBuf,
    width: usize,
    height: usize,
    slice_events: usize,
    out_dir: PathBuf,
    gt: PathBuf,
}

fn resolve_metrics(args: MetricsArgs) -> Result<MetricsCfg> {
    let map = load_file_config(&args.config)?;
    let mut events = args.events;
    let mut width = args.width;
    let mut height = args.height;
    let mut num_events = args.num_events;
    let mut out_dir = args.out_dir;
    let mut gt = args.gt;
    config::fill(&mut events, &map, "events")?;
    config::fill(&mut width, &map, "width")?;
    config::fill(&mut height, &map, "height")?;
    config::fill(&mut num_events, &map, "num-events")?;
    config::fill(&mut out_dir, &map, "out-dir")?;
    config::fill(&mut gt, &map, "gt")?;
    Ok(MetricsCfg {
        events: events.context("--events is required")?,
        width: width.context("--width is required")?,
        height: height.context("--height is required")?,
        slice_events: num_events.unwrap_or(DEFAULT_SLICE_EVENTS),
        out_dir: out_dir.context("--out-dir is required")?,
        gt: gt.context("--gt is required")?,
    })
}

fn run_metrics(args: MetricsArgs) -> Result<bool> {
    let cfg = resolve_metrics(args)?;
    let (stream, _) = load_events_text(&cfg.events, cfg.width, cfg.height)?;
    let slices = slice_stream(&stream, cfg.slice_events)?;
    let gt_src = GtSource::open(&cfg.gt, stream.span())?;
    log_kv(&[
        ("cmd", "metrics".into()),
        ("events", cfg.events.display().to_string()),
        ("slices", slices.len().to_string()),
        ("pred_dir", cfg.out_dir.display().to_string()),
        ("gt", cfg.gt.display().to_string()),
        ("outlier_px", OUTLIER_PX.to_string()),
    ]);

    println!("# slice\tevents\taee_px\toutliers_pct\tfwl");
    let mut all_ok = true;
    let mut sums = (0.0, 0.0, 0.0);
    let mut scored = 0usize;
    for (i, slice) in slices.iter().enumerate() {
        match score_slice(i, slice, &gt_src, &cfg) {
            Ok((aee, pct, fwl_val)) => {
                println!("{i}\t{}\t{aee:.6}\t{pct:.6}\t{fwl_val:.6}", slice.len());
                sums = (sums.0 + aee, sums.1 + pct, sums.2 + fwl_val);
                scored += 1;
            }
            Err(e) => {
                all_ok = false;
                log_kv(&[
                    ("slice", i.to_string()),
                    ("status", "failed".into()),
                    ("error", e.to_string()),
                ]);
            }
        }
    }
    if scored > 0 {
        let n = scored as f64;
        println!(
            "mean\t{scored}\t{:.6}\t{:.6}\t{:.6}",
            sums.0 / n,
            sums.1 / n,
            sums.2 / n
        );
    }
    log_kv(&[("done", all_ok.to_string())]);
    Ok(all_ok)
}

fn score_slice(
    i: usize,
    slice: &EventSlice,
    gt_src: &GtSource,
    cfg: &MetricsCfg,
) -> Result<(f64, f64, f64)> {
    let pred = flo::read_flo(&cfg.out_dir.join(format!("flow_{i:06}.flo")))?;
    let gt = gt_src.for_slice(i, slice)?;
    let gt_valid: Vec<bool> = (0..gt.height())
        .flat_map(|y| (0..gt.width()).map(move |x| (x, y)))
        .map(|(x, y)| {
            let (u, v) = gt.at(x, y);
            u.is_finite() && v.is_finite()
        })
        .collect();
    let mask = EvalMask::from_gt_and_events(&gt_valid, slice)?;
    let (aee, pct) = aee_and_outliers(&pred, &gt, &mask, OUTLIER_PX)?;
    // FWL warps with velocity, so the predicted displacement divides back
    // by the slice span.
    let fwl_val = if slice.span() > 0.0 {
        let velocity = displacement_field(&pred, 1.0 / slice.span())?;
        match fwl(slice, &WarpPlan::Constant(&velocity)) {
            Ok(v) => v,
            Err(e) => {
                log_kv(&[("slice", i.to_string()), ("fwl_error", e.to_string())]);
                f64::NAN
            }
        }
    } else {
        f64::NAN
    };
    Ok((aee, pct, fwl_val))
}

struct SynthCfg {
    width: usize,
    height: usize,
    num_events: usize,
    seed: u64,
    out_dir: PathBuf,
}

fn resolve_synth(args: SynthArgs) -> Result<SynthCfg> {
    let map = load_file_config(&args.config)?;
    let mut width = args.width;
    let mut height = args.height;
    let mut num_events = args.num_events;
    let mut seed = args.seed;
    let mut out_dir = args.out_dir;
    config::fill(&mut width, &map, "width")?;
    config::fill(&mut height, &map, "height")?;
    config::fill(&mut num_events, &map, "num-events")?;
    config::fill(&mut seed, &map, "seed")?;
    config::fill(&mut out_dir, &map, "out-dir")?;
    Ok(SynthCfg {
        width: width.unwrap_or(64),
        height: height.unwrap_or(64),
        num_events: num_events.unwrap_or(5000),
        seed: seed.unwrap_or(7),
        out_dir: out_dir.context("--out-dir is required")?,
    })
}

fn run_synth(args: SynthArgs) -> Result<bool> {
    let cfg = resolve_synth(args)?;
    let pattern = ScenePattern::random_dots(cfg.width, cfg.height, SYNTH_DENSITY, cfg.seed)?;
    if pattern.active_count() == 0 {
        bail!("dot pattern came out empty; use a larger frame");
    }
    // Events leaving the frame are clipped, so step the per-pixel rate up
    // until the target count survives.
    let mut rate = (cfg.num_events.div_ceil(pattern.active_count())).max(1);
    let (slice, gt_velocity) = loop {
        let (slice, gt) = generate_linear_motion_events(
            &pattern,
            SYNTH_VELOCITY,
            SYNTH_DURATION,
            rate,
            cfg.seed,
        )?;
        if slice.len() >= cfg.num_events || rate >= 10_000 {
            break (slice, gt);
        }
        rate += 1;
    };

    std::fs::create_dir_all(&cfg.out_dir)
        .with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let events_path = cfg.out_dir.join("events.txt");
    save_events_text(&slice, &events_path)?;
    // Ground truth as displacement across the emitted stream, the
    // single-file convention `metrics --gt` expects.
    let gt_displacement = displacement_field(&gt_velocity, slice.span())?;
    let gt_path = cfg.out_dir.join("gt.flo");
    flo::write_flo(&gt_displacement, &gt_path)?;

    log_kv(&[
        ("cmd", "synth".into()),
        ("frame", format!("{}x{}", cfg.width, cfg.height)),
        ("events", slice.len().to_string()),
        ("span", format!("{:.6}", slice.span())),
        (
            "velocity_px_s",
            format!("{},{}", SYNTH_VELOCITY.0, SYNTH_VELOCITY.1),
        ),
        ("seed", cfg.seed.to_string()),
        ("events_file", events_path.display().to_string()),
        ("gt_file", gt_path.display().to_string()),
    ]);
    Ok(true)
}

#[cfg(test)]
mod tests {
    use super::*;
    use evflow_core::events::Event;

    fn stream_of(n: usize) -> EventSlice {
        let events = (0..n)
            .map(|k| Event {
                t: k as f64 * 0.01,
                x: (k % 8) as u16,
                y: (k % 6) as u16,
                p: if k % 2 == 0 { 1 } else { -1 },
            })
            .collect();
        EventSlice::new(events, 8, 6).unwrap()
    }

    #[test]
    fn slicing_keeps_full_slices_and_drops_the_tail() {
        let slices = slice_stream(&stream_of(25), 10).unwrap();
        assert_eq!(slices.len(), 2);
        assert!(slices.iter().all(|s| s.len() == 10));
    }

    #[test]
    fn short_streams_become_a_single_slice() {
        let slices = slice_stream(&stream_of(7), 10).unwrap();
        assert_eq!(slices.len(), 1);
        assert_eq!(slices[0].len(), 7);
    }

    #[test]
    fn whole_stream_ground_truth_rescales_to_the_slice_span() {
        let field = DenseFlow64::constant(8, 6, (10.0, -4.0), 0.0);
        let src = GtSource::Whole {
            field,
            stream_span: 1.0,
        };
        let slice = {
            let events = vec![
                Event { t: 0.0, x: 1, y: 1, p: 1 },
                Event { t: 0.25, x: 2, y: 2, p: -1 },
            ];
            EventSlice::new(events, 8, 6).unwrap()
        };
        let gt = src.for_slice(0, &slice).unwrap();
        assert_eq!(gt.at(3, 3), (2.5, -1.0));
    }

    #[test]
    fn boolean_config_keys_parse_strictly() {
        let mut map = HashMap::new();
        map.insert("emit-iwe".to_string(), "yes".to_string());
        assert!(config_flag(&map, "emit-iwe").unwrap());
        assert!(!config_flag(&map, "emit-color").unwrap());
        map.insert("emit-color".to_string(), "maybe".to_string());
        assert!(config_flag(&map, "emit-color").is_err());
    }
}
