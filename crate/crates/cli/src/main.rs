use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use behavsub::analyze::{chain_table, report, trace_pixels, DEFAULT_BINS};
use behavsub::behavior::{train_source, BehaviorImage, SurrogateKind};
use behavsub::config::Config;
use behavsub::descriptor::Connectivity;
use behavsub::detect::{summarize, Confusion, Detector};
use behavsub::frame::Geometry;
use behavsub::ingest::{open_source, write_sidecar, FrameSource, RawWriter, SourceFormat};
use behavsub::synth::SceneScript;
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "behavsub", version, about = "Behavior subtraction for video anomaly detection")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn a background behavior image from a training video.
    Train {
        #[arg(long, short)]
        input: PathBuf,
        /// Output behavior image file.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        format: Option<SourceFormat>,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Flag pixels whose activity exceeds the trained behavior.
    Detect {
        #[arg(long, short)]
        behavior: PathBuf,
        #[arg(long, short)]
        input: PathBuf,
        /// Directory for anomaly maps and the event log.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        format: Option<SourceFormat>,
        /// Ground-truth mask video (raw-gray8, nonzero = anomalous).
        #[arg(long)]
        truth: Option<PathBuf>,
        /// Also write per-frame `e - B` score planes as f32 raw files.
        #[arg(long)]
        scores: bool,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Event histograms and fitted label chains for selected pixels.
    Analyze {
        #[arg(long, short)]
        input: PathBuf,
        /// Pixel as `x,y`; repeatable.
        #[arg(long = "pixel", short, required = true, value_parser = parse_pixel)]
        pixels: Vec<(usize, usize)>,
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long)]
        format: Option<SourceFormat>,
        #[arg(long, default_value_t = DEFAULT_BINS)]
        bins: usize,
        #[command(flatten)]
        config: ConfigArgs,
    },
    /// Render a scene script to a raw-gray8 video plus ground-truth masks.
    Synth {
        #[arg(long, short)]
        script: PathBuf,
        /// Output stem: writes `<stem>.raw`, `<stem>_truth.raw` and sidecars.
        #[arg(long, short)]
        output: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// Sectioned key=value configuration file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Descriptor window size N (odd).
    #[arg(long = "window-n")]
    window_n: Option<usize>,
    #[arg(long)]
    connectivity: Option<Connectivity>,
    /// Event window length in frames.
    #[arg(long)]
    w: Option<usize>,
    #[arg(long)]
    a1: Option<f64>,
    #[arg(long)]
    a2: Option<f64>,
    #[arg(long)]
    a3: Option<f64>,
    #[arg(long)]
    theta: Option<f64>,
    #[arg(long)]
    surrogate: Option<SurrogateKind>,
}

fn parse_pixel(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected x,y, got {s:?}"))?;
    let coord = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("{v:?}: {e}"));
    Ok((coord(x)?, coord(y)?))
}

enum Failure {
    Config(String),
    Data(String),
}

impl From<behavsub::Error> for Failure {
    fn from(e: behavsub::Error) -> Self {
        if e.is_config_error() {
            Failure::Config(e.to_string())
        } else {
            Failure::Data(e.to_string())
        }
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Data(e.to_string())
    }
}

type Outcome = Result<(), Failure>;

impl ConfigArgs {
    fn resolve(&self) -> Result<Config, Failure> {
        let mut c = Config::default();
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path)
                .map_err(|e| Failure::Config(format!("cannot read config {}: {e}", path.display())))?;
            c.apply_text(&path.display().to_string(), &text)?;
        }
        macro_rules! set {
            ($field:expr, $flag:expr) => {
                if let Some(v) = $flag {
                    $field = v;
                }
            };
        }
        set!(c.tau, self.tau);
        set!(c.rho, self.rho);
        set!(c.descriptor.n, self.window_n);
        set!(c.descriptor.connectivity, self.connectivity);
        set!(c.event.w, self.w);
        set!(c.event.a1, self.a1);
        set!(c.event.a2, self.a2);
        set!(c.event.a3, self.a3);
        set!(c.theta, self.theta);
        set!(c.surrogate, self.surrogate);
        c.validate()?;
        println!("# effective configuration\n{c}\n");
        Ok(c)
    }
}

fn open(path: &Path, format: Option<SourceFormat>) -> Result<FrameSource, Failure> {
    let format = format.unwrap_or(if path.is_dir() {
        SourceFormat::ImageDir
    } else {
        SourceFormat::RawGray8
    });
    Ok(open_source(path, format)?)
}

fn cmd_train(input: &Path, output: &Path, format: Option<SourceFormat>, args: &ConfigArgs) -> Outcome {
    let config = args.resolve()?;
    let source = open(input, format)?;
    let g = source.geometry();
    let b = train_source(source, &config)?;
    b.save(output)?;
    let s = b.stats();
    println!("trained on M={} frames, {}x{}", b.meta.frames, g.width, g.height);
    println!("surrogate={} B min={:.6} mean={:.6} max={:.6}", b.kind, s.min, s.mean, s.max);
    println!("wrote {}", output.display());
    Ok(())
}

struct DetectOptions<'a> {
    behavior: &'a Path,
    input: &'a Path,
    output: &'a Path,
    format: Option<SourceFormat>,
    truth: Option<&'a Path>,
    scores: bool,
}

fn cmd_detect(opts: DetectOptions<'_>, args: &ConfigArgs) -> Outcome {
    let config = args.resolve()?;
    let b = BehaviorImage::load(opts.behavior)?;
    let mut detector = Detector::new(b, &config)?;
    let source = open(opts.input, opts.format)?;
    let g = detector.behavior().geometry();
    g.ensure_same(source.geometry())?;
    let mut truth = match opts.truth {
        Some(p) => {
            let t = open_source(p, SourceFormat::RawGray8)?;
            g.ensure_same(t.geometry())?;
            Some(t)
        }
        None => None,
    };

    let maps_dir = opts.output.join("maps");
    fs::create_dir_all(&maps_dir)?;
    let scores_dir = opts.output.join("scores");
    if opts.scores {
        fs::create_dir_all(&scores_dir)?;
    }
    let mut log = std::io::BufWriter::new(fs::File::create(opts.output.join("events.csv"))?);
    writeln!(log, "frame,warm,count,fraction,boxes,areas")?;

    let mut confusion = Confusion::default();
    let (mut frames, mut warm, mut flagged) = (0usize, 0usize, 0usize);
    let start = Instant::now();
    for frame in source {
        let frame = frame?;
        let map = detector.push(&frame)?;
        let stem = format!("{:06}", map.t);
        fs::write(maps_dir.join(format!("{stem}.pbm")), map.to_pbm())?;
        if opts.scores {
            let path = scores_dir.join(format!("{stem}.raw"));
            fs::write(&path, map.scores_le_bytes())?;
            write_sidecar(&path, g, &[("dtype", "f32le".to_string())])?;
        }
        let summary = summarize(map, config.descriptor.connectivity);
        let boxes: Vec<String> = summary
            .blobs
            .iter()
            .map(|b| format!("{} {} {} {}", b.x0, b.y0, b.x1, b.y1))
            .collect();
        let areas: Vec<String> = summary.blobs.iter().map(|b| b.area.to_string()).collect();
        writeln!(
            log,
            "{},{},{},{:.6},{},{}",
            map.t,
            u8::from(map.warm),
            summary.count,
            summary.fraction,
            boxes.join(";"),
            areas.join(";")
        )?;
        if let Some(t) = truth.as_mut() {
            let mask = t
                .next()
                .ok_or_else(|| Failure::Data("truth video is shorter than the input".into()))??;
            if map.warm {
                let bits: Vec<bool> = mask.data.iter().map(|&v| v != 0).collect();
                confusion.add(&map.decisions, &bits)?;
            }
        }
        frames += 1;
        warm += usize::from(map.warm);
        flagged += summary.count;
    }
    log.flush()?;
    let secs = start.elapsed().as_secs_f64();
    println!("processed {frames} frames ({warm} after warm-up), {flagged} anomalous pixels");
    println!("throughput {:.1} frames/s", frames as f64 / secs.max(1e-9));
    if truth.is_some() {
        println!(
            "against truth: precision={:.4} recall={:.4} IoU={:.4}",
            confusion.precision(),
            confusion.recall(),
            confusion.iou()
        );
    }
    println!("wrote {}", opts.output.display());
    Ok(())
}

fn cmd_analyze(
    input: &Path,
    pixels: &[(usize, usize)],
    output: &Path,
    format: Option<SourceFormat>,
    bins: usize,
    args: &ConfigArgs,
) -> Outcome {
    let config = args.resolve()?;
    let source = open(input, format)?;
    let g: Geometry = source.geometry();
    let traces = trace_pixels(source, g, &config, pixels)?;
    fs::create_dir_all(output)?;
    let mut reports = Vec::with_capacity(traces.len());
    for trace in &traces {
        let r = report(trace, &config, bins)?;
        let path = output.join(format!("pixel_{}_{}.csv", r.x, r.y));
        fs::write(&path, r.histogram.to_csv())?;
        println!(
            "pixel ({}, {}): {} events, lowest-bin mass {:.3}",
            r.x,
            r.y,
            r.histogram.total,
            r.histogram.mass(0)
        );
        reports.push(r);
    }
    let table = chain_table(&reports);
    fs::write(output.join("chains.csv"), &table)?;
    print!("{table}");
    Ok(())
}

fn cmd_synth(script: &Path, output: &Path, seed: u64) -> Outcome {
    let text = fs::read_to_string(script)
        .map_err(|e| Failure::Data(format!("cannot read script {}: {e}", script.display())))?;
    let scene = SceneScript::parse(&text)?;
    let stem = output.with_extension("");
    let video_path = stem.with_extension("raw");
    let mut truth_name = stem.file_name().unwrap_or_default().to_owned();
    truth_name.push("_truth.raw");
    let truth_path = stem.with_file_name(truth_name);
    if let Some(dir) = video_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let g = scene.geometry();
    let mut video = RawWriter::create(&video_path, g)?;
    let mut masks = RawWriter::create(&truth_path, g)?;
    let mut anomalous = 0usize;
    for (frame, mask) in scene.renderer(seed)? {
        video.write(&frame.data)?;
        anomalous += mask.iter().filter(|&&m| m).count();
        let bytes: Vec<u8> = mask.iter().map(|&m| if m { 255 } else { 0 }).collect();
        masks.write(&bytes)?;
    }
    let n = video.finish()?;
    masks.finish()?;
    println!("rendered {n} frames {}x{} (seed {seed}), {anomalous} anomalous pixels", g.width, g.height);
    println!("wrote {} and {}", video_path.display(), truth_path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let outcome = match &cli.command {
        Command::Train {
            input,
            output,
            format,
            config,
        } => cmd_train(input, output, *format, config),
        Command::Detect {
            behavior,
            input,
            output,
            format,
            truth,
            scores,
            config,
        } => cmd_detect(
            DetectOptions {
                behavior,
                input,
                output,
                format: *format,
                truth: truth.as_deref(),
                scores: *scores,
            },
            config,
        ),
        Command::Analyze {
            input,
            pixels,
            output,
            format,
            bins,
            config,
        } => cmd_analyze(input, pixels, output, *format, *bins, config),
        Command::Synth { script, output, seed } => cmd_synth(script, output, *seed),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Data(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}
