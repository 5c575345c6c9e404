//! `turnmove` command-line frontend.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use turnmove::baselines::{classify_line_based, classify_shape_similarity, ShapeSimilaritySpec};
use turnmove::config::RunConfig;
use turnmove::evaluation::{
    apply_alignment, best_alignment, build_confusion, read_labels, sig6, write_labels, MetricsReport, UnknownPolicy,
};
use turnmove::pipeline::{classify_dataset, train_with_report, MovementModel};
use turnmove::render::render_svg;
use turnmove::synth::generate;
use turnmove::trajectory::{load_trajectories, write_trajectories, ApproachDataset, MovementLabel};

#[derive(Parser)]
#[command(name = "turnmove", version, about = "Turning-movement counts from vehicle trajectories")]
struct Cli {
    /// TOML run configuration; flags override its values
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Learn movements from a trajectory CSV and write the model JSON
    Train(TrainArgs),
    /// Label every vehicle of a trajectory CSV
    Classify(ClassifyArgs),
    /// Score a labels CSV against ground truth
    Evaluate(EvaluateArgs),
    /// Write a synthetic scene and its ground truth
    Generate(GenerateArgs),
    /// Draw a trajectory CSV (and optionally a model) as SVG
    Render(RenderArgs),
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    /// Model JSON to write
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    k_movements: Option<usize>,
    #[arg(long)]
    min_points: Option<usize>,
    #[arg(long)]
    min_cluster_fraction: Option<f64>,
    /// Lanes for one movement, e.g. `Through=2`; repeatable
    #[arg(long = "lanes", value_parser = parse_lanes)]
    lanes: Vec<(MovementLabel, usize)>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Pipeline,
    Line,
    Shape,
}

#[derive(Args)]
struct ClassifyArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    /// Labels CSV to write
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pipeline")]
    method: Method,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long, default_value = "count-as-error")]
    policy: UnknownPolicy,
    /// Map predicted labels onto truth labels by best agreement first
    #[arg(long)]
    align: bool,
    /// Also write the full report as JSON
    #[arg(long)]
    json: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Base file name; writes NAME.csv and NAME_truth.csv
    #[arg(long, default_value = "scene")]
    name: String,
}

#[derive(Args)]
struct RenderArgs {
    #[arg(long)]
    input: Option<PathBuf>,
    #[arg(long)]
    model: Option<PathBuf>,
    #[arg(long)]
    output: Option<PathBuf>,
}

fn parse_lanes(s: &str) -> Result<(MovementLabel, usize), String> {
    let (l, n) = s.split_once('=').ok_or_else(|| format!("expected LABEL=N, got {s:?}"))?;
    let label = l.trim().parse::<MovementLabel>().map_err(|e| e.to_string())?;
    let n = n.trim().parse::<usize>().map_err(|e| e.to_string())?;
    Ok((label, n))
}

fn pick(flag: Option<PathBuf>, file: &Option<PathBuf>, what: &str) -> Result<PathBuf> {
    flag.or_else(|| file.clone())
        .ok_or_else(|| anyhow!("no {what} path given (flag or [paths] in config)"))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let f = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(f))
}

fn load_model(path: &Path) -> Result<MovementModel> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading model {}", path.display()))?;
    MovementModel::from_json(&text).with_context(|| format!("loading model {}", path.display()))
}

fn load_csv(path: &Path) -> Result<ApproachDataset> {
    load_trajectories(path).with_context(|| format!("loading trajectories {}", path.display()))
}

fn load_label_file(path: &Path) -> Result<BTreeMap<String, MovementLabel>> {
    let f = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    read_labels(f).with_context(|| format!("reading labels {}", path.display()))
}

fn cmd_train(cfg: &RunConfig, a: TrainArgs) -> Result<()> {
    let input = pick(a.input, &cfg.paths.input, "input")?;
    let output = pick(a.output, &cfg.paths.model, "model output")?;
    let mut pc = cfg.pipeline.clone();
    if let Some(k) = a.k_movements {
        pc.k_movements = k;
    }
    if let Some(m) = a.min_points {
        pc.min_points = m;
    }
    if let Some(f) = a.min_cluster_fraction {
        pc.min_cluster_fraction = f;
    }
    for (label, n) in a.lanes {
        pc.lanes_per_movement.insert(label, n);
    }
    let d = load_csv(&input)?;
    let (model, report) = train_with_report(&d, &pc)?;
    eprintln!(
        "stopbar y = {}; {} of {} trajectories used",
        sig6(model.stopbar.y_sl),
        report.valid.trajectories.len(),
        d.len()
    );
    for diag in &report.diagnostics {
        eprintln!("note: {diag}");
    }
    for m in &model.movements {
        let ids: Vec<&str> = m.modelling.iter().map(|t| t.vehicle_id()).collect();
        eprintln!("{}: modelled by {}", m.label, ids.join(", "));
    }
    let mut w = create(&output)?;
    w.write_all(model.to_json().as_bytes())?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

fn shape_spec(cfg: &RunConfig, model: Option<&MovementModel>) -> Result<ShapeSimilaritySpec> {
    let sc = &cfg.baselines.shape;
    let movements = match &sc.reference {
        Some(path) => {
            let reference = load_csv(path)?;
            sc.movements
                .iter()
                .map(|(label, ids)| {
                    let ts = ids
                        .iter()
                        .map(|id| {
                            reference
                                .get(id)
                                .cloned()
                                .ok_or_else(|| anyhow!("shape reference has no vehicle {id}"))
                        })
                        .collect::<Result<Vec<_>>>()?;
                    Ok((*label, ts))
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => {
            let m = model.ok_or_else(|| anyhow!("shape method needs --model or baselines.shape.reference"))?;
            m.movements.iter().map(|mv| (mv.label, mv.modelling.clone())).collect()
        }
    };
    let (Some(dl), Some(al)) = (sc.distance_limit, sc.angle_limit) else {
        return Err(anyhow!("shape method needs baselines.shape.distance_limit and angle_limit"));
    };
    Ok(ShapeSimilaritySpec::new(movements, dl, al)?)
}

fn cmd_classify(cfg: &RunConfig, a: ClassifyArgs) -> Result<()> {
    let input = pick(a.input, &cfg.paths.input, "input")?;
    let output = pick(a.output, &cfg.paths.labels, "labels output")?;
    let model_path = a.model.or_else(|| cfg.paths.model.clone());
    let model = model_path.as_deref().map(load_model).transpose()?;
    let d = load_csv(&input)?;

    let labels: BTreeMap<String, MovementLabel> = match a.method {
        Method::Pipeline => {
            let m = model.as_ref().ok_or_else(|| anyhow!("pipeline method needs --model"))?;
            classify_dataset(&d, m).labels()
        }
        Method::Line => {
            let spec = cfg
                .baselines
                .lines
                .as_ref()
                .ok_or_else(|| anyhow!("line method needs [[baselines.lines]] in the config"))?;
            d.trajectories()
                .iter()
                .map(|t| {
                    let dec = classify_line_based(t, spec);
                    if dec.ambiguous() {
                        eprintln!("note: {} crosses lines of {:?}", t.vehicle_id(), dec.matched);
                    }
                    (t.vehicle_id().to_string(), dec.label)
                })
                .collect()
        }
        Method::Shape => {
            let spec = shape_spec(cfg, model.as_ref())?;
            let sim = model.as_ref().map_or(cfg.pipeline.similarity, |m| m.config.similarity);
            d.trajectories()
                .iter()
                .map(|t| (t.vehicle_id().to_string(), classify_shape_similarity(t, &spec, &sim)))
                .collect()
        }
    };

    let mut counts: BTreeMap<MovementLabel, usize> = BTreeMap::new();
    if let Some(m) = &model {
        counts.extend(m.labels().into_iter().map(|l| (l, 0)));
    }
    counts.insert(MovementLabel::Unknown, 0);
    for l in labels.values() {
        *counts.entry(*l).or_default() += 1;
    }
    let mut w = create(&output)?;
    write_labels(&labels, &mut w)?;
    w.flush()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "movement,count")?;
    for (l, c) in &counts {
        writeln!(out, "{l},{c}")?;
    }
    Ok(())
}

fn cmd_evaluate(cfg: &RunConfig, a: EvaluateArgs) -> Result<()> {
    let labels_path = pick(a.labels, &cfg.paths.labels, "labels")?;
    let truth_path = pick(a.truth, &cfg.paths.truth, "truth")?;
    let mut pred = load_label_file(&labels_path)?;
    let truth = load_label_file(&truth_path)?;
    if a.align {
        let map = best_alignment(&truth, &pred);
        pred = apply_alignment(&pred, &map);
    }
    let cm = build_confusion(&truth, &pred, a.policy)?;
    let report = MetricsReport::from_confusion(cm)?.rounded();
    for n in &report.notes {
        eprintln!("note: {n}");
    }
    print!("{}", report.to_table());
    if let Some(path) = a.json {
        let mut w = create(&path)?;
        serde_json::to_writer_pretty(&mut w, &report)?;
        w.write_all(b"\n")?;
        w.flush()?;
    }
    Ok(())
}

fn cmd_generate(cfg: &RunConfig, a: GenerateArgs) -> Result<()> {
    let dir = pick(a.output_dir, &cfg.paths.output, "output directory")?;
    let mut spec = cfg.scene.clone();
    if let Some(seed) = a.seed {
        spec.seed = seed;
    }
    let scene = generate(&spec)?;
    let csv_path = dir.join(format!("{}.csv", a.name));
    let truth_path = dir.join(format!("{}_truth.csv", a.name));
    let mut w = create(&csv_path)?;
    write_trajectories(&scene.dataset, &mut w)?;
    w.flush()?;
    let mut w = create(&truth_path)?;
    write_labels(&scene.truth, &mut w)?;
    w.flush()?;
    eprintln!(
        "{} vehicles ({} truncated) -> {}, {}",
        scene.truth.len(),
        scene.truncated.len(),
        csv_path.display(),
        truth_path.display()
    );
    Ok(())
}

fn cmd_render(cfg: &RunConfig, a: RenderArgs) -> Result<()> {
    let input = pick(a.input, &cfg.paths.input, "input")?;
    let output = pick(a.output, &cfg.paths.output, "svg output")?;
    let d = load_csv(&input)?;
    let model = a.model.or_else(|| cfg.paths.model.clone());
    let model = model.as_deref().map(load_model).transpose()?;
    let mut w = create(&output)?;
    w.write_all(render_svg(&d, model.as_ref()).as_bytes())?;
    w.flush()?;
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Classify(a) => cmd_classify(&cfg, a),
        Command::Evaluate(a) => cmd_evaluate(&cfg, a),
        Command::Generate(a) => cmd_generate(&cfg, a),
        Command::Render(a) => cmd_render(&cfg, a),
    }
}
