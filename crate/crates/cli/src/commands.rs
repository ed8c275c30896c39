use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use featsplat::bench::{run_bench, BenchConfig};
use featsplat::decompose::{select, PostProcess, QuerySpec};
use featsplat::distill::{train, write_loss_csv, DecodeHead};
use featsplat::edit::{apply_script, optimize_appearance, serve_provider, AppearanceConfig, EditScript, LossProvider, Selector, SubprocessProvider, TargetColorProvider};
use featsplat::io::{load_dataset, load_scene, save_dataset, save_scene, write_png, Vocab};
use featsplat::physics::{simulate, MaterialBank};
use featsplat::synth::{oracle_features, two_object_dataset, SynthConfig};
use featsplat::CameraView;
use serde_json::json;

use crate::assets::{create_dir, load_cameras, load_head, load_vocab, read_json, write_json};
use crate::config::Config;
use crate::error::{CliError, CliResult};
use crate::server::{serve, AppState};
use crate::sim::{no_language, prepare, resolve_selector, GravitySpec, SimRequest};
use crate::views::{heat_image, parse_vec3, query_heat, render_rgb, resolve_camera, split_words, HeatMode, RenderMode, ViewRequest};

#[derive(Debug, Parser)]
#[command(name = "featsplat", version, about = "Train, query, edit, simulate and serve feature-carrying Gaussian scenes")]
pub struct Cli {
    /// TOML configuration; FEATSPLAT_* variables override it.
    #[arg(long, global = true, env = "FEATSPLAT_CONFIG")]
    pub config: Option<PathBuf>,
    /// Seed for every random stream of the command.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a scene (color, features and decode head) to a feature dataset.
    Train(TrainArgs),
    /// Select the Gaussians matching a text query.
    Segment(SegmentArgs),
    /// Apply an edit script and/or optimize the appearance of a selection.
    Edit(EditArgs),
    /// Run the particle simulation on a selection and write per-frame scenes.
    Simulate(SimulateArgs),
    /// Render a scene to PNG.
    Render(RenderArgs),
    /// Time the rasterizer's forward and backward passes across feature dims.
    Bench(BenchArgs),
    /// Start the HTTP API.
    Serve(ServeArgs),
    /// Write the two-object synthetic dataset and scenes.
    #[command(hide = true)]
    Synth(SynthArgs),
    /// Serve a target-color loss over the framed stdin/stdout protocol.
    #[command(hide = true)]
    Provider(ProviderArgs),
}

/// Decode head and vocabulary; the vocabulary defaults to `<dataset>/vocab.json`.
#[derive(Debug, Clone, Default, Args)]
pub struct LangArgs {
    #[arg(long)]
    pub head: Option<PathBuf>,
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
}

impl LangArgs {
    fn load(&self, cfg: &Config) -> CliResult<Option<(DecodeHead, Vocab)>> {
        let head = self.head.clone().or_else(|| cfg.data.head.clone());
        let vocab = self.vocab.clone().or_else(|| self.dataset.as_ref().map(|d| d.join("vocab.json"))).or_else(|| cfg.data.vocab_path());
        match (head, vocab) {
            (Some(h), Some(v)) => Ok(Some((load_head(&h)?, load_vocab(&v)?))),
            (None, _) => Ok(None),
            (Some(_), None) => Err(CliError::Usage("--head needs --vocab or --dataset".into())),
        }
    }

    fn require(&self, cfg: &Config) -> CliResult<(DecodeHead, Vocab)> {
        self.load(cfg)?.ok_or_else(no_language)
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct CameraArgs {
    /// JSON list of cameras (defaults to the config's cameras).
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    #[arg(long)]
    pub view: Option<usize>,
    /// Look-at camera position "x,y,z" (overrides --view).
    #[arg(long)]
    pub eye: Option<String>,
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long)]
    pub fov: Option<f64>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
}

impl CameraArgs {
    fn cameras(&self, cfg: &Config) -> CliResult<Vec<CameraView>> {
        match self.cameras.clone().or_else(|| cfg.data.cameras_path()) {
            Some(p) => load_cameras(&p),
            None => Ok(Vec::new()),
        }
    }

    fn request(&self) -> CliResult<ViewRequest> {
        let v = |s: &Option<String>| s.as_deref().map(parse_vec3).transpose();
        Ok(ViewRequest { view: self.view, eye: v(&self.eye)?, target: v(&self.target)?, fov: self.fov, width: self.width, height: self.height })
    }
}

#[derive(Debug, Clone, Default, Args)]
pub struct QueryArgs {
    /// Negative words, comma separated.
    #[arg(long, default_value = "objects,things")]
    pub negatives: String,
    #[arg(long, default_value_t = 0.6)]
    pub tau: f64,
    #[arg(long, default_value_t = 0.1)]
    pub temperature: f64,
    /// Apply neighborhood closing, clustering and negative subtraction.
    #[arg(long)]
    pub postprocess: bool,
}

impl QueryArgs {
    fn spec(&self, positive: &str) -> QuerySpec {
        QuerySpec { positive: positive.into(), negatives: split_words(&self.negatives), tau: self.tau, temperature: self.temperature }
    }

    fn selector(&self, query: Option<&str>, indices: Option<&str>) -> CliResult<Selector> {
        match (query, indices) {
            (Some(q), None) => Ok(Selector::Query { spec: self.spec(q), postprocess: self.postprocess }),
            (None, Some(ix)) => Ok(Selector::Indices(parse_indices(ix)?)),
            (None, None) => Ok(Selector::All),
            (Some(_), Some(_)) => Err(CliError::Usage("give a query or indices, not both".into())),
        }
    }
}

fn parse_indices(s: &str) -> CliResult<Vec<usize>> {
    split_words(s).iter().map(|t| t.parse().map_err(|_| CliError::Usage(format!("bad index {t:?}")))).collect()
}

fn parse_color(s: &str) -> CliResult<[f64; 3]> {
    let c = parse_vec3(s)?;
    if c.iter().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(CliError::Usage(format!("color {s:?} must have components in [0, 1]")));
    }
    Ok(c)
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// Initial scene.
    #[arg(long)]
    pub init: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub head_out: PathBuf,
    #[arg(long)]
    pub iterations: Option<usize>,
    /// Iterations during which features and the head are trained.
    #[arg(long)]
    pub n_feat: Option<usize>,
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub lang: LangArgs,
    #[arg(long)]
    pub query: String,
    #[command(flatten)]
    pub q: QueryArgs,
    /// Write the selection JSON here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write a probability heatmap PNG.
    #[arg(long)]
    pub heatmap: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = HeatMode::Overlay)]
    pub heatmap_mode: HeatMode,
    #[command(flatten)]
    pub camera: CameraArgs,
}

#[derive(Debug, Args)]
pub struct EditArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// JSON edit script, applied before any appearance optimization.
    #[arg(long)]
    pub script: Option<PathBuf>,
    #[command(flatten)]
    pub lang: LangArgs,
    /// Recolor target for the appearance selection, "r,g,b" in [0, 1].
    #[arg(long, conflicts_with = "provider")]
    pub target_color: Option<String>,
    /// External loss provider program (framed stdin/stdout protocol).
    #[arg(long)]
    pub provider: Option<String>,
    #[arg(long = "provider-arg", allow_hyphen_values = true)]
    pub provider_args: Vec<String>,
    /// Text query selecting the Gaussians whose appearance is optimized.
    #[arg(long)]
    pub appearance_query: Option<String>,
    /// Comma-separated indices selecting the Gaussians to optimize.
    #[arg(long)]
    pub appearance_indices: Option<String>,
    #[command(flatten)]
    pub q: QueryArgs,
    #[arg(long, default_value_t = 200)]
    pub appearance_iters: usize,
    #[arg(long)]
    pub appearance_lr: Option<f64>,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub lang: LangArgs,
    /// JSON simulation request; flags below override its fields.
    #[arg(long)]
    pub request: Option<PathBuf>,
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub indices: Option<String>,
    #[command(flatten)]
    pub q: QueryArgs,
    #[arg(long)]
    pub material: Option<String>,
    /// Material override "name=model[,E[,nu[,density]]]"; repeatable.
    #[arg(long = "override")]
    pub overrides: Vec<String>,
    /// Do not query rigid-material aliases.
    #[arg(long)]
    pub no_auto_materials: bool,
    #[arg(long)]
    pub frames: Option<usize>,
    /// "auto" or "x,y,z".
    #[arg(long)]
    pub gravity: Option<String>,
    /// A point "x,y,z" on a floor plane perpendicular to gravity.
    #[arg(long)]
    pub floor: Option<String>,
    #[arg(long)]
    pub velocity: Option<String>,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// Also render each frame to PNG.
    #[arg(long)]
    pub png: bool,
    #[command(flatten)]
    pub camera: CameraArgs,
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[command(flatten)]
    pub camera: CameraArgs,
    #[arg(long, value_enum, default_value_t = RenderMode::Color)]
    pub mode: RenderMode,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    /// Feature dimensions, comma separated; 0 is the color-only baseline.
    #[arg(long, default_value = "0,32,256,768")]
    pub dims: String,
    #[arg(long, default_value_t = 20)]
    pub reps: usize,
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    #[arg(long, default_value_t = 600)]
    pub gaussians: usize,
    #[arg(long, default_value_t = 64)]
    pub width: u32,
    #[arg(long, default_value_t = 64)]
    pub height: u32,
    /// Benchmark this scene instead of a random cloud (first camera of --cameras).
    #[arg(long, requires = "cameras")]
    pub scene: Option<PathBuf>,
    #[arg(long)]
    pub cameras: Option<PathBuf>,
    /// CSV output; stdout when unset.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ServeArgs {
    /// Serve the synthetic two-object scene instead of the configured files.
    #[arg(long)]
    pub synthetic: bool,
    #[arg(long)]
    pub host: Option<String>,
    #[arg(long)]
    pub port: Option<u16>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub views: usize,
    #[arg(long, default_value_t = 96)]
    pub width: u32,
    #[arg(long, default_value_t = 96)]
    pub height: u32,
    #[arg(long, default_value_t = 250)]
    pub gaussians_per_object: usize,
    #[arg(long, default_value_t = 0.0)]
    pub clip_noise: f64,
}

#[derive(Debug, Args)]
pub struct ProviderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub cameras: PathBuf,
    #[command(flatten)]
    pub lang: LangArgs,
    #[arg(long)]
    pub query: Option<String>,
    #[arg(long)]
    pub indices: Option<String>,
    #[command(flatten)]
    pub q: QueryArgs,
    #[arg(long)]
    pub target_color: String,
}

/// Runs one parsed command, writing its summary to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = Config::load(cli.config.as_deref())?;
    if let Some(s) = cli.seed {
        cfg.train.seed = s;
        cfg.infill.seed = s;
    }
    let summary = match cli.command {
        Command::Train(a) => cmd_train(a, &cfg)?,
        Command::Segment(a) => cmd_segment(a, &cfg)?,
        Command::Edit(a) => cmd_edit(a, &cfg)?,
        Command::Simulate(a) => cmd_simulate(a, &cfg)?,
        Command::Render(a) => cmd_render(a, &cfg)?,
        Command::Bench(a) => return cmd_bench(a, cli.seed.unwrap_or(0), out),
        Command::Serve(a) => return cmd_serve(a, cfg, cli.seed.unwrap_or(0)),
        Command::Synth(a) => cmd_synth(a, cli.seed.unwrap_or(0))?,
        Command::Provider(a) => return cmd_provider(a, &cfg),
    };
    let text = serde_json::to_string_pretty(&summary)?;
    stdout_result(writeln!(out, "{text}"))
}

/// A closed pipe (`featsplat ... | head`) is not an error.
fn stdout_result(r: std::io::Result<()>) -> CliResult<()> {
    match r {
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(|e| CliError::io(Path::new("<stdout>"), e)),
    }
}

fn cmd_train(a: TrainArgs, cfg: &Config) -> CliResult<serde_json::Value> {
    let ds = load_dataset(&a.dataset)?;
    let init = load_scene(&a.init)?;
    let mut tc = cfg.train.clone();
    if let Some(n) = a.iterations {
        tc.iterations = n;
    }
    if let Some(n) = a.n_feat {
        tc.n_feat = n;
    }
    let out = train(&init, &ds, &tc)?;
    save_scene(&out.scene, &a.out)?;
    std::fs::write(&a.head_out, out.head.to_json()?).map_err(|e| CliError::io(&a.head_out, e))?;
    if let Some(p) = &a.loss_csv {
        write_loss_csv(&out.log, p)?;
    }
    let last = out.log.last();
    Ok(json!({
        "scene": a.out,
        "head": a.head_out,
        "gaussians": out.scene.len(),
        "iterations": tc.iterations,
        "final_psnr": last.map(|r| r.psnr),
        "train_views": out.train_views,
        "val_views": out.val_views,
    }))
}

fn cmd_segment(a: SegmentArgs, cfg: &Config) -> CliResult<serde_json::Value> {
    let scene = load_scene(&a.scene)?;
    let (head, vocab) = a.lang.require(cfg)?;
    let spec = a.q.spec(&a.query);
    let pp = PostProcess::default();
    let sel = select(&scene, &head, &vocab, &spec, a.q.postprocess.then_some(&pp))?;
    if let Some(p) = &a.heatmap {
        let cam = resolve_camera(&a.camera.request()?, &a.camera.cameras(cfg)?, &scene)?;
        let (heat, color) = query_heat(&scene, &head, &vocab, &spec, &cam)?;
        write_png(&heat_image(&heat, &color, cam.width, cam.height, a.heatmap_mode), p)?;
    }
    let v = json!({ "query": a.query, "count": sel.len(), "indices": sel.indices, "scores": sel.scores });
    match &a.out {
        Some(p) => {
            write_json(p, &v)?;
            Ok(json!({ "query": a.query, "count": sel.len(), "out": p }))
        }
        None => Ok(v),
    }
}

fn cmd_edit(a: EditArgs, cfg: &Config) -> CliResult<serde_json::Value> {
    let scene = load_scene(&a.scene)?;
    let lang = a.lang.load(cfg)?;
    let lang_ref = lang.as_ref().map(|(h, v)| (h, v));
    let script = match &a.script {
        Some(p) => EditScript::from_json(&std::fs::read_to_string(p).map_err(|e| CliError::io(p, e))?)?,
        None => EditScript::default(),
    };
    let mut edited = apply_script(&scene, &script, lang_ref)?;
    let mut optimized = 0;
    if a.target_color.is_some() || a.provider.is_some() {
        let selector = a.q.selector(a.appearance_query.as_deref(), a.appearance_indices.as_deref())?;
        let sel = resolve_selector(&edited, &selector, lang_ref)?;
        let cams_path = a.cameras.clone().or_else(|| cfg.data.cameras_path()).ok_or_else(|| CliError::Usage("appearance optimization needs --cameras".into()))?;
        let cams = load_cameras(&cams_path)?;
        let mut provider: Box<dyn LossProvider> = match (&a.target_color, &a.provider) {
            (Some(c), _) => Box::new(TargetColorProvider::new(&edited, &sel, &cams, parse_color(c)?)?),
            (None, Some(prog)) => Box::new(SubprocessProvider::spawn(prog, &a.provider_args)?),
            (None, None) => unreachable!(),
        };
        let mut ac = AppearanceConfig { iterations: a.appearance_iters, ..Default::default() };
        if let Some(lr) = a.appearance_lr {
            ac.lr = lr;
        }
        edited = optimize_appearance(&edited, &sel, &cams, provider.as_mut(), &ac)?;
        optimized = sel.len();
    }
    save_scene(&edited, &a.out)?;
    Ok(json!({ "out": a.out, "ops": script.ops.len(), "gaussians": edited.len(), "appearance_optimized": optimized }))
}

fn cmd_simulate(a: SimulateArgs, cfg: &Config) -> CliResult<serde_json::Value> {
    let scene = load_scene(&a.scene)?;
    let lang = a.lang.load(cfg)?;
    let lang_ref = lang.as_ref().map(|(h, v)| (h, v));
    let mut req: SimRequest = match &a.request {
        Some(p) => read_json(p)?,
        None => SimRequest::default(),
    };
    if a.query.is_some() || a.indices.is_some() {
        req.select = a.q.selector(a.query.as_deref(), a.indices.as_deref())?;
    }
    if a.material.is_some() {
        req.material = a.material.clone();
    }
    req.overrides.extend(a.overrides.iter().cloned());
    if a.no_auto_materials {
        req.auto_materials = false;
    }
    if a.frames.is_some() {
        req.frames = a.frames;
    }
    if let Some(g) = &a.gravity {
        req.gravity = Some(if g == "auto" { GravitySpec::Auto(g.clone()) } else { GravitySpec::Vector(parse_vec3(g)?) });
    }
    if let Some(f) = &a.floor {
        req.floor = Some(parse_vec3(f)?);
    }
    if let Some(v) = &a.velocity {
        req.initial_velocity = Some(parse_vec3(v)?);
    }
    let p = prepare(&scene, &req, lang_ref, cfg, &MaterialBank::default())?;
    let total = p.frames;
    let sim = simulate(&scene, &p.sel, &p.materials, &p.bank, &p.cfg, &p.fill, p.frames, |f| {
        log::info!("frame {}/{}", f + 1, total);
        true
    })?;
    create_dir(&a.out_dir)?;
    let cam = if a.png { Some(resolve_camera(&a.camera.request()?, &a.camera.cameras(cfg)?, &scene)?) } else { None };
    for (k, f) in sim.frames.iter().enumerate() {
        save_scene(f, a.out_dir.join(format!("frame_{k:04}.fspl")))?;
        if let Some(c) = &cam {
            write_png(&render_rgb(f, c, RenderMode::Color)?, a.out_dir.join(format!("frame_{k:04}.png")))?;
        }
    }
    let summary = json!({
        "out_dir": a.out_dir,
        "frames": sim.frames.len(),
        "selected": p.sel.len(),
        "particles": sim.particle_count,
        "interior_particles": sim.interior_count,
        "gravity": p.cfg.gravity,
        "centroids": sim.centroids.iter().map(|c| [c.x, c.y, c.z]).collect::<Vec<_>>(),
    });
    write_json(&a.out_dir.join("summary.json"), &summary)?;
    Ok(summary)
}

fn cmd_render(a: RenderArgs, cfg: &Config) -> CliResult<serde_json::Value> {
    let scene = load_scene(&a.scene)?;
    let cam = resolve_camera(&a.camera.request()?, &a.camera.cameras(cfg)?, &scene)?;
    write_png(&render_rgb(&scene, &cam, a.mode)?, &a.out)?;
    Ok(json!({ "out": a.out, "width": cam.width, "height": cam.height }))
}

fn cmd_bench(a: BenchArgs, seed: u64, out: &mut dyn Write) -> CliResult<()> {
    let dims = parse_indices(&a.dims)?;
    let bc = BenchConfig { dims, reps: a.reps, warmup: a.warmup, gaussians: a.gaussians, width: a.width, height: a.height, seed, ..Default::default() };
    let report = match (&a.scene, &a.cameras) {
        (Some(s), Some(c)) => {
            let scene = load_scene(s)?;
            let cam = load_cameras(c)?.into_iter().next().ok_or_else(|| CliError::Usage("camera file is empty".into()))?;
            run_bench(&bc, Some((&scene, &cam)))?
        }
        _ => run_bench(&bc, None)?,
    };
    let csv = report.to_csv()?;
    match &a.out {
        Some(p) => std::fs::write(p, csv).map_err(|e| CliError::io(p, e)),
        None => stdout_result(out.write_all(csv.as_bytes())),
    }
}

fn cmd_serve(a: ServeArgs, mut cfg: Config, seed: u64) -> CliResult<()> {
    if let Some(h) = a.host {
        cfg.server.host = h;
    }
    if let Some(p) = a.port {
        cfg.server.port = p;
    }
    let state = if a.synthetic { AppState::synthetic(cfg, &SynthConfig { seed, ..Default::default() })? } else { AppState::from_config(cfg)? };
    let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Server(e.to_string()))?;
    rt.block_on(serve(state))
}

fn cmd_synth(a: SynthArgs, seed: u64) -> CliResult<serde_json::Value> {
    let sc = SynthConfig {
        views: a.views,
        width: a.width,
        height: a.height,
        gaussians_per_object: a.gaussians_per_object,
        clip_noise: a.clip_noise,
        seed,
        ..Default::default()
    };
    let sc = SynthConfig { coarse: sc.coarse.min((a.width.min(a.height) as usize / 4).max(1)), ..sc };
    let syn = two_object_dataset(&sc)?;
    create_dir(&a.out)?;
    let ds_dir = a.out.join("dataset");
    save_dataset(&syn.dataset, &ds_dir)?;
    save_scene(&syn.init_scene, a.out.join("init.fspl"))?;
    save_scene(&syn.gt_scene, a.out.join("gt.fspl"))?;
    let (oracle, head) = oracle_features(&syn)?;
    save_scene(&oracle, a.out.join("oracle.fspl"))?;
    let head_path = a.out.join("oracle_head.json");
    std::fs::write(&head_path, head.to_json()?).map_err(|e| CliError::io(&head_path, e))?;
    let labels: Vec<&str> = syn.labels.iter().map(|&k| syn.object_names[k].as_str()).collect();
    write_json(&a.out.join("labels.json"), &labels)?;
    Ok(json!({ "out": a.out, "dataset": ds_dir, "gaussians": syn.gt_scene.len(), "objects": syn.object_names }))
}

fn cmd_provider(a: ProviderArgs, cfg: &Config) -> CliResult<()> {
    let scene = load_scene(&a.scene)?;
    let lang = a.lang.load(cfg)?;
    let selector = a.q.selector(a.query.as_deref(), a.indices.as_deref())?;
    let sel = resolve_selector(&scene, &selector, lang.as_ref().map(|(h, v)| (h, v)))?;
    let cams = load_cameras(&a.cameras)?;
    let mut provider = TargetColorProvider::new(&scene, &sel, &cams, parse_color(&a.target_color)?)?;
    let stdin = std::io::stdin();
    let stdout = std::io::stdout();
    serve_provider(&mut stdin.lock(), &mut stdout.lock(), &mut provider)?;
    Ok(())
}
