//! `packplan` command-line tool.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 contract violation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::sync::Arc;

use clap::{Args, Parser, Subcommand};
use packplan::catalog::{generate_synthetic, load_catalog, load_scenarios, make_scenarios, save_catalog, save_scenarios, Catalog, CatalogError, PreparedCatalog, Scenario, SynthSpec};
use packplan::container::ContainerState;
use packplan::harness::{evaluate, packing_step, render, render_annotated, episode_metrics, EnvConfig, EpisodeError, LearnedPolicy, PackingEpisode, PlacementRecord, PolicyFactory, Report};
use packplan::heuristics::{Policy, PolicyKind};
use packplan::net::{load_checkpoint, save_checkpoint, Checkpoint};
use packplan::training::{train, write_curve, TrainError, TrainingConfig};
use serde::{Deserialize, Serialize};

#[derive(Parser)]
#[command(name = "packplan", version, about = "Property-aware 3D packing planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic object catalog.
    GenCatalog(GenCatalog),
    /// Draw random arrival sequences over a catalog.
    GenScenarios(GenScenarios),
    /// Pack scenarios with one policy, optionally logging and rendering.
    Pack(Pack),
    /// Train the two-head Q-network.
    Train(Train),
    /// Compare policies on the same scenarios.
    Eval(Eval),
    /// Render a placement log as heightmap images.
    Render(RenderCmd),
}

#[derive(Args)]
struct GenCatalog {
    #[arg(long)]
    out: PathBuf,
    /// TOML generator spec (family counts, size range, property marginals).
    #[arg(long)]
    spec: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct GenScenarios {
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 200)]
    count: usize,
    /// Objects per sequence.
    #[arg(long, default_value_t = 100)]
    objects: usize,
    #[arg(long, default_value_t = packplan::catalog::DEFAULT_BUFFER_CAPACITY)]
    buffer: usize,
    /// Seed of the first scenario; later ones count up from it.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct Inputs {
    #[arg(long)]
    scenarios: PathBuf,
    /// Defaults to the catalog referenced by the scenario file.
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Container size in cells, WxLxH.
    #[arg(long, default_value = "32x32x30")]
    container: Container,
    /// Closeness threshold for avoidance pairs, in cells.
    #[arg(long, default_value_t = packplan::container::DEFAULT_AVOID_DISTANCE)]
    avoid_distance: i32,
}

#[derive(Args)]
struct Pack {
    #[command(flatten)]
    inputs: Inputs,
    #[arg(long, default_value = "dbl")]
    policy: PolicyKind,
    /// Trained model, required for `opa`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Writes `<scenario>.png` and `<scenario>-annotated.png` per episode.
    #[arg(long)]
    render_dir: Option<PathBuf>,
    /// Writes one placement log per episode into this directory.
    #[arg(long)]
    log_dir: Option<PathBuf>,
    /// Per-episode rows as CSV.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct Train {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scenarios: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// Overrides the seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: PathBuf,
    /// Per-episode learning curve as CSV.
    #[arg(long)]
    curve: Option<PathBuf>,
}

#[derive(Args)]
struct Eval {
    #[command(flatten)]
    inputs: Inputs,
    /// Comma-separated policy names.
    #[arg(long, value_delimiter = ',', default_value = "firstfit,dbl,minz,hm,random")]
    policies: Vec<PolicyKind>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Per-episode rows as CSV; a JSON summary is written next to it.
    #[arg(long)]
    report: Option<PathBuf>,
}

#[derive(Args)]
struct RenderCmd {
    /// Placement log written by `pack --log-dir`.
    #[arg(long)]
    log: PathBuf,
    #[arg(long)]
    catalog: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Tint fragile and avoidance-violating footprints.
    #[arg(long)]
    annotated: bool,
}

#[derive(Clone, Copy, Debug)]
struct Container(usize, usize, i32);

impl FromStr for Container {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split('x').collect();
        let bad = || format!("expected WxLxH with positive sizes, got '{s}'");
        if parts.len() != 3 {
            return Err(bad());
        }
        let w: usize = parts[0].parse().map_err(|_| bad())?;
        let l: usize = parts[1].parse().map_err(|_| bad())?;
        let h: i32 = parts[2].parse().map_err(|_| bad())?;
        if w == 0 || l == 0 || h <= 0 {
            return Err(bad());
        }
        Ok(Container(w, l, h))
    }
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Data(String),
    Contract(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Usage(_) => 1,
            Failure::Data(_) => 2,
            Failure::Contract(_) => 3,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage error: {m}"),
            Failure::Data(m) => write!(f, "data error: {m}"),
            Failure::Contract(m) => write!(f, "contract violation: {m}"),
        }
    }
}

impl From<CatalogError> for Failure {
    fn from(e: CatalogError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<EpisodeError> for Failure {
    fn from(e: EpisodeError) -> Self {
        match e {
            EpisodeError::Contract { .. } => Failure::Contract(e.to_string()),
            other => Failure::Data(other.to_string()),
        }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Episode(inner) => inner.into(),
            other => Failure::Data(other.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

fn data<E: fmt::Display>(what: impl fmt::Display) -> impl FnOnce(E) -> Failure {
    move |e| Failure::Data(format!("{what}: {e}"))
}

/// What `pack --log-dir` writes and `render` replays.
#[derive(Serialize, Deserialize)]
struct PlacementLog {
    catalog: String,
    scenario: String,
    width: usize,
    length: usize,
    height: i32,
    avoid_distance: i32,
    placements: Vec<PlacementRecord>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let result = match cli.command {
        Command::GenCatalog(a) => gen_catalog(a),
        Command::GenScenarios(a) => gen_scenarios(a),
        Command::Pack(a) => pack(a),
        Command::Train(a) => train_cmd(a),
        Command::Eval(a) => eval(a),
        Command::Render(a) => render_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("packplan: {e}");
            ExitCode::from(e.code())
        }
    }
}

fn gen_catalog(a: GenCatalog) -> Result<()> {
    let spec: SynthSpec = match &a.spec {
        Some(p) => toml::from_str(&read(p)?).map_err(data(p.display()))?,
        None => SynthSpec::default(),
    };
    let cat = generate_synthetic(&spec, a.seed)?;
    save_catalog(&cat, &a.out)?;
    eprintln!("wrote {} objects ({} avoidance pairs) to {}", cat.len(), cat.avoidance().pair_count(), a.out.display());
    Ok(())
}

fn gen_scenarios(a: GenScenarios) -> Result<()> {
    let cat = load_catalog(&a.catalog)?;
    let scen = make_scenarios(&cat, a.count, a.objects, a.buffer, a.seed)?;
    save_scenarios(&a.catalog.display().to_string(), &scen, &a.out)?;
    eprintln!("wrote {} scenarios to {}", scen.len(), a.out.display());
    Ok(())
}

fn read(p: &Path) -> Result<String> {
    fs::read_to_string(p).map_err(data(p.display()))
}

/// Loads scenarios and the catalog they refer to (or the override).
fn load_inputs(scenarios: &Path, catalog: Option<&Path>) -> Result<(PathBuf, Catalog, Vec<Scenario>)> {
    let (reference, scen) = load_scenarios(scenarios).map_err(data(scenarios.display()))?;
    let path = match catalog {
        Some(p) => p.to_path_buf(),
        None => resolve(scenarios, &reference),
    };
    let cat = load_catalog(&path).map_err(data(path.display()))?;
    for s in &scen {
        s.validate(&cat)?;
    }
    if scen.is_empty() {
        return Err(Failure::Data(format!("{}: no scenarios", scenarios.display())));
    }
    Ok((path, cat, scen))
}

/// Relative references are tried as given, then next to the referencing file.
fn resolve(from: &Path, reference: &str) -> PathBuf {
    let direct = PathBuf::from(reference);
    if direct.is_absolute() || direct.exists() {
        return direct;
    }
    from.parent().map(|d| d.join(reference)).unwrap_or(direct)
}

fn env_of(i: &Inputs) -> EnvConfig {
    let Container(w, l, h) = i.container;
    EnvConfig {
        width: w,
        length: l,
        height: h,
        avoid_distance: i.avoid_distance,
    }
}

fn prepare(cat: &Catalog) -> Result<PreparedCatalog> {
    Ok(cat.prepare()?)
}

fn load_model(path: Option<&Path>, env: &EnvConfig) -> Result<Checkpoint> {
    let path = path.ok_or_else(|| Failure::Usage("policy 'opa' needs --checkpoint".into()))?;
    let ck = load_checkpoint(path).map_err(data(path.display()))?;
    if (ck.dims.width, ck.dims.length) != (env.width, env.length) {
        return Err(Failure::Data(format!(
            "checkpoint was trained for a {}x{} container, not {}x{}",
            ck.dims.width, ck.dims.length, env.width, env.length
        )));
    }
    Ok(ck)
}

fn factory(kind: PolicyKind, model: Option<&Checkpoint>) -> Result<PolicyFactory<'static>> {
    Ok(match kind {
        PolicyKind::Opa => {
            let ck = model.ok_or_else(|| Failure::Usage("policy 'opa' needs --checkpoint".into()))?;
            let net = ck.net();
            let params = Arc::new(ck.params.clone());
            Box::new(move |_: &Scenario| Box::new(LearnedPolicy::new(net.clone(), Arc::clone(&params))) as Box<dyn Policy>)
        }
        k => Box::new(move |s: &Scenario| k.heuristic(s.seed).expect("non-learned policy")),
    })
}

fn pack(a: Pack) -> Result<()> {
    let env = env_of(&a.inputs);
    let (cat_path, cat, scen) = load_inputs(&a.inputs.scenarios, a.inputs.catalog.as_deref())?;
    let prep = prepare(&cat)?;
    let model = match a.policy {
        PolicyKind::Opa => Some(load_model(a.checkpoint.as_deref(), &env)?),
        _ => None,
    };
    let make = factory(a.policy, model.as_ref())?;
    for dir in [&a.render_dir, &a.log_dir].into_iter().flatten() {
        fs::create_dir_all(dir).map_err(data(dir.display()))?;
    }
    let mut rows = Vec::new();
    for s in &scen {
        let mut policy = make(s);
        let mut ep = PackingEpisode::new(&prep, s, &env)?;
        while packing_step(&mut ep, policy.as_mut())?.is_some() {}
        let result = episode_metrics(&s.name, ep.state(), ep.history(), &prep, &env);
        println!(
            "{}: {} placed, compactness {:.4}, close pairs {}, pressure {:.3}",
            s.name, result.steps, result.compactness, result.close_pairs, result.mean_pressure
        );
        if let Some(dir) = &a.render_dir {
            write_images(ep.state(), &prep, &env, dir, &s.name)?;
        }
        if let Some(dir) = &a.log_dir {
            let log = PlacementLog {
                catalog: cat_path.display().to_string(),
                scenario: s.name.clone(),
                width: env.width,
                length: env.length,
                height: env.height,
                avoid_distance: env.avoid_distance,
                placements: ep.history().to_vec(),
            };
            let path = dir.join(format!("{}.json", s.name));
            let text = serde_json::to_string_pretty(&log).expect("log serialises");
            fs::write(&path, text).map_err(data(path.display()))?;
        }
        rows.push(packplan::harness::EpisodeRow::new(a.policy.name(), &result));
    }
    let report = Report::from_rows(rows);
    print!("{}", report.summary_table());
    if let Some(path) = &a.report {
        write_report(&report, path)?;
    }
    Ok(())
}

fn write_images(state: &ContainerState, prep: &PreparedCatalog, env: &EnvConfig, dir: &Path, name: &str) -> Result<()> {
    let plain = dir.join(format!("{name}.png"));
    render(state).save(&plain).map_err(data(plain.display()))?;
    let annotated = dir.join(format!("{name}-annotated.png"));
    render_annotated(state, prep.avoidance(), env.avoid_distance)
        .save(&annotated)
        .map_err(data(annotated.display()))?;
    Ok(())
}

fn write_report(report: &Report, path: &Path) -> Result<()> {
    let f = fs::File::create(path).map_err(data(path.display()))?;
    report.write_csv(f).map_err(data(path.display()))?;
    let summary = path.with_extension("summary.json");
    let text = serde_json::to_string_pretty(&report.summaries).expect("summary serialises");
    fs::write(&summary, text).map_err(data(summary.display()))?;
    Ok(())
}

fn train_cmd(a: Train) -> Result<()> {
    let mut cfg: TrainingConfig = match &a.config {
        Some(p) => toml::from_str(&read(p)?).map_err(data(p.display()))?,
        None => TrainingConfig::default(),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    cfg.validate().map_err(|e| Failure::Data(format!("training config: {e}")))?;
    let (_, cat, scen) = load_inputs(&a.scenarios, a.catalog.as_deref())?;
    let prep = prepare(&cat)?;
    let out = train(&prep, &scen, &cfg)?;
    save_checkpoint(&a.out, &out.checkpoint).map_err(data(a.out.display()))?;
    if let Some(path) = &a.curve {
        let f = fs::File::create(path).map_err(data(path.display()))?;
        write_curve(f, &out.curve).map_err(data(path.display()))?;
    }
    if let Some(last) = out.curve.last() {
        eprintln!(
            "{} optimizer steps over {} episodes; last episode compactness {:.4}, reward {:.3}",
            out.checkpoint.step,
            out.curve.len(),
            last.compactness,
            last.overall
        );
    }
    eprintln!("wrote {}", a.out.display());
    Ok(())
}

fn eval(a: Eval) -> Result<()> {
    if a.policies.is_empty() {
        return Err(Failure::Usage("no policies given".into()));
    }
    let env = env_of(&a.inputs);
    let (_, cat, scen) = load_inputs(&a.inputs.scenarios, a.inputs.catalog.as_deref())?;
    let prep = prepare(&cat)?;
    let model = if a.policies.contains(&PolicyKind::Opa) {
        Some(load_model(a.checkpoint.as_deref(), &env)?)
    } else {
        None
    };
    let policies = a
        .policies
        .iter()
        .map(|&k| Ok((k.name().to_string(), factory(k, model.as_ref())?)))
        .collect::<Result<Vec<_>>>()?;
    let report = evaluate(&policies, &scen, &prep, &env)?;
    print!("{}", report.summary_table());
    if let Some(path) = &a.report {
        write_report(&report, path)?;
    }
    Ok(())
}

fn render_cmd(a: RenderCmd) -> Result<()> {
    let text = read(&a.log)?;
    let log: PlacementLog = serde_json::from_str(&text).map_err(data(a.log.display()))?;
    let path = a.catalog.clone().unwrap_or_else(|| resolve(&a.log, &log.catalog));
    let cat = load_catalog(&path).map_err(data(path.display()))?;
    let prep = prepare(&cat)?;
    let mut state = ContainerState::new(log.width, log.length, log.height);
    for (i, p) in log.placements.iter().enumerate() {
        let bad = |why: String| Failure::Data(format!("{}: placement {i}: {why}", a.log.display()));
        let obj = prep.get(p.object_id).ok_or_else(|| bad(format!("unknown object {}", p.object_id)))?;
        let k = obj.pose_index(p.orientation).ok_or_else(|| bad("orientation is not a stable pose".into()))?;
        let z = state.place(obj, &obj.poses[k], p.x, p.y).map_err(|e| bad(e.to_string()))?;
        if z != p.z {
            return Err(bad(format!("object lands at z={z}, log says {}", p.z)));
        }
    }
    let saved = if a.annotated {
        render_annotated(&state, prep.avoidance(), log.avoid_distance).save(&a.out)
    } else {
        render(&state).save(&a.out)
    };
    saved.map_err(data(a.out.display()))?;
    eprintln!("{}: {} objects, compactness {:.4}", a.out.display(), state.placed().len(), state.compactness());
    Ok(())
}
