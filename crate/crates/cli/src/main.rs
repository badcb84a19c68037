use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Map, Value};

use segnn::harness::{check_equivariance, check_gradients, check_invariance, random_point_cloud, CheckOptions, FD_EPS};
use segnn::nbody::{generate, read_dataset, read_manifest, write_dataset, SimParams, Split, SplitCounts, System};
use segnn::o3::IrrepsLayout;
use segnn::rng::seeded;
use segnn::segnn::{ModelConfig, Network};
use segnn::steerable::{glyph_csv, Fault};
use segnn::tensor::ops::Metric;
use segnn::train::{evaluate, load_checkpoint, prepare, train, zero_baseline, RunConfig, Target};

#[derive(Parser)]
#[command(name = "segnn", version, about = "Steerable E(3) equivariant graph networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate an N-body dataset and write it to a directory.
    Generate(GenerateArgs),
    /// Train a model on a dataset directory.
    Train(TrainArgs),
    /// Score a checkpoint on one split of a dataset.
    Evaluate(EvaluateArgs),
    /// Run a numerical certificate; the exit status is 0 iff it passes.
    Verify(VerifyArgs),
    /// Sample a single-copy steerable vector on a sphere grid as CSV.
    Glyph(GlyphArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum SystemArg {
    Charged,
    Gravity,
}

impl From<SystemArg> for System {
    fn from(s: SystemArg) -> Self {
        match s {
            SystemArg::Charged => System::Charged,
            SystemArg::Gravity => System::Gravity,
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    system: SystemArg,
    #[arg(long)]
    out: PathBuf,
    /// Defaults: 3000 for charged, 10000 for gravity.
    #[arg(long)]
    train: Option<usize>,
    #[arg(long, default_value_t = 2000)]
    val: usize,
    #[arg(long, default_value_t = 2000)]
    test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    particles: Option<usize>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Segnn,
    SeNonlinear,
    SeLinear,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Mse,
    Mae,
}

impl From<MetricArg> for Metric {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Mse => Metric::Mse,
            MetricArg::Mae => Metric::Mae,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum TargetArg {
    Position,
    Force,
}

impl From<TargetArg> for Target {
    fn from(t: TargetArg) -> Self {
        match t {
            TargetArg::Position => Target::Position,
            TargetArg::Force => Target::Force,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum ScheduleArg {
    Constant,
    Step,
}

/// Model flags shared by `train` and `verify`. Each one overrides the key of
/// the same name in the model config.
#[derive(Args, Default)]
struct ModelFlags {
    #[arg(long)]
    variant: Option<VariantArg>,
    #[arg(long)]
    l_f: Option<u32>,
    #[arg(long)]
    l_a: Option<u32>,
    #[arg(long)]
    hidden_dim: Option<usize>,
    #[arg(long)]
    num_layers: Option<usize>,
    /// Receive from the k nearest neighbours instead of the preset rule.
    #[arg(long)]
    knn: Option<usize>,
    #[arg(long)]
    instance_norm: Option<bool>,
    /// Drop the velocity from the node attributes.
    #[arg(long)]
    no_velocity_attribute: bool,
}

impl ModelFlags {
    fn overrides(&self) -> Map<String, Value> {
        let mut m = Map::new();
        if let Some(v) = self.variant {
            let name = match v {
                VariantArg::Segnn => "segnn",
                VariantArg::SeNonlinear => "se_nonlinear",
                VariantArg::SeLinear => "se_linear",
            };
            m.insert("variant".into(), json!(name));
        }
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                m.insert(k.into(), v);
            }
        };
        put("l_f", self.l_f.map(Value::from));
        put("l_a", self.l_a.map(Value::from));
        put("hidden_dim", self.hidden_dim.map(Value::from));
        put("num_layers", self.num_layers.map(Value::from));
        put("neighbors", self.knn.map(|k| json!({"kind": "knn", "k": k})));
        put("use_instance_norm", self.instance_norm.map(Value::from));
        if self.no_velocity_attribute {
            m.insert("node_vectors".into(), json!([]));
        }
        m
    }
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON run config merged over the preset of the dataset's system.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    micro_batch: Option<usize>,
    #[arg(long)]
    eval_batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    weight_decay: Option<f64>,
    #[arg(long)]
    schedule: Option<ScheduleArg>,
    #[arg(long)]
    loss: Option<MetricArg>,
    #[arg(long)]
    target: Option<TargetArg>,
    #[arg(long)]
    train_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    model: ModelFlags,
}

impl TrainArgs {
    fn run_config(&self) -> Result<RunConfig> {
        let system = read_manifest(&self.dataset)?.params.system;
        let mut config = RunConfig::for_system(system);
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            config = config.merged(serde_json::from_str(&text)?)?;
        }
        let mut o = Map::new();
        o.insert("dataset".into(), json!(self.dataset));
        if let Some(out) = &self.out {
            o.insert("output_dir".into(), json!(out));
        }
        let mut put = |k: &str, v: Option<Value>| {
            if let Some(v) = v {
                o.insert(k.into(), v);
            }
        };
        put("epochs", self.epochs.map(Value::from));
        put("batch_size", self.batch_size.map(Value::from));
        put("micro_batch", self.micro_batch.map(Value::from));
        put("eval_batch_size", self.eval_batch_size.map(Value::from));
        put("train_samples", self.train_samples.map(Value::from));
        put("seed", self.seed.map(Value::from));
        put("loss", self.loss.map(|m| json!(Metric::from(m))));
        put("target", self.target.map(|t| json!(Target::from(t))));
        put(
            "schedule",
            self.schedule.map(|s| {
                json!(match s {
                    ScheduleArg::Constant => "constant",
                    ScheduleArg::Step => "step",
                })
            }),
        );
        let mut model = self.model.overrides();
        let mut optimizer = Map::new();
        if let Some(lr) = self.lr {
            optimizer.insert("lr".into(), json!(lr));
        }
        if let Some(wd) = self.weight_decay {
            optimizer.insert("weight_decay".into(), json!(wd));
        }
        if !optimizer.is_empty() {
            model.insert("optimizer".into(), Value::Object(optimizer));
        }
        o.insert("model".into(), Value::Object(model));
        Ok(config.merged(Value::Object(o))?)
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    Test,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum, default_value = "test")]
    split: SplitArg,
    #[arg(long, value_enum, default_value = "mse")]
    metric: MetricArg,
    #[arg(long, value_enum, default_value = "position")]
    target: TargetArg,
    #[arg(long, default_value_t = 20)]
    batch_size: usize,
}

#[derive(Clone, Copy, ValueEnum)]
enum CheckKind {
    Equivariance,
    Gradients,
    Invariance,
}

#[derive(Clone, Copy, ValueEnum)]
enum FaultArg {
    IgnoreParity,
    FlipCgSign,
    CorruptAdjoint,
}

#[derive(Args)]
struct VerifyArgs {
    kind: CheckKind,
    /// Verify a trained model instead of a freshly initialized one.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Model config JSON merged over the default of the chosen check.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 5)]
    nodes: usize,
    /// Number of sampled transformations.
    #[arg(long, default_value_t = 100)]
    samples: usize,
    /// Defaults: 1e-8 equivariance, 1e-4 gradients, 1e-12 invariance.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long, default_value_t = FD_EPS)]
    eps: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    no_reflection: bool,
    #[arg(long)]
    no_translation: bool,
    /// Inject a known defect, to confirm that the check catches it.
    #[arg(long)]
    fault: Option<FaultArg>,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    model: ModelFlags,
}

impl VerifyArgs {
    fn model_config(&self) -> Result<ModelConfig> {
        let mut base = ModelConfig {
            hidden_dim: 16,
            num_layers: 2,
            node_vectors: vec!["velocity".into()],
            ..ModelConfig::default()
        };
        match self.kind {
            CheckKind::Gradients => base.hidden_dim = 8,
            CheckKind::Invariance => (base.l_f, base.l_a) = (0, 0),
            CheckKind::Equivariance => {}
        }
        let mut value = serde_json::to_value(&base)?;
        if let Some(path) = &self.config {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            merge(&mut value, serde_json::from_str(&text)?);
        }
        merge(&mut value, Value::Object(self.model.overrides()));
        let mut config: ModelConfig = serde_json::from_value(value)?;
        config.validate()?;
        config.seed = self.seed;
        Ok(config)
    }
}

fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                match b.get_mut(&k) {
                    Some(slot) if slot.is_object() && v.is_object() => merge(slot, v),
                    _ => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (b, o) => *b = o,
    }
}

#[derive(Args)]
struct GlyphArgs {
    /// Single-copy layout such as `1x0e+1x1o+1x2e`.
    #[arg(long)]
    layout: String,
    /// Comma-separated coefficients in layout order.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    coeffs: Vec<f64>,
    #[arg(long, default_value_t = 512)]
    count: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    if let Some(path) = out {
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    } else {
        print!("{text}");
    }
    Ok(())
}

fn run_generate(args: &GenerateArgs) -> Result<()> {
    let system = System::from(args.system);
    let mut params = SimParams::for_system(system);
    if let Some(n) = args.particles {
        params.num_particles = n;
    }
    let counts = SplitCounts {
        train: args.train.unwrap_or(match system {
            System::Charged => 3000,
            System::Gravity => 10000,
        }),
        val: args.val,
        test: args.test,
    };
    let ds = generate(&params, counts, args.seed)?;
    let manifest = write_dataset(&ds, &args.out)?;
    eprintln!("wrote {} samples to {}", manifest.num_samples, args.out.display());
    Ok(())
}

fn run_train(args: &TrainArgs) -> Result<()> {
    let config = args.run_config()?;
    eprintln!("training into {}", config.output_dir.display());
    let outcome = train(&config)?;
    println!("{}", serde_json::to_string_pretty(&outcome.summary)?);
    eprintln!("test MSE {:e}", outcome.summary.test_mse);
    Ok(())
}

fn run_evaluate(args: &EvaluateArgs) -> Result<()> {
    let net = load_checkpoint(&args.checkpoint)?;
    let ds = read_dataset(&args.dataset)?;
    let split = match args.split {
        SplitArg::Train => Split::Train,
        SplitArg::Val => Split::Val,
        SplitArg::Test => Split::Test,
    };
    let examples = prepare(ds.split(split), net.config(), args.target.into())?;
    let report = evaluate(&net, &examples, args.metric.into(), args.batch_size)?;
    let mut value = serde_json::to_value(&report)?;
    value["zero_baseline"] = json!(zero_baseline(&examples, args.metric.into()));
    println!("{}", serde_json::to_string_pretty(&value)?);
    Ok(())
}

fn run_verify(args: &VerifyArgs) -> Result<bool> {
    let mut net = match &args.checkpoint {
        Some(path) => load_checkpoint(path)?,
        None => Network::new(&args.model_config()?)?,
    };
    if let Some(f) = args.fault {
        let mut config = net.config().clone();
        config.fault = Some(match f {
            FaultArg::IgnoreParity => Fault::IgnoreParity,
            FaultArg::FlipCgSign => Fault::FlipCgSign,
            FaultArg::CorruptAdjoint => Fault::CorruptAdjoint,
        });
        let params = net.params().clone();
        net = Network::new(&config)?;
        // the ignore-parity mutant adds paths, so its parameters differ
        if net.params().num_scalars() == params.num_scalars() {
            net.params_mut().load_values(&params)?;
        }
    }
    let graph = random_point_cloud(net.config(), args.nodes, &mut seeded(args.seed.wrapping_add(1)))?;
    let opts = |tol: f64| CheckOptions {
        num_samples: args.samples,
        tolerance: args.tol.unwrap_or(tol),
        include_reflection: !args.no_reflection,
        include_translation: !args.no_translation,
        seed: args.seed,
    };
    let (text, passed) = match args.kind {
        CheckKind::Equivariance => {
            let r = check_equivariance(&net, &graph, &opts(1e-8))?;
            (r.to_json(), r.passed)
        }
        CheckKind::Invariance => {
            let r = check_invariance(&net, &graph, &opts(1e-12))?;
            (r.to_json(), r.passed)
        }
        CheckKind::Gradients => {
            let r = check_gradients(&net, &graph, args.eps, args.tol.unwrap_or(1e-4), args.seed)?;
            (r.to_json(), r.passed)
        }
    };
    println!("{text}");
    if let Some(out) = &args.out {
        fs::write(out, text + "\n")?;
    }
    Ok(passed)
}

fn run_glyph(args: &GlyphArgs) -> Result<()> {
    let layout: IrrepsLayout = args.layout.parse()?;
    if args.coeffs.len() != layout.dim() {
        bail!("layout {} needs {} coefficients, got {}", layout, layout.dim(), args.coeffs.len());
    }
    emit(&glyph_csv(&layout, &args.coeffs, args.count)?, args.out.as_deref())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => run_generate(a).map(|_| true),
        Command::Train(a) => run_train(a).map(|_| true),
        Command::Evaluate(a) => run_evaluate(a).map(|_| true),
        Command::Verify(a) => run_verify(a),
        Command::Glyph(a) => run_glyph(a).map(|_| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
