use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::Serialize;

use attrql_core::algebra::Registry;
use attrql_core::analysis::{deep_representation, spectral_signature, AnalysisError, SpectralOptions};
use attrql_core::attribution::{shapley_exact, Backend, BackendConfig, Rect, TargetPolicy, Window, WindowSpec};
use attrql_core::nn::{self, Dataset, HeadHyper, ModelSpec, NnError, Tensor};
use attrql_core::qlang::{is_identifier, Binding, Bindings};

use attrql::artifact::{run_query, ResultFile};
use attrql::render::render_pgm;
use attrql::store::{content_ref, Kind, Store};

/// Exit status 1 is an I/O failure, 2 a usage or validation error.
#[derive(Debug)]
enum Failure {
    Io(String),
    User(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Io(_) => 1,
            Failure::User(_) => 2,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Io(m) | Failure::User(m) => m,
        }
    }
}

type Outcome = Result<(), Failure>;

fn user(message: impl ToString) -> Failure {
    Failure::User(message.to_string())
}

#[derive(Parser)]
#[command(name = "attrql", version, about = "Attribution queries over neural network models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate a query and write its result file.
    Query(QueryArgs),
    /// Cut a model after a stage and retrain its head.
    Truncate(TruncateArgs),
    /// Flag outlying examples of one class by spectral signature.
    Spectral(SpectralArgs),
    /// Exact Shapley values by coalition enumeration.
    Oracle(OracleArgs),
    /// Render a result file as a PGM heatmap.
    Render(RenderArgs),
    /// Write the bundled demo model, dataset and inputs.
    Demo(DemoArgs),
    /// Run the HTTP service.
    Serve(ServeArgs),
}

#[derive(Args)]
struct BackendArgs {
    #[arg(long, default_value = "shapley-sampled")]
    backend: Backend,
    /// Permutations for shapley-sampled.
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Riemann steps for integrated-gradients.
    #[arg(long, default_value_t = 50)]
    steps: usize,
    #[arg(long, default_value_t = 0.1)]
    noise_sigma: f64,
    #[arg(long, default_value_t = 50)]
    noise_count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Weight of the left operand of a join.
    #[arg(long, default_value_t = 0.5)]
    epsilon: f64,
    /// Attribute this class instead of the predicted one.
    #[arg(long)]
    class: Option<usize>,
    /// Integrated-gradients anti-joins use the shared baseline.
    #[arg(long)]
    ig_shared_baseline: bool,
}

impl BackendArgs {
    fn config(&self) -> BackendConfig {
        BackendConfig {
            backend: self.backend,
            samples: self.samples,
            steps: self.steps,
            noise_sigma: self.noise_sigma,
            noise_count: self.noise_count,
            seed: self.seed,
            epsilon: self.epsilon,
            target: self.class.map_or(TargetPolicy::Argmax, TargetPolicy::Class),
            ig_antijoin_shared_baseline: self.ig_shared_baseline,
        }
    }
}

#[derive(Args)]
struct QueryArgs {
    query: String,
    /// NAME=PATH of a model file.
    #[arg(long = "model")]
    models: Vec<String>,
    /// NAME=PATH of an input tensor file.
    #[arg(long = "input")]
    inputs: Vec<String>,
    /// NAME=rect:r0,c0,r1,c1 or NAME=i,j,k (flat indices).
    #[arg(long = "window")]
    windows: Vec<String>,
    /// NAME:STAGE=PATH of a truncated model for a bound model.
    #[arg(long = "stage-model")]
    stage_models: Vec<String>,
    /// Input tensor replacing the all-zero baseline.
    #[arg(long)]
    baseline: Option<PathBuf>,
    #[command(flatten)]
    backend: BackendArgs,
    /// Store whose truncation index supplies truncated models.
    #[arg(long, env = "ATTRQL_STORE")]
    store: Option<PathBuf>,
    /// Result file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write a PGM heatmap here.
    #[arg(long)]
    pgm: Option<PathBuf>,
}

#[derive(Args)]
struct TruncateArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    stage: usize,
    /// Labelled dataset for the new head.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value_t = HeadHyper::default().epochs)]
    epochs: usize,
    #[arg(long, default_value_t = HeadHyper::default().learning_rate)]
    learning_rate: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    /// Also record the truncation in this store.
    #[arg(long, env = "ATTRQL_STORE")]
    store: Option<PathBuf>,
}

#[derive(Args)]
struct SpectralArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    class: usize,
    /// Standard deviations above the mean that flag an example.
    #[arg(long, default_value_t = SpectralOptions::default().k)]
    k: f64,
    #[arg(long)]
    squared: bool,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    baseline: Option<PathBuf>,
    /// Class to attribute; the predicted class when absent.
    #[arg(long)]
    class: Option<usize>,
    /// Players: rect:r0,c0,r1,c1 or flat indices; every feature when absent.
    #[arg(long)]
    window: Option<String>,
}

#[derive(Args)]
struct RenderArgs {
    result: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DemoArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct ServeArgs {
    #[arg(long, default_value_t = 8080)]
    port: u16,
    #[arg(long, env = "ATTRQL_STORE", default_value = "attrql-store")]
    store: PathBuf,
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let bytes = fs::read(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    serde_json::from_slice(&bytes).map_err(|e| user(format!("{}: {e}", path.display())))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Outcome {
    fs::write(path, bytes).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))
}

fn pretty<T: Serialize>(value: &T) -> Vec<u8> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable");
    bytes.push(b'\n');
    bytes
}

fn split_pair<'a>(arg: &'a str, flag: &str) -> Result<(&'a str, &'a str), Failure> {
    let (name, value) = arg
        .split_once('=')
        .ok_or_else(|| user(format!("--{flag} expects NAME=VALUE, got '{arg}'")))?;
    if !is_identifier(name) {
        return Err(user(format!("--{flag}: '{name}' is not an identifier")));
    }
    Ok((name, value))
}

fn parse_numbers(text: &str) -> Result<Vec<usize>, Failure> {
    text.split(',')
        .map(|t| t.trim().parse::<usize>().map_err(|_| user(format!("'{t}' is not an index"))))
        .collect()
}

fn parse_window(value: &str) -> Result<WindowSpec, Failure> {
    if let Some(rest) = value.strip_prefix("rect:") {
        let n = parse_numbers(rest)?;
        let [r0, c0, r1, c1] = n[..] else {
            return Err(user(format!("rect needs four numbers, got '{rest}'")));
        };
        return Rect::new(r0, c0, r1, c1)
            .map(WindowSpec::Rect)
            .ok_or_else(|| user(format!("rect corners out of order in '{rest}'")));
    }
    let rest = value.strip_prefix("indices:").unwrap_or(value);
    Ok(WindowSpec::Indices(if rest.is_empty() { Vec::new() } else { parse_numbers(rest)? }))
}

fn query(args: QueryArgs) -> Outcome {
    let mut bindings = Bindings::new();
    let mut registry = Registry::new();
    let mut model_refs = Vec::new();
    for arg in &args.models {
        let (name, path) = split_pair(arg, "model")?;
        let model: ModelSpec = read_json(Path::new(path))?;
        let reference = content_ref(&model);
        bindings.bind(name, Binding::Model { reference: reference.clone() }).map_err(user)?;
        model_refs.push((name.to_string(), reference.clone(), model.stage_count()));
        registry.add_model(reference, model);
    }
    for arg in &args.inputs {
        let (name, path) = split_pair(arg, "input")?;
        let input: Tensor = read_json(Path::new(path))?;
        let reference = content_ref(&input);
        let shape = input.shape().to_vec();
        bindings.bind(name, Binding::Input { reference: reference.clone(), shape }).map_err(user)?;
        registry.add_input(reference, input);
    }
    for arg in &args.windows {
        let (name, value) = split_pair(arg, "window")?;
        bindings.bind(name, Binding::Window { window: parse_window(value)? }).map_err(user)?;
    }
    if let Some(dir) = &args.store {
        let store = Store::open(dir).map_err(|e| Failure::Io(e.to_string()))?;
        for (_, reference, stages) in &model_refs {
            for stage in 1..*stages {
                let found = store.truncation(reference, stage).map_err(|e| Failure::Io(e.to_string()))?;
                if let Some(t) = found {
                    let truncated: ModelSpec = store.get(Kind::Model, &t).map_err(|e| Failure::Io(e.to_string()))?;
                    registry.add_truncated(reference, stage, truncated).map_err(user)?;
                }
            }
        }
    }
    for arg in &args.stage_models {
        let (key, path) = arg
            .split_once('=')
            .ok_or_else(|| user(format!("--stage-model expects NAME:STAGE=PATH, got '{arg}'")))?;
        let (name, stage) = key
            .split_once(':')
            .ok_or_else(|| user(format!("--stage-model expects NAME:STAGE=PATH, got '{arg}'")))?;
        let stage: usize = stage.parse().map_err(|_| user(format!("'{stage}' is not a stage")))?;
        let reference = match bindings.get(name) {
            Some(Binding::Model { reference }) => reference.clone(),
            _ => return Err(user(format!("--stage-model: '{name}' is not a bound model"))),
        };
        let truncated: ModelSpec = read_json(Path::new(path))?;
        registry.add_truncated(&reference, stage, truncated).map_err(user)?;
    }
    let mut baseline_ref = None;
    if let Some(path) = &args.baseline {
        let baseline: Tensor = read_json(path)?;
        baseline_ref = Some(content_ref(&baseline));
        registry.set_baseline(baseline);
    }

    let cfg = args.backend.config();
    let result = run_query(&args.query, &bindings, &registry, &cfg, baseline_ref).map_err(|e| {
        let detail: Vec<String> = e.payload()["errors"]
            .as_array()
            .into_iter()
            .flatten()
            .filter(|d| d.get("rule").is_some())
            .map(|d| {
                let at = d["offset"].as_u64().map_or(String::new(), |o| format!(" at offset {o}"));
                format!("  {}{at}: {}", d["kind"].as_str().unwrap_or("error"), d["message"].as_str().unwrap_or(""))
            })
            .collect();
        if detail.is_empty() {
            user(e)
        } else {
            user(format!("{e}\n{}", detail.join("\n")))
        }
    })?;
    emit_result(&result, args.out.as_deref(), args.pgm.as_deref())
}

fn emit_result(result: &ResultFile, out: Option<&Path>, pgm: Option<&Path>) -> Outcome {
    let bytes = pretty(result);
    match out {
        Some(path) => {
            write_bytes(path, &bytes)?;
            eprintln!("result {} -> {}", content_ref(result), path.display());
        }
        None => print!("{}", String::from_utf8_lossy(&bytes)),
    }
    if let Some(path) = pgm {
        write_bytes(path, &render_pgm(&result.result()).map_err(user)?)?;
    }
    Ok(())
}

fn nn_failure(e: NnError) -> Failure {
    user(e)
}

fn truncate(args: TruncateArgs) -> Outcome {
    let model: ModelSpec = read_json(&args.model)?;
    let data: Dataset = read_json(&args.data)?;
    let hyper = HeadHyper {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        seed: args.seed,
    };
    let truncated = nn::truncate(&model, args.stage, &data, &hyper).map_err(nn_failure)?;
    let accuracy = nn::accuracy(&truncated, &data).map_err(nn_failure)?;
    write_bytes(&args.out, &pretty(&truncated))?;
    if let Some(dir) = &args.store {
        let store = Store::open(dir).map_err(|e| Failure::Io(e.to_string()))?;
        let io = |e: attrql::store::StoreError| Failure::Io(e.to_string());
        let base = store.put(Kind::Model, &model).map_err(io)?;
        let t = store.put(Kind::Model, &truncated).map_err(io)?;
        store.set_truncation(&base, args.stage, &t).map_err(io)?;
    }
    println!("stage {} accuracy {accuracy:.4}", args.stage);
    Ok(())
}

fn spectral(args: SpectralArgs) -> Outcome {
    let model: ModelSpec = read_json(&args.model)?;
    let data: Dataset = read_json(&args.data)?;
    let options = SpectralOptions {
        k: args.k,
        squared: args.squared,
        ..SpectralOptions::default()
    };
    let analysis = |e: AnalysisError| user(e);
    let rep = deep_representation(&model, &data, args.class).map_err(analysis)?;
    let report = spectral_signature(&rep.matrix, &options).map_err(analysis)?;
    let flagged: Vec<usize> = report.flagged.iter().map(|&i| rep.example_indices[i]).collect();
    let out = serde_json::json!({
        "class": args.class,
        "example_indices": rep.example_indices,
        "flagged_examples": flagged,
        "report": report,
    });
    print!("{}", String::from_utf8_lossy(&pretty(&out)));
    Ok(())
}

fn oracle(args: OracleArgs) -> Outcome {
    let model: ModelSpec = read_json(&args.model)?;
    let x: Tensor = read_json(&args.input)?;
    let xbar = match &args.baseline {
        Some(p) => read_json(p)?,
        None => Tensor::zeros(x.shape()),
    };
    let logits = model.forward(&x).map_err(nn_failure)?;
    let class = args.class.unwrap_or_else(|| logits.argmax());
    let window = match &args.window {
        Some(w) => parse_window(w)?.resolve(x.shape()).map_err(user)?,
        None => Window::full(x.len()),
    };
    let phi = shapley_exact(&model, &x, &xbar, class, &window).map_err(user)?;
    let base = model.forward(&xbar).map_err(nn_failure)?;
    let f_x = *logits.data().get(class).ok_or_else(|| user(format!("class {class} out of range")))?;
    let out = serde_json::json!({
        "class": class,
        "shape": x.shape(),
        "values": phi.values(),
        "sum": phi.sum(),
        "f_x": f_x,
        "f_baseline": base.data()[class],
    });
    print!("{}", String::from_utf8_lossy(&pretty(&out)));
    Ok(())
}

fn render(args: RenderArgs) -> Outcome {
    let result: ResultFile = read_json(&args.result)?;
    write_bytes(&args.out, &render_pgm(&result.result()).map_err(user)?)
}

fn demo(args: DemoArgs) -> Outcome {
    fs::create_dir_all(&args.out).map_err(|e| Failure::Io(e.to_string()))?;
    let d = attrql::demo::demo(args.seed);
    write_bytes(&args.out.join("model.json"), &pretty(&d.model))?;
    write_bytes(&args.out.join("data.json"), &pretty(&d.data))?;
    for (k, x) in d.inputs.iter().enumerate() {
        write_bytes(&args.out.join(format!("x{k}.json")), &pretty(x))?;
    }
    println!("wrote model.json, data.json and x0..x{} to {}", d.inputs.len() - 1, args.out.display());
    Ok(())
}

fn serve(args: ServeArgs) -> Outcome {
    let store = Store::open(&args.store).map_err(|e| Failure::Io(e.to_string()))?;
    let runtime = tokio::runtime::Runtime::new().map_err(|e| Failure::Io(e.to_string()))?;
    let addr = format!("0.0.0.0:{}", args.port);
    eprintln!("listening on {addr}, store {}", args.store.display());
    runtime
        .block_on(attrql::server::serve(&addr, store))
        .map_err(|e| Failure::Io(e.to_string()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Query(a) => query(a),
        Command::Truncate(a) => truncate(a),
        Command::Spectral(a) => spectral(a),
        Command::Oracle(a) => oracle(a),
        Command::Render(a) => render(a),
        Command::Demo(a) => demo(a),
        Command::Serve(a) => serve(a),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}
