//! `qonnx` — command-line front end for the QONNX toolkit.
//!
//! Exit codes: 0 success, 1 validation failure, 2 I/O error,
//! 3 unsupported feature, 4 internal error.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qonnx_kit::error::{Error, Severity};
use qonnx_kit::executor::execute;
use qonnx_kit::ir::{
    parse_model, parse_tensor, serialize_model, serialize_tensor, validate_model, DType, Dim,
    Model, TensorData, TensorValue,
};
use qonnx_kit::lowering::{lower_to_qcdq, raise_from_qcdq, LoweringConfig};
use qonnx_kit::metrics::model_stats;
use qonnx_kit::passes::{cleanup, to_channels_last_with, PassReport};

#[derive(Parser)]
#[command(name = "qonnx", version, about = "Parse, validate, execute, and transform QONNX models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Human,
    Machine,
}

#[derive(Subcommand)]
enum Command {
    /// Check a model against the QONNX well-formedness rules.
    Validate { model: PathBuf },
    /// Run the reference executor over serialized TensorProto inputs.
    Exec {
        model: PathBuf,
        /// Input tensor file; repeat in graph-input order.
        #[arg(long = "input")]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Constant folding, Identity removal, and dead code elimination.
    Clean {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        verify: VerifyOpts,
    },
    /// Convert layout-sensitive ops to channels-last (NHWC).
    ChannelsLast {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Re-declare graph inputs/outputs in channels-last form instead of
        /// inserting boundary Transpose nodes.
        #[arg(long)]
        convert_io: bool,
        #[command(flatten)]
        verify: VerifyOpts,
    },
    /// Lower Quant nodes to QuantizeLinear/Clip/DequantizeLinear.
    LowerQcdq {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Lower BipolarQuant through a Sign/Clip composition.
        #[arg(long)]
        allow_bipolar: bool,
        #[command(flatten)]
        verify: VerifyOpts,
    },
    /// Raise QuantizeLinear[/Clip]/DequantizeLinear chains back to Quant.
    RaiseQonnx {
        model: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        verify: VerifyOpts,
    },
    /// Per-layer and total MAC/BOPs/weight statistics.
    Stats {
        model: PathBuf,
        #[arg(long, value_enum, default_value = "human")]
        format: Format,
    },
}

#[derive(clap::Args)]
struct VerifyOpts {
    /// Check executor equivalence on N seeded random inputs.
    #[arg(long, default_value_t = 0)]
    verify: u32,
    /// Seed for the random-input generator.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure { code, message: message.into() }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Decode(_) => 2,
            Error::Unsupported(_)
            | Error::UnsupportedOp(_, _)
            | Error::UnsupportedDtype(_)
            | Error::BitWidth(_)
            | Error::PerChannelBitWidth(_)
            | Error::ZeroPoint(_)
            | Error::DynamicParam(_)
            | Error::Rank(_) => 3,
            Error::Cycle
            | Error::Shape(_)
            | Error::ShapeConflict(_)
            | Error::Broadcast(_, _)
            | Error::UnboundInput(_)
            | Error::Arg(_) => 4,
        };
        Failure::new(code, e.to_string())
    }
}

fn read_file(path: &Path) -> Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::new(2, format!("cannot read {}: {e}", path.display())))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes)
        .map_err(|e| Failure::new(2, format!("cannot write {}: {e}", path.display())))
}

fn load_model(path: &Path) -> Result<Model, Failure> {
    Ok(parse_model(&read_file(path)?)?)
}

/// Validate and fail (exit 1) on error-severity findings; used by every
/// command whose contract assumes a valid model.
fn require_valid(m: &Model) -> Result<(), Failure> {
    let diagnostics = validate_model(m);
    let mut failed = false;
    for d in &diagnostics {
        if d.severity == Severity::Error {
            failed = true;
            eprintln!("{d}");
        }
    }
    if failed {
        Err(Failure::new(1, "model failed validation".to_string()))
    } else {
        Ok(())
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("QONNX_KIT_LOG")).init();
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            if !f.message.is_empty() {
                eprintln!("error: {}", f.message);
            }
            ExitCode::from(f.code)
        }
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Validate { model } => {
            let m = load_model(&model)?;
            let diagnostics = validate_model(&m);
            for d in &diagnostics {
                println!("{d}");
            }
            let errors = diagnostics.iter().filter(|d| d.severity == Severity::Error).count();
            if errors > 0 {
                return Err(Failure::new(1, format!("{errors} validation error(s)")));
            }
            println!("ok: model is valid");
            Ok(())
        }
        Command::Exec { model, inputs, output_dir } => {
            let m = load_model(&model)?;
            require_valid(&m)?;
            cmd_exec(&m, &inputs, &output_dir)
        }
        Command::Clean { model, out, verify } => {
            let m = load_model(&model)?;
            require_valid(&m)?;
            let (transformed, report) = cleanup(&m)?;
            finish_transform(&m, transformed, &report, &out, &verify)
        }
        Command::ChannelsLast { model, out, convert_io, verify } => {
            let m = load_model(&model)?;
            require_valid(&m)?;
            let (transformed, report) = to_channels_last_with(&m, !convert_io)?;
            if convert_io && verify.verify > 0 {
                return Err(Failure::new(
                    4,
                    "--verify cannot be combined with --convert-io (I/O shapes differ)",
                ));
            }
            finish_transform(&m, transformed, &report, &out, &verify)
        }
        Command::LowerQcdq { model, out, allow_bipolar, verify } => {
            let m = load_model(&model)?;
            require_valid(&m)?;
            let cfg = LoweringConfig { allow_bipolar, ..Default::default() };
            let (transformed, report) = lower_to_qcdq(&m, &cfg)?;
            finish_transform(&m, transformed, &report, &out, &verify)
        }
        Command::RaiseQonnx { model, out, verify } => {
            let m = load_model(&model)?;
            require_valid(&m)?;
            let (transformed, report) = raise_from_qcdq(&m)?;
            finish_transform(&m, transformed, &report, &out, &verify)
        }
        Command::Stats { model, format } => {
            let m = load_model(&model)?;
            require_valid(&m)?;
            let stats = model_stats(&m)?;
            print_stats(&stats, format);
            Ok(())
        }
    }
}

fn cmd_exec(m: &Model, input_files: &[PathBuf], output_dir: &Path) -> Result<(), Failure> {
    let free_inputs: Vec<&str> = m
        .graph
        .inputs
        .iter()
        .filter(|vi| !m.graph.initializers.contains_key(&vi.name))
        .map(|vi| vi.name.as_str())
        .collect();
    if free_inputs.len() != input_files.len() {
        return Err(Failure::new(
            2,
            format!(
                "model has {} graph input(s) but {} --input file(s) were given",
                free_inputs.len(),
                input_files.len()
            ),
        ));
    }
    let mut bindings = HashMap::new();
    for (name, path) in free_inputs.iter().zip(input_files) {
        let t = parse_tensor(&read_file(path)?)?;
        bindings.insert((*name).to_string(), t);
    }
    let outputs = execute(m, &bindings)?;

    std::fs::create_dir_all(output_dir)
        .map_err(|e| Failure::new(2, format!("cannot create {}: {e}", output_dir.display())))?;
    for vi in &m.graph.outputs {
        let t = &outputs[&vi.name];
        let fname: String = vi
            .name
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
            .collect();
        let path = output_dir.join(format!("{fname}.pb"));
        write_file(&path, &serialize_tensor(t))?;
        println!("wrote {}", path.display());
    }
    Ok(())
}

fn finish_transform(
    original: &Model,
    transformed: Model,
    report: &PassReport,
    out: &Path,
    verify: &VerifyOpts,
) -> Result<(), Failure> {
    if verify.verify > 0 {
        check_equivalence(original, &transformed, verify.verify, verify.seed)?;
        println!(
            "verified: {} random input(s) produced identical outputs",
            verify.verify
        );
    }
    write_file(out, &serialize_model(&transformed))?;
    print!("{report}");
    Ok(())
}

fn random_tensor(rng: &mut ChaCha8Rng, elem_type: DType, dims: &[Dim]) -> Result<TensorValue, Failure> {
    let shape: Vec<usize> = dims
        .iter()
        .map(|d| match d {
            Dim::Known(v) => *v,
            Dim::Symbolic(_) => 1,
        })
        .collect();
    let count: usize = shape.iter().product();
    let data = match elem_type {
        DType::F32 => TensorData::F32((0..count).map(|_| rng.gen_range(-4.0..4.0)).collect()),
        DType::I64 => TensorData::I64((0..count).map(|_| rng.gen_range(0..4)).collect()),
        DType::I32 => TensorData::I32((0..count).map(|_| rng.gen_range(0..4)).collect()),
        DType::I8 => TensorData::I8((0..count).map(|_| rng.gen_range(-4..4)).collect()),
        DType::U8 => TensorData::U8((0..count).map(|_| rng.gen_range(0..4)).collect()),
        DType::Bool => TensorData::Bool((0..count).map(|_| rng.gen_bool(0.5)).collect()),
    };
    TensorValue::new(shape, data).map_err(Failure::from)
}

fn check_equivalence(a: &Model, b: &Model, runs: u32, seed: u64) -> Result<(), Failure> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for run in 0..runs {
        let mut bindings = HashMap::new();
        for vi in &a.graph.inputs {
            if a.graph.initializers.contains_key(&vi.name) {
                continue;
            }
            let dims = vi.shape.clone().ok_or_else(|| {
                Failure::new(4, format!("cannot verify: input '{}' has no declared shape", vi.name))
            })?;
            bindings.insert(vi.name.clone(), random_tensor(&mut rng, vi.elem_type, &dims)?);
        }
        let ya = execute(a, &bindings)?;
        let yb = execute(b, &bindings)?;
        for (name, t) in &ya {
            if yb.get(name) != Some(t) {
                return Err(Failure::new(
                    4,
                    format!("verification failed: output '{name}' differs on seeded run {run}"),
                ));
            }
        }
    }
    Ok(())
}

fn print_stats(stats: &qonnx_kit::metrics::ModelStats, format: Format) {
    match format {
        Format::Human => {
            println!(
                "{:<20} {:<16} {:>6} {:>6} {:>3} {:>12} {:>5} {:>5} {:>16} {:>18} {:>10} {:>12}",
                "layer", "kind", "n", "m", "k", "macs", "b_w", "b_a", "bops", "bops/position",
                "weights", "weight_bits"
            );
            for l in &stats.layers {
                println!(
                    "{:<20} {:<16} {:>6} {:>6} {:>3} {:>12} {:>5} {:>5} {:>16.3} {:>18.3} {:>10} {:>12}",
                    l.layer_name,
                    l.kind.to_string(),
                    l.n,
                    l.m,
                    l.k,
                    l.macs,
                    l.b_w,
                    l.b_a,
                    l.bops,
                    l.bops_per_position,
                    l.weights,
                    l.weight_bits
                );
            }
            println!(
                "total: macs={} bops={:.3} bops/position={:.3} weights={} weight_bits={}",
                stats.total_macs,
                stats.total_bops,
                stats.total_bops_per_position,
                stats.total_weights,
                stats.total_weight_bits
            );
        }
        Format::Machine => {
            for l in &stats.layers {
                println!(
                    "layer name={} kind={} n={} m={} k={} macs={} b_w={} b_a={} bops={} bops_per_position={} weights={} weight_bits={}",
                    l.layer_name,
                    l.kind,
                    l.n,
                    l.m,
                    l.k,
                    l.macs,
                    l.b_w,
                    l.b_a,
                    l.bops,
                    l.bops_per_position,
                    l.weights,
                    l.weight_bits
                );
            }
            println!(
                "total macs={} bops={} bops_per_position={} weights={} weight_bits={}",
                stats.total_macs,
                stats.total_bops,
                stats.total_bops_per_position,
                stats.total_weights,
                stats.total_weight_bits
            );
        }
    }
}
