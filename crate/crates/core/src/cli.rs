//! `freqreg` command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::data::{load_idx, synthetic_blobs, LabeledDataset};
use crate::document;
use crate::error::FreqError;
use crate::gradcheck::{check_frequency_tensor, DEFAULT_STEP};
use crate::model::{build_model, WeightMode};
use crate::report::layer_table;
use crate::serialize::{self, Dtype};
use crate::train::{evaluate, train_with, TrainConfig};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const DATA_DIR_ENV: &str = "FREQREG_DATA_DIR";

#[derive(Debug, Parser)]
#[command(name = "freqreg", version, about = "Frequency-regularized network training and packing")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a reference model with dynamic tail truncation.
    Train(TrainArgs),
    /// Evaluate a packed model (top-1 accuracy).
    Eval(EvalArgs),
    /// Print the per-layer compression table of a packed model.
    Report { model: PathBuf },
    /// Finite-difference check of frequency-tensor gradients.
    Gradcheck(GradcheckArgs),
    /// Pack a JSON document into an FRT1 tensor or FRM1 model file.
    Pack(PackArgs),
    /// Decode an FRT1/FRM1 file to JSON, or print its header fields.
    Unpack(UnpackArgs),
}

#[derive(Debug, Clone, Args)]
struct DataArgs {
    /// Directory holding MNIST IDX files (falls back to FREQREG_DATA_DIR).
    #[arg(long, conflicts_with = "synthetic")]
    data_dir: Option<PathBuf>,
    /// Use seeded synthetic 1x28x28 blobs instead of MNIST.
    #[arg(long)]
    synthetic: bool,
    /// Number of synthetic samples (rounded down to a multiple of 10).
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Use only the first N samples of the loaded data.
    #[arg(long)]
    limit: Option<usize>,
    /// Which MNIST file pair to read.
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum DtypeArg {
    Single,
    Half,
}

impl From<DtypeArg> for Dtype {
    fn from(d: DtypeArg) -> Self {
        match d {
            DtypeArg::Single => Dtype::Single,
            DtypeArg::Half => Dtype::Half,
        }
    }
}

#[derive(Debug, Args)]
struct TrainArgs {
    #[arg(long, default_value = "mlp300")]
    model: String,
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value_t = 10)]
    epochs: usize,
    #[arg(long, default_value_t = 64)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.01)]
    lr: f64,
    #[arg(long, default_value_t = 0.9)]
    momentum: f64,
    #[arg(long, default_value_t = 0.01)]
    gamma: f64,
    #[arg(long, default_value_t = 0.01)]
    epsilon_ratio: f64,
    #[arg(long, default_value_t = 1)]
    min_keep: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Train spatial (unregularized) weights as a baseline.
    #[arg(long)]
    plain: bool,
    #[arg(long, value_enum, default_value_t = DtypeArg::Single)]
    dtype: DtypeArg,
    /// Where to write the FRM1 model file.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct EvalArgs {
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Seed for synthetic data.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct GradcheckArgs {
    /// Comma-separated dimensions, e.g. 6,6.
    #[arg(long, value_delimiter = ',', required = true)]
    shape: Vec<usize>,
    #[arg(long)]
    epsilon: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Debug, Args)]
struct PackArgs {
    /// JSON document (format FRT1, spatial, or FRM1).
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Args)]
struct UnpackArgs {
    input: PathBuf,
    /// Print header fields instead of the JSON document.
    #[arg(long)]
    inspect: bool,
    /// Write the JSON document here instead of stdout.
    #[arg(long, conflicts_with = "inspect")]
    out: Option<PathBuf>,
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn usage(message: impl Into<String>) -> Self {
        Self { code: EXIT_USAGE, message: message.into() }
    }

    fn data(message: impl Into<String>) -> Self {
        Self { code: EXIT_DATA, message: message.into() }
    }
}

type CmdResult = std::result::Result<(), Failure>;

fn data_error(e: FreqError) -> Failure {
    Failure::data(e.to_string())
}

/// Runs the CLI with explicit arguments and output streams; returns the exit code.
pub fn run_with<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => EXIT_OK,
                _ => EXIT_USAGE,
            };
            let _ = if code == EXIT_OK { write!(out, "{}", e.render()) } else { write!(err, "{}", e.render()) };
            return code;
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a, out),
        Command::Eval(a) => cmd_eval(a, out),
        Command::Report { model } => cmd_report(&model, out),
        Command::Gradcheck(a) => cmd_gradcheck(a, out),
        Command::Pack(a) => cmd_pack(a, out),
        Command::Unpack(a) => cmd_unpack(a, out),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(err, "error: {}", f.message);
            f.code
        }
    }
}

pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run_with(args, &mut stdout.lock(), &mut stderr.lock())
}

fn mnist_paths(dir: &Path, split: Split) -> (PathBuf, PathBuf) {
    let prefix = match split {
        Split::Train => "train",
        Split::Test => "t10k",
    };
    (dir.join(format!("{prefix}-images-idx3-ubyte")), dir.join(format!("{prefix}-labels-idx1-ubyte")))
}

fn load_data(args: &DataArgs, seed: u64) -> std::result::Result<LabeledDataset, Failure> {
    let data = if args.synthetic {
        let per_class = args.samples / 10;
        if per_class == 0 {
            return Err(Failure::usage("--samples must be at least 10"));
        }
        synthetic_blobs(10, per_class, 28 * 28, seed)
            .and_then(|d| d.with_sample_shape(1, 28, 28))
            .map_err(data_error)?
    } else {
        let dir =
            args.data_dir.clone().or_else(|| std::env::var_os(DATA_DIR_ENV).map(PathBuf::from)).ok_or_else(|| {
                Failure::data(format!("no data: pass --data-dir, --synthetic, or set {DATA_DIR_ENV}"))
            })?;
        let (images, labels) = mnist_paths(&dir, args.split);
        load_idx(&images, &labels).map_err(data_error)?
    };
    Ok(match args.limit {
        Some(n) => data.take(n),
        None => data,
    })
}

fn cmd_train(a: TrainArgs, out: &mut dyn Write) -> CmdResult {
    let config = TrainConfig {
        epochs: a.epochs,
        batch_size: a.batch_size,
        learning_rate: a.lr,
        momentum: a.momentum,
        gamma: a.gamma,
        epsilon_ratio: a.epsilon_ratio,
        min_keep: a.min_keep,
        seed: a.seed,
    };
    config.validate().map_err(|e| Failure::usage(e.to_string()))?;
    let mode = if a.plain { WeightMode::Plain } else { WeightMode::Frequency };
    let mut model = build_model(&a.model, a.seed, mode).map_err(|e| Failure::usage(e.to_string()))?;
    let data = load_data(&a.data, a.seed)?;

    let mut write_err = None;
    let trained = train_with(&mut model, &data, &config, |record| {
        if let Err(e) = writeln!(out, "{record}") {
            write_err.get_or_insert(e);
        }
    });
    match trained {
        Ok(_) => {}
        Err(e @ FreqError::Divergence { .. }) => return Err(Failure { code: EXIT_NUMERIC, message: e.to_string() }),
        Err(e) => return Err(data_error(e)),
    }
    if let Some(e) = write_err {
        return Err(Failure::data(e.to_string()));
    }
    if let Some(path) = a.out {
        let bytes = serialize::pack_model(&model, a.dtype.into()).map_err(data_error)?;
        std::fs::write(&path, &bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        writeln!(out, "model bytes={}", bytes.len()).map_err(|e| Failure::data(e.to_string()))?;
    }
    Ok(())
}

fn read_file(path: &Path) -> std::result::Result<Vec<u8>, Failure> {
    std::fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn cmd_eval(a: EvalArgs, out: &mut dyn Write) -> CmdResult {
    let mut model = serialize::unpack_model(&read_file(&a.model)?).map_err(data_error)?;
    let data = load_data(&a.data, a.seed)?;
    let (accuracy, loss) = evaluate(&mut model, &data).map_err(data_error)?;
    writeln!(out, "accuracy={accuracy:.4} loss={loss:.6} samples={}", data.len())
        .map_err(|e| Failure::data(e.to_string()))
}

fn cmd_report(path: &Path, out: &mut dyn Write) -> CmdResult {
    let model = serialize::unpack_model(&read_file(path)?).map_err(data_error)?;
    write!(out, "{}", layer_table(&model)).map_err(|e| Failure::data(e.to_string()))
}

fn cmd_gradcheck(a: GradcheckArgs, out: &mut dyn Write) -> CmdResult {
    if a.shape.is_empty() || a.shape.len() > 4 || a.shape.contains(&0) {
        return Err(Failure::usage(format!("--shape must have 1 to 4 positive dimensions, got {:?}", a.shape)));
    }
    if a.epsilon < 1 {
        return Err(Failure::usage("--epsilon must be at least 1"));
    }
    let outcome =
        check_frequency_tensor(&a.shape, a.epsilon, a.seed, DEFAULT_STEP).map_err(|e| Failure::usage(e.to_string()))?;
    let shape = a.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
    let verdict = if outcome.passed() { "pass" } else { "fail" };
    writeln!(
        out,
        "gradcheck shape={shape} epsilon={} checked={} max_rel_error={:.3e} result={verdict}",
        a.epsilon, outcome.checked, outcome.max_rel_error
    )
    .map_err(|e| Failure::data(e.to_string()))?;
    if outcome.passed() {
        Ok(())
    } else {
        Err(Failure { code: EXIT_NUMERIC, message: "gradient check failed".into() })
    }
}

fn cmd_pack(a: PackArgs, out: &mut dyn Write) -> CmdResult {
    let text = String::from_utf8(read_file(&a.input)?).map_err(|e| Failure::data(e.to_string()))?;
    let doc = document::parse(&text).map_err(data_error)?;
    let bytes = document::to_packed(doc).map_err(data_error)?;
    std::fs::write(&a.out, &bytes).map_err(|e| Failure::data(format!("{}: {e}", a.out.display())))?;
    writeln!(out, "packed bytes={}", bytes.len()).map_err(|e| Failure::data(e.to_string()))
}

fn inspect(bytes: &[u8]) -> crate::error::Result<String> {
    use std::fmt::Write as _;
    let mut s = String::new();
    match document::from_packed(bytes)? {
        document::Document::Tensor { .. } => {
            let h = serialize::inspect_tensor(bytes)?;
            let shape = h.shape.iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
            writeln!(
                s,
                "format=FRT1 version={} shape={shape} epsilon={} dtype={} count={} bytes={}",
                serialize::FORMAT_VERSION,
                h.epsilon,
                h.dtype.name(),
                h.count,
                bytes.len()
            )
            .unwrap();
        }
        _ => {
            let dtype = serialize::model_dtype(bytes)?;
            let model = serialize::unpack_model(bytes)?;
            writeln!(
                s,
                "format=FRM1 version={} dtype={} layers={} bytes={}",
                serialize::FORMAT_VERSION,
                dtype.name(),
                model.layers().len(),
                bytes.len()
            )
            .unwrap();
            for l in model.layers() {
                write!(s, "layer name={} kind={}", l.name, l.layer.kind_name()).unwrap();
                if let Some(w) = l.layer.weight() {
                    let shape = w.shape().iter().map(|d| d.to_string()).collect::<Vec<_>>().join(",");
                    match w.as_frequency() {
                        Some(t) => {
                            write!(s, " shape={shape} epsilon={} count={}", t.epsilon(), t.nonzero_budget()).unwrap()
                        }
                        None => write!(s, " shape={shape} plain count={}", w.total()).unwrap(),
                    }
                }
                writeln!(s).unwrap();
            }
        }
    }
    Ok(s)
}

fn cmd_unpack(a: UnpackArgs, out: &mut dyn Write) -> CmdResult {
    let bytes = read_file(&a.input)?;
    if a.inspect {
        let text = inspect(&bytes).map_err(data_error)?;
        return write!(out, "{text}").map_err(|e| Failure::data(e.to_string()));
    }
    let doc = document::from_packed(&bytes).map_err(data_error)?;
    let json = document::render(&doc);
    match a.out {
        Some(path) => std::fs::write(&path, json + "\n").map_err(|e| Failure::data(format!("{}: {e}", path.display()))),
        None => writeln!(out, "{json}").map_err(|e| Failure::data(e.to_string())),
    }
}
