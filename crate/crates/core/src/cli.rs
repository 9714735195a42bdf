//! Command-line front end: `split`, `train`, `extract-teacher`, `evaluate`,
//! `predict` and `synth`.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::ffi::OsString;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{filter_and_split, group_sessions, ingest_sessions, ItemVocab, SessionDataset, SplitTag};
use crate::error::{DataError, Error, EvalError, SolverError, TeacherError};
use crate::eval::{evaluate, head_tail_partition, predict_topn, EvalSessions, InferenceVector};
use crate::model::{read_model, train_model, write_model};
use crate::synth;
use crate::teacher::{extract_teacher, read_teacher, write_teacher, MarkovTeacher, TeacherMatrix};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "linkrec",
    version,
    about = "Closed-form linear item-item models for session-based recommendation",
    after_help = "Any configuration key can be overridden with a flag of the same dotted name, \
                  e.g. --solver.lambda 100 or --eval.ks [5,20]."
)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Cap on worker threads (overrides `threads` in the config).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Filter an interaction log and split it chronologically into train/valid/test.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output_dir: PathBuf,
    },
    /// Train a model of kind `model.kind` on a train split.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Teacher matrix file (TCH1) for nit/link.
        #[arg(long, conflicts_with = "markov_teacher")]
        teacher: Option<PathBuf>,
        /// Build the count-based Markov teacher from the train split.
        #[arg(long)]
        markov_teacher: bool,
    },
    /// Extract the Markov teacher matrix from a train split.
    ExtractTeacher {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
    },
    /// Evaluate a model on a test split; writes `<output>.txt` and `<output>.json`.
    Evaluate {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        test: PathBuf,
        /// Train split, used for head/tail popularity.
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Print the top-N items for a session prefix.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Comma-separated item tokens, oldest first.
        #[arg(long, value_delimiter = ',')]
        items: Vec<String>,
        #[arg(short = 'n', long)]
        top_n: Option<usize>,
    },
    /// Write a seeded synthetic Markov-chain interaction log.
    Synth {
        #[arg(long)]
        output: PathBuf,
    },
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Run(Error),
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Usage(m) => write!(f, "usage error: {m}"),
            Self::Run(e) => write!(f, "{e}"),
        }
    }
}

impl<E: Into<Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        Self::Run(e.into())
    }
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Run(e) => match e {
                Error::Linalg(_) | Error::Solver(SolverError::Linalg(_)) => EXIT_NUMERICAL,
                Error::Teacher(TeacherError::NonFiniteLogit { .. }) => EXIT_NUMERICAL,
                Error::Solver(SolverError::InvalidConfig(_))
                | Error::Teacher(TeacherError::InvalidSmoothing(_) | TeacherError::InvalidTemperature(_))
                | Error::Eval(EvalError::InvalidCutoffs | EvalError::InvalidDecay(_)) => EXIT_USAGE,
                _ => EXIT_DATA,
            },
        }
    }
}

type Overrides = Vec<(String, String)>;

/// Splits `--section.key value` / `--section.key=value` overrides out of `args`.
fn extract_overrides(args: Vec<OsString>) -> Result<(Vec<OsString>, Overrides), String> {
    let mut rest = Vec::with_capacity(args.len());
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(s) = arg.to_str() else {
            rest.push(arg);
            continue;
        };
        match s.strip_prefix("--") {
            Some(body) if body.split('=').next().is_some_and(|k| k.contains('.')) => {
                if let Some((k, v)) = body.split_once('=') {
                    overrides.push((k.to_string(), v.to_string()));
                } else {
                    let v = iter
                        .next()
                        .and_then(|v| v.into_string().ok())
                        .ok_or_else(|| format!("missing value for --{body}"))?;
                    overrides.push((body.to_string(), v));
                }
            }
            _ => rest.push(arg),
        }
    }
    Ok((rest, overrides))
}

/// Runs the CLI with explicit arguments (including the program name) and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString>,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let (args, overrides) = match extract_overrides(args) {
        Ok(v) => v,
        Err(m) => {
            eprintln!("usage error: {m}");
            return EXIT_USAGE;
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    match execute(cli, &overrides) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn execute(cli: Cli, overrides: &[(String, String)]) -> Result<(), CliError> {
    let mut config = RunConfig::load(cli.config.as_deref(), overrides).map_err(CliError::Usage)?;
    if let Some(t) = cli.threads {
        config.threads = t;
    }
    if config.threads > 0 {
        // fails only if a pool already exists, e.g. when run twice in one process
        let _ = rayon::ThreadPoolBuilder::new().num_threads(config.threads).build_global();
    }
    match cli.command {
        Command::Split { input, output_dir } => cmd_split(&input, &output_dir, &config),
        Command::Train {
            train,
            vocab,
            output,
            teacher,
            markov_teacher,
        } => cmd_train(&train, &vocab, &output, teacher.as_deref(), markov_teacher, &config),
        Command::ExtractTeacher { train, vocab, output } => cmd_extract_teacher(&train, &vocab, &output, &config),
        Command::Evaluate {
            model,
            test,
            train,
            output,
        } => cmd_evaluate(&model, &test, &train, output.as_deref(), &config),
        Command::Predict { model, items, top_n } => cmd_predict(&model, &items, top_n, &config),
        Command::Synth { output } => cmd_synth(&output, &config),
    }
}

/// Path of the vocabulary that travels alongside a model or teacher file.
pub fn sidecar_vocab_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".vocab");
    PathBuf::from(s)
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| {
        CliError::Run(
            DataError::Io {
                path: dir.to_path_buf(),
                source,
            }
            .into(),
        )
    })
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|source| {
        CliError::Run(
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
            .into(),
        )
    })
}

fn cmd_split(input: &Path, output_dir: &Path, config: &RunConfig) -> Result<(), CliError> {
    let report = ingest_sessions(input, &config.data.format())?;
    if report.malformed() > 0 {
        log::warn!("skipped {} malformed rows", report.malformed());
    }
    let splits = filter_and_split(&report.interactions, &config.data.filter())?;
    create_dir(output_dir)?;
    let d = config.data.delimiter;
    splits.train.write(output_dir.join("train.csv"), d)?;
    splits.valid.write(output_dir.join("valid.csv"), d)?;
    splits.test.write(output_dir.join("test.csv"), d)?;
    splits.train.vocab.write(output_dir.join("vocab.txt"))?;
    println!("malformed_rows {}", report.malformed());
    println!("{}", splits.stats);
    Ok(())
}

fn load_split(path: &Path, vocab: Arc<ItemVocab>, split: SplitTag, config: &RunConfig) -> Result<SessionDataset, CliError> {
    let ds = SessionDataset::read(path, &config.data.format(), vocab, split, 2)?;
    if ds.is_empty() {
        return Err(DataError::EmptyDataset { stage: "loading split" }.into());
    }
    Ok(ds)
}

fn markov_teacher(train: &SessionDataset, config: &RunConfig) -> Result<TeacherMatrix<f64>, CliError> {
    let scorer = MarkovTeacher::fit(train, config.teacher.smoothing)?;
    Ok(extract_teacher(&scorer, train.n_items(), config.solver.tau)?)
}

fn cmd_train(
    train_path: &Path,
    vocab_path: &Path,
    output: &Path,
    teacher_path: Option<&Path>,
    use_markov: bool,
    config: &RunConfig,
) -> Result<(), CliError> {
    let kind = config.model.kind;
    if kind.needs_teacher() && teacher_path.is_none() && !use_markov {
        return Err(CliError::Usage(format!("model kind {kind} needs --teacher FILE or --markov-teacher")));
    }
    let vocab = Arc::new(ItemVocab::read(vocab_path)?);
    let train = load_split(train_path, vocab.clone(), SplitTag::Train, config)?;
    let teacher = match (kind.needs_teacher(), teacher_path) {
        (false, _) => None,
        (true, Some(p)) => Some(read_teacher::<f64>(p, Some(&vocab))?),
        (true, None) => Some(markov_teacher(&train, config)?),
    };
    let (model, summary) =
        train_model(&train, kind, &config.solver, config.decay.delta_pos, teacher.as_ref())?;
    write_model(&model, output)?;
    vocab.write(sidecar_vocab_path(output))?;
    println!(
        "trained kind={} n={} sessions={} pairs={} seconds={:.3}",
        summary.kind, summary.n_items, summary.sessions, summary.pairs, summary.seconds
    );
    Ok(())
}

fn cmd_extract_teacher(train_path: &Path, vocab_path: &Path, output: &Path, config: &RunConfig) -> Result<(), CliError> {
    let vocab = Arc::new(ItemVocab::read(vocab_path)?);
    let train = load_split(train_path, vocab.clone(), SplitTag::Train, config)?;
    let teacher = markov_teacher(&train, config)?;
    write_teacher(&teacher, output)?;
    vocab.write(sidecar_vocab_path(output))?;
    println!("teacher n={} tau={}", teacher.n_items(), teacher.tau);
    Ok(())
}

fn cmd_evaluate(
    model_path: &Path,
    test_path: &Path,
    train_path: &Path,
    output: Option<&Path>,
    config: &RunConfig,
) -> Result<(), CliError> {
    let vocab = Arc::new(ItemVocab::read(sidecar_vocab_path(model_path))?);
    let model = read_model::<f64>(model_path, vocab.clone())?;
    let train = load_split(train_path, vocab.clone(), SplitTag::Train, config)?;
    let partition = head_tail_partition(&train);
    let report = ingest_sessions(test_path, &config.data.format())?;
    let test = EvalSessions::from_raw(&group_sessions(&report.interactions), &vocab);
    let result = evaluate(&model, &test, config.eval.protocol, &config.eval_config(), &partition)?;
    let text = result.to_text();
    if let Some(prefix) = output {
        let mut txt = prefix.as_os_str().to_owned();
        txt.push(".txt");
        let mut json = prefix.as_os_str().to_owned();
        json.push(".json");
        write_text(Path::new(&txt), &text)?;
        write_text(Path::new(&json), &result.to_json())?;
    }
    print!("{text}");
    Ok(())
}

fn cmd_predict(model_path: &Path, items: &[String], top_n: Option<usize>, config: &RunConfig) -> Result<(), CliError> {
    let vocab = Arc::new(ItemVocab::read(sidecar_vocab_path(model_path))?);
    let model = read_model::<f64>(model_path, vocab.clone())?;
    let n = top_n.unwrap_or(config.eval.top_n);
    if n == 0 {
        return Ok(());
    }
    let prefix: Vec<Option<usize>> = items
        .iter()
        .map(|t| {
            let idx = vocab.index_of(t);
            if idx.is_none() {
                log::warn!("unknown item {t:?} skipped");
            }
            idx
        })
        .collect();
    let x = InferenceVector::<f64>::from_prefix(&prefix, config.decay.delta_inf)?;
    let ranked = predict_topn(&x, &model, n, config.eval.exclude_seen);
    for (rank, (&i, s)) in ranked.items.iter().zip(&ranked.scores).enumerate() {
        println!("{}\t{}\t{}", rank + 1, vocab.token(i).expect("index within vocab"), s);
    }
    Ok(())
}

fn cmd_synth(output: &Path, config: &RunConfig) -> Result<(), CliError> {
    let interactions = synth::generate(&config.synth);
    synth::write_log(&interactions, output, config.data.delimiter)?;
    println!("interactions {}", interactions.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_are_split_out() {
        let args: Vec<OsString> = ["linkrec", "--solver.lambda", "5", "train", "--eval.ks=[1]", "--train", "x"]
            .iter()
            .map(OsString::from)
            .collect();
        let (rest, ov) = extract_overrides(args).unwrap();
        assert_eq!(rest, ["linkrec", "train", "--train", "x"].map(OsString::from).to_vec());
        assert_eq!(ov, vec![("solver.lambda".to_string(), "5".to_string()), ("eval.ks".into(), "[1]".into())]);
    }

    #[test]
    fn dangling_override_is_usage_error() {
        assert_eq!(run(["linkrec", "synth", "--output", "/tmp/x", "--solver.lambda"]), EXIT_USAGE);
    }

    #[test]
    fn sidecar_path() {
        assert_eq!(sidecar_vocab_path(Path::new("/a/m.iim")), PathBuf::from("/a/m.iim.vocab"));
    }
}
