mod config;
mod grid;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{value_parser, Arg, ArgAction, ArgMatches, Command};
use curricle::corpus::{load_corpus, tokenize_text, Vocabulary};
use curricle::neighbors::{build_neighbor_table, default_k, load_embeddings};
use curricle::schedules::{ScheduleKind, ScheduleSpec};
use curricle::seqmodel::{generate, load_checkpoint, GenerationConfig, GenerationMode};
use curricle::synthetic::{write_desk_corpus, CorpusSizes, SyntheticSpec};
use curricle::trainer::{evaluate, prepare_data, train_prepared, VOCAB_FILE};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use config::{ConfigError, RawConfig, KEYS, SEED_ENV};

/// Exit 2 for bad configuration or usage, 1 for everything else.
enum Failure {
    Config(ConfigError),
    Runtime(curricle::Error),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e)
    }
}

impl From<curricle::Error> for Failure {
    fn from(e: curricle::Error) -> Self {
        match e {
            curricle::Error::Config { key, message } => Failure::Config(ConfigError { key, message }),
            other => Failure::Runtime(other),
        }
    }
}

fn config_error(key: &str, message: impl Into<String>) -> Failure {
    Failure::Config(ConfigError {
        key: key.to_string(),
        message: message.into(),
    })
}

fn cli() -> Command {
    let mut train = Command::new("train")
        .about("Train a language model; prints `best_valid=<ppl> test=<ppl>`")
        .after_help(format!(
            "Flags override the config file. {SEED_ENV} overrides the file's seed but not --seed."
        ))
        .arg(
            Arg::new("config")
                .value_name("CONFIG")
                .value_parser(value_parser!(PathBuf)),
        );
    for k in KEYS {
        let help = if k.default.is_empty() {
            k.help.to_string()
        } else {
            format!("{} [default: {}]", k.help, k.default)
        };
        train = train.arg(Arg::new(k.name).long(k.name).value_name("VALUE").help(help));
    }

    let path = |name: &'static str, help: &'static str| {
        Arg::new(name)
            .long(name)
            .value_name("PATH")
            .value_parser(value_parser!(PathBuf))
            .help(help)
    };
    let count = |name: &'static str, default: &'static str, help: &'static str| {
        Arg::new(name)
            .long(name)
            .value_name("N")
            .default_value(default)
            .value_parser(value_parser!(u64).range(1..))
            .help(help)
    };

    Command::new("curricle")
        .about("Scheduled sampling and nearest-neighbor replacement sampling for LSTM language models")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(train)
        .subcommand(
            Command::new("eval")
                .about("Teacher-forced perplexity of a checkpoint on a corpus")
                .arg(path("checkpoint", "checkpoint file").required(true))
                .arg(path("corpus", "corpus to score").required(true))
                .arg(path("vocab", "vocabulary [default: vocab.txt next to the checkpoint]"))
                .arg(count("batch-size", "10", "stripes")),
        )
        .subcommand(
            Command::new("generate")
                .about("Continue a prefix; prints the tokens and the length-normalized score")
                .arg(path("checkpoint", "checkpoint file").required(true))
                .arg(path("vocab", "vocabulary [default: vocab.txt next to the checkpoint]"))
                .arg(Arg::new("prefix").long("prefix").value_name("TEXT").required(true))
                .arg(count("max-len", "20", "tokens to emit at most"))
                .arg(
                    Arg::new("alpha")
                        .long("alpha")
                        .value_name("A")
                        .default_value("1")
                        .value_parser(value_parser!(f64))
                        .help("length-normalization exponent"),
                )
                .arg(
                    Arg::new("mode")
                        .long("mode")
                        .default_value("greedy")
                        .value_parser(["greedy", "sample"]),
                )
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .value_parser(value_parser!(u64))
                        .help(format!("sampling seed [default: {SEED_ENV} or 1]")),
                ),
        )
        .subcommand(
            Command::new("build-neighbors")
                .about("Write the nearest-neighbor table; prints coverage and k")
                .arg(path("embeddings", "word vectors").required(true))
                .arg(path("vocab", "vocabulary, one token per line").required(true))
                .arg(
                    Arg::new("k")
                        .long("k")
                        .value_parser(value_parser!(usize))
                        .help("neighbors per word [default: round(log2 |V|)]"),
                )
                .arg(path("out", "output table").required(true)),
        )
        .subcommand(
            Command::new("inspect-schedule")
                .about("Print `epoch,rate` for every epoch of a schedule")
                .arg(
                    Arg::new("kind")
                        .long("kind")
                        .required(true)
                        .value_parser(ScheduleKind::ALL.map(ScheduleKind::as_str)),
                )
                .arg(
                    Arg::new("start")
                        .long("start")
                        .default_value("0")
                        .value_parser(value_parser!(f64)),
                )
                .arg(
                    Arg::new("end")
                        .long("end")
                        .default_value("1")
                        .value_parser(value_parser!(f64)),
                )
                .arg(count("epochs", "40", "total epochs")),
        )
        .subcommand(
            Command::new("grid")
                .about("Write one config per sampling setting and curve")
                .arg(path("out-dir", "where the config files go").required(true))
                .arg(path("base", "config whose values every generated config starts from"))
                .arg(
                    Arg::new("runs-dir")
                        .long("runs-dir")
                        .value_name("PATH")
                        .default_value("runs")
                        .value_parser(value_parser!(PathBuf))
                        .help("parent of each config's out_dir"),
                ),
        )
        .subcommand(
            Command::new("synth")
                .about("Write a seeded toy corpus (train/valid/test) and matching word vectors")
                .arg(path("out-dir", "output directory").required(true))
                .arg(
                    Arg::new("seed")
                        .long("seed")
                        .default_value("7")
                        .value_parser(value_parser!(u64)),
                )
                .arg(count("train-tokens", "160000", "training tokens"))
                .arg(count("eval-tokens", "20000", "tokens in each of valid and test"))
                .arg(Arg::new("quiet").long("quiet").action(ArgAction::SetTrue).hide(true)),
        )
}

fn seed_from_env() -> Result<Option<u64>, Failure> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map(Some)
            .map_err(|e| config_error(SEED_ENV, format!("cannot parse {v:?}: {e}"))),
        Err(_) => Ok(None),
    }
}

fn cmd_train(m: &ArgMatches) -> Result<(), Failure> {
    let mut raw = match m.get_one::<PathBuf>("config") {
        Some(p) => RawConfig::load(p)?,
        None => RawConfig::default(),
    };
    if let Some(seed) = seed_from_env()? {
        raw.set("seed", seed.to_string())?;
    }
    for k in KEYS {
        if let Some(v) = m.get_one::<String>(k.name) {
            raw.set(k.name, v.clone())?;
        }
    }
    let run = raw.resolve()?;
    // Everything is read and checked before the output directory exists.
    let data = prepare_data(&run.train, &run.paths)?;
    eprintln!(
        "|V| = {}, train tokens = {}{}",
        data.vocab.len(),
        data.train_stream.len(),
        match (data.k, data.coverage) {
            (Some(k), Some((c, v))) => format!(", k = {k}, embedding coverage = {c}/{v}"),
            (Some(k), None) => format!(", k = {k}"),
            _ => String::new(),
        }
    );
    let outcome = train_prepared(&run.train, &data, Some(&run.out_dir), |r| {
        eprintln!(
            "epoch {:>3}  train {:>10.3}  valid {:>10.3}  lr {:.4}  eps {:.3}  gamma {:.3}  tau {:.4}",
            r.epoch, r.train_ppl, r.valid_ppl, r.lr, r.epsilon, r.gamma, r.tau
        );
    })?;
    println!("best_valid={} test={}", outcome.best_valid, outcome.test_ppl);
    Ok(())
}

fn vocab_for(m: &ArgMatches, checkpoint: &Path) -> Result<Vocabulary, Failure> {
    let path = match m.get_one::<PathBuf>("vocab") {
        Some(p) => p.clone(),
        None => checkpoint.parent().unwrap_or(Path::new(".")).join(VOCAB_FILE),
    };
    Ok(Vocabulary::load(&path)?)
}

fn load_model(m: &ArgMatches) -> Result<(curricle::seqmodel::ModelParams, Vocabulary), Failure> {
    let checkpoint = m.get_one::<PathBuf>("checkpoint").expect("required");
    let vocab = vocab_for(m, checkpoint)?;
    let (params, _) = load_checkpoint(checkpoint)?;
    if params.config.vocab_size != vocab.len() {
        return Err(config_error(
            "vocab",
            format!(
                "{} tokens, but the checkpoint expects {}",
                vocab.len(),
                params.config.vocab_size
            ),
        ));
    }
    Ok((params, vocab))
}

fn cmd_eval(m: &ArgMatches) -> Result<(), Failure> {
    let (params, vocab) = load_model(m)?;
    let corpus = m.get_one::<PathBuf>("corpus").expect("required");
    let (stream, _) = load_corpus(corpus, Some(&vocab))?;
    let batch = *m.get_one::<u64>("batch-size").expect("default") as usize;
    // Windows do not change the result: the hidden state carries across them.
    let batches = curricle::corpus::batchify(&stream, batch, 35)?;
    println!("ppl={}", evaluate(&params, &batches)?);
    Ok(())
}

fn cmd_generate(m: &ArgMatches) -> Result<(), Failure> {
    let (params, vocab) = load_model(m)?;
    let text = m.get_one::<String>("prefix").expect("required");
    let prefix: Vec<usize> = text.split_ascii_whitespace().map(|t| vocab.id_or_unk(t)).collect();
    if prefix.is_empty() {
        return Err(config_error("prefix", "needs at least one token"));
    }
    let alpha = *m.get_one::<f64>("alpha").expect("default");
    if !(alpha > 0.0) {
        return Err(config_error("alpha", "must be > 0"));
    }
    let mode: GenerationMode = m
        .get_one::<String>("mode")
        .expect("default")
        .parse()
        .map_err(|e: String| config_error("mode", e))?;
    let seed = match m.get_one::<u64>("seed") {
        Some(&s) => s,
        None => seed_from_env()?.unwrap_or(1),
    };
    let cfg = GenerationConfig {
        max_len: *m.get_one::<u64>("max-len").expect("default") as usize,
        alpha,
        mode,
        eos_id: Some(vocab.eos_id()),
    };
    let out = generate(&params, &prefix, &cfg, &mut ChaCha8Rng::seed_from_u64(seed))?;
    println!("{}", vocab.detokenize(&out.ids));
    println!("score={}", out.score);
    Ok(())
}

fn cmd_build_neighbors(m: &ArgMatches) -> Result<(), Failure> {
    let vocab = Vocabulary::load(m.get_one::<PathBuf>("vocab").expect("required"))?;
    let k = m
        .get_one::<usize>("k")
        .copied()
        .unwrap_or_else(|| default_k(vocab.len()));
    if k == 0 || k >= vocab.len() {
        return Err(config_error(
            "k",
            format!("{k} must satisfy 1 <= k < |V| = {}", vocab.len()),
        ));
    }
    let emb = load_embeddings(m.get_one::<PathBuf>("embeddings").expect("required"), &vocab)?;
    let table = build_neighbor_table(&emb, k)?;
    table.save(m.get_one::<PathBuf>("out").expect("required"))?;
    println!("coverage={}/{} k={k}", emb.covered, vocab.len());
    Ok(())
}

fn cmd_inspect_schedule(m: &ArgMatches) -> Result<(), Failure> {
    let kind: ScheduleKind = m
        .get_one::<String>("kind")
        .expect("required")
        .parse()
        .map_err(|e: String| config_error("kind", e))?;
    let start = *m.get_one::<f64>("start").expect("default");
    let end = *m.get_one::<f64>("end").expect("default");
    let epochs = *m.get_one::<u64>("epochs").expect("default") as usize;
    let spec = ScheduleSpec::new(kind, start, end, epochs).map_err(|e| {
        let key = if (0.0..=1.0).contains(&end) { "start" } else { "end" };
        config_error(key, e.to_string())
    })?;
    let mut out = String::from("epoch,rate\n");
    for (e, r) in spec.table() {
        out.push_str(&format!("{e},{r}\n"));
    }
    print!("{out}");
    Ok(())
}

fn cmd_grid(m: &ArgMatches) -> Result<(), Failure> {
    let base = match m.get_one::<PathBuf>("base") {
        Some(p) => Some(RawConfig::load(p)?),
        None => None,
    };
    let runs_dir = m.get_one::<PathBuf>("runs-dir").expect("default");
    let configs = grid::table_grid(base.as_ref(), runs_dir)?;
    let out_dir = m.get_one::<PathBuf>("out-dir").expect("required");
    std::fs::create_dir_all(out_dir).map_err(|e| curricle::Error::Io {
        path: out_dir.clone(),
        source: e,
    })?;
    for (name, raw) in configs {
        let path = out_dir.join(format!("{name}.conf"));
        std::fs::write(&path, raw.render()).map_err(|e| curricle::Error::Io {
            path: path.clone(),
            source: e,
        })?;
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_synth(m: &ArgMatches) -> Result<(), Failure> {
    let out = m.get_one::<PathBuf>("out-dir").expect("required");
    let spec = SyntheticSpec {
        seed: *m.get_one::<u64>("seed").expect("default"),
        ..SyntheticSpec::default()
    };
    let eval = *m.get_one::<u64>("eval-tokens").expect("default") as usize;
    let sizes = CorpusSizes {
        train: *m.get_one::<u64>("train-tokens").expect("default") as usize,
        valid: eval,
        test: eval,
    };
    write_desk_corpus(out, spec, sizes)?;
    if !m.get_flag("quiet") {
        let text = std::fs::read_to_string(out.join("train.txt")).map_err(|e| curricle::Error::Io {
            path: out.join("train.txt"),
            source: e,
        })?;
        println!(
            "wrote {} ({} training tokens)",
            out.display(),
            tokenize_text(&text).len()
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let matches = cli().get_matches();
    let result = match matches.subcommand() {
        Some(("train", m)) => cmd_train(m),
        Some(("eval", m)) => cmd_eval(m),
        Some(("generate", m)) => cmd_generate(m),
        Some(("build-neighbors", m)) => cmd_build_neighbors(m),
        Some(("inspect-schedule", m)) => cmd_inspect_schedule(m),
        Some(("grid", m)) => cmd_grid(m),
        Some(("synth", m)) => cmd_synth(m),
        _ => unreachable!("a subcommand is required"),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}
