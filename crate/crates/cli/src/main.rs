use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use openmix::datasets::{generate_blobs, load_dataset, save_dataset, SplitSpec};
use openmix::kv::KvFile;
use openmix::numcore::checkpoint;
use openmix::theory::analyze;
use openmix::trainer::{
    attach_new_head, cluster_train, evaluate, init_model, pretrain, write_metrics, write_predictions, RunConfig,
    CLUSTERED_FILE, DATASET_FILE, METRICS_FILE, PRETRAINED_FILE,
};
use openmix::{Error, Result};

#[derive(Parser)]
#[command(name = "openmix", version, about = "Novel class discovery on synthetic blob data")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled/unlabeled blob dataset.
    GenData {
        /// `key = value` split spec; missing keys keep their defaults.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Stage 1: cross-entropy pretraining on the labeled split.
    Pretrain {
        #[arg(long)]
        config: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Stage 2: clustering of the unlabeled split from a pretrained checkpoint.
    Cluster {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "set", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Print ACC and NMI of a checkpoint on the unlabeled split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset file, or a directory holding dataset.csv.
        #[arg(long)]
        data: PathBuf,
        /// Also write per-example cluster assignments here.
        #[arg(long)]
        predictions: Option<PathBuf>,
    },
    /// Monte-Carlo report on the label-error identities.
    Analyze {
        #[arg(long, default_value_t = 100_000)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) | Error::InvalidInput(_) | Error::Shape { .. } | Error::NoAnchors => 2,
        Error::Divergence { .. } | Error::NonFinite(_) => 3,
        Error::Io { .. } | Error::Format { .. } | Error::Checkpoint(_) => 4,
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn dataset_path(data: &Path) -> PathBuf {
    if data.is_dir() {
        data.join(DATASET_FILE)
    } else {
        data.to_path_buf()
    }
}

fn gen_data(spec: Option<&Path>, out: &Path) -> Result<()> {
    let spec = match spec {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            SplitSpec::from_kv(&KvFile::parse(&text, path)?)?
        }
        None => SplitSpec::default(),
    };
    let blobs = generate_blobs(&spec)?;
    create_dir(out)?;
    let path = out.join(DATASET_FILE);
    save_dataset(&path, &blobs.dataset)?;
    println!(
        "wrote {} ({} labeled, {} unlabeled, {} + {} classes)",
        path.display(),
        blobs.dataset.labeled.len(),
        blobs.dataset.unlabeled.len(),
        spec.old_classes,
        spec.new_classes
    );
    Ok(())
}

fn run_pretrain(config: &Path, overrides: &[String]) -> Result<()> {
    let cfg = RunConfig::load(config, overrides)?;
    let data = load_dataset(&cfg.dataset_path())?;
    let mut model = init_model(&cfg, data.input_dim(), data.old_classes(), data.new_classes())?;
    let report = pretrain(&mut model, &data.labeled, &cfg)?;
    create_dir(&cfg.out_dir)?;
    let path = cfg.out_dir.join(PRETRAINED_FILE);
    checkpoint::save(&path, &model)?;
    write_text(&cfg.out_dir.join("pretrain.config"), &cfg.to_kv_string())?;
    println!(
        "pretrained {} epochs: loss {:.6}, labeled accuracy {:.4}",
        report.epochs, report.final_loss, report.train_accuracy
    );
    println!("wrote {}", path.display());
    Ok(())
}

fn run_cluster(config: &Path, checkpoint_path: &Path, overrides: &[String]) -> Result<()> {
    let cfg = RunConfig::load(config, overrides)?;
    let data = load_dataset(&cfg.dataset_path())?;
    let mut model = checkpoint::load(checkpoint_path)?;
    attach_new_head(&mut model, data.new_classes(), &cfg)?;
    let reports = cluster_train(&mut model, &data.labeled, &data.unlabeled, Some(&data.truth), &cfg)?;
    create_dir(&cfg.out_dir)?;
    let ckpt = cfg.out_dir.join(CLUSTERED_FILE);
    let metrics = cfg.out_dir.join(METRICS_FILE);
    checkpoint::save(&ckpt, &model)?;
    write_metrics(&metrics, &reports)?;
    write_text(&cfg.out_dir.join("cluster.config"), &cfg.to_kv_string())?;
    if let Some(last) = reports.last() {
        let show = |v: Option<f64>| v.map_or("-".to_string(), |a| format!("{a:.4}"));
        println!(
            "epoch {}: ACC {}, NMI {}, anchors {} (accuracy {})",
            last.epoch,
            show(last.acc),
            show(last.nmi),
            last.anchor_count,
            show(last.anchor_acc)
        );
    }
    println!("wrote {} and {}", ckpt.display(), metrics.display());
    Ok(())
}

fn run_eval(checkpoint_path: &Path, data: &Path, predictions: Option<&Path>) -> Result<()> {
    let model = checkpoint::load(checkpoint_path)?;
    let data = load_dataset(&dataset_path(data))?;
    let eval = evaluate(&model, &data.unlabeled, &data.truth)?;
    println!("ACC {:.6}", eval.acc);
    println!("NMI {:.6}", eval.nmi);
    if let Some(path) = predictions {
        let io_err = |e: io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        let file = fs::File::create(path).map_err(io_err)?;
        let mut w = BufWriter::new(file);
        write_predictions(&mut w, &eval, &data.truth)
            .and_then(|_| w.flush())
            .map_err(io_err)?;
    }
    Ok(())
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::GenData { spec, out } => gen_data(spec.as_deref(), &out),
        Command::Pretrain { config, overrides } => run_pretrain(&config, &overrides),
        Command::Cluster {
            config,
            checkpoint,
            overrides,
        } => run_cluster(&config, &checkpoint, &overrides),
        Command::Eval {
            checkpoint,
            data,
            predictions,
        } => run_eval(&checkpoint, &data, predictions.as_deref()),
        Command::Analyze { samples, seed } => {
            print!("{}", analyze(samples, seed)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
