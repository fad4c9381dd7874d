use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use fairlattice::classifier::{self, FitConfig, MlpModel};
use fairlattice::data::{self, Dataset};
use fairlattice::fairness::{self, BootstrapConfig};
use fairlattice::generator::{self, GenForm, GenTrainConfig, GeneratorSuite};
use fairlattice::pipeline::{self, DataSource, PipelineConfig};
use fairlattice::synth::{self, SynthSpec};
use fairlattice::util::{derive_seed, fmt_sig9, rng_from_seed};

#[derive(Parser)]
#[command(name = "fairlattice", version, about = "Intersectional data augmentation experiments")]
struct Cli {
    /// Pipeline configuration file (flat key=value)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Seed; replaces the configured seed list
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Extra configuration entries, applied after the file. Give all of
    /// them on the same side of the subcommand name.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct DataArgs {
    /// Data file; defaults to the configured source
    #[arg(long, requires = "schema")]
    data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    schema: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Write a synthetic benchmark (schema, data and spec files)
    Synth {
        /// Synthetic spec file; defaults come from the config's synth.* keys
        #[arg(long)]
        spec: Option<PathBuf>,
    },
    /// Train one generator per label
    TrainGen {
        #[command(flatten)]
        data: DataArgs,
    },
    /// Top up small cells with generated records
    Augment {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        generators: PathBuf,
        #[arg(long)]
        n_per_cell: usize,
    },
    /// Train a classifier, optionally on equally sampled data
    TrainClf {
        #[command(flatten)]
        data: DataArgs,
        /// Validation data; without it 20% of each cell is held out
        #[arg(long, requires = "valid_schema")]
        valid_data: Option<PathBuf>,
        #[arg(long, requires = "valid_data")]
        valid_schema: Option<PathBuf>,
        /// Equal-sample the training portion to this many records per cell
        #[arg(long)]
        equal_sample: Option<usize>,
    },
    /// Bootstrap fairness report of a trained classifier
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        model: PathBuf,
    },
    /// Full experiment across all seeds
    Pipeline,
    /// Rerun the pipeline on the first q axes for q = 1..p
    Sweep,
    /// Compare the generator structures against the Unconstrained baseline
    Compare,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut cfg = match &cli.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let mut synth_overrides = Vec::new();
    for entry in &cli.set {
        let (k, v) = entry
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got {entry:?}"))?;
        let (k, v) = (k.trim(), v.trim());
        if let Some(sk) = k.strip_prefix("synth.") {
            synth_overrides.push((sk.to_string(), v.to_string()));
        } else if k == "out" {
            cfg.out = Some(PathBuf::from(v));
        } else {
            cfg.set(k, v).map_err(anyhow::Error::msg)?;
        }
    }
    if !synth_overrides.is_empty() {
        let DataSource::Synth(spec) = &mut cfg.source else {
            bail!("synth.* entries need a synthetic data source");
        };
        for (k, v) in synth_overrides {
            spec.set(&k, &v).map_err(anyhow::Error::msg)?;
        }
        spec.validate()?;
    }
    if let Some(seed) = cli.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &cli.out {
        cfg.out = Some(out.clone());
    }
    Ok(cfg)
}

fn out_dir(cfg: &PipelineConfig) -> Result<PathBuf> {
    let dir = cfg.out.clone().context("an output directory is required (--out)")?;
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn load_data(args: &DataArgs, cfg: &PipelineConfig) -> Result<Dataset> {
    match (&args.data, &args.schema) {
        (Some(d), Some(s)) => Ok(data::load_dataset(d, s)?),
        _ => Ok(cfg.load_data()?),
    }
}

fn first_seed(cfg: &PipelineConfig) -> u64 {
    cfg.seeds[0]
}

fn cmd_synth(cfg: &PipelineConfig, spec_path: Option<&Path>, seed: Option<u64>) -> Result<()> {
    let mut spec = match (spec_path, &cfg.source) {
        (Some(p), _) => SynthSpec::parse(
            &std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
        )?,
        (None, DataSource::Synth(s)) => s.clone(),
        (None, DataSource::Files { .. }) => bail!("the configuration names data files; pass --spec"),
    };
    if let Some(s) = seed {
        spec.seed = s;
    }
    let dir = out_dir(cfg)?;
    let ds = synth::write_synth(&spec, &dir)?;
    println!("wrote {} records to {}", ds.len(), dir.display());
    Ok(())
}

fn cmd_train_gen(cfg: &PipelineConfig, args: &DataArgs) -> Result<()> {
    let ds = load_data(args, cfg)?;
    let forms = match &cfg.forms {
        Some(f) => f.clone(),
        None => GenForm::default_forms(ds.num_labels()),
    };
    let gcfg = GenTrainConfig {
        seed: first_seed(cfg),
        ..cfg.gen.clone()
    };
    let outcome = generator::train_generators(&ds, &gcfg, &forms)?;
    let dir = out_dir(cfg)?;
    outcome.suite.save(&dir.join("generators.txt"))?;
    let mut trace = String::from("# iteration\tlabel\tloss\n");
    for (k, t) in outcome.loss_trace.iter().enumerate() {
        for (i, v) in t.iter().enumerate() {
            trace.push_str(&format!("{i}\t{k}\t{}\n", fmt_sig9(*v)));
        }
    }
    write(&dir.join("gen_loss.tsv"), &trace)?;
    println!("wrote {}", dir.join("generators.txt").display());
    Ok(())
}

fn cmd_augment(cfg: &PipelineConfig, args: &DataArgs, generators: &Path, n: usize) -> Result<()> {
    let ds = load_data(args, cfg)?;
    let suite = GeneratorSuite::load(generators)?;
    let mut rng = rng_from_seed(first_seed(cfg));
    let aug = generator::augment(&ds, &suite, n, &mut rng)?;
    let dir = out_dir(cfg)?;
    data::write_dataset(&aug, &dir.join(synth::DATA_FILE), &dir.join(synth::SCHEMA_FILE))?;
    println!(
        "wrote {} records ({} generated) to {}",
        aug.len(),
        aug.len() - ds.len(),
        dir.display()
    );
    Ok(())
}

fn cmd_train_clf(
    cfg: &PipelineConfig,
    args: &DataArgs,
    valid_files: Option<(&Path, &Path)>,
    equal: Option<usize>,
) -> Result<()> {
    let ds = load_data(args, cfg)?;
    let seed = first_seed(cfg);
    let (mut train, valid) = match valid_files {
        Some((d, s)) => (ds, data::load_dataset(d, s)?),
        None => pipeline::holdout_split(&ds, derive_seed(seed, 1)),
    };
    if let Some(n) = equal {
        let mut rng = rng_from_seed(derive_seed(seed, 4));
        train = data::equal_sample(&train, n, &mut rng)?;
    }
    let model = MlpModel::init(train.feature_dim(), train.num_labels(), derive_seed(seed, 5))?;
    let fit = FitConfig {
        seed: derive_seed(seed, 6),
        ..cfg.fit.clone()
    };
    let (model, history) = classifier::fit(model, &train, &valid, &fit)?;
    let dir = out_dir(cfg)?;
    model.save(&dir.join("model.txt"))?;
    let mut h = String::from("# epoch\ttrain_loss\tvalid_ba\n");
    for (e, (l, b)) in history.train_loss.iter().zip(&history.valid_ba).enumerate() {
        h.push_str(&format!("{e}\t{}\t{}\n", fmt_sig9(*l), fmt_sig9(*b)));
    }
    write(&dir.join("history.tsv"), &h)?;
    println!(
        "best epoch {} with validation balanced accuracy {}",
        history.best_epoch,
        fmt_sig9(history.valid_ba[history.best_epoch])
    );
    Ok(())
}

fn cmd_evaluate(cfg: &PipelineConfig, args: &DataArgs, model_path: &Path) -> Result<()> {
    let ds = load_data(args, cfg)?;
    let model = MlpModel::load(model_path)?;
    let bcfg = BootstrapConfig {
        seed: first_seed(cfg),
        ..cfg.bootstrap
    };
    let report = fairness::bootstrap_estimate(&ds, &model, &bcfg, &cfg.alpha_grid)?;
    let dir = out_dir(cfg)?;
    write(&dir.join("report.txt"), &report.render_table())?;
    write(&dir.join("metrics.tsv"), &fairness::render_records("", &report.records()))?;
    write(&dir.join("curve.tsv"), &fairness::render_curve(&report.curve()))?;
    print!("{}", report.render_table());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let cfg = load_config(&cli)?;
    match &cli.cmd {
        Cmd::Synth { spec } => cmd_synth(&cfg, spec.as_deref(), cli.seed),
        Cmd::TrainGen { data } => cmd_train_gen(&cfg, data),
        Cmd::Augment {
            data,
            generators,
            n_per_cell,
        } => cmd_augment(&cfg, data, generators, *n_per_cell),
        Cmd::TrainClf {
            data,
            valid_data,
            valid_schema,
            equal_sample,
        } => {
            let valid = valid_data.as_deref().zip(valid_schema.as_deref());
            cmd_train_clf(&cfg, data, valid, *equal_sample)
        }
        Cmd::Evaluate { data, model } => cmd_evaluate(&cfg, data, model),
        Cmd::Pipeline => {
            out_dir(&cfg)?;
            let summary = pipeline::run_pipeline(&cfg)?;
            for name in [
                "unconstrained.balanced_accuracy",
                "augmented.balanced_accuracy",
                "unconstrained.if_alpha_0.5",
                "augmented.if_alpha_0.5",
            ] {
                if let Some((m, s)) = summary.metric(name) {
                    println!("{name}\t{}\t{}", fmt_sig9(m), fmt_sig9(s));
                }
            }
            Ok(())
        }
        Cmd::Sweep => {
            out_dir(&cfg)?;
            let ds = cfg.load_data()?;
            let order = cfg
                .axis_order
                .clone()
                .unwrap_or_else(|| (0..ds.schema().p()).collect());
            let points = pipeline::axes_sweep(&cfg, &order)?;
            print!("{}", pipeline::render_sweep(&points));
            Ok(())
        }
        Cmd::Compare => {
            out_dir(&cfg)?;
            let cmp = pipeline::compare_structures(&cfg)?;
            print!("{}", pipeline::render_comparison(&cmp.table));
            Ok(())
        }
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Err(e) = run(Cli::parse()) {
        eprintln!("error: {e:#}");
        std::process::exit(1);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Small settings so a full chain runs in well under a second.
    const FAST: [&str; 16] = [
        "--set", "synth.d=4",
        "--set", "synth.max_cell=40",
        "--set", "synth.min_cell=12",
        "--set", "gen.iterations=20",
        "--set", "clf.epochs=3",
        "--set", "bootstrap.resamples=20",
        "--set", "quality.samples=40",
        "--set", "n_per_cell=20",
    ];

    fn cli(dir: &Path, args: &[&str]) -> Result<()> {
        let out = dir.to_str().unwrap();
        let mut argv = vec!["fairlattice", args[0], "--out", out, "--seed", "3"];
        argv.extend(FAST);
        argv.extend(&args[1..]);
        run(Cli::parse_from(argv))
    }

    #[test]
    fn step_by_step_chain() {
        let tmp = tempfile::tempdir().unwrap();
        let root = tmp.path();
        let path = |p: &str| root.join(p).to_str().unwrap().to_string();
        cli(&root.join("data"), &["synth"]).unwrap();
        let (data, schema) = (path("data/data.tsv"), path("data/schema.txt"));
        let d = ["--data", data.as_str(), "--schema", schema.as_str()];
        cli(&root.join("gen"), &[&["train-gen"], &d[..]].concat()).unwrap();
        let gens = path("gen/generators.txt");
        cli(
            &root.join("aug"),
            &[&["augment"], &d[..], &["--generators", gens.as_str(), "--n-per-cell", "20"]].concat(),
        )
        .unwrap();
        let (adata, aschema) = (path("aug/data.tsv"), path("aug/schema.txt"));
        let a = ["--data", adata.as_str(), "--schema", aschema.as_str()];
        cli(&root.join("clf"), &[&["train-clf"], &a[..], &["--equal-sample", "20"]].concat()).unwrap();
        let model = path("clf/model.txt");
        cli(&root.join("eval"), &[&["evaluate"], &d[..], &["--model", model.as_str()]].concat()).unwrap();

        let augmented = data::load_dataset(Path::new(&adata), Path::new(&aschema)).unwrap();
        let original = data::load_dataset(Path::new(&data), Path::new(&schema)).unwrap();
        assert!(augmented.len() > original.len());
        for cell in augmented.cells().values() {
            assert!(cell.len() >= 20);
        }
        let metrics = std::fs::read_to_string(root.join("eval/metrics.tsv")).unwrap();
        assert!(metrics.starts_with("balanced_accuracy\t"));
        assert!(metrics.contains("if_alpha_0.5\t"));
        assert!(root.join("eval/curve.tsv").exists());
        assert!(root.join("clf/history.tsv").exists());
        assert!(root.join("gen/gen_loss.tsv").exists());
    }

    #[test]
    fn pipeline_writes_the_report_bundle() {
        let tmp = tempfile::tempdir().unwrap();
        cli(tmp.path(), &["pipeline", "--set", "structure=alternate"]).unwrap();
        for f in ["config.txt", "metrics.tsv", "report.txt", "curves.tsv"] {
            assert!(tmp.path().join(f).exists(), "{f}");
        }
        for f in ["metrics.tsv", "report.txt", "curves.tsv", "generators.txt", "gen_loss.tsv"] {
            assert!(tmp.path().join("seed_3").join(f).exists(), "{f}");
        }
        let cfg = std::fs::read_to_string(tmp.path().join("config.txt")).unwrap();
        assert!(cfg.contains("structure=alternate"));
        assert!(cfg.contains("synth.max_cell=40"));
        // the written config reproduces the run
        let again = PipelineConfig::load(&tmp.path().join("config.txt")).unwrap();
        assert_eq!(again.render(), cfg);
    }

    #[test]
    fn sweep_and_compare_emit_tables() {
        let tmp = tempfile::tempdir().unwrap();
        cli(tmp.path(), &["sweep"]).unwrap();
        let sweep = std::fs::read_to_string(tmp.path().join("sweep/sweep.tsv")).unwrap();
        assert_eq!(sweep.lines().filter(|l| !l.starts_with('#')).count(), 3);
        cli(tmp.path(), &["compare"]).unwrap();
        let cmp = std::fs::read_to_string(tmp.path().join("compare/comparison.tsv")).unwrap();
        assert_eq!(cmp.lines().filter(|l| !l.starts_with('#')).count(), 4);
    }

    #[test]
    fn configuration_errors_are_reported() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().to_str().unwrap();
        let missing = run(Cli::parse_from(["fairlattice", "--out", out, "pipeline"]));
        assert!(format!("{:#}", missing.unwrap_err()).contains("n_per_cell"));
        let bad = run(Cli::parse_from(["fairlattice", "--set", "nonsense", "pipeline"]));
        assert!(format!("{:#}", bad.unwrap_err()).contains("KEY=VALUE"));
        let unknown = run(Cli::parse_from(["fairlattice", "--set", "colour=red", "pipeline"]));
        assert!(format!("{:#}", unknown.unwrap_err()).contains("unknown key"));
        let cfg_path = tmp.path().join("run.txt");
        std::fs::write(&cfg_path, "n_per_cell=10\nsynth.p=2\nseeds=1,2\n").unwrap();
        let cfg = load_config(&Cli::parse_from([
            "fairlattice",
            "--config",
            cfg_path.to_str().unwrap(),
            "--seed",
            "9",
            "pipeline",
        ]))
        .unwrap();
        assert_eq!(cfg.seeds, vec![9]);
        assert_eq!(cfg.n_per_cell, vec![10]);
    }
}
