//! End-to-end experiment: split, train generators, augment, train the
//! Augmented and Unconstrained classifiers, evaluate and aggregate.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use thiserror::Error;

use crate::classifier::{self, FitConfig, MlpModel};
use crate::data::{self, Dataset};
use crate::evaluation::{self, DistinguishabilityReport, DiversityReport};
use crate::fairness::{self, BootstrapConfig, FairnessReport, Stat};
use crate::generator::{self, Bandwidth, GenForm, GenTrainConfig, GeneratorSuite, Structure};
use crate::mmd::Estimator;
use crate::synth::{self, SynthSpec};
use crate::util::{derive_seed, fmt_sig9, mean_std, parse_kv, rng_from_seed};

type BoxError = Box<dyn std::error::Error + Send + Sync>;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config line {line}: {msg}")]
    Config { line: usize, msg: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("stage `{stage}` failed{}", seed.map(|s| format!(" for seed {s}")).unwrap_or_default())]
    Stage {
        stage: &'static str,
        seed: Option<u64>,
        #[source]
        source: BoxError,
    },
    #[error("cannot write {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, PipelineError>;

fn stage<E: Into<BoxError>>(stage: &'static str, seed: Option<u64>) -> impl FnOnce(E) -> PipelineError {
    move |e| PipelineError::Stage {
        stage,
        seed,
        source: e.into(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Files { data: PathBuf, schema: PathBuf },
    Synth(SynthSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub source: DataSource,
    pub out: Option<PathBuf>,
    /// The seed field is replaced by one derived from the run seed.
    pub gen: GenTrainConfig,
    /// Generator form per label; `None` uses the defaults.
    pub forms: Option<Vec<GenForm>>,
    /// The seed field is replaced by one derived from the run seed.
    pub fit: FitConfig,
    /// Candidate per-cell counts; the one with the lowest validation IF_0.5 wins.
    pub n_per_cell: Vec<usize>,
    /// The seed field is replaced by one derived from the run seed.
    pub bootstrap: BootstrapConfig,
    pub alpha_grid: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Points per side for the diversity and distinguishability checks.
    pub quality_samples: usize,
    /// Axis order used by the sweep; identity when `None`.
    pub axis_order: Option<Vec<usize>>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synth(SynthSpec::default()),
            out: None,
            gen: GenTrainConfig::default(),
            forms: None,
            fit: FitConfig::default(),
            n_per_cell: Vec::new(),
            bootstrap: BootstrapConfig::default(),
            alpha_grid: fairness::default_alpha_grid(),
            seeds: vec![10, 20, 30, 40, 50],
            quality_samples: 1000,
            axis_order: None,
        }
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<Vec<T>, String> {
    v.split(',')
        .map(|s| s.trim().parse().map_err(|_| format!("invalid entry {s:?} in {key}")))
        .collect()
}

fn parse_one<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
    v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
}

impl PipelineConfig {
    /// Parses flat `key=value` text. Relative paths resolve against `base`.
    /// Unknown keys are rejected.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let entries = parse_kv(text).map_err(|line| PipelineError::Config {
            line,
            msg: "expected key=value".into(),
        })?;
        let mut cfg = Self::default();
        let mut synth_overrides = Vec::new();
        let mut synth_base: Option<SynthSpec> = None;
        let (mut data_path, mut schema_path) = (None, None);
        for e in entries {
            let err = |msg: String| PipelineError::Config { line: e.line, msg };
            let path = || base.join(&e.value);
            match e.key.as_str() {
                "data" => data_path = Some(path()),
                "schema" => schema_path = Some(path()),
                "synth_spec" => {
                    let text = std::fs::read_to_string(path())
                        .map_err(|io| err(format!("cannot read {}: {io}", e.value)))?;
                    synth_base = Some(SynthSpec::parse(&text).map_err(|s| err(s.to_string()))?);
                }
                key if key.starts_with("synth.") => {
                    synth_overrides.push((e.line, key["synth.".len()..].to_string(), e.value.clone()));
                }
                "out" => cfg.out = Some(path()),
                key => cfg.set(key, &e.value).map_err(err)?,
            }
        }
        cfg.source = match (data_path, schema_path) {
            (Some(data), Some(schema)) => {
                if synth_base.is_some() || !synth_overrides.is_empty() {
                    return Err(PipelineError::Invalid(
                        "give either data/schema files or a synthetic spec, not both".into(),
                    ));
                }
                DataSource::Files { data, schema }
            }
            (None, None) => {
                let mut spec = synth_base.unwrap_or_default();
                for (line, k, v) in synth_overrides {
                    spec.set(&k, &v).map_err(|msg| PipelineError::Config { line, msg })?;
                }
                spec.validate()
                    .map_err(|e| PipelineError::Invalid(e.to_string()))?;
                DataSource::Synth(spec)
            }
            _ => return Err(PipelineError::Invalid("data and schema must be given together".into())),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| PipelineError::Invalid(format!(
            "cannot read config {}: {e}",
            path.display()
        )))?;
        Self::parse(&text, path.parent().unwrap_or(Path::new(".")))
    }

    /// Sets one non-path key.
    pub fn set(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        match key {
            "seeds" => self.seeds = parse_list(key, v)?,
            "structure" => self.gen.structure = v.parse()?,
            "n_per_cell" => self.n_per_cell = parse_list(key, v)?,
            "alpha_grid" => self.alpha_grid = parse_list(key, v)?,
            "gen.iterations" => self.gen.iterations = parse_one(key, v)?,
            "gen.batch_size" => self.gen.batch_size = parse_one(key, v)?,
            "gen.learning_rate" => self.gen.learning_rate = parse_one(key, v)?,
            "gen.bandwidth" => {
                self.gen.bandwidth = match v {
                    "median" => Bandwidth::Median,
                    _ => Bandwidth::Fixed(parse_one(key, v)?),
                }
            }
            "gen.estimator" => {
                self.gen.estimator = match v {
                    "unbiased" => Estimator::Unbiased,
                    "literal" => Estimator::Literal,
                    _ => return Err(format!("unknown estimator {v:?} (unbiased, literal)")),
                }
            }
            "gen.forms" => {
                self.forms = match v {
                    "default" => None,
                    _ => Some(parse_list(key, v)?),
                }
            }
            "clf.epochs" => self.fit.epochs = parse_one(key, v)?,
            "clf.batch_size" => self.fit.batch_size = parse_one(key, v)?,
            "clf.learning_rate" => self.fit.adam.learning_rate = parse_one(key, v)?,
            "clf.patience" => self.fit.patience = parse_one(key, v)?,
            "bootstrap.resamples" => self.bootstrap.n_resamples = parse_one(key, v)?,
            "bootstrap.smoothing" => self.bootstrap.smoothing = parse_one(key, v)?,
            "fpr_mode" => self.bootstrap.mode = v.parse()?,
            "quality.samples" => self.quality_samples = parse_one(key, v)?,
            "sweep.axis_order" => self.axis_order = Some(parse_list(key, v)?),
            _ => return Err(format!("unknown key {key}")),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(PipelineError::Invalid(m.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.n_per_cell.is_empty() || self.n_per_cell.contains(&0) {
            return bad("n_per_cell must be set to one or more positive counts");
        }
        if self.alpha_grid.is_empty() || self.alpha_grid.iter().any(|a| !(0.0..=1.0).contains(a)) {
            return bad("alpha_grid entries must lie in [0, 1]");
        }
        if self.fit.epochs == 0 || self.fit.batch_size == 0 {
            return bad("clf.epochs and clf.batch_size must be at least 1");
        }
        if self.gen.iterations == 0 || self.gen.batch_size < 2 {
            return bad("gen.iterations must be >= 1 and gen.batch_size >= 2");
        }
        if self.bootstrap.n_resamples == 0 || self.bootstrap.smoothing < 0.0 {
            return bad("bootstrap.resamples must be >= 1 and bootstrap.smoothing >= 0");
        }
        if self.quality_samples < evaluation::MIN_PROBE_SIDE {
            return bad("quality.samples must be at least 10");
        }
        Ok(())
    }

    /// Fully resolved configuration in the input format.
    pub fn render(&self) -> String {
        let mut s = String::from("# resolved configuration\n");
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(s, "{k}={v}");
        };
        match &self.source {
            DataSource::Files { data, schema } => {
                kv("data", data.display().to_string());
                kv("schema", schema.display().to_string());
            }
            DataSource::Synth(spec) => {
                for line in spec.render().lines().filter(|l| !l.starts_with('#')) {
                    let (k, v) = line.split_once('=').expect("spec renders key=value");
                    kv(&format!("synth.{k}"), v.to_string());
                }
            }
        }
        if let Some(out) = &self.out {
            kv("out", out.display().to_string());
        }
        let join = |v: Vec<String>| v.join(",");
        kv("seeds", join(self.seeds.iter().map(u64::to_string).collect()));
        kv("structure", self.gen.structure.to_string());
        kv("n_per_cell", join(self.n_per_cell.iter().map(usize::to_string).collect()));
        kv("alpha_grid", join(self.alpha_grid.iter().map(|&a| fmt_sig9(a)).collect()));
        kv("gen.iterations", self.gen.iterations.to_string());
        kv("gen.batch_size", self.gen.batch_size.to_string());
        kv("gen.learning_rate", fmt_sig9(self.gen.learning_rate));
        kv(
            "gen.bandwidth",
            match self.gen.bandwidth {
                Bandwidth::Median => "median".into(),
                Bandwidth::Fixed(s) => fmt_sig9(s),
            },
        );
        kv(
            "gen.estimator",
            match self.gen.estimator {
                Estimator::Unbiased => "unbiased".into(),
                Estimator::Literal => "literal".into(),
            },
        );
        kv(
            "gen.forms",
            match &self.forms {
                None => "default".into(),
                Some(f) => join(f.iter().map(|f| f.name().to_string()).collect()),
            },
        );
        kv("clf.epochs", self.fit.epochs.to_string());
        kv("clf.batch_size", self.fit.batch_size.to_string());
        kv("clf.learning_rate", fmt_sig9(self.fit.adam.learning_rate));
        kv("clf.patience", self.fit.patience.to_string());
        kv("bootstrap.resamples", self.bootstrap.n_resamples.to_string());
        kv("bootstrap.smoothing", fmt_sig9(self.bootstrap.smoothing));
        kv("fpr_mode", self.bootstrap.mode.name().to_string());
        kv("quality.samples", self.quality_samples.to_string());
        if let Some(order) = &self.axis_order {
            kv("sweep.axis_order", join(order.iter().map(usize::to_string).collect()));
        }
        s
    }

    pub fn load_data(&self) -> Result<Dataset> {
        match &self.source {
            DataSource::Files { data, schema } => {
                data::load_dataset(data, schema).map_err(stage("load data", None))
            }
            DataSource::Synth(spec) => synth::synth_dataset(spec).map_err(stage("synthesize data", None)),
        }
    }

    fn forms_for(&self, num_labels: usize) -> Result<Vec<GenForm>> {
        match &self.forms {
            None => Ok(GenForm::default_forms(num_labels)),
            Some(f) if f.len() == num_labels => Ok(f.clone()),
            Some(f) => Err(PipelineError::Invalid(format!(
                "gen.forms lists {} forms for {num_labels} labels",
                f.len()
            ))),
        }
    }
}

/// Train, validation and test portions of one run.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
}

/// Stratified split: per `(group, label)` cell, 20% goes to test and 20% of
/// the remainder to validation (rounded to the nearest record).
pub fn split_dataset(ds: &Dataset, seed: u64) -> Split {
    let mut rng = rng_from_seed(seed);
    let (mut train, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for cell in ds.cells().values() {
        let mut pos = cell.clone();
        pos.shuffle(&mut rng);
        let n_test = (pos.len() as f64 * 0.2).round() as usize;
        let n_valid = ((pos.len() - n_test) as f64 * 0.2).round() as usize;
        test.extend_from_slice(&pos[..n_test]);
        valid.extend_from_slice(&pos[n_test..n_test + n_valid]);
        train.extend_from_slice(&pos[n_test + n_valid..]);
    }
    for v in [&mut train, &mut valid, &mut test] {
        v.sort_unstable();
    }
    Split {
        train: ds.subset(&train),
        valid: ds.subset(&valid),
        test: ds.subset(&test),
    }
}

/// Stratified two-way split holding out 20% of every cell.
pub fn holdout_split(ds: &Dataset, seed: u64) -> (Dataset, Dataset) {
    let mut rng = rng_from_seed(seed);
    let (mut keep, mut held) = (Vec::new(), Vec::new());
    for cell in ds.cells().values() {
        let mut pos = cell.clone();
        pos.shuffle(&mut rng);
        let n = (pos.len() as f64 * 0.2).round() as usize;
        held.extend_from_slice(&pos[..n]);
        keep.extend_from_slice(&pos[n..]);
    }
    keep.sort_unstable();
    held.sort_unstable();
    (ds.subset(&keep), ds.subset(&held))
}

// Tags for seeds derived from the run seed.
const TAG_SPLIT: u64 = 1;
const TAG_GEN: u64 = 2;
const TAG_AUG: u64 = 3;
const TAG_EQUAL: u64 = 4;
const TAG_INIT: u64 = 5;
const TAG_FIT: u64 = 6;
const TAG_BOOT: u64 = 7;
const TAG_QUALITY: u64 = 8;
const TAG_PROBE: u64 = 9;

/// A trained classifier with how it was chosen.
#[derive(Debug, Clone)]
pub struct MethodResult {
    pub n_per_cell: usize,
    pub valid_if05: f64,
    pub report: FairnessReport,
    pub model: MlpModel,
}

#[derive(Debug, Clone)]
pub struct SeedResult {
    pub seed: u64,
    pub augmented: MethodResult,
    pub unconstrained: MethodResult,
    pub diversity: DiversityReport,
    pub distinguishability: DistinguishabilityReport,
    pub suite: GeneratorSuite,
    pub loss_trace: Vec<Vec<f64>>,
}

impl SeedResult {
    /// Metric records of this run in a fixed order.
    pub fn records(&self) -> Vec<(String, f64, f64)> {
        let mut out = Vec::new();
        for (name, m) in [("unconstrained", &self.unconstrained), ("augmented", &self.augmented)] {
            out.push((format!("{name}.n_per_cell"), m.n_per_cell as f64, 0.0));
            out.push((format!("{name}.valid_if_alpha_0.5"), m.valid_if05, 0.0));
            out.extend(m.report.records().into_iter().map(|(k, a, b)| (format!("{name}.{k}"), a, b)));
        }
        out.extend(self.diversity.records());
        out.extend(self.distinguishability.records());
        out
    }
}

fn train_classifier(
    train: &Dataset,
    valid: &Dataset,
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<MlpModel> {
    let model = MlpModel::init(train.feature_dim(), train.num_labels(), derive_seed(seed, TAG_INIT))
        .map_err(stage("classifier init", Some(seed)))?;
    let fit_cfg = FitConfig {
        seed: derive_seed(seed, TAG_FIT),
        ..cfg.fit.clone()
    };
    classifier::fit(model, train, valid, &fit_cfg)
        .map(|(m, _)| m)
        .map_err(stage("classifier training", Some(seed)))
}

fn validation_if05(model: &MlpModel, valid: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<f64> {
    let point = fairness::point_estimate(valid, model, cfg.bootstrap.smoothing, cfg.bootstrap.mode, &[0.5])
        .map_err(stage("validation metrics", Some(seed)))?;
    Ok(point.if_at(0.5).expect("grid holds 0.5"))
}

/// Trains one classifier per candidate count and keeps the one with the
/// lowest validation IF_0.5 (first wins ties).
fn select_candidate(
    cfg: &PipelineConfig,
    seed: u64,
    valid: &Dataset,
    mut build_train: impl FnMut(usize) -> Result<Dataset>,
) -> Result<(usize, f64, MlpModel)> {
    let mut best: Option<(usize, f64, MlpModel)> = None;
    for &n in &cfg.n_per_cell {
        let train = build_train(n)?;
        let model = train_classifier(&train, valid, cfg, seed)?;
        let v = validation_if05(&model, valid, cfg, seed)?;
        log::debug!("seed {seed}: n_per_cell={n} validation IF_0.5={v}");
        if best.as_ref().is_none_or(|(_, b, _)| v < *b) {
            best = Some((n, v, model));
        }
    }
    Ok(best.expect("n_per_cell is nonempty"))
}

fn bootstrap(model: &MlpModel, test: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<FairnessReport> {
    let bcfg = BootstrapConfig {
        seed: derive_seed(seed, TAG_BOOT),
        ..cfg.bootstrap
    };
    fairness::bootstrap_estimate(test, model, &bcfg, &cfg.alpha_grid).map_err(stage("bootstrap", Some(seed)))
}

/// Real and generated samples of equal size and equal cell composition.
fn quality_samples(
    train: &Dataset,
    suite: &GeneratorSuite,
    n: usize,
    seed: u64,
) -> Result<(ndarray::Array2<f64>, ndarray::Array2<f64>)> {
    let mut rng = rng_from_seed(derive_seed(seed, TAG_QUALITY));
    let all: Vec<usize> = (0..train.len()).collect();
    let real_pos = evaluation::sample_side(&all, n, &mut rng);
    let real = train.feature_matrix(&real_pos);
    let mut wanted: BTreeMap<(data::GroupId, usize), usize> = BTreeMap::new();
    for p in evaluation::sample_side(&all, n, &mut rng) {
        let r = &train.records()[p];
        *wanted.entry((r.group.clone(), r.label)).or_default() += 1;
    }
    let mut rows = Vec::new();
    for ((g, k), count) in wanted {
        if let Some(batch) = suite
            .generate_for(train, &g, k, count, &mut rng)
            .map_err(stage("quality sampling", Some(seed)))?
        {
            rows.extend(batch.rows().into_iter().map(|r| r.to_owned()));
        }
    }
    let views: Vec<_> = rows.iter().map(|r| r.view().insert_axis(ndarray::Axis(0))).collect();
    let gen = ndarray::concatenate(ndarray::Axis(0), &views).map_err(stage("quality sampling", Some(seed)))?;
    Ok((real, gen))
}

/// One full run for one seed on an already loaded dataset.
pub fn run_seed(ds: &Dataset, cfg: &PipelineConfig, seed: u64) -> Result<SeedResult> {
    let forms = cfg.forms_for(ds.num_labels())?;
    let split = split_dataset(ds, derive_seed(seed, TAG_SPLIT));
    log::info!(
        "seed {seed}: train {} / valid {} / test {}",
        split.train.len(),
        split.valid.len(),
        split.test.len()
    );

    let gen_cfg = GenTrainConfig {
        seed: derive_seed(seed, TAG_GEN),
        ..cfg.gen.clone()
    };
    let outcome = generator::train_generators(&split.train, &gen_cfg, &forms)
        .map_err(stage("generator training", Some(seed)))?;
    let suite = outcome.suite;

    let (n_aug, v_aug, m_aug) = select_candidate(cfg, seed, &split.valid, |n| {
        let mut rng = rng_from_seed(derive_seed(derive_seed(seed, TAG_AUG), n as u64));
        let aug = generator::augment(&split.train, &suite, n, &mut rng)
            .map_err(stage("augmentation", Some(seed)))?;
        data::equal_sample(&aug, n, &mut rng).map_err(stage("equal sampling", Some(seed)))
    })?;
    let (n_unc, v_unc, m_unc) = select_candidate(cfg, seed, &split.valid, |n| {
        let mut rng = rng_from_seed(derive_seed(derive_seed(seed, TAG_EQUAL), n as u64));
        data::equal_sample(&split.train, n, &mut rng).map_err(stage("equal sampling", Some(seed)))
    })?;

    let rep_aug = bootstrap(&m_aug, &split.test, cfg, seed)?;
    let rep_unc = bootstrap(&m_unc, &split.test, cfg, seed)?;

    let (real, gen) = quality_samples(&split.train, &suite, cfg.quality_samples, seed)?;
    let diversity =
        evaluation::diversity_report(real.view(), gen.view()).map_err(stage("diversity", Some(seed)))?;
    let distinguishability = evaluation::distinguishability(real.view(), gen.view(), derive_seed(seed, TAG_PROBE))
        .map_err(stage("distinguishability", Some(seed)))?;

    Ok(SeedResult {
        seed,
        augmented: MethodResult {
            n_per_cell: n_aug,
            valid_if05: v_aug,
            report: rep_aug,
            model: m_aug,
        },
        unconstrained: MethodResult {
            n_per_cell: n_unc,
            valid_if05: v_unc,
            report: rep_unc,
            model: m_unc,
        },
        diversity,
        distinguishability,
        suite,
        loss_trace: outcome.loss_trace,
    })
}

/// Mean and standard deviation across runs of every per-run mean.
pub fn aggregate(results: &[SeedResult]) -> Vec<(String, f64, f64)> {
    let mut order = Vec::new();
    let mut values: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for r in results {
        for (name, mean, _) in r.records() {
            let slot = values.entry(name.clone()).or_insert_with(|| {
                order.push(name);
                Vec::new()
            });
            slot.push(mean);
        }
    }
    order
        .into_iter()
        .map(|name| {
            let (m, s) = mean_std(&values[&name]);
            (name, m, s)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PipelineSummary {
    pub seeds: Vec<SeedResult>,
    pub aggregate: Vec<(String, f64, f64)>,
}

impl PipelineSummary {
    pub fn metric(&self, name: &str) -> Option<(f64, f64)> {
        self.aggregate
            .iter()
            .find(|(n, _, _)| n == name)
            .map(|&(_, m, s)| (m, s))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|source| PipelineError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| PipelineError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn stat_cell(s: Stat) -> String {
    format!("{} ± {}", fmt_sig9(s.mean), fmt_sig9(s.std))
}

fn method_table(rows: &[(&str, &FairnessReport)]) -> String {
    let mut s = format!(
        "{:<14} {:>26} {:>26} {:>26} {:>26} {:>26}\n",
        "method", "BA", "best off FPR", "worst off FPR", "DF", "IF_0.5"
    );
    for (name, r) in rows {
        let if05 = r.if_at(0.5).map_or("-".into(), stat_cell);
        let _ = writeln!(
            s,
            "{:<14} {:>26} {:>26} {:>26} {:>26} {:>26}",
            name,
            stat_cell(r.balanced_accuracy),
            stat_cell(r.best_off),
            stat_cell(r.worst_off),
            stat_cell(r.df),
            if05
        );
    }
    s
}

fn render_seed_report(r: &SeedResult) -> String {
    let mut s = format!("seed {}\n\n", r.seed);
    s.push_str(&method_table(&[
        ("Unconstrained", &r.unconstrained.report),
        ("Augmented", &r.augmented.report),
    ]));
    let _ = writeln!(
        s,
        "\nselected n_per_cell: Unconstrained {} (validation IF_0.5 {}), Augmented {} (validation IF_0.5 {})\n",
        r.unconstrained.n_per_cell,
        fmt_sig9(r.unconstrained.valid_if05),
        r.augmented.n_per_cell,
        fmt_sig9(r.augmented.valid_if05)
    );
    s.push_str(&evaluation::render_quality(&r.diversity, &r.distinguishability));
    s.push_str("\nUnconstrained bootstrap detail\n");
    s.push_str(&r.unconstrained.report.render_table());
    s.push_str("\nAugmented bootstrap detail\n");
    s.push_str(&r.augmented.report.render_table());
    s
}

fn render_curves(unc: &[(f64, f64)], aug: &[(f64, f64)]) -> String {
    let mut s = String::from("# alpha\tunconstrained\taugmented\n");
    for ((a, u), (_, g)) in unc.iter().zip(aug) {
        let _ = writeln!(s, "{}\t{}\t{}", fmt_sig9(*a), fmt_sig9(*u), fmt_sig9(*g));
    }
    s
}

fn render_loss_trace(trace: &[Vec<f64>]) -> String {
    let mut s = String::from("# iteration");
    for k in 0..trace.len() {
        let _ = write!(s, "\tlabel_{k}");
    }
    s.push('\n');
    let len = trace.iter().map(Vec::len).max().unwrap_or(0);
    for i in 0..len {
        let _ = write!(s, "{i}");
        for t in trace {
            let _ = write!(s, "\t{}", t.get(i).map_or("-".into(), |&v| fmt_sig9(v)));
        }
        s.push('\n');
    }
    s
}

fn write_seed_outputs(dir: &Path, r: &SeedResult) -> Result<()> {
    write(&dir.join("metrics.tsv"), &fairness::render_records("", &r.records()))?;
    write(&dir.join("report.txt"), &render_seed_report(r))?;
    write(
        &dir.join("curves.tsv"),
        &render_curves(&r.unconstrained.report.curve(), &r.augmented.report.curve()),
    )?;
    write(&dir.join("generators.txt"), &r.suite.render())?;
    write(&dir.join("gen_loss.tsv"), &render_loss_trace(&r.loss_trace))
}

fn mean_curve(results: &[SeedResult], pick: impl Fn(&SeedResult) -> &FairnessReport) -> Vec<(f64, f64)> {
    let Some(first) = results.first() else {
        return Vec::new();
    };
    let grid: Vec<f64> = pick(first).if_alpha.iter().map(|(a, _)| *a).collect();
    grid.iter()
        .enumerate()
        .map(|(i, &a)| {
            let vals: Vec<f64> = results.iter().map(|r| pick(r).if_alpha[i].1.mean).collect();
            (a, mean_std(&vals).0)
        })
        .collect()
}

fn render_summary(cfg: &PipelineConfig, summary: &PipelineSummary) -> String {
    let mut s = format!(
        "runs: {} (seeds {})\nstructure: {}\n\n",
        summary.seeds.len(),
        cfg.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
        cfg.gen.structure
    );
    let _ = writeln!(s, "{:<44} {:>16} {:>16}", "metric", "mean", "stddev");
    for (name, m, sd) in &summary.aggregate {
        if name.contains("fpr[") {
            continue;
        }
        let _ = writeln!(s, "{:<44} {:>16} {:>16}", name, fmt_sig9(*m), fmt_sig9(*sd));
    }
    s
}

/// Runs every seed (in parallel) on `ds` and, when `out` is set, writes
/// per-seed and aggregate outputs.
pub fn run_on(ds: &Dataset, cfg: &PipelineConfig, out: Option<&Path>) -> Result<PipelineSummary> {
    cfg.validate()?;
    let results: Vec<Result<SeedResult>> = std::thread::scope(|scope| {
        let handles: Vec<_> = cfg
            .seeds
            .iter()
            .map(|&seed| {
                scope.spawn(move || {
                    let r = run_seed(ds, cfg, seed)?;
                    if let Some(dir) = out {
                        write_seed_outputs(&dir.join(format!("seed_{seed}")), &r)?;
                    }
                    Ok(r)
                })
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("seed worker panicked"))
            .collect()
    });
    let seeds = results.into_iter().collect::<Result<Vec<_>>>()?;
    let summary = PipelineSummary {
        aggregate: aggregate(&seeds),
        seeds,
    };
    if let Some(dir) = out {
        write(&dir.join("config.txt"), &cfg.render())?;
        write(&dir.join("metrics.tsv"), &fairness::render_records("", &summary.aggregate))?;
        write(&dir.join("report.txt"), &render_summary(cfg, &summary))?;
        write(
            &dir.join("curves.tsv"),
            &render_curves(
                &mean_curve(&summary.seeds, |r| &r.unconstrained.report),
                &mean_curve(&summary.seeds, |r| &r.augmented.report),
            ),
        )?;
    }
    Ok(summary)
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineSummary> {
    let ds = cfg.load_data()?;
    run_on(&ds, cfg, cfg.out.as_deref())
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub q: usize,
    pub group_count: usize,
    pub unconstrained_worst_off: f64,
    pub augmented_worst_off: f64,
    pub unconstrained_if05: f64,
    pub augmented_if05: f64,
}

fn seed_mean(s: &PipelineSummary, name: &str) -> f64 {
    s.metric(name).map_or(f64::NAN, |(m, _)| m)
}

/// Runs the pipeline on the first `q` axes of `axis_order` for q = 1..p.
pub fn axes_sweep(cfg: &PipelineConfig, axis_order: &[usize]) -> Result<Vec<SweepPoint>> {
    let ds = cfg.load_data()?;
    let p = ds.schema().p();
    if p < 2 {
        return Err(PipelineError::Invalid("the sweep needs at least 2 axes".into()));
    }
    let mut sorted = axis_order.to_vec();
    sorted.sort_unstable();
    if sorted != (0..p).collect::<Vec<_>>() {
        return Err(PipelineError::Invalid(format!(
            "axis order must be a permutation of 0..{p}"
        )));
    }
    let mut points = Vec::with_capacity(p);
    for q in 1..=p {
        let sub = data::restrict_axes(&ds, &axis_order[..q]).map_err(stage("restrict axes", None))?;
        let out = cfg.out.as_ref().map(|o| o.join("sweep").join(format!("q{q}")));
        let summary = run_on(&sub, cfg, out.as_deref())?;
        points.push(SweepPoint {
            q,
            group_count: sub.schema().group_count(),
            unconstrained_worst_off: seed_mean(&summary, "unconstrained.worst_off_fpr"),
            augmented_worst_off: seed_mean(&summary, "augmented.worst_off_fpr"),
            unconstrained_if05: seed_mean(&summary, "unconstrained.if_alpha_0.5"),
            augmented_if05: seed_mean(&summary, "augmented.if_alpha_0.5"),
        });
    }
    if let Some(o) = &cfg.out {
        write(&o.join("sweep").join("sweep.tsv"), &render_sweep(&points))?;
    }
    Ok(points)
}

pub fn render_sweep(points: &[SweepPoint]) -> String {
    let mut s = String::from(
        "# axes\tgroups\tunconstrained_worst_off\taugmented_worst_off\tunconstrained_if_0.5\taugmented_if_0.5\n",
    );
    for p in points {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}\t{}",
            p.q,
            p.group_count,
            fmt_sig9(p.unconstrained_worst_off),
            fmt_sig9(p.augmented_worst_off),
            fmt_sig9(p.unconstrained_if05),
            fmt_sig9(p.augmented_if05)
        );
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub method: String,
    pub ba: Stat,
    pub if05: Stat,
    /// Per-seed bootstrap means, in seed order.
    pub per_seed_ba: Vec<f64>,
    pub per_seed_if05: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    /// Unconstrained first, then one row per structure.
    pub rows: Vec<ComparisonRow>,
    /// Whether every structure run produced the same Unconstrained results.
    pub unconstrained_identical: bool,
}

fn comparison_row(method: &str, results: &[SeedResult], pick: impl Fn(&SeedResult) -> &FairnessReport) -> ComparisonRow {
    let per_seed_ba: Vec<f64> = results.iter().map(|r| pick(r).balanced_accuracy.mean).collect();
    let per_seed_if05: Vec<f64> = results
        .iter()
        .map(|r| pick(r).if_at(0.5).map_or(f64::NAN, |s| s.mean))
        .collect();
    ComparisonRow {
        method: method.to_string(),
        ba: Stat::of(&per_seed_ba),
        if05: Stat::of(&per_seed_if05),
        per_seed_ba,
        per_seed_if05,
    }
}

/// A comparison table with the full run behind each structure row.
#[derive(Debug, Clone)]
pub struct Comparison {
    pub table: ComparisonTable,
    pub runs: Vec<(Structure, PipelineSummary)>,
}

/// Runs the three generator structures under the same seeds and reports
/// balanced accuracy and IF_0.5 next to the Unconstrained baseline.
pub fn compare_structures(cfg: &PipelineConfig) -> Result<Comparison> {
    let ds = cfg.load_data()?;
    if !ds.schema().is_binary() {
        return Err(PipelineError::Invalid(
            "structure comparison includes the adversarial structure, which needs binary axes".into(),
        ));
    }
    let mut rows = Vec::new();
    let mut unconstrained: Vec<ComparisonRow> = Vec::new();
    let mut runs = Vec::new();
    for s in Structure::ALL {
        let mut c = cfg.clone();
        c.gen.structure = s;
        let out = cfg.out.as_ref().map(|o| o.join("compare").join(s.name()));
        let summary = run_on(&ds, &c, out.as_deref())?;
        unconstrained.push(comparison_row("Unconstrained", &summary.seeds, |r| &r.unconstrained.report));
        rows.push(comparison_row(s.name(), &summary.seeds, |r| &r.augmented.report));
        runs.push((s, summary));
    }
    let unconstrained_identical = unconstrained.windows(2).all(|w| w[0] == w[1]);
    rows.insert(0, unconstrained.swap_remove(0));
    let table = ComparisonTable {
        rows,
        unconstrained_identical,
    };
    if let Some(o) = &cfg.out {
        write(&o.join("compare").join("comparison.tsv"), &render_comparison(&table))?;
    }
    Ok(Comparison { table, runs })
}

pub fn render_comparison(t: &ComparisonTable) -> String {
    let mut s = String::from("# method\tba_mean\tba_std\tif_0.5_mean\tif_0.5_std\n");
    for r in &t.rows {
        let _ = writeln!(
            s,
            "{}\t{}\t{}\t{}\t{}",
            r.method,
            fmt_sig9(r.ba.mean),
            fmt_sig9(r.ba.std),
            fmt_sig9(r.if05.mean),
            fmt_sig9(r.if05.std)
        );
    }
    s
}
