//! Generative functions that synthesize examples for a group by combining
//! draws from other lattice nodes, their MMD training loss, the training loop
//! and augmentation.
//!
//! Two parameterizations are supported, both shared across all groups of a
//! label:
//!
//! * [`GenForm::Lambda`]: `x = sum_i lambda_i * x_i`, one weight per source.
//! * [`GenForm::Diag`]: `x = W (sum_i x_i)` with a diagonal `W`, one weight
//!   per feature.
//!
//! The sources `x_i` for a target group `g` are index-aligned draws (the
//! `j`-th output combines the `j`-th draw of every source) from the nodes
//! chosen by the [`Structure`]: the parents of `g`, the parents of its
//! complement `not g`, or its grandparents.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use ndarray::{Array1, Array2, ArrayView2};
use rand::Rng as _;
use thiserror::Error;

use crate::data::{
    self, adversarial_group, grandparent_groups, AxisSchema, DataError, Dataset, GroupId,
    GroupPredicate, Record,
};
use crate::mmd::{self, cross_term, median_heuristic, within_term, Estimator, MmdConfig, MmdError};
use crate::optim::{Adam, AdamConfig};
use crate::util::{derive_seed, fmt_sig9, rng_from_seed, Rng};

#[derive(Debug, Error)]
pub enum GenError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Mmd(#[from] MmdError),
    #[error("expected {expected} source batches, got {found}")]
    SourceCount { expected: usize, found: usize },
    #[error("source batches must share one shape")]
    BatchShape,
    #[error("parameter vector has length {found}, expected {expected}")]
    ParamLength { expected: usize, found: usize },
    #[error("iterations must be >= 1 and batch size >= 2")]
    BadConfig,
    #[error("learning rate must be positive and finite")]
    BadLearningRate,
    #[error("label {0} has no group with nonempty target and source cells")]
    NoEligibleGroup(usize),
    #[error("non-finite generator loss for label {label} at iteration {iteration}")]
    NonFiniteLoss { label: usize, iteration: usize },
    #[error("suite has {found} labels, dataset has {expected}")]
    LabelCount { expected: usize, found: usize },
    #[error("suite was trained for a different schema")]
    SchemaMismatch,
    #[error("suite file, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("cannot read or write {path}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, GenError>;

/// Which lattice nodes feed the generator of a target group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub enum Structure {
    /// Immediate parents of the target group.
    #[default]
    Hierarchical,
    /// Parents of the axiswise complement; binary axes only.
    Alternate,
    /// Parents of parents of the target group.
    Abstract,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::Hierarchical, Structure::Alternate, Structure::Abstract];

    pub fn name(self) -> &'static str {
        match self {
            Structure::Hierarchical => "hierarchical",
            Structure::Alternate => "alternate",
            Structure::Abstract => "abstract",
        }
    }

    /// Source predicates for target `g`, in a fixed order.
    pub fn sources(self, schema: &AxisSchema, g: &GroupId) -> Result<Vec<GroupPredicate>> {
        Ok(match self {
            Structure::Hierarchical => g.parents().iter().map(GroupPredicate::from).collect(),
            Structure::Alternate => adversarial_group(schema, g)?
                .parents()
                .iter()
                .map(GroupPredicate::from)
                .collect(),
            Structure::Abstract => grandparent_groups(g)?,
        })
    }

    /// Number of sources per target under this structure.
    pub fn source_count(self, schema: &AxisSchema) -> Result<usize> {
        let probe = GroupId(vec![0; schema.p()]);
        Ok(self.sources(schema, &probe)?.len())
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "hierarchical" => Ok(Structure::Hierarchical),
            "alternate" => Ok(Structure::Alternate),
            "abstract" => Ok(Structure::Abstract),
            _ => Err(format!("unknown structure {s:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GenForm {
    Lambda,
    Diag,
}

impl GenForm {
    pub fn name(self) -> &'static str {
        match self {
            GenForm::Lambda => "lambda",
            GenForm::Diag => "diag",
        }
    }

    /// Diagonal form for the negative class (label 0), weighted-combination
    /// form for every other label.
    pub fn default_forms(num_labels: usize) -> Vec<GenForm> {
        (0..num_labels)
            .map(|k| if k == 0 { GenForm::Diag } else { GenForm::Lambda })
            .collect()
    }
}

impl FromStr for GenForm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "lambda" => Ok(GenForm::Lambda),
            "diag" => Ok(GenForm::Diag),
            _ => Err(format!("unknown generator form {s:?}")),
        }
    }
}

/// Parameters of one label's generator.
#[derive(Debug, Clone, PartialEq)]
pub enum GenParams {
    /// One weight per source.
    Lambda(Array1<f64>),
    /// Diagonal of `W`, one weight per feature.
    Diag(Array1<f64>),
}

impl GenParams {
    /// Uniform initialization: every weight `1 / n_sources`, so the initial
    /// generator outputs plain source averages.
    pub fn init(form: GenForm, n_sources: usize, feature_dim: usize) -> Self {
        let w = 1.0 / n_sources as f64;
        match form {
            GenForm::Lambda => GenParams::Lambda(Array1::from_elem(n_sources, w)),
            GenForm::Diag => GenParams::Diag(Array1::from_elem(feature_dim, w)),
        }
    }

    pub fn form(&self) -> GenForm {
        match self {
            GenParams::Lambda(_) => GenForm::Lambda,
            GenParams::Diag(_) => GenForm::Diag,
        }
    }

    pub fn values(&self) -> &Array1<f64> {
        match self {
            GenParams::Lambda(v) | GenParams::Diag(v) => v,
        }
    }

    fn values_mut(&mut self) -> &mut Array1<f64> {
        match self {
            GenParams::Lambda(v) | GenParams::Diag(v) => v,
        }
    }

    pub fn generate(&self, sources: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
        match self {
            GenParams::Lambda(l) => generate_simple(l.as_slice().expect("contiguous"), sources),
            GenParams::Diag(w) => generate_diag(w.as_slice().expect("contiguous"), sources),
        }
    }

    /// Chain rule from `dL/d(output)` to `dL/d(params)`.
    fn backprop(&self, sources: &[ArrayView2<f64>], out_grad: &Array2<f64>) -> Array1<f64> {
        match self {
            GenParams::Lambda(_) => sources.iter().map(|s| (s * out_grad).sum()).collect(),
            GenParams::Diag(_) => {
                let mut sum = sources[0].to_owned();
                for s in &sources[1..] {
                    sum += s;
                }
                (&sum * out_grad).sum_axis(ndarray::Axis(0))
            }
        }
    }
}

fn check_sources(sources: &[ArrayView2<f64>]) -> Result<(usize, usize)> {
    let first = sources.first().ok_or(GenError::SourceCount {
        expected: 1,
        found: 0,
    })?;
    let shape = first.dim();
    if sources.iter().any(|s| s.dim() != shape) {
        return Err(GenError::BatchShape);
    }
    Ok(shape)
}

/// `out[j] = sum_i lambda_i * sources[i][j]`.
pub fn generate_simple(lambda: &[f64], sources: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
    if lambda.len() != sources.len() {
        return Err(GenError::SourceCount {
            expected: lambda.len(),
            found: sources.len(),
        });
    }
    let shape = check_sources(sources)?;
    let mut out = Array2::zeros(shape);
    for (&l, s) in lambda.iter().zip(sources) {
        out.scaled_add(l, s);
    }
    Ok(out)
}

/// `out[j] = w * (sum_i sources[i][j])`, elementwise in `w`.
pub fn generate_diag(w: &[f64], sources: &[ArrayView2<f64>]) -> Result<Array2<f64>> {
    let (_, d) = check_sources(sources)?;
    if w.len() != d {
        return Err(GenError::ParamLength {
            expected: d,
            found: w.len(),
        });
    }
    let mut out = sources[0].to_owned();
    for s in &sources[1..] {
        out += s;
    }
    let w = ndarray::ArrayView1::from(w);
    out *= &w;
    Ok(out)
}

/// `MMD^2(gen, target) + sum_i MMD^2(gen, sources[i])`.
pub fn gen_loss(
    gen: ArrayView2<f64>,
    target: ArrayView2<f64>,
    sources: &[ArrayView2<f64>],
    cfg: &MmdConfig,
) -> Result<f64> {
    let mut total = mmd::mmd2(gen, target, cfg)?;
    for s in sources {
        total += mmd::mmd2(gen, *s, cfg)?;
    }
    Ok(total)
}

/// [`gen_loss`] for `gen = params.generate(inputs)` together with its
/// gradient with respect to the parameters.
pub fn gen_loss_and_grad(
    params: &GenParams,
    inputs: &[ArrayView2<f64>],
    target: ArrayView2<f64>,
    sources: &[ArrayView2<f64>],
    cfg: &MmdConfig,
) -> Result<(f64, Array1<f64>)> {
    let gen = params.generate(inputs)?;
    let (value, out_grad) = loss_and_output_grad(gen.view(), target, sources, cfg)?;
    Ok((value, params.backprop(inputs, &out_grad)))
}

/// Loss value and `dL/d(gen)`, sharing the generated sample's kernel sums
/// across all terms.
fn loss_and_output_grad(
    gen: ArrayView2<f64>,
    target: ArrayView2<f64>,
    sources: &[ArrayView2<f64>],
    cfg: &MmdConfig,
) -> Result<(f64, Array2<f64>)> {
    // argument validation through the public estimator
    let m = gen.nrows();
    for other in std::iter::once(&target).chain(sources) {
        if other.dim() != gen.dim() {
            if other.ncols() != gen.ncols() {
                return Err(MmdError::Dimension(gen.ncols(), other.ncols()).into());
            }
            return Err(MmdError::SizeMismatch(m, other.nrows()).into());
        }
    }
    if m < 2 {
        return Err(MmdError::TooFewPoints(m).into());
    }
    if !(cfg.sigma > 0.0 && cfg.sigma.is_finite()) {
        return Err(MmdError::BadSigma(cfg.sigma).into());
    }
    let cross_w = match cfg.estimator {
        Estimator::Unbiased => -2.0 / (m * m) as f64,
        Estimator::Literal => 1.0 / (m * m) as f64,
    };
    let gen = gen.as_standard_layout();
    let gen = gen.view();
    let terms = 1 + sources.len();
    let gg = within_term(&gen, cfg.sigma, true);
    let mut value = terms as f64 * gg.within;
    let mut grad = gg.within_grad.expect("requested");
    grad *= terms as f64;
    for other in std::iter::once(&target).chain(sources) {
        let o = other.as_standard_layout();
        let o = o.view();
        value += within_term(&o, cfg.sigma, false).within;
        let (c, cg) = cross_term(&gen, &o, cfg.sigma, true);
        value += cross_w * c;
        grad.scaled_add(cross_w, &cg.expect("requested"));
    }
    if !value.is_finite() || grad.iter().any(|v| !v.is_finite()) {
        return Err(MmdError::NonFinite.into());
    }
    Ok((value, grad))
}

/// How the kernel bandwidth is chosen for each training batch.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum Bandwidth {
    /// Median pairwise distance of the real (target and source) batches.
    #[default]
    Median,
    Fixed(f64),
}

impl Bandwidth {
    pub fn resolve(self, batches: &[ArrayView2<f64>]) -> f64 {
        match self {
            Bandwidth::Median => median_heuristic(batches),
            Bandwidth::Fixed(s) => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenTrainConfig {
    pub iterations: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub structure: Structure,
    pub bandwidth: Bandwidth,
    pub estimator: Estimator,
}

impl Default for GenTrainConfig {
    fn default() -> Self {
        Self {
            iterations: 1000,
            batch_size: 64,
            learning_rate: AdamConfig::default().learning_rate,
            seed: 0,
            structure: Structure::Hierarchical,
            bandwidth: Bandwidth::Median,
            estimator: Estimator::Unbiased,
        }
    }
}

/// One trained generator per label, shared by every group.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorSuite {
    pub structure: Structure,
    pub schema_hash: u64,
    /// Indexed by label.
    pub params: Vec<GenParams>,
}

/// A trained suite and the loss of every update, per label.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub suite: GeneratorSuite,
    pub loss_trace: Vec<Vec<f64>>,
}

/// Positions of a target cell and of each of its source cells.
pub(crate) type CellSources = (Vec<usize>, Vec<Vec<usize>>);

/// Target and source cell positions of every group, per label.
pub(crate) struct CellPlan {
    /// `[group][label] -> Some((target, sources))` when all cells are nonempty.
    pub cells: Vec<Vec<Option<CellSources>>>,
    pub groups: Vec<GroupId>,
}

impl CellPlan {
    pub fn build(ds: &Dataset, structure: Structure) -> Result<Self> {
        let groups = ds.schema().groups();
        let mut cells = Vec::with_capacity(groups.len());
        for g in &groups {
            let preds = structure.sources(ds.schema(), g)?;
            let mut per_label = Vec::with_capacity(ds.num_labels());
            for k in 0..ds.num_labels() {
                let target = ds.cell(g, k).to_vec();
                let sources: Vec<Vec<usize>> =
                    preds.iter().map(|p| ds.members(p, Some(k))).collect();
                let ok = !target.is_empty() && sources.iter().all(|s| !s.is_empty());
                per_label.push(ok.then_some((target, sources)));
            }
            cells.push(per_label);
        }
        Ok(Self { cells, groups })
    }

    fn eligible(&self, label: usize) -> Vec<usize> {
        (0..self.groups.len())
            .filter(|&gi| self.cells[gi][label].is_some())
            .collect()
    }
}

/// Draws `n` rows with replacement from each position list.
fn draw_batches(ds: &Dataset, lists: &[Vec<usize>], n: usize, rng: &mut Rng) -> Result<Vec<Array2<f64>>> {
    lists
        .iter()
        .map(|l| Ok(ds.feature_matrix(&data::sample_with_replacement(l, n, rng)?)))
        .collect()
}

/// Trains one generator per label with Adam on the MMD loss.
///
/// Each iteration draws one group uniformly among those eligible for every
/// label and updates every label's generator on it. If no group is eligible
/// for all labels at once, each label draws its own group instead.
pub fn train_generators(ds: &Dataset, cfg: &GenTrainConfig, forms: &[GenForm]) -> Result<TrainOutcome> {
    if cfg.iterations == 0 || cfg.batch_size < 2 {
        return Err(GenError::BadConfig);
    }
    if !(cfg.learning_rate > 0.0 && cfg.learning_rate.is_finite()) {
        return Err(GenError::BadLearningRate);
    }
    let k_count = ds.num_labels();
    if forms.len() != k_count {
        return Err(GenError::LabelCount {
            expected: k_count,
            found: forms.len(),
        });
    }
    let plan = CellPlan::build(ds, cfg.structure)?;
    let eligible: Vec<Vec<usize>> = (0..k_count).map(|k| plan.eligible(k)).collect();
    if let Some(k) = eligible.iter().position(Vec::is_empty) {
        return Err(GenError::NoEligibleGroup(k));
    }
    let shared: Vec<usize> = eligible[0]
        .iter()
        .copied()
        .filter(|gi| eligible.iter().all(|e| e.contains(gi)))
        .collect();
    if shared.is_empty() {
        log::warn!("no group is eligible for every label; sampling groups per label");
    }

    let n_src = cfg.structure.source_count(ds.schema())?;
    let mut params: Vec<GenParams> = forms
        .iter()
        .map(|&f| GenParams::init(f, n_src, ds.feature_dim()))
        .collect();
    let adam_cfg = AdamConfig {
        learning_rate: cfg.learning_rate,
        ..AdamConfig::default()
    };
    let mut optims: Vec<Adam> = params.iter().map(|p| Adam::new(p.values().len(), adam_cfg)).collect();
    let mut group_rng = rng_from_seed(derive_seed(cfg.seed, 0x6770));
    let mut label_rngs: Vec<Rng> = (0..k_count)
        .map(|k| rng_from_seed(derive_seed(cfg.seed, 0x1000 + k as u64)))
        .collect();
    let mut trace = vec![Vec::with_capacity(cfg.iterations); k_count];
    let b = cfg.batch_size;

    for iteration in 0..cfg.iterations {
        let shared_pick = (!shared.is_empty()).then(|| shared[group_rng.random_range(0..shared.len())]);
        for k in 0..k_count {
            let gi = match shared_pick {
                Some(gi) => gi,
                None => eligible[k][group_rng.random_range(0..eligible[k].len())],
            };
            let (target_pos, source_pos) = plan.cells[gi][k].as_ref().expect("eligible");
            let rng = &mut label_rngs[k];
            let target = ds.feature_matrix(&data::sample_with_replacement(target_pos, b, rng)?);
            let sources = draw_batches(ds, source_pos, b, rng)?;
            let inputs = draw_batches(ds, source_pos, b, rng)?;
            let real: Vec<ArrayView2<f64>> =
                std::iter::once(target.view()).chain(sources.iter().map(|s| s.view())).collect();
            let mmd_cfg = MmdConfig {
                sigma: cfg.bandwidth.resolve(&real),
                estimator: cfg.estimator,
            };
            let input_views: Vec<ArrayView2<f64>> = inputs.iter().map(|s| s.view()).collect();
            let source_views = &real[1..];
            let (loss, grad) =
                match gen_loss_and_grad(&params[k], &input_views, target.view(), source_views, &mmd_cfg) {
                    Ok(v) => v,
                    Err(GenError::Mmd(MmdError::NonFinite)) => {
                        return Err(GenError::NonFiniteLoss { label: k, iteration })
                    }
                    Err(e) => return Err(e),
                };
            if !loss.is_finite() {
                return Err(GenError::NonFiniteLoss { label: k, iteration });
            }
            trace[k].push(loss);
            let values = params[k].values_mut();
            optims[k].step(
                values.as_slice_mut().expect("contiguous"),
                grad.as_slice().expect("contiguous"),
            );
            if values.iter().any(|v| !v.is_finite()) {
                return Err(GenError::NonFiniteLoss { label: k, iteration });
            }
        }
    }
    Ok(TrainOutcome {
        suite: GeneratorSuite {
            structure: cfg.structure,
            schema_hash: ds.schema().fingerprint(),
            params,
        },
        loss_trace: trace,
    })
}

impl GeneratorSuite {
    fn check(&self, ds: &Dataset) -> Result<()> {
        if self.params.len() != ds.num_labels() {
            return Err(GenError::LabelCount {
                expected: ds.num_labels(),
                found: self.params.len(),
            });
        }
        if self.schema_hash != ds.schema().fingerprint() {
            return Err(GenError::SchemaMismatch);
        }
        Ok(())
    }

    /// Generates `n` feature vectors for cell `(g, label)`, or `None` when
    /// one of the required source cells is empty.
    pub fn generate_for(
        &self,
        ds: &Dataset,
        g: &GroupId,
        label: usize,
        n: usize,
        rng: &mut Rng,
    ) -> Result<Option<Array2<f64>>> {
        self.check(ds)?;
        let preds = self.structure.sources(ds.schema(), g)?;
        let lists: Vec<Vec<usize>> = preds.iter().map(|p| ds.members(p, Some(label))).collect();
        if lists.iter().any(Vec::is_empty) {
            return Ok(None);
        }
        let inputs = draw_batches(ds, &lists, n, rng)?;
        let views: Vec<ArrayView2<f64>> = inputs.iter().map(|s| s.view()).collect();
        Ok(Some(self.params[label].generate(&views)?))
    }

    /// Text form: a header, then one `k <form> <params>` line per label.
    pub fn render(&self) -> String {
        let forms: Vec<&str> = self.params.iter().map(|p| p.form().name()).collect();
        let mut s = format!(
            "# generator suite\nschema_hash={:016x}\nstructure={}\nforms={}\n",
            self.schema_hash,
            self.structure,
            forms.join(",")
        );
        for (k, p) in self.params.iter().enumerate() {
            let vals: Vec<String> = p.values().iter().map(|&v| fmt_sig9(v)).collect();
            s.push_str(&format!("{k} {} {}\n", p.form().name(), vals.join(",")));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut schema_hash = None;
        let mut structure = None;
        let mut params = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line_no = i + 1;
            let bad = |msg: String| GenError::Parse { line: line_no, msg };
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(v) = line.strip_prefix("schema_hash=") {
                schema_hash = Some(u64::from_str_radix(v, 16).map_err(|_| bad("bad hash".into()))?);
            } else if let Some(v) = line.strip_prefix("structure=") {
                structure = Some(v.parse::<Structure>().map_err(bad)?);
            } else if line.starts_with("forms=") {
                // informational; the per-label lines are authoritative
            } else {
                let mut parts = line.split_whitespace();
                let (Some(k), Some(form), Some(vals), None) =
                    (parts.next(), parts.next(), parts.next(), parts.next())
                else {
                    return Err(bad("expected `k form values`".into()));
                };
                let k: usize = k.parse().map_err(|_| bad(format!("bad label {k:?}")))?;
                if k != params.len() {
                    return Err(bad(format!("labels must be listed in order, found {k}")));
                }
                let form: GenForm = form.parse().map_err(bad)?;
                let vals = vals
                    .split(',')
                    .map(|v| v.parse::<f64>().map_err(|_| bad(format!("bad value {v:?}"))))
                    .collect::<Result<Array1<f64>>>()?;
                params.push(match form {
                    GenForm::Lambda => GenParams::Lambda(vals),
                    GenForm::Diag => GenParams::Diag(vals),
                });
            }
        }
        let missing = |what: &str| GenError::Parse {
            line: 0,
            msg: format!("missing {what}"),
        };
        Ok(Self {
            structure: structure.ok_or_else(|| missing("structure"))?,
            schema_hash: schema_hash.ok_or_else(|| missing("schema_hash"))?,
            params,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.render()).map_err(|source| GenError::Io {
            path: path.to_path_buf(),
            source,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| GenError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }
}

/// Original records plus generated ones, so that every nonempty cell smaller
/// than `n_per_cell` is topped up to exactly `n_per_cell`. Larger cells are
/// left untouched. Cells whose sources are empty are skipped with a warning.
pub fn augment(ds: &Dataset, suite: &GeneratorSuite, n_per_cell: usize, rng: &mut Rng) -> Result<Dataset> {
    if n_per_cell == 0 {
        return Err(DataError::ZeroCount.into());
    }
    suite.check(ds)?;
    let mut extra = Vec::new();
    for ((g, k), cell) in ds.cells() {
        if cell.len() >= n_per_cell {
            continue;
        }
        let need = n_per_cell - cell.len();
        match suite.generate_for(ds, g, *k, need, rng)? {
            Some(batch) => extra.extend(batch.rows().into_iter().map(|r| Record {
                features: r.to_vec(),
                label: *k,
                group: g.clone(),
            })),
            None => log::warn!("skipping cell ({g}, {k}): a source cell is empty"),
        }
    }
    Ok(ds.extended(extra)?)
}
