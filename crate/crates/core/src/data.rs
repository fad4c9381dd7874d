//! Sensitive-attribute schema, the group lattice, dataset storage and the
//! sampling policies built on top of it.
//!
//! A [`GroupId`] fixes one value per sensitive axis. Leaving one axis free
//! gives a [`ParentGroupId`]; leaving more axes free gives a general
//! [`GroupPredicate`]. All three implement [`Selector`], which is what
//! [`Dataset::members`] filters on.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index;
use rand::Rng as _;
use thiserror::Error;

use crate::util::{fmt_sig9, parse_kv, Rng};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("cannot read or write {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("line {line}: {msg}")]
    Malformed { line: usize, msg: String },
    #[error("{}feature dimension {found}, expected {expected}", line_prefix(*line))]
    DimensionMismatch {
        line: Option<usize>,
        expected: usize,
        found: usize,
    },
    #[error("{}attribute {value} out of range for axis {axis} (cardinality {cardinality})", line_prefix(*line))]
    AttributeOutOfRange {
        line: Option<usize>,
        axis: usize,
        value: usize,
        cardinality: usize,
    },
    #[error("{}expected {expected} attributes, found {found}", line_prefix(*line))]
    AttributeCount {
        line: Option<usize>,
        expected: usize,
        found: usize,
    },
    #[error("{}label {label} out of range (num_labels {num_labels})", line_prefix(*line))]
    LabelOutOfRange {
        line: Option<usize>,
        label: usize,
        num_labels: usize,
    },
    #[error("{}non-finite feature value", line_prefix(*line))]
    NonFinite { line: Option<usize> },
    #[error("cannot sample from an empty position list")]
    EmptyPositions,
    #[error("sample count must be at least 1")]
    ZeroCount,
    #[error("dataset has no nonempty (group, label) cell")]
    NoCells,
    #[error("axis selection must be nonempty, in range and without repeats")]
    BadAxisSelection,
    #[error("axis {axis} has cardinality {cardinality}, expected a binary axis")]
    NonBinaryAxis { axis: usize, cardinality: usize },
    #[error("operation needs at least {needed} axes, schema has {found}")]
    TooFewAxes { needed: usize, found: usize },
}

fn line_prefix(line: Option<usize>) -> String {
    match line {
        Some(l) => format!("line {l}: "),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Axis {
    pub name: String,
    pub cardinality: usize,
}

/// Ordered list of sensitive axes.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct AxisSchema {
    axes: Vec<Axis>,
}

impl AxisSchema {
    pub fn new(axes: Vec<Axis>) -> Result<Self> {
        if axes.is_empty() {
            return Err(DataError::Schema("at least one axis is required".into()));
        }
        for (i, a) in axes.iter().enumerate() {
            if a.cardinality < 2 {
                return Err(DataError::Schema(format!(
                    "axis {i} ({}) has cardinality {}, need at least 2",
                    a.name, a.cardinality
                )));
            }
            if a.name.is_empty() || a.name.contains(char::is_whitespace) {
                return Err(DataError::Schema(format!("axis {i} has an invalid name")));
            }
            if axes[..i].iter().any(|b| b.name == a.name) {
                return Err(DataError::Schema(format!("duplicate axis name {}", a.name)));
            }
        }
        Ok(Self { axes })
    }

    /// Schema of `p` binary axes named `a0`, `a1`, ...
    pub fn binary(p: usize) -> Result<Self> {
        Self::new(
            (0..p)
                .map(|i| Axis {
                    name: format!("a{i}"),
                    cardinality: 2,
                })
                .collect(),
        )
    }

    pub fn axes(&self) -> &[Axis] {
        &self.axes
    }

    /// Number of sensitive axes.
    pub fn p(&self) -> usize {
        self.axes.len()
    }

    pub fn cardinality(&self, axis: usize) -> usize {
        self.axes[axis].cardinality
    }

    /// Number of distinct groups, the product of all cardinalities.
    pub fn group_count(&self) -> usize {
        self.axes.iter().map(|a| a.cardinality).product()
    }

    pub fn is_binary(&self) -> bool {
        self.axes.iter().all(|a| a.cardinality == 2)
    }

    /// All groups in lexicographic order.
    pub fn groups(&self) -> Vec<GroupId> {
        let mut out = Vec::with_capacity(self.group_count());
        let mut cur = vec![0usize; self.p()];
        loop {
            out.push(GroupId(cur.clone()));
            let mut axis = self.p();
            loop {
                if axis == 0 {
                    return out;
                }
                axis -= 1;
                cur[axis] += 1;
                if cur[axis] < self.cardinality(axis) {
                    break;
                }
                cur[axis] = 0;
            }
        }
    }

    pub fn validate_group(&self, g: &GroupId, line: Option<usize>) -> Result<()> {
        if g.0.len() != self.p() {
            return Err(DataError::AttributeCount {
                line,
                expected: self.p(),
                found: g.0.len(),
            });
        }
        for (axis, (&value, a)) in g.0.iter().zip(&self.axes).enumerate() {
            if value >= a.cardinality {
                return Err(DataError::AttributeOutOfRange {
                    line,
                    axis,
                    value,
                    cardinality: a.cardinality,
                });
            }
        }
        Ok(())
    }

    /// Stable 64-bit FNV-1a hash of the schema, used to tag persisted artifacts.
    pub fn fingerprint(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for a in &self.axes {
            for b in a.name.bytes().chain([0u8]).chain(a.cardinality.to_le_bytes()) {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }
}

/// One point of the lattice: an attribute index per axis.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupId(pub Vec<usize>);

impl GroupId {
    pub fn values(&self) -> &[usize] {
        &self.0
    }

    /// Parent groups, one per masked axis, in axis order.
    pub fn parents(&self) -> Vec<ParentGroupId> {
        (0..self.0.len())
            .map(|masked_axis| ParentGroupId {
                base: self.clone(),
                masked_axis,
            })
            .collect()
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", parts.join(","))
    }
}

/// A group with one axis left unspecified.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParentGroupId {
    pub base: GroupId,
    pub masked_axis: usize,
}

/// A general lattice node: `None` leaves an axis unspecified.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GroupPredicate(pub Vec<Option<usize>>);

impl GroupPredicate {
    pub fn specified_axes(&self) -> usize {
        self.0.iter().filter(|v| v.is_some()).count()
    }
}

impl fmt::Display for GroupPredicate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self
            .0
            .iter()
            .map(|v| v.map_or_else(|| "*".to_string(), |x| x.to_string()))
            .collect();
        write!(f, "{}", parts.join(","))
    }
}

impl From<&GroupId> for GroupPredicate {
    fn from(g: &GroupId) -> Self {
        GroupPredicate(g.0.iter().map(|&v| Some(v)).collect())
    }
}

impl From<&ParentGroupId> for GroupPredicate {
    fn from(pg: &ParentGroupId) -> Self {
        let mut p = GroupPredicate::from(&pg.base);
        p.0[pg.masked_axis] = None;
        p
    }
}

/// Anything that decides lattice membership of a group.
pub trait Selector {
    fn matches(&self, g: &GroupId) -> bool;
}

impl Selector for GroupId {
    fn matches(&self, g: &GroupId) -> bool {
        self == g
    }
}

impl Selector for ParentGroupId {
    fn matches(&self, g: &GroupId) -> bool {
        self.base.0.len() == g.0.len()
            && self
                .base
                .0
                .iter()
                .zip(&g.0)
                .enumerate()
                .all(|(i, (a, b))| i == self.masked_axis || a == b)
    }
}

impl Selector for GroupPredicate {
    fn matches(&self, g: &GroupId) -> bool {
        self.0.len() == g.0.len()
            && self
                .0
                .iter()
                .zip(&g.0)
                .all(|(p, v)| p.is_none_or(|x| x == *v))
    }
}

/// Exactly `p` parents of `g`, one per masked axis, in axis order.
pub fn parent_groups(g: &GroupId) -> Vec<ParentGroupId> {
    g.parents()
}

/// Grandparent predicates of `g` ("parents of parents").
///
/// For `p >= 3` these are all predicates with exactly two axes masked, ordered
/// by the set of axes that stay specified; for `p = 3` that is one predicate
/// per axis value of `g`. For `p = 2` the single-axis predicates are returned,
/// since masking both axes would select everything.
pub fn grandparent_groups(g: &GroupId) -> Result<Vec<GroupPredicate>> {
    let p = g.0.len();
    if p < 2 {
        return Err(DataError::TooFewAxes { needed: 2, found: p });
    }
    if p == 2 {
        return Ok((0..2)
            .map(|keep| {
                GroupPredicate(
                    (0..2)
                        .map(|i| (i == keep).then_some(g.0[i]))
                        .collect(),
                )
            })
            .collect());
    }
    let mut out = Vec::new();
    for_each_combination(p, p - 2, &mut |kept| {
        out.push(GroupPredicate(
            (0..p)
                .map(|i| kept.contains(&i).then_some(g.0[i]))
                .collect(),
        ));
    });
    Ok(out)
}

/// Calls `f` for every `k`-subset of `0..n` in lexicographic order.
fn for_each_combination(n: usize, k: usize, f: &mut impl FnMut(&[usize])) {
    fn rec(start: usize, n: usize, k: usize, cur: &mut Vec<usize>, f: &mut impl FnMut(&[usize])) {
        if cur.len() == k {
            f(cur);
            return;
        }
        for i in start..n {
            cur.push(i);
            rec(i + 1, n, k, cur, f);
            cur.pop();
        }
    }
    rec(0, n, k, &mut Vec::with_capacity(k), f);
}

/// Axiswise complement of `g`; every axis must be binary.
pub fn adversarial_group(schema: &AxisSchema, g: &GroupId) -> Result<GroupId> {
    for (axis, a) in schema.axes().iter().enumerate() {
        if a.cardinality != 2 {
            return Err(DataError::NonBinaryAxis {
                axis,
                cardinality: a.cardinality,
            });
        }
    }
    schema.validate_group(g, None)?;
    Ok(GroupId(g.0.iter().map(|&v| 1 - v).collect()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub features: Vec<f64>,
    pub label: usize,
    pub group: GroupId,
}

/// Immutable labelled dataset with a `(group, label)` index.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    schema: AxisSchema,
    feature_dim: usize,
    num_labels: usize,
    records: Vec<Record>,
    index: BTreeMap<(GroupId, usize), Vec<usize>>,
}

impl Dataset {
    pub fn new(
        schema: AxisSchema,
        feature_dim: usize,
        num_labels: usize,
        records: Vec<Record>,
    ) -> Result<Self> {
        if num_labels < 2 {
            return Err(DataError::Schema(format!(
                "num_labels must be at least 2, got {num_labels}"
            )));
        }
        if feature_dim == 0 {
            return Err(DataError::Schema("feature_dim must be positive".into()));
        }
        for r in &records {
            validate_record(&schema, feature_dim, num_labels, r, None)?;
        }
        let index = build_index(&records);
        Ok(Self {
            schema,
            feature_dim,
            num_labels,
            records,
            index,
        })
    }

    pub fn schema(&self) -> &AxisSchema {
        &self.schema
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn num_labels(&self) -> usize {
        self.num_labels
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    /// Nonempty `(group, label)` cells with their record positions.
    pub fn cells(&self) -> &BTreeMap<(GroupId, usize), Vec<usize>> {
        &self.index
    }

    pub fn cell(&self, g: &GroupId, label: usize) -> &[usize] {
        self.index
            .get(&(g.clone(), label))
            .map_or(&[], Vec::as_slice)
    }

    /// Positions of records whose group matches `sel`, optionally restricted
    /// to one label. Sorted ascending.
    pub fn members<S: Selector + ?Sized>(&self, sel: &S, label: Option<usize>) -> Vec<usize> {
        let mut out: Vec<usize> = self
            .index
            .iter()
            .filter(|((g, k), _)| label.is_none_or(|l| l == *k) && sel.matches(g))
            .flat_map(|(_, pos)| pos.iter().copied())
            .collect();
        out.sort_unstable();
        out
    }

    /// New dataset with the same schema holding the records at `positions`.
    pub fn subset(&self, positions: &[usize]) -> Dataset {
        let records = positions.iter().map(|&i| self.records[i].clone()).collect();
        self.with_records(records)
    }

    /// Same schema and dimensions, different records (assumed valid).
    pub(crate) fn with_records(&self, records: Vec<Record>) -> Dataset {
        let index = build_index(&records);
        Dataset {
            schema: self.schema.clone(),
            feature_dim: self.feature_dim,
            num_labels: self.num_labels,
            records,
            index,
        }
    }

    /// Appends validated records.
    pub fn extended(&self, extra: Vec<Record>) -> Result<Dataset> {
        for r in &extra {
            validate_record(&self.schema, self.feature_dim, self.num_labels, r, None)?;
        }
        let mut records = self.records.clone();
        records.extend(extra);
        Ok(self.with_records(records))
    }

    /// Feature rows of the given positions as a matrix.
    pub fn feature_matrix(&self, positions: &[usize]) -> ndarray::Array2<f64> {
        let mut m = ndarray::Array2::zeros((positions.len(), self.feature_dim));
        for (row, &i) in m.rows_mut().into_iter().zip(positions) {
            for (dst, src) in row.into_iter().zip(&self.records[i].features) {
                *dst = *src;
            }
        }
        m
    }

    /// All features as a matrix, in record order.
    pub fn all_features(&self) -> ndarray::Array2<f64> {
        let all: Vec<usize> = (0..self.len()).collect();
        self.feature_matrix(&all)
    }

    pub fn labels(&self) -> Vec<usize> {
        self.records.iter().map(|r| r.label).collect()
    }

    pub fn groups(&self) -> Vec<GroupId> {
        self.records.iter().map(|r| r.group.clone()).collect()
    }
}

fn validate_record(
    schema: &AxisSchema,
    d: usize,
    k: usize,
    r: &Record,
    line: Option<usize>,
) -> Result<()> {
    schema.validate_group(&r.group, line)?;
    if r.label >= k {
        return Err(DataError::LabelOutOfRange {
            line,
            label: r.label,
            num_labels: k,
        });
    }
    if r.features.len() != d {
        return Err(DataError::DimensionMismatch {
            line,
            expected: d,
            found: r.features.len(),
        });
    }
    if r.features.iter().any(|x| !x.is_finite()) {
        return Err(DataError::NonFinite { line });
    }
    Ok(())
}

fn build_index(records: &[Record]) -> BTreeMap<(GroupId, usize), Vec<usize>> {
    let mut index: BTreeMap<(GroupId, usize), Vec<usize>> = BTreeMap::new();
    for (i, r) in records.iter().enumerate() {
        index.entry((r.group.clone(), r.label)).or_default().push(i);
    }
    index
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| DataError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Schema-file contents: axes plus the dataset-wide dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemaFile {
    pub schema: AxisSchema,
    pub feature_dim: usize,
    pub num_labels: usize,
}

impl SchemaFile {
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_kv(text).map_err(|line| DataError::Malformed {
            line,
            msg: "expected key=value".into(),
        })?;
        let mut names: BTreeMap<usize, String> = BTreeMap::new();
        let mut cards: BTreeMap<usize, usize> = BTreeMap::new();
        let mut feature_dim = None;
        let mut num_labels = None;
        for e in entries {
            let bad = |msg: String| DataError::Malformed { line: e.line, msg };
            let parse_usize = |v: &str| {
                v.parse::<usize>()
                    .map_err(|_| bad(format!("invalid integer {v:?}")))
            };
            match e.key.as_str() {
                "feature_dim" => feature_dim = Some(parse_usize(&e.value)?),
                "num_labels" => num_labels = Some(parse_usize(&e.value)?),
                key => {
                    let mut parts = key.split('.');
                    match (parts.next(), parts.next(), parts.next(), parts.next()) {
                        (Some("axis"), Some(idx), Some(field), None) => {
                            let idx = parse_usize(idx)?;
                            match field {
                                "name" => {
                                    names.insert(idx, e.value.clone());
                                }
                                "cardinality" => {
                                    cards.insert(idx, parse_usize(&e.value)?);
                                }
                                _ => return Err(bad(format!("unknown key {key}"))),
                            }
                        }
                        _ => return Err(bad(format!("unknown key {key}"))),
                    }
                }
            }
        }
        let p = names.len().max(cards.len());
        let mut axes = Vec::with_capacity(p);
        for i in 0..p {
            let name = names
                .remove(&i)
                .ok_or_else(|| DataError::Schema(format!("axis.{i}.name missing")))?;
            let cardinality = cards
                .remove(&i)
                .ok_or_else(|| DataError::Schema(format!("axis.{i}.cardinality missing")))?;
            axes.push(Axis { name, cardinality });
        }
        let schema = AxisSchema::new(axes)?;
        let feature_dim =
            feature_dim.ok_or_else(|| DataError::Schema("feature_dim missing".into()))?;
        let num_labels =
            num_labels.ok_or_else(|| DataError::Schema("num_labels missing".into()))?;
        if feature_dim == 0 || num_labels < 2 {
            return Err(DataError::Schema(
                "feature_dim must be >= 1 and num_labels >= 2".into(),
            ));
        }
        Ok(Self {
            schema,
            feature_dim,
            num_labels,
        })
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for (i, a) in self.schema.axes().iter().enumerate() {
            s.push_str(&format!("axis.{i}.name={}\n", a.name));
            s.push_str(&format!("axis.{i}.cardinality={}\n", a.cardinality));
        }
        s.push_str(&format!("feature_dim={}\n", self.feature_dim));
        s.push_str(&format!("num_labels={}\n", self.num_labels));
        s
    }
}

/// Parses one tab-separated record line (`label`, `attrs`, `features`).
fn parse_record_line(line_no: usize, line: &str, sf: &SchemaFile) -> Result<Record> {
    let bad = |msg: String| DataError::Malformed { line: line_no, msg };
    let fields: Vec<&str> = line.split('\t').collect();
    if fields.len() != 3 {
        return Err(bad(format!("expected 3 tab-separated fields, found {}", fields.len())));
    }
    let label: usize = fields[0]
        .trim()
        .parse()
        .map_err(|_| bad(format!("invalid label {:?}", fields[0])))?;
    let attrs = fields[1]
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("invalid attribute {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let features = fields[2]
        .split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| bad(format!("invalid feature value {s:?}")))
        })
        .collect::<Result<Vec<_>>>()?;
    let r = Record {
        features,
        label,
        group: GroupId(attrs),
    };
    validate_record(&sf.schema, sf.feature_dim, sf.num_labels, &r, Some(line_no))?;
    Ok(r)
}

/// Parses data-file text against a schema.
pub fn parse_dataset(data: &str, sf: &SchemaFile) -> Result<Dataset> {
    let mut records = Vec::new();
    for (i, line) in data.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        records.push(parse_record_line(i + 1, line, sf)?);
    }
    Dataset::new(sf.schema.clone(), sf.feature_dim, sf.num_labels, records)
}

pub fn load_dataset(data_path: &Path, schema_path: &Path) -> Result<Dataset> {
    let sf = SchemaFile::parse(&read_text(schema_path)?)?;
    parse_dataset(&read_text(data_path)?, &sf)
}

/// Data-file text: one line per record, features with 9 significant digits.
pub fn render_dataset(ds: &Dataset) -> String {
    let mut s = String::new();
    for r in ds.records() {
        let attrs: Vec<String> = r.group.0.iter().map(|v| v.to_string()).collect();
        let feats: Vec<String> = r.features.iter().map(|&x| fmt_sig9(x)).collect();
        s.push_str(&format!("{}\t{}\t{}\n", r.label, attrs.join(","), feats.join(",")));
    }
    s
}

pub fn schema_file_of(ds: &Dataset) -> SchemaFile {
    SchemaFile {
        schema: ds.schema().clone(),
        feature_dim: ds.feature_dim(),
        num_labels: ds.num_labels(),
    }
}

/// Writes the data file and the schema file.
pub fn write_dataset(ds: &Dataset, data_path: &Path, schema_path: &Path) -> Result<()> {
    write_text(schema_path, &schema_file_of(ds).render())?;
    write_text(data_path, &render_dataset(ds))
}

/// `n` uniform draws with replacement from `positions`.
pub fn sample_with_replacement(positions: &[usize], n: usize, rng: &mut Rng) -> Result<Vec<usize>> {
    if positions.is_empty() {
        return Err(DataError::EmptyPositions);
    }
    if n == 0 {
        return Err(DataError::ZeroCount);
    }
    Ok((0..n)
        .map(|_| positions[rng.random_range(0..positions.len())])
        .collect())
}

/// Resizes one cell to exactly `n` positions: uniform subsampling without
/// replacement when the cell is larger, all originals plus draws with
/// replacement when it is smaller.
pub(crate) fn resize_cell(cell: &[usize], n: usize, rng: &mut Rng) -> Vec<usize> {
    if cell.len() >= n {
        let mut picked: Vec<usize> = index::sample(rng, cell.len(), n)
            .into_iter()
            .map(|i| cell[i])
            .collect();
        picked.sort_unstable();
        picked
    } else {
        let mut out = cell.to_vec();
        out.extend((0..n - cell.len()).map(|_| cell[rng.random_range(0..cell.len())]));
        out
    }
}

/// Rebuilds `ds` so that every nonempty `(group, label)` cell has exactly
/// `n_per_cell` records. Empty cells of the full lattice are skipped.
pub fn equal_sample(ds: &Dataset, n_per_cell: usize, rng: &mut Rng) -> Result<Dataset> {
    if n_per_cell == 0 {
        return Err(DataError::ZeroCount);
    }
    if ds.cells().is_empty() {
        return Err(DataError::NoCells);
    }
    let empty = ds.schema().group_count() * ds.num_labels() - ds.cells().len();
    if empty > 0 {
        log::warn!("equal sampling skips {empty} empty (group, label) cells");
    }
    let mut positions = Vec::with_capacity(ds.cells().len() * n_per_cell);
    for cell in ds.cells().values() {
        positions.extend(resize_cell(cell, n_per_cell, rng));
    }
    Ok(ds.subset(&positions))
}

/// Projects the dataset onto the axes in `keep` (in the given order).
pub fn restrict_axes(ds: &Dataset, keep: &[usize]) -> Result<Dataset> {
    let p = ds.schema().p();
    let mut seen = vec![false; p];
    if keep.is_empty() {
        return Err(DataError::BadAxisSelection);
    }
    for &a in keep {
        if a >= p || seen[a] {
            return Err(DataError::BadAxisSelection);
        }
        seen[a] = true;
    }
    let schema = AxisSchema::new(keep.iter().map(|&a| ds.schema().axes()[a].clone()).collect())?;
    let records = ds
        .records()
        .iter()
        .map(|r| Record {
            features: r.features.clone(),
            label: r.label,
            group: GroupId(keep.iter().map(|&a| r.group.0[a]).collect()),
        })
        .collect();
    Dataset::new(schema, ds.feature_dim(), ds.num_labels(), records)
}
