//! Seeded synthetic benchmark with additive group means, cell sizes that
//! shrink with intersection depth and label noise that grows with it.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::Array1;
use rand::Rng as _;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::data::{self, AxisSchema, DataError, Dataset, GroupId, Record};
use crate::util::{derive_seed, fmt_sig9, parse_kv, rng_from_seed, Rng};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    Invalid(String),
    #[error("synthetic spec, line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, SynthError>;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    /// Number of binary sensitive axes.
    pub p: usize,
    pub d: usize,
    pub num_labels: usize,
    /// Length of the label offset `c * k * u`.
    pub separation: f64,
    /// Length of each per-axis mean vector `v_i(a)`.
    pub axis_scale: f64,
    /// Per-coordinate standard deviation of the Gaussian noise.
    pub noise: f64,
    /// Records per label in the root group (depth 0).
    pub max_cell: usize,
    /// Records per label in the deepest group (all attributes nonzero).
    pub min_cell: usize,
    pub flip_min: f64,
    pub flip_max: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            p: 3,
            d: 16,
            num_labels: 2,
            separation: 2.5,
            axis_scale: 1.5,
            noise: 1.0,
            max_cell: 300,
            min_cell: 30,
            flip_min: 0.05,
            flip_max: 0.30,
            seed: 0,
        }
    }
}

const KEYS: [&str; 11] = [
    "p",
    "d",
    "num_labels",
    "separation",
    "axis_scale",
    "noise",
    "max_cell",
    "min_cell",
    "flip_min",
    "flip_max",
    "seed",
];

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        if self.p == 0 || self.d == 0 {
            return bad("p and d must be at least 1");
        }
        if self.num_labels < 2 {
            return bad("num_labels must be at least 2");
        }
        if !(self.noise > 0.0 && self.noise.is_finite()) {
            return bad("noise must be positive");
        }
        if !self.separation.is_finite() || !self.axis_scale.is_finite() {
            return bad("separation and axis_scale must be finite");
        }
        if self.min_cell == 0 || self.max_cell < self.min_cell {
            return bad("need 1 <= min_cell <= max_cell");
        }
        for f in [self.flip_min, self.flip_max] {
            if !(0.0..=1.0).contains(&f) {
                return bad("flip rates must lie in [0, 1]");
            }
        }
        Ok(())
    }

    pub fn depth(g: &GroupId) -> usize {
        g.0.iter().filter(|&&a| a != 0).count()
    }

    /// Records per label of group `g`, decaying geometrically with depth.
    pub fn cell_size(&self, g: &GroupId) -> usize {
        let t = Self::depth(g) as f64 / self.p as f64;
        let ratio = self.min_cell as f64 / self.max_cell as f64;
        ((self.max_cell as f64 * ratio.powf(t)).round() as usize).max(1)
    }

    pub fn flip_rate(&self, g: &GroupId) -> f64 {
        self.flip_min + (self.flip_max - self.flip_min) * Self::depth(g) as f64 / self.p as f64
    }

    pub fn render(&self) -> String {
        let vals = [
            self.p.to_string(),
            self.d.to_string(),
            self.num_labels.to_string(),
            fmt_sig9(self.separation),
            fmt_sig9(self.axis_scale),
            fmt_sig9(self.noise),
            self.max_cell.to_string(),
            self.min_cell.to_string(),
            fmt_sig9(self.flip_min),
            fmt_sig9(self.flip_max),
            self.seed.to_string(),
        ];
        let mut s = String::from("# synthetic benchmark\n");
        for (k, v) in KEYS.iter().zip(vals) {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    /// Parses `key=value` text; missing keys keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let entries = parse_kv(text).map_err(|line| SynthError::Parse {
            line,
            msg: "expected key=value".into(),
        })?;
        let mut spec = Self::default();
        for e in entries {
            spec.set(&e.key, &e.value).map_err(|msg| SynthError::Parse { line: e.line, msg })?;
        }
        spec.validate()?;
        Ok(spec)
    }

    /// Sets one field from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> std::result::Result<(), String> {
        fn num<T: std::str::FromStr>(key: &str, v: &str) -> std::result::Result<T, String> {
            v.parse().map_err(|_| format!("invalid value {v:?} for {key}"))
        }
        match key {
            "p" => self.p = num(key, value)?,
            "d" => self.d = num(key, value)?,
            "num_labels" => self.num_labels = num(key, value)?,
            "separation" => self.separation = num(key, value)?,
            "axis_scale" => self.axis_scale = num(key, value)?,
            "noise" => self.noise = num(key, value)?,
            "max_cell" => self.max_cell = num(key, value)?,
            "min_cell" => self.min_cell = num(key, value)?,
            "flip_min" => self.flip_min = num(key, value)?,
            "flip_max" => self.flip_max = num(key, value)?,
            "seed" => self.seed = num(key, value)?,
            _ => return Err(format!("unknown key {key}")),
        }
        Ok(())
    }

    pub fn keys() -> &'static [&'static str] {
        &KEYS
    }
}

fn random_direction(d: usize, len: f64, rng: &mut Rng) -> Array1<f64> {
    loop {
        let v: Array1<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let norm = v.dot(&v).sqrt();
        if norm > 1e-12 {
            return v * (len / norm);
        }
    }
}

/// Random vector of length `len` orthogonal to the unit vector `u`. With
/// `d = 1` there is no such direction and the zero vector is returned.
fn orthogonal_direction(u: &Array1<f64>, len: f64, rng: &mut Rng) -> Array1<f64> {
    if u.len() < 2 {
        return Array1::zeros(u.len());
    }
    loop {
        let v = random_direction(u.len(), 1.0, rng);
        let w = &v - &(u * v.dot(u));
        let norm = w.dot(&w).sqrt();
        if norm > 1e-6 {
            return w * (len / norm);
        }
    }
}

/// The mean construction of a benchmark: per-axis vectors and the label
/// direction.
#[derive(Debug, Clone, PartialEq)]
pub struct MeanModel {
    /// `axis_vectors[i][a]` is `v_i(a)`, orthogonal to `label_direction`.
    pub axis_vectors: Vec<Vec<Array1<f64>>>,
    /// Unit label direction `u`.
    pub label_direction: Array1<f64>,
    pub separation: f64,
}

impl MeanModel {
    pub fn new(spec: &SynthSpec) -> Self {
        let mut rng = rng_from_seed(derive_seed(spec.seed, 0x3ea5));
        let label_direction = random_direction(spec.d, 1.0, &mut rng);
        // group offsets are kept orthogonal to the label direction so that
        // groups differ in difficulty only through their label noise
        let axis_vectors = (0..spec.p)
            .map(|_| {
                (0..2)
                    .map(|_| orthogonal_direction(&label_direction, spec.axis_scale, &mut rng))
                    .collect()
            })
            .collect();
        Self {
            axis_vectors,
            label_direction,
            separation: spec.separation,
        }
    }

    /// `mu(g, k) = sum_i v_i(a_i) + c k u`.
    pub fn mean(&self, g: &GroupId, k: usize) -> Array1<f64> {
        let mut mu = &self.label_direction * (self.separation * k as f64);
        for (i, &a) in g.0.iter().enumerate() {
            mu += &self.axis_vectors[i][a];
        }
        mu
    }
}

/// Rounds to the precision the data file keeps, so a written and reloaded
/// dataset equals the in-memory one.
fn file_precision(x: f64) -> f64 {
    fmt_sig9(x).parse().expect("formatted float parses")
}

/// Samples the benchmark. Each cell `(g, k)` draws `cell_size(g)` points from
/// `N(mu(g, k), noise^2 I)`; the recorded label is then replaced by a
/// different uniform label with probability `flip_rate(g)`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset> {
    spec.validate()?;
    let schema = AxisSchema::binary(spec.p)?;
    let means = MeanModel::new(spec);
    let mut rng = rng_from_seed(derive_seed(spec.seed, 0x5a3b));
    let mut records = Vec::new();
    for g in schema.groups() {
        let n = spec.cell_size(&g);
        let flip = spec.flip_rate(&g);
        for k in 0..spec.num_labels {
            let mu = means.mean(&g, k);
            for _ in 0..n {
                let features = mu
                    .iter()
                    .map(|&m| file_precision(m + spec.noise * rng.sample::<f64, _>(StandardNormal)))
                    .collect();
                let mut label = k;
                if rng.random::<f64>() < flip {
                    let other = rng.random_range(0..spec.num_labels - 1);
                    label = if other >= k { other + 1 } else { other };
                }
                records.push(Record {
                    features,
                    label,
                    group: g.clone(),
                });
            }
        }
    }
    Ok(Dataset::new(schema, spec.d, spec.num_labels, records)?)
}

pub const SCHEMA_FILE: &str = "schema.txt";
pub const DATA_FILE: &str = "data.tsv";
pub const SPEC_FILE: &str = "synth.txt";

/// Writes schema, data and spec files into `dir`.
pub fn write_synth(spec: &SynthSpec, dir: &Path) -> Result<Dataset> {
    let ds = synth_dataset(spec)?;
    std::fs::create_dir_all(dir).map_err(|source| DataError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    data::write_dataset(&ds, &dir.join(DATA_FILE), &dir.join(SCHEMA_FILE))?;
    let spec_path = dir.join(SPEC_FILE);
    std::fs::write(&spec_path, spec.render()).map_err(|source| DataError::Io {
        path: spec_path,
        source,
    })?;
    Ok(ds)
}
