//! Quality checks for generated data: nearest-neighbour cosine similarity
//! and a real-versus-generated probe classifier.

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::{index, SliceRandom};
use thiserror::Error;

use crate::classifier::{self, ClfError, FitConfig, MlpModel, Predictor};
use crate::data::{AxisSchema, Dataset, GroupId, Record};
use crate::util::{derive_seed, fmt_sig9, rng_from_seed, Rng};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{side} sample needs at least {needed} points, got {found}")]
    TooFew {
        side: &'static str,
        needed: usize,
        found: usize,
    },
    #[error("{side} point {index} has zero norm")]
    ZeroVector { side: &'static str, index: usize },
    #[error("real and generated points differ in dimension ({real} vs {gen})")]
    Dimension { real: usize, gen: usize },
    #[error("split leaves a class absent from the {0} portion")]
    DegenerateSplit(&'static str),
    #[error(transparent)]
    Classifier(#[from] ClfError),
}

pub type Result<T> = std::result::Result<T, EvalError>;

#[derive(Debug, Clone, PartialEq)]
pub struct DiversityReport {
    pub mean_gr: f64,
    pub mean_rr: f64,
    pub mean_gg: f64,
    pub n_real: usize,
    pub n_gen: usize,
}

impl DiversityReport {
    pub fn records(&self) -> Vec<(String, f64, f64)> {
        vec![
            ("diversity_gr".into(), self.mean_gr, 0.0),
            ("diversity_rr".into(), self.mean_rr, 0.0),
            ("diversity_gg".into(), self.mean_gg, 0.0),
        ]
    }
}

fn unit_rows(x: ArrayView2<f64>, side: &'static str) -> Result<Array2<f64>> {
    let mut out = x.to_owned();
    for (i, mut row) in out.axis_iter_mut(Axis(0)).enumerate() {
        let norm = row.dot(&row).sqrt();
        if norm == 0.0 || !norm.is_finite() {
            return Err(EvalError::ZeroVector { side, index: i });
        }
        row /= norm;
    }
    Ok(out)
}

/// Mean over query rows of the best cosine similarity to a reference row,
/// never matching a row with itself when `exclude_self`.
fn mean_nearest(queries: &Array2<f64>, refs: &Array2<f64>, exclude_self: bool) -> f64 {
    let sims = queries.dot(&refs.t());
    let total: f64 = sims
        .axis_iter(Axis(0))
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .filter(|&(j, _)| !(exclude_self && i == j))
                .map(|(_, &s)| s)
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum();
    total / queries.nrows() as f64
}

pub fn diversity_report(real: ArrayView2<f64>, gen: ArrayView2<f64>) -> Result<DiversityReport> {
    if real.ncols() != gen.ncols() {
        return Err(EvalError::Dimension {
            real: real.ncols(),
            gen: gen.ncols(),
        });
    }
    for (side, x) in [("real", &real), ("generated", &gen)] {
        if x.nrows() < 2 {
            return Err(EvalError::TooFew {
                side,
                needed: 2,
                found: x.nrows(),
            });
        }
    }
    let r = unit_rows(real, "real")?;
    let g = unit_rows(gen, "generated")?;
    Ok(DiversityReport {
        mean_gr: mean_nearest(&g, &r, false),
        mean_rr: mean_nearest(&r, &r, true),
        mean_gg: mean_nearest(&g, &g, true),
        n_real: r.nrows(),
        n_gen: g.nrows(),
    })
}

/// `n` positions from `pool`: without replacement when the pool is large
/// enough, otherwise with replacement.
pub fn sample_side(pool: &[usize], n: usize, rng: &mut Rng) -> Vec<usize> {
    use rand::Rng as _;
    if pool.is_empty() {
        return Vec::new();
    }
    if pool.len() >= n {
        let mut picked: Vec<usize> = index::sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect();
        picked.sort_unstable();
        picked
    } else {
        (0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistinguishabilityReport {
    pub accuracy: f64,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl DistinguishabilityReport {
    pub fn records(&self) -> Vec<(String, f64, f64)> {
        vec![("distinguishability".into(), self.accuracy, 0.0)]
    }
}

pub const PROBE_HIDDEN: [usize; 2] = [64, 32];
pub const MIN_PROBE_SIDE: usize = 10;

fn probe_dataset(x: &Array2<f64>, y: &[usize], rows: &[usize]) -> Dataset {
    let records = rows
        .iter()
        .map(|&i| Record {
            features: x.row(i).to_vec(),
            label: y[i],
            group: GroupId(vec![0]),
        })
        .collect();
    Dataset::new(AxisSchema::binary(1).expect("one axis"), x.ncols(), 2, records)
        .expect("probe records are valid")
}

/// Test accuracy of a probe trained to tell real (0) from generated (1).
pub fn distinguishability(
    real: ArrayView2<f64>,
    gen: ArrayView2<f64>,
    seed: u64,
) -> Result<DistinguishabilityReport> {
    if real.ncols() != gen.ncols() {
        return Err(EvalError::Dimension {
            real: real.ncols(),
            gen: gen.ncols(),
        });
    }
    for (side, x) in [("real", &real), ("generated", &gen)] {
        if x.nrows() < MIN_PROBE_SIDE {
            return Err(EvalError::TooFew {
                side,
                needed: MIN_PROBE_SIDE,
                found: x.nrows(),
            });
        }
    }
    let x = ndarray::concatenate(Axis(0), &[real, gen]).expect("matching widths");
    let y: Vec<usize> = (0..x.nrows()).map(|i| usize::from(i >= real.nrows())).collect();
    let mut order: Vec<usize> = (0..x.nrows()).collect();
    let mut rng = rng_from_seed(derive_seed(seed, 0xd15));
    order.shuffle(&mut rng);
    let n_test = x.nrows() / 5;
    let (test_rows, train_all) = order.split_at(n_test);
    // the probe's own early-stopping set comes out of its training portion
    let n_valid = train_all.len() / 5;
    let (valid_rows, train_rows) = train_all.split_at(n_valid);
    for (name, rows) in [("test", test_rows), ("validation", valid_rows), ("train", train_rows)] {
        let reals = rows.iter().filter(|&&i| y[i] == 0).count();
        if reals == 0 || reals == rows.len() {
            return Err(EvalError::DegenerateSplit(name));
        }
    }
    let train = probe_dataset(&x, &y, train_rows);
    let valid = probe_dataset(&x, &y, valid_rows);
    let test = probe_dataset(&x, &y, test_rows);
    let mut dims = vec![x.ncols()];
    dims.extend(PROBE_HIDDEN);
    dims.push(2);
    let model = MlpModel::new(&dims, classifier::DEFAULT_DROPOUT, derive_seed(seed, 0x1417))?;
    let cfg = FitConfig {
        seed: derive_seed(seed, 0xf17),
        ..FitConfig::default()
    };
    let (model, _) = classifier::fit(model, &train, &valid, &cfg)?;
    let preds = model.predict_rows(test.all_features().view());
    let correct = preds.iter().zip(test.labels()).filter(|(p, t)| **p == *t).count();
    Ok(DistinguishabilityReport {
        accuracy: correct as f64 / test.len() as f64,
        n_train: train.len() + valid.len(),
        n_test: test.len(),
        seed,
    })
}

pub fn render_quality(div: &DiversityReport, dist: &DistinguishabilityReport) -> String {
    format!(
        "diversity (mean nearest cosine similarity)\n  G-R {}\n  R-R {}\n  G-G {}\n  sizes real={} generated={}\n\
         distinguishability\n  accuracy {}\n  train={} test={} seed={}\n",
        fmt_sig9(div.mean_gr),
        fmt_sig9(div.mean_rr),
        fmt_sig9(div.mean_gg),
        div.n_real,
        div.n_gen,
        fmt_sig9(dist.accuracy),
        dist.n_train,
        dist.n_test,
        dist.seed,
    )
}
