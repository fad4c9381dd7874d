//! Group false positive rates, differential fairness, alpha-intersectional
//! fairness and their bootstrap estimates.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng as _;
use thiserror::Error;

use crate::classifier::Predictor;
use crate::data::{Dataset, GroupId};
use crate::util::{derive_seed, fmt_sig9, mean_std, rng_from_seed};

#[derive(Debug, Error, PartialEq)]
pub enum FairnessError {
    #[error("predictions, labels and groups differ in length ({preds}, {truth}, {groups})")]
    Length { preds: usize, truth: usize, groups: usize },
    #[error("false positive rates need a binary task, found label {0}")]
    NonBinary(usize),
    #[error("group {0} has no examples of the conditioning label and smoothing is 0")]
    NoNegatives(String),
    #[error("no groups to compare")]
    NoGroups,
    #[error("group {0} has rate 0; differential fairness needs smoothing k > 0")]
    ZeroRate(String),
    #[error("alpha {0} outside [0, 1]")]
    BadAlpha(f64),
    #[error("smoothing must be finite and >= 0, got {0}")]
    BadSmoothing(f64),
    #[error("number of resamples must be at least 1")]
    NoResamples,
    #[error("test set is empty")]
    EmptyTest,
}

pub type Result<T> = std::result::Result<T, FairnessError>;

/// Which true label the rate conditions on.
///
/// `NegativeClass` gives the false positive rate `P(h = 1 | y = 0)`.
/// `Literal` evaluates `1 - P(h = 0 | y = 1)` as printed in the source
/// formula, kept for audit.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub enum FprMode {
    #[default]
    NegativeClass,
    Literal,
}

impl FprMode {
    fn conditioning_label(self) -> usize {
        match self {
            FprMode::NegativeClass => 0,
            FprMode::Literal => 1,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            FprMode::NegativeClass => "negative-class",
            FprMode::Literal => "literal",
        }
    }
}

impl std::str::FromStr for FprMode {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "negative-class" => Ok(FprMode::NegativeClass),
            "literal" => Ok(FprMode::Literal),
            _ => Err(format!("unknown fpr mode `{s}` (negative-class, literal)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupRate {
    pub fpr: f64,
    /// Examples with true label 1.
    pub positives: usize,
    /// Examples with true label 0.
    pub negatives: usize,
    /// Conditioning-label examples predicted as nonzero.
    pub false_positives: usize,
}

pub type GroupRates = BTreeMap<GroupId, GroupRate>;

pub fn rate_values(rates: &GroupRates) -> Vec<f64> {
    rates.values().map(|r| r.fpr).collect()
}

/// `(hits + k) / (n + 2k)`.
pub fn smoothed_rate(hits: usize, n: usize, k: f64) -> f64 {
    (hits as f64 + k) / (n as f64 + 2.0 * k)
}

fn check_smoothing(k: f64) -> Result<()> {
    if !k.is_finite() || k < 0.0 {
        return Err(FairnessError::BadSmoothing(k));
    }
    Ok(())
}

pub fn group_fpr(
    preds: &[usize],
    truth: &[usize],
    groups: &[GroupId],
    k: f64,
    mode: FprMode,
) -> Result<GroupRates> {
    check_smoothing(k)?;
    if preds.len() != truth.len() || truth.len() != groups.len() {
        return Err(FairnessError::Length {
            preds: preds.len(),
            truth: truth.len(),
            groups: groups.len(),
        });
    }
    let cond = mode.conditioning_label();
    let mut counts: BTreeMap<&GroupId, [usize; 3]> = BTreeMap::new();
    for ((&p, &t), g) in preds.iter().zip(truth).zip(groups) {
        if t > 1 {
            return Err(FairnessError::NonBinary(t));
        }
        if p > 1 {
            return Err(FairnessError::NonBinary(p));
        }
        let c = counts.entry(g).or_default();
        c[t] += 1;
        if t == cond && p != 0 {
            c[2] += 1;
        }
    }
    counts
        .into_iter()
        .map(|(g, [neg, pos, fp])| {
            let n = if cond == 0 { neg } else { pos };
            if n == 0 && k == 0.0 {
                return Err(FairnessError::NoNegatives(g.to_string()));
            }
            Ok((
                g.clone(),
                GroupRate {
                    fpr: smoothed_rate(fp, n, k),
                    positives: pos,
                    negatives: neg,
                    false_positives: fp,
                },
            ))
        })
        .collect()
}

/// `log(max rate / min rate)`, the largest log-ratio over ordered pairs.
pub fn differential_fairness(rates: &GroupRates) -> Result<f64> {
    if let Some((g, _)) = rates.iter().find(|(_, r)| r.fpr <= 0.0) {
        return Err(FairnessError::ZeroRate(g.to_string()));
    }
    df_of(&rate_values(rates))
}

pub fn df_of(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(FairnessError::NoGroups);
    }
    let (lo, hi) = min_max(rates);
    if lo <= 0.0 {
        return Err(FairnessError::ZeroRate(format!("with value {lo}")));
    }
    Ok((hi / lo).ln())
}

fn min_max(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)))
}

/// `I_alpha` for one pair of rates.
pub fn pair_if(a: f64, b: f64, alpha: f64) -> f64 {
    let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
    let abs = 1.0 - lo;
    if lo >= 1.0 {
        return f64::INFINITY;
    }
    alpha * abs + (1.0 - alpha) * (1.0 - hi) / (1.0 - lo)
}

pub fn alpha_if(rates: &GroupRates, alpha: f64) -> Result<f64> {
    alpha_if_of(&rate_values(rates), alpha)
}

/// Maximum of `I_alpha` over pairs of distinct groups; a lone group is
/// paired with itself.
///
/// For a fixed lower rate the pair value falls as the upper rate grows, so
/// only neighbours in sorted order need checking.
pub fn alpha_if_of(rates: &[f64], alpha: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(FairnessError::BadAlpha(alpha));
    }
    if rates.is_empty() {
        return Err(FairnessError::NoGroups);
    }
    let mut sorted = rates.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() == 1 {
        sorted.push(sorted[0]);
    }
    let best = sorted
        .windows(2)
        .map(|w| pair_if(w[0], w[1], alpha))
        .fold(f64::NEG_INFINITY, f64::max);
    if best.is_infinite() {
        log::warn!("two groups have rate 1; the relative term is undefined, reporting +inf");
    }
    Ok(best)
}

/// Default sweep: 0.0, 0.1, ..., 1.0.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=10).map(|i| i as f64 / 10.0).collect()
}

pub fn tradeoff_curve(rates: &GroupRates, grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    grid.iter().map(|&a| Ok((a, alpha_if(rates, a)?))).collect()
}

/// Two-column `alpha<TAB>value` plot data.
pub fn render_curve(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("# alpha\tif_alpha\n");
    for (a, v) in curve {
        let _ = writeln!(s, "{}\t{}", fmt_sig9(*a), fmt_sig9(*v));
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BootstrapConfig {
    pub n_resamples: usize,
    pub smoothing: f64,
    pub seed: u64,
    pub mode: FprMode,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            n_resamples: 1000,
            smoothing: 0.03,
            seed: 0,
            mode: FprMode::NegativeClass,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
}

impl Stat {
    pub fn of(values: &[f64]) -> Self {
        let (mean, std) = mean_std(values);
        Self { mean, std }
    }
}

/// Metrics of one evaluation pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessPoint {
    pub rates: GroupRates,
    pub df: f64,
    pub if_alpha: Vec<(f64, f64)>,
    pub best_off: f64,
    pub worst_off: f64,
    pub balanced_accuracy: f64,
}

impl FairnessPoint {
    pub fn if_at(&self, alpha: f64) -> Option<f64> {
        lookup_alpha(&self.if_alpha, alpha)
    }
}

fn lookup_alpha<T: Copy>(grid: &[(f64, T)], alpha: f64) -> Option<T> {
    grid.iter()
        .find(|(a, _)| (a - alpha).abs() < 1e-9)
        .map(|&(_, v)| v)
}

/// Balanced accuracy over the labels that occur in `truth`.
pub fn present_label_ba(preds: &[usize], truth: &[usize]) -> f64 {
    let mut tally: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
    for (&p, &t) in preds.iter().zip(truth) {
        let e = tally.entry(t).or_default();
        e.1 += 1;
        if p == t {
            e.0 += 1;
        }
    }
    if tally.is_empty() {
        return 0.0;
    }
    tally.values().map(|&(h, n)| h as f64 / n as f64).sum::<f64>() / tally.len() as f64
}

/// Metrics from aligned predictions, labels and groups. Groups without any
/// conditioning-label example are left out; the count of such groups is
/// returned alongside.
pub fn evaluate_point(
    preds: &[usize],
    truth: &[usize],
    groups: &[GroupId],
    k: f64,
    mode: FprMode,
    alpha_grid: &[f64],
) -> Result<(FairnessPoint, usize)> {
    let all = group_fpr(preds, truth, groups, k, mode)?;
    let total = all.len();
    let rates: GroupRates = all
        .into_iter()
        .filter(|(_, r)| match mode {
            FprMode::NegativeClass => r.negatives > 0,
            FprMode::Literal => r.positives > 0,
        })
        .collect();
    let skipped = total - rates.len();
    let values = rate_values(&rates);
    if values.is_empty() {
        return Err(FairnessError::NoGroups);
    }
    let (best_off, worst_off) = min_max(&values);
    let df = df_of(&values)?;
    let if_alpha = alpha_grid
        .iter()
        .map(|&a| Ok((a, alpha_if_of(&values, a)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        FairnessPoint {
            rates,
            df,
            if_alpha,
            best_off,
            worst_off,
            balanced_accuracy: present_label_ba(preds, truth),
        },
        skipped,
    ))
}

/// Point metrics of `model` on `ds`.
pub fn point_estimate(
    ds: &Dataset,
    model: &impl Predictor,
    k: f64,
    mode: FprMode,
    alpha_grid: &[f64],
) -> Result<FairnessPoint> {
    if ds.is_empty() {
        return Err(FairnessError::EmptyTest);
    }
    let preds = model.predict_rows(ds.all_features().view());
    evaluate_point(&preds, &ds.labels(), &ds.groups(), k, mode, alpha_grid).map(|(p, _)| p)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub n_resamples: usize,
    /// Group occurrences dropped from resamples for lack of examples.
    pub skipped: usize,
    pub per_group: BTreeMap<GroupId, Stat>,
    pub df: Stat,
    pub if_alpha: Vec<(f64, Stat)>,
    pub best_off: Stat,
    pub worst_off: Stat,
    pub balanced_accuracy: Stat,
}

impl FairnessReport {
    pub fn if_at(&self, alpha: f64) -> Option<Stat> {
        lookup_alpha(&self.if_alpha, alpha)
    }

    /// Mean IF_alpha along the grid.
    pub fn curve(&self) -> Vec<(f64, f64)> {
        self.if_alpha.iter().map(|(a, s)| (*a, s.mean)).collect()
    }

    /// `(metric, mean, stddev)` rows in a fixed order.
    pub fn records(&self) -> Vec<(String, f64, f64)> {
        let mut out = vec![
            ("balanced_accuracy".to_string(), self.balanced_accuracy.mean, self.balanced_accuracy.std),
            ("best_off_fpr".to_string(), self.best_off.mean, self.best_off.std),
            ("worst_off_fpr".to_string(), self.worst_off.mean, self.worst_off.std),
            ("df".to_string(), self.df.mean, self.df.std),
        ];
        for (a, s) in &self.if_alpha {
            out.push((format!("if_alpha_{}", fmt_sig9(*a)), s.mean, s.std));
        }
        for (g, s) in &self.per_group {
            out.push((format!("fpr[{g}]"), s.mean, s.std));
        }
        out
    }

    pub fn render_table(&self) -> String {
        let mut s = format!(
            "{:<24} {:>12} {:>12}\n",
            "metric", "mean", "stddev"
        );
        for (name, mean, std) in self.records() {
            let _ = writeln!(s, "{:<24} {:>12} {:>12}", name, fmt_sig9(mean), fmt_sig9(std));
        }
        let _ = writeln!(
            s,
            "resamples: {}, skipped group occurrences: {}",
            self.n_resamples, self.skipped
        );
        s
    }
}

/// Tab-separated `metric mean stddev` lines with an optional name prefix.
pub fn render_records(prefix: &str, rows: &[(String, f64, f64)]) -> String {
    let mut s = String::new();
    for (name, mean, std) in rows {
        let _ = writeln!(s, "{prefix}{name}\t{}\t{}", fmt_sig9(*mean), fmt_sig9(*std));
    }
    s
}

/// Resamples the test set with replacement, recomputes every metric per
/// resample and reports mean and standard deviation.
pub fn bootstrap_estimate(
    test: &Dataset,
    model: &impl Predictor,
    cfg: &BootstrapConfig,
    alpha_grid: &[f64],
) -> Result<FairnessReport> {
    if test.is_empty() {
        return Err(FairnessError::EmptyTest);
    }
    let preds = model.predict_rows(test.all_features().view());
    bootstrap_predictions(&preds, &test.labels(), &test.groups(), cfg, alpha_grid)
}

pub fn bootstrap_predictions(
    preds: &[usize],
    truth: &[usize],
    groups: &[GroupId],
    cfg: &BootstrapConfig,
    alpha_grid: &[f64],
) -> Result<FairnessReport> {
    check_smoothing(cfg.smoothing)?;
    if cfg.n_resamples == 0 {
        return Err(FairnessError::NoResamples);
    }
    if let Some(&a) = alpha_grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(FairnessError::BadAlpha(a));
    }
    let n = preds.len();
    if n == 0 {
        return Err(FairnessError::EmptyTest);
    }
    if truth.len() != n || groups.len() != n {
        return Err(FairnessError::Length {
            preds: n,
            truth: truth.len(),
            groups: groups.len(),
        });
    }
    let mut per_group: BTreeMap<GroupId, Vec<f64>> = BTreeMap::new();
    let mut df = Vec::with_capacity(cfg.n_resamples);
    let mut ifs = vec![Vec::with_capacity(cfg.n_resamples); alpha_grid.len()];
    let (mut best, mut worst, mut ba) = (Vec::new(), Vec::new(), Vec::new());
    let mut skipped = 0;
    let (mut rp, mut rt, mut rg) = (vec![0; n], vec![0; n], Vec::with_capacity(n));
    for r in 0..cfg.n_resamples {
        let mut rng = rng_from_seed(derive_seed(cfg.seed, r as u64));
        rg.clear();
        for i in 0..n {
            let j = rng.random_range(0..n);
            rp[i] = preds[j];
            rt[i] = truth[j];
            rg.push(groups[j].clone());
        }
        let (point, skip) = match evaluate_point(&rp, &rt, &rg, cfg.smoothing, cfg.mode, alpha_grid) {
            Ok(v) => v,
            // every group lacked conditioning examples in this draw
            Err(FairnessError::NoGroups) => {
                skipped += 1;
                continue;
            }
            Err(e) => return Err(e),
        };
        skipped += skip;
        for (g, rate) in &point.rates {
            per_group.entry(g.clone()).or_default().push(rate.fpr);
        }
        df.push(point.df);
        for (slot, (_, v)) in ifs.iter_mut().zip(&point.if_alpha) {
            slot.push(*v);
        }
        best.push(point.best_off);
        worst.push(point.worst_off);
        ba.push(point.balanced_accuracy);
    }
    if df.is_empty() {
        return Err(FairnessError::NoGroups);
    }
    if skipped > 0 {
        log::info!("bootstrap skipped {skipped} group occurrences without conditioning examples");
    }
    Ok(FairnessReport {
        n_resamples: cfg.n_resamples,
        skipped,
        per_group: per_group.into_iter().map(|(g, v)| (g, Stat::of(&v))).collect(),
        df: Stat::of(&df),
        if_alpha: alpha_grid.iter().zip(&ifs).map(|(&a, v)| (a, Stat::of(v))).collect(),
        best_off: Stat::of(&best),
        worst_off: Stat::of(&worst),
        balanced_accuracy: Stat::of(&ba),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn g(v: &[usize]) -> GroupId {
        GroupId(v.to_vec())
    }

    fn rates(vals: &[f64]) -> GroupRates {
        vals.iter()
            .enumerate()
            .map(|(i, &v)| {
                (
                    g(&[i]),
                    GroupRate { fpr: v, positives: 0, negatives: 1, false_positives: 0 },
                )
            })
            .collect()
    }

    #[test]
    fn fpr_counts() {
        let groups = vec![g(&[0]); 5].into_iter().chain(vec![g(&[1]); 3]).collect::<Vec<_>>();
        let truth = [0, 0, 0, 0, 0, 1, 1, 1];
        let preds = [1, 1, 0, 0, 0, 1, 0, 1];
        let r = group_fpr(&preds, &truth, &groups, 0.0, FprMode::NegativeClass);
        assert!(matches!(r, Err(FairnessError::NoNegatives(_))));
        let r = group_fpr(&preds, &truth, &groups, 0.03, FprMode::NegativeClass).unwrap();
        assert!((r[&g(&[0])].fpr - 2.03 / 5.06).abs() < 1e-15);
        assert!((r[&g(&[1])].fpr - 0.5).abs() < 1e-15);
        let r = group_fpr(&preds[..5], &truth[..5], &groups[..5], 0.0, FprMode::NegativeClass).unwrap();
        assert_eq!(r[&g(&[0])].fpr, 0.4);
        assert_eq!(r[&g(&[0])].negatives, 5);
        let lit = group_fpr(&preds, &truth, &groups, 0.0, FprMode::Literal);
        assert!(lit.is_err());
        let lit = group_fpr(&preds[5..], &truth[5..], &groups[5..], 0.0, FprMode::Literal).unwrap();
        assert!((lit[&g(&[1])].fpr - 2.0 / 3.0).abs() < 1e-15);
        assert!(group_fpr(&[2], &[0], &[g(&[0])], 0.0, FprMode::NegativeClass).is_err());
    }

    #[test]
    fn df_values() {
        assert!((differential_fairness(&rates(&[0.2, 0.1])).unwrap() - 2f64.ln()).abs() < 1e-12);
        assert_eq!(differential_fairness(&rates(&[0.3, 0.3, 0.3])).unwrap(), 0.0);
        assert!(differential_fairness(&rates(&[0.0, 0.1])).is_err());
        let a = df_of(&[0.1, 0.25, 0.4]).unwrap();
        let b = df_of(&[0.03, 0.075, 0.12]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn if_values() {
        let r = rates(&[0.2, 0.5]);
        assert!((alpha_if(&r, 0.5).unwrap() - 0.7125).abs() < 1e-12);
        assert!((alpha_if(&r, 1.0).unwrap() - 0.8).abs() < 1e-12);
        assert!((alpha_if(&r, 0.0).unwrap() - 0.625).abs() < 1e-12);
        let eq = rates(&[0.3, 0.3, 0.3]);
        assert!((alpha_if(&eq, 0.4).unwrap() - (0.4 * 0.7 + 0.6)).abs() < 1e-12);
        assert!(alpha_if(&r, 1.5).is_err());
        assert_eq!(alpha_if(&rates(&[1.0, 1.0]), 0.5).unwrap(), f64::INFINITY);
    }

    #[test]
    fn curve_is_affine_for_two_groups() {
        let grid = default_alpha_grid();
        let curve = tradeoff_curve(&rates(&[0.2, 0.5]), &grid).unwrap();
        assert_eq!(curve.len(), 11);
        for (a, v) in curve {
            assert!((v - (0.625 + a * (0.8 - 0.625))).abs() < 1e-12);
        }
        assert!(render_curve(&[(0.5, 0.7125)]).contains("0.5\t0.7125"));
    }

    #[test]
    fn single_record_bootstrap_equals_point() {
        let grid = [0.5];
        let cfg = BootstrapConfig { n_resamples: 1, ..Default::default() };
        let rep = bootstrap_predictions(&[1], &[0], &[g(&[0])], &cfg, &grid).unwrap();
        let (p, _) = evaluate_point(&[1], &[0], &[g(&[0])], 0.03, FprMode::NegativeClass, &grid).unwrap();
        assert_eq!(rep.worst_off.mean, p.worst_off);
        assert_eq!(rep.if_at(0.5).unwrap().mean, p.if_at(0.5).unwrap());
        assert_eq!(rep.df.mean, 0.0);
        assert_eq!(rep.df.std, 0.0);
    }

    #[test]
    fn bootstrap_is_deterministic() {
        let groups: Vec<GroupId> = (0..40).map(|i| g(&[i % 2])).collect();
        let truth: Vec<usize> = (0..40).map(|i| (i / 2) % 2).collect();
        let preds: Vec<usize> = (0..40).map(|i| (i / 3) % 2).collect();
        let cfg = BootstrapConfig { n_resamples: 50, seed: 9, ..Default::default() };
        let grid = default_alpha_grid();
        let a = bootstrap_predictions(&preds, &truth, &groups, &cfg, &grid).unwrap();
        let b = bootstrap_predictions(&preds, &truth, &groups, &cfg, &grid).unwrap();
        assert_eq!(a, b);
        assert!(a.best_off.mean <= a.worst_off.mean);
        assert!(a.render_table().contains("if_alpha_0.5"));
        let recs = render_records("aug.", &a.records());
        assert!(recs.lines().next().unwrap().starts_with("aug.balanced_accuracy\t"));
    }
}
