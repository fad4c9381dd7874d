//! Small helpers shared across modules: seeded streams, float formatting and
//! the flat `key=value` text format used by schema, spec and config files.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// The seeded stream type used everywhere in the crate.
pub type Rng = ChaCha8Rng;

/// Builds a stream from a 64-bit seed.
pub fn rng_from_seed(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Derives an independent child seed from `base` and a tag (splitmix64 finalizer).
pub fn derive_seed(base: u64, tag: u64) -> u64 {
    let mut z = base
        .wrapping_add(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15))
        .wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Formats a float with 9 significant digits, `%.9g` style.
pub fn fmt_sig9(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return format!("{x}");
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("scientific format");
    let exp: i32 = exp.parse().expect("exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_fraction(format!("{x:.decimals$}"))
    } else {
        format!("{}e{}", trim_fraction(mantissa.to_string()), exp)
    }
}

fn trim_fraction(mut s: String) -> String {
    if s.contains('.') {
        while s.ends_with('0') {
            s.pop();
        }
        if s.ends_with('.') {
            s.pop();
        }
    }
    s
}

/// Joins floats with commas using [`fmt_sig9`].
pub fn join_floats(values: impl IntoIterator<Item = f64>) -> String {
    values
        .into_iter()
        .map(fmt_sig9)
        .collect::<Vec<_>>()
        .join(",")
}

/// One non-blank, non-comment line of a `key=value` file.
#[derive(Debug, Clone, PartialEq)]
pub struct KvLine {
    pub line: usize,
    pub key: String,
    pub value: String,
}

/// Splits `key=value` text into entries. Blank lines and `#` comments are
/// skipped; a line without `=` is reported by its 1-based number.
pub fn parse_kv(text: &str) -> Result<Vec<KvLine>, usize> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line.split_once('=').ok_or(i + 1)?;
        out.push(KvLine {
            line: i + 1,
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        });
    }
    Ok(out)
}

/// Mean and sample standard deviation (n - 1 denominator, 0 for a single value).
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sig9_formatting() {
        assert_eq!(fmt_sig9(0.0), "0");
        assert_eq!(fmt_sig9(1.0), "1");
        assert_eq!(fmt_sig9(-2.5), "-2.5");
        assert_eq!(fmt_sig9(std::f64::consts::PI), "3.14159265");
        assert_eq!(fmt_sig9(123456789.4), "123456789");
        assert_eq!(fmt_sig9(1.0e10), "1e10");
        assert_eq!(fmt_sig9(3.7267e-6), "3.7267e-6");
        assert_eq!(fmt_sig9(0.000123), "0.000123");
    }

    #[test]
    fn sig9_reparse_is_stable() {
        for &x in &[1.0 / 3.0, -7.123456789123e-12, 9.9999999999, 6.02214076e23] {
            let s = fmt_sig9(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(fmt_sig9(back), s);
        }
    }

    #[test]
    fn kv_parsing() {
        let kv = parse_kv("# c\n a = 1\n\nb=x=y\n").unwrap();
        assert_eq!(kv.len(), 2);
        assert_eq!(kv[0].key, "a");
        assert_eq!(kv[1].value, "x=y");
        assert_eq!(parse_kv("a=1\nbogus\n"), Err(2));
    }

    #[test]
    fn derived_seeds_differ() {
        assert_ne!(derive_seed(10, 0), derive_seed(10, 1));
        assert_ne!(derive_seed(10, 0), derive_seed(11, 0));
        assert_eq!(derive_seed(42, 7), derive_seed(42, 7));
    }
}
