//! Number formatting shared by the CSV and JSON writers.

/// Round to `digits` significant decimal digits.
pub fn round_sig(x: f64, digits: usize) -> f64 {
    if x == 0.0 || !x.is_finite() {
        return x;
    }
    let digits = digits.max(1);
    format!("{:.*e}", digits - 1, x).parse().unwrap_or(x)
}

/// Shortest decimal text for `x` after rounding to 12 significant digits.
pub fn sig12(x: f64) -> String {
    let r = round_sig(x, 12);
    if r == 0.0 {
        // avoid "-0"
        "0".to_string()
    } else {
        format!("{r}")
    }
}
