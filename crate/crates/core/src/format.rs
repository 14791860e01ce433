//! Decimal rendering used by every report.

/// Renders `x` with `digits` significant digits in positional notation.
///
/// Zero renders as `0.` followed by `digits` zeros.
pub fn sig(x: f64, digits: usize) -> String {
    let digits = digits.max(1);
    if x == 0.0 {
        return format!("{:.*}", digits, 0.0);
    }
    if !x.is_finite() {
        return x.to_string();
    }
    // Let the exponent formatter do the rounding so 9.99.. -> 10.0 is handled.
    let e = format!("{:.*e}", digits - 1, x);
    let exp: i32 = e.rsplit('e').next().and_then(|s| s.parse().ok()).unwrap_or(0);
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    format!("{:.*}", decimals, x)
}

/// Fixed number of decimals.
pub fn fixed(x: f64, decimals: usize) -> String {
    format!("{:.*}", decimals, x)
}

pub(crate) fn csv_escape(field: &str) -> String {
    if field.contains([',', '"', '\n']) {
        format!("\"{}\"", field.replace('"', "\"\""))
    } else {
        field.to_string()
    }
}
