//! Locale-free number formatting for JSON and CSV output.

/// `x` with 17 significant digits in scientific notation, e.g. `1.4436354751788103e0`.
///
/// Non-finite values become `NaN`, `inf` or `-inf`; JSON writers map them to `null`.
pub fn sig17(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "NaN".to_string()
    } else if x > 0.0 {
        "inf".to_string()
    } else {
        "-inf".to_string()
    }
}

/// [`sig17`] for JSON: non-finite values become `null`.
pub fn json_number(x: f64) -> String {
    if x.is_finite() {
        sig17(x)
    } else {
        "null".to_string()
    }
}

/// JSON array of numbers with 17 significant digits.
pub fn json_array(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|&x| json_number(x)).collect();
    format!("[{}]", parts.join(", "))
}

/// CSV row of numbers with 17 significant digits.
pub fn csv_row(xs: &[f64]) -> String {
    xs.iter().map(|&x| sig17(x)).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.5e-300, 1.4436354751788103, 0.0] {
            let s = sig17(x);
            assert_eq!(s.parse::<f64>().unwrap(), x);
            let digits = s.split('e').next().unwrap().chars().filter(|c| c.is_ascii_digit()).count();
            assert_eq!(digits, 17, "{s}");
        }
        assert_eq!(json_number(f64::NAN), "null");
        assert_eq!(csv_row(&[1.0, -0.5]), "1.0000000000000000e0,-5.0000000000000000e-1");
    }
}
