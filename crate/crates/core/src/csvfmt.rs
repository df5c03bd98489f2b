/// Locale-free CSV rendering of a float: `0` for zero, shortest round-trip
/// decimal for moderate magnitudes, scientific notation below `1e-4`.
pub fn fmt_num(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.abs() >= 1e-4 || !x.is_finite() {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
