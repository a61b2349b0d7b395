//! Text output helpers shared by file formats.

/// Floats are printed with 17 significant digits so equal values produce
/// byte-identical text and round-trip exactly through f64.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_exact() {
        for &x in &[0.25, 1.0 / 3.0, 6.992153478112319e0, 1e-300, -0.0, f64::MAX] {
            let s = fmt_f64(x);
            let back: f64 = s.parse().unwrap();
            assert_eq!(back.to_bits(), x.to_bits(), "{s}");
        }
    }
}
