//! Output formatting shared by the CSV and JSON writers.

/// Scientific notation with 17 significant digits; parses back to the same `f64`.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fixed_examples() {
        assert_eq!(fmt_f64(0.0), "0.0000000000000000e0");
        assert_eq!(fmt_f64(-1.5), "-1.5000000000000000e0");
        assert_eq!(fmt_f64(1e-3), "1.0000000000000000e-3");
    }

    proptest! {
        #[test]
        fn round_trips(v in proptest::num::f64::NORMAL) {
            let s = fmt_f64(v);
            prop_assert_eq!(s.parse::<f64>().unwrap(), v);
        }
    }
}
