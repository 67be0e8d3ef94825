/// 17 significant digits in scientific notation; parses back to the same bits.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Optional metric cell for CSV output; empty when absent.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_values() {
        assert_eq!(fmt_f64(0.5), "5.0000000000000000e-1");
        assert_eq!(
            fmt_f64(-0.0).parse::<f64>().unwrap().to_bits(),
            (-0.0f64).to_bits()
        );
        assert_eq!(fmt_opt(None), "");
    }

    proptest! {
        #[test]
        fn round_trips_bit_exactly(bits in any::<u64>()) {
            let v = f64::from_bits(bits);
            prop_assume!(v.is_finite());
            let s = fmt_f64(v);
            let back: f64 = s.parse().unwrap();
            prop_assert_eq!(back.to_bits(), v.to_bits());
            prop_assert_eq!(fmt_f64(back), s);
        }
    }
}
