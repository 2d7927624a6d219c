//! Number formatting shared by every text file the simulator writes.
//!
//! Two rules: monetary amounts are fixed two-decimal; every other real is
//! printed with at most seven significant digits in fixed notation, trailing
//! zeros trimmed (`0.2845`, `0.0103542`, `0`). Both are idempotent: parsing
//! a formatted number and formatting it again reproduces the same text.

use std::fmt::Write;

/// Appends `x` with up to seven significant digits, fixed notation.
pub fn push_real(buf: &mut String, x: f64) {
    assert!(x.is_finite(), "cannot serialize non-finite value {x}");
    if x == 0.0 {
        buf.push('0');
        return;
    }
    let magnitude = x.abs().log10().floor() as i32;
    let decimals = (6 - magnitude).max(0) as usize;
    let start = buf.len();
    write!(buf, "{x:.decimals$}").expect("writing to a String cannot fail");
    if decimals > 0 {
        let trimmed = buf[start..].trim_end_matches('0').trim_end_matches('.').len();
        buf.truncate(start + trimmed);
    }
    if &buf[start..] == "-0" {
        buf.truncate(start);
        buf.push('0');
    }
}

pub fn format_real(x: f64) -> String {
    let mut s = String::new();
    push_real(&mut s, x);
    s
}

/// Appends `x` with exactly two decimals.
pub fn push_money(buf: &mut String, x: f64) {
    assert!(x.is_finite(), "cannot serialize non-finite amount {x}");
    let start = buf.len();
    write!(buf, "{x:.2}").expect("writing to a String cannot fail");
    if &buf[start..] == "-0.00" {
        buf.truncate(start);
        buf.push_str("0.00");
    }
}

pub fn format_money(x: f64) -> String {
    let mut s = String::new();
    push_money(&mut s, x);
    s
}

/// The value a real takes after one write/read cycle.
pub fn round_real(x: f64) -> f64 {
    format_real(x).parse().expect("formatted reals parse")
}

pub fn round_money(x: f64) -> f64 {
    format_money(x).parse().expect("formatted amounts parse")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn table_values_print_verbatim() {
        for s in ["0.0103542", "0.0021549", "0.2845", "0.2702", "0.1832", "0.1099", "0.0005213"] {
            assert_eq!(format_real(s.parse().unwrap()), s);
        }
        assert_eq!(format_real(0.0), "0");
        assert_eq!(format_real(-0.0), "0");
        assert_eq!(format_real(1.0), "1");
        assert_eq!(format_real(12345678.9), "12345679");
        assert_eq!(format_real(0.123456789), "0.1234568");
        assert_eq!(format_money(6500.0), "6500.00");
        assert_eq!(format_money(7341.254), "7341.25");
        assert_eq!(format_money(-0.0001), "0.00");
        assert_eq!(format_money(27.0), "27.00");
    }

    proptest! {
        #[test]
        fn real_formatting_is_idempotent(x in prop_oneof![0.0f64..1.0, 0.0f64..1e4, 1e-9f64..1e-3]) {
            let once = format_real(x);
            prop_assert!(!once.contains('e'));
            let back: f64 = once.parse().unwrap();
            prop_assert_eq!(format_real(back), once.clone());
            if x > 0.0 {
                prop_assert!(((back - x) / x).abs() <= 5e-7);
            }
        }

        #[test]
        fn money_formatting_is_idempotent(x in 0.0f64..1e7) {
            let once = format_money(x);
            let back: f64 = once.parse().unwrap();
            prop_assert_eq!(format_money(back), once);
            prop_assert!((back - x).abs() <= 0.005 + 1e-9);
        }
    }
}
