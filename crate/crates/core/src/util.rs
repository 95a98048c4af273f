/// Formats a number with at most ten decimals and no trailing zeros, so that
/// accumulated float noise (0.4 + 0.7) reads as `1.1` in diagnostics.
pub(crate) fn fmt_num(x: f64) -> String {
    let s = format!("{x:.10}");
    let s = s.trim_end_matches('0').trim_end_matches('.');
    if s == "-0" {
        "0".to_string()
    } else {
        s.to_string()
    }
}

/// Mixed-radix index of a tuple of grid indices, first coordinate most significant.
pub(crate) fn tuple_index(profile: &[usize], radix: usize) -> usize {
    profile.iter().fold(0, |acc, &g| acc * radix + g)
}

/// Inverse of [`tuple_index`].
pub(crate) fn tuple_from_index(mut idx: usize, radix: usize, len: usize, out: &mut [usize]) {
    for slot in out[..len].iter_mut().rev() {
        *slot = idx % radix;
        idx /= radix;
    }
}

/// `base^exp` with overflow reported as `None`.
pub(crate) fn checked_pow(base: usize, exp: usize) -> Option<u128> {
    let mut acc: u128 = 1;
    for _ in 0..exp {
        acc = acc.checked_mul(base as u128)?;
    }
    Some(acc)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fmt_num_trims() {
        assert_eq!(fmt_num(0.4 + 0.7), "1.1");
        assert_eq!(fmt_num(2.0), "2");
        assert_eq!(fmt_num(-0.0), "0");
        assert_eq!(fmt_num(0.25), "0.25");
    }

    #[test]
    fn tuple_roundtrip() {
        let mut out = [0usize; 3];
        for idx in 0..27 {
            tuple_from_index(idx, 3, 3, &mut out);
            assert_eq!(tuple_index(&out, 3), idx);
        }
        assert_eq!(tuple_index(&[1, 0], 11), 11);
    }
}
