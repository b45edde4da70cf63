//! Weighted least-squares projection onto monotone sequences
//! (pool-adjacent-violators).

/// Closest nonincreasing sequence to `values` in weighted least squares.
pub fn nonincreasing_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    let neg: Vec<f64> = values.iter().map(|v| -v).collect();
    nondecreasing_fit(&neg, weights).into_iter().map(|v| -v).collect()
}

/// Closest nondecreasing sequence to `values` in weighted least squares.
pub fn nondecreasing_fit(values: &[f64], weights: &[f64]) -> Vec<f64> {
    assert_eq!(values.len(), weights.len(), "one weight per value");
    // blocks of (mean, weight, length)
    let mut blocks: Vec<(f64, f64, usize)> = Vec::with_capacity(values.len());
    for (&v, &w) in values.iter().zip(weights) {
        let mut cur = (v, w, 1usize);
        while let Some(&(m, bw, len)) = blocks.last() {
            if m <= cur.0 {
                break;
            }
            blocks.pop();
            let tw = bw + cur.1;
            let mean = if tw > 0.0 {
                (m * bw + cur.0 * cur.1) / tw
            } else {
                0.5 * (m + cur.0)
            };
            cur = (mean, tw, len + cur.2);
        }
        blocks.push(cur);
    }
    let mut out = Vec::with_capacity(values.len());
    for (m, _, len) in blocks {
        out.extend(std::iter::repeat_n(m, len));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pools_a_single_violation() {
        let fit = nondecreasing_fit(&[1.0, 3.0, 2.0, 4.0], &[1.0; 4]);
        assert_eq!(fit, vec![1.0, 2.5, 2.5, 4.0]);
        let fit = nonincreasing_fit(&[3.0, 3.0, 3.0, 5.0, 1.0], &[1.0; 5]);
        assert_eq!(fit, vec![3.5, 3.5, 3.5, 3.5, 1.0]);
    }

    #[test]
    fn respects_weights() {
        let fit = nondecreasing_fit(&[2.0, 0.0], &[3.0, 1.0]);
        assert_eq!(fit, vec![1.5, 1.5]);
    }

    proptest! {
        #[test]
        fn output_is_monotone_and_mean_preserving(v in prop::collection::vec(-10.0f64..10.0, 1..60)) {
            let w = vec![1.0; v.len()];
            let fit = nonincreasing_fit(&v, &w);
            for pair in fit.windows(2) {
                prop_assert!(pair[0] >= pair[1] - 1e-12);
            }
            let a: f64 = v.iter().sum();
            let b: f64 = fit.iter().sum();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn monotone_input_is_a_fixed_point(mut v in prop::collection::vec(-10.0f64..10.0, 1..60)) {
            v.sort_by(|a, b| b.partial_cmp(a).unwrap());
            let fit = nonincreasing_fit(&v, &vec![1.0; v.len()]);
            prop_assert_eq!(fit, v);
        }
    }
}
