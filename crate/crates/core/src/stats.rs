//! Sample statistics: Kendall's tau and a one-sample Kolmogorov-Smirnov test.

use std::cmp::Ordering;

/// Kendall's tau-b in O(n log n) (Knight's merge-sort algorithm).
pub fn kendall_tau(x: &[f64], y: &[f64]) -> f64 {
    assert_eq!(x.len(), y.len(), "kendall_tau: length mismatch");
    let n = x.len();
    if n < 2 {
        return 0.0;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| {
        x[a].partial_cmp(&x[b])
            .unwrap_or(Ordering::Equal)
            .then(y[a].partial_cmp(&y[b]).unwrap_or(Ordering::Equal))
    });
    let pairs = |m: u64| m * m.saturating_sub(1) / 2;
    let mut tie_x = 0u64;
    let mut tie_xy = 0u64;
    let (mut run_x, mut run_xy) = (1u64, 1u64);
    for w in idx.windows(2) {
        let (a, b) = (w[0], w[1]);
        if x[a] == x[b] {
            run_x += 1;
            if y[a] == y[b] {
                run_xy += 1;
            } else {
                tie_xy += pairs(run_xy);
                run_xy = 1;
            }
        } else {
            tie_x += pairs(run_x);
            tie_xy += pairs(run_xy);
            run_x = 1;
            run_xy = 1;
        }
    }
    tie_x += pairs(run_x);
    tie_xy += pairs(run_xy);

    let mut ys: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);

    let mut tie_y = 0u64;
    let mut run = 1u64;
    for w in ys.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            tie_y += pairs(run);
            run = 1;
        }
    }
    tie_y += pairs(run);

    let n0 = pairs(n as u64);
    let num = n0 as f64 - tie_x as f64 - tie_y as f64 + tie_xy as f64 - 2.0 * swaps as f64;
    let den = ((n0 - tie_x) as f64 * (n0 - tie_y) as f64).sqrt();
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

/// Sort `v` ascending, returning the number of inversions.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = {
        let (l, r) = v.split_at_mut(mid);
        let (bl, br) = buf.split_at_mut(mid);
        merge_count(l, bl) + merge_count(r, br)
    };
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            swaps += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    swaps
}

/// One-sample Kolmogorov-Smirnov statistic against the cdf `f`.
pub fn ks_statistic(sample: &[f64], f: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let fx = f(x);
            (fx - i as f64 / n).max((i + 1) as f64 / n - fx)
        })
        .fold(0.0, f64::max)
}

/// Asymptotic p-value of the KS statistic `d` at sample size `n`,
/// with the small-sample correction of Stephens.
pub fn ks_pvalue(d: f64, n: usize) -> f64 {
    let sn = (n as f64).sqrt();
    let lambda = (sn + 0.12 + 0.11 / sn) * d;
    if lambda < 1e-3 {
        return 1.0;
    }
    let mut sum = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = 2.0 * (-1f64).powf(k - 1.0) * (-2.0 * k * k * lambda * lambda).exp();
        sum += term;
        if term.abs() < 1e-16 {
            break;
        }
    }
    sum.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn naive_tau_b(x: &[f64], y: &[f64]) -> f64 {
        let n = x.len();
        let (mut c, mut d, mut tx, mut ty) = (0.0f64, 0.0f64, 0.0f64, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                let sx = (x[i] - x[j]).signum() * if x[i] == x[j] { 0.0 } else { 1.0 };
                let sy = (y[i] - y[j]).signum() * if y[i] == y[j] { 0.0 } else { 1.0 };
                let s = sx * sy;
                if s > 0.0 {
                    c += 1.0;
                } else if s < 0.0 {
                    d += 1.0;
                } else if sx == 0.0 && sy != 0.0 {
                    tx += 1.0;
                } else if sy == 0.0 && sx != 0.0 {
                    ty += 1.0;
                }
            }
        }
        (c - d) / ((c + d + tx) * (c + d + ty)).sqrt()
    }

    #[test]
    fn matches_quadratic_count_with_ties() {
        let x = [1.0, 2.0, 2.0, 3.0, 4.0, 4.0, 4.0, 7.0, 0.5, 2.0];
        let y = [3.0, 1.0, 1.0, 5.0, 2.0, 2.0, 6.0, 6.0, 0.0, 9.0];
        assert_relative_eq!(kendall_tau(&x, &y), naive_tau_b(&x, &y), epsilon = 1e-14);
    }

    #[test]
    fn perfect_orderings() {
        let x: Vec<f64> = (0..50).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| -v * v).collect();
        assert_relative_eq!(kendall_tau(&x, &x), 1.0);
        assert_relative_eq!(kendall_tau(&x, &y), -1.0);
    }

    #[test]
    fn ks_known_values() {
        // lambda = 1.36 is the classical 5% point
        let n = 1_000_000;
        let d = 1.358 / (n as f64).sqrt();
        assert_relative_eq!(ks_pvalue(d, n), 0.05, epsilon = 1e-3);
    }

    proptest::proptest! {
        #[test]
        fn agrees_with_naive(v in proptest::collection::vec((0u8..6, 0u8..6), 2..40)) {
            let x: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let y: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            let fast = kendall_tau(&x, &y);
            let slow = naive_tau_b(&x, &y);
            if slow.is_finite() {
                proptest::prop_assert!((fast - slow).abs() < 1e-12);
            }
        }
    }
}
