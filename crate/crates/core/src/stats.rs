//! Trial statistics: order-statistic quantiles, Clopper-Pearson intervals,
//! and a parallel/serial trial runner with stream-indexed determinism.

use rayon::prelude::*;
use statrs::distribution::{Beta, ContinuousCDF};

/// One-sided-safe two-sided Clopper-Pearson interval for `successes` out of
/// `trials` at the given confidence (e.g. 0.99). Returns (lower, upper).
pub fn clopper_pearson(successes: u64, trials: u64, confidence: f64) -> (f64, f64) {
    assert!(trials > 0 && successes <= trials);
    assert!((0.0..1.0).contains(&(1.0 - confidence)));
    let alpha = 1.0 - confidence;
    let x = successes as f64;
    let n = trials as f64;
    let lower = if successes == 0 {
        0.0
    } else {
        Beta::new(x, n - x + 1.0).unwrap().inverse_cdf(alpha / 2.0)
    };
    let upper = if successes == trials {
        1.0
    } else {
        Beta::new(x + 1.0, n - x).unwrap().inverse_cdf(1.0 - alpha / 2.0)
    };
    (lower, upper)
}

/// Exact order-statistic quantile of a sorted slice: the element at rank
/// ceil(q * len), clamped to the ends. No interpolation, so the result is
/// one of the observed values.
pub fn quantile_sorted<T: Clone>(sorted: &[T], q: f64) -> T {
    assert!(!sorted.is_empty());
    assert!((0.0..=1.0).contains(&q));
    let idx = ((q * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    sorted[idx - 1].clone()
}

pub fn median_sorted<T: Clone>(sorted: &[T]) -> T {
    quantile_sorted(sorted, 0.5)
}

/// Run `trials` independent jobs, each keyed by its trial index. With
/// `parallel` the jobs run on the rayon pool; results are ordered by index
/// either way, and each job derives all randomness from its own index, so
/// both modes produce identical output.
pub fn run_trials<T: Send>(trials: u64, parallel: bool, job: impl Fn(u64) -> T + Sync) -> Vec<T> {
    if parallel {
        (0..trials).into_par_iter().map(|i| job(i)).collect()
    } else {
        (0..trials).map(job).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn clopper_pearson_edges() {
        let (lo, hi) = clopper_pearson(0, 100, 0.99);
        assert_eq!(lo, 0.0);
        assert!(hi > 0.0 && hi < 0.1);
        let (lo, hi) = clopper_pearson(100, 100, 0.99);
        assert_eq!(hi, 1.0);
        assert!(lo > 0.9);
    }

    #[test]
    fn clopper_pearson_brackets_half() {
        let (lo, hi) = clopper_pearson(5000, 10000, 0.99);
        assert!(lo < 0.5 && 0.5 < hi);
        assert!(lo > 0.48 && hi < 0.52);
    }

    #[test]
    fn quantiles_pick_observed_values() {
        let v = vec![1, 2, 3, 4];
        assert_eq!(quantile_sorted(&v, 0.0), 1);
        assert_eq!(median_sorted(&v), 2);
        assert_eq!(quantile_sorted(&v, 1.0), 4);
    }

    #[test]
    fn parallel_and_serial_trials_agree() {
        let f = |i: u64| i.wrapping_mul(0x9E3779B97F4A7C15).rotate_left(17);
        let a = run_trials(64, false, f);
        let b = run_trials(64, true, f);
        assert_eq!(a, b);
    }
}
