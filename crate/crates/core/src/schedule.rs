//! Learning-rate schedule: constant for the first half of training, then a
//! linear decay reaching zero at the final iteration.

/// Learning rate at iteration `t` of `total`.
pub fn lr_schedule(t: u64, total: u64, initial_lr: f64) -> f64 {
    if total == 0 {
        return initial_lr;
    }
    let t = t.min(total) as f64;
    let total = total as f64;
    let half = total / 2.0;
    if t < half {
        initial_lr
    } else {
        initial_lr * (total - t) / (total - half)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoints_and_midpoint() {
        assert_eq!(lr_schedule(0, 2000, 2e-4), 2e-4);
        assert_eq!(lr_schedule(999, 2000, 2e-4), 2e-4);
        assert_eq!(lr_schedule(2000, 2000, 2e-4), 0.0);
        assert!((lr_schedule(1500, 2000, 2e-4) - 1e-4).abs() < 1e-18);
        assert!((lr_schedule(3, 4, 2e-4) - 1e-4).abs() < 1e-18);
    }

    #[test]
    fn non_increasing() {
        let mut prev = f64::INFINITY;
        for t in 0..=101 {
            let lr = lr_schedule(t, 101, 1.0);
            assert!(lr <= prev);
            prev = lr;
        }
    }
}
