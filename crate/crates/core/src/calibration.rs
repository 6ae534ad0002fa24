//! Identification of the characteristic per-segment bend angle from the
//! measured chord of a constant-pinch, constant-roll arc.

use std::f64::consts::PI;

use crate::error::{invalid, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationInput {
    pub segment_length: f64,
    pub segments: usize,
    pub measured_chords: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationResult {
    /// Radians.
    pub theta_star: f64,
    pub chord_mean: f64,
    /// Sample standard deviation of the trials; zero for a single trial.
    pub chord_std: f64,
    /// `|C(theta_star) - chord_mean|`, mm.
    pub residual: f64,
}

impl CalibrationResult {
    pub fn is_straight(&self) -> bool {
        self.theta_star == 0.0
    }
}

/// Upper end of the admissible bend range, `2 pi / n`.
pub fn theta_upper(segments: usize) -> f64 {
    2.0 * PI / segments as f64
}

/// End-to-end chord of `n` equal links of length `l`, each turned by `theta`:
/// `l sin(n theta / 2) / sin(theta / 2)`.
pub fn chord_closed_form(l: f64, n: usize, theta: f64) -> Result<f64> {
    if n < 1 || !(l > 0.0) || !l.is_finite() {
        return invalid("chord needs n >= 1 and l > 0");
    }
    let upper = theta_upper(n);
    if !(0.0..=upper).contains(&theta) {
        return invalid(format!("theta {} outside [0, 2pi/n = {}]", theta, upper));
    }
    Ok(chord_unchecked(l, n, theta))
}

fn chord_unchecked(l: f64, n: usize, theta: f64) -> f64 {
    if theta == 0.0 {
        return n as f64 * l;
    }
    if theta == theta_upper(n) {
        return 0.0;
    }
    l * (0.5 * n as f64 * theta).sin() / (0.5 * theta).sin()
}

/// Root of a strictly decreasing `f` on `[lo, hi]` with `f(lo) >= 0 >= f(hi)`.
///
/// Halves the bracket until its width is below `tol` or it can no longer be
/// split in floating point, then returns whichever end has the smaller residual.
pub fn bisect_decreasing<F: Fn(f64) -> f64>(f: F, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let mut f_lo = f(lo);
    let mut f_hi = f(hi);
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= tol || mid <= lo || mid >= hi {
            break;
        }
        let f_mid = f(mid);
        if f_mid == 0.0 {
            return mid;
        }
        if f_mid > 0.0 {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
            f_hi = f_mid;
        }
    }
    if f_lo.abs() <= f_hi.abs() {
        lo
    } else {
        hi
    }
}

/// Solves `C(theta) = mean(chords)` for theta in `[0, 2pi/n)`.
///
/// The bracket is split down to adjacent doubles, which is tighter than
/// 1e-12 rad and keeps the chord residual at rounding level for every
/// admissible `(l, n)`.
pub fn solve_theta(input: &CalibrationInput) -> Result<CalibrationResult> {
    let l = input.segment_length;
    let n = input.segments;
    if n < 2 {
        return invalid("calibration needs at least two segments");
    }
    if !(l > 0.0) || !l.is_finite() {
        return invalid("segment length must be positive");
    }
    if input.measured_chords.is_empty() {
        return invalid("no chord measurements");
    }
    let full = n as f64 * l;
    for &c in &input.measured_chords {
        if !c.is_finite() || c <= 0.0 {
            return invalid(format!("chord {} must be positive", c));
        }
        if c > full {
            return invalid(format!("chord exceeds n·l ({} > {})", c, full));
        }
    }
    let count = input.measured_chords.len() as f64;
    let mean = input.measured_chords.iter().sum::<f64>() / count;
    let std = if input.measured_chords.len() > 1 {
        let ss: f64 = input.measured_chords.iter().map(|c| (c - mean).powi(2)).sum();
        (ss / (count - 1.0)).sqrt()
    } else {
        0.0
    };
    let theta_star = if mean >= full {
        0.0
    } else {
        bisect_decreasing(|t| chord_unchecked(l, n, t) - mean, 0.0, theta_upper(n), 0.0)
    };
    let residual = (chord_unchecked(l, n, theta_star) - mean).abs();
    Ok(CalibrationResult {
        theta_star,
        chord_mean: mean,
        chord_std: std,
        residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn input(chords: &[f64]) -> CalibrationInput {
        CalibrationInput {
            segment_length: 2.0,
            segments: 10,
            measured_chords: chords.to_vec(),
        }
    }

    #[test]
    fn chord_limits() {
        assert_eq!(chord_closed_form(2.0, 10, 0.0).unwrap(), 20.0);
        assert_eq!(chord_closed_form(2.0, 10, 2.0 * PI / 10.0).unwrap(), 0.0);
        assert!(chord_closed_form(2.0, 10, -0.1).is_err());
        assert!(chord_closed_form(2.0, 10, 0.7).is_err());
    }

    #[test]
    fn chord_at_reported_angle() {
        // 40-digit evaluation of the closed form
        let c = chord_closed_form(2.0, 10, 6.89f64.to_radians()).unwrap();
        assert_relative_eq!(c, 18.827869650514415, epsilon = 1e-12);
    }

    #[test]
    fn straight_wire_gives_zero() {
        let r = solve_theta(&input(&[20.0])).unwrap();
        assert_eq!(r.theta_star, 0.0);
        assert!(r.is_straight());
        assert_eq!(r.residual, 0.0);
    }

    #[test]
    fn mean_chord_of_three_trials() {
        // root of the closed form computed to 40 digits: 0.12676733707782938808
        let r = solve_theta(&input(&[18.49, 18.7, 18.91])).unwrap();
        assert_relative_eq!(r.chord_mean, 18.7, epsilon = 1e-12);
        assert_relative_eq!(r.chord_std, 0.21, epsilon = 1e-12);
        assert_relative_eq!(r.theta_star, 0.126_767_337_077_829_4, epsilon = 1e-12);
        assert!(r.residual < 1e-9);
    }

    #[test]
    fn identical_trials_have_zero_spread() {
        let r = solve_theta(&input(&[18.7, 18.7, 18.7])).unwrap();
        assert_eq!(r.chord_std, 0.0);
    }

    #[test]
    fn rejects_out_of_range_chords() {
        assert!(solve_theta(&input(&[25.0])).is_err());
        assert!(solve_theta(&input(&[0.0])).is_err());
        assert!(solve_theta(&input(&[])).is_err());
        let mut one = input(&[1.0]);
        one.segments = 1;
        assert!(solve_theta(&one).is_err());
    }

    #[test]
    fn chord_strictly_decreasing_on_grid() {
        for n in [2usize, 5, 10, 24] {
            let upper = theta_upper(n);
            let mut prev = f64::INFINITY;
            for i in 0..=10_000 {
                let c = chord_closed_form(2.0, n, upper * i as f64 / 10_000.0).unwrap();
                assert!(c < prev, "n={} i={}", n, i);
                prev = c;
            }
        }
    }

    #[test]
    fn bisection_generic() {
        let r = bisect_decreasing(|x| 2.0 - x * x, 0.0, 2.0, 1e-14);
        assert_relative_eq!(r, std::f64::consts::SQRT_2, epsilon = 1e-13);
    }

    proptest! {
        #[test]
        fn solve_inverts_closed_form(l in 0.5..5.0f64, n in 2usize..30, frac in 0.001..0.999f64) {
            let theta = frac * theta_upper(n);
            let c = chord_closed_form(l, n, theta).unwrap();
            let r = solve_theta(&CalibrationInput {
                segment_length: l, segments: n, measured_chords: vec![c],
            }).unwrap();
            prop_assert!((r.theta_star - theta).abs() < 1e-9);
            prop_assert!(r.residual < 1e-9);
            prop_assert!(r.theta_star >= 0.0 && r.theta_star < theta_upper(n));
        }
    }
}
