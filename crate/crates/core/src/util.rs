//! Small numeric helpers shared by the sizing rules.

/// Rounds a non-negative quantity to the nearest integer, halves going up.
pub fn round_half_up(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    (x + 0.5).floor() as usize
}

/// Ceiling that ignores floating-point noise just above an integer,
/// so `ceil(0.07 * 100)` is 7 rather than 8.
pub fn ceil_count(x: f64) -> usize {
    debug_assert!(x >= 0.0);
    let nearest = x.round();
    if (x - nearest).abs() <= 1e-9 * nearest.max(1.0) {
        nearest as usize
    } else {
        x.ceil() as usize
    }
}
