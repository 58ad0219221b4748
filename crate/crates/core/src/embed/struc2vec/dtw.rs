//! Dynamic time warping over ordered degree sequences.

/// Ratio cost between two degrees, `max / min - 1`. Degrees below one are
/// treated as one so isolated nodes stay comparable.
#[inline]
pub fn degree_cost(a: usize, b: usize) -> f64 {
    let a = a.max(1) as f64;
    let b = b.max(1) as f64;
    a.max(b) / a.min(b) - 1.0
}

/// Full (unwindowed) DTW distance between two degree sequences.
///
/// An empty sequence is compared as `[1]`; two empty sequences are at
/// distance zero.
pub fn dtw_distance(a: &[usize], b: &[usize]) -> f64 {
    const UNIT: [usize; 1] = [1];
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return 0.0,
        (true, false) => return dtw_nonempty(&UNIT, b),
        (false, true) => return dtw_nonempty(a, &UNIT),
        _ => {}
    }
    dtw_nonempty(a, b)
}

fn dtw_nonempty(a: &[usize], b: &[usize]) -> f64 {
    let m = b.len();
    let mut prev = vec![f64::INFINITY; m];
    let mut cur = vec![0.0; m];
    for (i, &x) in a.iter().enumerate() {
        for (j, &y) in b.iter().enumerate() {
            let best = match (i, j) {
                (0, 0) => 0.0,
                (0, _) => cur[j - 1],
                (_, 0) => prev[j],
                _ => prev[j].min(cur[j - 1]).min(prev[j - 1]),
            };
            cur[j] = degree_cost(x, y) + best;
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[m - 1]
}
