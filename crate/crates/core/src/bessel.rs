//! Modified Bessel functions of the first kind, orders 0 and 1, by their
//! positive power series.
//!
//! The fraction densities need `I_0(2 sqrt(y))` and `I_1(2 sqrt(y)) / sqrt(y)`
//! for `y = f (1 - f) r_alpha r_beta >= 0`. Both are entire in `y` with
//! positive coefficients, so summing the series in `y` directly has no
//! cancellation and no `1/sqrt(y)` singularity at `y = 0`.

/// `sum_j y^j / (j!)^2`, equal to `I_0(2 sqrt(y))`.
pub fn series_i0(y: f64) -> f64 {
    sum_series(y, 0.0)
}

/// `sum_j y^j / (j! (j+1)!)`, equal to `I_1(2 sqrt(y)) / sqrt(y)`.
pub fn series_i1(y: f64) -> f64 {
    sum_series(y, 1.0)
}

fn sum_series(y: f64, shift: f64) -> f64 {
    debug_assert!(y >= 0.0);
    let mut term = 1.0;
    let mut sum = term;
    let mut j = 0.0;
    loop {
        j += 1.0;
        term *= y / (j * (j + shift));
        sum += term;
        if term <= sum * 1e-17 || term == 0.0 {
            break;
        }
        if j > 10_000.0 {
            break;
        }
    }
    sum
}

/// Modified Bessel function `I_0(x)`, `x >= 0`.
pub fn bessel_i0(x: f64) -> f64 {
    let half = 0.5 * x.abs();
    series_i0(half * half)
}

/// Modified Bessel function `I_1(x)`.
pub fn bessel_i1(x: f64) -> f64 {
    let half = 0.5 * x;
    half * series_i1(half * half)
}
