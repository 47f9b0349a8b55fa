//! Tiny least-squares polynomial fitting for the scaling benchmarks.

/// Polynomial fit: `coeffs[i]` multiplies `x^i`.
#[derive(Clone, Debug)]
pub struct PolyFit {
    pub coeffs: Vec<f64>,
    pub r_squared: f64,
}

/// Least-squares fit of a degree-`degree` polynomial via the normal
/// equations. Returns `None` when the system is degenerate (fewer points
/// than coefficients, or a singular matrix).
pub fn polyfit(xs: &[f64], ys: &[f64], degree: usize) -> Option<PolyFit> {
    let n = xs.len();
    let terms = degree + 1;
    if n < terms || ys.len() != n {
        return None;
    }
    // Normal equations A c = b with A[i][j] = sum x^(i+j), b[i] = sum y x^i.
    let mut a = vec![vec![0.0f64; terms]; terms];
    let mut b = vec![0.0f64; terms];
    for (&x, &y) in xs.iter().zip(ys) {
        let mut powers = vec![1.0f64; 2 * terms - 1];
        for p in 1..powers.len() {
            powers[p] = powers[p - 1] * x;
        }
        for i in 0..terms {
            for j in 0..terms {
                a[i][j] += powers[i + j];
            }
            b[i] += y * powers[i];
        }
    }
    let coeffs = solve(&mut a, &mut b)?;
    let mean = ys.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = ys.iter().map(|y| (y - mean) * (y - mean)).sum();
    let ss_res: f64 = xs
        .iter()
        .zip(ys)
        .map(|(&x, &y)| {
            let mut pred = 0.0;
            let mut pow = 1.0;
            for &c in &coeffs {
                pred += c * pow;
                pow *= x;
            }
            (y - pred) * (y - pred)
        })
        .sum();
    let r_squared = if ss_tot == 0.0 {
        if ss_res == 0.0 {
            1.0
        } else {
            0.0
        }
    } else {
        1.0 - ss_res / ss_tot
    };
    Some(PolyFit { coeffs, r_squared })
}

fn solve(a: &mut [Vec<f64>], b: &mut [f64]) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            a[i][col].abs().partial_cmp(&a[j][col].abs()).expect("finite")
        })?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        let pivot_row = a[col].clone();
        for row in col + 1..n {
            let factor = a[row][col] / pivot_row[col];
            for (av, pv) in a[row][col..n].iter_mut().zip(&pivot_row[col..n]) {
                *av -= factor * pv;
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[row][k] * x[k];
        }
        x[row] = acc / a[row][row];
    }
    Some(x)
}

/// Median of a sample; not defined for empty input.
pub fn median(values: &[f64]) -> f64 {
    assert!(!values.is_empty(), "median of empty sample");
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));
    let mid = sorted.len() / 2;
    if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / 2.0
    } else {
        sorted[mid]
    }
}
