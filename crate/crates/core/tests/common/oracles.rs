//! Brute-force reference implementations. Each one is written from the
//! definition and shares no code with the library.

use std::f64::consts::PI;

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
#[allow(clippy::needless_range_loop)]
pub fn jacobi_eigenvalues(mut a: Vec<Vec<f64>>) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q] == 0.0 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let (akp, akq) = (a[k][p], a[k][q]);
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let (apk, aqk) = (a[p][k], a[q][k]);
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[i][i]).collect()
}

/// Sample covariance (N - 1) of row vectors.
pub fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = rows.len() as f64;
    let d = rows[0].len();
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n).collect();
    (0..d)
        .map(|i| {
            (0..d)
                .map(|j| rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / (n - 1.0))
                .collect()
        })
        .collect()
}

/// Geometric mean of the semi-axes `sqrt(eigenvalue)`.
pub fn msa(rows: &[Vec<f64>]) -> f64 {
    let eig = jacobi_eigenvalues(covariance(rows));
    let d = eig.len() as f64;
    eig.iter().map(|l| l.sqrt()).product::<f64>().powf(1.0 / d)
}

/// Butterworth band-pass magnitude after the bilinear transform with
/// pre-warped edges: the analog frequency is mapped onto the low-pass
/// prototype and `|H| = 1 / sqrt(1 + v^(2N))`.
pub fn butterworth_bandpass_gain(freq: f64, low: f64, high: f64, order: usize, fs: f64) -> f64 {
    let warp = |f: f64| 2.0 * fs * (PI * f / fs).tan();
    let (wl, wh) = (warp(low), warp(high));
    if freq <= 0.0 || freq >= fs / 2.0 {
        return 0.0;
    }
    let w = warp(freq);
    let v = (w * w - wl * wh) / (w * (wh - wl));
    1.0 / (1.0 + v.powi(2 * order as i32)).sqrt()
}

/// Start offsets of full windows, found by testing every candidate offset.
pub fn window_starts(total: usize, window: usize, stride: usize) -> Vec<usize> {
    (0..total).filter(|s| s % stride == 0 && s + window <= total).collect()
}

pub fn cohens_dz(a: &[f64], b: &[f64]) -> f64 {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    // sample variance as half the mean squared pairwise difference
    let mut pairs = 0.0;
    for i in 0..d.len() {
        for j in 0..i {
            pairs += (d[i] - d[j]) * (d[i] - d[j]);
        }
    }
    let var = pairs / (n * (n - 1.0));
    m / var.sqrt()
}

pub fn pearson_r(x: &[f64], y: &[f64]) -> f64 {
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for i in 0..x.len() {
        for j in 0..i {
            let dx = x[i] - x[j];
            let dy = y[i] - y[j];
            sxy += dx * dy;
            sxx += dx * dx;
            syy += dy * dy;
        }
    }
    sxy / (sxx * syy).sqrt()
}

/// Rank by counting: values below plus the mean position among equals.
fn rank(values: &[f64], i: usize) -> f64 {
    let below = values.iter().filter(|v| **v < values[i]).count() as f64;
    let equal = values.iter().filter(|v| **v == values[i]).count() as f64;
    below + (equal + 1.0) / 2.0
}

pub struct WilcoxonOracle {
    pub w_plus: f64,
    pub w_minus: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Signed-rank test by enumerating all `2^n` sign assignments. Two-sided p is
/// twice the smaller tail, capped at 1.
pub fn wilcoxon(a: &[f64], b: &[f64]) -> WilcoxonOracle {
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|v| *v != 0.0).collect();
    let mags: Vec<f64> = d.iter().map(|v| v.abs()).collect();
    let ranks: Vec<f64> = (0..d.len()).map(|i| rank(&mags, i)).collect();
    let w_plus: f64 = (0..d.len()).filter(|&i| d[i] > 0.0).map(|i| ranks[i]).sum();
    let w_minus: f64 = (0..d.len()).filter(|&i| d[i] < 0.0).map(|i| ranks[i]).sum();
    let n = d.len();
    let (mut lower, mut upper) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        let w: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if w <= w_plus + 1e-9 {
            lower += 1;
        }
        if w >= w_plus - 1e-9 {
            upper += 1;
        }
    }
    let p = (2.0 * lower.min(upper) as f64 / (1u64 << n) as f64).min(1.0);
    WilcoxonOracle {
        w_plus,
        w_minus,
        p_value: p,
        n,
    }
}

/// Learnable classifier scalars counted one tensor at a time: per block a
/// `[c_out, c_in, k]` kernel, a bias and the BN scale and shift, then the
/// `[classes, c_last]` output layer and its bias.
pub fn tcn_parameter_count(in_channels: usize, channels: &[usize], kernel: usize, classes: usize) -> usize {
    let mut shapes: Vec<Vec<usize>> = Vec::new();
    let mut prev = in_channels;
    for &c in channels {
        shapes.push(vec![c, prev, kernel]);
        shapes.push(vec![c]);
        shapes.push(vec![c]);
        shapes.push(vec![c]);
        prev = c;
    }
    shapes.push(vec![classes, prev]);
    shapes.push(vec![classes]);
    shapes.iter().map(|s| s.iter().product::<usize>()).sum()
}
