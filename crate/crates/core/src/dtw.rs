//! Dynamic time warping and the FastDTW multiresolution approximation.
//!
//! Pointwise cost is `|a_i − b_j|`, so distances stay in the units of the
//! curves being compared (lbf for weight curves). No slope constraints or
//! step weights.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::Exec;

/// Monotone, continuous alignment from `(0, 0)` to `(|a|−1, |b|−1)`.
pub type WarpPath = Vec<(usize, usize)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwResult {
    pub distance: f64,
    pub path: WarpPath,
}

/// Cells of the DP grid that may be visited: for row `i`, columns
/// `ranges[i].0 ..= ranges[i].1`.
#[derive(Debug, Clone, PartialEq)]
struct Window {
    ranges: Vec<(usize, usize)>,
}

impl Window {
    fn full(n: usize, m: usize) -> Self {
        Window { ranges: vec![(0, m - 1); n] }
    }

    #[inline]
    fn contains(&self, i: usize, j: usize) -> bool {
        let (lo, hi) = self.ranges[i];
        lo <= j && j <= hi
    }
}

fn check_inputs(a: &[f64], b: &[f64]) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::invalid("DTW needs two non-empty sequences"));
    }
    Ok(())
}

/// DP restricted to `window`. Cells outside the window are unreachable.
fn windowed_dtw(a: &[f64], b: &[f64], window: &Window) -> DtwResult {
    let (n, m) = (a.len(), b.len());
    let mut acc = vec![f64::INFINITY; n * m];
    let at = |i: usize, j: usize| i * m + j;

    for i in 0..n {
        let (lo, hi) = window.ranges[i];
        for j in lo..=hi {
            let cost = (a[i] - b[j]).abs();
            let best = if i == 0 && j == 0 {
                0.0
            } else {
                let diag = if i > 0 && j > 0 { acc[at(i - 1, j - 1)] } else { f64::INFINITY };
                let up = if i > 0 { acc[at(i - 1, j)] } else { f64::INFINITY };
                let left = if j > 0 { acc[at(i, j - 1)] } else { f64::INFINITY };
                diag.min(up).min(left)
            };
            acc[at(i, j)] = cost + best;
        }
    }

    // Backtrace; ties prefer the diagonal, then stepping back in `a`, then in `b`.
    let mut path = Vec::with_capacity(n + m);
    let (mut i, mut j) = (n - 1, m - 1);
    path.push((i, j));
    while i > 0 || j > 0 {
        let value = |ii: usize, jj: usize| {
            if window.contains(ii, jj) {
                acc[at(ii, jj)]
            } else {
                f64::INFINITY
            }
        };
        let diag = if i > 0 && j > 0 { value(i - 1, j - 1) } else { f64::INFINITY };
        let up = if i > 0 { value(i - 1, j) } else { f64::INFINITY };
        let left = if j > 0 { value(i, j - 1) } else { f64::INFINITY };
        if diag <= up && diag <= left {
            i -= 1;
            j -= 1;
        } else if up <= left {
            i -= 1;
        } else {
            j -= 1;
        }
        path.push((i, j));
    }
    path.reverse();
    DtwResult { distance: acc[at(n - 1, m - 1)], path }
}

/// Exact DTW over the full `|a| × |b|` grid.
pub fn dtw_exact(a: &[f64], b: &[f64]) -> Result<DtwResult> {
    check_inputs(a, b)?;
    Ok(windowed_dtw(a, b, &Window::full(a.len(), b.len())))
}

/// Halves the resolution by averaging adjacent pairs; an odd trailing element
/// is carried through unchanged.
pub fn coarsen(x: &[f64]) -> Vec<f64> {
    x.chunks(2)
        .map(|c| if c.len() == 2 { (c[0] + c[1]) / 2.0 } else { c[0] })
        .collect()
}

/// Projects a low-resolution path onto the grid of the next resolution and
/// widens it by `radius` low-resolution cells in every direction.
fn expand_window(low_path: &[(usize, usize)], n: usize, m: usize, radius: usize) -> Window {
    let mut ranges = vec![(usize::MAX, 0usize); n];
    let r = radius as isize;
    let (low_n, low_m) = (n.div_ceil(2) as isize, m.div_ceil(2) as isize);
    for &(pi, pj) in low_path {
        for di in -r..=r {
            let li = pi as isize + di;
            if li < 0 || li >= low_n {
                continue;
            }
            let lj_lo = (pj as isize - r).max(0);
            let lj_hi = (pj as isize + r).min(low_m - 1);
            let col_lo = 2 * lj_lo as usize;
            let col_hi = (2 * lj_hi as usize + 1).min(m - 1);
            for hi_row in [2 * li as usize, 2 * li as usize + 1] {
                if hi_row >= n {
                    continue;
                }
                let slot = &mut ranges[hi_row];
                slot.0 = slot.0.min(col_lo);
                slot.1 = slot.1.max(col_hi);
            }
        }
    }
    debug_assert!(ranges.iter().all(|&(lo, hi)| lo <= hi));
    Window { ranges }
}

/// FastDTW: coarsen, solve recursively, project the path back, and refine
/// inside a window of `radius` cells around it. Inputs no longer than
/// `radius + 2` are solved exactly.
///
/// The result is a valid warping path whose distance is never below the exact
/// DTW distance.
pub fn fastdtw(a: &[f64], b: &[f64], radius: usize) -> Result<DtwResult> {
    check_inputs(a, b)?;
    Ok(fastdtw_inner(a, b, radius))
}

fn fastdtw_inner(a: &[f64], b: &[f64], radius: usize) -> DtwResult {
    let min_size = radius + 2;
    if a.len() <= min_size || b.len() <= min_size {
        return windowed_dtw(a, b, &Window::full(a.len(), b.len()));
    }
    let low = fastdtw_inner(&coarsen(a), &coarsen(b), radius);
    let window = expand_window(&low.path, a.len(), b.len(), radius);
    windowed_dtw(a, b, &window)
}

/// Checks the warping-path invariants against sequence lengths.
pub fn is_valid_path(path: &[(usize, usize)], n: usize, m: usize) -> bool {
    if path.first() != Some(&(0, 0)) || path.last() != Some(&(n.wrapping_sub(1), m.wrapping_sub(1))) {
        return false;
    }
    path.windows(2).all(|w| {
        let (di, dj) = (w[1].0.wrapping_sub(w[0].0), w[1].1.wrapping_sub(w[0].1));
        matches!((di, dj), (1, 0) | (0, 1) | (1, 1))
    })
}

/// Sum of pointwise costs along `path`, accumulated from the start.
pub fn path_cost(a: &[f64], b: &[f64], path: &[(usize, usize)]) -> f64 {
    path.iter().fold(0.0, |acc, &(i, j)| (a[i] - b[j]).abs() + acc)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DtwSummary {
    pub distances: Vec<f64>,
    pub mean: f64,
    pub median: f64,
    pub min: f64,
    pub max: f64,
}

impl DtwSummary {
    pub fn from_distances(distances: Vec<f64>) -> Result<Self> {
        if distances.is_empty() {
            return Err(Error::invalid("cannot summarize an empty set of distances"));
        }
        let mut sorted = distances.clone();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let median = if n % 2 == 1 { sorted[n / 2] } else { (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0 };
        let mean = distances.iter().sum::<f64>() / n as f64;
        Ok(DtwSummary { mean, median, min: sorted[0], max: sorted[n - 1], distances })
    }
}

/// FastDTW distance for every `(predicted, actual)` pair plus aggregates.
pub fn score_testset(pairs: &[(Vec<f64>, Vec<f64>)], radius: usize) -> Result<DtwSummary> {
    score_testset_with(pairs, radius, Exec::default())
}

pub fn score_testset_with(pairs: &[(Vec<f64>, Vec<f64>)], radius: usize, exec: Exec) -> Result<DtwSummary> {
    if pairs.is_empty() {
        return Err(Error::invalid("no curve pairs to score"));
    }
    let distances = exec
        .map(pairs, |(p, a)| fastdtw(p, a, radius).map(|r| r.distance))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    DtwSummary::from_distances(distances)
}

#[derive(Serialize)]
struct AlignmentRow {
    i: usize,
    j: usize,
    a: f64,
    b: f64,
    cost: f64,
}

/// Writes `i,j,a,b,cost` for every cell on the warping path.
pub fn export_alignment(result: &DtwResult, a: &[f64], b: &[f64], path: impl AsRef<Path>) -> Result<()> {
    let out = path.as_ref();
    if !is_valid_path(&result.path, a.len(), b.len()) {
        return Err(Error::invalid("warping path does not fit the given sequences"));
    }
    let mut w = csv::Writer::from_path(out).map_err(|e| Error::csv(out, e))?;
    for &(i, j) in &result.path {
        w.serialize(AlignmentRow { i, j, a: a[i], b: b[j], cost: (a[i] - b[j]).abs() })
            .map_err(|e| Error::csv(out, e))?;
    }
    w.flush().map_err(|e| Error::io(out, e))
}

/// Writes one `id,distance` row per sequence followed by `#`-prefixed
/// aggregate lines.
pub fn export_summary(ids: &[String], summary: &DtwSummary, path: impl AsRef<Path>) -> Result<()> {
    let out = path.as_ref();
    if ids.len() != summary.distances.len() {
        return Err(Error::invalid("one id per distance is required"));
    }
    let file = File::create(out).map_err(|e| Error::io(out, e))?;
    let mut w = BufWriter::new(file);
    let write = |w: &mut BufWriter<File>| -> std::io::Result<()> {
        writeln!(w, "id,distance")?;
        for (id, d) in ids.iter().zip(&summary.distances) {
            writeln!(w, "{id},{d}")?;
        }
        writeln!(w, "# count,{}", summary.distances.len())?;
        writeln!(w, "# mean,{}", summary.mean)?;
        writeln!(w, "# median,{}", summary.median)?;
        writeln!(w, "# min,{}", summary.min)?;
        writeln!(w, "# max,{}", summary.max)?;
        w.flush()
    };
    write(&mut w).map_err(|e| Error::io(out, e))
}
