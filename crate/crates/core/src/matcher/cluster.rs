//! Deterministic Lloyd's k-means over grid coordinates.
//!
//! The primary start takes the most extreme-scoring point for the polarity,
//! then repeatedly the point farthest from all chosen centers. Each start runs
//! Lloyd iterations to a fixed point followed by single-point transfer
//! refinement. Further starts (farthest-point from every other seed point, and
//! every `c`-subset of the points when there are few of them) are tried and a
//! start only replaces the incumbent if it strictly lowers the SSE. Every tie
//! resolves to the smaller row-major position or the earlier start, so the
//! result is a pure function of the input.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use super::topk::rank;
use super::{GridPoint, MatchParams, Polarity};
use crate::error::{bail, Result};

/// Cluster center in grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Center {
    pub row: f64,
    pub col: f64,
    /// Score of the snapped member, or the mean member score without snapping.
    pub score: f64,
}

/// Full outcome of a clustering run.
#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Output centers, best score first.
    pub centers: Vec<Center>,
    /// Final cluster index of every input point, in input order. Cluster
    /// indices refer to the internal (pre-sort) numbering.
    pub assignment: Vec<usize>,
    /// Within-cluster sum of squares after each Lloyd update of the winning
    /// start, plus one entry after transfer refinement if it moved anything.
    pub sse_history: Vec<f64>,
    /// Whether the assignment stopped changing before the iteration cap.
    pub converged: bool,
}

impl Clustering {
    /// Within-cluster sum of squared distances to the cluster means of the
    /// final partition.
    pub fn partition_sse(&self, points: &[GridPoint]) -> f64 {
        let k = self.assignment.iter().copied().max().map_or(0, |m| m + 1);
        partition_sse(points, &self.assignment, k)
    }
}

fn coords(p: &GridPoint) -> (f64, f64) {
    (p.row as f64, p.col as f64)
}

fn dist2(a: (f64, f64), b: (f64, f64)) -> f64 {
    let (dr, dc) = (a.0 - b.0, a.1 - b.1);
    dr * dr + dc * dc
}

fn position(p: &GridPoint) -> (usize, usize) {
    (p.row, p.col)
}

fn means(points: &[GridPoint], assignment: &[usize], k: usize) -> Vec<Option<(f64, f64)>> {
    let mut sums = vec![(0.0, 0.0, 0usize); k];
    for (p, &a) in points.iter().zip(assignment) {
        let (r, c) = coords(p);
        sums[a].0 += r;
        sums[a].1 += c;
        sums[a].2 += 1;
    }
    sums.into_iter()
        .map(|(r, c, n)| (n > 0).then(|| (r / n as f64, c / n as f64)))
        .collect()
}

/// Sum of squared distances of points to the mean of their cluster.
pub fn partition_sse(points: &[GridPoint], assignment: &[usize], k: usize) -> f64 {
    let m = means(points, assignment, k);
    points
        .iter()
        .zip(assignment)
        .map(|(p, &a)| m[a].map_or(0.0, |mu| dist2(coords(p), mu)))
        .sum()
}

fn extreme_point(points: &[GridPoint], polarity: Polarity) -> usize {
    (0..points.len())
        .min_by(|&a, &b| {
            rank(polarity, (points[a].score, 0), (points[b].score, 0))
                .then(position(&points[a]).cmp(&position(&points[b])))
        })
        .expect("at least one point")
}

/// Farthest-point initialization starting from `points[first]`.
fn farthest_point_init(points: &[GridPoint], c: usize, first: usize) -> Vec<(f64, f64)> {
    let mut centers = vec![coords(&points[first])];
    let mut nearest: Vec<f64> = points
        .iter()
        .map(|p| dist2(coords(p), centers[0]))
        .collect();
    while centers.len() < c {
        let next = (0..points.len())
            .max_by(|&a, &b| {
                nearest[a]
                    .partial_cmp(&nearest[b])
                    .unwrap_or(Ordering::Equal)
                    .then(position(&points[b]).cmp(&position(&points[a])))
            })
            .expect("at least one point");
        let center = coords(&points[next]);
        for (d, p) in nearest.iter_mut().zip(points) {
            *d = d.min(dist2(coords(p), center));
        }
        centers.push(center);
    }
    centers
}

/// Point sets with at most this many `c`-subsets also try every subset as
/// the initial centers.
pub const SUBSET_START_BUDGET: usize = 2048;

fn binomial_at_most(n: usize, k: usize, limit: usize) -> bool {
    let k = k.min(n - k);
    let mut acc: usize = 1;
    for i in 0..k {
        // acc * (n - i) / (i + 1) stays integral at every step
        acc = match acc.checked_mul(n - i) {
            Some(v) => v / (i + 1),
            None => return false,
        };
        if acc > limit {
            return false;
        }
    }
    true
}

/// Advances `combo` to the next lexicographic `k`-subset of `0..n`.
fn next_combination(combo: &mut [usize], n: usize) -> bool {
    let k = combo.len();
    for i in (0..k).rev() {
        if combo[i] < n - k + i {
            combo[i] += 1;
            for j in i + 1..k {
                combo[j] = combo[j - 1] + 1;
            }
            return true;
        }
    }
    false
}

struct Run {
    assignment: Vec<usize>,
    centers: Vec<(f64, f64)>,
    sse_history: Vec<f64>,
    converged: bool,
}

impl Run {
    fn sse(&self) -> f64 {
        *self.sse_history.last().expect("at least one iteration")
    }
}

/// Lloyd iterations from the given centers, followed by transfer refinement.
fn lloyd(points: &[GridPoint], mut centers: Vec<(f64, f64)>, max_iters: usize) -> Run {
    let c = centers.len();
    let mut assignment = vec![usize::MAX; points.len()];
    let mut sse_history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iters {
        let mut next = assign_nearest(points, &centers);
        reseed_empty(points, &mut next, &mut centers);
        let changed = next != assignment;
        assignment = next;
        for (ctr, mu) in centers.iter_mut().zip(means(points, &assignment, c)) {
            *ctr = mu.expect("no empty clusters after reseeding");
        }
        sse_history.push(partition_sse(points, &assignment, c));
        if !changed {
            converged = true;
            break;
        }
    }
    if refine_by_transfers(points, &mut assignment, &mut centers) {
        sse_history.push(partition_sse(points, &assignment, c));
    }
    Run {
        assignment,
        centers,
        sse_history,
        converged,
    }
}

fn assign_nearest(points: &[GridPoint], centers: &[(f64, f64)]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let at = coords(p);
            let mut best = 0;
            let mut best_d = dist2(at, centers[0]);
            for (j, &ctr) in centers.iter().enumerate().skip(1) {
                let d = dist2(at, ctr);
                if d < best_d {
                    best = j;
                    best_d = d;
                }
            }
            best
        })
        .collect()
}

/// Moves the point farthest from its center into each empty cluster, taking
/// only from clusters that keep at least one member.
fn reseed_empty(points: &[GridPoint], assignment: &mut [usize], centers: &mut [(f64, f64)]) {
    loop {
        let mut sizes = vec![0usize; centers.len()];
        for &a in assignment.iter() {
            sizes[a] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let donor = (0..points.len())
            .filter(|&i| sizes[assignment[i]] > 1)
            .max_by(|&a, &b| {
                let da = dist2(coords(&points[a]), centers[assignment[a]]);
                let db = dist2(coords(&points[b]), centers[assignment[b]]);
                da.partial_cmp(&db)
                    .unwrap_or(Ordering::Equal)
                    .then(position(&points[b]).cmp(&position(&points[a])))
            })
            .expect("pigeonhole: some cluster has two members when one is empty");
        centers[empty] = coords(&points[donor]);
        assignment[donor] = empty;
    }
}

/// Single-point transfer refinement of a Lloyd fixed point.
///
/// Moves a point from cluster `a` to `b` whenever
/// `n_b/(n_b+1)·‖p−μ_b‖² < n_a/(n_a−1)·‖p−μ_a‖²`, which strictly lowers the
/// within-cluster SSE. Points are visited in input order and the best target
/// (lowest cost, then lowest cluster index) wins. Returns whether anything moved.
fn refine_by_transfers(
    points: &[GridPoint],
    assignment: &mut [usize],
    centers: &mut [(f64, f64)],
) -> bool {
    let k = centers.len();
    let mut sizes = vec![0usize; k];
    for &a in assignment.iter() {
        sizes[a] += 1;
    }
    let mut moved_any = false;
    loop {
        let mut moved = false;
        for (i, p) in points.iter().enumerate() {
            let from = assignment[i];
            if sizes[from] < 2 {
                continue;
            }
            let at = coords(p);
            let n_from = sizes[from] as f64;
            let removal = n_from / (n_from - 1.0) * dist2(at, centers[from]);
            let mut best: Option<(usize, f64)> = None;
            for to in (0..k).filter(|&j| j != from) {
                let n_to = sizes[to] as f64;
                let cost = n_to / (n_to + 1.0) * dist2(at, centers[to]);
                if best.is_none_or(|(_, b)| cost < b) {
                    best = Some((to, cost));
                }
            }
            let Some((to, cost)) = best else { continue };
            if cost < removal - 1e-9 {
                let (n_f, n_t) = (n_from, sizes[to] as f64);
                let (fr, fc) = centers[from];
                centers[from] = (
                    (fr * n_f - at.0) / (n_f - 1.0),
                    (fc * n_f - at.1) / (n_f - 1.0),
                );
                let (tr, tc) = centers[to];
                centers[to] = (
                    (tr * n_t + at.0) / (n_t + 1.0),
                    (tc * n_t + at.1) / (n_t + 1.0),
                );
                sizes[from] -= 1;
                sizes[to] += 1;
                assignment[i] = to;
                moved = true;
            }
        }
        if !moved {
            break;
        }
        moved_any = true;
    }
    if moved_any {
        for (ctr, mu) in centers.iter_mut().zip(means(points, assignment, k)) {
            *ctr = mu.expect("transfers never empty a cluster");
        }
    }
    moved_any
}

/// Groups `points` into `c` clusters by their `(row, col)` position.
///
/// Scores only steer initialization and are carried through to the output.
pub fn cluster_points(
    points: &[GridPoint],
    c: usize,
    polarity: Polarity,
    params: &MatchParams,
) -> Result<Clustering> {
    if c == 0 {
        bail!(Param, "cluster count must be >= 1");
    }
    if points.len() < c {
        bail!(Param, "{} points cannot form {c} clusters", points.len());
    }
    if params.kmeans_max_iters == 0 {
        bail!(Param, "kmeans_max_iters must be >= 1");
    }
    let primary = extreme_point(points, polarity);
    let mut best = lloyd(
        points,
        farthest_point_init(points, c, primary),
        params.kmeans_max_iters,
    );
    let mut best_sse = best.sse();
    for seed in (0..points.len()).filter(|&i| i != primary) {
        let run = lloyd(
            points,
            farthest_point_init(points, c, seed),
            params.kmeans_max_iters,
        );
        let sse = run.sse();
        if sse < best_sse - 1e-9 {
            best = run;
            best_sse = sse;
        }
    }
    if binomial_at_most(points.len(), c, SUBSET_START_BUDGET) {
        let mut combo: Vec<usize> = (0..c).collect();
        loop {
            let init = combo.iter().map(|&i| coords(&points[i])).collect();
            let run = lloyd(points, init, params.kmeans_max_iters);
            let sse = run.sse();
            if sse < best_sse - 1e-9 {
                best = run;
                best_sse = sse;
            }
            if !next_combination(&mut combo, points.len()) {
                break;
            }
        }
    }
    let Run {
        assignment,
        centers,
        sse_history,
        converged,
    } = best;

    let mut out: Vec<Center> = (0..c)
        .map(|j| {
            let members = (0..points.len()).filter(|&i| assignment[i] == j);
            if params.snap_to_member {
                let best = members
                    .min_by(|&a, &b| {
                        let da = dist2(coords(&points[a]), centers[j]);
                        let db = dist2(coords(&points[b]), centers[j]);
                        da.partial_cmp(&db)
                            .unwrap_or(Ordering::Equal)
                            .then(
                                libm::fabs(points[b].score)
                                    .partial_cmp(&libm::fabs(points[a].score))
                                    .unwrap_or(Ordering::Equal),
                            )
                            .then(position(&points[a]).cmp(&position(&points[b])))
                    })
                    .expect("non-empty cluster");
                let p = &points[best];
                Center {
                    row: p.row as f64,
                    col: p.col as f64,
                    score: p.score,
                }
            } else {
                let (mut sum, mut n) = (0.0, 0usize);
                for i in members {
                    sum += points[i].score;
                    n += 1;
                }
                Center {
                    row: centers[j].0,
                    col: centers[j].1,
                    score: sum / n as f64,
                }
            }
        })
        .collect();
    out.sort_by(|a, b| {
        rank(polarity, (a.score, 0), (b.score, 0))
            .then(a.row.partial_cmp(&b.row).unwrap_or(Ordering::Equal))
            .then(a.col.partial_cmp(&b.col).unwrap_or(Ordering::Equal))
    });
    Ok(Clustering {
        centers: out,
        assignment,
        sse_history,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pt(row: usize, col: usize, score: f64) -> GridPoint {
        GridPoint { row, col, score }
    }

    #[test]
    fn c_equal_n_returns_points() {
        let pts = vec![pt(0, 0, 0.9), pt(3, 1, 0.8), pt(5, 5, 0.7)];
        let cl = cluster_points(&pts, 3, Polarity::MostSimilar, &MatchParams::default()).unwrap();
        let got: Vec<_> = cl.centers.iter().map(|c| (c.row, c.col, c.score)).collect();
        assert_eq!(got, vec![(0.0, 0.0, 0.9), (3.0, 1.0, 0.8), (5.0, 5.0, 0.7)]);
    }

    #[test]
    fn collinear_split() {
        let pts: Vec<_> = (0..4).map(|x| pt(0, x, 0.5)).collect();
        let cl = cluster_points(&pts, 2, Polarity::MostSimilar, &MatchParams::default()).unwrap();
        assert_eq!(cl.partition_sse(&pts), 1.0);
        for c in &cl.centers {
            assert_eq!(c.row.fract(), 0.0);
            assert_eq!(c.col.fract(), 0.0);
        }
    }

    #[test]
    fn duplicate_positions_reseed() {
        let pts = vec![pt(1, 1, 0.9), pt(1, 1, 0.8), pt(1, 1, 0.7), pt(2, 2, 0.1)];
        let cl = cluster_points(&pts, 3, Polarity::MostSimilar, &MatchParams::default()).unwrap();
        assert_eq!(cl.centers.len(), 3);
        let mut used = cl.assignment.clone();
        used.sort();
        used.dedup();
        assert_eq!(used, vec![0, 1, 2]);
    }

    #[test]
    fn unsnapped_centers_are_means() {
        let pts = vec![pt(0, 0, 1.0), pt(0, 2, 0.0)];
        let params = MatchParams {
            snap_to_member: false,
            ..MatchParams::default()
        };
        let cl = cluster_points(&pts, 1, Polarity::MostSimilar, &params).unwrap();
        assert_eq!(
            cl.centers,
            vec![Center {
                row: 0.0,
                col: 1.0,
                score: 0.5
            }]
        );
    }

    #[test]
    fn too_few_points() {
        let pts = vec![pt(0, 0, 1.0)];
        assert!(matches!(
            cluster_points(&pts, 2, Polarity::MostSimilar, &MatchParams::default()),
            Err(crate::Error::Param(_))
        ));
    }
}
