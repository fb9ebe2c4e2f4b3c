use alloc::vec::Vec;
use core::cmp::Ordering;

use super::{GridPoint, Polarity, SimilarityMap};
use crate::error::{bail, Result};

/// Total order used for selection: better score first, then smaller flat index.
pub(crate) fn rank(polarity: Polarity, a: (f64, usize), b: (f64, usize)) -> Ordering {
    let by_score = match polarity {
        Polarity::MostSimilar => b.0.partial_cmp(&a.0),
        Polarity::LeastSimilar => a.0.partial_cmp(&b.0),
    }
    .unwrap_or(Ordering::Equal);
    by_score.then(a.1.cmp(&b.1))
}

/// The `k` most (or least) similar cells, best first; ties go to the smaller
/// row-major index.
pub fn topk_coords(s: &SimilarityMap, k: usize, polarity: Polarity) -> Result<Vec<GridPoint>> {
    let n = s.len();
    if k == 0 || k > n {
        bail!(
            Param,
            "K={k} outside [1, {n}] for a {}x{} map",
            s.height,
            s.width
        );
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let cmp = |a: &usize, b: &usize| rank(polarity, (s.scores[*a], *a), (s.scores[*b], *b));
    if k < n {
        idx.select_nth_unstable_by(k - 1, cmp);
        idx.truncate(k);
    }
    idx.sort_unstable_by(cmp);
    Ok(idx
        .into_iter()
        .map(|i| GridPoint {
            row: i / s.width,
            col: i % s.width,
            score: s.scores[i],
        })
        .collect())
}
