use crate::error::{Error, Result};

/// 1-based rank of `target` in a best-first candidate list.
pub fn rank_of(ranked: &[usize], target: usize) -> Result<usize> {
    ranked.iter().position(|&c| c == target).map(|p| p + 1).ok_or(Error::TargetNotInCandidates(target))
}

pub fn recall_at_k(ranked: &[usize], target: usize, k: usize) -> Result<f64> {
    Ok(recall_from_rank(rank_of(ranked, target)?, k))
}

pub fn ndcg_at_k(ranked: &[usize], target: usize, k: usize) -> Result<f64> {
    Ok(ndcg_from_rank(rank_of(ranked, target)?, k))
}

/// Single-target hit rate; identical to recall.
pub fn hits_at_k(ranked: &[usize], target: usize, k: usize) -> Result<f64> {
    recall_at_k(ranked, target, k)
}

pub fn recall_from_rank(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_from_rank(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// Sorts candidates best first: higher score wins, equal scores go to the
/// smaller item id.
pub fn rank_candidates(candidates: &[usize], scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..candidates.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(candidates[a].cmp(&candidates[b])));
    idx.into_iter().map(|i| candidates[i]).collect()
}

/// Rank of `candidates[target_index]` without sorting the whole list.
pub fn rank_by_score(candidates: &[usize], scores: &[f64], target_index: usize) -> usize {
    let (t, s) = (candidates[target_index], scores[target_index]);
    1 + candidates
        .iter()
        .zip(scores)
        .enumerate()
        .filter(|&(i, (&c, &x))| i != target_index && (x > s || (x == s && c < t)))
        .count()
}
