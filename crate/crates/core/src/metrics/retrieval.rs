//! Top-k retrieval agreement between two scoring functions.

use crate::error::{Error, Result};

/// Whether larger scores rank first.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScoreOrder {
    HigherIsBetter,
    LowerIsBetter,
}

/// Candidate indices of the best `k` scores; ties broken by ascending index.
pub fn top_k(scores: &[f64], order: ScoreOrder, k: usize) -> Result<Vec<usize>> {
    if k > scores.len() {
        return Err(Error::InvalidArgument(format!(
            "k = {k} exceeds candidate count {}",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&i, &j| {
        let ord = match order {
            ScoreOrder::HigherIsBetter => scores[j].total_cmp(&scores[i]),
            ScoreOrder::LowerIsBetter => scores[i].total_cmp(&scores[j]),
        };
        ord.then(i.cmp(&j))
    });
    idx.truncate(k);
    Ok(idx)
}

/// `|top_k(a) ∩ top_k(b)|` for two score lists over the same candidates.
pub fn topk_intersection(
    scores_a: &[f64],
    order_a: ScoreOrder,
    scores_b: &[f64],
    order_b: ScoreOrder,
    k: usize,
) -> Result<usize> {
    if scores_a.len() != scores_b.len() {
        return Err(Error::InvalidArgument(format!(
            "score lists cover {} and {} candidates",
            scores_a.len(),
            scores_b.len()
        )));
    }
    let a = top_k(scores_a, order_a, k)?;
    let b = top_k(scores_b, order_b, k)?;
    Ok(a.iter().filter(|i| b.contains(i)).count())
}

/// A pairwise scoring function with its ranking direction.
pub struct Scorer<'a, T> {
    pub name: &'a str,
    pub order: ScoreOrder,
    pub score: &'a (dyn Fn(&T, &T) -> Result<f64> + Sync),
}

/// Mean and standard deviation of the top-k intersection over references.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct RetrievalAgreement {
    pub k: usize,
    pub mean: f64,
    pub std: f64,
    pub per_reference: Vec<usize>,
}

/// Treats every corpus item in turn as the reference, ranks the remaining
/// items with both scorers and intersects their top-k lists.
pub fn retrieval_agreement<T: Sync>(
    corpus: &[T],
    a: &Scorer<'_, T>,
    b: &Scorer<'_, T>,
    k: usize,
) -> Result<RetrievalAgreement> {
    use rayon::prelude::*;
    if corpus.len() < k + 1 {
        return Err(Error::InvalidArgument(format!(
            "corpus of {} items cannot supply {k} candidates per reference",
            corpus.len()
        )));
    }
    let per_reference = (0..corpus.len())
        .into_par_iter()
        .map(|r| {
            let mut sa = Vec::with_capacity(corpus.len() - 1);
            let mut sb = Vec::with_capacity(corpus.len() - 1);
            for (c, item) in corpus.iter().enumerate() {
                if c == r {
                    continue;
                }
                sa.push((a.score)(&corpus[r], item)?);
                sb.push((b.score)(&corpus[r], item)?);
            }
            topk_intersection(&sa, a.order, &sb, b.order, k)
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_reference.len() as f64;
    let mean = per_reference.iter().sum::<usize>() as f64 / n;
    let var = per_reference
        .iter()
        .map(|&x| (x as f64 - mean).powi(2))
        .sum::<f64>()
        / n;
    Ok(RetrievalAgreement {
        k,
        mean,
        std: var.sqrt(),
        per_reference,
    })
}
