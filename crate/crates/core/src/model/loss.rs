use crate::error::{Error, Result};
use crate::numerics::{Real, Scoring, Tape, Var};

/// Cross-entropy over cosine scores between user vectors and item embeddings.
///
/// `user` holds one row per prediction. Without `negatives` every catalog item
/// (`items` rows of `table`) is a candidate; with them each row scores
/// `[target, negatives...]` and the target sits in column 0.
pub fn recommendation_loss<T: Real>(
    tape: &mut Tape<'_, T>,
    user: Var,
    table: Var,
    items: usize,
    targets: &[usize],
    negatives: Option<&[Vec<usize>]>,
) -> Result<Var> {
    if let Some(&t) = targets.iter().find(|&&t| t >= items) {
        return Err(Error::OutOfVocabulary { id: t, size: items });
    }
    match negatives {
        None => {
            let scores = tape.cosine_scores(user, table, Scoring::Prefix(items))?;
            tape.cross_entropy(scores, targets)
        }
        Some(negs) => {
            if negs.len() != targets.len() {
                return Err(Error::Shape("one negative list per target required".into()));
            }
            let mut cands = Vec::with_capacity(targets.len());
            for (&t, list) in targets.iter().zip(negs) {
                if list.contains(&t) {
                    return Err(Error::Shape(format!("target {t} listed among its negatives")));
                }
                if let Some(&bad) = list.iter().find(|&&n| n >= items) {
                    return Err(Error::OutOfVocabulary { id: bad, size: items });
                }
                let mut c = Vec::with_capacity(list.len() + 1);
                c.push(t);
                c.extend_from_slice(list);
                cands.push(c);
            }
            let scores = tape.cosine_scores(user, table, Scoring::Candidates(cands))?;
            tape.cross_entropy(scores, &vec![0; targets.len()])
        }
    }
}

/// `α1·L_rec + α2·L_cd` with fixed, non-negative weights.
pub fn static_combined_loss<T: Real>(tape: &mut Tape<'_, T>, rec: Var, cd: Var, alpha_rec: f64, alpha_cd: f64) -> Result<Var> {
    if alpha_rec < 0.0 || alpha_cd < 0.0 || !alpha_rec.is_finite() || !alpha_cd.is_finite() {
        return Err(Error::config("static weights", "must be finite and non-negative"));
    }
    tape.lin_comb(&[(rec, T::lit(alpha_rec)), (cd, T::lit(alpha_cd))])
}
