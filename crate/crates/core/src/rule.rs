//! Most-liked-party classifier with Min-Likes and Party-Like-Cap filters.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{post_like_counts, Dataset, PartyCountVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RulePrediction {
    Party(usize),
    Excluded,
}

/// Predicts the most-liked party, or excludes the respondent when they have
/// fewer than `min_likes` likes or their top party holds less than `plc` of
/// them. Ties go to the lowest party index.
pub fn rule_predict(v: &PartyCountVector, min_likes: u32, plc: f64) -> RulePrediction {
    let total = v.total();
    if total == 0 || total < u64::from(min_likes) {
        return RulePrediction::Excluded;
    }
    let top = v.argmax();
    let max_share = f64::from(v.counts[top]) / total as f64;
    if max_share < plc {
        return RulePrediction::Excluded;
    }
    RulePrediction::Party(top)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub min_likes: u32,
    pub plc: f64,
    pub n_included: usize,
    /// `None` when nobody qualifies.
    pub accuracy: Option<f64>,
    pub ci_95: Option<f64>,
}

/// Evaluates the rule at every `(min_likes, plc)` pair, `min_likes` outermost.
///
/// Every respondent must carry a vote intent and at least one post like.
/// Accuracy is computed in-sample; the rule has no fitted parameters.
pub fn sweep_grid(ds: &Dataset, min_likes_list: &[u32], plc_list: &[f64]) -> Result<Vec<GridCell>> {
    if min_likes_list.contains(&0) {
        return Err(Error::InvalidConfig("min likes must be at least 1".into()));
    }
    if plc_list.iter().any(|p| !(0.0..=1.0).contains(p)) {
        return Err(Error::InvalidConfig("party like cap must lie in [0, 1]".into()));
    }
    let mut users = Vec::with_capacity(ds.len());
    for r in &ds.respondents {
        let gold = r.vote_index(&ds.party_space).ok_or_else(|| Error::MissingVoteIntent {
            id: r.respondent_id.clone(),
        })?;
        let counts = post_like_counts(r, &ds.party_space);
        if counts.total() == 0 {
            return Err(Error::Respondent {
                id: r.respondent_id.clone(),
                source: Box::new(Error::NoPoliticalLikes),
            });
        }
        users.push((counts, gold));
    }
    let mut cells = Vec::with_capacity(min_likes_list.len() * plc_list.len());
    for &min_likes in min_likes_list {
        for &plc in plc_list {
            let (mut n, mut hits) = (0usize, 0usize);
            for (counts, gold) in &users {
                if let RulePrediction::Party(p) = rule_predict(counts, min_likes, plc) {
                    n += 1;
                    if p == *gold {
                        hits += 1;
                    }
                }
            }
            let (accuracy, ci_95) = if n == 0 {
                (None, None)
            } else {
                let acc = hits as f64 / n as f64;
                (Some(acc), Some(1.96 * (acc * (1.0 - acc) / n as f64).sqrt()))
            };
            cells.push(GridCell {
                min_likes,
                plc,
                n_included: n,
                accuracy,
                ci_95,
            });
        }
    }
    Ok(cells)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Long format: `min_likes,plc,n,accuracy,ci`, empty cells for undefined accuracy.
pub fn write_grid_csv<W: Write>(w: W, cells: &[GridCell]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["min_likes", "plc", "n", "accuracy", "ci"])?;
    for c in cells {
        out.write_record([
            c.min_likes.to_string(),
            c.plc.to_string(),
            c.n_included.to_string(),
            opt(c.accuracy),
            opt(c.ci_95),
        ])?;
    }
    out.flush()?;
    Ok(())
}

/// Wide format for surface plots: one row per `min_likes`, one accuracy column per PLC.
pub fn write_grid_matrix<W: Write>(w: W, cells: &[GridCell], min_likes_list: &[u32], plc_list: &[f64]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["min_likes".to_string()];
    header.extend(plc_list.iter().map(|p| format!("plc={p}")));
    out.write_record(&header)?;
    for (i, &m) in min_likes_list.iter().enumerate() {
        let mut rec = vec![m.to_string()];
        for j in 0..plc_list.len() {
            rec.push(opt(cells[i * plc_list.len() + j].accuracy));
        }
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
