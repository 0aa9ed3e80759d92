//! Aggregate vote-share forecasts from most-liked-party counts, with optional
//! per-party weights fit against two opinion polls.

use std::io::{Read, Write};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Dataset, LikeKind, PartyCountVector, NUM_PARTIES};

pub const SECONDS_PER_DAY: i64 = 86_400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShareVector {
    pub shares: [f64; NUM_PARTIES],
}

impl ShareVector {
    /// Checks every share lies in [0, 1] and they sum to 1 within 1e-9.
    pub fn new(shares: [f64; NUM_PARTIES]) -> Result<Self> {
        if shares.iter().any(|s| !s.is_finite() || *s < 0.0 || *s > 1.0) {
            return Err(Error::InvalidData("shares must lie in [0, 1]".into()));
        }
        let sum: f64 = shares.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidData(format!("shares sum to {sum}, expected 1")));
        }
        Ok(ShareVector { shares })
    }

    /// Normalizes nonnegative masses to shares.
    pub fn from_masses(masses: [f64; NUM_PARTIES]) -> Result<Self> {
        let sum: f64 = masses.iter().sum();
        if !(sum > 0.0) || masses.iter().any(|m| *m < 0.0 || !m.is_finite()) {
            return Err(Error::ZeroWeightMass);
        }
        Ok(ShareVector {
            shares: masses.map(|m| m / sum),
        })
    }

    pub fn uniform() -> Self {
        ShareVector {
            shares: [1.0 / NUM_PARTIES as f64; NUM_PARTIES],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PollObservation {
    pub date: NaiveDate,
    pub shares: ShareVector,
}

/// One vote per user for their most-liked party (ties to the lowest index).
pub fn raw_count_shares(users: &[PartyCountVector]) -> Result<ShareVector> {
    if users.is_empty() {
        return Err(Error::EmptyUserList);
    }
    let mut votes = [0.0; NUM_PARTIES];
    for u in users {
        if u.total() == 0 {
            return Err(Error::ZeroTotal);
        }
        votes[u.argmax()] += 1.0;
    }
    Ok(ShareVector {
        shares: votes.map(|v| v / users.len() as f64),
    })
}

pub fn mae(pred: &ShareVector, actual: &ShareVector) -> f64 {
    pred.shares
        .iter()
        .zip(&actual.shares)
        .map(|(p, a)| (p - a).abs())
        .sum::<f64>()
        / NUM_PARTIES as f64
}

/// Weighted and renormalized shares.
pub fn reweight(raw: &ShareVector, w: &[f64; NUM_PARTIES]) -> Result<ShareVector> {
    if w.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::InvalidData("weights must be finite and nonnegative".into()));
    }
    let mut masses = [0.0; NUM_PARTIES];
    for p in 0..NUM_PARTIES {
        masses[p] = w[p] * raw.shares[p];
    }
    ShareVector::from_masses(masses)
}

pub fn forecast(users: &[PartyCountVector], w: &[f64; NUM_PARTIES]) -> Result<ShareVector> {
    reweight(&raw_count_shares(users)?, w)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightFit {
    /// Nonnegative, scaled to mean 1.
    pub weights: [f64; NUM_PARTIES],
    pub objective: f64,
    pub initial_objective: f64,
    pub iterations: usize,
    /// Some poll gives a party support the counts never do; no weight can fix that.
    pub degenerate: bool,
}

fn rss(fb: &[ShareVector], polls: &[PollObservation], w: &[f64; NUM_PARTIES]) -> f64 {
    let mut total = 0.0;
    for (f, q) in fb.iter().zip(polls) {
        let s: f64 = (0..NUM_PARTIES).map(|p| w[p] * f.shares[p]).sum();
        if !(s > 0.0) {
            return f64::INFINITY;
        }
        for p in 0..NUM_PARTIES {
            let d = w[p] * f.shares[p] / s - q.shares.shares[p];
            total += d * d;
        }
    }
    total
}

fn rss_gradient(fb: &[ShareVector], polls: &[PollObservation], w: &[f64; NUM_PARTIES]) -> [f64; NUM_PARTIES] {
    let mut g = [0.0; NUM_PARTIES];
    for (f, q) in fb.iter().zip(polls) {
        let f = &f.shares;
        let s: f64 = (0..NUM_PARTIES).map(|p| w[p] * f[p]).sum();
        let share: Vec<f64> = (0..NUM_PARTIES).map(|p| w[p] * f[p] / s).collect();
        let resid: Vec<f64> = (0..NUM_PARTIES).map(|p| share[p] - q.shares.shares[p]).collect();
        let cross: f64 = resid.iter().zip(&share).map(|(r, s)| r * s).sum();
        for i in 0..NUM_PARTIES {
            g[i] += 2.0 * f[i] / s * (resid[i] - cross);
        }
    }
    g
}

const WEIGHT_TOL: f64 = 1e-10;
const WEIGHT_MAX_ITERS: usize = 100_000;

/// Per-party weights minimizing the squared distance between the reweighted
/// counts and the polls, summed over both poll dates.
///
/// Projected gradient descent on `w >= 0` from all ones with backtracking;
/// stops once an accepted step improves the objective by at most `1e-10`
/// relative to its current value. The objective is invariant to rescaling
/// `w`, so each iterate is rescaled to mean 1.
pub fn fit_weights(fb: &[ShareVector], polls: &[PollObservation]) -> Result<WeightFit> {
    if fb.len() != 2 || polls.len() != 2 {
        return Err(Error::InvalidData(format!(
            "exactly two polls and two count vectors required, got {} and {}",
            polls.len(),
            fb.len()
        )));
    }
    if polls[0].date == polls[1].date {
        return Err(Error::InvalidData("poll dates must differ".into()));
    }
    let degenerate = fb
        .iter()
        .zip(polls)
        .any(|(f, q)| (0..NUM_PARTIES).any(|p| f.shares[p] == 0.0 && q.shares.shares[p] > 0.0));

    let mut w = [1.0; NUM_PARTIES];
    let mut obj = rss(fb, polls, &w);
    let initial_objective = obj;
    let mut step = 1.0;
    let mut iterations = 0;
    while iterations < WEIGHT_MAX_ITERS && obj > 0.0 {
        iterations += 1;
        let g = rss_gradient(fb, polls, &w);
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = [0.0; NUM_PARTIES];
            for p in 0..NUM_PARTIES {
                cand[p] = (w[p] - step * g[p]).max(0.0);
            }
            let c_obj = rss(fb, polls, &cand);
            let lin: f64 = (0..NUM_PARTIES).map(|p| g[p] * (cand[p] - w[p])).sum();
            let quad: f64 = (0..NUM_PARTIES).map(|p| (cand[p] - w[p]).powi(2)).sum::<f64>() / (2.0 * step);
            if c_obj <= obj + lin + quad {
                accepted = Some((cand, c_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((cand, c_obj)) = accepted else { break };
        let mean = cand.iter().sum::<f64>() / NUM_PARTIES as f64;
        // rescaling changes the gradient's scale; the step follows it
        w = cand.map(|x| x / mean);
        step *= mean * mean * 2.0;
        let improvement = obj - c_obj;
        obj = rss(fb, polls, &w);
        if improvement <= WEIGHT_TOL * obj.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    if obj > initial_objective {
        w = [1.0; NUM_PARTIES];
        obj = initial_objective;
    }
    Ok(WeightFit {
        weights: w,
        objective: obj,
        initial_objective,
        iterations,
        degenerate,
    })
}

/// Post-like count vectors of users active in `(end - days, end]`, counting only
/// likes inside that window.
pub fn window_counts(ds: &Dataset, end: i64, days: i64) -> Vec<PartyCountVector> {
    let start = end - days * SECONDS_PER_DAY;
    ds.respondents
        .iter()
        .filter_map(|r| {
            let mut counts = [0u32; NUM_PARTIES];
            for e in &r.like_history {
                if e.kind == LikeKind::PostLike && e.timestamp > start && e.timestamp <= end {
                    if let Some(p) = ds.party_space.index_of(&e.page_party) {
                        counts[p] += 1;
                    }
                }
            }
            let v = PartyCountVector::new(counts);
            (v.total() > 0).then_some(v)
        })
        .collect()
}

/// Last second of `date` in UTC.
pub fn end_of_day(date: NaiveDate) -> i64 {
    date.and_hms_opt(23, 59, 59).expect("valid time").and_utc().timestamp()
}

/// Reads `date,<party...>` rows; share columns must follow party order.
pub fn read_polls_csv<R: Read>(r: R, parties: &[String]) -> Result<Vec<PollObservation>> {
    let mut rdr = csv::Reader::from_reader(r);
    let header = rdr.headers()?.clone();
    let expected: Vec<&str> = std::iter::once("date").chain(parties.iter().map(String::as_str)).collect();
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(Error::SchemaMismatch(format!(
            "poll header must be `{}`",
            expected.join(",")
        )));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let date = NaiveDate::parse_from_str(&rec[0], "%Y-%m-%d")
            .map_err(|e| Error::InvalidData(format!("bad date `{}`: {e}", &rec[0])))?;
        let mut shares = [0.0; NUM_PARTIES];
        for (p, s) in shares.iter_mut().enumerate() {
            *s = rec[p + 1]
                .trim()
                .parse()
                .map_err(|_| Error::InvalidData(format!("bad share `{}`", &rec[p + 1])))?;
        }
        out.push(PollObservation {
            date,
            shares: ShareVector::new(shares)?,
        });
    }
    Ok(out)
}

pub fn write_polls_csv<W: Write>(w: W, polls: &[PollObservation], parties: &[String]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["date".to_string()];
    header.extend(parties.iter().cloned());
    out.write_record(&header)?;
    for p in polls {
        let mut rec = vec![p.date.format("%Y-%m-%d").to_string()];
        rec.extend(p.shares.shares.iter().map(|s| s.to_string()));
        out.write_record(&rec)?;
    }
    out.flush()?;
    Ok(())
}
