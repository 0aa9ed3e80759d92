//! Seeded generator of synthetic respondents, like histories, social graph
//! and opinion polls with tunable signal strength.
//!
//! Every respondent has a true party drawn from `party_priors`; the vote
//! intent, when stated, is that party. Age depends on party through
//! `age_skew`, and Facebook activity depends on age, so raw like counts
//! misstate party sizes in a way that poll weighting can correct.
//! Respondents differ in how partisan their likes are: each draws its own
//! alignment around the configured mean.

use std::collections::BTreeSet;

use chrono::{DateTime, Duration, NaiveDate};
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, LogNormal, Normal};
use serde::{Deserialize, Serialize};

use crate::config::SurveySchema;
use crate::error::{Error, Result};
use crate::forecast::{PollObservation, ShareVector};
use crate::model::{Bloc, Dataset, LikeEvent, LikeKind, PartySpace, Respondent, SurveyResponse, Window, NUM_PARTIES};
use crate::propagation::{CommentLikeEdge, MediaPost, SocialGraph, TagEdge};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GenConfig {
    pub n_respondents: usize,
    pub seed: u64,
    /// Mean probability that a like goes to the respondent's own party.
    pub alignment: f64,
    /// Spread of per-respondent alignment in [0, 1): the variance of the
    /// Beta law on `[1/9, 1]` as a fraction of its maximum. 0 gives every
    /// respondent exactly `alignment`.
    pub alignment_dispersion: f64,
    /// Location of the log-normal like-count law.
    pub likes_log_mean: f64,
    /// Scale of the log-normal like-count law.
    pub likes_log_sd: f64,
    pub max_likes: u32,
    /// Strength of the party signal in opinion items, in [0, 1].
    pub survey_signal: f64,
    /// Strength of the party/age association, >= 0.
    pub age_skew: f64,
    pub party_priors: Vec<f64>,
    pub p_vote_intent: f64,
    /// Mean probability of having any like; the young are more active.
    pub p_active: f64,
    /// Expected comment likes per post like.
    pub comment_like_rate: f64,
    pub n_media_posts: usize,
    pub political_post_share: f64,
    pub n_tags: usize,
    pub n_comment_likes: usize,
    pub poll_size: usize,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_respondents: 2000,
            seed: 0,
            alignment: 0.85,
            alignment_dispersion: 0.2,
            likes_log_mean: 1.8,
            likes_log_sd: 1.2,
            max_likes: 2000,
            survey_signal: 0.15,
            age_skew: 1.0,
            party_priors: vec![0.26, 0.21, 0.19, 0.09, 0.08, 0.05, 0.05, 0.04, 0.03],
            p_vote_intent: 0.9,
            p_active: 0.6,
            comment_like_rate: 0.2,
            n_media_posts: 200,
            political_post_share: 0.25,
            n_tags: 1000,
            n_comment_likes: 2000,
            poll_size: 1000,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(format!("synth: {m}")));
        if self.n_respondents == 0 {
            return bad("n_respondents must be positive");
        }
        if !(1.0 / NUM_PARTIES as f64 - 1e-12..=1.0).contains(&self.alignment) {
            return bad("alignment must lie in [1/9, 1]");
        }
        if !(0.0..1.0).contains(&self.alignment_dispersion) {
            return bad("alignment_dispersion must lie in [0, 1)");
        }
        if !self.likes_log_mean.is_finite() || !(self.likes_log_sd >= 0.0) || self.max_likes == 0 {
            return bad("like-count law parameters out of range");
        }
        if !(0.0..=1.0).contains(&self.survey_signal) {
            return bad("survey_signal must lie in [0, 1]");
        }
        if !(self.age_skew >= 0.0 && self.age_skew.is_finite()) {
            return bad("age_skew must be finite and nonnegative");
        }
        if self.party_priors.len() != NUM_PARTIES
            || self.party_priors.iter().any(|p| !(*p >= 0.0))
            || (self.party_priors.iter().sum::<f64>() - 1.0).abs() > 1e-6
        {
            return bad("party_priors must be 9 nonnegative values summing to 1");
        }
        for (name, p) in [
            ("p_vote_intent", self.p_vote_intent),
            ("p_active", self.p_active),
            ("political_post_share", self.political_post_share),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if !(self.comment_like_rate >= 0.0) {
            return bad("comment_like_rate must be nonnegative");
        }
        if self.poll_size == 0 {
            return bad("poll_size must be positive");
        }
        Ok(())
    }
}

/// Everything one generator run produces.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOutput {
    pub dataset: Dataset,
    /// True party of every respondent, aligned with `dataset.respondents`.
    pub true_party: Vec<usize>,
    pub social: SocialGraph,
    pub polls: Vec<PollObservation>,
    pub election_date: NaiveDate,
    /// Population vote shares on election day.
    pub election: ShareVector,
}

/// Age tilt per party: positive leans old.
const AGE_TILT: [f64; NUM_PARTIES] = [0.6, -0.8, 1.0, -1.0, 0.3, -0.5, 0.8, -0.3, 0.0];
/// Relative Facebook activity per age band, young to old.
const ACTIVITY_BY_AGE: [f64; 3] = [1.4, 1.0, 0.6];
const POLL_OFFSETS_DAYS: [i64; 2] = [420, 390];

/// Deterministic party position on an opinion item, in [-1, 1].
fn position(party: usize, item: usize) -> f64 {
    (1.7 * party as f64 + 2.3 * item as f64 + 0.5 * (party * item) as f64).sin()
}

/// Age-band index for a schema band, spread over young/middle/old.
fn age_level(band: usize, n_bands: usize) -> f64 {
    if n_bands <= 1 {
        0.0
    } else {
        2.0 * band as f64 / (n_bands - 1) as f64 - 1.0
    }
}

fn date_of(ts: i64) -> NaiveDate {
    DateTime::from_timestamp(ts, 0).expect("timestamp in range").date_naive()
}

/// Draws one respondent's alignment with mean `cfg.alignment`.
fn user_alignment(cfg: &GenConfig, rng: &mut impl Rng) -> f64 {
    let floor = 1.0 / NUM_PARTIES as f64;
    let m = (cfg.alignment - floor) / (1.0 - floor);
    if cfg.alignment_dispersion == 0.0 || m <= 0.0 || m >= 1.0 {
        return cfg.alignment;
    }
    let k = 1.0 / cfg.alignment_dispersion - 1.0;
    let x = Beta::new(m * k, (1.0 - m) * k).expect("positive shape").sample(rng);
    (floor + (1.0 - floor) * x).clamp(0.0, 1.0)
}

/// Generates a dataset and its companions from `cfg`.
pub fn generate(cfg: &GenConfig, parties: &PartySpace, schema: &SurveySchema, window: Window) -> Result<SynthOutput> {
    cfg.validate()?;
    schema.validate()?;
    if window.start > window.end {
        return Err(Error::InvalidConfig("window start after end".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let party_dist = WeightedIndex::new(&cfg.party_priors).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let like_law = LogNormal::new(cfg.likes_log_mean, cfg.likes_log_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let noise = Normal::new(0.0, 1.0).expect("unit normal");
    let n_bands = schema.age_band.len();
    let mid = f64::from(schema.opinion_min + schema.opinion_max) / 2.0;
    let half_span = f64::from(schema.opinion_max - schema.opinion_min) / 2.0;

    let mut respondents = Vec::with_capacity(cfg.n_respondents);
    let mut true_party = Vec::with_capacity(cfg.n_respondents);
    for i in 0..cfg.n_respondents {
        let id = format!("R{i:06}");
        let party = party_dist.sample(&mut rng);
        let age_weights: Vec<f64> = (0..n_bands)
            .map(|b| (cfg.age_skew * AGE_TILT[party] * age_level(b, n_bands)).exp())
            .collect();
        let age = WeightedIndex::new(&age_weights).expect("positive weights").sample(&mut rng);
        let opinions = (0..schema.opinion_items.len())
            .map(|item| {
                let mean = mid + cfg.survey_signal * half_span * position(party, item);
                let v = (mean + noise.sample(&mut rng)).round() as i32;
                v.clamp(schema.opinion_min, schema.opinion_max)
            })
            .collect();
        let survey = SurveyResponse {
            gender: schema.gender.choose(&mut rng).expect("nonempty").clone(),
            age_band: schema.age_band[age].clone(),
            geography: schema.geography.choose(&mut rng).expect("nonempty").clone(),
            education: schema.education.choose(&mut rng).expect("nonempty").clone(),
            opinions,
            vote_intent: rng.random_bool(cfg.p_vote_intent).then(|| parties.party(party).to_string()),
        };

        let activity_idx = (age_level(age, n_bands) + 1.0).round() as usize;
        let p_active = (cfg.p_active * ACTIVITY_BY_AGE[activity_idx.min(2)]).min(1.0);
        let mut history = Vec::new();
        if rng.random_bool(p_active) {
            let n_likes = (like_law.sample(&mut rng).round() as u32).clamp(1, cfg.max_likes);
            let n_comments = (f64::from(n_likes) * cfg.comment_like_rate).round() as u32;
            let alignment = user_alignment(cfg, &mut rng);
            for k in 0..n_likes + n_comments {
                let target = if rng.random_bool(alignment) {
                    party
                } else {
                    let other = rng.random_range(0..NUM_PARTIES - 1);
                    if other >= party {
                        other + 1
                    } else {
                        other
                    }
                };
                history.push(LikeEvent {
                    respondent_id: id.clone(),
                    page_party: parties.party(target).to_string(),
                    timestamp: rng.random_range(window.start..=window.end),
                    kind: if k < n_likes { LikeKind::PostLike } else { LikeKind::CommentLike },
                });
            }
            history.sort_by_key(|e| e.timestamp);
        }
        respondents.push(Respondent {
            respondent_id: id,
            survey,
            like_history: history,
        });
        true_party.push(party);
    }

    let social = social_graph(cfg, &respondents, &true_party, parties, &mut rng);

    let election_date = date_of(window.end);
    let mut polls = Vec::with_capacity(2);
    for off in POLL_OFFSETS_DAYS {
        let mut counts = [0.0; NUM_PARTIES];
        for _ in 0..cfg.poll_size {
            counts[party_dist.sample(&mut rng)] += 1.0;
        }
        polls.push(PollObservation {
            date: election_date - Duration::days(off),
            shares: ShareVector::from_masses(counts)?,
        });
    }
    let mut priors = [0.0; NUM_PARTIES];
    priors.copy_from_slice(&cfg.party_priors);

    Ok(SynthOutput {
        dataset: Dataset::new(respondents, parties.clone(), window)?,
        true_party,
        social,
        polls,
        election_date,
        election: ShareVector::from_masses(priors)?,
    })
}

/// Media posts, tags and comment likes among active respondents. Political
/// posts are liked by one bloc and commented on by the other.
fn social_graph(
    cfg: &GenConfig,
    respondents: &[Respondent],
    true_party: &[usize],
    parties: &PartySpace,
    rng: &mut ChaCha8Rng,
) -> SocialGraph {
    let active: Vec<usize> = (0..respondents.len())
        .filter(|&i| respondents[i].count_kind(LikeKind::PostLike) > 0)
        .collect();
    let mut g = SocialGraph::default();
    if active.len() < 2 {
        return g;
    }
    let (left, right): (Vec<usize>, Vec<usize>) = active
        .iter()
        .partition(|&&i| parties.bloc_of(true_party[i]) == Bloc::Left);
    let id = |i: usize| respondents[i].respondent_id.clone();
    let pick = |pool: &[usize], rng: &mut ChaCha8Rng, m: usize| -> BTreeSet<String> {
        (0..m).filter_map(|_| pool.choose(rng).map(|&i| id(i))).collect()
    };

    for p in 0..cfg.n_media_posts {
        let political = rng.random_bool(cfg.political_post_share) && !left.is_empty() && !right.is_empty();
        let (n_l, n_c) = (rng.random_range(3..15), rng.random_range(3..15));
        let (liker_ids, commenter_ids) = if political {
            let (a, b) = if rng.random_bool(0.5) { (&left, &right) } else { (&right, &left) };
            (pick(a, rng, n_l), pick(b, rng, n_c))
        } else {
            (pick(&active, rng, n_l), pick(&active, rng, n_c))
        };
        g.media_posts.push(MediaPost {
            post_id: format!("M{p:05}"),
            liker_ids,
            commenter_ids,
        });
    }
    for _ in 0..cfg.n_tags {
        let a = *active.choose(rng).expect("nonempty");
        let b = *active.choose(rng).expect("nonempty");
        g.tags.push(TagEdge {
            tagger_id: id(a),
            tagged_id: id(b),
        });
    }
    for _ in 0..cfg.n_comment_likes {
        let a = *active.choose(rng).expect("nonempty");
        let b = *active.choose(rng).expect("nonempty");
        let political_page = rng.random_bool(0.3);
        let post_id = if political_page || cfg.n_media_posts == 0 {
            format!("PAGE{:02}", rng.random_range(0..NUM_PARTIES))
        } else {
            format!("M{:05}", rng.random_range(0..cfg.n_media_posts))
        };
        g.comment_likes.push(CommentLikeEdge {
            liker_id: id(a),
            author_id: id(b),
            post_id,
            political_page,
        });
    }
    g
}
