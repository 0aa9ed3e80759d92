//! Domain vocabulary shared by every stage: parties, respondents, like
//! events and datasets, plus the JSON Lines dataset format.

use std::collections::HashSet;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Number of parties in the modelled parliament.
pub const NUM_PARTIES: usize = 9;

/// Political bloc used for the left/right collapse.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Bloc {
    Left,
    Right,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct PartyEntry {
    id: String,
    bloc: Bloc,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawPartySpace {
    parties: Vec<PartyEntry>,
}

/// Ordered universe of exactly nine party identifiers with a total bloc mapping.
///
/// Every count, share and probability vector in the crate is indexed in this order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "RawPartySpace", into = "RawPartySpace")]
pub struct PartySpace {
    parties: Vec<String>,
    blocs: Vec<Bloc>,
}

impl TryFrom<RawPartySpace> for PartySpace {
    type Error = Error;

    fn try_from(raw: RawPartySpace) -> Result<Self> {
        let (parties, blocs) = raw.parties.into_iter().map(|e| (e.id, e.bloc)).unzip();
        PartySpace::new(parties, blocs)
    }
}

impl From<PartySpace> for RawPartySpace {
    fn from(ps: PartySpace) -> Self {
        RawPartySpace {
            parties: ps
                .parties
                .into_iter()
                .zip(ps.blocs)
                .map(|(id, bloc)| PartyEntry { id, bloc })
                .collect(),
        }
    }
}

impl PartySpace {
    pub fn new(parties: Vec<String>, blocs: Vec<Bloc>) -> Result<Self> {
        if parties.len() != NUM_PARTIES {
            return Err(Error::InvalidConfig(format!(
                "party space needs exactly {NUM_PARTIES} parties, got {}",
                parties.len()
            )));
        }
        if blocs.len() != parties.len() {
            return Err(Error::InvalidConfig(
                "every party needs a bloc assignment".into(),
            ));
        }
        let mut seen = HashSet::new();
        for p in &parties {
            if p.is_empty() {
                return Err(Error::InvalidConfig("empty party identifier".into()));
            }
            if !seen.insert(p.as_str()) {
                return Err(Error::InvalidConfig(format!("duplicate party `{p}`")));
            }
        }
        Ok(PartySpace { parties, blocs })
    }

    /// Synthetic labels `P1`..`P9`; odd positions left, even positions right.
    pub fn synthetic() -> Self {
        let parties = (1..=NUM_PARTIES).map(|i| format!("P{i}")).collect();
        let blocs = (0..NUM_PARTIES)
            .map(|i| if i % 2 == 0 { Bloc::Left } else { Bloc::Right })
            .collect();
        PartySpace::new(parties, blocs).expect("synthetic party space is valid")
    }

    pub fn parties(&self) -> &[String] {
        &self.parties
    }

    pub fn party(&self, index: usize) -> &str {
        &self.parties[index]
    }

    pub fn index_of(&self, party: &str) -> Option<usize> {
        self.parties.iter().position(|p| p == party)
    }

    pub fn bloc_of(&self, index: usize) -> Bloc {
        self.blocs[index]
    }

    pub fn len(&self) -> usize {
        self.parties.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parties.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LikeKind {
    PostLike,
    /// Comment likes, replies and reply likes.
    CommentLike,
    TagMade,
    TagReceived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikeEvent {
    pub respondent_id: String,
    pub page_party: String,
    /// Seconds since the Unix epoch.
    pub timestamp: i64,
    pub kind: LikeKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurveyResponse {
    pub gender: String,
    pub age_band: String,
    pub geography: String,
    pub education: String,
    /// Ordinal opinion items, in the order declared by the survey schema.
    pub opinions: Vec<i32>,
    pub vote_intent: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respondent {
    pub respondent_id: String,
    pub survey: SurveyResponse,
    #[serde(default)]
    pub like_history: Vec<LikeEvent>,
}

impl Respondent {
    /// Index of the stated vote intent in `parties`, if any.
    pub fn vote_index(&self, parties: &PartySpace) -> Option<usize> {
        self.survey
            .vote_intent
            .as_deref()
            .and_then(|p| parties.index_of(p))
    }

    pub fn count_kind(&self, kind: LikeKind) -> usize {
        self.like_history.iter().filter(|e| e.kind == kind).count()
    }
}

/// Per-party like counts indexed in [`PartySpace`] order.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PartyCountVector {
    pub counts: [u32; NUM_PARTIES],
}

impl PartyCountVector {
    pub fn new(counts: [u32; NUM_PARTIES]) -> Self {
        PartyCountVector { counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| u64::from(c)).sum()
    }

    /// Index of the largest count; ties go to the lowest party index.
    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &c) in self.counts.iter().enumerate() {
            if c > self.counts[best] {
                best = i;
            }
        }
        best
    }
}

/// Counts events of the given kinds per party.
///
/// Events whose party is outside `parties` are ignored; validated datasets
/// never contain them.
pub fn like_counts(r: &Respondent, parties: &PartySpace, kinds: &[LikeKind]) -> PartyCountVector {
    debug_assert!(!kinds.is_empty(), "like_counts needs at least one kind");
    let mut v = PartyCountVector::default();
    for e in &r.like_history {
        if !kinds.contains(&e.kind) {
            continue;
        }
        if let Some(i) = parties.index_of(&e.page_party) {
            v.counts[i] += 1;
        }
    }
    v
}

/// Post-like counts, the political-like signal used throughout.
pub fn post_like_counts(r: &Respondent, parties: &PartySpace) -> PartyCountVector {
    like_counts(r, parties, &[LikeKind::PostLike])
}

/// Inclusive collection window in epoch seconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub start: i64,
    pub end: i64,
}

impl Window {
    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t <= self.end
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub respondents: Vec<Respondent>,
    pub party_space: PartySpace,
    pub window: Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FilterRule {
    HasVoteIntent,
    /// At least `k` post likes.
    MinPoliticalLikes(usize),
    /// Any engagement event at all.
    HasAnyLikes,
}

impl FilterRule {
    pub fn accepts(&self, r: &Respondent) -> bool {
        match *self {
            FilterRule::HasVoteIntent => r.survey.vote_intent.is_some(),
            FilterRule::MinPoliticalLikes(k) => r.count_kind(LikeKind::PostLike) >= k,
            FilterRule::HasAnyLikes => !r.like_history.is_empty(),
        }
    }
}

/// Subset of `ds` satisfying `rule`, in the original order.
pub fn filter_dataset(ds: &Dataset, rule: FilterRule) -> Dataset {
    Dataset {
        respondents: ds
            .respondents
            .iter()
            .filter(|r| rule.accepts(r))
            .cloned()
            .collect(),
        party_space: ds.party_space.clone(),
        window: ds.window,
    }
}

impl Dataset {
    /// Validates and wraps respondents.
    pub fn new(respondents: Vec<Respondent>, party_space: PartySpace, window: Window) -> Result<Self> {
        if window.start > window.end {
            return Err(Error::InvalidConfig("window start after end".into()));
        }
        let mut ids = HashSet::with_capacity(respondents.len());
        for r in &respondents {
            if !ids.insert(r.respondent_id.as_str()) {
                return Err(Error::InvalidData(format!(
                    "duplicate respondent id `{}`",
                    r.respondent_id
                )));
            }
            validate_respondent(r, &party_space, window)?;
        }
        Ok(Dataset {
            respondents,
            party_space,
            window,
        })
    }

    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    pub fn filter(&self, rule: FilterRule) -> Dataset {
        filter_dataset(self, rule)
    }

    /// Reads one respondent object per line; blank lines are skipped.
    pub fn read_jsonl<R: BufRead>(reader: R, party_space: PartySpace, window: Window) -> Result<Self> {
        let mut respondents = Vec::new();
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let r: Respondent = serde_json::from_str(&line).map_err(|e| {
                Error::InvalidData(format!("line {}: {e}", lineno + 1))
            })?;
            respondents.push(r);
        }
        Dataset::new(respondents, party_space, window)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for r in &self.respondents {
            serde_json::to_writer(&mut w, r)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

fn validate_respondent(r: &Respondent, parties: &PartySpace, window: Window) -> Result<()> {
    let bad = |msg: String| Error::Respondent {
        id: r.respondent_id.clone(),
        source: Box::new(Error::InvalidData(msg)),
    };
    if let Some(v) = &r.survey.vote_intent {
        if parties.index_of(v).is_none() {
            return Err(bad(format!("vote intent `{v}` is not in the party space")));
        }
    }
    let mut last = i64::MIN;
    for e in &r.like_history {
        if e.respondent_id != r.respondent_id {
            return Err(bad(format!(
                "like event belongs to `{}`",
                e.respondent_id
            )));
        }
        if parties.index_of(&e.page_party).is_none() {
            return Err(bad(format!("unknown page party `{}`", e.page_party)));
        }
        if !window.contains(e.timestamp) {
            return Err(bad(format!("timestamp {} outside window", e.timestamp)));
        }
        if e.timestamp < last {
            return Err(bad("like history not sorted by timestamp".into()));
        }
        last = e.timestamp;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn survey(vote: Option<&str>) -> SurveyResponse {
        SurveyResponse {
            gender: "male".into(),
            age_band: "18-34".into(),
            geography: "east".into(),
            education: "primary".into(),
            opinions: vec![3; 15],
            vote_intent: vote.map(str::to_string),
        }
    }

    fn respondent(id: &str, likes: &[(&str, i64, LikeKind)], vote: Option<&str>) -> Respondent {
        Respondent {
            respondent_id: id.into(),
            survey: survey(vote),
            like_history: likes
                .iter()
                .map(|&(p, t, kind)| LikeEvent {
                    respondent_id: id.into(),
                    page_party: p.into(),
                    timestamp: t,
                    kind,
                })
                .collect(),
        }
    }

    fn window() -> Window {
        Window { start: 0, end: 1000 }
    }

    fn dataset(rs: Vec<Respondent>) -> Dataset {
        Dataset::new(rs, PartySpace::synthetic(), window()).unwrap()
    }

    const PL: LikeKind = LikeKind::PostLike;

    #[test]
    fn party_space_rejects_bad_configs() {
        let ps = PartySpace::synthetic();
        let mut parties = ps.parties().to_vec();
        parties[8] = "P1".into();
        assert!(PartySpace::new(parties, vec![Bloc::Left; 9]).is_err());
        assert!(PartySpace::new(vec!["A".into()], vec![Bloc::Left]).is_err());
        let parties = ps.parties().to_vec();
        assert!(PartySpace::new(parties, vec![Bloc::Left; 8]).is_err());
    }

    #[test]
    fn party_space_toml_round_trip_keeps_order() {
        let ps = PartySpace::synthetic();
        let text = toml::to_string(&ps).unwrap();
        let back: PartySpace = toml::from_str(&text).unwrap();
        assert_eq!(back, ps);
        for i in 0..NUM_PARTIES {
            assert_eq!(back.index_of(ps.party(i)), Some(i));
        }
    }

    #[test]
    fn min_political_likes_drops_zero_like_respondent() {
        let ds = dataset(vec![
            respondent("a", &[("P1", 1, PL)], Some("P1")),
            respondent("b", &[], Some("P2")),
            respondent("c", &[("P3", 2, PL)], Some("P3")),
        ]);
        let out = filter_dataset(&ds, FilterRule::MinPoliticalLikes(1));
        let ids: Vec<_> = out.respondents.iter().map(|r| r.respondent_id.as_str()).collect();
        assert_eq!(ids, ["a", "c"]);
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn min_seven_excludes_six_likes() {
        let likes: Vec<_> = (0..6).map(|t| ("P1", t, PL)).collect();
        let ds = dataset(vec![respondent("a", &likes, Some("P1"))]);
        assert!(filter_dataset(&ds, FilterRule::MinPoliticalLikes(7)).is_empty());
        assert_eq!(filter_dataset(&ds, FilterRule::MinPoliticalLikes(6)).len(), 1);
    }

    #[test]
    fn comment_likes_do_not_count_as_political_likes() {
        let r = respondent("a", &[("P1", 1, LikeKind::CommentLike)], Some("P1"));
        assert!(!FilterRule::MinPoliticalLikes(1).accepts(&r));
        assert!(FilterRule::HasAnyLikes.accepts(&r));
    }

    #[test]
    fn has_vote_intent_excludes_none() {
        let ds = dataset(vec![
            respondent("a", &[], None),
            respondent("b", &[], Some("P2")),
        ]);
        let out = filter_dataset(&ds, FilterRule::HasVoteIntent);
        assert_eq!(out.len(), 1);
        assert_eq!(out.respondents[0].respondent_id, "b");
    }

    #[test]
    fn like_counts_by_kind() {
        let ps = PartySpace::synthetic();
        let r = respondent("a", &[("P1", 1, PL), ("P1", 2, PL), ("P3", 3, PL)], None);
        assert_eq!(
            like_counts(&r, &ps, &[PL]).counts,
            [2, 0, 1, 0, 0, 0, 0, 0, 0]
        );
        assert_eq!(like_counts(&r, &ps, &[LikeKind::CommentLike]).total(), 0);
        let empty = respondent("b", &[], None);
        assert_eq!(like_counts(&empty, &ps, &[PL]), PartyCountVector::default());
    }

    #[test]
    fn dataset_validation() {
        let ps = PartySpace::synthetic();
        let dup = vec![respondent("a", &[], None), respondent("a", &[], None)];
        assert!(Dataset::new(dup, ps.clone(), window()).is_err());
        let unsorted = vec![respondent("a", &[("P1", 5, PL), ("P1", 2, PL)], None)];
        assert!(Dataset::new(unsorted, ps.clone(), window()).is_err());
        let outside = vec![respondent("a", &[("P1", 5000, PL)], None)];
        assert!(Dataset::new(outside, ps.clone(), window()).is_err());
        let unknown = vec![respondent("a", &[("Q", 5, PL)], None)];
        assert!(Dataset::new(unknown, ps.clone(), window()).is_err());
        let bad_vote = vec![respondent("a", &[], Some("Q"))];
        assert!(Dataset::new(bad_vote, ps, window()).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let ds = dataset(vec![
            respondent("a", &[("P4", 10, PL), ("P2", 11, LikeKind::TagMade)], Some("P4")),
            respondent("b", &[], None),
        ]);
        let mut buf = Vec::new();
        ds.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\"kind\":\"post_like\""));
        assert!(text.contains("\"kind\":\"tag_made\""));
        let back = Dataset::read_jsonl(&buf[..], ds.party_space.clone(), ds.window).unwrap();
        assert_eq!(back, ds);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_history() -> impl Strategy<Value = Vec<(usize, LikeKind)>> {
            let kind = prop_oneof![
                Just(LikeKind::PostLike),
                Just(LikeKind::CommentLike),
                Just(LikeKind::TagMade),
                Just(LikeKind::TagReceived),
            ];
            prop::collection::vec((0..NUM_PARTIES, kind), 0..60)
        }

        fn build(h: &[(usize, LikeKind)], vote: Option<usize>) -> Respondent {
            let ps = PartySpace::synthetic();
            Respondent {
                respondent_id: "r".into(),
                survey: survey(vote.map(|v| ps.party(v))),
                like_history: h
                    .iter()
                    .enumerate()
                    .map(|(t, &(p, kind))| LikeEvent {
                        respondent_id: "r".into(),
                        page_party: ps.party(p).into(),
                        timestamp: t as i64,
                        kind,
                    })
                    .collect(),
            }
        }

        proptest! {
            #[test]
            fn total_equals_matching_events(h in arb_history()) {
                let ps = PartySpace::synthetic();
                let r = build(&h, None);
                for kinds in [&[LikeKind::PostLike][..], &[LikeKind::CommentLike, LikeKind::TagMade][..]] {
                    let v = like_counts(&r, &ps, kinds);
                    let expected = h.iter().filter(|(_, k)| kinds.contains(k)).count() as u64;
                    prop_assert_eq!(v.total(), expected);
                }
            }

            #[test]
            fn filter_is_idempotent(
                hs in prop::collection::vec((arb_history(), prop::option::of(0..NUM_PARTIES)), 0..12),
                k in 0usize..10,
                which in 0usize..3,
            ) {
                let rs: Vec<_> = hs
                    .iter()
                    .enumerate()
                    .map(|(i, (h, v))| {
                        let mut r = build(h, *v);
                        r.respondent_id = format!("r{i}");
                        for e in &mut r.like_history {
                            e.respondent_id = r.respondent_id.clone();
                        }
                        r
                    })
                    .collect();
                let ds = dataset(rs);
                let rule = [FilterRule::HasVoteIntent, FilterRule::MinPoliticalLikes(k), FilterRule::HasAnyLikes][which];
                let once = filter_dataset(&ds, rule);
                let twice = filter_dataset(&once, rule);
                prop_assert_eq!(once, twice);
            }
        }
    }
}
