//! Tag and comment-like propagation of party affinity, and detection of
//! political media posts by liker/commenter disagreement.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{normalize_likes, NormalizedLikeVector};
use crate::model::{post_like_counts, Dataset, NUM_PARTIES};

/// Cumulative, unnormalized affinity a user accrues from social exchanges.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PropagationVector {
    pub values: [f64; NUM_PARTIES],
}

impl PropagationVector {
    fn add(&mut self, v: &NormalizedLikeVector) {
        for (a, b) in self.values.iter_mut().zip(&v.shares) {
            *a += b;
        }
    }
}

/// Propagation vectors keyed by user id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PropagationState {
    vectors: BTreeMap<String, PropagationVector>,
}

impl PropagationState {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, user: &str) -> PropagationVector {
        self.vectors.get(user).copied().unwrap_or_default()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &PropagationVector)> {
        self.vectors.iter().map(|(k, v)| (k.as_str(), v))
    }

    fn entry(&mut self, user: &str) -> &mut PropagationVector {
        self.vectors.entry(user.to_string()).or_default()
    }
}

/// Records one tag: each side receives the other side's like vector.
/// A self-tag adds the user's own vector once.
pub fn apply_tag(
    state: &mut PropagationState,
    tagger: &str,
    tagger_likes: &NormalizedLikeVector,
    tagged: &str,
    tagged_likes: &NormalizedLikeVector,
) {
    if tagger == tagged {
        state.entry(tagger).add(tagger_likes);
        return;
    }
    state.entry(tagger).add(tagged_likes);
    state.entry(tagged).add(tagger_likes);
}

/// Like vectors of known users, keyed by id.
pub type LikeDb = HashMap<String, NormalizedLikeVector>;

/// Normalized post-like vectors of every respondent with at least one post like.
pub fn like_db_from_dataset(ds: &Dataset) -> LikeDb {
    ds.respondents
        .iter()
        .filter_map(|r| {
            normalize_likes(&post_like_counts(r, &ds.party_space))
                .ok()
                .map(|v| (r.respondent_id.clone(), v))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MediaPost {
    pub post_id: String,
    pub liker_ids: BTreeSet<String>,
    pub commenter_ids: BTreeSet<String>,
}

fn mean_vector<'a>(ids: impl Iterator<Item = &'a String>, db: &LikeDb) -> Option<[f64; NUM_PARTIES]> {
    let mut sum = [0.0; NUM_PARTIES];
    let mut n = 0usize;
    for id in ids {
        if let Some(v) = db.get(id) {
            for (s, x) in sum.iter_mut().zip(&v.shares) {
                *s += x;
            }
            n += 1;
        }
    }
    (n > 0).then(|| sum.map(|s| s / n as f64))
}

/// `1 - cos` between the mean like vector of the post's likers and that of
/// its commenters. Users without a known like vector are ignored.
pub fn political_score(post: &MediaPost, db: &LikeDb) -> Result<f64> {
    let unscorable = || Error::Unscorable(post.post_id.clone());
    let likers = mean_vector(post.liker_ids.iter(), db).ok_or_else(unscorable)?;
    let commenters = mean_vector(post.commenter_ids.iter(), db).ok_or_else(unscorable)?;
    let dot: f64 = likers.iter().zip(&commenters).map(|(a, b)| a * b).sum();
    let na = likers.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nb = commenters.iter().map(|b| b * b).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(unscorable());
    }
    Ok((1.0 - dot / (na * nb)).clamp(0.0, 1.0))
}

/// Ids of the top quarter (rounded up) of scorable posts by political score,
/// plus any post tied with the cut-off score. Unscorable posts are skipped.
pub fn select_political(posts: &[MediaPost], db: &LikeDb) -> Result<BTreeSet<String>> {
    let mut scored: Vec<(f64, &str)> = posts
        .iter()
        .filter_map(|p| political_score(p, db).ok().map(|s| (s, p.post_id.as_str())))
        .collect();
    select_top_quartile(&mut scored)
}

/// Top-quartile selection over precomputed `(score, id)` pairs.
pub fn select_top_quartile(scored: &mut [(f64, &str)]) -> Result<BTreeSet<String>> {
    if scored.len() < 4 {
        return Err(Error::TooFewPosts(scored.len()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then_with(|| a.1.cmp(b.1)));
    let keep = scored.len().div_ceil(4);
    let cut = scored[keep - 1].0;
    Ok(scored
        .iter()
        .take_while(|(s, _)| *s >= cut)
        .map(|(_, id)| id.to_string())
        .collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagEdge {
    pub tagger_id: String,
    pub tagged_id: String,
}

/// A like on a comment. `political_page` marks comments under politicians' posts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CommentLikeEdge {
    pub liker_id: String,
    pub author_id: String,
    pub post_id: String,
    #[serde(default)]
    pub political_page: bool,
}

/// One line of the social-graph JSON Lines file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum SocialRecord {
    MediaPost(MediaPost),
    Tag(TagEdge),
    CommentLike(CommentLikeEdge),
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SocialGraph {
    pub media_posts: Vec<MediaPost>,
    pub tags: Vec<TagEdge>,
    pub comment_likes: Vec<CommentLikeEdge>,
}

impl SocialGraph {
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<Self> {
        let mut g = SocialGraph::default();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: SocialRecord = serde_json::from_str(&line)
                .map_err(|e| Error::InvalidData(format!("line {}: {e}", lineno + 1)))?;
            match rec {
                SocialRecord::MediaPost(p) => g.media_posts.push(p),
                SocialRecord::Tag(t) => g.tags.push(t),
                SocialRecord::CommentLike(c) => g.comment_likes.push(c),
            }
        }
        Ok(g)
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        let records = self
            .media_posts
            .iter()
            .cloned()
            .map(SocialRecord::MediaPost)
            .chain(self.tags.iter().cloned().map(SocialRecord::Tag))
            .chain(self.comment_likes.iter().cloned().map(SocialRecord::CommentLike));
        for rec in records {
            serde_json::to_writer(&mut w, &rec)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PropagationOutcome {
    pub political_posts: BTreeSet<String>,
    pub tags: PropagationState,
    pub comment_likes: PropagationState,
}

/// Runs both propagation families over `graph`.
///
/// Tags between users with known like vectors always propagate. Comment
/// likes propagate only on politicians' pages or on media posts selected as
/// political; fewer than four scorable media posts means none are selected.
pub fn propagate(graph: &SocialGraph, db: &LikeDb) -> Result<PropagationOutcome> {
    let political_posts = match select_political(&graph.media_posts, db) {
        Ok(s) => s,
        Err(Error::TooFewPosts(_)) => BTreeSet::new(),
        Err(e) => return Err(e),
    };
    let mut tags = PropagationState::new();
    for t in &graph.tags {
        if let (Some(a), Some(b)) = (db.get(&t.tagger_id), db.get(&t.tagged_id)) {
            apply_tag(&mut tags, &t.tagger_id, a, &t.tagged_id, b);
        }
    }
    let mut comment_likes = PropagationState::new();
    for c in &graph.comment_likes {
        if !(c.political_page || political_posts.contains(&c.post_id)) {
            continue;
        }
        if let (Some(a), Some(b)) = (db.get(&c.liker_id), db.get(&c.author_id)) {
            apply_tag(&mut comment_likes, &c.liker_id, a, &c.author_id, b);
        }
    }
    Ok(PropagationOutcome {
        political_posts,
        tags,
        comment_likes,
    })
}

/// `user_id,family,<party...>` rows, users sorted by id.
pub fn write_propagation_csv<W: Write>(w: W, outcome: &PropagationOutcome, parties: &[String]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["user_id".to_string(), "family".to_string()];
    header.extend(parties.iter().cloned());
    out.write_record(&header)?;
    for (family, state) in [("tag", &outcome.tags), ("comment_like", &outcome.comment_likes)] {
        for (user, v) in state.iter() {
            let mut rec = vec![user.to_string(), family.to_string()];
            rec.extend(v.values.iter().map(|x| x.to_string()));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn nv(s: [f64; 9]) -> NormalizedLikeVector {
        NormalizedLikeVector { shares: s }
    }

    const A: [f64; 9] = [0.0, 0.0, 0.0, 0.4, 0.0, 0.4, 0.2, 0.0, 0.0];
    const B: [f64; 9] = [0.0, 0.0, 0.0, 0.9, 0.1, 0.0, 0.0, 0.0, 0.0];

    #[test]
    fn worked_tag_example() {
        let mut st = PropagationState::new();
        apply_tag(&mut st, "A", &nv(A), "B", &nv(B));
        assert_eq!(st.get("A").values, B);
        assert_eq!(st.get("B").values, A);
        apply_tag(&mut st, "A", &nv(A), "B", &nv(B));
        assert_eq!(st.get("A").values, B.map(|x| 2.0 * x));
        assert_eq!(st.get("B").values, A.map(|x| 2.0 * x));
    }

    #[test]
    fn self_tag_adds_own_vector_once() {
        let mut st = PropagationState::new();
        apply_tag(&mut st, "A", &nv(A), "A", &nv(A));
        assert_eq!(st.get("A").values, A);
    }

    fn post(id: &str, likers: &[&str], commenters: &[&str]) -> MediaPost {
        MediaPost {
            post_id: id.into(),
            liker_ids: likers.iter().map(|s| s.to_string()).collect(),
            commenter_ids: commenters.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn onehot(i: usize) -> NormalizedLikeVector {
        let mut s = [0.0; 9];
        s[i] = 1.0;
        nv(s)
    }

    fn db() -> LikeDb {
        let mut db = LikeDb::new();
        db.insert("u0".into(), onehot(0));
        db.insert("u1".into(), onehot(1));
        db.insert("a".into(), nv(A));
        db
    }

    #[test]
    fn score_extremes_and_middle() {
        let db = db();
        assert!(political_score(&post("p", &["u0"], &["u0"]), &db).unwrap().abs() < 1e-15);
        assert!((political_score(&post("p", &["u0"], &["u1"]), &db).unwrap() - 1.0).abs() < 1e-15);
        // likers mean [1,0,...], commenters mean [0.5,0.5,0,...]
        let s = political_score(&post("p", &["u0"], &["u0", "u1"]), &db).unwrap();
        assert!((s - (1.0 - 1.0 / 2f64.sqrt())).abs() < 1e-12);
        assert!((s - 0.2929).abs() < 1e-4);
        assert!(matches!(
            political_score(&post("p", &["nobody"], &["u0"]), &db),
            Err(Error::Unscorable(_))
        ));
    }

    fn scored(scores: &[f64]) -> BTreeSet<String> {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("p{i}")).collect();
        let mut pairs: Vec<(f64, &str)> = scores.iter().zip(&ids).map(|(&s, id)| (s, id.as_str())).collect();
        select_top_quartile(&mut pairs).unwrap()
    }

    #[test]
    fn quartile_selection() {
        assert_eq!(scored(&[0.9, 0.1, 0.2, 0.0]), BTreeSet::from(["p0".to_string()]));
        assert_eq!(scored(&[0.3; 6]).len(), 6);
        assert_eq!(scored(&[0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8]).len(), 2);
        assert_eq!(scored(&[0.1, 0.2, 0.3, 0.4, 0.5]).len(), 2);
        let mut few = vec![(0.1, "a"), (0.2, "b"), (0.3, "c")];
        assert!(matches!(select_top_quartile(&mut few), Err(Error::TooFewPosts(3))));
    }

    #[test]
    fn comment_likes_need_political_context() {
        let db = db();
        let graph = SocialGraph {
            media_posts: vec![
                post("m0", &["u0"], &["u1"]),
                post("m1", &["u0"], &["u0"]),
                post("m2", &["u1"], &["u1"]),
                post("m3", &["a"], &["a"]),
            ],
            tags: vec![TagEdge { tagger_id: "u0".into(), tagged_id: "ghost".into() }],
            comment_likes: vec![
                CommentLikeEdge { liker_id: "u0".into(), author_id: "a".into(), post_id: "m0".into(), political_page: false },
                CommentLikeEdge { liker_id: "u1".into(), author_id: "a".into(), post_id: "m1".into(), political_page: false },
                CommentLikeEdge { liker_id: "u1".into(), author_id: "u0".into(), post_id: "x".into(), political_page: true },
            ],
        };
        let out = propagate(&graph, &db).unwrap();
        assert_eq!(out.political_posts, BTreeSet::from(["m0".to_string()]));
        assert_eq!(out.tags.iter().count(), 0);
        assert_eq!(out.comment_likes.get("u0").values, [A, onehot(1).shares].iter().fold([0.0; 9], |mut acc, v| {
            for i in 0..9 {
                acc[i] += v[i];
            }
            acc
        }));
        assert_eq!(out.comment_likes.get("a").values, onehot(0).shares);
        let mut buf = Vec::new();
        graph.write_jsonl(&mut buf).unwrap();
        assert!(String::from_utf8(buf.clone()).unwrap().contains("\"type\":\"media_post\""));
        assert_eq!(SocialGraph::read_jsonl(&buf[..]).unwrap(), graph);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn arb_vec() -> impl Strategy<Value = [f64; 9]> {
            prop::array::uniform9(0.0f64..1.0)
        }

        proptest! {
            #[test]
            fn tag_accumulation_is_order_free(
                edges in prop::collection::vec((0usize..4, 0usize..4), 0..30),
                seed in any::<u64>(),
            ) {
                let vecs: Vec<NormalizedLikeVector> = (0..4)
                    .map(|i| onehot(i * 2))
                    .collect();
                let run = |order: &[(usize, usize)]| {
                    let mut st = PropagationState::new();
                    for &(a, b) in order {
                        apply_tag(&mut st, &format!("u{a}"), &vecs[a], &format!("u{b}"), &vecs[b]);
                    }
                    st
                };
                let mut shuffled = edges.clone();
                let n = shuffled.len();
                if n > 1 {
                    shuffled.rotate_left((seed as usize) % n);
                }
                prop_assert_eq!(run(&edges), run(&shuffled));
            }

            #[test]
            fn score_in_unit_interval(a in arb_vec(), b in arb_vec()) {
                prop_assume!(a.iter().sum::<f64>() > 0.0 && b.iter().sum::<f64>() > 0.0);
                let mut db = LikeDb::new();
                db.insert("x".into(), nv(a));
                db.insert("y".into(), nv(b));
                let s = political_score(&post("p", &["x"], &["y"]), &db).unwrap();
                prop_assert!((0.0..=1.0).contains(&s));
            }

            #[test]
            fn selection_size(scores in prop::collection::vec(0.0f64..1.0, 4..60)) {
                let sel = scored(&scores);
                let k = scores.len().div_ceil(4);
                let mut sorted = scores.clone();
                sorted.sort_by(|a, b| b.total_cmp(a));
                let cut = sorted[k - 1];
                let expected = scores.iter().filter(|&&s| s >= cut).count();
                prop_assert_eq!(sel.len(), expected);
                prop_assert!(sel.len() >= k);
            }
        }
    }
}
