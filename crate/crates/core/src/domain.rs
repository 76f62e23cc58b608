//! Shared domain types: demographic vocabulary, post categories, users, posts and
//! interaction events.
//!
//! Ids are dense: user `i` is stored at row `i` of every user-indexed matrix, and the
//! same holds for posts. A [`Dataset`] enforces this on construction.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the sum of a [`CategoryDistribution`].
pub const DISTRIBUTION_TOLERANCE: f64 = 1e-9;

pub const CATEGORY_NAMES: [&str; 10] = [
    "science",
    "technology",
    "entertainment",
    "sports",
    "finance",
    "art",
    "education",
    "travel",
    "health",
    "politics",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Attribute {
    Age,
    Gender,
    Education,
    Occupation,
    Location,
}

impl Attribute {
    pub const COUNT: usize = 5;
    pub const ALL: [Attribute; 5] = [
        Attribute::Age,
        Attribute::Gender,
        Attribute::Education,
        Attribute::Occupation,
        Attribute::Location,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Attribute::Age => "age",
            Attribute::Gender => "gender",
            Attribute::Education => "education",
            Attribute::Occupation => "occupation",
            Attribute::Location => "location",
        }
    }
}

impl fmt::Display for Attribute {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Attribute {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Attribute::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown attribute `{s}`")))
    }
}

/// Type labels for each demographic attribute plus the category names.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    types: [Vec<String>; 5],
    categories: Vec<String>,
}

impl Default for Vocabulary {
    fn default() -> Self {
        Vocabulary::with_categories(CATEGORY_NAMES.len())
    }
}

impl Vocabulary {
    /// The standard demographic vocabulary with the first `n` category names
    /// (generic `category<i>` names past ten).
    pub fn with_categories(n: usize) -> Self {
        let to_vec = |xs: &[&str]| xs.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        let categories = (0..n)
            .map(|i| {
                CATEGORY_NAMES
                    .get(i)
                    .map(|s| s.to_string())
                    .unwrap_or_else(|| format!("category{i}"))
            })
            .collect();
        Vocabulary {
            types: [
                to_vec(&["<=15", "16-20", "21-26", "27-35", "36-50", ">50"]),
                to_vec(&["m", "f", "other"]),
                to_vec(&["primary", "secondary", "bachelor", "master", "doctorate"]),
                to_vec(&[
                    "student",
                    "engineer",
                    "healthcare",
                    "educator",
                    "business",
                    "artist",
                    "unemployed",
                    "retired",
                ]),
                to_vec(&["urban", "suburban", "rural", "abroad"]),
            ],
            categories,
        }
    }

    pub fn new(types: [Vec<String>; 5], categories: Vec<String>) -> Result<Self> {
        for (attr, labels) in Attribute::ALL.iter().zip(&types) {
            if labels.len() < 2 {
                return Err(Error::invalid(format!("attribute {attr} needs at least 2 types")));
            }
            for (i, l) in labels.iter().enumerate() {
                if labels[..i].contains(l) {
                    return Err(Error::invalid(format!("duplicate type `{l}` for {attr}")));
                }
            }
        }
        if categories.is_empty() {
            return Err(Error::Empty("categories"));
        }
        Ok(Vocabulary { types, categories })
    }

    pub fn types(&self, attr: Attribute) -> &[String] {
        &self.types[attr.index()]
    }

    pub fn type_count(&self, attr: Attribute) -> usize {
        self.types[attr.index()].len()
    }

    pub fn type_index(&self, attr: Attribute, label: &str) -> Option<usize> {
        self.types[attr.index()].iter().position(|l| l == label)
    }

    pub fn categories(&self) -> &[String] {
        &self.categories
    }

    pub fn n_categories(&self) -> usize {
        self.categories.len()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c == name)
    }

    /// Feature width: one column per attribute followed by one per category.
    pub fn feature_width(&self) -> usize {
        Attribute::COUNT + self.categories.len()
    }
}

/// A user's type index for each of the five attributes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DemographicProfile([usize; 5]);

impl DemographicProfile {
    pub fn new(types: [usize; 5], vocab: &Vocabulary) -> Result<Self> {
        for attr in Attribute::ALL {
            if types[attr.index()] >= vocab.type_count(attr) {
                return Err(Error::invalid(format!(
                    "type index {} out of range for {attr}",
                    types[attr.index()]
                )));
            }
        }
        Ok(DemographicProfile(types))
    }

    /// Builds a profile from `(attribute, label)` pairs; all five attributes are required.
    pub fn from_labels<'a, I>(labels: I, vocab: &Vocabulary) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut types = [usize::MAX; 5];
        for (attr, label) in labels {
            let attr: Attribute = attr.parse()?;
            let idx = vocab
                .type_index(attr, label)
                .ok_or_else(|| Error::invalid(format!("unknown {attr} type `{label}`")))?;
            types[attr.index()] = idx;
        }
        if let Some(attr) = Attribute::ALL.iter().find(|a| types[a.index()] == usize::MAX) {
            return Err(Error::invalid(format!("profile missing attribute {attr}")));
        }
        DemographicProfile::new(types, vocab)
    }

    pub fn get(&self, attr: Attribute) -> usize {
        self.0[attr.index()]
    }

    pub fn types(&self) -> [usize; 5] {
        self.0
    }

    pub fn labels<'v>(&self, vocab: &'v Vocabulary) -> Vec<(Attribute, &'v str)> {
        Attribute::ALL
            .iter()
            .map(|&a| (a, vocab.types(a)[self.get(a)].as_str()))
            .collect()
    }
}

/// Probability vector over post categories.
#[derive(Clone, Debug, PartialEq)]
pub struct CategoryDistribution(Vec<f64>);

impl CategoryDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::Empty("category distribution"));
        }
        if let Some(p) = probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::invalid(format!("category probability {p} outside [0,1]")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > DISTRIBUTION_TOLERANCE {
            return Err(Error::invalid(format!("category probabilities sum to {sum}")));
        }
        Ok(CategoryDistribution(probs))
    }

    /// Normalizes non-negative mass; all-zero mass yields the uniform distribution.
    pub fn from_mass(mass: &[f64]) -> Result<Self> {
        if mass.iter().any(|m| !m.is_finite() || *m < 0.0) {
            return Err(Error::invalid("category mass must be finite and non-negative"));
        }
        let total: f64 = mass.iter().sum();
        if total == 0.0 {
            return Ok(CategoryDistribution::uniform(mass.len()));
        }
        Ok(CategoryDistribution(mass.iter().map(|m| m / total).collect()))
    }

    pub fn uniform(n: usize) -> Self {
        CategoryDistribution(vec![1.0 / n as f64; n])
    }

    pub fn one_hot(n: usize, j: usize) -> Self {
        let mut v = vec![0.0; n];
        v[j] = 1.0;
        CategoryDistribution(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest probability (lowest index on ties).
    pub fn dominant(&self) -> usize {
        let mut best = 0;
        for (j, &p) in self.0.iter().enumerate() {
            if p > self.0[best] {
                best = j;
            }
        }
        best
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct UserId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PostId(pub u32);

impl UserId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl PostId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for UserId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for PostId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct User {
    pub id: UserId,
    pub profile: DemographicProfile,
    /// Category mass of the user's authored posts, normalized.
    pub history: CategoryDistribution,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Post {
    pub id: PostId,
    pub author: UserId,
    pub categories: CategoryDistribution,
    pub created_at: u64,
}

// The listed reactions; the source set is open-ended ("...").
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Reaction {
    Like,
    Haha,
    Love,
    Angry,
    Care,
    Sad,
}

impl Reaction {
    pub const COUNT: usize = 6;
    pub const ALL: [Reaction; 6] = [
        Reaction::Like,
        Reaction::Haha,
        Reaction::Love,
        Reaction::Angry,
        Reaction::Care,
        Reaction::Sad,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Reaction::Like => "like",
            Reaction::Haha => "haha",
            Reaction::Love => "love",
            Reaction::Angry => "angry",
            Reaction::Care => "care",
            Reaction::Sad => "sad",
        }
    }
}

impl FromStr for Reaction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Reaction::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown reaction `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum EventKind {
    Reaction(Reaction),
    Comment,
    Share,
    Authored,
}

impl EventKind {
    pub fn name(self) -> &'static str {
        match self {
            EventKind::Reaction(_) => "reaction",
            EventKind::Comment => "comment",
            EventKind::Share => "share",
            EventKind::Authored => "authored",
        }
    }

    /// Parses the `kind`/`reaction` field pair of an event record.
    pub fn parse(kind: &str, reaction: Option<&str>) -> Result<Self> {
        match (kind, reaction) {
            ("reaction", Some(r)) => Ok(EventKind::Reaction(r.parse()?)),
            ("reaction", None) => Err(Error::invalid("reaction event without reaction sub-kind")),
            (_, Some(_)) => Err(Error::invalid(format!("`{kind}` event must not carry a reaction"))),
            ("comment", None) => Ok(EventKind::Comment),
            ("share", None) => Ok(EventKind::Share),
            ("authored", None) => Ok(EventKind::Authored),
            (other, None) => Err(Error::invalid(format!("unknown event kind `{other}`"))),
        }
    }

    pub fn reaction(self) -> Option<Reaction> {
        match self {
            EventKind::Reaction(r) => Some(r),
            _ => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct InteractionEvent {
    pub user: UserId,
    pub post: PostId,
    pub kind: EventKind,
    pub seq: u64,
}

/// Per-category engagement counts for one user. Counts are real-valued because an event
/// on a mixed-category post is split across categories by the post's distribution.
#[derive(Clone, Debug, PartialEq)]
pub struct InteractionTally {
    pub reactions: Vec<[f64; Reaction::COUNT]>,
    pub comments: Vec<f64>,
    pub shares: Vec<f64>,
}

impl InteractionTally {
    pub fn zeros(n_categories: usize) -> Self {
        InteractionTally {
            reactions: vec![[0.0; Reaction::COUNT]; n_categories],
            comments: vec![0.0; n_categories],
            shares: vec![0.0; n_categories],
        }
    }

    pub fn n_categories(&self) -> usize {
        self.comments.len()
    }

    pub fn reaction(&self, category: usize, r: Reaction) -> f64 {
        self.reactions[category][r.index()]
    }

    /// Adds one event, split across categories by `probs`. Authored events are ignored.
    pub fn record(&mut self, kind: EventKind, probs: &[f64]) {
        for (j, &p) in probs.iter().enumerate() {
            match kind {
                EventKind::Reaction(r) => self.reactions[j][r.index()] += p,
                EventKind::Comment => self.comments[j] += p,
                EventKind::Share => self.shares[j] += p,
                EventKind::Authored => {}
            }
        }
    }

    pub fn is_empty(&self) -> bool {
        self.comments.iter().all(|&c| c == 0.0)
            && self.shares.iter().all(|&s| s == 0.0)
            && self.reactions.iter().flatten().all(|&r| r == 0.0)
    }
}

/// Binary user × post matrix of observed interactions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ObservedInteractionMatrix {
    n_users: usize,
    n_posts: usize,
    cells: Vec<bool>,
}

impl ObservedInteractionMatrix {
    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_posts(&self) -> usize {
        self.n_posts
    }

    pub fn get(&self, user: usize, post: usize) -> bool {
        self.cells[user * self.n_posts + post]
    }

    pub fn row(&self, user: usize) -> &[bool] {
        &self.cells[user * self.n_posts..(user + 1) * self.n_posts]
    }

    pub fn count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    /// Observed `(user, post)` cells in row-major order.
    pub fn positives(&self) -> Vec<(usize, usize)> {
        self.cells
            .iter()
            .enumerate()
            .filter(|(_, &c)| c)
            .map(|(i, _)| (i / self.n_posts, i % self.n_posts))
            .collect()
    }
}

pub fn build_observed_matrix(
    events: &[InteractionEvent],
    n_users: usize,
    n_posts: usize,
) -> Result<ObservedInteractionMatrix> {
    let mut cells = vec![false; n_users * n_posts];
    for e in events {
        let (u, p) = (e.user.index(), e.post.index());
        if u >= n_users || p >= n_posts {
            return Err(Error::invalid(format!(
                "event ({}, {}) outside {n_users}x{n_posts}",
                e.user, e.post
            )));
        }
        cells[u * n_posts + p] = true;
    }
    Ok(ObservedInteractionMatrix {
        n_users,
        n_posts,
        cells,
    })
}

/// Accumulates `user`'s reactions, comments and shares per category. Events by other
/// users and `authored` events are ignored.
pub fn tally_engagement(
    events: &[InteractionEvent],
    user: UserId,
    posts: &[Post],
    n_categories: usize,
) -> Result<InteractionTally> {
    let mut tally = InteractionTally::zeros(n_categories);
    for e in events.iter().filter(|e| e.user == user) {
        let post = posts
            .get(e.post.index())
            .ok_or_else(|| Error::invalid(format!("event references unknown post {}", e.post)))?;
        let probs = post.categories.as_slice();
        if probs.len() != n_categories {
            return Err(Error::shape(format!(
                "post {} has {} categories, expected {n_categories}",
                post.id,
                probs.len()
            )));
        }
        tally.record(e.kind, probs);
    }
    Ok(tally)
}

/// Tallies for every user in one pass over `events`.
pub fn tally_all(
    events: &[InteractionEvent],
    posts: &[Post],
    n_users: usize,
    n_categories: usize,
) -> Result<Vec<InteractionTally>> {
    let mut tallies = vec![InteractionTally::zeros(n_categories); n_users];
    for e in events {
        let tally = tallies
            .get_mut(e.user.index())
            .ok_or_else(|| Error::invalid(format!("event references unknown user {}", e.user)))?;
        let post = posts
            .get(e.post.index())
            .ok_or_else(|| Error::invalid(format!("event references unknown post {}", e.post)))?;
        if post.categories.len() != n_categories {
            return Err(Error::shape(format!("post {} category width", post.id)));
        }
        tally.record(e.kind, post.categories.as_slice());
    }
    Ok(tallies)
}

/// Users, posts and events with dense ids and referential integrity checked.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub vocab: Vocabulary,
    pub users: Vec<User>,
    pub posts: Vec<Post>,
    pub events: Vec<InteractionEvent>,
}

impl Dataset {
    pub fn new(vocab: Vocabulary, users: Vec<User>, posts: Vec<Post>, events: Vec<InteractionEvent>) -> Result<Self> {
        let ds = Dataset {
            vocab,
            users,
            posts,
            events,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        let n_cat = self.vocab.n_categories();
        for (i, u) in self.users.iter().enumerate() {
            if u.id.index() != i {
                return Err(Error::invalid(format!("user id {} at position {i}", u.id)));
            }
            if u.history.len() != n_cat {
                return Err(Error::shape(format!("user {} history width", u.id)));
            }
            DemographicProfile::new(u.profile.types(), &self.vocab)?;
        }
        for (i, p) in self.posts.iter().enumerate() {
            if p.id.index() != i {
                return Err(Error::invalid(format!("post id {} at position {i}", p.id)));
            }
            if p.author.index() >= self.users.len() {
                return Err(Error::invalid(format!("post {} has unknown author {}", p.id, p.author)));
            }
            if p.categories.len() != n_cat {
                return Err(Error::shape(format!("post {} category width", p.id)));
            }
        }
        for e in &self.events {
            if e.user.index() >= self.users.len() || e.post.index() >= self.posts.len() {
                return Err(Error::invalid(format!(
                    "event seq {} references unknown user {} or post {}",
                    e.seq, e.user, e.post
                )));
            }
        }
        Ok(())
    }

    pub fn n_users(&self) -> usize {
        self.users.len()
    }

    pub fn n_posts(&self) -> usize {
        self.posts.len()
    }

    pub fn observed(&self) -> Result<ObservedInteractionMatrix> {
        build_observed_matrix(&self.events, self.n_users(), self.n_posts())
    }

    pub fn authored_posts(&self, user: UserId) -> impl Iterator<Item = &Post> + '_ {
        self.posts.iter().filter(move |p| p.author == user)
    }

    /// Normalized category mass of a user's authored posts (uniform when there are none).
    pub fn history_of(&self, user: UserId) -> Result<CategoryDistribution> {
        let mut mass = vec![0.0; self.vocab.n_categories()];
        for p in self.authored_posts(user) {
            for (m, c) in mass.iter_mut().zip(p.categories.as_slice()) {
                *m += c;
            }
        }
        CategoryDistribution::from_mass(&mass)
    }

    pub fn recompute_histories(&mut self) -> Result<()> {
        for i in 0..self.users.len() {
            let h = self.history_of(self.users[i].id)?;
            self.users[i].history = h;
        }
        Ok(())
    }

    pub fn tally(&self, user: UserId) -> Result<InteractionTally> {
        tally_engagement(&self.events, user, &self.posts, self.vocab.n_categories())
    }

    pub fn is_cold(&self, user: UserId) -> bool {
        crate::coldstart::is_cold(user, &self.events, &self.posts)
    }

    pub fn next_seq(&self) -> u64 {
        let e = self.events.iter().map(|e| e.seq + 1).max().unwrap_or(0);
        let p = self.posts.iter().map(|p| p.created_at + 1).max().unwrap_or(0);
        e.max(p)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashSet;

    fn ev(u: u32, p: u32, kind: EventKind, seq: u64) -> InteractionEvent {
        InteractionEvent {
            user: UserId(u),
            post: PostId(p),
            kind,
            seq,
        }
    }

    fn post(id: u32, probs: Vec<f64>) -> Post {
        Post {
            id: PostId(id),
            author: UserId(0),
            categories: CategoryDistribution::new(probs).unwrap(),
            created_at: id as u64,
        }
    }

    #[test]
    fn observed_matrix_empty_and_single() {
        let m = build_observed_matrix(&[], 2, 4).unwrap();
        assert_eq!(m.count(), 0);

        let like = EventKind::Reaction(Reaction::Like);
        let m = build_observed_matrix(&[ev(0, 3, like, 0)], 2, 4).unwrap();
        assert!(m.get(0, 3));
        assert_eq!(m.count(), 1);
    }

    #[test]
    fn observed_matrix_rejects_out_of_range() {
        let err = build_observed_matrix(&[ev(2, 0, EventKind::Share, 0)], 2, 4);
        assert!(matches!(err, Err(Error::InvalidInput(_))));
        let err = build_observed_matrix(&[ev(0, 4, EventKind::Share, 0)], 2, 4);
        assert!(err.is_err());
    }

    proptest! {
        #[test]
        fn observed_matrix_matches_set_union(
            raw in prop::collection::vec((0u32..5, 0u32..7, 0u8..3), 0..40),
            dup in 0usize..3,
        ) {
            let kinds = [EventKind::Comment, EventKind::Share, EventKind::Reaction(Reaction::Sad)];
            let mut events: Vec<_> = raw.iter().enumerate()
                .map(|(i, &(u, p, k))| ev(u, p, kinds[k as usize], i as u64))
                .collect();
            let extra: Vec<_> = events.iter().take(dup).cloned().collect();
            events.extend(extra);

            let m = build_observed_matrix(&events, 5, 7).unwrap();
            let pairs: HashSet<(usize, usize)> = raw.iter().map(|&(u, p, _)| (u as usize, p as usize)).collect();
            for u in 0..5 {
                for p in 0..7 {
                    prop_assert_eq!(m.get(u, p), pairs.contains(&(u, p)));
                }
            }
            prop_assert!(m.count() <= pairs.len());
        }

        #[test]
        fn comment_mass_is_conserved(
            raw in prop::collection::vec((0u32..4, prop::collection::vec(0.01f64..1.0, 3)), 1..20),
        ) {
            let posts: Vec<_> = raw.iter().enumerate().map(|(i, (_, mass))| Post {
                id: PostId(i as u32),
                author: UserId(0),
                categories: CategoryDistribution::from_mass(mass).unwrap(),
                created_at: 0,
            }).collect();
            let events: Vec<_> = raw.iter().enumerate()
                .map(|(i, &(kind, _))| {
                    let k = match kind { 0 => EventKind::Comment, 1 => EventKind::Share,
                        2 => EventKind::Authored, _ => EventKind::Reaction(Reaction::Love) };
                    ev(0, i as u32, k, i as u64)
                })
                .collect();
            let t = tally_engagement(&events, UserId(0), &posts, 3).unwrap();
            let n_comments = raw.iter().filter(|(k, _)| *k == 0).count() as f64;
            prop_assert!((t.comments.iter().sum::<f64>() - n_comments).abs() < 1e-9);
        }
    }

    #[test]
    fn tally_examples() {
        let sports = Vocabulary::default().category_index("sports").unwrap();
        let posts = vec![
            Post {
                categories: CategoryDistribution::one_hot(10, sports),
                ..post(0, vec![0.1; 10])
            },
            post(1, {
                let mut v = vec![0.0; 10];
                v[0] = 0.5;
                v[8] = 0.5;
                v
            }),
        ];
        let t = tally_engagement(&[], UserId(0), &posts, 10).unwrap();
        assert!(t.is_empty());

        let like = EventKind::Reaction(Reaction::Like);
        let t = tally_engagement(&[ev(0, 0, like, 0)], UserId(0), &posts, 10).unwrap();
        for j in 0..10 {
            let expect = if j == sports { 1.0 } else { 0.0 };
            assert_eq!(t.reaction(j, Reaction::Like), expect);
        }

        let events = [ev(0, 1, EventKind::Comment, 0), ev(0, 1, EventKind::Comment, 1)];
        let t = tally_engagement(&events, UserId(0), &posts, 10).unwrap();
        assert_eq!(t.comments[0], 1.0);
        assert_eq!(t.comments[8], 1.0);
        assert_eq!(t.comments.iter().sum::<f64>(), 2.0);
    }

    #[test]
    fn tally_skips_authored_and_other_users() {
        let posts = vec![post(0, vec![1.0, 0.0])];
        let events = [ev(0, 0, EventKind::Authored, 0), ev(1, 0, EventKind::Share, 1)];
        let t = tally_engagement(&events, UserId(0), &posts, 2).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn event_kind_parsing() {
        assert_eq!(
            EventKind::parse("reaction", Some("haha")).unwrap(),
            EventKind::Reaction(Reaction::Haha)
        );
        assert!(EventKind::parse("reaction", None).is_err());
        assert!(EventKind::parse("comment", Some("like")).is_err());
        assert!(EventKind::parse("poke", None).is_err());
    }

    #[test]
    fn distribution_validation() {
        assert!(CategoryDistribution::new(vec![0.5, 0.5]).is_ok());
        assert!(CategoryDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(CategoryDistribution::new(vec![1.5, -0.5]).is_err());
        assert_eq!(
            CategoryDistribution::from_mass(&[0.0, 0.0]).unwrap(),
            CategoryDistribution::uniform(2)
        );
    }

    #[test]
    fn vocabulary_invariants() {
        let v = Vocabulary::default();
        assert_eq!(v.n_categories(), 10);
        assert_eq!(v.categories()[3], "sports");
        for a in Attribute::ALL {
            assert!(v.type_count(a) >= 2);
        }
        let dup = Vocabulary::new(
            [
                vec!["a".into(), "a".into()],
                vec!["m".into(), "f".into()],
                vec!["x".into(), "y".into()],
                vec!["x".into(), "y".into()],
                vec!["x".into(), "y".into()],
            ],
            vec!["c".into()],
        );
        assert!(dup.is_err());
    }

    #[test]
    fn profile_from_labels_requires_all_attributes() {
        let v = Vocabulary::default();
        let full = [
            ("age", "16-20"),
            ("gender", "f"),
            ("education", "master"),
            ("occupation", "student"),
            ("location", "rural"),
        ];
        let p = DemographicProfile::from_labels(full, &v).unwrap();
        assert_eq!(p.get(Attribute::Age), 1);
        assert!(DemographicProfile::from_labels(full[..4].iter().copied(), &v).is_err());
        assert!(DemographicProfile::from_labels([("age", "99")], &v).is_err());
    }
}
