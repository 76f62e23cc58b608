//! Seeded synthetic dataset and survey generator.
//!
//! Every user gets a latent pair of favorite categories. Authored posts lean toward the
//! favorites, and interactions pick posts with probability proportional to
//! `exp(sharpness * affinity)`, where affinity is the post's mass on the two favorites.
//! High-affinity interactions are more often shares, comments, loves and cares.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{
    Attribute, CategoryDistribution, Dataset, DemographicProfile, EventKind, InteractionEvent, Post, PostId, Reaction,
    User, UserId, Vocabulary,
};
use crate::error::{Error, Result};
use crate::survey::{SurveyResponse, RATING_MAX};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenConfig {
    pub n_users: usize,
    pub n_posts: usize,
    /// Authored post counts are drawn uniformly from `0..=posts_per_user_max`.
    pub posts_per_user_max: usize,
    pub n_categories: usize,
    pub dirichlet_alpha: f64,
    /// Expected interactions per user.
    pub interaction_rate: f64,
    /// Exponent applied to favorite-category affinity when choosing posts to engage with.
    pub preference_sharpness: f64,
    /// Relative weight of each favorite when picking an authored post's dominant category.
    pub favorite_weight: f64,
    pub survey_participants_min: usize,
    pub survey_participants_max: usize,
    pub seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig {
            n_users: 500,
            n_posts: 2000,
            posts_per_user_max: 10,
            n_categories: 10,
            dirichlet_alpha: 0.3,
            interaction_rate: 30.0,
            preference_sharpness: 9.0,
            favorite_weight: 3.0,
            survey_participants_min: 3,
            survey_participants_max: 6,
            seed: 42,
        }
    }
}

impl GenConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_users == 0 {
            return Err(Error::invalid("n_users must be positive"));
        }
        if self.n_categories < 2 {
            return Err(Error::invalid("need at least two categories"));
        }
        if !(self.dirichlet_alpha > 0.0 && self.dirichlet_alpha.is_finite()) {
            return Err(Error::invalid("dirichlet_alpha must be positive"));
        }
        if !(self.interaction_rate >= 0.0 && self.interaction_rate.is_finite()) {
            return Err(Error::invalid("interaction_rate must be non-negative"));
        }
        if !self.preference_sharpness.is_finite() || self.favorite_weight.is_nan() || self.favorite_weight < 1.0 {
            return Err(Error::invalid("preference parameters out of range"));
        }
        if self.survey_participants_min == 0 || self.survey_participants_min > self.survey_participants_max {
            return Err(Error::invalid("survey participant range is empty"));
        }
        Ok(())
    }
}

/// Generated dataset plus the latent favorites that drove it.
#[derive(Clone, Debug)]
pub struct Generated {
    pub dataset: Dataset,
    pub favorites: Vec<[usize; 2]>,
}

const ENTHUSIASTIC: [EventKind; 4] = [
    EventKind::Share,
    EventKind::Comment,
    EventKind::Reaction(Reaction::Love),
    EventKind::Reaction(Reaction::Care),
];
const CASUAL: [EventKind; 4] = [
    EventKind::Reaction(Reaction::Like),
    EventKind::Reaction(Reaction::Haha),
    EventKind::Reaction(Reaction::Sad),
    EventKind::Reaction(Reaction::Angry),
];

fn dirichlet(rng: &mut ChaCha8Rng, alpha: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(alpha, 1.0).expect("alpha validated");
    let draws: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = draws.iter().sum();
    if total > 0.0 {
        draws.iter().map(|g| g / total).collect()
    } else {
        let mut one = vec![0.0; n];
        one[rng.random_range(0..n)] = 1.0;
        one
    }
}

/// Authored post counts in `0..=max` that sum to `n_posts`.
fn authored_counts(rng: &mut ChaCha8Rng, n_users: usize, n_posts: usize, max: usize) -> Vec<usize> {
    let mut counts: Vec<usize> = (0..n_users).map(|_| rng.random_range(0..=max)).collect();
    let capacity = n_users * max;
    if n_posts > capacity {
        // Fill every user, then spread the rest round-robin.
        let mut counts = vec![max; n_users];
        for i in 0..n_posts - capacity {
            counts[i % n_users] += 1;
        }
        return counts;
    }
    let mut total: usize = counts.iter().sum();
    while total < n_posts {
        let u = rng.random_range(0..n_users);
        if counts[u] < max {
            counts[u] += 1;
            total += 1;
        }
    }
    while total > n_posts {
        let u = rng.random_range(0..n_users);
        if counts[u] > 0 {
            counts[u] -= 1;
            total -= 1;
        }
    }
    counts
}

pub fn generate(cfg: &GenConfig) -> Result<Generated> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let vocab = Vocabulary::with_categories(cfg.n_categories);
    let n_cat = cfg.n_categories;

    let mut profiles = Vec::with_capacity(cfg.n_users);
    let mut favorites = Vec::with_capacity(cfg.n_users);
    for _ in 0..cfg.n_users {
        let types = Attribute::ALL.map(|a| rng.random_range(0..vocab.type_count(a)));
        profiles.push(DemographicProfile::new(types, &vocab)?);
        let f1 = rng.random_range(0..n_cat);
        let mut f2 = rng.random_range(0..n_cat - 1);
        if f2 >= f1 {
            f2 += 1;
        }
        favorites.push([f1, f2]);
    }

    let counts = authored_counts(&mut rng, cfg.n_users, cfg.n_posts, cfg.posts_per_user_max);
    let mut authors = Vec::with_capacity(cfg.n_posts);
    for (u, &c) in counts.iter().enumerate() {
        authors.extend(std::iter::repeat_n(u, c));
    }

    let mut posts = Vec::with_capacity(cfg.n_posts);
    let mut events = Vec::new();
    for (p, &author) in authors.iter().enumerate() {
        let mut probs = dirichlet(&mut rng, cfg.dirichlet_alpha, n_cat);
        let [f1, f2] = favorites[author];
        let cat_weight = |c: usize| if c == f1 || c == f2 { cfg.favorite_weight } else { 1.0 };
        let total: f64 = (0..n_cat).map(cat_weight).sum();
        let mut pick = rng.random::<f64>() * total;
        let mut target = n_cat - 1;
        for c in 0..n_cat {
            pick -= cat_weight(c);
            if pick < 0.0 {
                target = c;
                break;
            }
        }
        let dominant = CategoryDistribution::new(probs.clone())
            .map(|d| d.dominant())
            .unwrap_or(0);
        probs.swap(dominant, target);
        let seq = p as u64;
        posts.push(Post {
            id: PostId(p as u32),
            author: UserId(author as u32),
            categories: CategoryDistribution::from_mass(&probs)?,
            created_at: seq,
        });
        events.push(InteractionEvent {
            user: UserId(author as u32),
            post: PostId(p as u32),
            kind: EventKind::Authored,
            seq,
        });
    }

    let poisson = if cfg.interaction_rate > 0.0 {
        Some(Poisson::new(cfg.interaction_rate).map_err(|e| Error::invalid(e.to_string()))?)
    } else {
        None
    };
    let mut interactions = Vec::new();
    for (u, &[f1, f2]) in favorites.iter().enumerate() {
        let n = poisson.as_ref().map_or(0, |d| d.sample(&mut rng) as usize);
        // Weighted sampling without replacement via exponential keys.
        let mut keyed: Vec<(f64, usize, f64)> = posts
            .iter()
            .filter(|p| p.author.index() != u)
            .map(|p| {
                let c = p.categories.as_slice();
                let aff = c[f1] + c[f2];
                let key = rng.random::<f64>().max(f64::MIN_POSITIVE).ln() * (-cfg.preference_sharpness * aff).exp();
                (key, p.id.index(), aff)
            })
            .collect();
        keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, p, aff) in keyed.iter().take(n) {
            let pool = if rng.random::<f64>() < aff {
                &ENTHUSIASTIC
            } else {
                &CASUAL
            };
            let kind = pool[rng.random_range(0..pool.len())];
            interactions.push((UserId(u as u32), PostId(p as u32), kind));
        }
    }
    interactions.shuffle(&mut rng);
    let base = events.len() as u64;
    for (i, (user, post, kind)) in interactions.into_iter().enumerate() {
        events.push(InteractionEvent {
            user,
            post,
            kind,
            seq: base + i as u64,
        });
    }

    let users = profiles
        .into_iter()
        .enumerate()
        .map(|(i, profile)| User {
            id: UserId(i as u32),
            profile,
            history: CategoryDistribution::uniform(n_cat),
        })
        .collect();
    let mut dataset = Dataset::new(vocab, users, posts, events)?;
    dataset.recompute_histories()?;
    Ok(Generated { dataset, favorites })
}

/// Synthetic questionnaire: every (attribute, type) cell gets between
/// `survey_participants_min` and `survey_participants_max` participants who rate each
/// category on the 0-5 scale in half steps.
pub fn generate_survey(cfg: &GenConfig) -> Result<Vec<SurveyResponse>> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x5u64.rotate_left(40));
    let vocab = Vocabulary::with_categories(cfg.n_categories);
    let noise = Normal::new(0.0, 0.75).expect("valid sigma");
    let mut out = Vec::new();
    let mut participant = 0usize;
    for attr in Attribute::ALL {
        for k in 0..vocab.type_count(attr) {
            let base: Vec<f64> = (0..cfg.n_categories).map(|_| rng.random_range(0.5..4.5)).collect();
            let n = rng.random_range(cfg.survey_participants_min..=cfg.survey_participants_max);
            for _ in 0..n {
                let ratings = base
                    .iter()
                    .map(|b| {
                        let x: f64 = b + noise.sample(&mut rng);
                        ((x * 2.0).round() / 2.0).clamp(0.0, RATING_MAX)
                    })
                    .collect();
                out.push(SurveyResponse {
                    participant: format!("p{participant}"),
                    attribute: attr,
                    type_index: k,
                    ratings,
                });
                participant += 1;
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::build_weight_table;

    fn small() -> GenConfig {
        GenConfig {
            n_users: 60,
            n_posts: 240,
            interaction_rate: 12.0,
            ..GenConfig::default()
        }
    }

    #[test]
    fn authored_counts_hit_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let c = authored_counts(&mut rng, 500, 2000, 10);
        assert_eq!(c.iter().sum::<usize>(), 2000);
        assert!(c.iter().all(|&x| x <= 10));
        let c = authored_counts(&mut rng, 3, 40, 10);
        assert_eq!(c, vec![14, 13, 13]);
    }

    #[test]
    fn default_shape() {
        let g = generate(&GenConfig::default()).unwrap();
        let ds = &g.dataset;
        assert_eq!(ds.n_users(), 500);
        assert_eq!(ds.n_posts(), 2000);
        for u in &ds.users {
            assert!(ds.authored_posts(u.id).count() <= 10);
        }
        for p in &ds.posts {
            let s: f64 = p.categories.as_slice().iter().sum();
            assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn integrity_and_history() {
        let g = generate(&small()).unwrap();
        let ds = &g.dataset;
        ds.validate().unwrap();
        for u in &ds.users {
            let mut mass = vec![0.0; 10];
            for p in ds.authored_posts(u.id) {
                for (m, c) in mass.iter_mut().zip(p.categories.as_slice()) {
                    *m += c;
                }
            }
            let expect = CategoryDistribution::from_mass(&mass).unwrap();
            for (a, b) in expect.as_slice().iter().zip(u.history.as_slice()) {
                assert!((a - b).abs() < 1e-9);
            }
        }
        for e in &ds.events {
            let own = ds.posts[e.post.index()].author == e.user;
            assert_eq!(own, e.kind == EventKind::Authored);
        }
        let mut seqs: Vec<u64> = ds.events.iter().map(|e| e.seq).collect();
        seqs.dedup();
        assert_eq!(seqs.len(), ds.events.len());
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.dataset, b.dataset);
        let c = generate(&GenConfig { seed: 7, ..small() }).unwrap();
        assert_ne!(a.dataset, c.dataset);
        assert_eq!(generate_survey(&small()).unwrap(), generate_survey(&small()).unwrap());
    }

    #[test]
    fn interactions_lean_toward_favorites() {
        let g = generate(&small()).unwrap();
        let ds = &g.dataset;
        let (mut fav, mut n) = (0.0, 0usize);
        for e in ds.events.iter().filter(|e| e.kind != EventKind::Authored) {
            let [f1, f2] = g.favorites[e.user.index()];
            let c = ds.posts[e.post.index()].categories.as_slice();
            fav += c[f1] + c[f2];
            n += 1;
        }
        // Two of ten categories would carry 0.2 of the mass without a preference.
        assert!(fav / n as f64 > 0.5, "{}", fav / n as f64);
    }

    #[test]
    fn survey_is_bounded_and_complete() {
        let cfg = GenConfig::default();
        let survey = generate_survey(&cfg).unwrap();
        let vocab = Vocabulary::default();
        for r in &survey {
            for x in &r.ratings {
                assert!((0.0..=5.0).contains(x));
                assert_eq!((x * 2.0).fract(), 0.0);
            }
        }
        for attr in Attribute::ALL {
            for k in 0..vocab.type_count(attr) {
                let n = survey
                    .iter()
                    .filter(|r| r.attribute == attr && r.type_index == k)
                    .count();
                assert!(n >= 3);
            }
        }
        let table = build_weight_table(&vocab, &survey).unwrap();
        assert!(table.imputed.is_empty());
    }
}
