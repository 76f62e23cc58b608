//! Recommendations for users with neither authored posts nor engagement, built from the
//! hybrid score rows of demographically similar users.

use serde::{Deserialize, Serialize};

use crate::domain::{Attribute, DemographicProfile, InteractionEvent, Post, UserId};
use crate::error::{Error, Result};
use crate::mf::ScoreMatrix;
use crate::survey::WeightTable;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ColdStartConfig {
    /// Number of neighbours blended into the new user's scores.
    pub k: usize,
    /// Divide by the total neighbour similarity.
    pub normalize: bool,
    /// Per-attribute weights; `None` uses the weight table's per-attribute mean of `w1`.
    /// A zero weight drops the attribute from the comparison.
    pub attribute_weights: Option<[f64; 5]>,
}

impl Default for ColdStartConfig {
    fn default() -> Self {
        ColdStartConfig {
            k: 5,
            normalize: false,
            attribute_weights: None,
        }
    }
}

impl ColdStartConfig {
    pub fn resolve_weights(&self, table: &WeightTable) -> [f64; 5] {
        self.attribute_weights
            .unwrap_or_else(|| Attribute::ALL.map(|a| table.attribute_mean_w1(a)))
    }
}

/// Weighted fraction of attributes on which the two profiles agree.
pub fn demographic_similarity(u: &DemographicProfile, v: &DemographicProfile, weights: &[f64; 5]) -> Result<f64> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::invalid("attribute weights must be finite and non-negative"));
    }
    let total: f64 = weights.iter().sum();
    if total <= 0.0 {
        return Err(Error::invalid("attribute weights sum to zero"));
    }
    let matched: f64 = Attribute::ALL
        .iter()
        .filter(|a| u.get(**a) == v.get(**a))
        .map(|a| weights[a.index()])
        .sum();
    Ok(matched / total)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityVector {
    pub target: Option<UserId>,
    /// Similarity to each candidate user.
    pub scores: Vec<(UserId, f64)>,
}

pub fn similarity_vector<'a, I>(
    target: &DemographicProfile,
    target_id: Option<UserId>,
    candidates: I,
    weights: &[f64; 5],
) -> Result<SimilarityVector>
where
    I: IntoIterator<Item = (UserId, &'a DemographicProfile)>,
{
    let scores = candidates
        .into_iter()
        .map(|(id, p)| Ok((id, demographic_similarity(target, p, weights)?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(SimilarityVector {
        target: target_id,
        scores,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopKSelection {
    pub neighbours: Vec<(UserId, f64)>,
    /// The population was smaller than the requested `k`.
    pub truncated: bool,
}

/// The `k` most similar users; ties go to the lower user id.
pub fn select_top_k(sim: &SimilarityVector, k: usize) -> Result<TopKSelection> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    let mut all = sim.scores.clone();
    all.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    let truncated = all.len() < k;
    all.truncate(k);
    Ok(TopKSelection {
        neighbours: all,
        truncated,
    })
}

/// Similarity-weighted sum of the neighbours' hybrid score rows (optionally normalized
/// by the total similarity).
pub fn cold_start_scores(sel: &TopKSelection, hybrid: &ScoreMatrix, normalize: bool) -> Result<Vec<f64>> {
    if sel.neighbours.is_empty() {
        return Err(Error::Empty("neighbour selection"));
    }
    let mut out = vec![0.0; hybrid.n_posts()];
    for &(user, sim) in &sel.neighbours {
        if user.index() >= hybrid.n_users() {
            return Err(Error::invalid(format!("neighbour {user} has no score row")));
        }
        for (o, s) in out.iter_mut().zip(hybrid.row(user.index())) {
            *o += sim * s;
        }
    }
    if normalize {
        let total: f64 = sel.neighbours.iter().map(|n| n.1).sum();
        if total > 0.0 {
            for o in &mut out {
                *o /= total;
            }
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ColdStartFeed {
    pub selection: TopKSelection,
    /// One score per post.
    pub scores: Vec<f64>,
}

/// Similarity, neighbour selection and blended scores for one profile in a single call.
pub fn cold_start_for_profile<'a, I>(
    profile: &DemographicProfile,
    candidates: I,
    hybrid: &ScoreMatrix,
    weights: &[f64; 5],
    cfg: &ColdStartConfig,
) -> Result<ColdStartFeed>
where
    I: IntoIterator<Item = (UserId, &'a DemographicProfile)>,
{
    let sim = similarity_vector(profile, None, candidates, weights)?;
    let selection = select_top_k(&sim, cfg.k)?;
    let scores = cold_start_scores(&selection, hybrid, cfg.normalize)?;
    Ok(ColdStartFeed { selection, scores })
}

/// A user with no authored posts and no interaction events of any kind.
pub fn is_cold(user: UserId, events: &[InteractionEvent], posts: &[Post]) -> bool {
    !events.iter().any(|e| e.user == user) && !posts.iter().any(|p| p.author == user)
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use crate::domain::{CategoryDistribution, EventKind, PostId, Reaction, Vocabulary};
    use crate::matrix::Matrix;
    use crate::mf::ScoreSource;
    use proptest::prelude::*;

    fn profile(t: [usize; 5]) -> DemographicProfile {
        DemographicProfile::new(t, &Vocabulary::default()).unwrap()
    }

    fn scores(rows: &[Vec<f64>]) -> ScoreMatrix {
        ScoreMatrix {
            source: ScoreSource::Dhe,
            matrix: Matrix::from_rows(rows).unwrap(),
        }
    }

    #[test]
    fn similarity_examples() {
        let w = [0.6, 0.1, 0.3, 0.3, 0.2];
        let a = profile([0, 0, 0, 0, 0]);
        assert_eq!(demographic_similarity(&a, &a, &w).unwrap(), 1.0);
        let b = profile([1, 1, 1, 1, 1]);
        assert_eq!(demographic_similarity(&a, &b, &w).unwrap(), 0.0);
        // Agree on age (0.6) and gender (0.1) out of 1.5.
        let c = profile([0, 0, 1, 1, 1]);
        let s = demographic_similarity(&a, &c, &w).unwrap();
        assert!((s - 0.7 / 1.5).abs() < 1e-12);
        assert!((s - 0.4667).abs() < 1e-4);
        assert!(demographic_similarity(&a, &c, &[0.0; 5]).is_err());
        assert!(demographic_similarity(&a, &c, &[-1.0, 1.0, 1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn select_examples() {
        let sim = SimilarityVector {
            target: None,
            scores: vec![(UserId(0), 0.2), (UserId(1), 0.9), (UserId(2), 0.9)],
        };
        let s = select_top_k(&sim, 1).unwrap();
        assert_eq!(s.neighbours, vec![(UserId(1), 0.9)]);
        let s = select_top_k(&sim, 3).unwrap();
        assert_eq!(s.neighbours.iter().map(|n| n.0 .0).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert!(!s.truncated);
        assert!(select_top_k(&sim, 4).unwrap().truncated);
        assert!(select_top_k(&sim, 0).is_err());
    }

    #[test]
    fn cold_scores_examples() {
        let r = scores(&[vec![0.3, 1.7, 0.2], vec![2.0, 0.0, 1.0], vec![-1.0, 4.0, 0.5]]);
        let one = TopKSelection {
            neighbours: vec![(UserId(1), 1.0)],
            truncated: false,
        };
        assert_eq!(cold_start_scores(&one, &r, false).unwrap(), r.row(1));

        let two = TopKSelection {
            neighbours: vec![(UserId(0), 0.5), (UserId(1), 0.5)],
            truncated: false,
        };
        let got = cold_start_scores(&two, &r, false).unwrap();
        for p in 0..3 {
            assert_eq!(got[p], 0.5 * r.get(0, p) + 0.5 * r.get(1, p));
        }

        let three = TopKSelection {
            neighbours: vec![(UserId(2), 0.9), (UserId(0), 0.4), (UserId(1), 0.25)],
            truncated: false,
        };
        let got = cold_start_scores(&three, &r, false).unwrap();
        for p in 0..3 {
            let mut acc = 0.0;
            for &(u, s) in &three.neighbours {
                acc += s * r.get(u.index(), p);
            }
            assert_eq!(got[p], acc);
        }
        let norm = cold_start_scores(&three, &r, true).unwrap();
        for p in 0..3 {
            assert!((norm[p] - got[p] / 1.55).abs() < 1e-12);
        }

        let empty = TopKSelection {
            neighbours: vec![],
            truncated: true,
        };
        assert!(cold_start_scores(&empty, &r, false).is_err());
        let bad = TopKSelection {
            neighbours: vec![(UserId(9), 1.0)],
            truncated: false,
        };
        assert!(cold_start_scores(&bad, &r, false).is_err());
    }

    #[test]
    fn cold_detection() {
        let post = Post {
            id: PostId(0),
            author: UserId(2),
            categories: CategoryDistribution::uniform(2),
            created_at: 0,
        };
        let like = InteractionEvent {
            user: UserId(1),
            post: PostId(0),
            kind: EventKind::Reaction(Reaction::Like),
            seq: 1,
        };
        let posts = [post];
        assert!(is_cold(UserId(0), &[like], &posts));
        assert!(!is_cold(UserId(1), &[like], &posts));
        assert!(!is_cold(UserId(2), &[like], &posts));
    }

    fn arb_profile() -> impl Strategy<Value = DemographicProfile> {
        (0usize..6, 0usize..3, 0usize..5, 0usize..8, 0usize..4).prop_map(|(a, g, e, o, l)| profile([a, g, e, o, l]))
    }

    proptest! {
        #[test]
        fn similarity_properties(
            u in arb_profile(),
            v in arb_profile(),
            w in prop::array::uniform5(0.1f64..0.6),
            lambda in 0.01f64..100.0,
        ) {
            let s = demographic_similarity(&u, &v, &w).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            prop_assert_eq!(s, demographic_similarity(&v, &u, &w).unwrap());
            let scaled = w.map(|x| x * lambda);
            prop_assert!((demographic_similarity(&u, &v, &scaled).unwrap() - s).abs() < 1e-12);
        }

        #[test]
        fn normalized_scores_stay_within_neighbour_range(
            rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 4), 1..6),
            sims in prop::collection::vec(0.05f64..1.0, 6),
        ) {
            let r = scores(&rows);
            let sel = TopKSelection {
                neighbours: (0..rows.len()).map(|i| (UserId(i as u32), sims[i])).collect(),
                truncated: false,
            };
            let out = cold_start_scores(&sel, &r, true).unwrap();
            for p in 0..4 {
                let lo = rows.iter().map(|r| r[p]).fold(f64::INFINITY, f64::min);
                let hi = rows.iter().map(|r| r[p]).fold(f64::NEG_INFINITY, f64::max);
                prop_assert!(out[p] >= lo - 1e-12 && out[p] <= hi + 1e-12);
            }
        }
    }
}
