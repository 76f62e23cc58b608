//! Score matrices from feature products and top-K feed selection.

use std::cmp::Ordering;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreSource {
    Dh,
    E,
    Dhe,
    Cold,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix {
    pub source: ScoreSource,
    pub matrix: Matrix,
}

impl ScoreMatrix {
    pub fn row(&self, user: usize) -> &[f64] {
        self.matrix.row(user)
    }

    pub fn get(&self, user: usize, post: usize) -> f64 {
        self.matrix.get(user, post)
    }

    pub fn n_users(&self) -> usize {
        self.matrix.rows()
    }

    pub fn n_posts(&self) -> usize {
        self.matrix.cols()
    }
}

/// Which score matrix a warm feed is ranked by.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MfMode {
    Dh,
    E,
    Hybrid,
}

impl FromStr for MfMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dh" => Ok(MfMode::Dh),
            "e" => Ok(MfMode::E),
            "hybrid" | "dhe" => Ok(MfMode::Hybrid),
            other => Err(Error::invalid(format!("unknown scoring mode `{other}`"))),
        }
    }
}

fn score_product(
    users: &FeatureMatrix,
    posts: &FeatureMatrix,
    expect: (FeatureKind, FeatureKind),
    source: ScoreSource,
) -> Result<ScoreMatrix> {
    if (users.kind, posts.kind) != expect {
        return Err(Error::invalid(format!(
            "expected {:?}/{:?} features, got {:?}/{:?}",
            expect.0, expect.1, users.kind, posts.kind
        )));
    }
    Ok(ScoreMatrix {
        source,
        matrix: users.matrix.mul_transposed(&posts.matrix)?,
    })
}

/// `R_dh = U1 · P1ᵀ`.
pub fn score_dh(u1: &FeatureMatrix, p1: &FeatureMatrix) -> Result<ScoreMatrix> {
    score_product(u1, p1, (FeatureKind::U1, FeatureKind::P1), ScoreSource::Dh)
}

/// `R_e = U2 · P2ᵀ`.
pub fn score_e(u2: &FeatureMatrix, p2: &FeatureMatrix) -> Result<ScoreMatrix> {
    score_product(u2, p2, (FeatureKind::U2, FeatureKind::P2), ScoreSource::E)
}

/// `R_dhe = R_dh + R_e`.
pub fn score_hybrid(dh: &ScoreMatrix, e: &ScoreMatrix) -> Result<ScoreMatrix> {
    Ok(ScoreMatrix {
        source: ScoreSource::Dhe,
        matrix: dh.matrix.add(&e.matrix)?,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedFeed {
    pub user: u32,
    /// `(post index, score)`, best first.
    pub items: Vec<(u32, f64)>,
    /// Fewer than `k` candidates were available.
    pub short: bool,
}

/// Descending by score, ascending by index on ties.
pub fn rank_order(a: (usize, f64), b: (usize, f64)) -> Ordering {
    b.1.total_cmp(&a.1).then(a.0.cmp(&b.0))
}

/// Every non-excluded post ordered by [`rank_order`].
pub fn rank_all(scores: &[f64], excluded: &[bool]) -> Vec<(usize, f64)> {
    let mut order: Vec<(usize, f64)> = scores
        .iter()
        .copied()
        .enumerate()
        .filter(|(p, _)| !excluded.get(*p).copied().unwrap_or(false))
        .collect();
    order.sort_by(|a, b| rank_order(*a, *b));
    order
}

/// The `k` best posts for `user` from one row of scores, skipping `excluded` posts.
pub fn top_k(scores: &[f64], user: usize, k: usize, excluded: &[bool]) -> Result<RankedFeed> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if let Some(s) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::NonFinite(format!("score {s} for user {user}")));
    }
    let mut order = rank_all(scores, excluded);
    let short = order.len() < k;
    order.truncate(k);
    Ok(RankedFeed {
        user: user as u32,
        items: order.into_iter().map(|(p, s)| (p as u32, s)).collect(),
        short,
    })
}

#[cfg(test)]
#[allow(clippy::needless_range_loop)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fm(kind: FeatureKind, rows: &[Vec<f64>]) -> FeatureMatrix {
        FeatureMatrix {
            kind,
            matrix: Matrix::from_rows(rows).unwrap(),
        }
    }

    fn random_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
        (0..n)
            .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn dh_trivial_cases() {
        let mut a = vec![0.0; 15];
        a[0] = 1.0;
        let r = score_dh(&fm(FeatureKind::U1, &[a.clone()]), &fm(FeatureKind::P1, &[a.clone()])).unwrap();
        assert_eq!(r.get(0, 0), 1.0);
        let mut b = vec![0.0; 15];
        b[1] = 1.0;
        let r = score_dh(&fm(FeatureKind::U1, &[a]), &fm(FeatureKind::P1, &[b])).unwrap();
        assert_eq!(r.get(0, 0), 0.0);
    }

    #[test]
    fn products_match_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let u = random_rows(&mut rng, 3, 15);
        let p = random_rows(&mut rng, 4, 15);
        for (uk, pk, f) in [
            (
                FeatureKind::U1,
                FeatureKind::P1,
                score_dh as fn(&FeatureMatrix, &FeatureMatrix) -> Result<ScoreMatrix>,
            ),
            (FeatureKind::U2, FeatureKind::P2, score_e),
        ] {
            let r = f(&fm(uk, &u), &fm(pk, &p)).unwrap();
            for i in 0..3 {
                for j in 0..4 {
                    let mut acc = 0.0;
                    for k in 0..15 {
                        acc += u[i][k] * p[j][k];
                    }
                    assert_eq!(r.get(i, j), acc);
                }
            }
        }
    }

    #[test]
    fn kind_and_shape_mismatches_are_rejected() {
        let u = fm(FeatureKind::U1, &[vec![1.0; 3]]);
        let p = fm(FeatureKind::P1, &[vec![1.0; 4]]);
        assert!(matches!(score_dh(&u, &p), Err(Error::ShapeMismatch(_))));
        let p2 = fm(FeatureKind::P2, &[vec![1.0; 3]]);
        assert!(score_dh(&u, &p2).is_err());
    }

    #[test]
    fn hybrid_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dh = ScoreMatrix {
            source: ScoreSource::Dh,
            matrix: Matrix::from_rows(&random_rows(&mut rng, 3, 4)).unwrap(),
        };
        let zero = ScoreMatrix {
            source: ScoreSource::E,
            matrix: Matrix::zeros(3, 4),
        };
        assert_eq!(score_hybrid(&dh, &zero).unwrap().matrix, dh.matrix);
        assert_eq!(score_hybrid(&zero, &dh).unwrap().matrix, dh.matrix);

        let e = ScoreMatrix {
            source: ScoreSource::E,
            matrix: Matrix::from_rows(&random_rows(&mut rng, 3, 4)).unwrap(),
        };
        let sum = score_hybrid(&dh, &e).unwrap();
        for i in 0..3 {
            for j in 0..4 {
                assert_eq!(sum.get(i, j), dh.get(i, j) + e.get(i, j));
            }
        }
        let bad = ScoreMatrix {
            source: ScoreSource::E,
            matrix: Matrix::zeros(2, 4),
        };
        assert!(score_hybrid(&dh, &bad).is_err());
    }

    #[test]
    fn top_k_examples() {
        let feed = top_k(&[0.1, 0.9, 0.5], 0, 2, &[]).unwrap();
        assert_eq!(feed.items.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2]);
        assert!(!feed.short);

        let feed = top_k(&[0.5, 0.5], 0, 1, &[]).unwrap();
        assert_eq!(feed.items[0].0, 0);

        let feed = top_k(&[0.2, 0.7, 0.4], 0, 10, &[]).unwrap();
        assert_eq!(feed.items.iter().map(|x| x.0).collect::<Vec<_>>(), vec![1, 2, 0]);
        assert!(feed.short);

        let feed = top_k(&[0.2, 0.7, 0.4], 0, 2, &[false, true, false]).unwrap();
        assert_eq!(feed.items.iter().map(|x| x.0).collect::<Vec<_>>(), vec![2, 0]);

        assert!(top_k(&[0.1], 0, 0, &[]).is_err());
        assert!(top_k(&[f64::NAN], 0, 1, &[]).is_err());
    }

    proptest! {
        #[test]
        fn transpose_duality(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let u = Matrix::from_rows(&random_rows(&mut rng, 4, 6)).unwrap();
            let p = Matrix::from_rows(&random_rows(&mut rng, 5, 6)).unwrap();
            let a = u.mul_transposed(&p).unwrap();
            let b = p.mul_transposed(&u).unwrap();
            prop_assert_eq!(a.transpose(), b);
        }

        #[test]
        fn top_k_is_prefix_and_shift_invariant(
            raw in prop::collection::vec(-20i32..20, 1..40),
            k in 1usize..50,
            shift in -40i32..40,
        ) {
            // Quarter-integer scores keep the shifted sums exact.
            let scores: Vec<f64> = raw.iter().map(|&r| r as f64 * 0.25).collect();
            let feed = top_k(&scores, 0, k, &[]).unwrap();
            let full = rank_all(&scores, &[]);
            let ids: Vec<u32> = feed.items.iter().map(|x| x.0).collect();
            let prefix: Vec<u32> = full.iter().take(k).map(|x| x.0 as u32).collect();
            prop_assert_eq!(&ids, &prefix);
            for w in feed.items.windows(2) {
                prop_assert!(w[0].1 >= w[1].1);
            }
            let shifted: Vec<f64> = scores.iter().map(|s| s + shift as f64).collect();
            let ids2: Vec<u32> = top_k(&shifted, 0, k, &[]).unwrap().items.iter().map(|x| x.0).collect();
            prop_assert_eq!(ids, ids2);
        }

        #[test]
        fn hybrid_commutes_and_associates(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mk = |rng: &mut ChaCha8Rng| ScoreMatrix {
                source: ScoreSource::Dh,
                matrix: Matrix::from_rows(&random_rows(rng, 2, 3)).unwrap(),
            };
            let (a, b, c) = (mk(&mut rng), mk(&mut rng), mk(&mut rng));
            prop_assert_eq!(score_hybrid(&a, &b).unwrap().matrix, score_hybrid(&b, &a).unwrap().matrix);
            let left = score_hybrid(&score_hybrid(&a, &b).unwrap(), &c).unwrap();
            let right = score_hybrid(&a, &score_hybrid(&b, &c).unwrap()).unwrap();
            for (x, y) in left.matrix.as_slice().iter().zip(right.matrix.as_slice()) {
                prop_assert!((x - y).abs() <= 1e-15 * (1.0 + x.abs()));
            }
        }
    }
}
