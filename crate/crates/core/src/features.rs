//! Feature matrices for users and posts.
//!
//! `U1`/`P1` rows are `[demographic weights ‖ category distribution]`: the user side blends
//! `w1` by the user's history, the post side blends `w2` by the post's own distribution
//! (using the author's demographic types). `U2` rows hold per-category engagement scores,
//! `P2` rows the post distribution; their demographic columns are zero.

use serde::{Deserialize, Serialize};

use crate::domain::{
    tally_all, Attribute, DemographicProfile, InteractionEvent, InteractionTally, Post, Reaction, User, Vocabulary,
};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::survey::WeightTable;

/// Guard added to δ before inversion.
pub const INVERSE_EPSILON: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    U1,
    P1,
    U2,
    P2,
}

impl FeatureKind {
    pub fn tag(self) -> u8 {
        self as u8
    }

    pub fn from_tag(tag: u8) -> Result<Self> {
        [FeatureKind::U1, FeatureKind::P1, FeatureKind::U2, FeatureKind::P2]
            .get(tag as usize)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown feature kind tag {tag}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::U1 => "u1",
            FeatureKind::P1 => "p1",
            FeatureKind::U2 => "u2",
            FeatureKind::P2 => "p2",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMatrix {
    pub kind: FeatureKind,
    pub matrix: Matrix,
}

impl FeatureMatrix {
    pub fn row(&self, i: usize) -> &[f64] {
        self.matrix.row(i)
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.cols()
    }

    pub fn write_to<W: std::io::Write>(&self, w: W) -> Result<()> {
        self.matrix.write_to(self.kind.tag(), w)
    }

    pub fn read_from<R: std::io::Read>(r: R) -> Result<Self> {
        let (tag, matrix) = Matrix::read_from(r)?;
        Ok(FeatureMatrix {
            kind: FeatureKind::from_tag(tag)?,
            matrix,
        })
    }
}

/// Per-kind engagement weights.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngagementWeights {
    pub like: f64,
    pub haha: f64,
    pub love: f64,
    pub angry: f64,
    pub care: f64,
    pub sad: f64,
    pub comment: f64,
    pub share: f64,
}

impl Default for EngagementWeights {
    fn default() -> Self {
        EngagementWeights {
            like: 1.0,
            haha: 1.2,
            love: 1.5,
            angry: 0.5,
            care: 1.3,
            sad: 0.8,
            comment: 2.0,
            share: 3.0,
        }
    }
}

impl EngagementWeights {
    pub fn reaction(&self, r: Reaction) -> f64 {
        match r {
            Reaction::Like => self.like,
            Reaction::Haha => self.haha,
            Reaction::Love => self.love,
            Reaction::Angry => self.angry,
            Reaction::Care => self.care,
            Reaction::Sad => self.sad,
        }
    }

    fn all(&self) -> [f64; 8] {
        [
            self.like,
            self.haha,
            self.love,
            self.angry,
            self.care,
            self.sad,
            self.comment,
            self.share,
        ]
    }

    pub fn validate(&self) -> Result<()> {
        let all = self.all();
        if all.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::invalid("engagement weights must be finite and non-negative"));
        }
        if all.iter().all(|&w| w == 0.0) {
            return Err(Error::invalid("at least one engagement weight must be positive"));
        }
        Ok(())
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let [like, haha, love, angry, care, sad, comment, share] = self.all().map(|w| w * factor);
        EngagementWeights {
            like,
            haha,
            love,
            angry,
            care,
            sad,
            comment,
            share,
        }
    }
}

/// `δ_j`: the history term when `user_side`, else the post term.
pub fn delta_j(user_side: bool, w1: f64, w2: f64, c: f64, c_tilde: f64) -> f64 {
    let eta = if user_side { 1.0 } else { 0.0 };
    eta * (w1 * c) + (1.0 - eta) * (w2 * c_tilde)
}

/// Inverse-δ mixing coefficients `X_j`; uniform if every δ is zero.
pub fn mixing_coefficients(deltas: &[f64]) -> Vec<f64> {
    let n = deltas.len();
    if deltas.iter().all(|&d| d == 0.0) {
        return vec![1.0 / n as f64; n];
    }
    let inv: Vec<f64> = deltas.iter().map(|d| 1.0 / (d + INVERSE_EPSILON)).collect();
    let total: f64 = inv.iter().sum();
    inv.into_iter().map(|x| x / total).collect()
}

/// `Σ_j X_j · ω_j` with `X` from [`mixing_coefficients`].
pub fn avg_weight(weights: &[f64], deltas: &[f64]) -> Result<f64> {
    if weights.len() != deltas.len() || weights.is_empty() {
        return Err(Error::shape(format!(
            "{} weights vs {} deltas",
            weights.len(),
            deltas.len()
        )));
    }
    let x = mixing_coefficients(deltas);
    Ok(x.iter().zip(weights).map(|(x, w)| x * w).sum())
}

fn cell_weights<'t>(
    table: &'t WeightTable,
    vocab: &Vocabulary,
    attr: Attribute,
    profile: &DemographicProfile,
    user_side: bool,
) -> Result<&'t [f64]> {
    let k = profile.get(attr);
    if !table.contains(attr, k) {
        return Err(Error::MissingCell {
            attribute: attr.to_string(),
            type_label: vocab.types(attr).get(k).cloned().unwrap_or_else(|| k.to_string()),
        });
    }
    Ok(if user_side {
        table.w1(attr, k)
    } else {
        table.w2(attr, k)
    })
}

/// `U1` row: `[w1-blend per attribute ‖ history]`.
pub fn user_demography_row(user: &User, table: &WeightTable, vocab: &Vocabulary) -> Result<Vec<f64>> {
    let history = user.history.as_slice();
    let mut row = Vec::with_capacity(Attribute::COUNT + history.len());
    for attr in Attribute::ALL {
        let w1 = cell_weights(table, vocab, attr, &user.profile, true)?;
        if w1.len() != history.len() {
            return Err(Error::shape("weight table and history disagree on categories"));
        }
        let deltas: Vec<f64> = w1
            .iter()
            .zip(history)
            .map(|(&w, &c)| delta_j(true, w, 0.0, c, 0.0))
            .collect();
        row.push(avg_weight(w1, &deltas)?);
    }
    row.extend_from_slice(history);
    Ok(row)
}

/// `P1` row: `[w2-blend per attribute of the author's types ‖ post distribution]`.
pub fn post_demography_row(
    post: &Post,
    author: &DemographicProfile,
    table: &WeightTable,
    vocab: &Vocabulary,
) -> Result<Vec<f64>> {
    let probs = post.categories.as_slice();
    let mut row = Vec::with_capacity(Attribute::COUNT + probs.len());
    for attr in Attribute::ALL {
        let w2 = cell_weights(table, vocab, attr, author, false)?;
        if w2.len() != probs.len() {
            return Err(Error::shape("weight table and post disagree on categories"));
        }
        let deltas: Vec<f64> = w2
            .iter()
            .zip(probs)
            .map(|(&w, &c)| delta_j(false, 0.0, w, 0.0, c))
            .collect();
        row.push(avg_weight(w2, &deltas)?);
    }
    row.extend_from_slice(probs);
    Ok(row)
}

pub fn build_u1_p1(
    users: &[User],
    posts: &[Post],
    table: &WeightTable,
    vocab: &Vocabulary,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    let u_rows = users
        .iter()
        .map(|u| user_demography_row(u, table, vocab))
        .collect::<Result<Vec<_>>>()?;
    let p_rows = posts
        .iter()
        .map(|p| {
            let author = users
                .get(p.author.index())
                .ok_or_else(|| Error::invalid(format!("post {} has unknown author", p.id)))?;
            post_demography_row(p, &author.profile, table, vocab)
        })
        .collect::<Result<Vec<_>>>()?;
    let width = vocab.feature_width();
    Ok((
        FeatureMatrix {
            kind: FeatureKind::U1,
            matrix: matrix_of(u_rows, width)?,
        },
        FeatureMatrix {
            kind: FeatureKind::P1,
            matrix: matrix_of(p_rows, width)?,
        },
    ))
}

fn matrix_of(rows: Vec<Vec<f64>>, width: usize) -> Result<Matrix> {
    let n = rows.len();
    Matrix::from_vec(n, width, rows.concat())
}

/// φ for category `j`: engagement-weighted mean of the interaction weights; 0 when the
/// user has no engagement in that category.
pub fn engagement_score(tally: &InteractionTally, j: usize, ew: &EngagementWeights) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for r in Reaction::ALL {
        let n = tally.reaction(j, r);
        num += ew.reaction(r) * n;
        den += n;
    }
    num += ew.comment * tally.comments[j] + ew.share * tally.shares[j];
    den += tally.comments[j] + tally.shares[j];
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

pub fn engagement_row(tally: &InteractionTally, ew: &EngagementWeights) -> Vec<f64> {
    let mut row = vec![0.0; Attribute::COUNT];
    row.extend((0..tally.n_categories()).map(|j| engagement_score(tally, j, ew)));
    row
}

/// `U2` from the given events and `P2` from post distributions.
pub fn build_u2_p2(
    users: &[User],
    posts: &[Post],
    events: &[InteractionEvent],
    ew: &EngagementWeights,
    n_categories: usize,
) -> Result<(FeatureMatrix, FeatureMatrix)> {
    ew.validate()?;
    let width = Attribute::COUNT + n_categories;
    let tallies = tally_all(events, posts, users.len(), n_categories)?;
    let u_rows: Vec<Vec<f64>> = tallies.iter().map(|t| engagement_row(t, ew)).collect();
    let p_rows: Vec<Vec<f64>> = posts
        .iter()
        .map(|p| {
            let mut row = vec![0.0; Attribute::COUNT];
            row.extend_from_slice(p.categories.as_slice());
            row
        })
        .collect();
    Ok((
        FeatureMatrix {
            kind: FeatureKind::U2,
            matrix: matrix_of(u_rows, width)?,
        },
        FeatureMatrix {
            kind: FeatureKind::P2,
            matrix: matrix_of(p_rows, width)?,
        },
    ))
}

/// The four feature matrices for one snapshot of users, posts and events.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureSet {
    pub u1: FeatureMatrix,
    pub p1: FeatureMatrix,
    pub u2: FeatureMatrix,
    pub p2: FeatureMatrix,
}

impl FeatureSet {
    pub fn build(
        users: &[User],
        posts: &[Post],
        events: &[InteractionEvent],
        table: &WeightTable,
        ew: &EngagementWeights,
        vocab: &Vocabulary,
    ) -> Result<Self> {
        let (u1, p1) = build_u1_p1(users, posts, table, vocab)?;
        let (u2, p2) = build_u2_p2(users, posts, events, ew, vocab.n_categories())?;
        Ok(FeatureSet { u1, p1, u2, p2 })
    }

    pub fn n_users(&self) -> usize {
        self.u1.rows()
    }

    pub fn n_posts(&self) -> usize {
        self.p1.rows()
    }

    pub fn width(&self) -> usize {
        self.u1.cols()
    }
}
