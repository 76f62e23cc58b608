//! Immutable, versioned bundle of features and score matrices.

use std::collections::HashSet;

use feedrank_core::domain::{Dataset, EventKind};
use feedrank_core::features::{build_u1_p1, build_u2_p2, EngagementWeights, FeatureSet};
use feedrank_core::matrix::Matrix;
use feedrank_core::mf::{score_dh, score_e, score_hybrid, ScoreMatrix};
use feedrank_core::survey::WeightTable;
use sha2::{Digest, Sha256};

use crate::error::ServiceResult;

#[derive(Clone, Debug)]
pub struct Snapshot {
    pub version: u64,
    pub dataset: Dataset,
    pub features: FeatureSet,
    pub dh: ScoreMatrix,
    pub e: ScoreMatrix,
    pub dhe: ScoreMatrix,
    /// Users with neither authored posts nor events.
    pub cold: Vec<bool>,
    /// Content hash; independent of `version`.
    pub hash: String,
}

impl Snapshot {
    /// Builds from `dataset`. Demography/history features and `R_dh` are reused from
    /// `prev` when the user and post sets are unchanged, since histories only move when
    /// posts are added.
    pub fn build(
        version: u64,
        dataset: Dataset,
        table: &WeightTable,
        ew: &EngagementWeights,
        prev: Option<&Snapshot>,
    ) -> ServiceResult<Snapshot> {
        let reusable = prev
            .filter(|p| p.dataset.users.len() == dataset.users.len() && p.dataset.posts.len() == dataset.posts.len());
        let (u1, p1, dh) = match reusable {
            Some(p) => (p.features.u1.clone(), p.features.p1.clone(), p.dh.clone()),
            None => {
                let (u1, p1) = build_u1_p1(&dataset.users, &dataset.posts, table, &dataset.vocab)?;
                let dh = score_dh(&u1, &p1)?;
                (u1, p1, dh)
            }
        };
        let (u2, p2) = build_u2_p2(
            &dataset.users,
            &dataset.posts,
            &dataset.events,
            ew,
            dataset.vocab.n_categories(),
        )?;
        let e = score_e(&u2, &p2)?;
        let dhe = score_hybrid(&dh, &e)?;

        let mut active: HashSet<u32> = dataset.events.iter().map(|e| e.user.0).collect();
        active.extend(dataset.posts.iter().map(|p| p.author.0));
        let cold = dataset.users.iter().map(|u| !active.contains(&u.id.0)).collect();

        let features = FeatureSet { u1, p1, u2, p2 };
        let hash = content_hash(&dataset, &features, &[&dh, &e, &dhe]);
        Ok(Snapshot {
            version,
            dataset,
            features,
            dh,
            e,
            dhe,
            cold,
            hash,
        })
    }

    pub fn n_users(&self) -> usize {
        self.dataset.users.len()
    }

    pub fn n_posts(&self) -> usize {
        self.dataset.posts.len()
    }
}

fn put_matrix(h: &mut Sha256, m: &Matrix) {
    h.update((m.rows() as u64).to_le_bytes());
    h.update((m.cols() as u64).to_le_bytes());
    for v in m.as_slice() {
        h.update(v.to_bits().to_le_bytes());
    }
}

pub fn content_hash(ds: &Dataset, fs: &FeatureSet, scores: &[&ScoreMatrix]) -> String {
    let mut h = Sha256::new();
    h.update((ds.users.len() as u64).to_le_bytes());
    for u in &ds.users {
        for t in u.profile.types() {
            h.update((t as u64).to_le_bytes());
        }
        for v in u.history.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.update((ds.posts.len() as u64).to_le_bytes());
    for p in &ds.posts {
        h.update(p.author.0.to_le_bytes());
        h.update(p.created_at.to_le_bytes());
        for v in p.categories.as_slice() {
            h.update(v.to_bits().to_le_bytes());
        }
    }
    h.update((ds.events.len() as u64).to_le_bytes());
    for e in &ds.events {
        h.update(e.user.0.to_le_bytes());
        h.update(e.post.0.to_le_bytes());
        h.update(e.seq.to_le_bytes());
        h.update(e.kind.name().as_bytes());
        if let EventKind::Reaction(r) = e.kind {
            h.update(r.name().as_bytes());
        }
    }
    for m in [&fs.u1, &fs.p1, &fs.u2, &fs.p2] {
        put_matrix(&mut h, &m.matrix);
    }
    for s in scores {
        put_matrix(&mut h, &s.matrix);
    }
    hex::encode(h.finalize())
}
