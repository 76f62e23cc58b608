//! Leave-one-out ranking evaluation with HR@K and NDCG@K.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{Dataset, EventKind, InteractionEvent, PostId, UserId};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub k: usize,
    pub negatives_per_eval: usize,
    pub seed: u64,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            k: 10,
            negatives_per_eval: 99,
            seed: 42,
        }
    }
}

pub fn hit_rate_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0
    } else {
        0.0
    }
}

pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank >= 1 && rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

/// 1-based rank of the held-out post among the candidates. Ties go to the lower post id.
pub fn rank_of(holdout: (usize, f64), negatives: &[(usize, f64)]) -> usize {
    let (hp, hs) = holdout;
    1 + negatives
        .iter()
        .filter(|&&(p, s)| s > hs || (s == hs && p < hp))
        .count()
}

#[derive(Clone, Debug, PartialEq)]
pub struct EvalCase {
    pub user: UserId,
    pub holdout: PostId,
    pub negatives: Vec<PostId>,
}

/// Training events plus one held-out engagement per user.
#[derive(Clone, Debug)]
pub struct LeaveOneOut {
    pub train: Dataset,
    pub cases: Vec<EvalCase>,
    /// Users with no engagement events to hold out.
    pub skipped: Vec<UserId>,
}

/// Holds out each user's latest non-authored event. Every training event on the held-out
/// (user, post) pair is removed, and negatives are drawn uniformly from posts the user
/// never touched, including authored ones.
pub fn leave_one_out(ds: &Dataset, protocol: &EvalProtocol) -> Result<LeaveOneOut> {
    let n_users = ds.n_users();
    let mut latest: Vec<Option<&InteractionEvent>> = vec![None; n_users];
    let mut touched: Vec<HashSet<usize>> = vec![HashSet::new(); n_users];
    for e in &ds.events {
        touched[e.user.index()].insert(e.post.index());
        if e.kind == EventKind::Authored {
            continue;
        }
        let slot = &mut latest[e.user.index()];
        if slot.is_none_or(|cur| e.seq > cur.seq) {
            *slot = Some(e);
        }
    }

    let mut cases = Vec::new();
    let mut skipped = Vec::new();
    let mut held: HashSet<(u32, u32)> = HashSet::new();
    for u in 0..n_users {
        let Some(h) = latest[u] else {
            skipped.push(UserId(u as u32));
            continue;
        };
        let pool: Vec<usize> = (0..ds.n_posts()).filter(|p| !touched[u].contains(p)).collect();
        if pool.len() < protocol.negatives_per_eval {
            return Err(Error::invalid(format!(
                "user {u} has only {} untouched posts for {} negatives",
                pool.len(),
                protocol.negatives_per_eval
            )));
        }
        let mut rng = case_rng(protocol.seed, u);
        let negatives = rand::seq::index::sample(&mut rng, pool.len(), protocol.negatives_per_eval)
            .into_iter()
            .map(|i| PostId(pool[i] as u32))
            .collect();
        held.insert((h.user.0, h.post.0));
        cases.push(EvalCase {
            user: h.user,
            holdout: h.post,
            negatives,
        });
    }

    let events = ds
        .events
        .iter()
        .filter(|e| e.kind == EventKind::Authored || !held.contains(&(e.user.0, e.post.0)))
        .copied()
        .collect();
    let train = Dataset::new(ds.vocab.clone(), ds.users.clone(), ds.posts.clone(), events)?;
    Ok(LeaveOneOut { train, cases, skipped })
}

fn case_rng(seed: u64, user: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(user as u64);
    rng
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelEval {
    pub model: String,
    pub hr: f64,
    pub ndcg: f64,
    pub k: usize,
    pub evaluated: usize,
    pub skipped: usize,
    /// (user id, rank of the held-out post).
    pub ranks: Vec<(u32, usize)>,
    /// Epoch-mean training loss, empty for untrained scorers.
    pub loss: Vec<f64>,
}

/// Scores every case with `score(user, post)` and averages HR@K and NDCG@K.
pub fn evaluate<F>(name: &str, split: &LeaveOneOut, protocol: &EvalProtocol, score: F) -> Result<ModelEval>
where
    F: Fn(usize, usize) -> f64,
{
    if protocol.k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if split.cases.is_empty() {
        return Err(Error::Empty("evaluation cases"));
    }
    let mut ranks = Vec::with_capacity(split.cases.len());
    let (mut hr, mut ndcg) = (0.0, 0.0);
    for case in &split.cases {
        let u = case.user.index();
        let hs = score(u, case.holdout.index());
        let negs: Vec<(usize, f64)> = case
            .negatives
            .iter()
            .map(|p| (p.index(), score(u, p.index())))
            .collect();
        if !hs.is_finite() || negs.iter().any(|n| !n.1.is_finite()) {
            return Err(Error::NonFinite(format!("{name} score for user {u}")));
        }
        let rank = rank_of((case.holdout.index(), hs), &negs);
        hr += hit_rate_at_k(rank, protocol.k);
        ndcg += ndcg_at_k(rank, protocol.k);
        ranks.push((case.user.0, rank));
    }
    let n = split.cases.len() as f64;
    Ok(ModelEval {
        model: name.to_string(),
        hr: hr / n,
        ndcg: ndcg / n,
        k: protocol.k,
        evaluated: split.cases.len(),
        skipped: split.skipped.len(),
        ranks,
        loss: Vec::new(),
    })
}

/// Deterministic pseudo-random score, for baselines and tests.
pub fn random_score(seed: u64, user: usize, post: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((user as u64) << 32 | post as u64));
    rng.random()
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub models: Vec<ModelEval>,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<&ModelEval> {
        self.models.iter().find(|m| m.model == name)
    }

    /// Aligned text table, one row per model.
    pub fn table(&self) -> String {
        let mut out = format!(
            "{:<10} {:>8} {:>8} {:>9} {:>8} {:>10}\n",
            "model", "HR@K", "NDCG@K", "evaluated", "skipped", "final loss"
        );
        for m in &self.models {
            let loss = m.loss.last().map_or("-".to_string(), |l| format!("{l:.5}"));
            out += &format!(
                "{:<10} {:>8.4} {:>8.4} {:>9} {:>8} {:>10}\n",
                m.model, m.hr, m.ndcg, m.evaluated, m.skipped, loss
            );
        }
        out
    }

    /// `epoch,<model>,...` rows for the models that have a loss trace.
    pub fn loss_csv(&self) -> String {
        let trained: Vec<&ModelEval> = self.models.iter().filter(|m| !m.loss.is_empty()).collect();
        let mut out = String::from("epoch");
        for m in &trained {
            out += &format!(",{}", m.model);
        }
        out.push('\n');
        let epochs = trained.iter().map(|m| m.loss.len()).max().unwrap_or(0);
        for e in 0..epochs {
            out += &(e + 1).to_string();
            for m in &trained {
                out.push(',');
                if let Some(l) = m.loss.get(e) {
                    out += &l.to_string();
                }
            }
            out.push('\n');
        }
        out
    }
}
