//! Service state: a single writer that owns the dataset and log, and readers that share
//! the current snapshot.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;
use std::sync::{Arc, Mutex, RwLock};

use feedrank_core::coldstart::{cold_start_for_profile, ColdStartConfig};
use feedrank_core::domain::{
    CategoryDistribution, Dataset, DemographicProfile, EventKind, InteractionEvent, Post, PostId, User, UserId,
};
use feedrank_core::features::EngagementWeights;
use feedrank_core::io::{parse_profile, EventRecord};
use feedrank_core::mf::{rank_all, top_k};
use feedrank_core::neumf::layers::sigmoid;
use feedrank_core::neumf::{AnyModel, PairInput};
use feedrank_core::survey::WeightTable;
use serde::{Deserialize, Serialize};

use crate::error::{ServiceError, ServiceResult};
use crate::log::{EventLog, LogRecord};
use crate::snapshot::Snapshot;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EngineConfig {
    /// Rebuild automatically after this many new log records.
    pub rebuild_every: usize,
    pub default_k: usize,
    pub cold_start: ColdStartConfig,
    pub engagement: EngagementWeights,
}

impl Default for EngineConfig {
    fn default() -> Self {
        EngineConfig {
            rebuild_every: 50,
            default_k: 10,
            cold_start: ColdStartConfig::default(),
            engagement: EngagementWeights::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeedMode {
    Dh,
    E,
    Hybrid,
    Neumf,
}

impl FromStr for FeedMode {
    type Err = ServiceError;

    fn from_str(s: &str) -> ServiceResult<Self> {
        match s {
            "dh" => Ok(FeedMode::Dh),
            "e" => Ok(FeedMode::E),
            "hybrid" | "dhe" => Ok(FeedMode::Hybrid),
            "neumf" => Ok(FeedMode::Neumf),
            other => Err(ServiceError::BadRequest(format!(
                "unknown mode `{other}` (dh, e, hybrid, neumf)"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CategoryShare {
    pub category: String,
    pub share: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedItem {
    pub post_id: u32,
    pub author_id: u32,
    pub rank: usize,
    /// Absent for posts appended after the recommended prefix.
    pub score: Option<f64>,
    pub recommended: bool,
    pub created_at: u64,
    pub categories: Vec<CategoryShare>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Neighbour {
    pub user_id: u32,
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeedResponse {
    pub user_id: u32,
    /// Scoring path actually used: `dh`, `e`, `hybrid`, `neumf` or `coldstart`.
    pub route: String,
    pub snapshot_version: u64,
    pub k: usize,
    pub short: bool,
    pub neighbours: Vec<Neighbour>,
    pub items: Vec<FeedItem>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeedRequest {
    pub user: u32,
    pub k: Option<usize>,
    pub mode: FeedMode,
    pub recommended_only: bool,
    /// Use `mode` even for cold users.
    pub force: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InteractionRequest {
    pub user_id: u32,
    pub post_id: u32,
    pub kind: String,
    #[serde(default)]
    pub reaction: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ack {
    pub seq: u64,
    pub log_position: u64,
    pub pending: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RebuildInfo {
    pub version: u64,
    pub hash: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub hr: f64,
    pub ndcg: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub snapshot_version: u64,
    pub snapshot_hash: String,
    pub users: usize,
    pub posts: usize,
    pub event_count: usize,
    pub log_records: u64,
    pub pending: usize,
    pub last_eval: Option<EvalSummary>,
}

struct Writer {
    dataset: Dataset,
    log: EventLog,
    pending: usize,
}

pub struct Engine {
    writer: Mutex<Writer>,
    snapshot: RwLock<Arc<Snapshot>>,
    rebuild_lock: Mutex<()>,
    table: WeightTable,
    model: Option<Arc<AnyModel>>,
    config: EngineConfig,
    last_eval: RwLock<Option<EvalSummary>>,
}

fn lock_err<T>(_: T) -> ServiceError {
    ServiceError::Internal("state lock poisoned".into())
}

/// Applies one log record to the dataset, validating references first.
pub fn apply(ds: &mut Dataset, rec: &LogRecord) -> ServiceResult<()> {
    match rec {
        LogRecord::User { user_id, profile } => {
            if *user_id as usize != ds.users.len() {
                return Err(ServiceError::BadRequest(format!(
                    "user id {user_id} is not the next id {}",
                    ds.users.len()
                )));
            }
            let profile = parse_profile(profile, &ds.vocab)?;
            ds.users.push(User {
                id: UserId(*user_id),
                profile,
                history: CategoryDistribution::uniform(ds.vocab.n_categories()),
            });
        }
        LogRecord::Post {
            post_id,
            user_id,
            categories,
            seq,
        } => {
            if *post_id as usize != ds.posts.len() {
                return Err(ServiceError::BadRequest(format!(
                    "post id {post_id} is not the next id {}",
                    ds.posts.len()
                )));
            }
            if *user_id as usize >= ds.users.len() {
                return Err(ServiceError::NotFound(format!("user {user_id}")));
            }
            if categories.len() != ds.vocab.n_categories() {
                return Err(ServiceError::BadRequest(format!(
                    "expected {} category shares",
                    ds.vocab.n_categories()
                )));
            }
            let categories = CategoryDistribution::new(categories.clone())?;
            ds.posts.push(Post {
                id: PostId(*post_id),
                author: UserId(*user_id),
                categories,
                created_at: *seq,
            });
            ds.events.push(InteractionEvent {
                user: UserId(*user_id),
                post: PostId(*post_id),
                kind: EventKind::Authored,
                seq: *seq,
            });
            let h = ds.history_of(UserId(*user_id))?;
            ds.users[*user_id as usize].history = h;
        }
        LogRecord::Event(e) => {
            let event = e.to_event()?;
            if event.user.index() >= ds.users.len() {
                return Err(ServiceError::NotFound(format!("user {}", event.user)));
            }
            if event.post.index() >= ds.posts.len() {
                return Err(ServiceError::NotFound(format!("post {}", event.post)));
            }
            ds.events.push(event);
        }
    }
    Ok(())
}

impl Engine {
    /// Replays the log at `log_path` on top of `base` and builds the first snapshot.
    pub fn open(
        base: Dataset,
        log_path: &Path,
        table: WeightTable,
        model: Option<AnyModel>,
        config: EngineConfig,
    ) -> ServiceResult<Engine> {
        let (log, records) = EventLog::open(log_path)?;
        let mut dataset = base;
        for rec in &records {
            apply(&mut dataset, rec)?;
        }
        let snap = Snapshot::build(1, dataset.clone(), &table, &config.engagement, None)?;
        if let Some(m) = &model {
            if m.input_dim() != snap.features.width() {
                return Err(ServiceError::BadRequest(format!(
                    "model expects {} features per row, data has {}",
                    m.input_dim(),
                    snap.features.width()
                )));
            }
        }
        Ok(Engine {
            writer: Mutex::new(Writer {
                dataset,
                log,
                pending: 0,
            }),
            snapshot: RwLock::new(Arc::new(snap)),
            rebuild_lock: Mutex::new(()),
            table,
            model: model.map(Arc::new),
            config,
            last_eval: RwLock::new(None),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        self.snapshot
            .read()
            .map(|s| Arc::clone(&s))
            .unwrap_or_else(|p| Arc::clone(&p.into_inner()))
    }

    pub fn set_last_eval(&self, eval: Option<EvalSummary>) {
        if let Ok(mut slot) = self.last_eval.write() {
            *slot = eval;
        }
    }

    /// Rebuilds from the writer's current dataset and swaps the result in. On failure the
    /// previous snapshot stays active.
    pub fn rebuild(&self) -> ServiceResult<RebuildInfo> {
        let _guard = self.rebuild_lock.lock().map_err(lock_err)?;
        let dataset = {
            let mut w = self.writer.lock().map_err(lock_err)?;
            w.pending = 0;
            w.dataset.clone()
        };
        let prev = self.snapshot();
        let next = Snapshot::build(
            prev.version + 1,
            dataset,
            &self.table,
            &self.config.engagement,
            Some(&prev),
        )?;
        let info = RebuildInfo {
            version: next.version,
            hash: next.hash.clone(),
        };
        *self.snapshot.write().map_err(lock_err)? = Arc::new(next);
        Ok(info)
    }

    /// True once enough records have arrived since the last rebuild.
    pub fn rebuild_due(&self) -> bool {
        self.writer
            .lock()
            .map(|w| w.pending >= self.config.rebuild_every)
            .unwrap_or(false)
    }

    fn append(&self, w: &mut Writer, rec: LogRecord) -> ServiceResult<u64> {
        let mut staged = w.dataset.clone();
        apply(&mut staged, &rec)?;
        let pos = w.log.append(&rec)?;
        w.dataset = staged;
        w.pending += 1;
        Ok(pos)
    }

    pub fn post_interaction(&self, req: &InteractionRequest) -> ServiceResult<Ack> {
        let kind = EventKind::parse(&req.kind, req.reaction.as_deref())?;
        if kind == EventKind::Authored {
            return Err(ServiceError::BadRequest("create posts through POST /posts".into()));
        }
        let mut w = self.writer.lock().map_err(lock_err)?;
        if req.user_id as usize >= w.dataset.users.len() {
            return Err(ServiceError::NotFound(format!("user {}", req.user_id)));
        }
        if req.post_id as usize >= w.dataset.posts.len() {
            return Err(ServiceError::NotFound(format!("post {}", req.post_id)));
        }
        let seq = w.dataset.next_seq();
        let rec = LogRecord::Event(EventRecord {
            user_id: req.user_id,
            post_id: req.post_id,
            kind: req.kind.clone(),
            reaction: req.reaction.clone(),
            seq,
        });
        let log_position = self.append(&mut w, rec)?;
        Ok(Ack {
            seq,
            log_position,
            pending: w.pending,
        })
    }

    pub fn create_post(&self, user_id: u32, categories: Vec<f64>) -> ServiceResult<(u32, Ack)> {
        let mut w = self.writer.lock().map_err(lock_err)?;
        let post_id = w.dataset.posts.len() as u32;
        let seq = w.dataset.next_seq();
        let rec = LogRecord::Post {
            post_id,
            user_id,
            categories,
            seq,
        };
        let log_position = self.append(&mut w, rec)?;
        Ok((
            post_id,
            Ack {
                seq,
                log_position,
                pending: w.pending,
            },
        ))
    }

    /// Registers a user and returns the first feed, produced through cold start.
    pub fn create_user(
        &self,
        profile: &BTreeMap<String, String>,
        k: Option<usize>,
    ) -> ServiceResult<(u32, FeedResponse)> {
        let user_id = {
            let mut w = self.writer.lock().map_err(lock_err)?;
            let user_id = w.dataset.users.len() as u32;
            let rec = LogRecord::User {
                user_id,
                profile: profile.clone(),
            };
            self.append(&mut w, rec)?;
            user_id
        };
        let feed = self.feed(&FeedRequest {
            user: user_id,
            k,
            mode: FeedMode::Hybrid,
            recommended_only: true,
            force: false,
        })?;
        Ok((user_id, feed))
    }

    fn profile_of(&self, snap: &Snapshot, user: u32) -> ServiceResult<DemographicProfile> {
        if let Some(u) = snap.dataset.users.get(user as usize) {
            return Ok(u.profile);
        }
        let w = self.writer.lock().map_err(lock_err)?;
        w.dataset
            .users
            .get(user as usize)
            .map(|u| u.profile)
            .ok_or_else(|| ServiceError::NotFound(format!("user {user}")))
    }

    pub fn feed(&self, req: &FeedRequest) -> ServiceResult<FeedResponse> {
        let snap = self.snapshot();
        let k = req.k.unwrap_or(self.config.default_k);
        if k == 0 {
            return Err(ServiceError::BadRequest("k must be at least 1".into()));
        }
        let profile = self.profile_of(&snap, req.user)?;
        let u = req.user as usize;
        let in_snapshot = u < snap.n_users();
        let cold = !in_snapshot || snap.cold[u];
        if req.mode == FeedMode::Neumf && self.model.is_none() {
            return Err(ServiceError::BadRequest("no NeuMF model loaded".into()));
        }

        let mut neighbours = Vec::new();
        let (route, scores) = if cold && !(req.force && in_snapshot) {
            let weights = self.config.cold_start.resolve_weights(&self.table);
            let candidates = snap
                .dataset
                .users
                .iter()
                .filter(|c| !snap.cold[c.id.index()] && c.id.0 != req.user)
                .map(|c| (c.id, &c.profile));
            let cs = cold_start_for_profile(&profile, candidates, &snap.dhe, &weights, &self.config.cold_start)?;
            neighbours = cs
                .selection
                .neighbours
                .iter()
                .map(|&(id, s)| Neighbour {
                    user_id: id.0,
                    similarity: s,
                })
                .collect();
            ("coldstart", cs.scores)
        } else {
            match req.mode {
                FeedMode::Dh => ("dh", snap.dh.row(u).to_vec()),
                FeedMode::E => ("e", snap.e.row(u).to_vec()),
                FeedMode::Hybrid => ("hybrid", snap.dhe.row(u).to_vec()),
                FeedMode::Neumf => {
                    let model = self.model.as_ref().expect("checked above");
                    let scores = (0..snap.n_posts())
                        .map(|p| model.logit(&PairInput::from_features(&snap.features, u, p)))
                        .collect();
                    ("neumf", scores)
                }
            }
        };

        let excluded: Vec<bool> = snap.dataset.posts.iter().map(|p| p.author.0 == req.user).collect();
        let ranked = top_k(&scores, u, k, &excluded)?;
        let neumf = route == "neumf";
        let mut items: Vec<FeedItem> = ranked
            .items
            .iter()
            .enumerate()
            .map(|(i, &(p, s))| {
                let score = if neumf { sigmoid(s) } else { s };
                self.item(&snap, p as usize, i + 1, Some(score), true)
            })
            .collect();
        if !req.recommended_only {
            let chosen: std::collections::HashSet<u32> = ranked.items.iter().map(|x| x.0).collect();
            let mut rest: Vec<&Post> = snap
                .dataset
                .posts
                .iter()
                .filter(|p| !excluded[p.id.index()] && !chosen.contains(&p.id.0))
                .collect();
            rest.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(b.id.cmp(&a.id)));
            let start = items.len();
            items.extend(
                rest.into_iter()
                    .enumerate()
                    .map(|(i, p)| self.item(&snap, p.id.index(), start + i + 1, None, false)),
            );
        }
        Ok(FeedResponse {
            user_id: req.user,
            route: route.to_string(),
            snapshot_version: snap.version,
            k,
            short: ranked.short,
            neighbours,
            items,
        })
    }

    fn item(&self, snap: &Snapshot, p: usize, rank: usize, score: Option<f64>, recommended: bool) -> FeedItem {
        let post = &snap.dataset.posts[p];
        FeedItem {
            post_id: post.id.0,
            author_id: post.author.0,
            rank,
            score,
            recommended,
            created_at: post.created_at,
            categories: snap
                .dataset
                .vocab
                .categories()
                .iter()
                .zip(post.categories.as_slice())
                .map(|(c, v)| CategoryShare {
                    category: c.clone(),
                    share: *v,
                })
                .collect(),
        }
    }

    /// Rank of every non-own post for `user` under the snapshot's hybrid scores, for
    /// comparing against the library ranking directly.
    pub fn hybrid_order(&self, user: u32) -> ServiceResult<Vec<usize>> {
        let snap = self.snapshot();
        let u = user as usize;
        if u >= snap.n_users() {
            return Err(ServiceError::NotFound(format!("user {user}")));
        }
        let excluded: Vec<bool> = snap.dataset.posts.iter().map(|p| p.author.0 == user).collect();
        Ok(rank_all(snap.dhe.row(u), &excluded).into_iter().map(|x| x.0).collect())
    }

    pub fn metrics(&self) -> ServiceResult<Metrics> {
        let snap = self.snapshot();
        let w = self.writer.lock().map_err(lock_err)?;
        Ok(Metrics {
            snapshot_version: snap.version,
            snapshot_hash: snap.hash.clone(),
            users: w.dataset.users.len(),
            posts: w.dataset.posts.len(),
            event_count: w.dataset.events.len(),
            log_records: w.log.len(),
            pending: w.pending,
            last_eval: self.last_eval.read().ok().and_then(|e| *e),
        })
    }
}
