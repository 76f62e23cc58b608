//! Line-delimited JSON files for datasets, surveys and weight tables.
//!
//! A dataset directory holds `users.jsonl`, `posts.jsonl` and `events.jsonl`; a survey is
//! `survey.jsonl`. Users are re-derived on load: their history is recomputed from the
//! posts they authored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::domain::{
    Attribute, CategoryDistribution, Dataset, DemographicProfile, EventKind, InteractionEvent, Post, PostId, User,
    UserId, Vocabulary,
};
use crate::error::{Error, Result};
use crate::survey::{SurveyResponse, WeightTable};

pub const USERS_FILE: &str = "users.jsonl";
pub const POSTS_FILE: &str = "posts.jsonl";
pub const EVENTS_FILE: &str = "events.jsonl";
pub const SURVEY_FILE: &str = "survey.jsonl";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UserRecord {
    pub user_id: u32,
    pub profile: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub history: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PostRecord {
    pub post_id: u32,
    pub user_id: u32,
    pub categories: Vec<f64>,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EventRecord {
    pub user_id: u32,
    pub post_id: u32,
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reaction: Option<String>,
    pub seq: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SurveyRecord {
    pub participant_id: String,
    pub attribute: String,
    #[serde(rename = "type")]
    pub type_label: String,
    pub ratings: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightRecord {
    pub attribute: String,
    #[serde(rename = "type")]
    pub type_label: String,
    pub category: String,
    pub w1: f64,
    pub w2: f64,
}

pub fn profile_labels(profile: &DemographicProfile, vocab: &Vocabulary) -> BTreeMap<String, String> {
    profile
        .labels(vocab)
        .into_iter()
        .map(|(a, l)| (a.name().to_string(), l.to_string()))
        .collect()
}

pub fn parse_profile(labels: &BTreeMap<String, String>, vocab: &Vocabulary) -> Result<DemographicProfile> {
    DemographicProfile::from_labels(labels.iter().map(|(a, l)| (a.as_str(), l.as_str())), vocab)
}

impl EventRecord {
    pub fn from_event(e: &InteractionEvent) -> Self {
        EventRecord {
            user_id: e.user.0,
            post_id: e.post.0,
            kind: e.kind.name().to_string(),
            reaction: e.kind.reaction().map(|r| r.name().to_string()),
            seq: e.seq,
        }
    }

    pub fn to_event(&self) -> Result<InteractionEvent> {
        Ok(InteractionEvent {
            user: UserId(self.user_id),
            post: PostId(self.post_id),
            kind: EventKind::parse(&self.kind, self.reaction.as_deref())?,
            seq: self.seq,
        })
    }
}

impl PostRecord {
    pub fn from_post(p: &Post) -> Self {
        PostRecord {
            post_id: p.id.0,
            user_id: p.author.0,
            categories: p.categories.as_slice().to_vec(),
            seq: p.created_at,
        }
    }

    pub fn to_post(&self) -> Result<Post> {
        Ok(Post {
            id: PostId(self.post_id),
            author: UserId(self.user_id),
            categories: CategoryDistribution::new(self.categories.clone())?,
            created_at: self.seq,
        })
    }
}

/// Parses one record per non-blank line; errors carry the 1-based line number.
pub fn read_jsonl<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            detail: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize, W: Write>(records: &[T], mut w: W) -> Result<()> {
    for rec in records {
        serde_json::to_writer(&mut w, rec).map_err(|e| Error::invalid(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_file<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = File::open(path).map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    read_jsonl(BufReader::new(f)).map_err(|e| match e {
        Error::Parse { line, detail } => Error::Parse {
            line,
            detail: format!("{}: {detail}", path.display()),
        },
        other => other,
    })
}

fn write_file<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    write_jsonl(records, BufWriter::new(File::create(path)?))
}

pub fn dataset_from_records(users: &[UserRecord], posts: &[PostRecord], events: &[EventRecord]) -> Result<Dataset> {
    let n_cat = posts
        .first()
        .map(|p| p.categories.len())
        .or_else(|| users.iter().find_map(|u| u.history.as_ref().map(Vec::len)))
        .unwrap_or(crate::domain::CATEGORY_NAMES.len());
    let vocab = Vocabulary::with_categories(n_cat);
    let users = users
        .iter()
        .map(|u| {
            Ok(User {
                id: UserId(u.user_id),
                profile: parse_profile(&u.profile, &vocab)?,
                history: CategoryDistribution::uniform(n_cat),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let posts = posts.iter().map(PostRecord::to_post).collect::<Result<Vec<_>>>()?;
    let events = events.iter().map(EventRecord::to_event).collect::<Result<Vec<_>>>()?;
    let mut ds = Dataset::new(vocab, users, posts, events)?;
    ds.recompute_histories()?;
    Ok(ds)
}

pub fn dataset_records(ds: &Dataset) -> (Vec<UserRecord>, Vec<PostRecord>, Vec<EventRecord>) {
    let users = ds
        .users
        .iter()
        .map(|u| UserRecord {
            user_id: u.id.0,
            profile: profile_labels(&u.profile, &ds.vocab),
            history: Some(u.history.as_slice().to_vec()),
        })
        .collect();
    let posts = ds.posts.iter().map(PostRecord::from_post).collect();
    let events = ds.events.iter().map(EventRecord::from_event).collect();
    (users, posts, events)
}

pub fn read_dataset(dir: &Path) -> Result<Dataset> {
    let users: Vec<UserRecord> = read_file(&dir.join(USERS_FILE))?;
    let posts: Vec<PostRecord> = read_file(&dir.join(POSTS_FILE))?;
    let events: Vec<EventRecord> = read_file(&dir.join(EVENTS_FILE))?;
    dataset_from_records(&users, &posts, &events)
}

pub fn write_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let (users, posts, events) = dataset_records(ds);
    write_file(&dir.join(USERS_FILE), &users)?;
    write_file(&dir.join(POSTS_FILE), &posts)?;
    write_file(&dir.join(EVENTS_FILE), &events)
}

pub fn survey_records(responses: &[SurveyResponse], vocab: &Vocabulary) -> Vec<SurveyRecord> {
    responses
        .iter()
        .map(|r| SurveyRecord {
            participant_id: r.participant.clone(),
            attribute: r.attribute.name().to_string(),
            type_label: vocab.types(r.attribute)[r.type_index].clone(),
            ratings: r.ratings.clone(),
        })
        .collect()
}

pub fn survey_from_records(records: &[SurveyRecord], vocab: &Vocabulary) -> Result<Vec<SurveyResponse>> {
    records
        .iter()
        .map(|r| {
            let attribute: Attribute = r.attribute.parse()?;
            let type_index = vocab
                .type_index(attribute, &r.type_label)
                .ok_or_else(|| Error::invalid(format!("unknown {attribute} type `{}`", r.type_label)))?;
            Ok(SurveyResponse {
                participant: r.participant_id.clone(),
                attribute,
                type_index,
                ratings: r.ratings.clone(),
            })
        })
        .collect()
}

pub fn read_survey(path: &Path, vocab: &Vocabulary) -> Result<Vec<SurveyResponse>> {
    survey_from_records(&read_file(path)?, vocab)
}

pub fn write_survey(responses: &[SurveyResponse], vocab: &Vocabulary, path: &Path) -> Result<()> {
    write_file(path, &survey_records(responses, vocab))
}

pub fn weight_records(table: &WeightTable, vocab: &Vocabulary) -> Vec<WeightRecord> {
    table
        .entries()
        .into_iter()
        .map(|(a, k, l, w1, w2)| WeightRecord {
            attribute: a.name().to_string(),
            type_label: vocab.types(a)[k].clone(),
            category: vocab.categories()[l].clone(),
            w1,
            w2,
        })
        .collect()
}

pub fn weights_from_records(records: &[WeightRecord], vocab: &Vocabulary) -> Result<WeightTable> {
    let entries = records
        .iter()
        .map(|r| {
            let a: Attribute = r.attribute.parse()?;
            let k = vocab
                .type_index(a, &r.type_label)
                .ok_or_else(|| Error::invalid(format!("unknown {a} type `{}`", r.type_label)))?;
            let l = vocab
                .category_index(&r.category)
                .ok_or_else(|| Error::invalid(format!("unknown category `{}`", r.category)))?;
            Ok((a, k, l, r.w1, r.w2))
        })
        .collect::<Result<Vec<_>>>()?;
    WeightTable::from_entries(vocab, entries)
}

pub fn read_weights(path: &Path, vocab: &Vocabulary) -> Result<WeightTable> {
    weights_from_records(&read_file(path)?, vocab)
}

pub fn write_weights(table: &WeightTable, vocab: &Vocabulary, path: &Path) -> Result<()> {
    write_file(path, &weight_records(table, vocab))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::survey::build_weight_table;
    use crate::synth::{generate, generate_survey, GenConfig};

    fn small() -> GenConfig {
        GenConfig {
            n_users: 30,
            n_posts: 90,
            interaction_rate: 6.0,
            ..GenConfig::default()
        }
    }

    #[test]
    fn dataset_roundtrip_and_byte_identity() {
        let ds = generate(&small()).unwrap().dataset;
        let dir = tempfile::tempdir().unwrap();
        write_dataset(&ds, dir.path()).unwrap();
        let back = read_dataset(dir.path()).unwrap();
        assert_eq!(back, ds);

        let other = tempfile::tempdir().unwrap();
        write_dataset(&generate(&small()).unwrap().dataset, other.path()).unwrap();
        for f in [USERS_FILE, POSTS_FILE, EVENTS_FILE] {
            let a = std::fs::read(dir.path().join(f)).unwrap();
            let b = std::fs::read(other.path().join(f)).unwrap();
            assert_eq!(a, b, "{f}");
        }
    }

    #[test]
    fn record_field_names() {
        let ds = generate(&small()).unwrap().dataset;
        let (u, p, e) = dataset_records(&ds);
        let u = serde_json::to_value(&u[0]).unwrap();
        assert!(u["profile"]["age"].is_string());
        let p = serde_json::to_value(&p[0]).unwrap();
        assert_eq!(p["categories"].as_array().unwrap().len(), 10);
        for k in ["post_id", "user_id", "seq"] {
            assert!(p.get(k).is_some(), "{k}");
        }
        let r = e.iter().find(|e| e.kind == "reaction").unwrap();
        let v = serde_json::to_value(r).unwrap();
        assert!(v["reaction"].is_string());
        let c = e.iter().find(|e| e.kind == "authored").unwrap();
        assert!(serde_json::to_value(c).unwrap().get("reaction").is_none());
    }

    #[test]
    fn parse_errors_name_the_line() {
        let text = "{\"user_id\":0,\"post_id\":0,\"kind\":\"share\",\"seq\":0}\n\nnot json\n";
        let err = read_jsonl::<EventRecord, _>(text.as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let bad = EventRecord {
            user_id: 0,
            post_id: 0,
            kind: "share".into(),
            reaction: Some("like".into()),
            seq: 0,
        };
        assert!(bad.to_event().is_err());
        let unknown = "{\"user_id\":0,\"post_id\":0,\"kind\":\"share\",\"seq\":0,\"x\":1}";
        assert!(read_jsonl::<EventRecord, _>(unknown.as_bytes()).is_err());
    }

    #[test]
    fn survey_and_weights_roundtrip() {
        let cfg = small();
        let vocab = Vocabulary::default();
        let survey = generate_survey(&cfg).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join(SURVEY_FILE);
        write_survey(&survey, &vocab, &path).unwrap();
        assert_eq!(read_survey(&path, &vocab).unwrap(), survey);

        let table = build_weight_table(&vocab, &survey).unwrap();
        let wpath = dir.path().join("weights.jsonl");
        write_weights(&table, &vocab, &wpath).unwrap();
        let back = read_weights(&wpath, &vocab).unwrap();
        assert_eq!(back.entries(), table.entries());
    }
}
