//! End-to-end run: generate, derive weights, build features, train, evaluate, report.

use std::fs;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use feedrank_core::domain::Dataset;
use feedrank_core::eval::{evaluate, leave_one_out, random_score, EvalProtocol, EvalReport, LeaveOneOut, ModelEval};
use feedrank_core::features::FeatureSet;
use feedrank_core::io::{write_dataset, write_survey, write_weights};
use feedrank_core::mf::{score_dh, score_e, score_hybrid};
use feedrank_core::neumf::{
    checkpoint, pretrain_and_fuse, train_with, AnyModel, GmfModel, LatentConfig, MlpModel, NeumfModel, PairInput,
    TrainConfig,
};
use feedrank_core::survey::{build_weight_table, SurveyResponse, WeightTable};
use feedrank_core::synth::{generate, generate_survey};
use feedrank_core::Result;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

/// Published NeuMF figures the measured values are set against.
pub const REFERENCE_HR: f64 = 0.80;
pub const REFERENCE_NDCG: f64 = 0.6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub generate_secs: f64,
    pub features_secs: f64,
    pub pretrain_secs: f64,
    pub neumf_secs: f64,
    pub evaluate_secs: f64,
    pub total_secs: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub seed: u64,
    pub users: usize,
    pub posts: usize,
    pub events: usize,
    pub epochs: usize,
    pub k: usize,
    pub reference_hr: f64,
    pub reference_ndcg: f64,
    pub evaluation: EvalReport,
    pub timings: Timings,
}

impl RunReport {
    pub fn text(&self) -> String {
        let mut out = format!(
            "seed {}  users {}  posts {}  events {}  epochs {}\n\n",
            self.seed, self.users, self.posts, self.events, self.epochs
        );
        out += &self.evaluation.table();
        if let Some(n) = self.evaluation.get("neumf") {
            out += &format!(
                "\nneumf vs reference: HR@{k} {:.4} / {:.2}, NDCG@{k} {:.4} / {:.2}\n",
                n.hr,
                self.reference_hr,
                n.ndcg,
                self.reference_ndcg,
                k = self.k
            );
        }
        out += &format!("\ntotal time {:.1}s\n", self.timings.total_secs);
        out
    }
}

pub struct TrainedModels {
    pub gmf: GmfModel,
    pub mlp: MlpModel,
    pub neumf: NeumfModel,
    pub gmf_loss: Vec<f64>,
    pub mlp_loss: Vec<f64>,
    pub neumf_loss: Vec<f64>,
    pub pretrain_secs: f64,
    pub neumf_secs: f64,
}

pub struct PipelineOutput {
    pub dataset: Dataset,
    pub survey: Vec<SurveyResponse>,
    pub table: WeightTable,
    pub split: LeaveOneOut,
    /// Features of the training split.
    pub features: FeatureSet,
    pub models: TrainedModels,
    pub report: RunReport,
}

/// Trains GMF and MLP concurrently, fuses them and trains NeuMF.
pub fn train_all<F>(
    features: &FeatureSet,
    train: &Dataset,
    latent: &LatentConfig,
    cfg: &TrainConfig,
    progress: F,
) -> Result<TrainedModels>
where
    F: Fn(&str, usize, f64) + Sync,
{
    let observed = train.observed()?;
    let d = features.width();
    let start = Instant::now();
    let (gmf, mlp) = std::thread::scope(|s| {
        let g = s.spawn(|| -> Result<_> {
            let mut m = GmfModel::new(d, latent)?;
            let loss = train_with(&mut m, features, &observed, cfg, |e, l| progress("gmf", e, l))?;
            Ok((m, loss))
        });
        let m = s.spawn(|| -> Result<_> {
            let mut m = MlpModel::new(d, latent)?;
            let loss = train_with(&mut m, features, &observed, cfg, |e, l| progress("mlp", e, l))?;
            Ok((m, loss))
        });
        (g.join().expect("gmf thread"), m.join().expect("mlp thread"))
    });
    let ((gmf, gmf_loss), (mlp, mlp_loss)) = (gmf?, mlp?);
    let pretrain_secs = start.elapsed().as_secs_f64();
    let start = Instant::now();
    let mut neumf = pretrain_and_fuse(&gmf, &mlp, cfg.pretrain_alpha)?;
    let neumf_loss = train_with(&mut neumf, features, &observed, cfg, |e, l| progress("neumf", e, l))?;
    Ok(TrainedModels {
        gmf,
        mlp,
        neumf,
        gmf_loss,
        mlp_loss,
        neumf_loss,
        pretrain_secs,
        neumf_secs: start.elapsed().as_secs_f64(),
    })
}

/// Random and matrix-factorization baselines on the training split's features.
pub fn baselines(split: &LeaveOneOut, features: &FeatureSet, protocol: &EvalProtocol) -> Result<Vec<ModelEval>> {
    let dh = score_dh(&features.u1, &features.p1)?;
    let e = score_e(&features.u2, &features.p2)?;
    let dhe = score_hybrid(&dh, &e)?;
    Ok(vec![
        evaluate("random", split, protocol, |u, p| random_score(protocol.seed, u, p))?,
        evaluate("mf-dh", split, protocol, |u, p| dh.get(u, p))?,
        evaluate("mf-e", split, protocol, |u, p| e.get(u, p))?,
        evaluate("mf-hybrid", split, protocol, |u, p| dhe.get(u, p))?,
    ])
}

pub fn evaluate_model(
    name: &str,
    model: &AnyModel,
    split: &LeaveOneOut,
    features: &FeatureSet,
    protocol: &EvalProtocol,
) -> Result<ModelEval> {
    evaluate(name, split, protocol, |u, p| {
        model.logit(&PairInput::from_features(features, u, p))
    })
}

/// Builds the leave-one-out split of `ds` and the training features.
pub fn prepare(ds: &Dataset, table: &WeightTable, cfg: &RunConfig) -> Result<(LeaveOneOut, FeatureSet)> {
    let split = leave_one_out(ds, &cfg.evaluation)?;
    let t = &split.train;
    let features = FeatureSet::build(&t.users, &t.posts, &t.events, table, &cfg.engagement, &t.vocab)?;
    Ok((split, features))
}

pub fn run_pipeline<F>(cfg: &RunConfig, progress: F) -> Result<PipelineOutput>
where
    F: Fn(&str, usize, f64) + Sync,
{
    cfg.validate()?;
    let t0 = Instant::now();
    let dataset = generate(&cfg.generator)?.dataset;
    let survey = generate_survey(&cfg.generator)?;
    let generate_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let table = build_weight_table(&dataset.vocab, &survey)?;
    let (split, features) = prepare(&dataset, &table, cfg)?;
    let features_secs = t1.elapsed().as_secs_f64();

    let models = train_all(&features, &split.train, &cfg.latent, &cfg.training, progress)?;

    let t2 = Instant::now();
    let mut evals = baselines(&split, &features, &cfg.evaluation)?;
    for (name, model, loss) in [
        ("gmf", AnyModel::Gmf(models.gmf.clone()), &models.gmf_loss),
        ("mlp", AnyModel::Mlp(models.mlp.clone()), &models.mlp_loss),
        ("neumf", AnyModel::Neumf(models.neumf.clone()), &models.neumf_loss),
    ] {
        let mut e = evaluate_model(name, &model, &split, &features, &cfg.evaluation)?;
        e.loss = loss.clone();
        evals.push(e);
    }
    let evaluate_secs = t2.elapsed().as_secs_f64();

    let report = RunReport {
        seed: cfg.generator.seed,
        users: dataset.users.len(),
        posts: dataset.posts.len(),
        events: dataset.events.len(),
        epochs: cfg.training.epochs,
        k: cfg.evaluation.k,
        reference_hr: REFERENCE_HR,
        reference_ndcg: REFERENCE_NDCG,
        evaluation: EvalReport { models: evals },
        timings: Timings {
            generate_secs,
            features_secs,
            pretrain_secs: models.pretrain_secs,
            neumf_secs: models.neumf_secs,
            evaluate_secs,
            total_secs: t0.elapsed().as_secs_f64(),
        },
    };
    Ok(PipelineOutput {
        dataset,
        survey,
        table,
        split,
        features,
        models,
        report,
    })
}

/// Writes the dataset, survey, weights, checkpoints and report files under `dir`.
pub fn write_outputs(out: &PipelineOutput, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir.join("models"))?;
    write_dataset(&out.dataset, &dir.join("data"))?;
    write_survey(&out.survey, &out.dataset.vocab, &dir.join("data").join("survey.jsonl"))?;
    write_weights(&out.table, &out.dataset.vocab, &dir.join("data").join("weights.jsonl"))?;
    let m = &out.models;
    checkpoint::save(&m.gmf, BufWriter::new(fs::File::create(dir.join("models/gmf.ckpt"))?))?;
    checkpoint::save(&m.mlp, BufWriter::new(fs::File::create(dir.join("models/mlp.ckpt"))?))?;
    checkpoint::save(
        &m.neumf,
        BufWriter::new(fs::File::create(dir.join("models/neumf.ckpt"))?),
    )?;
    let json = serde_json::to_string_pretty(&out.report).map_err(std::io::Error::other)?;
    fs::write(dir.join("report.json"), json)?;
    fs::write(dir.join("report.txt"), out.report.text())?;
    fs::write(dir.join("loss.csv"), out.report.evaluation.loss_csv())?;
    Ok(())
}
