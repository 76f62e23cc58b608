use feedrank_core::eval::{evaluate, leave_one_out, EvalProtocol};
use feedrank_core::features::{EngagementWeights, FeatureMatrix, FeatureSet};
use feedrank_core::io::{read_dataset, read_survey, read_weights, write_dataset, write_survey, write_weights};
use feedrank_core::mf::{score_dh, score_e, score_hybrid, top_k};
use feedrank_core::neumf::{
    checkpoint, pretrain_and_fuse, train, AnyModel, GmfModel, LatentConfig, MlpModel, NeuralModel, PairInput,
    TrainConfig,
};
use feedrank_core::survey::build_weight_table;
use feedrank_core::synth::{generate, generate_survey, GenConfig};

fn small() -> GenConfig {
    GenConfig {
        n_users: 50,
        n_posts: 200,
        n_categories: 5,
        interaction_rate: 10.0,
        seed: 3,
        ..GenConfig::default()
    }
}

#[test]
fn files_reproduce_features_and_scores() {
    let cfg = small();
    let ds = generate(&cfg).unwrap().dataset;
    let survey = generate_survey(&cfg).unwrap();
    let table = build_weight_table(&ds.vocab, &survey).unwrap();
    let ew = EngagementWeights::default();
    let fs = FeatureSet::build(&ds.users, &ds.posts, &ds.events, &table, &ew, &ds.vocab).unwrap();

    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, dir.path()).unwrap();
    write_survey(&survey, &ds.vocab, &dir.path().join("survey.jsonl")).unwrap();
    write_weights(&table, &ds.vocab, &dir.path().join("weights.jsonl")).unwrap();

    let back = read_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    let survey_back = read_survey(&dir.path().join("survey.jsonl"), &back.vocab).unwrap();
    assert_eq!(build_weight_table(&back.vocab, &survey_back).unwrap(), table);
    let table_back = read_weights(&dir.path().join("weights.jsonl"), &back.vocab).unwrap();
    let fs_back = FeatureSet::build(&back.users, &back.posts, &back.events, &table_back, &ew, &back.vocab).unwrap();
    assert_eq!(fs_back, fs);

    let mut buf = Vec::new();
    fs.u1.write_to(&mut buf).unwrap();
    assert_eq!(FeatureMatrix::read_from(buf.as_slice()).unwrap(), fs.u1);

    let dhe = score_hybrid(&score_dh(&fs.u1, &fs.p1).unwrap(), &score_e(&fs.u2, &fs.p2).unwrap()).unwrap();
    for u in 0..ds.users.len() {
        let own: Vec<bool> = ds.posts.iter().map(|p| p.author.index() == u).collect();
        let feed = top_k(dhe.row(u), u, 10, &own).unwrap();
        assert_eq!(feed.items.len(), 10);
        assert!(feed.items.iter().all(|(p, _)| !own[*p as usize]));
        assert!(feed.items.windows(2).all(|w| w[0].1 >= w[1].1));
    }
}

#[test]
fn trained_models_survive_checkpoints_and_beat_chance() {
    let cfg = small();
    let ds = generate(&cfg).unwrap().dataset;
    let table = build_weight_table(&ds.vocab, &generate_survey(&cfg).unwrap()).unwrap();
    let protocol = EvalProtocol::default();
    let split = leave_one_out(&ds, &protocol).unwrap();
    let t = &split.train;
    let fs = FeatureSet::build(
        &t.users,
        &t.posts,
        &t.events,
        &table,
        &EngagementWeights::default(),
        &t.vocab,
    )
    .unwrap();
    let observed = t.observed().unwrap();
    let latent = LatentConfig::default();
    let tc = TrainConfig {
        epochs: 15,
        ..TrainConfig::default()
    };

    let mut gmf = GmfModel::new(fs.width(), &latent).unwrap();
    let mut mlp = MlpModel::new(fs.width(), &latent).unwrap();
    let gl = train(&mut gmf, &fs, &observed, &tc).unwrap();
    let ml = train(&mut mlp, &fs, &observed, &tc).unwrap();
    let mut neumf = pretrain_and_fuse(&gmf, &mlp, tc.pretrain_alpha).unwrap();
    let nl = train(&mut neumf, &fs, &observed, &tc).unwrap();
    for loss in [&gl, &ml, &nl] {
        assert_eq!(loss.len(), 15);
        assert!(loss.last() < loss.first());
    }

    let mut bytes = Vec::new();
    checkpoint::save(&neumf, &mut bytes).unwrap();
    let restored = checkpoint::load(bytes.as_slice()).unwrap();
    let original = AnyModel::Neumf(neumf.clone());
    for (u, p) in [(0, 0), (3, 17), (49, 199)] {
        let x = PairInput::from_features(&fs, u, p);
        assert_eq!(restored.logit(&x).to_bits(), original.logit(&x).to_bits());
    }

    let eval = evaluate("neumf", &split, &protocol, |u, p| {
        neumf.logit(&PairInput::from_features(&fs, u, p))
    })
    .unwrap();
    assert_eq!(eval.evaluated, 50);
    assert!(eval.hr > 0.1, "HR@10 {}", eval.hr);
    let again = evaluate("neumf", &split, &protocol, |u, p| {
        restored.logit(&PairInput::from_features(&fs, u, p))
    })
    .unwrap();
    assert_eq!(again.ranks, eval.ranks);
}
