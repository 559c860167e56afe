use pofcap::eval::{self, Alignment};
use pofcap::fitting::{FitConfig, Fitter, Weights};
use pofcap::io::{self, Sequence, SequenceConfig};
use pofcap::model::{BodyModel, ModelSpec};
use pofcap::synth::{self, RenderMode, SceneConfig};

fn fitter(weights: Weights) -> (BodyModel, Fitter) {
    let model = BodyModel::new(&ModelSpec::body_only()).unwrap();
    let priors = synth::train_priors(&model, 1, 5000).unwrap();
    let config = FitConfig {
        model: ModelSpec::body_only(),
        weights,
        ..FitConfig::default()
    };
    (model, Fitter::new(config, priors).unwrap())
}

/// Without the pose prior the objective is minimized exactly at the truth.
#[test]
fn exact_measurements_are_a_fixed_point_without_prior() {
    let (model, fitter) = fitter(Weights {
        wprior_body: 1e-9,
        ..Weights::default()
    });
    for seed in 0..5 {
        let cfg = SceneConfig {
            seed,
            model: ModelSpec::body_only(),
            render: RenderMode::Direct,
            ..SceneConfig::default()
        };
        let gt = &synth::generate_sequence(&cfg).unwrap()[0];
        let obs = synth::render_observation(&model, gt, &cfg, 0)
            .unwrap()
            .observation;
        let fit = fitter.fit_frame(&obs, Some(&gt.params)).unwrap();
        let joints = model.pose(&fit.params).unwrap().positions;
        let err = eval::mpjpe(&joints, &gt.joints, Alignment::Root, model.skeleton.root()).unwrap();
        assert!(err < 1e-3, "seed {seed}: {err} cm");
    }
}

/// The default prior weight trades accuracy for plausibility: starting from
/// the truth, the fit drifts toward the prior mean but stays close.
#[test]
fn default_prior_biases_but_stays_near_the_truth() {
    let (model, fitter) = fitter(Weights::default());
    let cfg = SceneConfig {
        seed: 3,
        model: ModelSpec::body_only(),
        render: RenderMode::Direct,
        ..SceneConfig::default()
    };
    let gt = &synth::generate_sequence(&cfg).unwrap()[0];
    let obs = synth::render_observation(&model, gt, &cfg, 0)
        .unwrap()
        .observation;
    let fit = fitter.fit_frame(&obs, Some(&gt.params)).unwrap();
    let joints = model.pose(&fit.params).unwrap().positions;
    let err = eval::mpjpe(&joints, &gt.joints, Alignment::Root, model.skeleton.root()).unwrap();
    assert!(err > 1e-3 && err < 5.0, "{err} cm");
}

#[test]
fn written_sequences_fit_like_in_memory_ones() {
    let dir = tempfile::tempdir().unwrap();
    let config = SequenceConfig {
        scene: SceneConfig {
            seed: 8,
            n_frames: 2,
            model: ModelSpec::body_only(),
            ..SceneConfig::default()
        },
        prior_samples: 5000,
        ..SequenceConfig::default()
    };
    io::write_sequence(dir.path(), &config).unwrap();
    let seq = Sequence::open(dir.path()).unwrap();
    assert_eq!(seq.len(), 2);

    let model = BodyModel::new(&config.scene.model).unwrap();
    let gt = synth::generate_sequence(&config.scene).unwrap();
    let stored = seq.ground_truth().unwrap();
    assert_eq!(stored.len(), gt.len());
    for (a, b) in stored.iter().zip(&gt) {
        assert_eq!(a.params, b.params);
    }
    let obs = synth::render_observation(&model, &gt[1], &config.scene, 1)
        .unwrap()
        .observation;
    assert_eq!(seq.observation(1).unwrap(), obs);

    let trained = synth::train_priors(&model, config.scene.seed, config.prior_samples).unwrap();
    let loaded = seq.priors().unwrap();
    assert_eq!(loaded.body, trained.body);

    let fit_config = FitConfig {
        model: ModelSpec::body_only(),
        ..FitConfig::default()
    };
    let from_disk = Fitter::new(fit_config.clone(), loaded)
        .unwrap()
        .fit_frame(&seq.observation(1).unwrap(), None)
        .unwrap();
    let in_memory = Fitter::new(fit_config, trained)
        .unwrap()
        .fit_frame(&obs, None)
        .unwrap();
    assert_eq!(from_disk.params, in_memory.params);
}
