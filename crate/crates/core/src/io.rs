//! On-disk layout of sequences, priors and per-frame results.
//!
//! A sequence directory holds `manifest.json`, `gt.json`, one observation
//! file per frame under `obs/`, oracle flow targets under `flow/`, optional
//! rendered fields under `fields/` and the trained priors under `prior/`.

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::camera::Crop;
use crate::container::{read_tensors, write_tensors, Tensor};
use crate::error::{Error, Result};
use crate::fitting::{FlowTargets, Priors};
use crate::model::{BodyModel, Network};
use crate::pofield::{FieldStack, FrameObservation, Keypoint, Observation, Orientation};
use crate::prior::{PosePrior, PriorMeta, DEFAULT_EPS};
use crate::synth::{self, GtFrame, RenderedFields, SceneConfig};
use crate::tracking::{flow_file_name, flow_from_tensor, flow_to_tensor};

pub const SEQUENCE_SCHEMA: &str = "pofcap.sequence/1";

/// Everything needed to generate a sequence directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SequenceConfig {
    #[serde(flatten)]
    pub scene: SceneConfig,
    /// Store the rendered fields next to the decoded observations.
    pub write_fields: bool,
    /// Pose samples used to train the priors.
    pub prior_samples: usize,
    /// Pixel noise of the oracle flow targets.
    pub flow_sigma: f64,
}

impl Default for SequenceConfig {
    fn default() -> Self {
        Self {
            scene: SceneConfig::default(),
            write_fields: false,
            prior_samples: 20_000,
            flow_sigma: 0.0,
        }
    }
}

impl SequenceConfig {
    pub fn validate(&self) -> Result<()> {
        self.scene.validate()?;
        if self.prior_samples < 2 {
            return Err(Error::Config("prior_samples must be at least 2".into()));
        }
        if !(self.flow_sigma >= 0.0) {
            return Err(Error::Config("flow_sigma must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub schema: String,
    pub config: SequenceConfig,
    pub frames: usize,
    pub gt: String,
    pub observations: Vec<String>,
    pub flow: Vec<String>,
    pub fields: Option<Vec<String>>,
    pub priors: Vec<String>,
    /// Parts skipped by the field renderer, per frame.
    pub degenerate_parts: Vec<usize>,
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

/// Read JSON data files; parse failures are container errors.
pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| Error::Container(format!("{}: {e}", path.display())))
}

/// Read JSON configuration; parse failures are configuration errors.
pub fn read_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text =
        fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

pub fn frame_file(index: usize, ext: &str) -> String {
    format!("{index:06}.{ext}")
}

fn keypoints_tensor(kps: &[Keypoint]) -> Result<Tensor> {
    let data = kps
        .iter()
        .flat_map(|k| {
            [
                k.position.x,
                k.position.y,
                k.confidence,
                if k.present { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    Tensor::f64(vec![kps.len(), 4], data)
}

fn keypoints_from(t: &Tensor) -> Result<Vec<Keypoint>> {
    rows4(t)?
        .chunks_exact(4)
        .map(|c| {
            if c[3] == 0.0 {
                return Ok(Keypoint::absent());
            }
            if !(c[0].is_finite() && c[1].is_finite() && c[2].is_finite()) {
                return Err(Error::Container("non-finite keypoint".into()));
            }
            Ok(Keypoint {
                position: Vector2::new(c[0], c[1]),
                confidence: c[2],
                present: true,
            })
        })
        .collect()
}

fn orientations_tensor(o: &[Orientation]) -> Result<Tensor> {
    let data = o
        .iter()
        .flat_map(|o| {
            [
                o.direction.x,
                o.direction.y,
                o.direction.z,
                if o.present { 1.0 } else { 0.0 },
            ]
        })
        .collect();
    Tensor::f64(vec![o.len(), 4], data)
}

fn orientations_from(t: &Tensor) -> Result<Vec<Orientation>> {
    rows4(t)?
        .chunks_exact(4)
        .map(|c| {
            if c[3] == 0.0 {
                return Ok(Orientation::absent());
            }
            let d = nalgebra::Vector3::new(c[0], c[1], c[2]);
            if !d.iter().all(|v| v.is_finite()) {
                return Err(Error::Container("non-finite orientation".into()));
            }
            Ok(Orientation::of(d))
        })
        .collect()
}

fn rows4(t: &Tensor) -> Result<Vec<f64>> {
    if t.dims.len() != 2 || t.dims[1] != 4 {
        return Err(Error::Container(format!(
            "expected an [n, 4] tensor, got {:?}",
            t.dims
        )));
    }
    Ok(t.to_f64())
}

/// Tensors of a frame observation: a `[3, 3]` presence table (network, toes,
/// face for body, left hand, right hand) followed by keypoints,
/// orientations, toes and face for each of the three networks.
pub fn observation_to_tensors(obs: &FrameObservation) -> Result<Vec<Tensor>> {
    let nets = [
        Some(&obs.body),
        obs.left_hand.as_ref(),
        obs.right_hand.as_ref(),
    ];
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let mut table = Vec::with_capacity(9);
    for o in nets {
        table.extend([
            flag(o.is_some()),
            flag(o.is_some_and(|o| o.toes.is_some())),
            flag(o.is_some_and(|o| o.face.is_some())),
        ]);
    }
    let mut out = vec![Tensor::f64(vec![3, 3], table)?];
    let empty = Observation::default();
    for o in nets {
        let o = o.unwrap_or(&empty);
        out.push(keypoints_tensor(&o.keypoints)?);
        out.push(orientations_tensor(&o.orientations)?);
        out.push(keypoints_tensor(o.toes.as_deref().unwrap_or(&[]))?);
        out.push(keypoints_tensor(o.face.as_deref().unwrap_or(&[]))?);
    }
    Ok(out)
}

pub fn observation_from_tensors(tensors: &[Tensor]) -> Result<FrameObservation> {
    if tensors.len() != 13 {
        return Err(Error::Container(format!(
            "observation needs 13 tensors, found {}",
            tensors.len()
        )));
    }
    tensors[0]
        .expect_dims(&[3, 3])
        .map_err(|e| Error::Container(e.to_string()))?;
    let table = tensors[0].to_f64();
    let mut nets = Vec::with_capacity(3);
    for k in 0..3 {
        let t = &tensors[1 + 4 * k..5 + 4 * k];
        if table[3 * k] == 0.0 {
            nets.push(None);
            continue;
        }
        nets.push(Some(Observation {
            keypoints: keypoints_from(&t[0])?,
            orientations: orientations_from(&t[1])?,
            toes: (table[3 * k + 1] != 0.0)
                .then(|| keypoints_from(&t[2]))
                .transpose()?,
            face: (table[3 * k + 2] != 0.0)
                .then(|| keypoints_from(&t[3]))
                .transpose()?,
        }));
    }
    let mut it = nets.into_iter();
    let body = it
        .next()
        .flatten()
        .ok_or_else(|| Error::Container("observation without a body entry".into()))?;
    Ok(FrameObservation {
        body,
        left_hand: it.next().flatten(),
        right_hand: it.next().flatten(),
    })
}

pub fn write_observation(path: &Path, obs: &FrameObservation) -> Result<()> {
    write_tensors(path, &observation_to_tensors(obs)?)
}

pub fn read_observation(path: &Path) -> Result<FrameObservation> {
    observation_from_tensors(&read_tensors(path)?)
}

fn crop_tensor(c: &Crop) -> Result<Tensor> {
    Tensor::f64(vec![4], vec![c.zoom, c.center.x, c.center.y, c.size as f64])
}

/// Body confidence and orientation fields, then for each hand a crop
/// `[zoom, cx, cy, size]` and its two field tensors.
pub fn write_fields(path: &Path, fields: &RenderedFields) -> Result<()> {
    let mut out: Vec<Tensor> = fields.body.to_tensors()?.into();
    for (stack, crop) in [&fields.left_hand, &fields.right_hand]
        .into_iter()
        .flatten()
    {
        out.push(crop_tensor(crop)?);
        out.extend(stack.to_tensors()?);
    }
    write_tensors(path, &out)
}

pub fn read_body_fields(path: &Path) -> Result<FieldStack> {
    let mut t = read_tensors(path)?.into_iter();
    match (t.next(), t.next()) {
        (Some(c), Some(p)) => FieldStack::from_tensors(c, p),
        _ => Err(Error::Container(format!(
            "{}: missing body fields",
            path.display()
        ))),
    }
}

/// `prior/<network>.poft` with `A` and `mu`, plus `prior/<network>.json` metadata.
pub fn write_prior(
    dir: &Path,
    model: &BodyModel,
    net: Network,
    prior: &PosePrior,
    samples: usize,
) -> Result<Vec<String>> {
    let joints = model
        .prior_joints(net)
        .ok_or_else(|| Error::Config(format!("model has no {} network", net.label())))?;
    let names = model.skeleton.joint_names();
    let meta = PriorMeta {
        network: net.label().to_string(),
        joints: joints.iter().map(|&j| names[j].clone()).collect(),
        samples,
        eps: DEFAULT_EPS,
    };
    fs::create_dir_all(dir)?;
    let stem = net.label();
    write_tensors(&dir.join(format!("{stem}.poft")), &prior.to_tensors()?)?;
    write_json(&dir.join(format!("{stem}.json")), &meta)?;
    Ok(vec![
        format!("prior/{stem}.poft"),
        format!("prior/{stem}.json"),
    ])
}

pub fn read_prior(dir: &Path, model: &BodyModel, net: Network) -> Result<PosePrior> {
    let stem = net.label();
    let meta: PriorMeta = read_json(&dir.join(format!("{stem}.json")))?;
    let joints = model
        .prior_joints(net)
        .ok_or_else(|| Error::Config(format!("model has no {} network", net.label())))?;
    let names = model.skeleton.joint_names();
    let expected: Vec<String> = joints.iter().map(|&j| names[j].clone()).collect();
    if meta.joints != expected {
        return Err(Error::JointSetMismatch(format!(
            "{stem} prior joints differ from the model's"
        )));
    }
    let t = read_tensors(&dir.join(format!("{stem}.poft")))?;
    let [a, mu] = t.as_slice() else {
        return Err(Error::Container(format!("{stem} prior needs two tensors")));
    };
    PosePrior::from_tensors(a, mu)
}

pub fn read_priors(dir: &Path, model: &BodyModel) -> Result<Priors> {
    let body = read_prior(dir, model, Network::Body)?;
    let left = if model.left_hand.is_some() {
        Some(read_prior(dir, model, Network::LeftHand)?)
    } else {
        None
    };
    Ok(Priors::new(body, left))
}

pub fn write_flow(path: &Path, targets: &FlowTargets) -> Result<()> {
    write_tensors(path, &[flow_to_tensor(targets)?])
}

pub fn read_flow(path: &Path) -> Result<FlowTargets> {
    let t = read_tensors(path)?;
    let [t] = t.as_slice() else {
        return Err(Error::Container(format!(
            "{}: expected one flow tensor",
            path.display()
        )));
    };
    flow_from_tensor(t)
}

/// Generate, render and write a complete sequence directory.
pub fn write_sequence(dir: &Path, config: &SequenceConfig) -> Result<SequenceManifest> {
    config.validate()?;
    let scene = &config.scene;
    let model = BodyModel::new(&scene.model)?;
    let frames = synth::generate_sequence(scene)?;
    for sub in ["obs", "flow", "prior"] {
        fs::create_dir_all(dir.join(sub))?;
    }
    if config.write_fields {
        fs::create_dir_all(dir.join("fields"))?;
    }
    let rendered: Vec<(usize, String, Option<String>)> = frames
        .par_iter()
        .enumerate()
        .map(|(i, f)| -> Result<_> {
            let r = synth::render_observation(&model, f, scene, i as u64)?;
            let obs = format!("obs/{}", frame_file(i, "poft"));
            write_observation(&dir.join(&obs), &r.observation)?;
            let fields = match (&r.fields, config.write_fields) {
                (Some(fl), true) => {
                    let name = format!("fields/{}", frame_file(i, "poft"));
                    write_fields(&dir.join(&name), fl)?;
                    Some(name)
                }
                _ => None,
            };
            Ok((r.degenerate_parts, obs, fields))
        })
        .collect::<Result<_>>()?;
    let mut flow = Vec::with_capacity(frames.len());
    for (i, f) in frames.iter().enumerate() {
        let name = format!("flow/{}", flow_file_name(i));
        let targets = synth::oracle_flow(
            &model,
            f,
            &scene.camera,
            config.flow_sigma,
            scene.seed,
            i as u64,
        );
        write_flow(&dir.join(&name), &targets)?;
        flow.push(name);
    }
    write_json(&dir.join("gt.json"), &frames)?;
    let priors = synth::train_priors(&model, scene.seed, config.prior_samples)?;
    let mut prior_files = write_prior(
        &dir.join("prior"),
        &model,
        Network::Body,
        &priors.body,
        config.prior_samples,
    )?;
    if let Some(lh) = &priors.left_hand {
        prior_files.extend(write_prior(
            &dir.join("prior"),
            &model,
            Network::LeftHand,
            lh,
            config.prior_samples,
        )?);
    }
    let manifest = SequenceManifest {
        schema: SEQUENCE_SCHEMA.to_string(),
        config: config.clone(),
        frames: frames.len(),
        gt: "gt.json".into(),
        degenerate_parts: rendered.iter().map(|r| r.0).collect(),
        observations: rendered.iter().map(|r| r.1.clone()).collect(),
        fields: config
            .write_fields
            .then(|| rendered.iter().filter_map(|r| r.2.clone()).collect()),
        flow,
        priors: prior_files,
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// A sequence directory opened for reading.
pub struct Sequence {
    pub dir: PathBuf,
    pub manifest: SequenceManifest,
    pub model: BodyModel,
}

impl Sequence {
    pub fn open(dir: &Path) -> Result<Self> {
        let path = dir.join("manifest.json");
        if !path.is_file() {
            return Err(Error::Config(format!(
                "{} is not a sequence directory (no manifest.json)",
                dir.display()
            )));
        }
        let manifest: SequenceManifest = read_json(&path)?;
        if manifest.schema != SEQUENCE_SCHEMA {
            return Err(Error::Container(format!(
                "unknown sequence schema {:?}",
                manifest.schema
            )));
        }
        if manifest.observations.len() != manifest.frames {
            return Err(Error::Container(
                "manifest lists the wrong number of observations".into(),
            ));
        }
        let model = BodyModel::new(&manifest.config.scene.model)?;
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            model,
        })
    }

    pub fn len(&self) -> usize {
        self.manifest.frames
    }

    pub fn is_empty(&self) -> bool {
        self.manifest.frames == 0
    }

    pub fn observation(&self, index: usize) -> Result<FrameObservation> {
        read_observation(&self.dir.join(&self.manifest.observations[index]))
    }

    pub fn ground_truth(&self) -> Result<Vec<GtFrame>> {
        let gt: Vec<GtFrame> = read_json(&self.dir.join(&self.manifest.gt))?;
        if gt.len() != self.manifest.frames {
            return Err(Error::Container(format!(
                "gt.json has {} frames, manifest {}",
                gt.len(),
                self.manifest.frames
            )));
        }
        Ok(gt)
    }

    pub fn priors(&self) -> Result<Priors> {
        read_priors(&self.dir.join("prior"), &self.model)
    }

    pub fn flow_dir(&self) -> PathBuf {
        self.dir.join("flow")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;
    use crate::synth::RenderMode;

    fn small() -> SequenceConfig {
        SequenceConfig {
            scene: SceneConfig {
                seed: 4,
                n_frames: 2,
                model: ModelSpec {
                    expression_dim: 5,
                    ..ModelSpec::default()
                },
                render: RenderMode::Direct,
                ..SceneConfig::default()
            },
            prior_samples: 500,
            ..SequenceConfig::default()
        }
    }

    #[test]
    fn observation_round_trip() {
        let cfg = small();
        let model = BodyModel::new(&cfg.scene.model).unwrap();
        let gt = synth::generate_sequence(&cfg.scene).unwrap();
        let mut obs = synth::render_observation(&model, &gt[0], &cfg.scene, 0)
            .unwrap()
            .observation;
        obs.body.keypoints[3] = Keypoint::absent();
        obs.right_hand = None;
        let back = observation_from_tensors(&observation_to_tensors(&obs).unwrap()).unwrap();
        assert_eq!(back, obs);
    }

    #[test]
    fn sequence_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small();
        let m = write_sequence(dir.path(), &cfg).unwrap();
        let seq = Sequence::open(dir.path()).unwrap();
        assert_eq!(seq.manifest, m);
        assert_eq!(seq.len(), 2);
        let gt = seq.ground_truth().unwrap();
        assert_eq!(gt, synth::generate_sequence(&cfg.scene).unwrap());
        let obs = seq.observation(1).unwrap();
        assert_eq!(
            obs,
            synth::render_observation(&seq.model, &gt[1], &cfg.scene, 1)
                .unwrap()
                .observation
        );
        let priors = seq.priors().unwrap();
        assert_eq!(priors, synth::train_priors(&seq.model, 4, 500).unwrap());
        let flow = read_flow(&seq.flow_dir().join(flow_file_name(0))).unwrap();
        assert_eq!(flow.targets.len(), seq.model.skeleton.marker_count());
    }

    #[test]
    fn fields_are_written_on_request() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = small();
        cfg.scene.render = RenderMode::Fields;
        cfg.scene.model = ModelSpec::body_only();
        cfg.scene.n_frames = 1;
        cfg.write_fields = true;
        let m = write_sequence(dir.path(), &cfg).unwrap();
        let files = m.fields.unwrap();
        let body = read_body_fields(&dir.path().join(&files[0])).unwrap();
        let model = BodyModel::new(&cfg.scene.model).unwrap();
        let decoded = body
            .decode(model.body.skeleton.parts(), cfg.scene.fields.threshold)
            .unwrap();
        let seq = Sequence::open(dir.path()).unwrap();
        assert_eq!(
            decoded.keypoints,
            seq.observation(0).unwrap().body.keypoints
        );
    }

    #[test]
    fn corrupt_observation_is_a_container_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.poft");
        fs::write(&path, b"POFT garbage").unwrap();
        assert!(matches!(read_observation(&path), Err(Error::Container(_))));
        assert!(matches!(Sequence::open(dir.path()), Err(Error::Config(_))));
    }
}
