//! Recursive temporal refinement: each frame is re-solved against flow
//! targets for its surface markers, depth smoothness with the previous
//! refined frame, and its own orientation and face observations.

use std::collections::BTreeSet;
use std::path::PathBuf;

use nalgebra::{Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::container::{read_tensors, Tensor};
use crate::error::{Error, Result};
use crate::fitting::{
    solve_lm, Block, FlowTarget, FlowTargets, Freeze, LmSettings, Priors, System, TrackTerms,
    Weights,
};
use crate::model::BodyModel;
use crate::pofield::FrameObservation;
use crate::skeleton::ModelParams;
use crate::synth::{self, GtFrame};

/// Supplies flow targets for frame `index` given the refined previous frame
/// and the per-frame fit of the current one.
pub trait FlowProvider {
    fn targets(
        &self,
        previous: &ModelParams,
        current: &ModelParams,
        index: usize,
    ) -> Result<FlowTargets>;
}

/// Targets at the current projections of every marker: the refinement's
/// fixed point.
pub struct IdentityFlow<'a> {
    pub model: &'a BodyModel,
    pub camera: Camera,
}

impl FlowProvider for IdentityFlow<'_> {
    fn targets(
        &self,
        _previous: &ModelParams,
        current: &ModelParams,
        _index: usize,
    ) -> Result<FlowTargets> {
        let posed = self.model.pose(current)?;
        let targets = posed
            .markers(&self.model.skeleton)
            .iter()
            .map(|m| match self.camera.project_point(&m.position) {
                Ok(uv) => FlowTarget {
                    position: uv,
                    valid: true,
                },
                Err(_) => FlowTarget {
                    position: Vector2::zeros(),
                    valid: false,
                },
            })
            .collect();
        Ok(FlowTargets { targets })
    }
}

/// Targets from ground-truth markers with Gaussian pixel noise.
pub struct OracleFlow<'a> {
    pub model: &'a BodyModel,
    pub camera: Camera,
    pub frames: &'a [GtFrame],
    pub sigma: f64,
    pub seed: u64,
}

impl FlowProvider for OracleFlow<'_> {
    fn targets(
        &self,
        _previous: &ModelParams,
        _current: &ModelParams,
        index: usize,
    ) -> Result<FlowTargets> {
        let frame = self
            .frames
            .get(index)
            .ok_or_else(|| Error::Flow(format!("no ground truth for frame {index}")))?;
        Ok(synth::oracle_flow(
            self.model,
            frame,
            &self.camera,
            self.sigma,
            self.seed,
            index as u64,
        ))
    }
}

/// Targets computed elsewhere, one POFT file per frame.
pub struct FileFlow {
    pub dir: PathBuf,
    pub markers: usize,
}

impl FileFlow {
    pub fn path(&self, index: usize) -> PathBuf {
        self.dir.join(flow_file_name(index))
    }
}

pub fn flow_file_name(index: usize) -> String {
    format!("{index:06}.poft")
}

impl FlowProvider for FileFlow {
    fn targets(
        &self,
        _previous: &ModelParams,
        _current: &ModelParams,
        index: usize,
    ) -> Result<FlowTargets> {
        let path = self.path(index);
        let tensors =
            read_tensors(&path).map_err(|e| Error::Flow(format!("{}: {e}", path.display())))?;
        let [t] = tensors.as_slice() else {
            return Err(Error::Flow(format!(
                "{}: expected one tensor",
                path.display()
            )));
        };
        let targets =
            flow_from_tensor(t).map_err(|e| Error::Flow(format!("{}: {e}", path.display())))?;
        if targets.targets.len() != self.markers {
            return Err(Error::Flow(format!(
                "{}: {} targets for {} markers",
                path.display(),
                targets.targets.len(),
                self.markers
            )));
        }
        Ok(targets)
    }
}

/// `[n, 3]` f64 rows of `(u, v, valid)`.
pub fn flow_to_tensor(targets: &FlowTargets) -> Result<Tensor> {
    let data = targets
        .targets
        .iter()
        .flat_map(|t| [t.position.x, t.position.y, if t.valid { 1.0 } else { 0.0 }])
        .collect();
    Tensor::f64(vec![targets.targets.len(), 3], data)
}

pub fn flow_from_tensor(t: &Tensor) -> Result<FlowTargets> {
    if t.dims.len() != 2 || t.dims[1] != 3 {
        return Err(Error::Container(format!(
            "flow tensor must be [n, 3], got {:?}",
            t.dims
        )));
    }
    let v = t.to_f64();
    let targets: Vec<FlowTarget> = v
        .chunks_exact(3)
        .map(|c| FlowTarget {
            position: Vector2::new(c[0], c[1]),
            valid: c[2] != 0.0,
        })
        .collect();
    if targets
        .iter()
        .any(|t| t.valid && !(t.position.x.is_finite() && t.position.y.is_finite()))
    {
        return Err(Error::Container("flow targets must be finite".into()));
    }
    Ok(FlowTargets { targets })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackConfig {
    pub w_tex: f64,
    pub w_dz: f64,
    /// Scale on the per-frame body POF weight.
    pub pof_scale_body: f64,
    /// Scale on the per-frame hand POF weights.
    pub pof_scale_hand: f64,
    pub w_face: f64,
    pub max_iter: usize,
}

impl Default for TrackConfig {
    fn default() -> Self {
        Self {
            w_tex: 1.0,
            w_dz: 0.25,
            pof_scale_body: 25.0,
            pof_scale_hand: 1.0,
            w_face: 1.0,
            max_iter: 30,
        }
    }
}

impl TrackConfig {
    pub fn validate(&self) -> Result<()> {
        let w = [
            self.w_tex,
            self.w_dz,
            self.pof_scale_body,
            self.pof_scale_hand,
            self.w_face,
        ];
        if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Config(format!(
                "tracking weights must be finite and non-negative: {self:?}"
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::Config("tracking max_iter must be positive".into()));
        }
        Ok(())
    }

    fn weights(&self) -> Weights {
        let base = Weights::default();
        Weights {
            wpof_body: self.pof_scale_body * base.wpof_body,
            wpof_hand: self.pof_scale_hand * base.wpof_hand,
            w_face: self.w_face,
            ..base
        }
    }
}

pub const TRACK_BLOCKS: [Block; 5] = [
    Block::Tex,
    Block::DepthSmooth,
    Block::BodyPof,
    Block::HandPof,
    Block::Face,
];

/// One input frame: its observation and per-frame fit.
#[derive(Debug, Clone)]
pub struct TrackFrame {
    pub observation: FrameObservation,
    pub params: ModelParams,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RefinedFrame {
    pub params: ModelParams,
    pub refined: bool,
    /// Why the frame passed through unrefined, if it did.
    pub flag: Option<String>,
    pub iterations: usize,
    pub converged: bool,
}

/// Refine a sequence in order. Frame 0 is the anchor and is copied as is;
/// every later frame takes shape and expression from it and keeps them fixed.
pub fn refine_sequence(
    model: &BodyModel,
    priors: &Priors,
    camera: &Camera,
    frames: &[TrackFrame],
    provider: &dyn FlowProvider,
    config: &TrackConfig,
    solver: &LmSettings,
) -> Result<Vec<RefinedFrame>> {
    config.validate()?;
    camera.validate()?;
    let mut out: Vec<RefinedFrame> = Vec::with_capacity(frames.len());
    let Some(anchor) = frames.first() else {
        return Ok(out);
    };
    model.check_params(&anchor.params)?;
    out.push(RefinedFrame {
        params: anchor.params.clone(),
        refined: false,
        flag: None,
        iterations: 0,
        converged: true,
    });
    let all: BTreeSet<usize> = (0..model.skeleton.joint_count()).collect();
    let weights = config.weights();
    let settings = LmSettings {
        max_iter: config.max_iter,
        ..*solver
    };
    for (i, frame) in frames.iter().enumerate().skip(1) {
        model.check_params(&frame.params)?;
        let previous = &out[i - 1].params;
        let mut init = frame.params.clone();
        init.phi.clone_from(&anchor.params.phi);
        init.sigma.clone_from(&anchor.params.sigma);
        let targets = match provider.targets(previous, &init, i) {
            Ok(t) => t,
            Err(e) => {
                out.push(pass_through(frame, e.to_string()));
                continue;
            }
        };
        let prev_z = model
            .pose(previous)?
            .positions
            .iter()
            .map(|p| p.z)
            .collect();
        let track = TrackTerms {
            targets,
            prev_z,
            w_tex: config.w_tex,
            w_dz: config.w_dz,
        };
        let sys = match System::new(
            model,
            priors,
            camera,
            weights,
            &frame.observation,
            TRACK_BLOCKS.to_vec(),
            all.clone(),
            init,
            Freeze {
                phi: true,
                sigma: true,
            },
            Some(track),
        ) {
            Ok(s) => s,
            Err(e @ (Error::NoConstraints | Error::Dimension(_))) => {
                out.push(pass_through(frame, e.to_string()));
                continue;
            }
            Err(e) => return Err(e),
        };
        match solve_lm(&sys, sys.initial_x(), &settings) {
            Ok(rep) => out.push(RefinedFrame {
                params: sys.params_at(&rep.x),
                refined: true,
                flag: None,
                iterations: rep.iterations,
                converged: rep.converged,
            }),
            Err(e @ (Error::NonFiniteResidual | Error::Singular(_))) => {
                out.push(pass_through(frame, e.to_string()))
            }
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

fn pass_through(frame: &TrackFrame, reason: String) -> RefinedFrame {
    RefinedFrame {
        params: frame.params.clone(),
        refined: false,
        flag: Some(reason),
        iterations: 0,
        converged: false,
    }
}

/// Mean norm of the second temporal difference of joint positions over
/// interior frames and joints.
pub fn jitter(sequence: &[Vec<Vector3<f64>>]) -> f64 {
    if sequence.len() < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for w in sequence.windows(3) {
        for ((a, b), c) in w[0].iter().zip(&w[1]).zip(&w[2]) {
            total += (c - 2.0 * b + a).norm();
            count += 1;
        }
    }
    if count == 0 {
        0.0
    } else {
        total / count as f64
    }
}

/// Joint positions of every frame.
pub fn joint_tracks(model: &BodyModel, params: &[ModelParams]) -> Result<Vec<Vec<Vector3<f64>>>> {
    params
        .iter()
        .map(|p| Ok(model.pose(p)?.positions))
        .collect()
}
