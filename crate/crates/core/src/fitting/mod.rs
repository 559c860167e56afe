//! Per-frame model fitting: staged Levenberg-Marquardt over 2D keypoint,
//! orientation, prior and regularization terms.

pub mod lm;
pub mod schedule;
pub mod system;

use std::collections::{BTreeMap, BTreeSet};

use nalgebra::{DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::model::{BodyModel, ModelSpec, Network};
use crate::pofield::{FrameObservation, Observation, Orientation};
use crate::prior::PosePrior;
use crate::skeleton::ModelParams;
use crate::so3;

pub use lm::{solve_lm, LeastSquares, LmReport, LmSettings};
pub use schedule::{Block, JointSet, Stage, StageSchedule};
pub use system::{Evaluator, FlowTarget, FlowTargets, Freeze, Rows, System, TrackTerms};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Weights {
    pub w2d_body: f64,
    pub wpof_body: f64,
    pub wprior_body: f64,
    pub w2d_hand: f64,
    pub wpof_hand: f64,
    pub wprior_hand: f64,
    pub w_toes: f64,
    pub w_face: f64,
    pub w_phi: f64,
    pub w_sigma: f64,
}

impl Default for Weights {
    fn default() -> Self {
        Self {
            w2d_body: 1.0,
            wpof_body: 22500.0,
            wprior_body: 200.0,
            w2d_hand: 1.0,
            wpof_hand: 2500.0,
            wprior_hand: 10.0,
            w_toes: 1.0,
            w_face: 1.0,
            w_phi: 0.01,
            w_sigma: 100.0,
        }
    }
}

impl Weights {
    pub fn validate(&self) -> Result<()> {
        let all = [
            self.w2d_body,
            self.wpof_body,
            self.wprior_body,
            self.w2d_hand,
            self.wpof_hand,
            self.wprior_hand,
            self.w_toes,
            self.w_face,
            self.w_phi,
            self.w_sigma,
        ];
        if all.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::Config(format!(
                "weights must be finite and non-negative: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    pub model: ModelSpec,
    pub camera: Camera,
    pub weights: Weights,
    pub schedule: StageSchedule,
    pub solver: LmSettings,
    /// Root depth used to initialize `t` (cm).
    pub default_depth: f64,
    /// Replace missing torso and leg orientations with straight down.
    pub assume_vertical_legs: bool,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: ModelSpec::default(),
            camera: Camera::weak(1.8, 184.0, 184.0),
            weights: Weights::default(),
            schedule: StageSchedule::default(),
            solver: LmSettings::default(),
            default_depth: 300.0,
            assume_vertical_legs: false,
        }
    }
}

/// Pose priors for the body and (left) hand; the right-hand prior is the mirror image.
#[derive(Debug, Clone, PartialEq)]
pub struct Priors {
    pub body: PosePrior,
    pub left_hand: Option<PosePrior>,
    pub right_hand: Option<PosePrior>,
}

impl Priors {
    pub fn new(body: PosePrior, left_hand: Option<PosePrior>) -> Self {
        let right_hand = left_hand.as_ref().map(mirror_prior);
        Self {
            body,
            left_hand,
            right_hand,
        }
    }

    fn check(&self, model: &BodyModel) -> Result<()> {
        let expect = |net: Network, prior: Option<&PosePrior>| -> Result<()> {
            let (Some(joints), Some(prior)) = (model.prior_joints(net), prior) else {
                return Ok(());
            };
            prior.validate()?;
            if prior.dim() != 3 * joints.len() {
                return Err(Error::Dimension(format!(
                    "{} prior has {} dims, model needs {}",
                    net.label(),
                    prior.dim(),
                    3 * joints.len()
                )));
            }
            Ok(())
        };
        expect(Network::Body, Some(&self.body))?;
        if model.left_hand.is_some() && self.left_hand.is_none() {
            return Err(Error::Config(
                "model has hands but no hand prior was given".into(),
            ));
        }
        expect(Network::LeftHand, self.left_hand.as_ref())?;
        expect(Network::RightHand, self.right_hand.as_ref())
    }
}

/// Prior over the mirror image of each pose: reflecting through x = 0 maps
/// an axis-angle `(x, y, z)` to `(x, -y, -z)`.
pub fn mirror_prior(p: &PosePrior) -> PosePrior {
    let d = DVector::from_fn(p.dim(), |i, _| if i % 3 == 0 { 1.0 } else { -1.0 });
    PosePrior {
        a: &p.a * nalgebra::DMatrix::from_diagonal(&d),
        mu: p.mu.component_mul(&d),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub name: String,
    pub initial_cost: f64,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub params: ModelParams,
    /// Cost of the final stage objective.
    pub cost: f64,
    pub block_costs: BTreeMap<String, f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stages: Vec<StageReport>,
}

pub struct Fitter {
    pub model: BodyModel,
    pub priors: Priors,
    pub config: FitConfig,
    stage_joints: Vec<BTreeSet<usize>>,
}

impl Fitter {
    pub fn new(config: FitConfig, priors: Priors) -> Result<Self> {
        config.camera.validate()?;
        config.weights.validate()?;
        let model = BodyModel::new(&config.model)?;
        priors.check(&model)?;
        let stage_joints = config.schedule.validate(&model)?;
        Ok(Self {
            model,
            priors,
            config,
            stage_joints,
        })
    }

    /// Observation with the configured orientation assumptions applied.
    pub fn prepare(&self, obs: &FrameObservation) -> FrameObservation {
        let mut obs = obs.clone();
        if self.config.assume_vertical_legs {
            assume_vertical_legs(&mut obs.body, &self.model);
        }
        obs
    }

    /// Default start: prior means, unit shape, zero expression, root rotation
    /// aligned to the observed torso orientations and `t` under the root keypoint.
    pub fn initial_params(&self, obs: &FrameObservation) -> ModelParams {
        let model = &self.model;
        let mut p = model.rest_params();
        for (net, prior) in [
            (Network::Body, Some(&self.priors.body)),
            (Network::LeftHand, self.priors.left_hand.as_ref()),
            (Network::RightHand, self.priors.right_hand.as_ref()),
        ] {
            if let (Some(joints), Some(prior)) = (model.prior_joints(net), prior) {
                for (k, &j) in joints.iter().enumerate() {
                    p.theta[j] =
                        Vector3::new(prior.mu[3 * k], prior.mu[3 * k + 1], prior.mu[3 * k + 2]);
                }
            }
        }
        let root = model.skeleton.root();
        if let Some(r) = torso_alignment(model, &obs.body.orientations) {
            p.theta[root] = so3::log(&r);
        }
        let body = &model.body;
        let root_obs = body
            .joints
            .iter()
            .position(|&j| j == root)
            .and_then(|i| obs.body.keypoints.get(i));
        let anchor = match root_obs {
            Some(kp) if kp.present => Some(kp.position),
            _ => {
                let present: Vec<_> = obs
                    .body
                    .keypoints
                    .iter()
                    .filter(|k| k.present)
                    .map(|k| k.position)
                    .collect();
                (!present.is_empty()).then(|| {
                    present
                        .iter()
                        .fold(nalgebra::Vector2::zeros(), |a, b| a + b)
                        / present.len() as f64
                })
            }
        };
        let uv = anchor.unwrap_or_else(|| self.config.camera.principal_point());
        p.t = self.config.camera.unproject(&uv, self.config.default_depth);
        p
    }

    fn system<'a>(
        &'a self,
        obs: &'a FrameObservation,
        stage: usize,
        base: ModelParams,
    ) -> Result<System<'a>> {
        let s = &self.config.schedule.stages[stage];
        System::new(
            &self.model,
            &self.priors,
            &self.config.camera,
            self.config.weights,
            obs,
            s.blocks.clone(),
            self.stage_joints[stage].clone(),
            base,
            Freeze::default(),
            None,
        )
    }

    /// Costs of the final stage objective (every frame block over every joint).
    pub fn objective(
        &self,
        obs: &FrameObservation,
        params: &ModelParams,
    ) -> Result<BTreeMap<String, f64>> {
        let obs = self.prepare(obs);
        let last = self.config.schedule.stages.len() - 1;
        let sys = self.system(&obs, last, params.clone())?;
        Ok(sys
            .block_costs(params)?
            .into_iter()
            .map(|(b, c)| (b.label().to_string(), c))
            .collect())
    }

    pub fn fit_frame(
        &self,
        obs: &FrameObservation,
        init: Option<&ModelParams>,
    ) -> Result<FitResult> {
        let obs = self.prepare(obs);
        let mut params = match init {
            Some(p) => {
                self.model.check_params(p)?;
                p.clone()
            }
            None => self.initial_params(&obs),
        };
        let mut stages = Vec::with_capacity(self.config.schedule.stages.len());
        let mut iterations = 0;
        let mut last_cost = 0.0;
        let mut block_costs = BTreeMap::new();
        for (k, stage) in self.config.schedule.stages.iter().enumerate() {
            let sys = self.system(&obs, k, params.clone())?;
            let settings = LmSettings {
                max_iter: stage.max_iter,
                ..self.config.solver
            };
            let rep = solve_lm(&sys, sys.initial_x(), &settings)?;
            params = sys.params_at(&rep.x);
            iterations += rep.iterations;
            last_cost = rep.cost;
            stages.push(StageReport {
                name: stage.name.clone(),
                initial_cost: rep.initial_cost,
                cost: rep.cost,
                iterations: rep.iterations,
                converged: rep.converged,
            });
            if k + 1 == self.config.schedule.stages.len() {
                block_costs = sys
                    .block_costs(&params)?
                    .into_iter()
                    .map(|(b, c)| (b.label().to_string(), c))
                    .collect();
            }
        }
        Ok(FitResult {
            params,
            cost: last_cost,
            block_costs,
            iterations,
            converged: stages.last().is_some_and(|s| s.converged),
            stages,
        })
    }
}

/// Body parts (by name) assumed to hang straight down when unobserved.
pub const VERTICAL_PARTS: [(&str, &str); 6] = [
    ("neck", "r_hip"),
    ("r_hip", "r_knee"),
    ("r_knee", "r_ankle"),
    ("neck", "l_hip"),
    ("l_hip", "l_knee"),
    ("l_knee", "l_ankle"),
];

/// Fill absent torso and leg orientations with the image-down axis `(0, 1, 0)`.
pub fn assume_vertical_legs(obs: &mut Observation, model: &BodyModel) {
    let skel = &model.body.skeleton;
    for (p, &(m, n)) in skel.parts().iter().enumerate() {
        let names = (
            skel.joints()[m].name.as_str(),
            skel.joints()[n].name.as_str(),
        );
        if VERTICAL_PARTS.contains(&names) && !obs.orientations[p].present {
            obs.orientations[p] = Orientation::of(Vector3::y());
        }
    }
}

/// Rotation taking the template torso directions onto the observed ones
/// (least squares over the present torso parts), when at least two are seen.
fn torso_alignment(model: &BodyModel, orientations: &[Orientation]) -> Option<Matrix3<f64>> {
    let skel = &model.body.skeleton;
    let root = skel.root();
    let mut h = Matrix3::zeros();
    let mut count = 0;
    for (p, &(m, n)) in skel.parts().iter().enumerate() {
        let o = orientations.get(p)?;
        if m != root
            || !o.present
            || !schedule::TORSO_JOINTS.contains(&skel.joints()[n].name.as_str())
        {
            continue;
        }
        let a = skel.template_offset(n).normalize();
        h += a * o.direction.transpose();
        count += 1;
    }
    if count < 2 {
        return None;
    }
    let svd = h.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    let v = v_t.transpose();
    let d = (v * u.transpose()).determinant().signum();
    Some(v * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, d)) * u.transpose())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prior::DEFAULT_EPS;

    fn simple_priors(model: &BodyModel) -> Priors {
        let dim = |net| 3 * model.prior_joints(net).map_or(0, |j| j.len());
        let body = PosePrior::identity(DVector::zeros(dim(Network::Body)));
        let hand = model
            .left_hand
            .as_ref()
            .map(|_| PosePrior::identity(DVector::zeros(dim(Network::LeftHand))));
        Priors::new(body, hand)
    }

    #[test]
    fn mirrored_prior_scores_mirrored_poses_equally() {
        let samples: Vec<DVector<f64>> = (0..10)
            .map(|i| DVector::from_fn(6, |k, _| ((i * 7 + k * 3) % 11) as f64 * 0.1 - 0.5))
            .collect();
        let p = PosePrior::fit(&samples, DEFAULT_EPS).unwrap();
        let m = mirror_prior(&p);
        let theta = DVector::from_vec(vec![0.2, -0.1, 0.4, 0.3, 0.0, -0.2]);
        let mirrored = DVector::from_fn(6, |i, _| if i % 3 == 0 { theta[i] } else { -theta[i] });
        let a = p.mahalanobis_sq(&theta).unwrap();
        let b = m.mahalanobis_sq(&mirrored).unwrap();
        assert!((a - b).abs() < 1e-9);
    }

    #[test]
    fn torso_alignment_recovers_a_rotation() {
        let model = BodyModel::new(&ModelSpec::body_only()).unwrap();
        let r = so3::exp(&Vector3::new(0.3, -1.1, 0.4));
        let skel = &model.body.skeleton;
        let orientations: Vec<Orientation> = skel
            .parts()
            .iter()
            .map(|&(m, n)| {
                if m == skel.root() {
                    Orientation::of(r * skel.template_offset(n).normalize())
                } else {
                    Orientation::absent()
                }
            })
            .collect();
        let est = torso_alignment(&model, &orientations).unwrap();
        assert!((est - r).abs().max() < 1e-9);
    }

    #[test]
    fn default_config_builds_a_fitter() {
        let model = BodyModel::new(&ModelSpec::default()).unwrap();
        let fitter = Fitter::new(FitConfig::default(), simple_priors(&model)).unwrap();
        assert_eq!(fitter.model.skeleton.joint_count(), 58);
        let err = Fitter::new(
            FitConfig::default(),
            Priors::new(PosePrior::identity(DVector::zeros(3)), None),
        );
        assert!(err.is_err());
    }

    #[test]
    fn empty_observation_has_no_constraints() {
        let cfg = FitConfig {
            model: ModelSpec::body_only(),
            ..FitConfig::default()
        };
        let model = BodyModel::new(&cfg.model).unwrap();
        let fitter = Fitter::new(cfg, simple_priors(&model)).unwrap();
        let obs = FrameObservation {
            body: Observation::empty(18, 17),
            ..Default::default()
        };
        let err = fitter.fit_frame(&obs, None).unwrap_err();
        assert!(err.to_string().contains("no constraints"));
    }
}
