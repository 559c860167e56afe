//! The articulated model used for fitting: the body skeleton with optional
//! hands grafted at the wrists, foot landmarks on the ankles and a linear
//! face landmark model on the head.

use nalgebra::{DMatrix, Vector3};
use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::{ParamLayout, Posed};
use crate::skeleton::{ModelParams, SkeletonDef};

/// Which keypoint network an observation came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Network {
    Body,
    LeftHand,
    RightHand,
}

impl Network {
    pub const ALL: [Network; 3] = [Network::Body, Network::LeftHand, Network::RightHand];

    pub fn label(self) -> &'static str {
        match self {
            Network::Body => "body",
            Network::LeftHand => "left_hand",
            Network::RightHand => "right_hand",
        }
    }
}

/// A network skeleton and where its joints and parts live in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkMap {
    pub skeleton: SkeletonDef,
    /// Network joint index -> model joint index.
    pub joints: Vec<usize>,
    /// Network part index -> model part index.
    pub parts: Vec<usize>,
}

/// A point with a fixed offset in the frame of a model joint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Landmark {
    pub joint: usize,
    pub offset: Vector3<f64>,
}

/// Face landmarks: rigid offsets in the head frame plus a linear expression basis.
#[derive(Debug, Clone, PartialEq)]
pub struct FaceModel {
    pub anchor: usize,
    pub offsets: Vec<Vector3<f64>>,
    /// `3L x K` displacement basis (cm per unit coefficient), landmark-major rows.
    pub basis: DMatrix<f64>,
}

impl FaceModel {
    pub fn landmark_count(&self) -> usize {
        self.offsets.len()
    }

    pub fn expression_dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Local (head-frame) offset of landmark `l` under expression `sigma`.
    pub fn local_offset(&self, l: usize, sigma: &[f64]) -> Vector3<f64> {
        let mut o = self.offsets[l];
        for (k, s) in sigma.iter().enumerate() {
            if *s != 0.0 {
                o += Vector3::new(
                    self.basis[(3 * l, k)],
                    self.basis[(3 * l + 1, k)],
                    self.basis[(3 * l + 2, k)],
                ) * *s;
            }
        }
        o
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub hands: bool,
    pub toes: bool,
    pub face: bool,
    /// Number of expression coefficients.
    pub expression_dim: usize,
    /// Seed of the random semi-orthogonal expression basis.
    pub face_basis_seed: u64,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            hands: true,
            toes: true,
            face: true,
            expression_dim: 200,
            face_basis_seed: 17,
        }
    }
}

impl ModelSpec {
    pub fn body_only() -> Self {
        Self {
            hands: false,
            toes: false,
            face: false,
            expression_dim: 0,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BodyModel {
    pub spec: ModelSpec,
    pub skeleton: SkeletonDef,
    pub body: NetworkMap,
    pub left_hand: Option<NetworkMap>,
    pub right_hand: Option<NetworkMap>,
    /// Right big toe, right small toe, right heel, then the same for the left foot.
    pub toes: Vec<Landmark>,
    pub face: Option<FaceModel>,
}

pub const TOE_NAMES: [&str; 6] = [
    "r_big_toe",
    "r_small_toe",
    "r_heel",
    "l_big_toe",
    "l_small_toe",
    "l_heel",
];

impl BodyModel {
    pub fn new(spec: &ModelSpec) -> Result<Self> {
        let body_def = SkeletonDef::body();
        let mut skeleton = body_def.clone();
        let body = NetworkMap {
            joints: (0..body_def.joint_count()).collect(),
            parts: (0..body_def.part_count()).collect(),
            skeleton: body_def.clone(),
        };
        let joint = |name: &str| {
            body_def
                .joint_index(name)
                .ok_or_else(|| Error::InvalidSkeleton(format!("body skeleton lacks {name}")))
        };
        let (mut left_hand, mut right_hand) = (None, None);
        if spec.hands {
            for (hand_def, wrist, prefix) in [
                (SkeletonDef::left_hand(), joint("l_wrist")?, "lh_"),
                (SkeletonDef::right_hand(), joint("r_wrist")?, "rh_"),
            ] {
                let (merged, joints, parts) = skeleton.attach(&hand_def, wrist, prefix)?;
                skeleton = merged;
                let map = NetworkMap {
                    skeleton: hand_def,
                    joints,
                    parts,
                };
                if prefix == "lh_" {
                    left_hand = Some(map);
                } else {
                    right_hand = Some(map);
                }
            }
        }
        let toes = if spec.toes {
            let (ra, la) = (joint("r_ankle")?, joint("l_ankle")?);
            let foot = [
                Vector3::new(2.0, 7.0, -15.0),
                Vector3::new(-4.0, 7.0, -12.0),
                Vector3::new(0.0, 8.0, 4.0),
            ];
            let mut v: Vec<Landmark> = foot
                .iter()
                .map(|o| Landmark {
                    joint: ra,
                    offset: *o,
                })
                .collect();
            v.extend(foot.iter().map(|o| Landmark {
                joint: la,
                offset: Vector3::new(-o.x, o.y, o.z),
            }));
            v
        } else {
            Vec::new()
        };
        let face = if spec.face {
            let offsets = face_layout();
            let basis =
                semi_orthogonal(3 * offsets.len(), spec.expression_dim, spec.face_basis_seed);
            Some(FaceModel {
                anchor: joint("nose")?,
                offsets,
                basis,
            })
        } else {
            None
        };
        Ok(Self {
            spec: spec.clone(),
            skeleton,
            body,
            left_hand,
            right_hand,
            toes,
            face,
        })
    }

    pub fn expression_dim(&self) -> usize {
        self.face.as_ref().map_or(0, FaceModel::expression_dim)
    }

    pub fn layout(&self) -> ParamLayout {
        ParamLayout::new(&self.skeleton, self.expression_dim())
    }

    pub fn rest_params(&self) -> ModelParams {
        ModelParams::rest(&self.skeleton, self.expression_dim())
    }

    pub fn network(&self, net: Network) -> Option<&NetworkMap> {
        match net {
            Network::Body => Some(&self.body),
            Network::LeftHand => self.left_hand.as_ref(),
            Network::RightHand => self.right_hand.as_ref(),
        }
    }

    pub fn check_params(&self, params: &ModelParams) -> Result<()> {
        params.check(&self.skeleton)?;
        if params.sigma.len() != self.expression_dim() {
            return Err(Error::Dimension(format!(
                "sigma has {} entries, the face basis has {}",
                params.sigma.len(),
                self.expression_dim()
            )));
        }
        Ok(())
    }

    pub fn pose(&self, params: &ModelParams) -> Result<Posed> {
        self.check_params(params)?;
        Posed::new(params, &self.skeleton)
    }

    pub fn toe_positions(&self, posed: &Posed) -> Vec<Vector3<f64>> {
        self.toes
            .iter()
            .map(|l| posed.attached(l.joint, &l.offset))
            .collect()
    }

    pub fn face_positions(&self, posed: &Posed, sigma: &[f64]) -> Vec<Vector3<f64>> {
        match &self.face {
            Some(face) => (0..face.landmark_count())
                .map(|l| posed.attached(face.anchor, &face.local_offset(l, sigma)))
                .collect(),
            None => Vec::new(),
        }
    }

    /// Positions of a network's joints, in network order.
    pub fn network_joints(&self, net: Network, posed: &Posed) -> Option<Vec<Vector3<f64>>> {
        self.network(net)
            .map(|map| map.joints.iter().map(|&j| posed.positions[j]).collect())
    }

    /// Whether `theta[joint]` moves anything the model can observe.
    pub fn joint_is_influential(&self, joint: usize) -> bool {
        !self.skeleton.children(joint).is_empty()
            || self.toes.iter().any(|l| l.joint == joint)
            || self.face.as_ref().is_some_and(|f| f.anchor == joint)
    }

    /// Model joints covered by the pose prior of a network (all but the network root).
    pub fn prior_joints(&self, net: Network) -> Option<Vec<usize>> {
        self.network(net).map(|map| {
            let root = map.skeleton.root();
            map.joints
                .iter()
                .enumerate()
                .filter(|(i, _)| *i != root)
                .map(|(_, &j)| j)
                .collect()
        })
    }
}

/// 41 face landmarks (brows, eyes, nose, mouth) in the frame of the nose joint, cm.
pub fn face_layout() -> Vec<Vector3<f64>> {
    let mut pts = Vec::with_capacity(41);
    for side in [-1.0, 1.0] {
        for i in 0..5 {
            let x = side * (1.5 + i as f64);
            let y = -5.5 - 0.4 * (1.0 - ((i as f64 - 2.0) / 2.0).powi(2));
            pts.push(Vector3::new(x, y, 2.2));
        }
    }
    for side in [-1.0, 1.0] {
        for i in 0..6 {
            let a = std::f64::consts::TAU * i as f64 / 6.0;
            pts.push(Vector3::new(
                side * 3.2 + 1.2 * a.cos(),
                -3.5 + 0.5 * a.sin(),
                2.6,
            ));
        }
    }
    for i in 0..4 {
        let f = i as f64 / 3.0;
        pts.push(Vector3::new(0.0, -3.5 + 3.0 * f, 1.5 - 1.3 * f));
    }
    for i in 0..5 {
        pts.push(Vector3::new(-1.5 + 0.75 * i as f64, 0.8, 1.0));
    }
    for i in 0..10 {
        let a = std::f64::consts::TAU * i as f64 / 10.0;
        pts.push(Vector3::new(2.5 * a.cos(), 4.0 + 1.0 * a.sin(), 1.5));
    }
    pts
}

/// Random matrix with orthonormal columns (or rows, when `cols > rows`).
pub fn semi_orthogonal(rows: usize, cols: usize, seed: u64) -> DMatrix<f64> {
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(rows, cols);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = if cols <= rows {
        (rows, cols)
    } else {
        (cols, rows)
    };
    let g = DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(&mut rng));
    let q = g.qr().q();
    if cols <= rows {
        q
    } else {
        q.transpose()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_model_composition() {
        let model = BodyModel::new(&ModelSpec::default()).unwrap();
        assert_eq!(model.skeleton.joint_count(), 18 + 20 + 20);
        assert_eq!(model.skeleton.part_count(), 17 + 20 + 20);
        let lh = model.left_hand.as_ref().unwrap();
        assert_eq!(lh.joints[0], model.skeleton.joint_index("l_wrist").unwrap());
        let rh = model.right_hand.as_ref().unwrap();
        assert_eq!(rh.joints[0], model.skeleton.joint_index("r_wrist").unwrap());
        assert_eq!(model.toes.len(), 6);
        assert_eq!(model.face.as_ref().unwrap().landmark_count(), 41);
        assert_eq!(model.expression_dim(), 200);
        assert_eq!(model.prior_joints(Network::Body).unwrap().len(), 17);
        assert_eq!(model.prior_joints(Network::LeftHand).unwrap().len(), 20);
    }

    #[test]
    fn face_basis_is_semi_orthogonal() {
        let b = semi_orthogonal(12, 5, 3);
        assert!((b.transpose() * &b - DMatrix::identity(5, 5)).abs().max() < 1e-12);
        let b = semi_orthogonal(6, 10, 3);
        assert!((&b * b.transpose() - DMatrix::identity(6, 6)).abs().max() < 1e-12);
    }

    #[test]
    fn leaf_joints_without_attachments_are_not_influential() {
        let model = BodyModel::new(&ModelSpec::body_only()).unwrap();
        let ear = model.skeleton.joint_index("r_ear").unwrap();
        let elbow = model.skeleton.joint_index("r_elbow").unwrap();
        assert!(!model.joint_is_influential(ear));
        assert!(model.joint_is_influential(elbow));
        let full = BodyModel::new(&ModelSpec::default()).unwrap();
        let ankle = full.skeleton.joint_index("r_ankle").unwrap();
        assert!(full.joint_is_influential(ankle));
    }
}
