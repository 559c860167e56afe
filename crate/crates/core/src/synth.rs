//! Synthetic ground truth and observations: pose sampling, smooth motion,
//! field rendering with noise, oracle flow, and the bone-length frame filter.

use nalgebra::{DVector, Matrix3, Vector2, Vector3};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::camera::{Camera, Crop};
use crate::error::{Error, Result};
use crate::fitting::{FlowTarget, FlowTargets, Priors};
use crate::kinematics::Posed;
use crate::model::{BodyModel, ModelSpec, Network};
use crate::pofield::{
    FieldSettings, FieldStack, FrameObservation, Keypoint, Observation, Orientation,
};
use crate::prior::{PosePrior, DEFAULT_EPS};
use crate::rng::stream;
use crate::skeleton::ModelParams;
use crate::so3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseConfig {
    /// Per-coordinate Gaussian keypoint noise (px).
    pub keypoint_sigma: f64,
    /// Per-component Gaussian orientation noise before renormalization.
    pub pof_sigma: f64,
    /// Probability of dropping each keypoint and each orientation.
    pub dropout: f64,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            keypoint_sigma: 0.0,
            pof_sigma: 0.0,
            dropout: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MotionConfig {
    /// Bound on every joint angular velocity component (rad/s).
    pub max_velocity: f64,
    pub fps: f64,
}

impl Default for MotionConfig {
    fn default() -> Self {
        Self {
            max_velocity: 1.0,
            fps: 30.0,
        }
    }
}

/// How observations are produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderMode {
    /// Render confidence maps and orientation fields, then decode them.
    Fields,
    /// Exact projections and orientations, skipping the image stage.
    Direct,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneConfig {
    pub seed: u64,
    pub n_frames: usize,
    pub model: ModelSpec,
    pub camera: Camera,
    /// Viewpoint of the camera around the subject (degrees).
    pub azimuth: f64,
    pub elevation: f64,
    /// Root translation of the subject (cm).
    pub root: Vector3<f64>,
    /// Standard deviation of the per-bone length scales of the subject.
    pub shape_sigma: f64,
    pub noise: NoiseConfig,
    pub motion: MotionConfig,
    pub fields: FieldSettings,
    /// Zoom of the hand crops relative to the body image.
    pub hand_zoom: f64,
    pub render: RenderMode,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            n_frames: 1,
            model: ModelSpec::default(),
            camera: Camera::weak(1.8, 184.0, 184.0),
            azimuth: 0.0,
            elevation: 0.0,
            root: Vector3::new(0.0, -56.0, 300.0),
            shape_sigma: 0.03,
            noise: NoiseConfig::default(),
            motion: MotionConfig::default(),
            fields: FieldSettings::default(),
            hand_zoom: 6.0,
            render: RenderMode::Fields,
        }
    }
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        self.camera.validate()?;
        let n = &self.noise;
        if !(n.keypoint_sigma >= 0.0 && n.pof_sigma >= 0.0) {
            return Err(Error::Config(
                "noise standard deviations must be non-negative".into(),
            ));
        }
        if !(0.0..=1.0).contains(&n.dropout) {
            return Err(Error::Config(format!(
                "dropout {} outside [0, 1]",
                n.dropout
            )));
        }
        if !(self.motion.max_velocity >= 0.0 && self.motion.fps > 0.0) {
            return Err(Error::Config(
                "motion bounds must be non-negative and fps positive".into(),
            ));
        }
        if !(self.shape_sigma >= 0.0 && self.hand_zoom > 0.0 && self.fields.size > 0) {
            return Err(Error::Config(
                "shape sigma, hand zoom and field size must be positive".into(),
            ));
        }
        Ok(())
    }
}

/// Rotation placing a camera at `azimuth` around the vertical axis and
/// `elevation` above the subject (degrees), applied to the subject.
pub fn view_rotation(azimuth: f64, elevation: f64) -> Matrix3<f64> {
    so3::axis_rotation(&Vector3::x(), -elevation.to_radians())
        * so3::axis_rotation(&Vector3::y(), azimuth.to_radians())
}

/// Per-joint truncated Gaussian over axis-angle components.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AngleLaw {
    pub mean: Vector3<f64>,
    pub std: Vector3<f64>,
    pub lo: Vector3<f64>,
    pub hi: Vector3<f64>,
}

impl AngleLaw {
    fn new(mean: [f64; 3], std: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> Self {
        Self {
            mean: mean.into(),
            std: std.into(),
            lo: lo.into(),
            hi: hi.into(),
        }
    }

    fn fixed() -> Self {
        Self::new([0.0; 3], [0.0; 3], [0.0; 3], [0.0; 3])
    }

    /// Reflection through x = 0: `(x, y, z) -> (x, -y, -z)`.
    fn mirrored(&self) -> Self {
        let f = |v: &Vector3<f64>| Vector3::new(v.x, -v.y, -v.z);
        let (a, b) = (f(&self.lo), f(&self.hi));
        Self {
            mean: f(&self.mean),
            std: self.std,
            lo: a.inf(&b),
            hi: a.sup(&b),
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> Vector3<f64> {
        Vector3::from_fn(|c, _| {
            let z: f64 = StandardNormal.sample(rng);
            if self.std[c] == 0.0 {
                return self.mean[c];
            }
            // truncation by reflection keeps one draw per component
            reflect(self.mean[c] + self.std[c] * z, self.lo[c], self.hi[c])
        })
    }
}

fn reflect(mut v: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let span = hi - lo;
    for _ in 0..64 {
        if v < lo {
            v = 2.0 * lo - v;
        } else if v > hi {
            v = 2.0 * hi - v;
        } else {
            return v;
        }
    }
    v.clamp(lo, hi).min(lo + span)
}

/// Anatomical joint angle distribution for every model joint except the root.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseDistribution {
    pub laws: Vec<AngleLaw>,
}

fn body_law(name: &str) -> AngleLaw {
    let big = 3.0;
    match name {
        "r_shoulder" | "l_shoulder" => {
            let law = AngleLaw::new(
                [-0.2, 0.0, 0.5],
                [0.5, 0.4, 0.5],
                [-2.5, -1.2, -0.3],
                [1.0, 1.2, 2.2],
            );
            if name == "r_shoulder" {
                law
            } else {
                law.mirrored()
            }
        }
        "r_elbow" | "l_elbow" => {
            let law = AngleLaw::new(
                [-0.6, 0.0, 0.0],
                [0.5, 0.3, 0.1],
                [-2.3, -1.0, -0.3],
                [0.0, 1.0, 0.3],
            );
            if name == "r_elbow" {
                law
            } else {
                law.mirrored()
            }
        }
        "r_wrist" | "l_wrist" => AngleLaw::new([0.0; 3], [0.3, 0.3, 0.2], [-1.0; 3], [1.0; 3]),
        "r_hip" | "l_hip" => {
            let law = AngleLaw::new(
                [-0.1, 0.0, 0.05],
                [0.35, 0.2, 0.15],
                [-1.6, -0.6, -0.3],
                [0.6, 0.6, 0.8],
            );
            if name == "r_hip" {
                law
            } else {
                law.mirrored()
            }
        }
        "r_knee" | "l_knee" => AngleLaw::new(
            [0.3, 0.0, 0.0],
            [0.3, 0.05, 0.05],
            [0.0, -0.2, -0.2],
            [2.0, 0.2, 0.2],
        ),
        "r_ankle" | "l_ankle" => AngleLaw::new(
            [0.0; 3],
            [0.2, 0.1, 0.1],
            [-0.8, -0.4, -0.4],
            [0.8, 0.4, 0.4],
        ),
        "nose" => AngleLaw::new(
            [0.0; 3],
            [0.15, 0.3, 0.1],
            [-0.6, -1.0, -0.5],
            [0.6, 1.0, 0.5],
        ),
        _ => AngleLaw::new([0.0; 3], [0.0; 3], [-big; 3], [big; 3]),
    }
}

/// Left-hand joint law; the right hand uses the mirror image.
fn hand_law(name: &str) -> AngleLaw {
    if name.starts_with("thumb") {
        if name.ends_with('4') {
            return AngleLaw::fixed();
        }
        return AngleLaw::new(
            [0.1, 0.0, 0.1],
            [0.2, 0.2, 0.2],
            [-0.6, -0.6, -0.6],
            [0.9, 0.6, 0.8],
        );
    }
    if name.ends_with('4') {
        return AngleLaw::fixed();
    }
    let spread = if name.ends_with('1') { 0.1 } else { 0.03 };
    AngleLaw::new(
        [-0.3, 0.0, 0.0],
        [0.3, 0.05, spread],
        [-1.6, -0.2, -0.4],
        [0.2, 0.2, 0.4],
    )
}

impl PoseDistribution {
    pub fn for_model(model: &BodyModel) -> Self {
        let skel = &model.skeleton;
        let laws = skel
            .joints()
            .iter()
            .map(|j| {
                if j.parent.is_none() {
                    AngleLaw::fixed()
                } else if let Some(rest) = j.name.strip_prefix("lh_") {
                    hand_law(rest)
                } else if let Some(rest) = j.name.strip_prefix("rh_") {
                    hand_law(rest).mirrored()
                } else {
                    body_law(&j.name)
                }
            })
            .collect();
        Self { laws }
    }

    /// Joint angles for every joint; the root entry is left at zero.
    pub fn sample<R: Rng>(&self, rng: &mut R) -> Vec<Vector3<f64>> {
        self.laws.iter().map(|l| l.sample(rng)).collect()
    }
}

/// Fit body and hand priors to poses drawn from the synthetic distribution.
pub fn train_priors(model: &BodyModel, seed: u64, samples: usize) -> Result<Priors> {
    let dist = PoseDistribution::for_model(model);
    let mut rng = stream(seed, "prior", 0);
    let draws: Vec<Vec<Vector3<f64>>> = (0..samples).map(|_| dist.sample(&mut rng)).collect();
    let fit = |net: Network| -> Result<Option<PosePrior>> {
        let Some(joints) = model.prior_joints(net) else {
            return Ok(None);
        };
        let vecs: Vec<DVector<f64>> = draws
            .iter()
            .map(|d| {
                DVector::from_iterator(
                    3 * joints.len(),
                    joints.iter().flat_map(|&j| d[j].iter().copied()),
                )
            })
            .collect();
        PosePrior::fit(&vecs, DEFAULT_EPS).map(Some)
    };
    let body = fit(Network::Body)?.expect("body network");
    Ok(Priors::new(body, fit(Network::LeftHand)?))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GtFrame {
    pub params: ModelParams,
    pub joints: Vec<Vector3<f64>>,
    pub markers: Vec<Vector3<f64>>,
}

impl GtFrame {
    pub fn new(model: &BodyModel, params: ModelParams) -> Result<Self> {
        let posed = model.pose(&params)?;
        let markers = posed
            .markers(&model.skeleton)
            .into_iter()
            .map(|m| m.position)
            .collect();
        Ok(Self {
            params,
            joints: posed.positions,
            markers,
        })
    }
}

/// Ground-truth parameters of the subject in the scene's first frame.
fn initial_params(model: &BodyModel, config: &SceneConfig) -> ModelParams {
    let dist = PoseDistribution::for_model(model);
    let mut params = model.rest_params();
    params.theta = dist.sample(&mut stream(config.seed, "pose", 0));
    let mut rng = stream(config.seed, "view", 0);
    let jitter = Vector3::from_fn(|_, _| {
        let z: f64 = StandardNormal.sample(&mut rng);
        0.1 * z
    });
    let root = model.skeleton.root();
    params.theta[root] =
        so3::log(&(view_rotation(config.azimuth, config.elevation) * so3::exp(&jitter)));
    let mut rng = stream(config.seed, "shape", 0);
    for phi in &mut params.phi {
        let z: f64 = StandardNormal.sample(&mut rng);
        *phi = (1.0 + config.shape_sigma * z).clamp(0.7, 1.3);
    }
    params.t = config.root;
    params
}

/// A smooth trajectory: bounded angular velocities with a random walk,
/// reflecting off the joint limits. Shape and translation stay fixed.
pub fn generate_sequence(config: &SceneConfig) -> Result<Vec<GtFrame>> {
    config.validate()?;
    let model = BodyModel::new(&config.model)?;
    let dist = PoseDistribution::for_model(&model);
    let mut params = initial_params(&model, config);
    let vmax = config.motion.max_velocity;
    let dt = 1.0 / config.motion.fps;
    let mut rng = stream(config.seed, "motion", 0);
    let mut velocity: Vec<Vector3<f64>> = dist
        .laws
        .iter()
        .map(|l| {
            Vector3::from_fn(|c, _| {
                if l.std[c] > 0.0 {
                    rng.random_range(-1.0..=1.0) * vmax
                } else {
                    0.0
                }
            })
        })
        .collect();
    let root = model.skeleton.root();
    let mut frames = Vec::with_capacity(config.n_frames);
    for f in 0..config.n_frames {
        if f > 0 {
            for (j, law) in dist.laws.iter().enumerate() {
                if j == root {
                    continue;
                }
                for c in 0..3 {
                    if law.std[c] == 0.0 {
                        continue;
                    }
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let v = (velocity[j][c] + 0.2 * vmax * z).clamp(-vmax, vmax);
                    let next = params.theta[j][c] + v * dt;
                    let (lo, hi) = (law.lo[c], law.hi[c]);
                    if next < lo || next > hi {
                        velocity[j][c] = -v;
                        params.theta[j][c] = reflect(next, lo, hi);
                    } else {
                        velocity[j][c] = v;
                        params.theta[j][c] = next;
                    }
                }
            }
        }
        frames.push(GtFrame::new(&model, params.clone())?);
    }
    Ok(frames)
}

/// Fields rendered for one frame, in network crop coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFields {
    pub body: FieldStack,
    /// Hand stacks with their crops; the right-hand stack is horizontally flipped.
    pub left_hand: Option<(FieldStack, Crop)>,
    pub right_hand: Option<(FieldStack, Crop)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rendered {
    pub observation: FrameObservation,
    pub fields: Option<RenderedFields>,
    /// Parts skipped by the field renderer because their endpoints project together.
    pub degenerate_parts: usize,
}

/// Exact (noise-free, unquantized) measurements of a network.
/// Exact 2D joints and 3D part directions of one network, `None` where hidden.
type NetworkTargets = (Vec<Option<Vector2<f64>>>, Vec<Option<Vector3<f64>>>);

/// A hand observation and, for rendered fields, the stack and its crop.
type HandRender = (Option<Observation>, Option<(FieldStack, Crop)>);

fn exact_network(
    model: &BodyModel,
    net: Network,
    posed: &Posed,
    camera: &Camera,
) -> Result<NetworkTargets> {
    let map = model.network(net).expect("network present");
    let joints2d = map
        .joints
        .iter()
        .map(|&j| camera.project_point(&posed.positions[j]).ok())
        .collect();
    let dirs = map
        .parts
        .iter()
        .map(|&p| {
            let (m, n) = model.skeleton.parts()[p];
            let v = posed.positions[n] - posed.positions[m];
            let len = v.norm();
            (len > crate::skeleton::DEGENERATE_EPS).then(|| v / len)
        })
        .collect();
    Ok((joints2d, dirs))
}

fn inside(uv: &Vector2<f64>, size: usize) -> bool {
    let s = size as f64 - 1.0;
    uv.x >= 0.0 && uv.y >= 0.0 && uv.x <= s && uv.y <= s
}

fn direct_observation(
    j2d: &[Option<Vector2<f64>>],
    dirs: &[Option<Vector3<f64>>],
    parts: &[(usize, usize)],
    size: Option<usize>,
) -> Observation {
    let keypoints: Vec<Keypoint> = j2d
        .iter()
        .map(|p| match p {
            Some(p) if size.is_none_or(|s| inside(p, s)) => Keypoint::at(*p),
            _ => Keypoint::absent(),
        })
        .collect();
    let orientations = dirs
        .iter()
        .zip(parts)
        .map(|(d, &(m, n))| match d {
            Some(d) if keypoints[m].present && keypoints[n].present => Orientation::of(*d),
            _ => Orientation::absent(),
        })
        .collect();
    Observation {
        keypoints,
        orientations,
        toes: None,
        face: None,
    }
}

/// Crop around the projected hand joints.
pub fn hand_crop(joints2d: &[Option<Vector2<f64>>], zoom: f64, size: usize) -> Crop {
    let pts: Vec<_> = joints2d.iter().flatten().collect();
    let (lo, hi) = pts.iter().fold(
        (
            Vector2::repeat(f64::INFINITY),
            Vector2::repeat(f64::NEG_INFINITY),
        ),
        |(lo, hi), p| (lo.inf(p), hi.sup(p)),
    );
    let center = if pts.is_empty() {
        Vector2::zeros()
    } else {
        (lo + hi) * 0.5
    };
    Crop { zoom, center, size }
}

/// Render one frame's network outputs, decode them and apply the noise model.
pub fn render_observation(
    model: &BodyModel,
    frame: &GtFrame,
    config: &SceneConfig,
    index: u64,
) -> Result<Rendered> {
    let camera = &config.camera;
    let posed = model.pose(&frame.params)?;
    let settings = config.fields;
    let size = settings.size;
    let mut degenerate = 0;

    let (j2d, dirs) = exact_network(model, Network::Body, &posed, camera)?;
    let body_parts = model.body.skeleton.parts();
    let (mut body, body_fields) = match config.render {
        RenderMode::Fields => {
            let (stack, deg) = FieldStack::render(&j2d, &dirs, body_parts, &settings);
            degenerate += deg.len();
            (stack.decode(body_parts, settings.threshold)?, Some(stack))
        }
        RenderMode::Direct => (
            direct_observation(&j2d, &dirs, body_parts, Some(size)),
            None,
        ),
    };

    let mut hands: [HandRender; 2] = [(None, None), (None, None)];
    for (slot, net) in [Network::LeftHand, Network::RightHand]
        .into_iter()
        .enumerate()
    {
        let Some(map) = model.network(net) else {
            continue;
        };
        let (h2d, hdirs) = exact_network(model, net, &posed, camera)?;
        let parts = map.skeleton.parts();
        let flip = net == Network::RightHand;
        let crop = hand_crop(&h2d, config.hand_zoom, size);
        match config.render {
            RenderMode::Fields => {
                let last = (size - 1) as f64;
                let to_crop = |p: &Option<Vector2<f64>>| {
                    p.map(|p| {
                        let c = crop.to_crop(&p);
                        if flip {
                            Vector2::new(last - c.x, c.y)
                        } else {
                            c
                        }
                    })
                };
                let c2d: Vec<_> = h2d.iter().map(to_crop).collect();
                let cdirs: Vec<_> = hdirs
                    .iter()
                    .map(|d| {
                        d.map(|d| {
                            if flip {
                                Vector3::new(-d.x, d.y, d.z)
                            } else {
                                d
                            }
                        })
                    })
                    .collect();
                let (stack, deg) = FieldStack::render(&c2d, &cdirs, parts, &settings);
                degenerate += deg.len();
                let mut obs = if flip {
                    stack.decode_flipped(parts, settings.threshold)?
                } else {
                    stack.decode(parts, settings.threshold)?
                };
                for kp in obs.keypoints.iter_mut().filter(|k| k.present) {
                    kp.position = crop.to_image(&kp.position);
                }
                hands[slot] = (Some(obs), Some((stack, crop)));
            }
            RenderMode::Direct => {
                hands[slot] = (Some(direct_observation(&h2d, &hdirs, parts, None)), None);
            }
        }
    }

    if !model.toes.is_empty() {
        let toes = model
            .toe_positions(&posed)
            .iter()
            .map(|p| {
                camera
                    .project_point(p)
                    .map(Keypoint::at)
                    .unwrap_or(Keypoint::absent())
            })
            .collect();
        body.toes = Some(toes);
    }
    if model.face.is_some() {
        let face = model
            .face_positions(&posed, &frame.params.sigma)
            .iter()
            .map(|p| {
                camera
                    .project_point(p)
                    .map(Keypoint::at)
                    .unwrap_or(Keypoint::absent())
            })
            .collect();
        body.face = Some(face);
    }

    let [(left, left_fields), (right, right_fields)] = hands;
    let mut observation = FrameObservation {
        body,
        left_hand: left,
        right_hand: right,
    };
    perturb(&mut observation, &config.noise, config.seed, index);
    Ok(Rendered {
        observation,
        fields: body_fields.map(|body| RenderedFields {
            body,
            left_hand: left_fields,
            right_hand: right_fields,
        }),
        degenerate_parts: degenerate,
    })
}

/// Apply keypoint noise, orientation noise and dropout. Draws are made for
/// every entry regardless of the noise levels, so scenes that differ only in
/// noise magnitude share their random numbers.
pub fn perturb(obs: &mut FrameObservation, noise: &NoiseConfig, seed: u64, index: u64) {
    let mut rng = stream(seed, "noise", index);
    let kp = |k: &mut Keypoint, rng: &mut rand_chacha::ChaCha8Rng| {
        let d = Vector2::new(StandardNormal.sample(rng), StandardNormal.sample(rng))
            * noise.keypoint_sigma;
        let drop = rng.random::<f64>() < noise.dropout;
        if k.present {
            k.position += d;
            if drop {
                *k = Keypoint::absent();
            }
        }
    };
    let orient = |o: &mut Orientation, rng: &mut rand_chacha::ChaCha8Rng| {
        let d = Vector3::new(
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
            StandardNormal.sample(rng),
        );
        let drop = rng.random::<f64>() < noise.dropout;
        if o.present {
            let v = o.direction + d * noise.pof_sigma;
            let n = v.norm();
            *o = if drop || !(n > 1e-12) {
                Orientation::absent()
            } else {
                Orientation::of(v / n)
            };
        }
    };
    let nets = [
        Some(&mut obs.body),
        obs.left_hand.as_mut(),
        obs.right_hand.as_mut(),
    ];
    for o in nets.into_iter().flatten() {
        for k in &mut o.keypoints {
            kp(k, &mut rng);
        }
        for p in &mut o.orientations {
            orient(p, &mut rng);
        }
        for extra in [o.toes.as_mut(), o.face.as_mut()].into_iter().flatten() {
            for k in extra.iter_mut() {
                kp(k, &mut rng);
            }
        }
    }
}

/// A marker is visible when its part's midpoint is among the nearer half of
/// all part midpoints.
pub fn marker_visibility(model: &BodyModel, joints: &[Vector3<f64>]) -> Vec<bool> {
    let skel = &model.skeleton;
    let depth: Vec<f64> = skel
        .parts()
        .iter()
        .map(|&(m, n)| 0.5 * (joints[m].z + joints[n].z))
        .collect();
    let mut sorted = depth.clone();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let median = if sorted.is_empty() {
        0.0
    } else if sorted.len() % 2 == 1 {
        sorted[sorted.len() / 2]
    } else {
        0.5 * (sorted[sorted.len() / 2 - 1] + sorted[sorted.len() / 2])
    };
    let mut out = Vec::with_capacity(skel.marker_count());
    for (p, d) in depth.iter().enumerate() {
        out.extend(std::iter::repeat_n(*d <= median, skel.markers(p).len()));
    }
    out
}

/// Flow targets from the ground-truth markers of a frame plus pixel noise.
pub fn oracle_flow(
    model: &BodyModel,
    frame: &GtFrame,
    camera: &Camera,
    sigma: f64,
    seed: u64,
    index: u64,
) -> FlowTargets {
    let mut rng = stream(seed, "flow", index);
    let visible = marker_visibility(model, &frame.joints);
    let targets = frame
        .markers
        .iter()
        .zip(visible)
        .map(|(m, vis)| {
            let d = Vector2::new(
                StandardNormal.sample(&mut rng),
                StandardNormal.sample(&mut rng),
            ) * sigma;
            match camera.project_point(m) {
                Ok(uv) => FlowTarget {
                    position: uv + d,
                    valid: vis,
                },
                Err(_) => FlowTarget {
                    position: Vector2::zeros(),
                    valid: false,
                },
            }
        })
        .collect();
    FlowTargets { targets }
}

/// Indices of frames whose bone lengths all stay within `threshold` (a
/// fraction) of the per-bone average over the sequence.
pub fn filter_frames(
    frames: &[Vec<Vector3<f64>>],
    parts: &[(usize, usize)],
    threshold: f64,
) -> Vec<usize> {
    if frames.is_empty() {
        return Vec::new();
    }
    let lengths: Vec<Vec<f64>> = frames
        .iter()
        .map(|j| parts.iter().map(|&(m, n)| (j[n] - j[m]).norm()).collect())
        .collect();
    let avg: Vec<f64> = (0..parts.len())
        .map(|b| lengths.iter().map(|l| l[b]).sum::<f64>() / frames.len() as f64)
        .collect();
    lengths
        .iter()
        .enumerate()
        .filter(|(_, l)| {
            l.iter()
                .zip(&avg)
                .all(|(x, a)| (x - a).abs() <= threshold * a)
        })
        .map(|(i, _)| i)
        .collect()
}
