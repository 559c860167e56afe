//! Residual blocks with analytic Jacobians, and the masked system handed to the solver.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector, Vector2, Vector3};

use crate::camera::Camera;
use crate::error::{Error, Result};
use crate::fitting::lm::LeastSquares;
use crate::fitting::schedule::Block;
use crate::fitting::{Priors, Weights};
use crate::kinematics::{ParamLayout, PointJacobian, Posed};
use crate::model::{BodyModel, Network};
use crate::pofield::{FrameObservation, Keypoint, Orientation};
use crate::prior::PosePrior;
use crate::skeleton::ModelParams;

/// Regularizer under the root in the derivative of `sqrt(1 - dot)`.
pub const POF_GRAD_EPS: f64 = 1e-9;

/// Residual values with sparse Jacobian entries over the full parameter layout.
#[derive(Debug, Clone, Default)]
pub struct Rows {
    pub values: Vec<f64>,
    /// `(row, column, value)`; repeated coordinates add up.
    pub entries: Vec<(usize, usize, f64)>,
    jacobian: bool,
}

impl Rows {
    pub fn new(jacobian: bool) -> Self {
        Self {
            values: Vec::new(),
            entries: Vec::new(),
            jacobian,
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn squared_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum()
    }

    fn push(&mut self, value: f64) -> usize {
        self.values.push(value);
        self.values.len() - 1
    }

    #[inline]
    fn add(&mut self, row: usize, col: usize, value: f64) {
        if value != 0.0 {
            self.entries.push((row, col, value));
        }
    }

    /// Dense Jacobian with one column per parameter of `layout`.
    pub fn dense_jacobian(&self, cols: usize) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.len(), cols);
        for &(r, c, v) in &self.entries {
            j[(r, c)] += v;
        }
        j
    }
}

/// Per-marker flow target in full-image pixels.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct FlowTarget {
    pub position: Vector2<f64>,
    pub valid: bool,
}

/// Targets indexed by marker id (the order of [`Posed::markers`]).
#[derive(Debug, Clone, PartialEq, Default, serde::Serialize, serde::Deserialize)]
pub struct FlowTargets {
    pub targets: Vec<FlowTarget>,
}

impl FlowTargets {
    pub fn valid_count(&self) -> usize {
        self.targets.iter().filter(|t| t.valid).count()
    }
}

/// A posed model ready for residual evaluation.
pub struct Evaluator<'a> {
    pub model: &'a BodyModel,
    pub camera: &'a Camera,
    pub params: &'a ModelParams,
    pub layout: ParamLayout,
    pub posed: Posed,
    jac: PointJacobian,
}

impl<'a> Evaluator<'a> {
    pub fn new(model: &'a BodyModel, camera: &'a Camera, params: &'a ModelParams) -> Result<Self> {
        Ok(Self {
            model,
            camera,
            params,
            layout: model.layout(),
            posed: model.pose(params)?,
            jac: Vec::new(),
        })
    }

    fn point_jac(&mut self, joint: usize, point: &Vector3<f64>) {
        let mut jac = std::mem::take(&mut self.jac);
        self.posed
            .point_jacobian(&self.model.skeleton, &self.layout, joint, point, &mut jac);
        self.jac = jac;
    }

    /// Two rows `sqrt(w) c (observed - projection)` for a point attached to
    /// `joint`. `extra` lists additional `(column, d point)` entries.
    fn point2d(
        &mut self,
        rows: &mut Rows,
        observed: &Keypoint,
        joint: usize,
        point: &Vector3<f64>,
        extra: &[(usize, Vector3<f64>)],
        weight: f64,
    ) {
        let scale = weight.sqrt() * observed.confidence;
        let Ok((uv, dproj)) = self.camera.project_with_jacobian(point) else {
            rows.push(f64::NAN);
            rows.push(f64::NAN);
            return;
        };
        let e = observed.position - uv;
        let r0 = rows.push(scale * e.x);
        let r1 = rows.push(scale * e.y);
        if !rows.jacobian {
            return;
        }
        self.point_jac(joint, point);
        for (col, dp) in self.jac.iter().chain(extra.iter()) {
            let d = dproj * dp;
            rows.add(r0, *col, -scale * d.x);
            rows.add(r1, *col, -scale * d.y);
        }
    }

    /// Keypoint residuals for observation `i -> model joint map[i]`, for indices accepted by `include`.
    pub fn residuals_keypoints2d(
        &mut self,
        rows: &mut Rows,
        keypoints: &[Keypoint],
        joint_map: &[usize],
        include: &dyn Fn(usize) -> bool,
        weight: f64,
    ) {
        for (i, kp) in keypoints.iter().enumerate() {
            if !kp.present || !include(i) {
                continue;
            }
            let j = joint_map[i];
            let p = self.posed.positions[j];
            self.point2d(rows, kp, j, &p, &[], weight);
        }
    }

    /// One row `sqrt(w) sqrt(1 - observed . model)` per present part.
    pub fn residuals_pof(
        &mut self,
        rows: &mut Rows,
        orientations: &[Orientation],
        part_map: &[usize],
        include: &dyn Fn(usize) -> bool,
        weight: f64,
    ) {
        let sw = weight.sqrt();
        for (i, o) in orientations.iter().enumerate() {
            if !o.present || !include(i) {
                continue;
            }
            let (m, n) = self.model.skeleton.parts()[part_map[i]];
            let v = self.posed.positions[n] - self.posed.positions[m];
            let len = v.norm();
            let dir = v / len;
            let dot = o.direction.dot(&dir).clamp(-1.0, 1.0);
            let row = rows.push(sw * (1.0 - dot).sqrt());
            if !rows.jacobian {
                continue;
            }
            let coef = -sw / (2.0 * (1.0 - dot + POF_GRAD_EPS).sqrt());
            // d dot / d v
            let g = (o.direction - dir * o.direction.dot(&dir)) / len;
            let pn = self.posed.positions[n];
            self.point_jac(n, &pn);
            for (col, dp) in &self.jac {
                rows.add(row, *col, coef * g.dot(dp));
            }
            let pm = self.posed.positions[m];
            self.point_jac(m, &pm);
            for (col, dp) in &self.jac {
                rows.add(row, *col, -coef * g.dot(dp));
            }
        }
    }

    pub fn residuals_toes(
        &mut self,
        rows: &mut Rows,
        keypoints: &[Keypoint],
        include: &dyn Fn(usize) -> bool,
        weight: f64,
    ) {
        let toes = self.model.toes.clone();
        for (kp, lm) in keypoints.iter().zip(&toes) {
            if !kp.present || !include(lm.joint) {
                continue;
            }
            let p = self.posed.attached(lm.joint, &lm.offset);
            self.point2d(rows, kp, lm.joint, &p, &[], weight);
        }
    }

    /// Face landmarks: head-rigid offsets displaced by the expression basis.
    pub fn residuals_face(&mut self, rows: &mut Rows, keypoints: &[Keypoint], weight: f64) {
        let Some(face) = self.model.face.as_ref() else {
            return;
        };
        let anchor = face.anchor;
        let g = self.posed.rotations[anchor];
        let mut extra = Vec::with_capacity(face.expression_dim());
        for (l, kp) in keypoints.iter().enumerate().take(face.landmark_count()) {
            if !kp.present {
                continue;
            }
            let p = self
                .posed
                .attached(anchor, &face.local_offset(l, &self.params.sigma));
            extra.clear();
            if rows.jacobian {
                for k in 0..face.expression_dim() {
                    let b = Vector3::new(
                        face.basis[(3 * l, k)],
                        face.basis[(3 * l + 1, k)],
                        face.basis[(3 * l + 2, k)],
                    );
                    extra.push((self.layout.sigma(k), g * b));
                }
            }
            self.point2d(rows, kp, anchor, &p, &extra, weight);
        }
    }

    /// `sqrt(w) A (theta_sel - mu)` over the given joints.
    pub fn residuals_prior(
        &mut self,
        rows: &mut Rows,
        prior: &PosePrior,
        joints: &[usize],
        weight: f64,
    ) {
        let theta = DVector::from_iterator(
            3 * joints.len(),
            joints
                .iter()
                .flat_map(|&j| self.params.theta[j].iter().copied()),
        );
        let sw = weight.sqrt();
        let r = &prior.a * (theta - &prior.mu) * sw;
        for i in 0..r.len() {
            let row = rows.push(r[i]);
            if rows.jacobian {
                for (k, &j) in joints.iter().enumerate() {
                    for c in 0..3 {
                        rows.add(row, self.layout.theta(j, c), sw * prior.a[(i, 3 * k + c)]);
                    }
                }
            }
        }
    }

    /// `sqrt(w_phi) (phi - 1)` then `sqrt(w_sigma) sigma`.
    pub fn residuals_regularizers(
        &mut self,
        rows: &mut Rows,
        w_phi: Option<f64>,
        w_sigma: Option<f64>,
    ) {
        if let Some(w) = w_phi {
            let sw = w.sqrt();
            for (b, phi) in self.params.phi.iter().enumerate() {
                let row = rows.push(sw * (phi - 1.0));
                if rows.jacobian {
                    rows.add(row, self.layout.phi(b), sw);
                }
            }
        }
        if let Some(w) = w_sigma {
            let sw = w.sqrt();
            for (k, s) in self.params.sigma.iter().enumerate() {
                let row = rows.push(sw * s);
                if rows.jacobian {
                    rows.add(row, self.layout.sigma(k), sw);
                }
            }
        }
    }

    /// Two rows `sqrt(w) (projection - target)` per valid marker.
    pub fn residuals_tex(
        &mut self,
        rows: &mut Rows,
        targets: &FlowTargets,
        weight: f64,
    ) -> Result<()> {
        let skel = &self.model.skeleton;
        if targets.targets.len() != skel.marker_count() {
            return Err(Error::Dimension(format!(
                "{} flow targets for {} markers",
                targets.targets.len(),
                skel.marker_count()
            )));
        }
        let mut id = 0;
        let sw = weight.sqrt();
        for (p, &(m, _)) in skel.parts().iter().enumerate() {
            for off in skel.markers(p) {
                let target = targets.targets[id];
                id += 1;
                if !target.valid {
                    continue;
                }
                // same algebra as a keypoint with the sign flipped
                let kp = Keypoint {
                    position: target.position,
                    confidence: 1.0,
                    present: true,
                };
                let point = self.posed.attached(m, off);
                let start = rows.len();
                let first_entry = rows.entries.len();
                self.point2d(rows, &kp, m, &point, &[], weight);
                for v in &mut rows.values[start..] {
                    *v = -*v;
                }
                for e in &mut rows.entries[first_entry..] {
                    e.2 = -e.2;
                }
                debug_assert!(sw >= 0.0);
            }
        }
        Ok(())
    }

    /// `sqrt(w) (z_j - prev_z_j)` per joint.
    pub fn residuals_dz(&mut self, rows: &mut Rows, prev_z: &[f64], weight: f64) -> Result<()> {
        if prev_z.len() != self.posed.positions.len() {
            return Err(Error::Dimension(format!(
                "{} previous depths for {} joints",
                prev_z.len(),
                self.posed.positions.len()
            )));
        }
        let sw = weight.sqrt();
        for (j, z0) in prev_z.iter().enumerate() {
            let p = self.posed.positions[j];
            let row = rows.push(sw * (p.z - z0));
            if rows.jacobian {
                self.point_jac(j, &p);
                for (col, dp) in &self.jac {
                    rows.add(row, *col, sw * dp.z);
                }
            }
        }
        Ok(())
    }
}

/// Tracking terms attached to a system.
#[derive(Debug, Clone)]
pub struct TrackTerms {
    pub targets: FlowTargets,
    pub prev_z: Vec<f64>,
    pub w_tex: f64,
    pub w_dz: f64,
}

/// Which parameters a system may change beyond the joint mask.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Freeze {
    pub phi: bool,
    pub sigma: bool,
}

/// One stage's objective restricted to its free parameters.
pub struct System<'a> {
    pub model: &'a BodyModel,
    pub priors: &'a Priors,
    pub camera: &'a Camera,
    pub weights: Weights,
    pub obs: &'a FrameObservation,
    pub blocks: Vec<Block>,
    pub joints: BTreeSet<usize>,
    pub track: Option<TrackTerms>,
    base: ModelParams,
    free: Vec<usize>,
    column: Vec<Option<usize>>,
}

impl<'a> System<'a> {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        model: &'a BodyModel,
        priors: &'a Priors,
        camera: &'a Camera,
        weights: Weights,
        obs: &'a FrameObservation,
        blocks: Vec<Block>,
        joints: BTreeSet<usize>,
        base: ModelParams,
        freeze: Freeze,
        track: Option<TrackTerms>,
    ) -> Result<Self> {
        model.check_params(&base)?;
        check_observation(model, obs)?;
        let layout = model.layout();
        let skel = &model.skeleton;
        let mut free = Vec::new();
        for &j in &joints {
            if model.joint_is_influential(j) {
                free.extend((0..3).map(|c| layout.theta(j, c)));
            }
        }
        if !freeze.phi {
            for (b, (m, n)) in skel.parts().iter().enumerate() {
                if joints.contains(m) && joints.contains(n) {
                    free.push(layout.phi(b));
                }
            }
        }
        free.push(layout.t(0));
        free.push(layout.t(1));
        if camera.is_perspective() {
            free.push(layout.t(2));
        }
        if !freeze.sigma && blocks.contains(&Block::Face) && model.face.is_some() {
            free.extend((0..model.expression_dim()).map(|k| layout.sigma(k)));
        }
        free.sort_unstable();
        let mut column = vec![None; layout.len()];
        for (k, &c) in free.iter().enumerate() {
            column[c] = Some(k);
        }
        let sys = Self {
            model,
            priors,
            camera,
            weights,
            obs,
            blocks,
            joints,
            track,
            base,
            free,
            column,
        };
        if sys.data_rows()? == 0 {
            return Err(Error::NoConstraints);
        }
        Ok(sys)
    }

    pub fn free_columns(&self) -> &[usize] {
        &self.free
    }

    pub fn initial_x(&self) -> DVector<f64> {
        let flat = self.base.to_flat();
        DVector::from_iterator(self.free.len(), self.free.iter().map(|&c| flat[c]))
    }

    pub fn params_at(&self, x: &DVector<f64>) -> ModelParams {
        let mut flat = self.base.to_flat();
        for (k, &c) in self.free.iter().enumerate() {
            flat[c] = x[k];
        }
        let mut p = self.base.clone();
        p.set_flat(&flat);
        p
    }

    /// Rows contributed by observation-driven blocks at the base parameters.
    fn data_rows(&self) -> Result<usize> {
        let data = [
            Block::Body2d,
            Block::BodyPof,
            Block::Hand2d,
            Block::HandPof,
            Block::Toes,
            Block::Face,
            Block::Tex,
        ];
        let mut n = 0;
        for (block, rows) in self.rows_by_block(&self.base, false)? {
            if data.contains(&block) {
                n += rows.len();
            }
        }
        Ok(n)
    }

    /// Residuals of every active block, each with its own row numbering.
    pub fn rows_by_block(
        &self,
        params: &ModelParams,
        jacobian: bool,
    ) -> Result<Vec<(Block, Rows)>> {
        let mut ev = Evaluator::new(self.model, self.camera, params)?;
        let joints = &self.joints;
        let skel = &self.model.skeleton;
        let w = &self.weights;
        let mut out = Vec::with_capacity(self.blocks.len());
        for &block in &self.blocks {
            let mut rows = Rows::new(jacobian);
            match block {
                Block::Body2d => {
                    let map = &self.model.body.joints;
                    ev.residuals_keypoints2d(
                        &mut rows,
                        &self.obs.body.keypoints,
                        map,
                        &|i| joints.contains(&map[i]),
                        w.w2d_body,
                    );
                }
                Block::BodyPof => {
                    let map = &self.model.body.parts;
                    let inside = |i: usize| {
                        let (m, n) = skel.parts()[map[i]];
                        joints.contains(&m) && joints.contains(&n)
                    };
                    ev.residuals_pof(
                        &mut rows,
                        &self.obs.body.orientations,
                        map,
                        &inside,
                        w.wpof_body,
                    );
                }
                Block::BodyPrior => {
                    let pj = self
                        .model
                        .prior_joints(Network::Body)
                        .expect("body network");
                    ev.residuals_prior(&mut rows, &self.priors.body, &pj, w.wprior_body);
                }
                Block::Hand2d | Block::HandPof | Block::HandPrior => {
                    for net in [Network::LeftHand, Network::RightHand] {
                        let (Some(map), Some(obs)) = (self.model.network(net), self.hand_obs(net))
                        else {
                            continue;
                        };
                        match block {
                            Block::Hand2d => {
                                // the hand root is the body wrist, observed by the body network
                                let root = map.skeleton.root();
                                let inside =
                                    |i: usize| i != root && joints.contains(&map.joints[i]);
                                ev.residuals_keypoints2d(
                                    &mut rows,
                                    &obs.keypoints,
                                    &map.joints,
                                    &inside,
                                    w.w2d_hand,
                                );
                            }
                            Block::HandPof => {
                                let inside = |i: usize| {
                                    let (m, n) = skel.parts()[map.parts[i]];
                                    joints.contains(&m) && joints.contains(&n)
                                };
                                ev.residuals_pof(
                                    &mut rows,
                                    &obs.orientations,
                                    &map.parts,
                                    &inside,
                                    w.wpof_hand,
                                );
                            }
                            _ => {}
                        }
                    }
                    if block == Block::HandPrior {
                        for (net, prior) in [
                            (Network::LeftHand, self.priors.left_hand.as_ref()),
                            (Network::RightHand, self.priors.right_hand.as_ref()),
                        ] {
                            if let (Some(pj), Some(prior)) = (self.model.prior_joints(net), prior) {
                                ev.residuals_prior(&mut rows, prior, &pj, w.wprior_hand);
                            }
                        }
                    }
                }
                Block::Toes => {
                    if let Some(toes) = &self.obs.body.toes {
                        ev.residuals_toes(&mut rows, toes, &|j| joints.contains(&j), w.w_toes);
                    }
                }
                Block::Face => {
                    if let (Some(face), Some(fm)) = (&self.obs.body.face, &self.model.face) {
                        if joints.contains(&fm.anchor) {
                            ev.residuals_face(&mut rows, face, w.w_face);
                        }
                    }
                }
                Block::ShapeReg => ev.residuals_regularizers(&mut rows, Some(w.w_phi), None),
                Block::ExpressionReg => ev.residuals_regularizers(&mut rows, None, Some(w.w_sigma)),
                Block::Tex => {
                    if let Some(t) = &self.track {
                        ev.residuals_tex(&mut rows, &t.targets, t.w_tex)?;
                    }
                }
                Block::DepthSmooth => {
                    if let Some(t) = &self.track {
                        ev.residuals_dz(&mut rows, &t.prev_z, t.w_dz)?;
                    }
                }
            }
            out.push((block, rows));
        }
        Ok(out)
    }

    fn hand_obs(&self, net: Network) -> Option<&crate::pofield::Observation> {
        match net {
            Network::LeftHand => self.obs.left_hand.as_ref(),
            Network::RightHand => self.obs.right_hand.as_ref(),
            Network::Body => Some(&self.obs.body),
        }
    }

    /// Squared norm of each active block at `params`.
    pub fn block_costs(&self, params: &ModelParams) -> Result<Vec<(Block, f64)>> {
        Ok(self
            .rows_by_block(params, false)?
            .into_iter()
            .map(|(b, r)| (b, r.squared_norm()))
            .collect())
    }

    pub fn cost(&self, params: &ModelParams) -> Result<f64> {
        Ok(self.block_costs(params)?.iter().map(|(_, c)| c).sum())
    }

    /// All rows stacked, with the Jacobian over the full parameter layout.
    pub fn full_rows(&self, params: &ModelParams, jacobian: bool) -> Result<Rows> {
        let mut all = Rows::new(jacobian);
        for (_, rows) in self.rows_by_block(params, jacobian)? {
            let offset = all.values.len();
            all.values.extend(rows.values);
            all.entries
                .extend(rows.entries.into_iter().map(|(r, c, v)| (r + offset, c, v)));
        }
        Ok(all)
    }
}

impl LeastSquares for System<'_> {
    fn params(&self) -> usize {
        self.free.len()
    }

    fn evaluate(
        &self,
        x: &DVector<f64>,
        jacobian: bool,
    ) -> Result<(DVector<f64>, Option<DMatrix<f64>>)> {
        let params = self.params_at(x);
        if params.phi.iter().any(|p| !(*p > 0.0)) {
            // outside the model's domain: report an unusable step
            let n = self.full_rows(&self.base, false)?.len();
            return Ok((DVector::from_element(n, f64::INFINITY), None));
        }
        let rows = self.full_rows(&params, jacobian)?;
        let r = DVector::from_vec(rows.values.clone());
        let jac = jacobian.then(|| {
            let mut j = DMatrix::zeros(rows.len(), self.free.len());
            for &(row, col, v) in &rows.entries {
                if let Some(k) = self.column[col] {
                    j[(row, k)] += v;
                }
            }
            j
        });
        Ok((r, jac))
    }
}

/// Observation sizes must match the networks of the model.
pub fn check_observation(model: &BodyModel, obs: &FrameObservation) -> Result<()> {
    let check = |label: &str, o: &crate::pofield::Observation, joints: usize, parts: usize| {
        if o.keypoints.len() != joints || o.orientations.len() != parts {
            return Err(Error::JointSetMismatch(format!(
                "{label} observation has {} keypoints / {} orientations, model expects {joints} / {parts}",
                o.keypoints.len(),
                o.orientations.len()
            )));
        }
        Ok(())
    };
    let b = &model.body.skeleton;
    check("body", &obs.body, b.joint_count(), b.part_count())?;
    if let Some(t) = &obs.body.toes {
        if !model.toes.is_empty() && t.len() != model.toes.len() {
            return Err(Error::JointSetMismatch(format!(
                "{} toe keypoints, model has {}",
                t.len(),
                model.toes.len()
            )));
        }
    }
    if let (Some(f), Some(fm)) = (&obs.body.face, &model.face) {
        if f.len() != fm.landmark_count() {
            return Err(Error::JointSetMismatch(format!(
                "{} face keypoints, model has {}",
                f.len(),
                fm.landmark_count()
            )));
        }
    }
    for (net, o) in [
        (Network::LeftHand, &obs.left_hand),
        (Network::RightHand, &obs.right_hand),
    ] {
        if let (Some(o), Some(map)) = (o, model.network(net)) {
            check(
                net.label(),
                o,
                map.skeleton.joint_count(),
                map.skeleton.part_count(),
            )?;
        }
    }
    Ok(())
}
