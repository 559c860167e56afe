//! Kinematic skeleton definitions, model parameters and the pure skeleton
//! operations (forward kinematics, part orientations, surface markers).

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kinematics::Posed;

pub const SKELETON_SCHEMA: &str = "pofcap.skeleton/1";

/// Minimum separation (cm) between the two endpoints of a part.
pub const DEGENERATE_EPS: f64 = 1e-8;

const BODY_JSON: &str = include_str!("../assets/body_skeleton.json");
const HAND_JSON: &str = include_str!("../assets/hand_skeleton.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: Option<usize>,
}

/// Joint hierarchy, part list and rest-pose geometry.
///
/// Every non-root joint `n` is the child end of exactly one part `(parent(n), n)`,
/// so parts and bones coincide and shape scales are indexed by part.
#[derive(Debug, Clone, PartialEq)]
pub struct SkeletonDef {
    name: String,
    joints: Vec<Joint>,
    parts: Vec<(usize, usize)>,
    template_offsets: Vec<Vector3<f64>>,
    marker_offsets: Vec<Vec<Vector3<f64>>>,
    root: usize,
    order: Vec<usize>,
    bone_of: Vec<Option<usize>>,
    children: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct JointDoc {
    name: String,
    parent: Option<String>,
    offset: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum MarkerDoc {
    Ring { per_part: usize, radius: f64 },
    Explicit { offsets: Vec<Vec<[f64; 3]>> },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SkeletonDoc {
    schema: String,
    name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    comment: Option<String>,
    joints: Vec<JointDoc>,
    parts: Vec<(String, String)>,
    markers: MarkerDoc,
}

impl SkeletonDef {
    pub fn new(
        name: impl Into<String>,
        joints: Vec<Joint>,
        parts: Vec<(usize, usize)>,
        template_offsets: Vec<Vector3<f64>>,
        marker_offsets: Vec<Vec<Vector3<f64>>>,
    ) -> Result<Self> {
        let n = joints.len();
        let invalid = |msg: String| Error::InvalidSkeleton(msg);
        if n == 0 {
            return Err(invalid("no joints".into()));
        }
        if template_offsets.len() != n {
            return Err(invalid(format!(
                "{} template offsets for {} joints",
                template_offsets.len(),
                n
            )));
        }
        if marker_offsets.len() != parts.len() {
            return Err(invalid(format!(
                "{} marker lists for {} parts",
                marker_offsets.len(),
                parts.len()
            )));
        }
        let roots: Vec<usize> = (0..n).filter(|&j| joints[j].parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(invalid(format!(
                "expected exactly one root, found {}",
                roots.len()
            )));
        }
        let root = roots[0];
        let mut children = vec![Vec::new(); n];
        for (j, joint) in joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                if p >= n || p == j {
                    return Err(invalid(format!(
                        "joint {} has invalid parent {p}",
                        joint.name
                    )));
                }
                children[p].push(j);
            }
        }
        // Breadth-first order from the root; also detects cycles and unreachable joints.
        let mut order = Vec::with_capacity(n);
        order.push(root);
        let mut head = 0;
        while head < order.len() {
            let j = order[head];
            head += 1;
            order.extend(children[j].iter().copied());
        }
        if order.len() != n {
            return Err(invalid("joint parents do not form a tree".into()));
        }
        if parts.len() != n - 1 {
            return Err(invalid(format!(
                "{} parts for {} joints; parts must be the tree edges",
                parts.len(),
                n
            )));
        }
        let mut bone_of = vec![None; n];
        for (p, &(m, c)) in parts.iter().enumerate() {
            if m >= n || c >= n || joints[c].parent != Some(m) {
                return Err(invalid(format!(
                    "part {p} ({m}, {c}) is not a parent-child link"
                )));
            }
            if bone_of[c].replace(p).is_some() {
                return Err(invalid(format!("joint {c} is the child of two parts")));
            }
            let len = template_offsets[c].norm();
            if !(len > 0.0) || !len.is_finite() {
                return Err(invalid(format!(
                    "bone {} has non-positive length",
                    joints[c].name
                )));
            }
        }
        let mut names = std::collections::HashSet::new();
        for j in &joints {
            if !names.insert(j.name.as_str()) {
                return Err(invalid(format!("duplicate joint name {}", j.name)));
            }
        }
        Ok(Self {
            name: name.into(),
            joints,
            parts,
            template_offsets,
            marker_offsets,
            root,
            order,
            bone_of,
            children,
        })
    }

    /// The 18-joint / 17-part body skeleton shipped with the crate.
    pub fn body() -> Self {
        Self::from_json(BODY_JSON).expect("bundled body skeleton is valid")
    }

    /// The 21-joint / 20-part left hand skeleton shipped with the crate.
    pub fn left_hand() -> Self {
        Self::from_json(HAND_JSON).expect("bundled hand skeleton is valid")
    }

    pub fn right_hand() -> Self {
        Self::left_hand().mirrored_x()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: SkeletonDoc = serde_json::from_str(text)?;
        if doc.schema != SKELETON_SCHEMA {
            return Err(Error::InvalidSkeleton(format!(
                "unsupported schema {:?}, expected {SKELETON_SCHEMA:?}",
                doc.schema
            )));
        }
        let index_of = |name: &str| -> Result<usize> {
            doc.joints
                .iter()
                .position(|j| j.name == name)
                .ok_or_else(|| Error::InvalidSkeleton(format!("unknown joint {name:?}")))
        };
        let mut joints = Vec::with_capacity(doc.joints.len());
        let mut offsets = Vec::with_capacity(doc.joints.len());
        for j in &doc.joints {
            let parent = j.parent.as_deref().map(index_of).transpose()?;
            joints.push(Joint {
                name: j.name.clone(),
                parent,
            });
            offsets.push(Vector3::from(j.offset));
        }
        let parts = doc
            .parts
            .iter()
            .map(|(m, n)| Ok((index_of(m)?, index_of(n)?)))
            .collect::<Result<Vec<_>>>()?;
        let markers = match &doc.markers {
            MarkerDoc::Ring { per_part, radius } => parts
                .iter()
                .map(|&(_, c)| ring_markers(&offsets[c], *per_part, *radius))
                .collect(),
            MarkerDoc::Explicit { offsets: m } => m
                .iter()
                .map(|list| list.iter().map(|o| Vector3::from(*o)).collect())
                .collect(),
        };
        Self::new(doc.name, joints, parts, offsets, markers)
    }

    pub fn to_json(&self) -> String {
        let doc = SkeletonDoc {
            schema: SKELETON_SCHEMA.into(),
            name: self.name.clone(),
            comment: None,
            joints: self
                .joints
                .iter()
                .zip(&self.template_offsets)
                .map(|(j, o)| JointDoc {
                    name: j.name.clone(),
                    parent: j.parent.map(|p| self.joints[p].name.clone()),
                    offset: [o.x, o.y, o.z],
                })
                .collect(),
            parts: self
                .parts
                .iter()
                .map(|&(m, n)| (self.joints[m].name.clone(), self.joints[n].name.clone()))
                .collect(),
            markers: MarkerDoc::Explicit {
                offsets: self
                    .marker_offsets
                    .iter()
                    .map(|l| l.iter().map(|o| [o.x, o.y, o.z]).collect())
                    .collect(),
            },
        };
        serde_json::to_string_pretty(&doc).expect("skeleton serializes")
    }

    /// Reflection through the x = 0 plane (left/right swap of the geometry).
    pub fn mirrored_x(&self) -> Self {
        let flip = |v: &Vector3<f64>| Vector3::new(-v.x, v.y, v.z);
        let mut out = self.clone();
        out.template_offsets = self.template_offsets.iter().map(flip).collect();
        out.marker_offsets = self
            .marker_offsets
            .iter()
            .map(|l| l.iter().map(flip).collect())
            .collect();
        out
    }

    /// Grafts `other` onto this skeleton so that `other`'s root coincides with
    /// joint `at`. Returns the merged skeleton plus the maps from `other`'s
    /// joint and part indices into the merged indices.
    pub fn attach(
        &self,
        other: &SkeletonDef,
        at: usize,
        prefix: &str,
    ) -> Result<(SkeletonDef, Vec<usize>, Vec<usize>)> {
        if at >= self.joint_count() {
            return Err(Error::InvalidSkeleton(format!(
                "attachment joint {at} out of range"
            )));
        }
        let mut joints = self.joints.clone();
        let mut offsets = self.template_offsets.clone();
        let mut parts = self.parts.clone();
        let mut markers = self.marker_offsets.clone();
        let mut joint_map = vec![usize::MAX; other.joint_count()];
        joint_map[other.root] = at;
        for (j, joint) in other.joints.iter().enumerate() {
            if j == other.root {
                continue;
            }
            joint_map[j] = joints.len();
            joints.push(Joint {
                name: format!("{prefix}{}", joint.name),
                parent: None,
            });
            offsets.push(other.template_offsets[j]);
        }
        for (j, joint) in other.joints.iter().enumerate() {
            if let Some(p) = joint.parent {
                joints[joint_map[j]].parent = Some(joint_map[p]);
            }
        }
        let mut part_map = Vec::with_capacity(other.part_count());
        for (p, &(m, n)) in other.parts.iter().enumerate() {
            part_map.push(parts.len());
            parts.push((joint_map[m], joint_map[n]));
            markers.push(other.marker_offsets[p].clone());
        }
        let merged = SkeletonDef::new(self.name.clone(), joints, parts, offsets, markers)?;
        Ok((merged, joint_map, part_map))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn joint_count(&self) -> usize {
        self.joints.len()
    }

    pub fn part_count(&self) -> usize {
        self.parts.len()
    }

    pub fn joints(&self) -> &[Joint] {
        &self.joints
    }

    pub fn joint_names(&self) -> Vec<String> {
        self.joints.iter().map(|j| j.name.clone()).collect()
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn parts(&self) -> &[(usize, usize)] {
        &self.parts
    }

    pub fn part_name(&self, part: usize) -> String {
        let (m, n) = self.parts[part];
        format!("{}-{}", self.joints[m].name, self.joints[n].name)
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn parent(&self, joint: usize) -> Option<usize> {
        self.joints[joint].parent
    }

    pub fn children(&self, joint: usize) -> &[usize] {
        &self.children[joint]
    }

    /// Joints ordered so that every parent precedes its children.
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    /// Part (bone) whose child end is `joint`; `None` for the root.
    pub fn bone_of(&self, joint: usize) -> Option<usize> {
        self.bone_of[joint]
    }

    pub fn template_offset(&self, joint: usize) -> &Vector3<f64> {
        &self.template_offsets[joint]
    }

    pub fn template_length(&self, part: usize) -> f64 {
        self.template_offsets[self.parts[part].1].norm()
    }

    pub fn markers(&self, part: usize) -> &[Vector3<f64>] {
        &self.marker_offsets[part]
    }

    pub fn marker_count(&self) -> usize {
        self.marker_offsets.iter().map(Vec::len).sum()
    }

    /// `true` when `joint` lies in the subtree rooted at `ancestor` (inclusive).
    pub fn is_in_subtree(&self, joint: usize, ancestor: usize) -> bool {
        let mut j = Some(joint);
        while let Some(k) = j {
            if k == ancestor {
                return true;
            }
            j = self.joints[k].parent;
        }
        false
    }

    /// Chain from the root down to `joint`, inclusive at both ends.
    pub fn chain_to(&self, joint: usize) -> Vec<usize> {
        let mut chain = vec![joint];
        let mut j = joint;
        while let Some(p) = self.joints[j].parent {
            chain.push(p);
            j = p;
        }
        chain.reverse();
        chain
    }
}

/// Ring markers around a bone: two rings at 1/3 and 2/3 of the bone length.
fn ring_markers(bone: &Vector3<f64>, count: usize, radius: f64) -> Vec<Vector3<f64>> {
    if count == 0 {
        return Vec::new();
    }
    let dir = bone.normalize();
    let helper = if dir.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let e1 = dir.cross(&helper).normalize();
    let e2 = dir.cross(&e1);
    let rings = if count >= 2 { 2 } else { 1 };
    (0..count)
        .map(|i| {
            let ring = i % rings;
            let k = i / rings;
            let per_ring = count.div_ceil(rings);
            let angle =
                2.0 * std::f64::consts::PI * (k as f64 + 0.5 * ring as f64) / per_ring as f64;
            let frac = (ring as f64 + 1.0) / (rings as f64 + 1.0);
            bone * frac + (e1 * angle.cos() + e2 * angle.sin()) * radius
        })
        .collect()
}

/// Pose, shape, translation and expression parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Per-joint axis-angle rotation (rad); the root entry is the global rotation.
    pub theta: Vec<Vector3<f64>>,
    /// Per-bone length scale, indexed by part.
    pub phi: Vec<f64>,
    /// Root translation (cm).
    pub t: Vector3<f64>,
    /// Expression coefficients.
    pub sigma: Vec<f64>,
}

impl ModelParams {
    pub fn rest(skel: &SkeletonDef, expression_dim: usize) -> Self {
        Self {
            theta: vec![Vector3::zeros(); skel.joint_count()],
            phi: vec![1.0; skel.part_count()],
            t: Vector3::zeros(),
            sigma: vec![0.0; expression_dim],
        }
    }

    pub fn check(&self, skel: &SkeletonDef) -> Result<()> {
        if self.theta.len() != skel.joint_count() {
            return Err(Error::Dimension(format!(
                "theta has {} entries for {} joints",
                self.theta.len(),
                skel.joint_count()
            )));
        }
        if self.phi.len() != skel.part_count() {
            return Err(Error::Dimension(format!(
                "phi has {} entries for {} bones",
                self.phi.len(),
                skel.part_count()
            )));
        }
        if let Some(bad) = self.phi.iter().position(|&p| !(p > 0.0)) {
            return Err(Error::Dimension(format!(
                "phi[{bad}] = {} is not positive",
                self.phi[bad]
            )));
        }
        Ok(())
    }

    /// Number of scalar parameters in the flattened layout.
    pub fn flat_len(&self) -> usize {
        3 * self.theta.len() + self.phi.len() + 3 + self.sigma.len()
    }

    /// Flattened layout `[theta (3J) | phi (P) | t (3) | sigma (K)]`.
    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.flat_len());
        for th in &self.theta {
            v.extend_from_slice(th.as_slice());
        }
        v.extend_from_slice(&self.phi);
        v.extend_from_slice(self.t.as_slice());
        v.extend_from_slice(&self.sigma);
        v
    }

    pub fn set_flat(&mut self, v: &[f64]) {
        assert_eq!(v.len(), self.flat_len(), "flat parameter length");
        let j = self.theta.len();
        for (i, th) in self.theta.iter_mut().enumerate() {
            *th = Vector3::new(v[3 * i], v[3 * i + 1], v[3 * i + 2]);
        }
        let p0 = 3 * j;
        let pn = self.phi.len();
        self.phi.copy_from_slice(&v[p0..p0 + pn]);
        let t0 = p0 + pn;
        self.t = Vector3::new(v[t0], v[t0 + 1], v[t0 + 2]);
        self.sigma.copy_from_slice(&v[t0 + 3..]);
    }
}

/// Camera-frame joint positions (cm).
pub fn forward_kinematics(params: &ModelParams, skel: &SkeletonDef) -> Result<Vec<Vector3<f64>>> {
    Ok(Posed::new(params, skel)?.positions)
}

/// Unit direction of every part, from its parent joint to its child joint.
pub fn part_orientations(joints: &[Vector3<f64>], skel: &SkeletonDef) -> Result<Vec<Vector3<f64>>> {
    if joints.len() != skel.joint_count() {
        return Err(Error::Dimension(format!(
            "{} joint positions for {} joints",
            joints.len(),
            skel.joint_count()
        )));
    }
    skel.parts()
        .iter()
        .enumerate()
        .map(|(p, &(m, n))| {
            let d = joints[n] - joints[m];
            let len = d.norm();
            if len <= DEGENERATE_EPS {
                Err(Error::DegeneratePart {
                    name: skel.part_name(p),
                    parent: m,
                    child: n,
                })
            } else {
                Ok(d / len)
            }
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Marker {
    pub part: usize,
    pub position: Vector3<f64>,
}

/// Surface markers rigidly attached to their parts, in part order.
pub fn marker_positions(params: &ModelParams, skel: &SkeletonDef) -> Result<Vec<Marker>> {
    let posed = Posed::new(params, skel)?;
    Ok(posed.markers(skel))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_have_expected_counts() {
        let body = SkeletonDef::body();
        assert_eq!((body.joint_count(), body.part_count()), (18, 17));
        assert_eq!(body.joints()[body.root()].name, "neck");
        let hand = SkeletonDef::left_hand();
        assert_eq!((hand.joint_count(), hand.part_count()), (21, 20));
        assert_eq!(body.marker_count(), 17 * 8);
    }

    #[test]
    fn json_round_trip_preserves_definition() {
        let body = SkeletonDef::body();
        let back = SkeletonDef::from_json(&body.to_json()).unwrap();
        assert_eq!(body, back);
    }

    #[test]
    fn rejects_two_roots() {
        let joints = vec![
            Joint {
                name: "a".into(),
                parent: None,
            },
            Joint {
                name: "b".into(),
                parent: None,
            },
        ];
        let err = SkeletonDef::new("x", joints, vec![], vec![Vector3::zeros(); 2], vec![]);
        assert!(matches!(err, Err(Error::InvalidSkeleton(_))));
    }

    #[test]
    fn rejects_zero_length_bone() {
        let joints = vec![
            Joint {
                name: "a".into(),
                parent: None,
            },
            Joint {
                name: "b".into(),
                parent: Some(0),
            },
        ];
        let err = SkeletonDef::new(
            "x",
            joints,
            vec![(0, 1)],
            vec![Vector3::zeros(); 2],
            vec![vec![]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn rejects_part_that_is_not_an_edge() {
        let joints = vec![
            Joint {
                name: "a".into(),
                parent: None,
            },
            Joint {
                name: "b".into(),
                parent: Some(0),
            },
            Joint {
                name: "c".into(),
                parent: Some(1),
            },
        ];
        let offs = vec![Vector3::zeros(), Vector3::y(), Vector3::y()];
        let err = SkeletonDef::new(
            "x",
            joints,
            vec![(0, 1), (0, 2)],
            offs,
            vec![vec![], vec![]],
        );
        assert!(err.is_err());
    }

    #[test]
    fn part_orientation_examples() {
        let joints = vec![
            Joint {
                name: "a".into(),
                parent: None,
            },
            Joint {
                name: "b".into(),
                parent: Some(0),
            },
        ];
        let skel = SkeletonDef::new(
            "x",
            joints,
            vec![(0, 1)],
            vec![Vector3::zeros(), Vector3::z()],
            vec![vec![]],
        )
        .unwrap();
        let d = part_orientations(&[Vector3::zeros(), Vector3::new(0.0, 0.0, 2.0)], &skel).unwrap();
        assert!((d[0] - Vector3::z()).norm() < 1e-15);
        let d = part_orientations(
            &[Vector3::new(1.0, 1.0, 1.0), Vector3::new(2.0, 2.0, 1.0)],
            &skel,
        )
        .unwrap();
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert!((d[0] - Vector3::new(h, h, 0.0)).norm() < 1e-12);
        let err = part_orientations(&[Vector3::x(), Vector3::x()], &skel).unwrap_err();
        assert!(err.to_string().contains("degenerate part"));
    }

    #[test]
    fn attach_grafts_hand_at_wrist() {
        let body = SkeletonDef::body();
        let wrist = body.joint_index("l_wrist").unwrap();
        let (merged, jmap, pmap) = body
            .attach(&SkeletonDef::left_hand(), wrist, "lh_")
            .unwrap();
        assert_eq!(merged.joint_count(), 18 + 20);
        assert_eq!(merged.part_count(), 17 + 20);
        assert_eq!(jmap[0], wrist);
        assert_eq!(merged.parent(jmap[1]), Some(wrist));
        assert_eq!(merged.parts()[pmap[0]], (wrist, jmap[1]));
    }

    #[test]
    fn flat_layout_round_trips() {
        let skel = SkeletonDef::body();
        let mut p = ModelParams::rest(&skel, 2);
        p.theta[3] = Vector3::new(0.1, 0.2, 0.3);
        p.phi[4] = 1.2;
        p.t = Vector3::new(1.0, 2.0, 3.0);
        p.sigma[1] = -0.5;
        let flat = p.to_flat();
        let mut q = ModelParams::rest(&skel, 2);
        q.set_flat(&flat);
        assert_eq!(p, q);
    }
}
