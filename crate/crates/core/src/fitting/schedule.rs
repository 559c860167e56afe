//! Stage schedules: which joints are free and which residual blocks are active.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BodyModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Body2d,
    BodyPof,
    BodyPrior,
    Hand2d,
    HandPof,
    HandPrior,
    Toes,
    Face,
    ShapeReg,
    ExpressionReg,
    /// Flow target (texture) term; tracking only.
    Tex,
    /// Depth smoothness against the previous frame; tracking only.
    DepthSmooth,
}

impl Block {
    /// Every block of the single-frame objective.
    pub const FRAME: [Block; 10] = [
        Block::Body2d,
        Block::BodyPof,
        Block::BodyPrior,
        Block::Hand2d,
        Block::HandPof,
        Block::HandPrior,
        Block::Toes,
        Block::Face,
        Block::ShapeReg,
        Block::ExpressionReg,
    ];

    pub fn label(self) -> &'static str {
        match self {
            Block::Body2d => "body_2d",
            Block::BodyPof => "body_pof",
            Block::BodyPrior => "body_prior",
            Block::Hand2d => "hand_2d",
            Block::HandPof => "hand_pof",
            Block::HandPrior => "hand_prior",
            Block::Toes => "toes",
            Block::Face => "face",
            Block::ShapeReg => "shape_reg",
            Block::ExpressionReg => "expression_reg",
            Block::Tex => "tex",
            Block::DepthSmooth => "depth_smooth",
        }
    }
}

/// Joints a stage may move.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JointSet {
    /// Neck, shoulders and hips.
    Torso,
    /// All body-network joints.
    Body,
    /// Every model joint.
    All,
    Named(Vec<String>),
}

pub const TORSO_JOINTS: [&str; 5] = ["neck", "r_shoulder", "l_shoulder", "r_hip", "l_hip"];

impl JointSet {
    pub fn resolve(&self, model: &BodyModel) -> Result<BTreeSet<usize>> {
        let named = |names: &mut dyn Iterator<Item = &str>| {
            names
                .map(|n| {
                    model
                        .skeleton
                        .joint_index(n)
                        .ok_or_else(|| Error::Config(format!("unknown joint {n:?} in stage")))
                })
                .collect::<Result<BTreeSet<_>>>()
        };
        match self {
            JointSet::Torso => named(&mut TORSO_JOINTS.iter().copied()),
            JointSet::Body => Ok(model.body.joints.iter().copied().collect()),
            JointSet::All => Ok((0..model.skeleton.joint_count()).collect()),
            JointSet::Named(names) => named(&mut names.iter().map(String::as_str)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Stage {
    pub name: String,
    pub joints: JointSet,
    pub blocks: Vec<Block>,
    pub max_iter: usize,
}

impl Stage {
    pub fn has(&self, block: Block) -> bool {
        self.blocks.contains(&block)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageSchedule {
    pub stages: Vec<Stage>,
}

impl Default for StageSchedule {
    fn default() -> Self {
        let body = vec![Block::Body2d, Block::BodyPof, Block::BodyPrior];
        let mut limbs = body.clone();
        limbs.push(Block::ShapeReg);
        Self {
            stages: vec![
                Stage {
                    name: "torso".into(),
                    joints: JointSet::Torso,
                    blocks: body,
                    max_iter: 50,
                },
                Stage {
                    name: "limbs".into(),
                    joints: JointSet::Body,
                    blocks: limbs,
                    max_iter: 100,
                },
                Stage {
                    name: "full".into(),
                    joints: JointSet::All,
                    blocks: Block::FRAME.to_vec(),
                    max_iter: 100,
                },
            ],
        }
    }
}

impl StageSchedule {
    /// Resolved joint sets, after checking that they are nested and that the
    /// last stage carries the whole single-frame objective.
    pub fn validate(&self, model: &BodyModel) -> Result<Vec<BTreeSet<usize>>> {
        let last = self
            .stages
            .last()
            .ok_or_else(|| Error::Config("stage schedule is empty".into()))?;
        if let Some(missing) = Block::FRAME.iter().find(|b| !last.has(**b)) {
            return Err(Error::Config(format!(
                "final stage {:?} does not activate {}",
                last.name,
                missing.label()
            )));
        }
        let sets = self
            .stages
            .iter()
            .map(|s| s.joints.resolve(model))
            .collect::<Result<Vec<_>>>()?;
        for (w, stage) in sets.windows(2).zip(self.stages.iter().skip(1)) {
            if !w[0].is_subset(&w[1]) {
                return Err(Error::Config(format!(
                    "stage {:?} drops joints of the stage before it",
                    stage.name
                )));
            }
        }
        Ok(sets)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelSpec;

    #[test]
    fn default_schedule_is_valid_and_nested() {
        let model = BodyModel::new(&ModelSpec::default()).unwrap();
        let sets = StageSchedule::default().validate(&model).unwrap();
        assert_eq!(sets[0].len(), 5);
        assert_eq!(sets[1].len(), 18);
        assert_eq!(sets[2].len(), model.skeleton.joint_count());
    }

    #[test]
    fn non_nested_or_incomplete_schedules_are_rejected() {
        let model = BodyModel::new(&ModelSpec::body_only()).unwrap();
        let mut s = StageSchedule::default();
        s.stages[1].joints = JointSet::Named(vec!["neck".into()]);
        assert!(s.validate(&model).is_err());

        let mut s = StageSchedule::default();
        s.stages[2].blocks.retain(|b| *b != Block::Face);
        assert!(s.validate(&model).is_err());
    }
}
