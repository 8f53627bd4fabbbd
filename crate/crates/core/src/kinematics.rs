//! Revolute kinematic chains.
//!
//! Each link is a fixed transform `L_i` followed by a rotation `Rz(θ_i)`
//! about the joint's local z axis, so the pose of joint `i` in the frame of
//! joint `i-1` is `L_i · Rz(θ_i)`.

use std::path::Path;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{pose_to_transform, rot_z, Pose6, RigidTransform};
use crate::io;

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicLink {
    pose: Pose6,
    transform: RigidTransform,
}

impl KinematicLink {
    pub fn new(pose: Pose6) -> Result<Self> {
        if !pose.is_finite() {
            return Err(Error::InvalidInput("link pose must be finite".into()));
        }
        let pose = pose.wrapped();
        Ok(KinematicLink {
            pose,
            transform: pose_to_transform(&pose),
        })
    }

    pub fn pose(&self) -> &Pose6 {
        &self.pose
    }

    /// The fixed mechanism `L` leading into the joint.
    pub fn transform(&self) -> &RigidTransform {
        &self.transform
    }

    /// `L · Rz(θ)`.
    pub fn joint_transform(&self, angle: f64) -> RigidTransform {
        self.transform * RigidTransform::from_parts_unchecked(rot_z(angle), Vector3::zeros())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicChain {
    links: Vec<KinematicLink>,
}

/// Joint angles in radians, one per link.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct JointAngles(pub Vec<f64>);

impl JointAngles {
    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for JointAngles {
    fn from(v: Vec<f64>) -> Self {
        JointAngles(v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct LinkConfig {
    pose: Pose6,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    links: Vec<LinkConfig>,
}

impl KinematicChain {
    pub fn new(links: Vec<KinematicLink>) -> Result<Self> {
        if links.is_empty() {
            return Err(Error::EmptyChain);
        }
        Ok(KinematicChain { links })
    }

    pub fn from_poses(poses: &[Pose6]) -> Result<Self> {
        let links = poses
            .iter()
            .map(|p| KinematicLink::new(*p))
            .collect::<Result<Vec<_>>>()?;
        Self::new(links)
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    pub fn links(&self) -> &[KinematicLink] {
        &self.links
    }

    /// Appends `other` after the last joint of `self`.
    pub fn concat(&self, other: &KinematicChain) -> KinematicChain {
        let mut links = self.links.clone();
        links.extend(other.links.iter().cloned());
        KinematicChain { links }
    }

    pub fn to_config(&self) -> ChainConfig {
        ChainConfig {
            links: self.links.iter().map(|l| LinkConfig { pose: l.pose }).collect(),
        }
    }

    pub fn from_config(config: &ChainConfig) -> Result<Self> {
        let poses: Vec<Pose6> = config.links.iter().map(|l| l.pose).collect();
        Self::from_poses(&poses)
    }

    fn check_angles(&self, angles: &JointAngles) -> Result<()> {
        if angles.len() != self.links.len() {
            return Err(Error::AngleCountMismatch {
                expected: self.links.len(),
                got: angles.len(),
            });
        }
        if angles.0.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("joint angles must be finite".into()));
        }
        Ok(())
    }

    /// Origin of the final joint's frame in the base frame. Every point of
    /// the final rotation axis is `origin + z'·axis`.
    pub fn wrist_center(&self, angles: &JointAngles) -> Result<Vector3<f64>> {
        self.check_angles(angles)?;
        let n = self.links.len();
        let prefix = self.links[..n - 1]
            .iter()
            .zip(angles.0.iter())
            .fold(RigidTransform::identity(), |acc, (l, &a)| acc * l.joint_transform(a));
        Ok((prefix * *self.links[n - 1].transform()).translation())
    }
}

pub fn forward_kinematics(chain: &KinematicChain, angles: &JointAngles) -> Result<RigidTransform> {
    chain.check_angles(angles)?;
    Ok(chain
        .links
        .iter()
        .zip(angles.0.iter())
        .fold(RigidTransform::identity(), |acc, (l, &a)| acc * l.joint_transform(a)))
}

/// World-frame points `[0, 0, z']` on the final joint's rotation axis.
pub fn axis_test_points(
    chain: &KinematicChain,
    angles: &JointAngles,
    z_values: &[f64],
) -> Result<Vec<Vector3<f64>>> {
    let distinct = z_values
        .iter()
        .any(|z| z_values.iter().any(|w| (z - w).abs() > 0.0));
    if z_values.len() < 2 || !distinct || z_values.iter().any(|z| !z.is_finite()) {
        return Err(Error::TooFewTestPoints);
    }
    let fk = forward_kinematics(chain, angles)?;
    Ok(z_values
        .iter()
        .map(|&z| fk.transform_point(&Vector3::new(0.0, 0.0, z)))
        .collect())
}

pub fn parse_chain(label: &str, text: &str) -> Result<KinematicChain> {
    let cfg: ChainConfig = io::parse_json(label, text)?;
    KinematicChain::from_config(&cfg)
}

pub fn load_chain(path: impl AsRef<Path>) -> Result<KinematicChain> {
    let cfg: ChainConfig = io::read_json(path)?;
    KinematicChain::from_config(&cfg)
}
