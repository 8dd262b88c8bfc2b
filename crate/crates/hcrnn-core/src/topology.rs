//! Joint topologies: how a dataset's annotated joints split into palm
//! joints and five kinematic finger chains.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One finger: an ordered chain of joints, root (MCP) first.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FingerChain {
    pub name: String,
    /// Joint names along the kinematic chain, MCP first.
    pub joints: Vec<String>,
}

impl FingerChain {
    pub fn len(&self) -> usize {
        self.joints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.joints.is_empty()
    }
}

/// Dataset-specific palm/finger joint layout.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct JointTopology {
    pub name: String,
    pub palm_joints: Vec<String>,
    pub fingers: Vec<FingerChain>,
}

impl JointTopology {
    /// 21 joints: 1 palm joint, 4 per finger.
    pub fn msra() -> Self {
        JointTopology::uniform("msra", 1, 4)
    }

    /// 16 joints: 1 palm joint, 3 per finger.
    pub fn icvl() -> Self {
        JointTopology::uniform("icvl", 1, 3)
    }

    /// 14 joints: 4 palm joints, 2 per finger. The palm/finger split of
    /// this subset is not published as text, so this preset is a
    /// placeholder; override it with a custom descriptor where it matters.
    pub fn nyu() -> Self {
        JointTopology::uniform("nyu", 4, 2)
    }

    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "msra" => Ok(Self::msra()),
            "icvl" => Ok(Self::icvl()),
            "nyu" => Ok(Self::nyu()),
            other => Err(Error::Config(format!(
                "unknown topology preset `{other}` (expected msra, icvl, or nyu)"
            ))),
        }
    }

    fn uniform(name: &str, palm: usize, per_finger: usize) -> Self {
        let finger_names = ["thumb", "index", "middle", "ring", "little"];
        let joint_names = ["mcp", "pip", "dip", "tip"];
        let fingers = finger_names
            .iter()
            .map(|f| FingerChain {
                name: (*f).to_string(),
                joints: (0..per_finger)
                    .map(|j| {
                        if per_finger <= 4 {
                            // Last joint in the chain is always the tip.
                            if j + 1 == per_finger {
                                format!("{f}_tip")
                            } else {
                                format!("{f}_{}", joint_names[j])
                            }
                        } else {
                            format!("{f}_j{j}")
                        }
                    })
                    .collect(),
            })
            .collect();
        JointTopology {
            name: name.to_string(),
            palm_joints: (0..palm).map(|i| format!("palm_{i}")).collect(),
            fingers,
        }
    }

    pub fn palm_count(&self) -> usize {
        self.palm_joints.len()
    }

    /// Chain length per finger, in branch order.
    pub fn finger_lengths(&self) -> Vec<usize> {
        self.fingers.iter().map(|f| f.len()).collect()
    }

    /// Total annotated joint count T = P + Σ N_k.
    pub fn total_joints(&self) -> usize {
        self.palm_count() + self.fingers.iter().map(|f| f.len()).sum::<usize>()
    }

    /// Flat joint order used everywhere: palm joints, then each finger's
    /// chain MCP→tip, fingers in declaration order.
    pub fn joint_names(&self) -> Vec<String> {
        let mut names = self.palm_joints.clone();
        for f in &self.fingers {
            names.extend(f.joints.iter().cloned());
        }
        names
    }

    pub fn validate(&self) -> Result<()> {
        if self.palm_joints.is_empty() {
            return Err(Error::Validation("topology needs at least one palm joint".into()));
        }
        if self.fingers.len() != 5 {
            return Err(Error::Validation(format!(
                "topology needs exactly 5 fingers, got {}",
                self.fingers.len()
            )));
        }
        if self.fingers.iter().any(|f| f.is_empty()) {
            return Err(Error::Validation("every finger chain needs at least one joint".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("topology serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let t: JointTopology =
            serde_json::from_str(s).map_err(|e| Error::Format(format!("topology descriptor: {e}")))?;
        t.validate()?;
        Ok(t)
    }
}
