use serde::{Deserialize, Serialize};

/// Hidden-layer widths shared by the single-branch baselines and the
/// bilateral model.
///
/// A baseline network is `input → trunk… → branch… → classes`, every hidden
/// layer followed by ReLU. The bilateral model shares the trunk and gives
/// each branch its own copy of the `branch` layers; the feature vector is the
/// last branch activation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Architecture {
    pub trunk: Vec<usize>,
    pub branch: Vec<usize>,
}

impl Default for Architecture {
    fn default() -> Self {
        Self {
            trunk: vec![64, 64],
            branch: vec![32],
        }
    }
}

impl Architecture {
    /// Width of the feature vector fed to the classifier.
    pub fn feature_dim(&self) -> usize {
        *self.branch.last().or(self.trunk.last()).expect("architecture has no hidden layers")
    }

    pub fn trunk_out(&self, input: usize) -> usize {
        self.trunk.last().copied().unwrap_or(input)
    }

    /// Layer widths of the equivalent single-branch network.
    pub fn plain_dims(&self, input: usize, classes: usize) -> Vec<usize> {
        let mut dims = vec![input];
        dims.extend(&self.trunk);
        dims.extend(&self.branch);
        dims.push(classes);
        dims
    }

    pub fn validate(&self) -> crate::Result<()> {
        if self.branch.is_empty() || self.trunk.iter().chain(&self.branch).any(|&w| w == 0) {
            return Err(crate::Error::Config(format!(
                "architecture needs at least one branch layer and positive widths: {self:?}"
            )));
        }
        Ok(())
    }
}
