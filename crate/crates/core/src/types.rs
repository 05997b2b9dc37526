//! Small shared types.

use serde::{Deserialize, Serialize};

/// Per-frame decision. `Bird` marks frames inside a vocalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FrameLabel {
    Background,
    Bird,
}

impl FrameLabel {
    pub fn is_bird(self) -> bool {
        self == FrameLabel::Bird
    }

    /// SVM target value: +1 for bird, -1 for background.
    pub fn sign(self) -> f64 {
        match self {
            FrameLabel::Bird => 1.0,
            FrameLabel::Background => -1.0,
        }
    }
}
