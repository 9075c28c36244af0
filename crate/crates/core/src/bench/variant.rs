use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fusion::FusionKind;

/// Which text table a variant reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextSource {
    /// Embedded generated descriptions.
    Grounded,
    /// Embedded product titles.
    Title,
}

/// Item representation evaluated by one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    TextGrounded,
    TextTitle,
    VisionOnly,
    ConcatGrounded,
    ConcatTitle,
    AverageGrounded,
    AverageTitle,
    GatingGrounded,
    GatingTitle,
    AttentionGrounded,
    AttentionTitle,
    SmoreLiteGrounded,
    SmoreLiteTitle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Representation {
    Text(TextSource),
    Vision,
    Fused(FusionKind, TextSource),
}

impl Variant {
    pub const ALL: [Variant; 13] = [
        Variant::TextGrounded,
        Variant::TextTitle,
        Variant::AttentionGrounded,
        Variant::ConcatGrounded,
        Variant::AverageGrounded,
        Variant::SmoreLiteGrounded,
        Variant::AttentionTitle,
        Variant::ConcatTitle,
        Variant::AverageTitle,
        Variant::SmoreLiteTitle,
        Variant::GatingTitle,
        Variant::VisionOnly,
        Variant::GatingGrounded,
    ];

    /// The twelve-row comparison: text baselines, fusion over each text
    /// source, gating and vision-only.
    pub fn standard_twelve() -> Vec<Variant> {
        Self::ALL[..12].to_vec()
    }

    pub fn name(self) -> &'static str {
        match self {
            Variant::TextGrounded => "text-grounded",
            Variant::TextTitle => "text-title",
            Variant::VisionOnly => "vision-only",
            Variant::ConcatGrounded => "concat-grounded",
            Variant::ConcatTitle => "concat-title",
            Variant::AverageGrounded => "average-grounded",
            Variant::AverageTitle => "average-title",
            Variant::GatingGrounded => "gating-grounded",
            Variant::GatingTitle => "gating-title",
            Variant::AttentionGrounded => "attention-grounded",
            Variant::AttentionTitle => "attention-title",
            Variant::SmoreLiteGrounded => "smore-lite-grounded",
            Variant::SmoreLiteTitle => "smore-lite-title",
        }
    }

    pub fn representation(self) -> Representation {
        use FusionKind::*;
        use TextSource::*;
        match self {
            Variant::TextGrounded => Representation::Text(Grounded),
            Variant::TextTitle => Representation::Text(Title),
            Variant::VisionOnly => Representation::Vision,
            Variant::ConcatGrounded => Representation::Fused(Concat, Grounded),
            Variant::ConcatTitle => Representation::Fused(Concat, Title),
            Variant::AverageGrounded => Representation::Fused(Average, Grounded),
            Variant::AverageTitle => Representation::Fused(Average, Title),
            Variant::GatingGrounded => Representation::Fused(Gating, Grounded),
            Variant::GatingTitle => Representation::Fused(Gating, Title),
            Variant::AttentionGrounded => Representation::Fused(Attention, Grounded),
            Variant::AttentionTitle => Representation::Fused(Attention, Title),
            Variant::SmoreLiteGrounded => Representation::Fused(Graph, Grounded),
            Variant::SmoreLiteTitle => Representation::Fused(Graph, Title),
        }
    }

    pub fn text_source(self) -> Option<TextSource> {
        match self.representation() {
            Representation::Text(s) | Representation::Fused(_, s) => Some(s),
            Representation::Vision => None,
        }
    }

    pub fn uses_vision(self) -> bool {
        !matches!(self.representation(), Representation::Text(_))
    }

    /// Needs a trainer before it can be scored.
    pub fn is_trained(self) -> bool {
        matches!(
            self.representation(),
            Representation::Fused(FusionKind::Gating | FusionKind::Attention | FusionKind::Graph, _)
        )
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| {
                let names: Vec<&str> = Self::ALL.iter().map(|v| v.name()).collect();
                format!("unknown variant {s:?} (expected one of {})", names.join(", "))
            })
    }
}
