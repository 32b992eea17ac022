use serde::{Deserialize, Serialize};

const STANDARD_SYSTEM: &str = include_str!("../../assets/prompts/standard_system.txt");
const VOLUME_SYSTEM: &str = include_str!("../../assets/prompts/volume_system.txt");
const STANDARD_EXAMPLES: &str = include_str!("../../assets/prompts/standard_examples.json");
const VOLUME_EXAMPLES: &str = include_str!("../../assets/prompts/volume_examples.json");

const DURATION_SENTENCE: &str =
    "The audio length is 10 seconds, and thus you should have at least one call having end_time=10.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateVariant {
    #[default]
    Standard,
    /// Asks for a LUFS volume on every call.
    VolumeControl,
}

impl std::str::FromStr for TemplateVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "standard" => Ok(TemplateVariant::Standard),
            "volume_control" | "volume-control" | "volume" => Ok(TemplateVariant::VolumeControl),
            other => Err(format!("unknown template variant `{other}` (expected standard or volume_control)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamplePair {
    pub user: String,
    pub assistant: String,
}

/// System instruction plus in-context examples shipped under
/// `assets/prompts/`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PromptTemplate {
    pub system_instruction: String,
    pub in_context_examples: Vec<ExamplePair>,
    pub variant: TemplateVariant,
}

impl PromptTemplate {
    pub fn for_variant(variant: TemplateVariant) -> Self {
        let (system, examples) = match variant {
            TemplateVariant::Standard => (STANDARD_SYSTEM, STANDARD_EXAMPLES),
            TemplateVariant::VolumeControl => (VOLUME_SYSTEM, VOLUME_EXAMPLES),
        };
        PromptTemplate {
            system_instruction: system.to_string(),
            in_context_examples: serde_json::from_str(examples).expect("bundled examples are valid JSON"),
            variant,
        }
    }

    pub fn standard() -> Self {
        Self::for_variant(TemplateVariant::Standard)
    }

    pub fn volume_control() -> Self {
        Self::for_variant(TemplateVariant::VolumeControl)
    }

    /// Rewrites the audio-length requirement for a timeline other than 10 s.
    /// The in-context examples keep their 10 s timelines.
    pub fn with_total_duration(mut self, seconds: f64) -> Self {
        if seconds != 10.0 {
            let replacement = format!(
                "The audio length is {seconds} seconds, and thus you should have at least one call having end_time={seconds}."
            );
            self.system_instruction = self.system_instruction.replace(DURATION_SENTENCE, &replacement);
        }
        self
    }
}
