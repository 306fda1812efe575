//! The seven class labels.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

/// Emotion class of a window.
///
/// The discriminant is the integer class code used by correlation-based
/// selection and the row/column index of a [`ConfusionMatrix`](crate::eval::ConfusionMatrix).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Emotion {
    Anger = 0,
    Happy = 1,
    Surprise = 2,
    Sad = 3,
    Fear = 4,
    Disgust = 5,
    Neutral = 6,
}

impl Emotion {
    /// All classes in code order (the confusion-matrix axis order).
    pub const ALL: [Emotion; 7] = [
        Emotion::Anger,
        Emotion::Happy,
        Emotion::Surprise,
        Emotion::Sad,
        Emotion::Fear,
        Emotion::Disgust,
        Emotion::Neutral,
    ];

    /// Final tie-break order for multi-class voting.
    pub const TIE_BREAK_ORDER: [Emotion; 7] = [
        Emotion::Happy,
        Emotion::Anger,
        Emotion::Surprise,
        Emotion::Sad,
        Emotion::Disgust,
        Emotion::Fear,
        Emotion::Neutral,
    ];

    pub const COUNT: usize = 7;

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Option<Emotion> {
        Emotion::ALL.get(code).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            Emotion::Anger => "anger",
            Emotion::Happy => "happy",
            Emotion::Surprise => "surprise",
            Emotion::Sad => "sad",
            Emotion::Fear => "fear",
            Emotion::Disgust => "disgust",
            Emotion::Neutral => "neutral",
        }
    }

    pub(crate) fn tie_break_rank(self) -> usize {
        Emotion::TIE_BREAK_ORDER
            .iter()
            .position(|&e| e == self)
            .expect("every class is ranked")
    }
}

impl fmt::Display for Emotion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Emotion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let e = match s.trim().to_ascii_lowercase().as_str() {
            "anger" | "angry" => Emotion::Anger,
            "happy" | "happiness" => Emotion::Happy,
            "surprise" | "surprised" => Emotion::Surprise,
            "sad" | "sadness" => Emotion::Sad,
            "fear" | "afraid" | "fearful" => Emotion::Fear,
            "disgust" | "disgusted" => Emotion::Disgust,
            "neutral" => Emotion::Neutral,
            other => return Err(Error::Format(format!("unknown label {other:?}"))),
        };
        Ok(e)
    }
}
