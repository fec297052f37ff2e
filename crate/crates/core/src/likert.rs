//! Ordered, labelled response scales and the reply parser.

use serde::{Deserialize, Serialize};
use thiserror::Error;

const LEXICAL_LABELS: [&str; 9] = [
    "Extremely Inaccurate",
    "Very Inaccurate",
    "Moderately Inaccurate",
    "Slightly Inaccurate",
    "Neither Accurate Nor Inaccurate",
    "Slightly Accurate",
    "Moderately Accurate",
    "Very Accurate",
    "Extremely Accurate",
];

const PIR_LABELS: [&str; 5] = [
    "Strongly disagree",
    "Disagree",
    "Neutral",
    "Agree",
    "Strongly agree",
];

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ScaleError {
    #[error("scale needs at least two labels")]
    TooFewLabels,
    #[error("duplicate scale label {0:?}")]
    DuplicateLabel(String),
    #[error("no scale label prefixes the reply")]
    Unparseable,
    #[error("value {value} outside scale 1..={points}")]
    OutOfRange { value: u8, points: u8 },
}

/// A Likert scale; label `i` (0-based) carries the value `i + 1`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertScale {
    labels: Vec<String>,
}

impl LikertScale {
    pub fn new<S: Into<String>>(labels: impl IntoIterator<Item = S>) -> Result<Self, ScaleError> {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(ScaleError::TooFewLabels);
        }
        for (i, label) in labels.iter().enumerate() {
            let norm = normalize(label);
            if labels[..i].iter().any(|other| normalize(other) == norm) {
                return Err(ScaleError::DuplicateLabel(label.clone()));
            }
        }
        Ok(Self { labels })
    }

    /// The 9-point accurate/inaccurate scale used for adjective self-ratings.
    pub fn lexical() -> Self {
        Self::new(LEXICAL_LABELS).expect("static labels are valid")
    }

    /// The 5-point agreement scale used for the HEXACO-PI-R items.
    pub fn pir() -> Self {
        Self::new(PIR_LABELS).expect("static labels are valid")
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn points(&self) -> u8 {
        self.labels.len() as u8
    }

    pub fn midpoint(&self) -> f64 {
        (f64::from(self.points()) + 1.0) / 2.0
    }

    /// Label text for a value in `1..=points`.
    pub fn render(&self, value: u8) -> Result<&str, ScaleError> {
        if value == 0 || value > self.points() {
            return Err(ScaleError::OutOfRange { value, points: self.points() });
        }
        Ok(&self.labels[usize::from(value) - 1])
    }

    /// Parses a reply that is required to start with one of the labels.
    ///
    /// Leading quotes, markdown emphasis and whitespace are ignored, matching
    /// is case-insensitive, and the longest matching label wins. A label only
    /// matches on a word boundary, so "Agreeable" does not parse as "Agree".
    pub fn parse(&self, raw: &str) -> Result<u8, ScaleError> {
        let text = normalize(strip_decoration(raw));
        let mut best: Option<(usize, u8)> = None;
        for (i, label) in self.labels.iter().enumerate() {
            let label = normalize(label);
            if let Some(rest) = text.strip_prefix(label.as_str()) {
                let boundary = rest.chars().next().map_or(true, |c| !c.is_alphanumeric());
                if boundary && best.map_or(true, |(len, _)| label.len() > len) {
                    best = Some((label.len(), i as u8 + 1));
                }
            }
        }
        best.map(|(_, value)| value).ok_or(ScaleError::Unparseable)
    }
}

fn strip_decoration(raw: &str) -> &str {
    raw.trim_start_matches(|c: char| {
        c.is_whitespace() || matches!(c, '"' | '\'' | '`' | '*' | '_' | '#' | '>' | '“' | '”' | '‘' | '’')
    })
}

/// Lower-cases and collapses whitespace runs to a single space.
fn normalize(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut pending_space = false;
    for c in s.chars() {
        if c.is_whitespace() {
            pending_space = !out.is_empty();
        } else {
            if pending_space {
                out.push(' ');
                pending_space = false;
            }
            out.extend(c.to_lowercase());
        }
    }
    out
}
