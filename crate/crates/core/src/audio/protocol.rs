//! Five-column trial lists: `speaker_id utt_id - attack_id key`.

use std::collections::HashSet;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("protocol line {line}: {message}")]
pub struct ProtocolError {
    pub line: usize,
    pub message: String,
}

/// Class label. The numeric value is the logit index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Spoof = 0,
    Bonafide = 1,
}

impl Label {
    pub fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Spoof => "spoof",
            Label::Bonafide => "bonafide",
        })
    }
}

impl FromStr for Label {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bonafide" => Ok(Label::Bonafide),
            "spoof" => Ok(Label::Spoof),
            other => Err(format!("unknown key {other:?} (expected bonafide or spoof)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Trial {
    pub speaker_id: String,
    pub utt_id: String,
    pub attack_id: String,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TrialSet {
    pub trials: Vec<Trial>,
    pub root: PathBuf,
}

impl TrialSet {
    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    pub fn count(&self, label: Label) -> usize {
        self.trials.iter().filter(|t| t.label == label).count()
    }

    /// Concatenates two sets, rejecting utterance ids present in both.
    pub fn union(&self, other: &TrialSet) -> Result<TrialSet, ProtocolError> {
        let mut seen: HashSet<&str> = self.trials.iter().map(|t| t.utt_id.as_str()).collect();
        for (i, t) in other.trials.iter().enumerate() {
            if !seen.insert(&t.utt_id) {
                return Err(ProtocolError {
                    line: i + 1,
                    message: format!("utterance {} appears in both sets", t.utt_id),
                });
            }
        }
        let mut trials = self.trials.clone();
        trials.extend(other.trials.iter().cloned());
        Ok(TrialSet {
            trials,
            root: self.root.clone(),
        })
    }
}

pub fn parse_protocol(text: &str) -> Result<TrialSet, ProtocolError> {
    let mut trials = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let err = |message: String| ProtocolError {
            line: line_no,
            message,
        };
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.is_empty() {
            continue;
        }
        if cols.len() != 5 {
            return Err(err(format!("expected 5 columns, found {}", cols.len())));
        }
        let label = cols[4].parse::<Label>().map_err(err)?;
        if !seen.insert(cols[1].to_string()) {
            return Err(err(format!("duplicate utterance id {}", cols[1])));
        }
        trials.push(Trial {
            speaker_id: cols[0].to_string(),
            utt_id: cols[1].to_string(),
            attack_id: cols[3].to_string(),
            label,
        });
    }
    Ok(TrialSet {
        trials,
        root: PathBuf::new(),
    })
}

/// Inverse of [`parse_protocol`]; the unused third column is written as `-`.
pub fn write_protocol(set: &TrialSet) -> String {
    set.trials
        .iter()
        .map(|t| format!("{} {} - {} {}\n", t.speaker_id, t.utt_id, t.attack_id, t.label))
        .collect()
}
