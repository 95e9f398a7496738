//! Consistency validation over repeated labeling answers.

use alloc::format;

use serde::{Deserialize, Serialize};

use crate::aspect::LabelOutcome;
use crate::error::{Error, Result};

/// Number of times each labeling prompt is issued.
pub const CONSISTENCY_REPEATS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "attribute")]
pub enum Verdict {
    Consistent(usize),
    Rejected,
    Inconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VoteResult {
    pub responses: [LabelOutcome; CONSISTENCY_REPEATS],
    pub verdict: Verdict,
}

/// Unanimity vote: any reject rejects, three identical attributes agree,
/// anything else (including `Unknown`) is inconsistent.
pub fn consistency_vote(outcomes: &[LabelOutcome]) -> Result<VoteResult> {
    let responses: [LabelOutcome; CONSISTENCY_REPEATS] = outcomes.try_into().map_err(|_| {
        Error::Contract(format!(
            "consistency vote needs {CONSISTENCY_REPEATS} outcomes, got {}",
            outcomes.len()
        ))
    })?;
    let verdict = if responses.contains(&LabelOutcome::Reject) {
        Verdict::Rejected
    } else {
        match responses {
            [LabelOutcome::Attribute(a), LabelOutcome::Attribute(b), LabelOutcome::Attribute(c)]
                if a == b && b == c =>
            {
                Verdict::Consistent(a)
            }
            _ => Verdict::Inconsistent,
        }
    };
    Ok(VoteResult { responses, verdict })
}
