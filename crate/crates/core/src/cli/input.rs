//! Parsers for the solution files and moment lists accepted on the command
//! line.

use serde::Deserialize;

use crate::moments::MomentSequence;
use crate::recover::{DiscreteMeasure, RecoverError};
use crate::verify::ClaimedEquilibrium;

#[derive(Debug, thiserror::Error)]
pub enum SolutionParseError {
    #[error("invalid solution JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("player{player}[{state}]: {source}")]
    Measure {
        player: u8,
        state: usize,
        source: RecoverError,
    },
    #[error("`value` has {value} entries but `player1` has {player1} and `player2` has {player2}")]
    Shape {
        value: usize,
        player1: usize,
        player2: usize,
    },
    #[error("non-finite entry in `value`")]
    NonFiniteValue,
}

#[derive(Deserialize)]
struct SolutionInput {
    value: Vec<f64>,
    player1: Vec<StrategyInput>,
    player2: Vec<StrategyInput>,
}

#[derive(Deserialize)]
struct StrategyInput {
    atoms: Vec<f64>,
    weights: Vec<f64>,
}

/// Reads the `value`, `player1` and `player2` fields of a solution file.
/// Other fields (moments, residuals, solver statistics) are ignored.
pub fn parse_solution_json(text: &str) -> Result<ClaimedEquilibrium, SolutionParseError> {
    let input: SolutionInput = serde_json::from_str(text)?;
    let n = input.value.len();
    if input.player1.len() != n || input.player2.len() != n {
        return Err(SolutionParseError::Shape {
            value: n,
            player1: input.player1.len(),
            player2: input.player2.len(),
        });
    }
    if input.value.iter().any(|v| !v.is_finite()) {
        return Err(SolutionParseError::NonFiniteValue);
    }
    let measures = |list: Vec<StrategyInput>, player: u8| {
        list.into_iter()
            .enumerate()
            .map(|(state, s)| {
                DiscreteMeasure::new(s.atoms, s.weights).map_err(|source| SolutionParseError::Measure {
                    player,
                    state,
                    source,
                })
            })
            .collect::<Result<Vec<_>, _>>()
    };
    Ok(ClaimedEquilibrium {
        value: input.value,
        player1: measures(input.player1, 1)?,
        player2: measures(input.player2, 2)?,
    })
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MomentListError {
    #[error("empty moment list")]
    Empty,
    #[error("entry {index} ({token:?}) is not a number")]
    BadNumber { index: usize, token: String },
    #[error("entry {index} is not finite")]
    NonFinite { index: usize },
}

/// Parses `"1, .614, .614"`. Entries may be separated by commas, semicolons
/// or whitespace, and the list may be wrapped in brackets.
pub fn parse_moment_list(text: &str) -> Result<MomentSequence, MomentListError> {
    let body = text.trim();
    let body = body
        .strip_prefix('[')
        .and_then(|b| b.strip_suffix(']'))
        .unwrap_or(body);
    let mut values = Vec::new();
    for (index, token) in body
        .split(|c: char| c == ',' || c == ';' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .enumerate()
    {
        let v: f64 = token.parse().map_err(|_| MomentListError::BadNumber {
            index,
            token: token.to_string(),
        })?;
        if !v.is_finite() {
            return Err(MomentListError::NonFinite { index });
        }
        values.push(v);
    }
    if values.is_empty() {
        return Err(MomentListError::Empty);
    }
    Ok(MomentSequence::new(values))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moment_lists() {
        let m = parse_moment_list("1,.614,.614").unwrap();
        assert_eq!(m.values(), &[1.0, 0.614, 0.614]);
        let m = parse_moment_list(" [1; 0.5  0.25]\n").unwrap();
        assert_eq!(m.values(), &[1.0, 0.5, 0.25]);
        assert_eq!(parse_moment_list(" , "), Err(MomentListError::Empty));
        assert!(matches!(
            parse_moment_list("1,x"),
            Err(MomentListError::BadNumber { index: 1, .. })
        ));
        assert_eq!(parse_moment_list("1,inf"), Err(MomentListError::NonFinite { index: 1 }));
    }

    #[test]
    fn solution_files() {
        let text = r#"{"value": [0.5], "alpha": null,
            "player1": [{"moments": [1, 0.5], "atoms": [0, 1], "weights": [0.5, 0.5]}],
            "player2": [{"atoms": [0.25], "weights": [1]}]}"#;
        let eq = parse_solution_json(text).unwrap();
        assert_eq!(eq.value, vec![0.5]);
        assert_eq!(eq.player1[0].atoms(), &[0.0, 1.0]);

        let err = parse_solution_json(r#"{"value": [0.5], "player1": []}"#).unwrap_err();
        assert!(err.to_string().contains("player2"), "{err}");
        let err = parse_solution_json(
            r#"{"value": [0.5], "player1": [{"atoms": [2], "weights": [1]}], "player2": [{"atoms": [0], "weights": [1]}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, SolutionParseError::Measure { player: 1, state: 0, .. }));
    }
}
