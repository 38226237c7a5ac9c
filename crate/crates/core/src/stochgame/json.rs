use serde::{Deserialize, Serialize};

use super::{GameError, StochasticGame};
use crate::poly::{BivariatePolynomial, Polynomial};

#[derive(Debug, thiserror::Error)]
pub enum GameParseError {
    #[error("{0}")]
    Json(#[from] serde_json::Error),
    #[error("transition {state} -> {next}: {msg}")]
    Transition {
        state: usize,
        next: usize,
        msg: &'static str,
    },
    #[error("{0}")]
    Shape(#[from] GameError),
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GameFile {
    discount: f64,
    states: Vec<String>,
    payoffs: Vec<Vec<Vec<f64>>>,
    transitions: Vec<Vec<TransitionFile>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TransitionFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a1: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a1a2: Option<Vec<Vec<f64>>>,
}

/// Parses a game from its JSON description:
///
/// ```json
/// { "discount": 0.5, "states": ["1"],
///   "payoffs": [ [[0, 0, 1], [0, -2], [1]] ],
///   "transitions": [ [ {"a1": [1]} ] ] }
/// ```
///
/// Payoff matrices are indexed `[a1 power][a2 power]`. A transition is
/// either `{"a1": [...]}` (coefficients in `a1`) or `{"a1a2": [[...]]}`.
pub fn game_from_json(text: &str) -> Result<StochasticGame, GameParseError> {
    let file: GameFile = serde_json::from_str(text)?;
    let payoff = file
        .payoffs
        .iter()
        .map(|rows| BivariatePolynomial::from_rows(rows))
        .collect();
    let mut transition = Vec::with_capacity(file.transitions.len());
    for (s, row) in file.transitions.iter().enumerate() {
        let mut out = Vec::with_capacity(row.len());
        for (t, tf) in row.iter().enumerate() {
            let p = match (&tf.a1, &tf.a1a2) {
                (Some(c), None) => BivariatePolynomial::from_a1(&Polynomial::new(c.clone())),
                (None, Some(rows)) => BivariatePolynomial::from_rows(rows),
                (Some(_), Some(_)) => {
                    return Err(GameParseError::Transition {
                        state: s,
                        next: t,
                        msg: "give exactly one of `a1` and `a1a2`",
                    })
                }
                (None, None) => {
                    return Err(GameParseError::Transition {
                        state: s,
                        next: t,
                        msg: "missing field `a1` or `a1a2`",
                    })
                }
            };
            out.push(p);
        }
        transition.push(out);
    }
    Ok(StochasticGame::new(file.discount, file.states, payoff, transition)?)
}

/// Serializes a game in the format read by [`game_from_json`].
/// Transitions that do not depend on `a2` are written in the `a1` form.
pub fn game_to_json(g: &StochasticGame) -> String {
    let file = GameFile {
        discount: g.beta(),
        states: g.states().to_vec(),
        payoffs: g.payoffs().iter().map(|p| p.to_rows()).collect(),
        transitions: g
            .transitions()
            .iter()
            .map(|row| {
                row.iter()
                    .map(|p| {
                        if p.deg2() == 0 {
                            TransitionFile {
                                a1: Some(p.a1_part().trimmed().coeffs().to_vec()),
                                a1a2: None,
                            }
                        } else {
                            TransitionFile {
                                a1: None,
                                a1a2: Some(p.to_rows()),
                            }
                        }
                    })
                    .collect()
            })
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("plain data serializes")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stochgame::guessing_game;

    const GUESSING: &str = r#"{
        "discount": 0.5,
        "states": ["1", "2"],
        "payoffs": [ [[0, 0, 1], [0, -2, 0], [1, 0, 0]],
                     [[0, 0, -1], [0, 2, 0], [-1, 0, 0]] ],
        "transitions": [ [ {"a1": [0, 1]}, {"a1": [1, -1]} ],
                         [ {"a1": [1, 0, -1]}, {"a1": [0, 0, 1]} ] ]
    }"#;

    #[test]
    fn parses_guessing_game() {
        let g = game_from_json(GUESSING).unwrap();
        let h = guessing_game();
        for s in 0..2 {
            for x in [0.0, 0.3, 1.0] {
                for y in [0.0, 0.6, 1.0] {
                    assert!((g.payoff(s).evaluate(x, y) - h.payoff(s).evaluate(x, y)).abs() < 1e-15);
                    for t in 0..2 {
                        assert_eq!(g.transition(s, t).evaluate(x, y), h.transition(s, t).evaluate(x, y));
                    }
                }
            }
        }
        assert!(g.single_controller());
    }

    #[test]
    fn round_trips() {
        let g = guessing_game();
        let back = game_from_json(&game_to_json(&g)).unwrap();
        assert_eq!(back.to_owned().payoffs()[0].to_rows(), g.payoffs()[0].to_rows());
        assert_eq!(back.single_controller(), g.single_controller());
    }

    #[test]
    fn unknown_key_is_named() {
        let text = GUESSING.replace("\"discount\"", "\"discout\"");
        let err = game_from_json(&text).unwrap_err().to_string();
        assert!(err.contains("discout"), "{err}");
        let text = GUESSING.replace("{\"a1\": [0, 1]}", "{\"a3\": [0, 1]}");
        let err = game_from_json(&text).unwrap_err().to_string();
        assert!(err.contains("a3"), "{err}");
    }

    #[test]
    fn structural_errors() {
        let text = GUESSING.replace("{\"a1\": [0, 1]}", "{}");
        assert!(matches!(
            game_from_json(&text),
            Err(GameParseError::Transition { state: 0, next: 0, .. })
        ));
        let text = GUESSING.replace("\"states\": [\"1\", \"2\"]", "\"states\": [\"1\"]");
        assert!(matches!(game_from_json(&text), Err(GameParseError::Shape(_))));
        assert!(matches!(game_from_json("{"), Err(GameParseError::Json(_))));
    }

    #[test]
    fn general_transitions_parse() {
        let text = r#"{"discount": 0.3, "states": ["a"], "payoffs": [[[1]]],
            "transitions": [[{"a1a2": [[1]]}]]}"#;
        let g = game_from_json(text).unwrap();
        assert!(g.single_controller());
        let text = r#"{"discount": 0.3, "states": ["a", "b"], "payoffs": [[[1]], [[0]]],
            "transitions": [[{"a1a2": [[0, 1]]}, {"a1a2": [[1, -1]]}], [{"a1": [0]}, {"a1": [1]}]]}"#;
        assert!(!game_from_json(text).unwrap().single_controller());
    }
}
