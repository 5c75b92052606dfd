use thiserror::Error;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum EnvError {
    #[error("the game is over")]
    Terminal,
    #[error("player {player} may not take action {action}")]
    IllegalAction { player: usize, action: usize },
    #[error("player {player} is not to act")]
    NotToAct { player: usize },
    #[error("expected actions for players {expected:?}, got {got:?}")]
    ActionSet {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("player {0} out of range")]
    PlayerOutOfRange(usize),
    #[error("transcript: {0}")]
    Transcript(String),
    #[error("replay diverged at turn {turn}: expected {expected}, got {actual}")]
    ReplayMismatch {
        turn: u32,
        expected: String,
        actual: String,
    },
}
