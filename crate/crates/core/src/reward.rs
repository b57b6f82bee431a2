//! Alert actions and the action x score payoff table.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mews::MewsScore;

pub const NUM_ACTIONS: usize = 5;

/// "Alert MET-id", id in `0..=4`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ActionId(u8);

impl ActionId {
    pub fn new(id: u8) -> Result<Self> {
        if (id as usize) < NUM_ACTIONS {
            Ok(ActionId(id))
        } else {
            Err(Error::Domain(format!("action {id} outside 0..=4")))
        }
    }

    pub(crate) fn from_index(idx: usize) -> Self {
        debug_assert!(idx < NUM_ACTIONS);
        ActionId(idx as u8)
    }

    pub fn value(self) -> u8 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn all() -> impl Iterator<Item = ActionId> {
        (0..NUM_ACTIONS as u8).map(ActionId)
    }
}

impl TryFrom<u8> for ActionId {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        ActionId::new(v)
    }
}

impl From<ActionId> for u8 {
    fn from(a: ActionId) -> u8 {
        a.0
    }
}

impl fmt::Display for ActionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// `cell[action][score]` integer rewards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardMatrix {
    cells: [[i32; NUM_ACTIONS]; NUM_ACTIONS],
}

/// Printed layout: rows are Action 0..4, columns are MEWS 4, 3, 2, 1, 0.
const PRINTED: [[i32; 5]; 5] = [
    [-4, -3, -2, -1, 10],
    [-4, -3, -2, 10, -1],
    [-4, -3, 10, -1, -2],
    [-4, 10, -1, -2, -3],
    [10, -3, -2, -1, -4],
];

impl Default for RewardMatrix {
    fn default() -> Self {
        RewardMatrix::from_printed_layout(PRINTED)
    }
}

impl RewardMatrix {
    /// Build from rows Action 0..4 whose columns run MEWS 4 down to 0.
    pub fn from_printed_layout(rows: [[i32; 5]; 5]) -> Self {
        let mut cells = [[0; 5]; 5];
        for (a, row) in rows.iter().enumerate() {
            for (col, &v) in row.iter().enumerate() {
                cells[a][4 - col] = v;
            }
        }
        RewardMatrix { cells }
    }

    /// Rows in the printed layout (inverse of [`RewardMatrix::from_printed_layout`]).
    pub fn to_printed_layout(&self) -> [[i32; 5]; 5] {
        let mut rows = [[0; 5]; 5];
        for (a, row) in rows.iter_mut().enumerate() {
            for (col, v) in row.iter_mut().enumerate() {
                *v = self.cells[a][4 - col];
            }
        }
        rows
    }

    pub fn reward(&self, score: MewsScore, action: ActionId) -> i32 {
        self.cells[action.index()][score.index()]
    }

    /// The action with the highest payoff for `score`; lowest id on ties.
    pub fn best_action(&self, score: MewsScore) -> ActionId {
        let mut best = 0;
        for a in 1..NUM_ACTIONS {
            if self.cells[a][score.index()] > self.cells[best][score.index()] {
                best = a;
            }
        }
        ActionId::from_index(best)
    }

    pub fn max_reward(&self) -> i32 {
        self.cells.iter().flatten().copied().max().unwrap_or(0)
    }

    pub fn min_reward(&self) -> i32 {
        self.cells.iter().flatten().copied().min().unwrap_or(0)
    }

    /// Parse a 5x5 integer CSV in the printed layout. A leading non-numeric
    /// header row is skipped; blank lines are ignored.
    pub fn parse_csv(text: &str) -> Result<Self> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parsed: Result<Vec<i32>, _> = fields.iter().map(|f| f.parse::<i32>()).collect();
            match parsed {
                Ok(vals) => {
                    if vals.len() != 5 {
                        return Err(Error::Row {
                            row: lineno as u64 + 1,
                            message: format!("expected 5 rewards, found {}", vals.len()),
                        });
                    }
                    rows.push([vals[0], vals[1], vals[2], vals[3], vals[4]]);
                }
                Err(_) if rows.is_empty() && lineno == 0 => continue,
                Err(e) => {
                    return Err(Error::Row {
                        row: lineno as u64 + 1,
                        message: format!("non-integer reward: {e}"),
                    })
                }
            }
        }
        let rows: [[i32; 5]; 5] = rows.try_into().map_err(|v: Vec<_>| Error::Parse {
            path: "reward_matrix".into(),
            message: format!("expected 5 action rows, found {}", v.len()),
        })?;
        Ok(RewardMatrix::from_printed_layout(rows))
    }

    pub fn load_csv(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse_csv(&text)
    }
}

/// Reward under the default matrix.
pub fn reward(score: MewsScore, action: ActionId) -> i32 {
    RewardMatrix::default().reward(score, action)
}

pub fn best_action(score: MewsScore) -> ActionId {
    RewardMatrix::default().best_action(score)
}
