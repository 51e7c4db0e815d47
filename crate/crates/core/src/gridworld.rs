//! Deterministic-transition predator-prey Markov game on a bounded grid.
//!
//! Two predators (A, B) hunt two prey (X, Y). All four entities move
//! simultaneously, one cell per step, clamped at the borders; cells are
//! transparent (any number of entities may share one). A prey is caught when
//! a predator stands on its cell after movement and stays frozen for the rest
//! of the episode. Rewards per predator per step: +100 to both when the
//! second prey is caught, -1 when not Manhattan-adjacent (distance <= 1) to
//! any prey that was still uncaught at the start of the step, and a further
//! -1 to both when the predators end the step on the same cell.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Grid dimensions and the per-episode step cap.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct GridConfig {
    pub width: u32,
    pub height: u32,
    pub max_steps: u32,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            width: 10,
            height: 10,
            max_steps: 40,
        }
    }
}

impl GridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.width < 2 || self.height < 2 {
            return Err(Error::InvalidConfig(format!(
                "grid must be at least 2x2, got {}x{}",
                self.width, self.height
            )));
        }
        if self.max_steps < 1 {
            return Err(Error::InvalidConfig("max_steps must be at least 1".into()));
        }
        Ok(())
    }
}

/// A grid cell as (column, row); rows grow upward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Cell {
    pub col: u32,
    pub row: u32,
}

impl Cell {
    pub fn new(col: u32, row: u32) -> Self {
        Self { col, row }
    }

    /// Successor cell of one move, clamped at the grid borders.
    pub fn step(self, action: GridAction, width: u32, height: u32) -> Cell {
        match action {
            GridAction::Up => Cell::new(self.col, (self.row + 1).min(height - 1)),
            GridAction::Down => Cell::new(self.col, self.row.saturating_sub(1)),
            GridAction::Left => Cell::new(self.col.saturating_sub(1), self.row),
            GridAction::Right => Cell::new((self.col + 1).min(width - 1), self.row),
            GridAction::Stay => self,
        }
    }
}

/// Manhattan distance between two cells.
pub fn manhattan(p: Cell, q: Cell) -> u32 {
    p.col.abs_diff(q.col) + p.row.abs_diff(q.row)
}

/// Movement action, indexed 0..4.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
    Stay = 4,
}

impl GridAction {
    pub const COUNT: usize = 5;
    pub const ALL: [GridAction; 5] = [
        GridAction::Up,
        GridAction::Down,
        GridAction::Left,
        GridAction::Right,
        GridAction::Stay,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(index: usize) -> Option<GridAction> {
        Self::ALL.get(index).copied()
    }
}

/// Full environment state: entity positions, capture flags, timestep.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridState {
    pub pos_a: Cell,
    pub pos_b: Cell,
    pub pos_x: Cell,
    pub pos_y: Cell,
    pub caught_x: bool,
    pub caught_y: bool,
    pub t: u32,
}

impl GridState {
    /// Episode termination: both prey caught or the step cap reached.
    pub fn is_done(&self, cfg: &GridConfig) -> bool {
        (self.caught_x && self.caught_y) || self.t >= cfg.max_steps
    }
}

/// One joint action, one entry per entity.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct JointAction {
    pub a: GridAction,
    pub b: GridAction,
    pub x: GridAction,
    pub y: GridAction,
}

/// Result of one environment step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub next_state: GridState,
    pub reward_a: f64,
    pub reward_b: f64,
    pub done: bool,
}

/// Advances the environment by one simultaneous joint move.
pub fn step(state: &GridState, actions: JointAction, cfg: &GridConfig) -> Result<StepOutcome> {
    if state.is_done(cfg) {
        return Err(Error::EpisodeFinished);
    }
    let (w, h) = (cfg.width, cfg.height);
    let pos_a = state.pos_a.step(actions.a, w, h);
    let pos_b = state.pos_b.step(actions.b, w, h);
    // Captured prey are frozen.
    let pos_x = if state.caught_x {
        state.pos_x
    } else {
        state.pos_x.step(actions.x, w, h)
    };
    let pos_y = if state.caught_y {
        state.pos_y
    } else {
        state.pos_y.step(actions.y, w, h)
    };

    let caught_x = state.caught_x || pos_x == pos_a || pos_x == pos_b;
    let caught_y = state.caught_y || pos_y == pos_a || pos_y == pos_b;

    // Joint completion bonus: awarded once, on the step the second prey
    // becomes caught.
    let both_completed_now = caught_x && caught_y && !(state.caught_x && state.caught_y);
    let bonus = if both_completed_now { 100.0 } else { 0.0 };

    // Adjacency counts against prey that were still uncaught at the start of
    // the step (uncaught or just caught), at post-move positions.
    let adjacent = |pos: Cell| {
        (!state.caught_x && manhattan(pos, pos_x) <= 1)
            || (!state.caught_y && manhattan(pos, pos_y) <= 1)
    };
    let collision = if pos_a == pos_b { 1.0 } else { 0.0 };
    let reward_of = |pos: Cell| {
        let adjacency_penalty = if adjacent(pos) { 0.0 } else { 1.0 };
        bonus - adjacency_penalty - collision
    };

    let next_state = GridState {
        pos_a,
        pos_b,
        pos_x,
        pos_y,
        caught_x,
        caught_y,
        t: state.t + 1,
    };
    Ok(StepOutcome {
        reward_a: reward_of(pos_a),
        reward_b: reward_of(pos_b),
        done: next_state.is_done(cfg),
        next_state,
    })
}

/// Canonical injective state encoding:
/// `"Ax,Ay|Bx,By|Xx,Xy|Yx,Yy|cX,cY"` with capture flags as 0/1.
///
/// The timestep is deliberately not part of the key: policies and trace files
/// only depend on positions and capture flags.
pub fn state_key(state: &GridState) -> String {
    format!(
        "{},{}|{},{}|{},{}|{},{}|{},{}",
        state.pos_a.col,
        state.pos_a.row,
        state.pos_b.col,
        state.pos_b.row,
        state.pos_x.col,
        state.pos_x.row,
        state.pos_y.col,
        state.pos_y.row,
        u8::from(state.caught_x),
        u8::from(state.caught_y),
    )
}

/// Inverse of [`state_key`]. The timestep, absent from the key, comes back
/// as 0.
pub fn parse_state_key(key: &str) -> Result<GridState> {
    let bad = |reason: &str| Error::InvalidStateKey {
        key: key.to_string(),
        reason: reason.to_string(),
    };
    let parts: Vec<&str> = key.split('|').collect();
    if parts.len() != 5 {
        return Err(bad("expected 5 |-separated fields"));
    }
    let mut pairs = parts.iter().map(|part| -> Result<(u32, u32)> {
        let (left, right) = part
            .split_once(',')
            .ok_or_else(|| bad("expected comma-separated pair"))?;
        let a = left.parse::<u32>().map_err(|_| bad("invalid number"))?;
        let b = right.parse::<u32>().map_err(|_| bad("invalid number"))?;
        Ok((a, b))
    });
    let mut next_pair = || pairs.next().expect("length checked above");
    let (a_col, a_row) = next_pair()?;
    let (b_col, b_row) = next_pair()?;
    let (x_col, x_row) = next_pair()?;
    let (y_col, y_row) = next_pair()?;
    let (flag_x, flag_y) = next_pair()?;
    if flag_x > 1 || flag_y > 1 {
        return Err(bad("capture flags must be 0 or 1"));
    }
    Ok(GridState {
        pos_a: Cell::new(a_col, a_row),
        pos_b: Cell::new(b_col, b_row),
        pos_x: Cell::new(x_col, x_row),
        pos_y: Cell::new(y_col, y_row),
        caught_x: flag_x == 1,
        caught_y: flag_y == 1,
        t: 0,
    })
}

/// Fresh episode state: all four entities placed uniformly at random in
/// pairwise-distinct cells, flags cleared, t = 0.
pub fn reset_episode<R: Rng + ?Sized>(cfg: &GridConfig, rng: &mut R) -> GridState {
    let mut cells: Vec<Cell> = Vec::with_capacity(4);
    while cells.len() < 4 {
        let cell = Cell::new(
            rng.random_range(0..cfg.width),
            rng.random_range(0..cfg.height),
        );
        if !cells.contains(&cell) {
            cells.push(cell);
        }
    }
    GridState {
        pos_a: cells[0],
        pos_b: cells[1],
        pos_x: cells[2],
        pos_y: cells[3],
        caught_x: false,
        caught_y: false,
        t: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const CFG: GridConfig = GridConfig {
        width: 10,
        height: 10,
        max_steps: 40,
    };

    fn state(a: (u32, u32), b: (u32, u32), x: (u32, u32), y: (u32, u32)) -> GridState {
        GridState {
            pos_a: Cell::new(a.0, a.1),
            pos_b: Cell::new(b.0, b.1),
            pos_x: Cell::new(x.0, x.1),
            pos_y: Cell::new(y.0, y.1),
            caught_x: false,
            caught_y: false,
            t: 0,
        }
    }

    fn stay_all() -> JointAction {
        JointAction {
            a: GridAction::Stay,
            b: GridAction::Stay,
            x: GridAction::Stay,
            y: GridAction::Stay,
        }
    }

    #[test]
    fn manhattan_examples() {
        assert_eq!(manhattan(Cell::new(0, 0), Cell::new(0, 0)), 0);
        assert_eq!(manhattan(Cell::new(2, 2), Cell::new(7, 7)), 10);
    }

    #[test]
    fn moves_clamp_at_borders() {
        let corner = Cell::new(0, 0);
        assert_eq!(corner.step(GridAction::Left, 10, 10), corner);
        assert_eq!(corner.step(GridAction::Down, 10, 10), corner);
        let far = Cell::new(9, 9);
        assert_eq!(far.step(GridAction::Right, 10, 10), far);
        assert_eq!(far.step(GridAction::Up, 10, 10), far);
        assert_eq!(Cell::new(3, 3).step(GridAction::Up, 10, 10), Cell::new(3, 4));
    }

    #[test]
    fn dual_capture_pays_both_predators_and_ends_the_episode() {
        // A steps onto X, B steps onto Y, both previously uncaught.
        let s = state((1, 1), (5, 5), (2, 1), (5, 6));
        let actions = JointAction {
            a: GridAction::Right,
            b: GridAction::Up,
            x: GridAction::Stay,
            y: GridAction::Stay,
        };
        let out = step(&s, actions, &CFG).unwrap();
        assert_eq!(out.reward_a, 100.0);
        assert_eq!(out.reward_b, 100.0);
        assert!(out.done);
        assert!(out.next_state.caught_x && out.next_state.caught_y);
    }

    #[test]
    fn collision_plus_no_adjacent_prey_costs_two() {
        // A moves onto B's cell; prey are far away.
        let s = state((1, 1), (2, 1), (8, 8), (8, 9));
        let actions = JointAction {
            a: GridAction::Right,
            b: GridAction::Stay,
            x: GridAction::Stay,
            y: GridAction::Stay,
        };
        let out = step(&s, actions, &CFG).unwrap();
        assert_eq!(out.reward_a, -2.0);
        assert_eq!(out.reward_b, -2.0);
        assert!(!out.done);
    }

    #[test]
    fn adjacency_to_an_uncaught_prey_avoids_the_penalty() {
        let s = state((2, 1), (8, 8), (2, 2), (0, 9));
        let out = step(&s, stay_all(), &CFG).unwrap();
        assert_eq!(out.reward_a, 0.0, "A sits adjacent to X");
        assert_eq!(out.reward_b, -1.0, "B is alone in the corner");
    }

    #[test]
    fn stepping_a_finished_episode_is_an_error() {
        let mut s = state((0, 0), (1, 0), (5, 5), (6, 6));
        s.caught_x = true;
        s.caught_y = true;
        assert!(matches!(step(&s, stay_all(), &CFG), Err(Error::EpisodeFinished)));
        let mut timed_out = state((0, 0), (1, 0), (5, 5), (6, 6));
        timed_out.t = CFG.max_steps;
        assert!(step(&timed_out, stay_all(), &CFG).is_err());
    }

    #[test]
    fn captured_prey_do_not_move() {
        let mut s = state((0, 0), (9, 9), (4, 4), (6, 6));
        s.caught_x = true;
        let actions = JointAction {
            a: GridAction::Stay,
            b: GridAction::Stay,
            x: GridAction::Right,
            y: GridAction::Stay,
        };
        let out = step(&s, actions, &CFG).unwrap();
        assert_eq!(out.next_state.pos_x, Cell::new(4, 4));
    }

    #[test]
    fn state_key_matches_the_reference_layout() {
        let s = state((2, 2), (7, 7), (6, 3), (4, 8));
        assert_eq!(state_key(&s), "2,2|7,7|6,3|4,8|0,0");
    }

    #[test]
    fn state_key_round_trips() {
        let mut s = state((2, 2), (7, 7), (6, 3), (4, 8));
        s.caught_y = true;
        let parsed = parse_state_key(&state_key(&s)).unwrap();
        assert_eq!(parsed, s);
        assert!(parse_state_key("1,2|3,4").is_err());
        assert!(parse_state_key("a,2|7,7|6,3|4,8|0,0").is_err());
        assert!(parse_state_key("2,2|7,7|6,3|4,8|0,2").is_err());
    }

    #[test]
    fn state_keys_are_injective_over_random_states() {
        use std::collections::HashSet;
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let mut states = HashSet::new();
        let mut keys = HashSet::new();
        for _ in 0..1000 {
            let mut s = reset_episode(&CFG, &mut rng);
            s.caught_x = rng.random();
            s.caught_y = rng.random();
            states.insert(s);
            keys.insert(state_key(&s));
        }
        assert_eq!(states.len(), keys.len());
    }

    #[test]
    fn reset_places_distinct_in_bounds_entities() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let s = reset_episode(&CFG, &mut rng);
            let cells = [s.pos_a, s.pos_b, s.pos_x, s.pos_y];
            for cell in cells {
                assert!(cell.col < CFG.width && cell.row < CFG.height);
            }
            for i in 0..4 {
                for j in i + 1..4 {
                    assert_ne!(cells[i], cells[j]);
                }
            }
            assert!(!s.caught_x && !s.caught_y);
            assert_eq!(s.t, 0);
        }
        let fixed_a = reset_episode(&CFG, &mut ChaCha8Rng::seed_from_u64(9));
        let fixed_b = reset_episode(&CFG, &mut ChaCha8Rng::seed_from_u64(9));
        assert_eq!(fixed_a, fixed_b);
    }

    /// Independent reward table used by the exhaustive small-grid check.
    fn oracle_rewards(prev: &GridState, next: &GridState) -> (f64, f64) {
        let bonus = if next.caught_x && next.caught_y && !(prev.caught_x && prev.caught_y) {
            100.0
        } else {
            0.0
        };
        let collision = if next.pos_a == next.pos_b { 1.0 } else { 0.0 };
        let reward = |pos: Cell| {
            let mut near = false;
            if !prev.caught_x && manhattan(pos, next.pos_x) <= 1 {
                near = true;
            }
            if !prev.caught_y && manhattan(pos, next.pos_y) <= 1 {
                near = true;
            }
            bonus - if near { 0.0 } else { 1.0 } - collision
        };
        (reward(next.pos_a), reward(next.pos_b))
    }

    #[test]
    fn exhaustive_three_by_three_rewards_match_the_rule_table() {
        let cfg = GridConfig {
            width: 3,
            height: 3,
            max_steps: 40,
        };
        let cells: Vec<Cell> = (0..3)
            .flat_map(|c| (0..3).map(move |r| Cell::new(c, r)))
            .collect();
        let flag_combos = [(false, false), (true, false), (false, true)];
        let mut seen_rewards = std::collections::BTreeSet::new();
        for &pa in &cells {
            for &pb in &cells {
                for &px in &cells {
                    for &py in &cells {
                        for &(cx, cy) in &flag_combos {
                            let prev = GridState {
                                pos_a: pa,
                                pos_b: pb,
                                pos_x: px,
                                pos_y: py,
                                caught_x: cx,
                                caught_y: cy,
                                t: 0,
                            };
                            // Already-caught prey co-located with a predator is
                            // fine; skip nothing: every non-done state steps.
                            for a in GridAction::ALL {
                                for b in GridAction::ALL {
                                    for x in GridAction::ALL {
                                        for y in GridAction::ALL {
                                            let out =
                                                step(&prev, JointAction { a, b, x, y }, &cfg)
                                                    .unwrap();
                                            let (ra, rb) =
                                                oracle_rewards(&prev, &out.next_state);
                                            assert_eq!(out.reward_a, ra);
                                            assert_eq!(out.reward_b, rb);
                                            assert!(
                                                out.next_state.caught_x >= prev.caught_x
                                                    && out.next_state.caught_y >= prev.caught_y
                                            );
                                            seen_rewards.insert(out.reward_a as i64);
                                            seen_rewards.insert(out.reward_b as i64);
                                        }
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        for r in &seen_rewards {
            assert!(
                [-2, -1, 0, 98, 99, 100].contains(r),
                "unexpected per-step reward {r}"
            );
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn episodes_stay_in_bounds_and_terminate(seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut s = reset_episode(&CFG, &mut rng);
            let mut steps = 0;
            while !s.is_done(&CFG) {
                let joint = JointAction {
                    a: GridAction::from_index(rng.random_range(0..5)).unwrap(),
                    b: GridAction::from_index(rng.random_range(0..5)).unwrap(),
                    x: GridAction::from_index(rng.random_range(0..5)).unwrap(),
                    y: GridAction::from_index(rng.random_range(0..5)).unwrap(),
                };
                let out = step(&s, joint, &CFG).unwrap();
                prop_assert!(out.next_state.pos_a.col < CFG.width);
                prop_assert!(out.next_state.pos_a.row < CFG.height);
                prop_assert!(out.next_state.caught_x >= s.caught_x);
                prop_assert!(out.next_state.caught_y >= s.caught_y);
                s = out.next_state;
                steps += 1;
                prop_assert!(steps <= CFG.max_steps);
            }
        }
    }
}
