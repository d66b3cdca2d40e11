use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Environment, Step};
use crate::error::{Error, Result};
use crate::mdp::Mdp;
use crate::rng::{substream, Stream};

/// Actions are compass moves: up, right, down, left.
pub const MAZE_ACTIONS: usize = 4;

const DR: [isize; 4] = [-1, 0, 1, 0];
const DC: [isize; 4] = [0, 1, 0, -1];

/// `N × N` grid of cells with a passage bitmask per cell (bit `d` set when
/// the move in direction `d` is open). Cells are numbered row-major; the
/// start is the top-left cell and the goal the bottom-right one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MazeGrid {
    n: usize,
    open: Vec<u8>,
}

impl MazeGrid {
    /// Recursive-backtracker maze drawn from the env-gen substream of `seed`.
    pub fn generate(n: usize, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid(format!("maze size {n} below 2")));
        }
        let mut rng = substream(seed, Stream::EnvGen);
        let mut grid = MazeGrid {
            n,
            open: vec![0; n * n],
        };
        let mut visited = vec![false; n * n];
        let mut stack = vec![0usize];
        visited[0] = true;
        let mut choices = Vec::with_capacity(4);
        while let Some(&cell) = stack.last() {
            choices.clear();
            choices.extend(
                (0..4)
                    .filter_map(|d| grid.neighbor(cell, d).map(|c| (d, c)))
                    .filter(|&(_, c)| !visited[c]),
            );
            if choices.is_empty() {
                stack.pop();
                continue;
            }
            let (d, next) = choices[rng.gen_range(0..choices.len())];
            grid.carve(cell, d);
            visited[next] = true;
            stack.push(next);
        }
        Ok(grid)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_cells(&self) -> usize {
        self.n * self.n
    }

    pub fn start(&self) -> usize {
        0
    }

    pub fn goal(&self) -> usize {
        self.n_cells() - 1
    }

    /// Grid neighbour in direction `d`, ignoring walls.
    fn neighbor(&self, cell: usize, d: usize) -> Option<usize> {
        let (r, c) = ((cell / self.n) as isize, (cell % self.n) as isize);
        let (r2, c2) = (r + DR[d], c + DC[d]);
        let n = self.n as isize;
        (r2 >= 0 && r2 < n && c2 >= 0 && c2 < n).then(|| (r2 * n + c2) as usize)
    }

    fn carve(&mut self, cell: usize, d: usize) {
        let other = self.neighbor(cell, d).expect("carving inside the grid");
        self.open[cell] |= 1 << d;
        self.open[other] |= 1 << ((d + 2) % 4);
    }

    pub fn is_open(&self, cell: usize, d: usize) -> bool {
        self.open[cell] & (1 << d) != 0
    }

    /// Cell reached by moving `d` from `cell`; blocked moves stay put.
    #[inline]
    pub fn move_from(&self, cell: usize, d: usize) -> usize {
        if self.is_open(cell, d) {
            self.neighbor(cell, d).expect("open passage leads inside")
        } else {
            cell
        }
    }

    /// Number of interior walls removed during generation.
    pub fn removed_walls(&self) -> usize {
        self.open
            .iter()
            .map(|m| m.count_ones() as usize)
            .sum::<usize>()
            / 2
    }

    /// Breadth-first distances in moves from `from`; `None` for unreachable cells.
    pub fn distances_from(&self, from: usize) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n_cells()];
        dist[from] = Some(0);
        let mut queue = VecDeque::from([from]);
        while let Some(c) = queue.pop_front() {
            let dc = dist[c].expect("queued cells have distances");
            for d in 0..4 {
                let next = self.move_from(c, d);
                if dist[next].is_none() {
                    dist[next] = Some(dc + 1);
                    queue.push_back(next);
                }
            }
        }
        dist
    }

    pub fn shortest_path_len(&self) -> Option<usize> {
        self.distances_from(self.start())[self.goal()]
    }

    /// Connected with exactly `N² - 1` passages, i.e. a spanning tree.
    pub fn is_perfect(&self) -> bool {
        self.removed_walls() == self.n_cells() - 1
            && self.distances_from(0).iter().all(Option::is_some)
    }

    /// `(2N+1)`-square picture: `#` walls, `S` start, `G` goal.
    pub fn to_ascii(&self) -> String {
        let side = 2 * self.n + 1;
        let mut rows = vec![vec!['#'; side]; side];
        for cell in 0..self.n_cells() {
            let (r, c) = (2 * (cell / self.n) + 1, 2 * (cell % self.n) + 1);
            rows[r][c] = if cell == self.start() {
                'S'
            } else if cell == self.goal() {
                'G'
            } else {
                ' '
            };
            if self.is_open(cell, 1) {
                rows[r][c + 1] = ' ';
            }
            if self.is_open(cell, 2) {
                rows[r + 1][c] = ' ';
            }
        }
        let mut out = String::with_capacity(side * (side + 1));
        for row in rows {
            let _ = writeln!(out, "{}", row.into_iter().collect::<String>());
        }
        out
    }

    /// Inverse of [`MazeGrid::to_ascii`].
    pub fn from_ascii(text: &str) -> Result<Self> {
        let rows: Vec<Vec<char>> = text
            .lines()
            .map(|l| l.trim_end_matches('\r').chars().collect())
            .filter(|r: &Vec<char>| !r.is_empty())
            .collect();
        let side = rows.len();
        if side < 5 || side.is_multiple_of(2) || rows.iter().any(|r| r.len() != side) {
            return Err(Error::Parse(format!(
                "maze picture must be an odd square of side >= 5, got {side} rows"
            )));
        }
        let n = (side - 1) / 2;
        let mut grid = MazeGrid {
            n,
            open: vec![0; n * n],
        };
        for (i, row) in rows.iter().enumerate() {
            for (j, &ch) in row.iter().enumerate() {
                let border = i == 0 || j == 0 || i == side - 1 || j == side - 1;
                match ch {
                    '#' => {}
                    ' ' | 'S' | 'G' if border => {
                        return Err(Error::Parse(format!("open border at row {i}, column {j}")));
                    }
                    ' ' if i % 2 == 1 && j % 2 == 0 => grid.carve((i / 2) * n + j / 2 - 1, 1),
                    ' ' if i % 2 == 0 && j % 2 == 1 => grid.carve((i / 2 - 1) * n + j / 2, 2),
                    ' ' | 'S' | 'G' if i % 2 == 1 && j % 2 == 1 => {}
                    other => {
                        return Err(Error::Parse(format!(
                            "unexpected {other:?} at row {i}, column {j}"
                        )));
                    }
                }
            }
        }
        Ok(grid)
    }
}

/// Maze episode: reward 1 on reaching the goal, `-1/(10N²)` for every other
/// step, at most `10N²` steps. With probability `noise` the executed move is
/// replaced by one drawn uniformly from all four.
#[derive(Clone, Debug)]
pub struct MazeEnv {
    grid: MazeGrid,
    noise: f64,
    max_steps: usize,
    steps: usize,
    state: usize,
    done: bool,
    rng: ChaCha8Rng,
}

impl MazeEnv {
    pub fn new(grid: MazeGrid, noise: f64, seed: u64) -> Result<Self> {
        if !(0.0..=0.5).contains(&noise) {
            return Err(Error::invalid(format!(
                "maze noise {noise} outside [0, 0.5]"
            )));
        }
        let max_steps = 10 * grid.n_cells();
        Ok(MazeEnv {
            state: grid.start(),
            grid,
            noise,
            max_steps,
            steps: 0,
            done: true,
            rng: substream(seed, Stream::Noise),
        })
    }

    /// Generates the grid and seeds the noise from the same `seed`.
    pub fn generate(n: usize, noise: f64, seed: u64) -> Result<Self> {
        Self::new(MazeGrid::generate(n, seed)?, noise, seed)
    }

    pub fn grid(&self) -> &MazeGrid {
        &self.grid
    }

    pub fn noise(&self) -> f64 {
        self.noise
    }

    pub fn max_steps(&self) -> usize {
        self.max_steps
    }

    pub fn step_penalty(&self) -> f64 {
        1.0 / self.max_steps as f64
    }

    /// Starts an episode from an arbitrary cell (used to probe the kernel).
    pub fn reset_to(&mut self, cell: usize) -> Result<()> {
        if cell >= self.grid.n_cells() {
            return Err(Error::invalid(format!("cell {cell} outside the maze")));
        }
        self.state = cell;
        self.steps = 0;
        self.done = cell == self.grid.goal();
        Ok(())
    }

    /// Tabular view with the noise folded into the kernel. The goal is
    /// absorbing with zero reward; the step cap is not modelled.
    pub fn mdp(&self, discount: f64) -> Result<Mdp> {
        let n_cells = self.grid.n_cells();
        let goal = self.grid.goal();
        let penalty = self.step_penalty();
        let mut rows = Vec::with_capacity(n_cells * MAZE_ACTIONS);
        let mut reward = Vec::with_capacity(n_cells * MAZE_ACTIONS);
        for s in 0..n_cells {
            for a in 0..MAZE_ACTIONS {
                if s == goal {
                    rows.push(vec![(goal, 1.0)]);
                    reward.push(0.0);
                    continue;
                }
                let mut row = Vec::with_capacity(MAZE_ACTIONS);
                let mut r = 0.0;
                for b in 0..MAZE_ACTIONS {
                    let p = if b == a {
                        1.0 - self.noise + self.noise / 4.0
                    } else {
                        self.noise / 4.0
                    };
                    if p == 0.0 {
                        continue;
                    }
                    let next = self.grid.move_from(s, b);
                    r += p * if next == goal { 1.0 } else { -penalty };
                    row.push((next, p));
                }
                rows.push(row);
                reward.push(r);
            }
        }
        Mdp::from_rows(n_cells, MAZE_ACTIONS, rows, reward, discount)
    }
}

impl Environment for MazeEnv {
    fn n_states(&self) -> usize {
        self.grid.n_cells()
    }

    fn n_actions(&self) -> usize {
        MAZE_ACTIONS
    }

    fn reset(&mut self) -> usize {
        self.state = self.grid.start();
        self.steps = 0;
        self.done = false;
        self.state
    }

    fn step(&mut self, action: usize) -> Result<Step> {
        if self.done {
            return Err(Error::InvalidState("step after the episode ended".into()));
        }
        if action >= MAZE_ACTIONS {
            return Err(Error::invalid(format!("maze action {action} out of range")));
        }
        let executed = if self.noise > 0.0 && self.rng.gen::<f64>() < self.noise {
            self.rng.gen_range(0..MAZE_ACTIONS)
        } else {
            action
        };
        self.state = self.grid.move_from(self.state, executed);
        self.steps += 1;
        let terminal = self.state == self.grid.goal();
        let reward = if terminal { 1.0 } else { -self.step_penalty() };
        self.done = terminal || self.steps >= self.max_steps;
        Ok(Step {
            next_state: self.state,
            reward,
            done: self.done,
            terminal,
        })
    }

    fn state(&self) -> usize {
        self.state
    }

    fn is_done(&self) -> bool {
        self.done
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_walls() {
        let a = MazeGrid::generate(7, 11).unwrap();
        let b = MazeGrid::generate(7, 11).unwrap();
        let c = MazeGrid::generate(7, 12).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert!(MazeGrid::generate(1, 0).is_err());
    }

    #[test]
    fn ascii_round_trip() {
        let grid = MazeGrid::generate(5, 3).unwrap();
        let text = grid.to_ascii();
        assert_eq!(text.lines().count(), 11);
        assert_eq!(MazeGrid::from_ascii(&text).unwrap(), grid);
        assert!(MazeGrid::from_ascii("###\n# #\n###\n").is_err());
    }

    #[test]
    fn goal_step_and_penalty() {
        let mut env = MazeEnv::generate(10, 0.0, 4).unwrap();
        let goal = env.grid().goal();
        let (cell, d) = (0..goal)
            .flat_map(|c| (0..4).map(move |d| (c, d)))
            .find(|&(c, d)| env.grid().move_from(c, d) == goal)
            .unwrap();
        env.reset_to(cell).unwrap();
        let step = env.step(d).unwrap();
        assert_eq!((step.reward, step.done, step.terminal), (1.0, true, true));
        assert!(env.step(0).is_err());

        env.reset();
        let blocked = (0..4).find(|&d| !env.grid().is_open(0, d)).unwrap();
        let step = env.step(blocked).unwrap();
        assert_eq!(step.next_state, 0);
        assert_eq!(step.reward, -0.001);
    }

    #[test]
    fn step_cap_bounds_the_return() {
        let mut env = MazeEnv::generate(3, 0.0, 0).unwrap();
        env.reset();
        let blocked = (0..4).find(|&d| !env.grid().is_open(0, d)).unwrap();
        let mut total = 0.0;
        let mut steps = 0;
        loop {
            let s = env.step(blocked).unwrap();
            total += s.reward;
            steps += 1;
            if s.done {
                break;
            }
        }
        assert_eq!(steps, 90);
        assert!(total >= -1.0 - 1e-12);
    }

    #[test]
    fn noisy_kernel_rows() {
        let env = MazeEnv::generate(4, 0.2, 1).unwrap();
        let mdp = env.mdp(0.99).unwrap();
        let s = 5;
        for a in 0..4 {
            let expected_self: f64 = (0..4)
                .filter(|&b| env.grid().move_from(s, b) == s)
                .map(|b| if b == a { 0.85 } else { 0.05 })
                .sum();
            assert!((mdp.prob(s, a, s) - expected_self).abs() < 1e-12);
        }
        assert!(MazeEnv::generate(4, 0.6, 1).is_err());
    }
}
