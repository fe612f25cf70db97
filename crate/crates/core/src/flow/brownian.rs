//! Counter-addressed Brownian increments.
//!
//! Every Gaussian draw is keyed by `(seed, path, driver, level, index)` and
//! produced by re-positioning a ChaCha8 stream, so a draw never depends on the
//! order in which other draws were made. On uniform dyadic grids increments
//! are built by Brownian-bridge refinement from the total increment over
//! `[0, T]`, which makes the level-`L` increments exact sums of the level-`L+1`
//! ones.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Words of the ChaCha stream reserved per draw (one block).
const WORDS_PER_DRAW: u128 = 16;
const DIRECT_LEVEL: u64 = 63;

/// Standard normal draw addressed by its key.
pub fn keyed_normal(seed: u64, path: u64, driver: u64, level: u64, index: u64) -> f64 {
    debug_assert!(driver < 1 << 16 && level < 64 && index < 1 << 42);
    let key = (driver << 48) | (level << 42) | index;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(path);
    rng.set_word_pos(key as u128 * WORDS_PER_DRAW);
    rng.sample(StandardNormal)
}

/// Strictly increasing time nodes `t_0 < … < t_m`.
#[derive(Clone, Debug, PartialEq)]
pub struct TimeGrid {
    times: Vec<f64>,
}

impl TimeGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times.windows(2).any(|w| !(w[1] > w[0])) || times.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidTimeGrid);
        }
        Ok(TimeGrid { times })
    }

    /// `steps` equal steps on `[0, t_end]`.
    pub fn uniform(t_end: f64, steps: usize) -> Result<Self> {
        if steps == 0 || !(t_end > 0.0) {
            return Err(Error::InvalidTimeGrid);
        }
        let dt = t_end / steps as f64;
        Self::new((0..=steps).map(|i| if i == steps { t_end } else { i as f64 * dt }).collect())
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }

    /// Index of the node equal to `t` (up to 1e-12 relative).
    pub fn index_of(&self, t: f64) -> Result<usize> {
        let tol = 1e-12 * self.end().abs().max(1.0);
        self.times.iter().position(|&s| (s - t).abs() <= tol).ok_or(Error::TimeOffGrid(t))
    }

    /// `log2(steps)` if the grid is uniform on `[0, T]` with a power-of-two step count.
    pub fn dyadic_level(&self) -> Option<u32> {
        let m = self.steps();
        if !m.is_power_of_two() || self.start() != 0.0 {
            return None;
        }
        let dt = self.end() / m as f64;
        let uniform = self
            .times
            .iter()
            .enumerate()
            .all(|(i, &t)| (t - i as f64 * dt).abs() <= 1e-12 * self.end());
        uniform.then(|| m.trailing_zeros())
    }
}

/// Increments of `drivers` independent Brownian motions for a set of paths.
#[derive(Clone, Debug, PartialEq)]
pub struct BrownianPaths {
    drivers: usize,
    grid: TimeGrid,
    seed: u64,
    path_ids: Vec<u64>,
    /// `[path][step][driver]`, flattened.
    increments: Vec<f64>,
}

impl BrownianPaths {
    /// Paths `0..n_paths`.
    pub fn generate(drivers: usize, grid: &TimeGrid, seed: u64, n_paths: usize) -> Result<Self> {
        Self::generate_ids(drivers, grid, seed, (0..n_paths as u64).collect())
    }

    /// Paths with explicit identifiers; draws depend only on each identifier.
    pub fn generate_ids(drivers: usize, grid: &TimeGrid, seed: u64, path_ids: Vec<u64>) -> Result<Self> {
        let steps = grid.steps();
        let per_path = steps * drivers;
        let rows: Vec<Vec<f64>> = path_ids
            .par_iter()
            .map(|&p| {
                let mut row = vec![0.0; per_path];
                for d in 0..drivers {
                    let incs = path_increments(grid, seed, p, d as u64);
                    for (s, v) in incs.into_iter().enumerate() {
                        row[s * drivers + d] = v;
                    }
                }
                row
            })
            .collect();
        Ok(BrownianPaths {
            drivers,
            grid: grid.clone(),
            seed,
            path_ids,
            increments: rows.concat(),
        })
    }

    /// Degenerate paths with all increments zero (the SDE reduces to an ODE).
    pub fn zero(drivers: usize, grid: &TimeGrid, n_paths: usize) -> Self {
        BrownianPaths {
            drivers,
            grid: grid.clone(),
            seed: 0,
            path_ids: (0..n_paths as u64).collect(),
            increments: vec![0.0; n_paths * grid.steps() * drivers],
        }
    }

    /// The same paths on the grid with every step halved (bridge refinement).
    pub fn refined(&self) -> Result<Self> {
        let level = self.grid.dyadic_level().ok_or(Error::InvalidTimeGrid)?;
        let grid = TimeGrid::uniform(self.grid.end(), 1 << (level + 1))?;
        Self::generate_ids(self.drivers, &grid, self.seed, self.path_ids.clone())
    }

    /// Independent copy of these paths for different drivers (new seed space).
    pub fn independent(&self, drivers: usize, salt: u64) -> Result<Self> {
        Self::generate_ids(
            drivers,
            &self.grid,
            self.seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            self.path_ids.clone(),
        )
    }

    pub fn drivers(&self) -> usize {
        self.drivers
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn n_paths(&self) -> usize {
        self.path_ids.len()
    }

    pub fn path_id(&self, path: usize) -> u64 {
        self.path_ids[path]
    }

    /// All increments of one path, `[step][driver]` flattened.
    pub fn path(&self, path: usize) -> &[f64] {
        let per_path = self.grid.steps() * self.drivers;
        &self.increments[path * per_path..(path + 1) * per_path]
    }

    pub fn increment(&self, path: usize, step: usize, driver: usize) -> f64 {
        self.path(path)[step * self.drivers + driver]
    }

    /// `W(t_j)` of one driver along one path.
    pub fn brownian_values(&self, path: usize, driver: usize) -> Vec<f64> {
        let mut w = Vec::with_capacity(self.grid.steps() + 1);
        let mut acc = 0.0;
        w.push(acc);
        for s in 0..self.grid.steps() {
            acc += self.increment(path, s, driver);
            w.push(acc);
        }
        w
    }
}

fn path_increments(grid: &TimeGrid, seed: u64, path: u64, driver: u64) -> Vec<f64> {
    match grid.dyadic_level() {
        Some(level) => {
            let t_end = grid.end();
            let mut incs = vec![t_end.sqrt() * keyed_normal(seed, path, driver, 0, 0)];
            let mut dt = t_end;
            for l in 1..=level as u64 {
                let mut next = Vec::with_capacity(incs.len() * 2);
                for (j, &inc) in incs.iter().enumerate() {
                    let z = keyed_normal(seed, path, driver, l, j as u64);
                    let left = 0.5 * inc + 0.5 * dt.sqrt() * z;
                    next.push(left);
                    next.push(inc - left);
                }
                incs = next;
                dt *= 0.5;
            }
            incs
        }
        None => (0..grid.steps())
            .map(|s| grid.dt(s).sqrt() * keyed_normal(seed, path, driver, DIRECT_LEVEL, s as u64))
            .collect(),
    }
}
