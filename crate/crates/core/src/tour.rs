//! Key-point tours: A* distance matrix, closed-tour cost, simulated annealing
//! over 2-opt reversals, plus greedy and exhaustive reference tours.
//!
//! Index 0 of every matrix is the tour start and stays pinned at position 0.
//! Closed tours return to index 0; open routes end at a pinned final index
//! (used when replanning from mid-mission back to the origin).

use itertools::Itertools;
use rand::Rng;
use serde::Serialize;
use thiserror::Error;

use crate::map::{Cell, GridMap};
use crate::pathfind::{astar, Path, PathError};
use crate::seeded_rng;

/// Brute force enumerates (n-1)! orders; beyond this it is refused.
pub const BRUTE_FORCE_LIMIT: usize = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TourError {
    #[error("key point {0} cannot be reached from the tour start")]
    DisconnectedKeyPoint(Cell),
    #[error("no feasible leg between key points {from} and {to}")]
    InfeasibleLeg { from: usize, to: usize },
    #[error("{0} key points exceed the brute-force limit of {BRUTE_FORCE_LIMIT}")]
    TooManyKeyPoints(usize),
    #[error("order is not a valid tour: {0}")]
    InvalidOrder(String),
    #[error("invalid annealing configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Path(#[from] PathError),
}

/// Pairwise step counts between key points, with the paths that realise them.
/// `None` marks an unreachable pair.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    points: Vec<Cell>,
    costs: Vec<Option<usize>>,
    paths: Vec<Option<Path>>,
}

impl DistanceMatrix {
    /// Matrix without stored paths. Rows must be square.
    pub fn from_costs(costs: Vec<Vec<Option<usize>>>) -> Self {
        let n = costs.len();
        assert!(costs.iter().all(|r| r.len() == n), "distance matrix must be square");
        Self {
            n,
            points: Vec::new(),
            costs: costs.into_iter().flatten().collect(),
            paths: vec![None; n * n],
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Cells behind each index; empty for matrices built from raw costs.
    pub fn points(&self) -> &[Cell] {
        &self.points
    }

    pub fn get(&self, i: usize, j: usize) -> Option<usize> {
        self.costs[i * self.len() + j]
    }

    pub fn path(&self, i: usize, j: usize) -> Option<&Path> {
        self.paths[i * self.len() + j].as_ref()
    }

    pub fn max_entry(&self) -> usize {
        self.costs.iter().flatten().copied().max().unwrap_or(0)
    }

    fn leg(&self, i: usize, j: usize) -> Result<i64, TourError> {
        self.get(i, j)
            .map(|d| d as i64)
            .ok_or(TourError::InfeasibleLeg { from: i, to: j })
    }

    fn check_feasible(&self) -> Result<(), TourError> {
        let n = self.len();
        for i in 0..n {
            for j in 0..n {
                self.leg(i, j)?;
            }
        }
        Ok(())
    }
}

/// Runs A* between every pair of `points` (index 0 is the tour start).
pub fn pairwise_distances(map: &GridMap, points: &[Cell]) -> Result<DistanceMatrix, TourError> {
    build_matrix(map, points, None)
}

/// Like [`pairwise_distances`], but copies any pair from `prior` whose stored
/// path is still entirely free on `map`.
pub fn pairwise_distances_reusing(
    map: &GridMap,
    points: &[Cell],
    prior: &DistanceMatrix,
) -> Result<DistanceMatrix, TourError> {
    build_matrix(map, points, Some(prior))
}

fn build_matrix(
    map: &GridMap,
    points: &[Cell],
    prior: Option<&DistanceMatrix>,
) -> Result<DistanceMatrix, TourError> {
    let n = points.len();
    let mut costs = vec![None; n * n];
    let mut paths = vec![None; n * n];

    let reuse = |a: Cell, b: Cell| -> Option<Path> {
        let prior = prior?;
        let i = prior.points.iter().position(|&p| p == a)?;
        let j = prior.points.iter().position(|&p| p == b)?;
        let path = prior.path(i, j)?;
        path.cells().iter().all(|&c| map.is_free(c)).then(|| path.clone())
    };

    for i in 0..n {
        for j in i..n {
            let found = match reuse(points[i], points[j]) {
                Some(p) => Some(p),
                None => match astar(map, points[i], points[j]) {
                    Ok(p) => Some(p),
                    Err(PathError::NoPath { .. }) => None,
                    Err(PathError::BlockedEndpoint(cell)) => {
                        return Err(TourError::DisconnectedKeyPoint(cell))
                    }
                    Err(e) => return Err(e.into()),
                },
            };
            if let Some(path) = found {
                costs[i * n + j] = Some(path.cost());
                costs[j * n + i] = Some(path.cost());
                paths[j * n + i] = Some(path.reversed());
                paths[i * n + j] = Some(path);
            }
        }
    }

    if let Some(j) = (1..n).find(|&j| costs[j].is_none()) {
        return Err(TourError::DisconnectedKeyPoint(points[j]));
    }
    Ok(DistanceMatrix {
        n,
        points: points.to_vec(),
        costs,
        paths,
    })
}

/// Whether a visiting order returns to its start or stops at a fixed index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TourShape {
    Closed,
    OpenTo(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Tour {
    pub order: Vec<usize>,
    pub total_cost: usize,
    pub shape: TourShape,
}

impl Tour {
    /// Legs as `(from, to)` index pairs, including the closing leg of a
    /// closed tour.
    pub fn legs(&self) -> Vec<(usize, usize)> {
        let mut legs: Vec<_> = self.order.windows(2).map(|w| (w[0], w[1])).collect();
        if self.shape == TourShape::Closed && self.order.len() > 1 {
            legs.push((*self.order.last().unwrap(), self.order[0]));
        }
        legs
    }

    /// Concatenated cell route for executing the tour, start cell included.
    pub fn route(&self, d: &DistanceMatrix) -> Result<Vec<Cell>, TourError> {
        let mut cells = vec![*d.points().first().ok_or_else(|| {
            TourError::InvalidOrder("matrix carries no cell positions".into())
        })?];
        for (a, b) in self.legs() {
            let path = d.path(a, b).ok_or(TourError::InfeasibleLeg { from: a, to: b })?;
            cells.extend_from_slice(&path.cells()[1..]);
        }
        Ok(cells)
    }
}

fn validate_order(n: usize, order: &[usize], shape: TourShape) -> Result<(), TourError> {
    if order.len() != n || order.first() != Some(&0) {
        return Err(TourError::InvalidOrder(format!(
            "expected {n} indices starting at 0, got {order:?}"
        )));
    }
    let mut seen = vec![false; n];
    for &i in order {
        if i >= n || std::mem::replace(&mut seen[i], true) {
            return Err(TourError::InvalidOrder(format!("{order:?} is not a permutation")));
        }
    }
    if let TourShape::OpenTo(end) = shape {
        if n > 1 && order.last() != Some(&end) {
            return Err(TourError::InvalidOrder(format!("{order:?} does not end at {end}")));
        }
    }
    Ok(())
}

/// Closed-cycle length of `order`, including the return leg to index 0.
pub fn tour_length(d: &DistanceMatrix, order: &[usize]) -> Result<usize, TourError> {
    route_length(d, order, TourShape::Closed)
}

pub fn route_length(d: &DistanceMatrix, order: &[usize], shape: TourShape) -> Result<usize, TourError> {
    validate_order(d.len(), order, shape)?;
    raw_length(d, order, shape).map(|c| c as usize)
}

fn raw_length(d: &DistanceMatrix, order: &[usize], shape: TourShape) -> Result<i64, TourError> {
    let mut total = 0;
    for w in order.windows(2) {
        total += d.leg(w[0], w[1])?;
    }
    if shape == TourShape::Closed && order.len() > 1 {
        total += d.leg(order[order.len() - 1], order[0])?;
    }
    Ok(total)
}

fn make_tour(d: &DistanceMatrix, order: Vec<usize>, shape: TourShape) -> Result<Tour, TourError> {
    let total_cost = route_length(d, &order, shape)?;
    Ok(Tour {
        order,
        total_cost,
        shape,
    })
}

fn check_shape(d: &DistanceMatrix, shape: TourShape) -> Result<(), TourError> {
    let n = d.len();
    if n == 0 {
        return Err(TourError::InvalidOrder("empty distance matrix".into()));
    }
    if let TourShape::OpenTo(end) = shape {
        if end >= n || (end == 0 && n > 1) {
            return Err(TourError::InvalidOrder(format!("invalid route end {end} for {n} points")));
        }
    }
    Ok(())
}

/// Indices in declaration order (the pinned end, if any, moved last).
pub fn identity_tour(d: &DistanceMatrix, shape: TourShape) -> Result<Tour, TourError> {
    check_shape(d, shape)?;
    let mut order: Vec<usize> = (0..d.len()).collect();
    if let TourShape::OpenTo(end) = shape {
        order.retain(|&i| i != end);
        if d.len() > 1 {
            order.push(end);
        }
    }
    make_tour(d, order, shape)
}

pub fn nearest_neighbor_tour(d: &DistanceMatrix) -> Result<Tour, TourError> {
    nearest_neighbor_route(d, TourShape::Closed)
}

/// Greedy: always go to the closest unvisited index, smallest index on ties.
pub fn nearest_neighbor_route(d: &DistanceMatrix, shape: TourShape) -> Result<Tour, TourError> {
    check_shape(d, shape)?;
    d.check_feasible()?;
    let n = d.len();
    let end = match shape {
        TourShape::OpenTo(end) if n > 1 => Some(end),
        _ => None,
    };
    let mut visited = vec![false; n];
    visited[0] = true;
    if let Some(e) = end {
        visited[e] = true;
    }
    let mut order = vec![0];
    let mut cur = 0;
    while let Some(next) = (0..n)
        .filter(|&j| !visited[j])
        .min_by_key(|&j| (d.get(cur, j).unwrap_or(usize::MAX), j))
    {
        visited[next] = true;
        order.push(next);
        cur = next;
    }
    order.extend(end);
    make_tour(d, order, shape)
}

pub fn brute_force_tour(d: &DistanceMatrix) -> Result<Tour, TourError> {
    brute_force_route(d, TourShape::Closed)
}

/// Exhaustive minimum; ties go to the lexicographically smallest order.
pub fn brute_force_route(d: &DistanceMatrix, shape: TourShape) -> Result<Tour, TourError> {
    let n = d.len();
    if n > BRUTE_FORCE_LIMIT {
        return Err(TourError::TooManyKeyPoints(n));
    }
    check_shape(d, shape)?;
    d.check_feasible()?;
    let end = match shape {
        TourShape::OpenTo(end) if n > 1 => Some(end),
        _ => None,
    };
    let free: Vec<usize> = (1..n).filter(|&i| Some(i) != end).collect();
    let mut best: Option<(i64, Vec<usize>)> = None;
    for perm in free.iter().copied().permutations(free.len()) {
        let order: Vec<usize> = std::iter::once(0).chain(perm).chain(end).collect();
        let cost = raw_length(d, &order, shape)?;
        let better = match &best {
            None => true,
            Some((c, o)) => cost < *c || (cost == *c && order < *o),
        };
        if better {
            best = Some((cost, order));
        }
    }
    let (_, order) = best.expect("at least one permutation");
    make_tour(d, order, shape)
}

/// Annealing schedule. Unset fields take values scaled to the instance:
/// the largest matrix entry for the start temperature and `100 * n` moves
/// per temperature level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaConfig {
    pub initial_temperature: Option<f64>,
    pub cooling_rate: f64,
    pub iterations_per_temperature: Option<usize>,
    pub minimum_temperature: f64,
    pub rng_seed: u64,
}

impl Default for SaConfig {
    fn default() -> Self {
        Self {
            initial_temperature: None,
            cooling_rate: 0.995,
            iterations_per_temperature: None,
            minimum_temperature: 1e-3,
            rng_seed: 0,
        }
    }
}

impl SaConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.rng_seed = seed;
        self
    }

    pub fn validate(&self) -> Result<(), TourError> {
        let bad = |msg: String| Err(TourError::InvalidConfig(msg));
        if let Some(t) = self.initial_temperature {
            if !(t > 0.0 && t.is_finite()) {
                return bad(format!("initial_temperature must be positive, got {t}"));
            }
        }
        if !(self.cooling_rate > 0.0 && self.cooling_rate < 1.0) {
            return bad(format!("cooling_rate must lie in (0,1), got {}", self.cooling_rate));
        }
        if self.iterations_per_temperature == Some(0) {
            return bad("iterations_per_temperature must be positive".into());
        }
        if !(self.minimum_temperature > 0.0 && self.minimum_temperature.is_finite()) {
            return bad(format!(
                "minimum_temperature must be positive, got {}",
                self.minimum_temperature
            ));
        }
        Ok(())
    }
}

/// One convergence sample, taken at the end of each temperature level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SaRecord {
    pub iteration: u64,
    pub temperature: f64,
    pub current_cost: usize,
    pub best_cost: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SaRun {
    pub tour: Tour,
    /// Declaration-order tour cost, the "without annealing" reference.
    pub identity_cost: usize,
    /// Greedy tour cost; annealing starts from this tour.
    pub greedy_cost: usize,
    pub history: Vec<SaRecord>,
}

pub fn sa_optimize(d: &DistanceMatrix, cfg: &SaConfig) -> Result<Tour, TourError> {
    anneal(d, TourShape::Closed, cfg).map(|run| run.tour)
}

/// Simulated annealing over segment reversals. Starts from the greedy tour;
/// the result is never worse than either the greedy or the identity tour.
pub fn anneal(d: &DistanceMatrix, shape: TourShape, cfg: &SaConfig) -> Result<SaRun, TourError> {
    cfg.validate()?;
    let identity = identity_tour(d, shape)?;
    let greedy = nearest_neighbor_route(d, shape)?;
    let n = d.len();

    let mut current = greedy.order.clone();
    let mut current_cost = greedy.total_cost as i64;
    let (mut best, mut best_cost) = if identity.total_cost < greedy.total_cost {
        (identity.order.clone(), identity.total_cost as i64)
    } else {
        (current.clone(), current_cost)
    };

    // Positions lo..=hi may be permuted.
    let lo = 1;
    let hi = match shape {
        TourShape::Closed => n.saturating_sub(1),
        TourShape::OpenTo(_) => n.saturating_sub(2),
    };

    let mut history = Vec::new();
    if hi > lo {
        let mut rng = seeded_rng(cfg.rng_seed);
        let mut temperature = cfg.initial_temperature.unwrap_or(d.max_entry() as f64);
        let per_level = cfg.iterations_per_temperature.unwrap_or(100 * n);
        let mut iteration = 0u64;
        while temperature > cfg.minimum_temperature {
            for _ in 0..per_level {
                let a = rng.random_range(lo..=hi);
                let mut b = rng.random_range(lo..hi);
                if b >= a {
                    b += 1;
                }
                let (i, j) = (a.min(b), a.max(b));
                let delta = reversal_delta(d, &current, i, j, shape);
                if delta <= 0 || rng.random::<f64>() < (-(delta as f64) / temperature).exp() {
                    current[i..=j].reverse();
                    current_cost += delta;
                    if current_cost < best_cost {
                        best_cost = current_cost;
                        best.clone_from(&current);
                    }
                }
                iteration += 1;
            }
            history.push(SaRecord {
                iteration,
                temperature,
                current_cost: current_cost as usize,
                best_cost: best_cost as usize,
            });
            temperature *= cfg.cooling_rate;
        }
    }

    let tour = make_tour(d, best, shape)?;
    debug_assert_eq!(tour.total_cost as i64, best_cost);
    Ok(SaRun {
        tour,
        identity_cost: identity.total_cost,
        greedy_cost: greedy.total_cost,
        history,
    })
}

/// Cost change from reversing `order[i..=j]` on a symmetric matrix.
fn reversal_delta(d: &DistanceMatrix, order: &[usize], i: usize, j: usize, shape: TourShape) -> i64 {
    let cost = |a: usize, b: usize| d.get(a, b).expect("feasibility checked") as i64;
    let prev = order[i - 1];
    let next = match (order.get(j + 1), shape) {
        (Some(&x), _) => Some(x),
        (None, TourShape::Closed) => Some(order[0]),
        (None, TourShape::OpenTo(_)) => None,
    };
    let (first, last) = (order[i], order[j]);
    let mut delta = cost(prev, last) - cost(prev, first);
    if let Some(next) = next {
        delta += cost(first, next) - cost(last, next);
    }
    delta
}
