//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any fails.
//!
//! Oracles (BFS distances, permutation enumeration, ray marching, integer
//! tick arithmetic) are implemented here, independently of the library.

use std::collections::VecDeque;
use std::process::ExitCode;
use std::time::Instant;

use keytour::avoidance::PhaseKind;
use keytour::control::{execute_move, ControlConfig, HeadingCommand};
use keytour::map::{Cell, GridMap, KeyPointSet, Move};
use keytour::pathfind::{astar, heuristic, PathError};
use keytour::robot::{
    forward_step, revolutions, ticks_for_distance, ultrasonic_read, BearingConfig, EncoderSpec, RobotModels,
    RobotState,
};
use keytour::scenario::Scenario;
use keytour::sim::{plan_mission, run_mission, Mission, ObstacleEntry, ObstacleSchedule};
use keytour::tour::{anneal, pairwise_distances, SaConfig, TourShape};
use keytour::trace::TraceEvent;
use keytour::{seeded_rng, SimRng};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

// ---------- oracles ----------

const DELTAS: [(isize, isize); 4] = [(-1, 0), (0, -1), (1, 0), (0, 1)];

fn oracle_neighbors(map: &GridMap, c: Cell) -> impl Iterator<Item = Cell> + '_ {
    DELTAS.iter().filter_map(move |&(dr, dc)| {
        let r = c.row as isize + dr;
        let k = c.col as isize + dc;
        if r < 0 || k < 0 || r >= map.rows() as isize || k >= map.cols() as isize {
            return None;
        }
        let n = Cell::new(r as usize, k as usize);
        map.is_free(n).then_some(n)
    })
}

/// Breadth-first step counts from `start` to every cell (`None` if
/// unreachable or blocked).
fn bfs(map: &GridMap, start: Cell) -> Vec<Option<usize>> {
    let idx = |c: Cell| c.row * map.cols() + c.col;
    let mut dist = vec![None; map.rows() * map.cols()];
    if !map.is_free(start) {
        return dist;
    }
    dist[idx(start)] = Some(0);
    let mut q = VecDeque::from([start]);
    while let Some(c) = q.pop_front() {
        let d = dist[idx(c)].unwrap();
        for n in oracle_neighbors(map, c) {
            if dist[idx(n)].is_none() {
                dist[idx(n)] = Some(d + 1);
                q.push_back(n);
            }
        }
    }
    dist
}

fn bfs_dist(map: &GridMap, a: Cell, b: Cell) -> Option<usize> {
    bfs(map, a)[b.row * map.cols() + b.col]
}

fn random_map(rng: &mut SimRng, rows: usize, cols: usize, density: f64) -> GridMap {
    let grid: Vec<Vec<bool>> = (0..rows)
        .map(|_| (0..cols).map(|_| rng.random::<f64>() < density).collect())
        .collect();
    GridMap::from_rows(&grid, keytour::map::DEFAULT_CELL_SIZE_CM).unwrap()
}

fn free_cells(map: &GridMap) -> Vec<Cell> {
    (0..map.rows())
        .flat_map(|r| (0..map.cols()).map(move |c| Cell::new(r, c)))
        .filter(|&c| map.is_free(c))
        .collect()
}

/// Cells reachable from `start`, including it.
fn component(map: &GridMap, start: Cell) -> Vec<Cell> {
    let d = bfs(map, start);
    free_cells(map)
        .into_iter()
        .filter(|c| d[c.row * map.cols() + c.col].is_some())
        .collect()
}

/// Cheapest closed tour over `m` with index 0 pinned first, by trying every
/// order of the rest.
fn brute_force_cost(m: &[Vec<usize>]) -> usize {
    let n = m.len();
    let mut rest: Vec<usize> = (1..n).collect();
    let mut best = usize::MAX;
    permute(&mut rest, 0, &mut |order| {
        let mut cost = 0;
        let mut prev = 0;
        for &i in order {
            cost += m[prev][i];
            prev = i;
        }
        cost += m[prev][0];
        best = best.min(cost);
    });
    best
}

fn permute(items: &mut [usize], k: usize, visit: &mut dyn FnMut(&[usize])) {
    if k == items.len() {
        visit(items);
        return;
    }
    for i in k..items.len() {
        items.swap(k, i);
        permute(items, k + 1, visit);
        items.swap(k, i);
    }
}

fn closed_cost(m: &[Vec<usize>], order: &[usize]) -> usize {
    let n = order.len();
    (0..n).map(|i| m[order[i]][order[(i + 1) % n]]).sum()
}

/// Whether removing `x` leaves every other cell of `cells` connected.
fn removable(map: &GridMap, cells: &[Cell], x: Cell) -> bool {
    let without = map.with_blocked([x]);
    let Some(&start) = cells.iter().find(|&&c| c != x) else {
        return false;
    };
    let d = bfs(&without, start);
    cells
        .iter()
        .all(|&c| c == x || d[c.row * map.cols() + c.col].is_some())
}

// ---------- criteria ----------

fn astar_optimality() -> Outcome {
    let (mut pairs, mut nopath, mut mismatches) = (0, 0, 0);
    for g in 0..200u64 {
        let mut rng = seeded_rng(10_000 + g);
        let map = random_map(&mut rng, 20, 20, 0.2);
        let free = free_cells(&map);
        for _ in 0..50 {
            let a = free[rng.random_range(0..free.len())];
            let b = free[rng.random_range(0..free.len())];
            let expected = bfs_dist(&map, a, b);
            let got = match astar(&map, a, b) {
                Ok(p) => Some(p.cost()),
                Err(PathError::NoPath { .. }) => None,
                Err(_) => {
                    mismatches += 1;
                    continue;
                }
            };
            pairs += 1;
            if expected.is_none() {
                nopath += 1;
            }
            if got != expected {
                mismatches += 1;
            }
        }
    }
    outcome(
        mismatches == 0 && pairs == 10_000,
        format!("{pairs} pairs on 200 grids ({nopath} unreachable), {mismatches} mismatches"),
    )
}

fn tour_quality() -> Outcome {
    let (mut not_above_identity, mut optimal, mut matrix_errors) = (0, 0, 0);
    let total = 100;
    for i in 0..total as u64 {
        let mut rng = seeded_rng(20_000 + i);
        let n = 5 + (i as usize % 4);
        let (map, points) = loop {
            let map = random_map(&mut rng, 15, 15, 0.2);
            let free = free_cells(&map);
            let origin = free[rng.random_range(0..free.len())];
            let mut comp = component(&map, origin);
            if comp.len() < 40 {
                continue;
            }
            comp.retain(|&c| c != origin);
            let mut points = vec![origin];
            while points.len() < n {
                let c = comp.swap_remove(rng.random_range(0..comp.len()));
                points.push(c);
            }
            break (map, points);
        };
        let oracle: Vec<Vec<usize>> = points
            .iter()
            .map(|&a| {
                let d = bfs(&map, a);
                points.iter().map(|b| d[b.row * map.cols() + b.col].unwrap()).collect()
            })
            .collect();
        let matrix = pairwise_distances(&map, &points).unwrap();
        for (a, row) in oracle.iter().enumerate() {
            for (b, &d) in row.iter().enumerate() {
                if matrix.get(a, b) != Some(d) {
                    matrix_errors += 1;
                }
            }
        }
        let run = anneal(&matrix, TourShape::Closed, &SaConfig::default().with_seed(i)).unwrap();
        let sa_cost = closed_cost(&oracle, &run.tour.order);
        let identity: Vec<usize> = (0..n).collect();
        if sa_cost <= closed_cost(&oracle, &identity) {
            not_above_identity += 1;
        }
        if sa_cost == brute_force_cost(&oracle) {
            optimal += 1;
        }
    }
    let rate = optimal as f64 / total as f64;
    outcome(
        not_above_identity == total && rate >= 0.95 && matrix_errors == 0,
        format!(
            "SA <= identity in {not_above_identity}/{total}, SA = optimum in {optimal}/{total} ({:.0}%), {matrix_errors} matrix entries off",
            rate * 100.0
        ),
    )
}

fn heuristic_admissibility() -> Outcome {
    let (mut checked, mut violations) = (0u64, 0u64);
    for g in 0..50u64 {
        let mut rng = seeded_rng(30_000 + g);
        let map = random_map(&mut rng, 20, 20, 0.2);
        for goal in free_cells(&map) {
            let d = bfs(&map, goal);
            for c in free_cells(&map) {
                if let Some(dist) = d[c.row * map.cols() + c.col] {
                    checked += 1;
                    if heuristic(c, goal) > dist {
                        violations += 1;
                    }
                }
            }
        }
    }
    outcome(
        violations == 0,
        format!("{checked} (cell, goal) pairs on 50 maps, {violations} violations"),
    )
}

fn compass_guidance() -> Outcome {
    let cfg = ControlConfig {
        max_turn_ticks: 10_000,
        ..ControlConfig::default()
    };
    let bound = (180.0f64 / cfg.turn_step_deg).ceil() as usize + 1;
    let bearings = BearingConfig::default();
    let map = GridMap::empty(3, 3);
    let (mut runs, mut over, mut off_target, mut worst) = (0, 0, 0, 0);
    for h in 0..360 {
        for mv in Move::ALL {
            let state = RobotState::new(Cell::new(1, 1), h as f64);
            let mut rng = seeded_rng(0);
            let (end, log) = execute_move(&state, mv, &bearings, &cfg, &RobotModels::ideal(), &map, &mut rng).unwrap();
            runs += 1;
            let turns = log.iter().filter(|t| t.command != HeadingCommand::Forward).count();
            worst = worst.max(turns);
            if turns > bound {
                over += 1;
            }
            let target = bearings.bearing(mv);
            let err = ((end.heading_deg - target).rem_euclid(360.0) + 180.0).rem_euclid(360.0) - 180.0;
            if err.abs() > 2.0 || log.last().map(|t| t.command) != Some(HeadingCommand::Forward) {
                off_target += 1;
            }
        }
    }
    outcome(
        over == 0 && off_target == 0 && runs == 1440,
        format!("{runs} runs, worst {worst} turn ticks (bound {bound}), {off_target} outside ±2°"),
    )
}

fn encoder_formula() -> Outcome {
    // (distance, circumference) in hundredths of a cm, counts per revolution.
    let table: [(u64, u64, u32); 20] = [
        (6096, 2032, 20),
        (6096, 2032, 40),
        (10000, 2032, 20),
        (3048, 2032, 20),
        (12192, 2032, 20),
        (5000, 1000, 1),
        (2500, 1000, 12),
        (7500, 1250, 8),
        (100, 2032, 20),
        (0, 2032, 20),
        (9144, 3000, 64),
        (6096, 3142, 360),
        (1234, 567, 90),
        (45720, 2032, 20),
        (6096, 1600, 100),
        (100000, 2032, 1),
        (33333, 2222, 7),
        (6096, 2500, 48),
        (808, 202, 3),
        (15240, 1905, 256),
    ];
    let mut bad = Vec::new();
    for &(d, c, n) in &table {
        let distance = d as f64 / 100.0;
        let spec = EncoderSpec {
            wheel_circumference_cm: c as f64 / 100.0,
            counts_per_revolution: n,
        };
        let revs_expected = distance / spec.wheel_circumference_cm;
        // Nearest whole tick of d*n/c, by integer arithmetic.
        let num = d * u64::from(n);
        let ticks_expected = (2 * num + c) / (2 * c);
        let revs = revolutions(distance, &spec).unwrap();
        let ticks = ticks_for_distance(distance, &spec).unwrap();
        if revs != revs_expected || ticks != ticks_expected {
            bad.push(format!("({distance}, {}, {n}) -> {ticks} vs {ticks_expected}", spec.wheel_circumference_cm));
        }
    }
    outcome(
        bad.is_empty(),
        format!("{} triples, {} mismatches{}", table.len(), bad.len(), bad.iter().map(|b| format!("; {b}")).collect::<String>()),
    )
}

/// Distance to the first blocked or off-map cell along `mv`, unbounded.
fn oracle_ray(map: &GridMap, from: Cell, mv: Move) -> f64 {
    let (dr, dc) = DELTAS[mv.id()];
    let (mut r, mut c) = (from.row as isize, from.col as isize);
    let mut k = 0.0;
    loop {
        r += dr;
        c += dc;
        k += 1.0;
        let inside = r >= 0 && c >= 0 && r < map.rows() as isize && c < map.cols() as isize;
        if !inside || !map.is_free(Cell::new(r as usize, c as usize)) {
            return k * map.cell_size_cm();
        }
    }
}

fn ultrasonic_envelope() -> Outcome {
    let models = RobotModels::default();
    let mut rng = seeded_rng(60_000);
    let (mut near, mut far, mut bad) = (0, 0, 0);
    for _ in 0..1000 {
        let cell_size = rng.random_range(20.0..80.0);
        let map = random_map(&mut rng, 10, 10, 0.25).with_cell_size(cell_size).unwrap();
        let free = free_cells(&map);
        let at = free[rng.random_range(0..free.len())];
        let mv = Move::ALL[rng.random_range(0..4)];
        let truth = oracle_ray(&map, at, mv);
        let state = RobotState::new(at, 0.0);
        let r = ultrasonic_read(&map, &state, mv, &models.ultrasonic, &mut rng);
        if truth <= 100.0 {
            near += 1;
            if !(r.reliable && r.distance_cm == truth) {
                bad += 1;
            }
        } else {
            far += 1;
            if r.reliable {
                bad += 1;
            }
        }
    }
    outcome(
        bad == 0 && near > 100 && far > 100,
        format!("1000 readings ({near} within 100 cm, {far} beyond), {bad} outside the envelope"),
    )
}

fn drift_band() -> Outcome {
    let models = RobotModels::default();
    let mut rng = seeded_rng(70_000);
    let (mut lo, mut hi) = (f64::MAX, f64::MIN);
    let mut outside = 0;
    for i in 0..10_000 {
        let cell = if i % 2 == 0 { keytour::map::DEFAULT_CELL_SIZE_CM } else { rng.random_range(20.0..100.0) };
        let map = GridMap::empty(1, 2).with_cell_size(cell).unwrap();
        let state = RobotState::new(Cell::new(0, 0), 90.0);
        let out = forward_step(&state, Move::Right, &map, &models, &mut rng).unwrap();
        let per_50 = out.drift_cm.abs() * 50.0 / cell;
        lo = lo.min(per_50);
        hi = hi.max(per_50);
        if !(3.0..=8.0).contains(&per_50) {
            outside += 1;
        }
    }
    outcome(
        outside == 0,
        format!("10000 draws, normalized |drift| in [{lo:.3}, {hi:.3}] cm, {outside} outside [3, 8]"),
    )
}

/// Random scenario whose dynamic obstacles sit on the planned route, never
/// on a key point or a cell whose loss would split the free space, and
/// always clear.
fn obstacle_scenario(seed: u64) -> Scenario {
    let mut rng = seeded_rng(80_000 + seed);
    loop {
        let rows = rng.random_range(6..10);
        let cols = rng.random_range(6..10);
        let map = random_map(&mut rng, rows, cols, 0.15);
        let free = free_cells(&map);
        let origin = free[rng.random_range(0..free.len())];
        let comp = component(&map, origin);
        if comp.len() < 20 {
            continue;
        }
        let mut pool: Vec<Cell> = comp.iter().copied().filter(|&c| c != origin).collect();
        let n = rng.random_range(2..5);
        let others: Vec<Cell> = (0..n).map(|_| pool.swap_remove(rng.random_range(0..pool.len()))).collect();
        let kp = KeyPointSet::new(&map, origin, others).unwrap();
        let mut s = Scenario::new(map.clone(), kp);
        let plan = plan_mission(&s, seed).unwrap();
        let mut candidates: Vec<Cell> = plan.route.clone();
        candidates.sort();
        candidates.dedup();
        candidates.retain(|&c| !s.keypoints.contains(c) && removable(&map, &comp, c));
        if candidates.len() < 3 {
            continue;
        }
        let horizon = 12 * plan.route.len() as u64;
        let mut entries = Vec::new();
        for _ in 0..rng.random_range(2..5) {
            let c = candidates[rng.random_range(0..candidates.len())];
            let appear = rng.random_range(0..horizon);
            entries.push(ObstacleEntry::fixed(c, appear, Some(appear + rng.random_range(5..80))));
        }
        let mut t = rng.random_range(0..horizon);
        let mut waypoints = Vec::new();
        for _ in 0..3 {
            waypoints.push((candidates[rng.random_range(0..candidates.len())], t));
            t += rng.random_range(5..30);
        }
        entries.push(ObstacleEntry::moving(waypoints, Some(t + rng.random_range(1..40))));
        s.obstacles = ObstacleSchedule::new(entries);
        s.validate().unwrap();
        return s;
    }
}

fn mission_end_to_end() -> Outcome {
    let mut failures = Vec::new();
    let (mut waits, mut replans, mut ticks) = (0, 0, 0);
    for seed in 0..50u64 {
        let s = obstacle_scenario(seed);
        let mut m = Mission::new(&s, seed).unwrap();
        let mut unsafe_ticks = 0;
        loop {
            let cell = m.robot().cell;
            if !s.map.is_free(cell) || m.obstacle_cells().contains(&cell) {
                unsafe_ticks += 1;
            }
            if m.is_finished() {
                break;
            }
            m.step();
        }
        let run = m.into_run();
        let r = &run.result;
        waits += run.trace.phases().windows(2).filter(|w| w[0] != PhaseKind::Waiting && w[1] == PhaseKind::Waiting).count();
        replans += r.replans;
        ticks += r.ticks;
        let all_covered = s.keypoints.all().iter().all(|k| run.trace.visited().contains(k));
        let ok = r.success
            && unsafe_ticks == 0
            && all_covered
            && r.ended_at == s.keypoints.origin()
            && r.executed_cost >= r.planned_cost;
        if !ok {
            failures.push(format!("seed {seed}: {:?}, unsafe ticks {unsafe_ticks}", r));
        }
    }
    outcome(
        failures.is_empty(),
        format!(
            "50 missions, {} failed, {waits} waits, {replans} replans, {ticks} ticks total{}",
            failures.len(),
            failures.first().map(|f| format!("; first: {f}")).unwrap_or_default()
        ),
    )
}

fn determinism() -> Outcome {
    let mut differing = 0;
    for seed in 0..10u64 {
        let s = obstacle_scenario(500 + seed);
        let a = run_mission(&s, seed).unwrap().trace.to_text();
        let b = run_mission(&s, seed).unwrap().trace.to_text();
        let dir = std::env::temp_dir();
        let (pa, pb) = (
            dir.join(format!("keytour-acc-{}-{seed}-a.txt", std::process::id())),
            dir.join(format!("keytour-acc-{}-{seed}-b.txt", std::process::id())),
        );
        std::fs::write(&pa, &a).unwrap();
        std::fs::write(&pb, &b).unwrap();
        if std::fs::read(&pa).unwrap() != std::fs::read(&pb).unwrap() {
            differing += 1;
        }
        let _ = std::fs::remove_file(pa);
        let _ = std::fs::remove_file(pb);
    }
    outcome(differing == 0, format!("10 scenarios run twice, {differing} trace files differ"))
}

fn fsm_probe_order() -> Outcome {
    // The robot starts at (1,0) facing north toward (0,0), where an obstacle
    // is parked. East is a wall, west is the map edge, south is open and
    // leads around the loop to the key point.
    let map = keytour::map::parse_map("00000\n01110\n01110\n00000").unwrap();
    let origin = Cell::new(1, 0);
    let kp = KeyPointSet::new(&map, origin, vec![Cell::new(1, 4)]).unwrap();
    let mut s = Scenario::new(map, kp);
    s.models = RobotModels::ideal();
    s.obstacles = ObstacleSchedule::new(vec![ObstacleEntry::fixed(Cell::new(0, 0), 0, None)]);
    let run = run_mission(&s, 0).unwrap();
    let mut collapsed: Vec<PhaseKind> = Vec::new();
    for p in run.trace.phases() {
        if collapsed.last() != Some(&p) {
            collapsed.push(p);
        }
    }
    use PhaseKind::*;
    let expected = [Cruising, Waiting, ProbingRight, ProbingLeft, ProbingBack, Replanning, Cruising];
    let replan_blocked = run.trace.records.iter().flat_map(|r| &r.events).find_map(|e| match e {
        TraceEvent::Replan { blocked, .. } => Some(*blocked),
        _ => None,
    });
    let pass = collapsed == expected && replan_blocked == Some(Some(Cell::new(0, 0))) && run.result.success;
    let names: Vec<&str> = collapsed.iter().map(|p| p.label()).collect();
    outcome(
        pass,
        format!(
            "phases {}, replan blocked {}, mission success {}",
            names.join(" -> "),
            replan_blocked.flatten().map_or("nothing".to_string(), |c| c.to_string()),
            run.result.success
        ),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("A* optimality", astar_optimality),
        ("tour quality", tour_quality),
        ("heuristic admissibility", heuristic_admissibility),
        ("compass guidance", compass_guidance),
        ("encoder formula", encoder_formula),
        ("ultrasonic envelope", ultrasonic_envelope),
        ("drift band", drift_band),
        ("mission end-to-end", mission_end_to_end),
        ("determinism", determinism),
        ("probe order", fsm_probe_order),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let o = check();
        let verdict = if o.pass { "PASS" } else { "FAIL" };
        if !o.pass {
            failed += 1;
        }
        println!(
            "{verdict} [{}] {name}: {} ({:.2} s)",
            i + 1,
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
