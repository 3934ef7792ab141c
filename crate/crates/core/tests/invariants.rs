use keytour::avoidance::{avoidance_step, AvoidanceConfig, AvoidanceState, Decision, Observation, Phase, PhaseKind};
use keytour::map::{Cell, GridMap, KeyPointSet, Move, DEFAULT_CELL_SIZE_CM};
use keytour::robot::{Reading, RobotModels};
use keytour::scenario::Scenario;
use keytour::sim::{Mission, ObstacleEntry, ObstacleSchedule};
use keytour::trace::{MissionTrace, TraceEvent};
use proptest::prelude::*;

fn allowed(from: PhaseKind, to: PhaseKind) -> bool {
    use PhaseKind::*;
    from == to
        || matches!(
            (from, to),
            (Cruising, Waiting)
                | (Waiting, Cruising)
                | (Waiting, ProbingRight)
                | (ProbingRight, Replanning)
                | (ProbingRight, ProbingLeft)
                | (ProbingLeft, Replanning)
                | (ProbingLeft, ProbingBack)
                | (ProbingBack, Replanning)
                | (ProbingBack, Waiting)
                | (Replanning, Cruising)
        )
}

fn arb_obs() -> impl Strategy<Value = Observation> {
    let distances = prop::sample::select(vec![20.0, 40.0, DEFAULT_CELL_SIZE_CM, 2.0 * DEFAULT_CELL_SIZE_CM, 400.0]);
    (1usize..5, 1usize..5, 0usize..4, any::<bool>(), distances).prop_map(|(r, c, f, aligned, d)| Observation {
        cell: Cell::new(r, c),
        facing: Move::from_id(f).unwrap(),
        aligned,
        reading: Reading {
            distance_cm: d,
            reliable: d <= 100.0,
        },
    })
}

proptest! {
    #[test]
    fn fsm_invariants(observations in prop::collection::vec(arb_obs(), 1..200)) {
        let mut state = AvoidanceState::new(AvoidanceConfig::default(), DEFAULT_CELL_SIZE_CM);
        let mut probes: Vec<PhaseKind> = Vec::new();
        for (t, obs) in observations.iter().enumerate() {
            let (next, decision) = avoidance_step(&state, obs, t as u64);
            prop_assert!(allowed(state.phase.kind(), next.phase.kind()), "{:?} -> {:?}", state.phase, next.phase);
            let blocked = obs.reading.reliable && obs.reading.distance_cm < 1.5 * DEFAULT_CELL_SIZE_CM;
            if decision == Decision::Resume {
                prop_assert!(!blocked);
            }
            if state.phase == Phase::Cruising && next.phase.kind() == PhaseKind::Waiting {
                prop_assert_eq!(next.detection.unwrap().blocked_cell, obs.cell.step(obs.facing));
            }
            if let Decision::Replan { blocked_cell, .. } = decision {
                prop_assert_eq!(blocked_cell, state.detection.unwrap().blocked_cell);
            }
            if next.phase.kind() != state.phase.kind() {
                match next.phase.kind() {
                    k @ (PhaseKind::ProbingRight | PhaseKind::ProbingLeft | PhaseKind::ProbingBack) => probes.push(k),
                    PhaseKind::Cruising | PhaseKind::Waiting => {
                        let expected = [PhaseKind::ProbingRight, PhaseKind::ProbingLeft, PhaseKind::ProbingBack];
                        prop_assert_eq!(&probes[..], &expected[..probes.len()]);
                        probes.clear();
                    }
                    PhaseKind::Replanning => {
                        let expected = [PhaseKind::ProbingRight, PhaseKind::ProbingLeft, PhaseKind::ProbingBack];
                        prop_assert!(!probes.is_empty());
                        prop_assert_eq!(&probes[..], &expected[..probes.len()]);
                        probes.clear();
                    }
                }
            }
            state = next;
        }
    }
}

/// Small random world with scheduled obstacles anywhere on free, non-key
/// cells. Missions may fail; the invariants below must hold regardless.
fn arb_scenario() -> impl Strategy<Value = (Scenario, u64)> {
    (
        4usize..7,
        4usize..7,
        prop::collection::vec(any::<bool>(), 49),
        prop::collection::vec((0usize..49, 0u64..150, 1u64..60), 0..4),
        any::<bool>(),
        any::<u64>(),
    )
        .prop_filter_map("need a connected world", |(rows, cols, walls, obstacles, noisy, seed)| {
            let grid: Vec<Vec<bool>> = (0..rows)
                .map(|r| (0..cols).map(|c| (r, c) != (0, 0) && walls[r * cols + c] && (r + c) % 3 == 0).collect())
                .collect();
            let map = GridMap::from_rows(&grid, DEFAULT_CELL_SIZE_CM).ok()?;
            let origin = Cell::new(0, 0);
            let others: Vec<Cell> = [Cell::new(rows - 1, cols - 1), Cell::new(0, cols - 1), Cell::new(rows - 1, 0)]
                .into_iter()
                .filter(|&c| map.is_free(c))
                .collect();
            let kp = KeyPointSet::new(&map, origin, others).ok()?;
            let mut s = Scenario::new(map.clone(), kp);
            if !noisy {
                s.models = RobotModels::ideal();
            }
            let entries = obstacles
                .into_iter()
                .filter_map(|(i, appear, dur)| {
                    let c = Cell::new(i / 7 % rows, i % 7 % cols);
                    (map.is_free(c) && !s.keypoints.contains(c)).then(|| ObstacleEntry::fixed(c, appear, Some(appear + dur)))
                })
                .collect();
            s.obstacles = ObstacleSchedule::new(entries);
            keytour::sim::plan_mission(&s, seed).ok()?;
            Some((s, seed))
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn mission_invariants((s, seed) in arb_scenario()) {
        let mut m = Mission::new(&s, seed).unwrap();
        loop {
            let cell = m.robot().cell;
            prop_assert!(s.map.is_free(cell));
            prop_assert!(!m.obstacle_cells().contains(&cell), "robot shares {} with an obstacle at tick {}", cell, m.tick());
            if m.is_finished() {
                break;
            }
            m.step();
        }
        let run = m.into_run();
        let r = &run.result;

        // Exactly one record per tick, ticks strictly increasing.
        for (i, rec) in run.trace.records.iter().enumerate() {
            prop_assert_eq!(rec.tick, i as u64);
        }
        prop_assert_eq!(run.trace.records.len() as u64, r.ticks + 1);

        if r.success {
            prop_assert_eq!(r.ended_at, s.keypoints.origin());
            let visited = run.trace.visited();
            for k in s.keypoints.all() {
                prop_assert!(visited.contains(&k));
                prop_assert!(r.covered.contains(&k));
            }
            prop_assert!(r.executed_cost >= r.planned_cost);
            if s.obstacles.is_empty() {
                prop_assert_eq!(r.executed_cost, r.planned_cost);
            }
        }

        // Replan requests never list an already covered key point.
        let mut covered = Vec::new();
        let mut requests = run.replan_requests.iter();
        for rec in &run.trace.records {
            for e in &rec.events {
                match e {
                    TraceEvent::Covered(c) => covered.push(*c),
                    TraceEvent::Replan { from, blocked, .. } => {
                        let req = requests.next().expect("one request per replan");
                        prop_assert_eq!(req.from_cell, *from);
                        prop_assert_eq!(req.blocked_cell, *blocked);
                        for c in &req.remaining_keypoints {
                            prop_assert!(!covered.contains(c));
                        }
                    }
                    _ => {}
                }
            }
        }

        // Phase changes follow the state graph.
        for w in run.trace.phases().windows(2) {
            prop_assert!(allowed(w[0], w[1]), "{:?} -> {:?}", w[0], w[1]);
        }

        // Serialized traces parse back to the same text.
        let text = run.trace.to_text();
        prop_assert_eq!(MissionTrace::parse(&text).unwrap().to_text(), text);
    }

    #[test]
    fn missions_are_deterministic((s, seed) in arb_scenario()) {
        let a = keytour::sim::run_mission(&s, seed).unwrap().trace.to_text();
        let b = keytour::sim::run_mission(&s, seed).unwrap().trace.to_text();
        prop_assert_eq!(a, b);
    }
}
