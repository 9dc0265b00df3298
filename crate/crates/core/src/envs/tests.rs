use super::*;
use proptest::prelude::*;
use std::collections::VecDeque;

fn run(env: &mut dyn Env, actions: &[usize]) -> Vec<Step> {
    env.reset();
    let mut out = Vec::new();
    for &a in actions {
        let s = env.step(a).unwrap();
        let done = s.done;
        out.push(s);
        if done {
            break;
        }
    }
    out
}

/// Breadth-first shortest path length to the goal avoiding pits.
fn shortest_path(c: &GridWorldConfig) -> usize {
    let mut dist = vec![usize::MAX; c.width * c.height];
    let idx = |r: usize, col: usize| r * c.width + col;
    let start = idx(c.start[0], c.start[1]);
    dist[start] = 0;
    let mut queue = VecDeque::from([(c.start[0], c.start[1])]);
    while let Some((r, col)) = queue.pop_front() {
        if [r, col] == c.goal {
            return dist[idx(r, col)];
        }
        let mut nbrs = Vec::new();
        if r > 0 {
            nbrs.push((r - 1, col));
        }
        if col > 0 {
            nbrs.push((r, col - 1));
        }
        if r + 1 < c.height {
            nbrs.push((r + 1, col));
        }
        if col + 1 < c.width {
            nbrs.push((r, col + 1));
        }
        for (nr, nc) in nbrs {
            if c.pits.contains(&[nr, nc]) || dist[idx(nr, nc)] != usize::MAX {
                continue;
            }
            dist[idx(nr, nc)] = dist[idx(r, col)] + 1;
            queue.push_back((nr, nc));
        }
    }
    panic!("goal unreachable");
}

#[test]
fn chain_optimum_is_closed_form() {
    let env = ChainMdp::new(ChainConfig {
        length: 4,
        ..ChainConfig::default()
    })
    .unwrap();
    let sol = value_iteration_oracle(&env.tabular(), 0.99).unwrap();
    assert!((sol.optimal_return - 0.970299).abs() < 1e-10);
    for l in 1..12 {
        let env = ChainMdp::new(ChainConfig {
            length: l,
            ..ChainConfig::default()
        })
        .unwrap();
        let sol = value_iteration_oracle(&env.tabular(), 0.9).unwrap();
        assert!((sol.optimal_return - 0.9f64.powi(l as i32 - 1)).abs() < 1e-10);
    }
}

#[test]
fn gridworld_optimum_matches_path_arithmetic() {
    let cfg = GridWorldConfig::default();
    assert_eq!(shortest_path(&cfg), 8);
    let gamma: f64 = 0.99;
    let step_part: f64 = (0..7).map(|i| -0.01 * gamma.powi(i)).sum();
    let closed = step_part + gamma.powi(7);
    let env = GridWorld::new(cfg).unwrap();
    let sol = value_iteration_oracle(&env.tabular(), gamma).unwrap();
    assert!(
        (sol.optimal_return - closed).abs() < 1e-10,
        "{} vs {closed}",
        sol.optimal_return
    );
}

#[test]
fn gridworld_path_arithmetic_on_other_layouts() {
    let layouts = [
        GridWorldConfig {
            width: 3,
            height: 7,
            goal: [6, 2],
            pits: vec![[3, 0], [3, 1]],
            ..Default::default()
        },
        GridWorldConfig {
            width: 6,
            height: 4,
            start: [3, 5],
            goal: [0, 0],
            pits: vec![],
            ..Default::default()
        },
    ];
    for cfg in layouts {
        let n = shortest_path(&cfg) as i32;
        let gamma: f64 = 0.95;
        let closed: f64 = (0..n - 1).map(|i| -0.01 * gamma.powi(i)).sum::<f64>() + gamma.powi(n - 1);
        let sol = value_iteration_oracle(&GridWorld::new(cfg).unwrap().tabular(), gamma).unwrap();
        assert!((sol.optimal_return - closed).abs() < 1e-10);
    }
}

#[test]
fn myopic_values_are_best_immediate_reward() {
    let env = GridWorld::new(GridWorldConfig::default()).unwrap();
    let mdp = env.tabular();
    let sol = value_iteration_oracle(&mdp, 0.0).unwrap();
    for (s, row) in mdp.transitions.iter().enumerate() {
        let best = row.iter().map(|t| t.reward).fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(sol.values[s], best);
    }
}

#[test]
fn oracle_rejects_bad_inputs() {
    let env = ChainMdp::new(ChainConfig::default()).unwrap();
    let mut mdp = env.tabular();
    assert!(value_iteration_oracle(&mdp, 1.0).is_err());
    assert!(value_iteration_oracle(&mdp, f64::NAN).is_err());
    mdp.transitions[2][1].reward = f64::INFINITY;
    assert!(matches!(value_iteration_oracle(&mdp, 0.9), Err(EnvError::NonFinite(_))));
}

#[test]
fn optimal_policy_realises_optimal_return() {
    let mut env = GridWorld::new(GridWorldConfig::default()).unwrap();
    let actions = [1, 1, 1, 1, 2, 2, 2, 2];
    let steps = run(&mut env, &actions);
    assert_eq!(steps.len(), 8);
    assert!(steps.last().unwrap().done);
    let g: f64 = steps
        .iter()
        .enumerate()
        .map(|(t, s)| 0.99f64.powi(t as i32) * s.reward)
        .sum();
    let sol = value_iteration_oracle(&env.tabular(), 0.99).unwrap();
    assert!((g - sol.optimal_return).abs() < 1e-10);
}

#[test]
fn pit_ends_episode_with_penalty() {
    let mut env = GridWorld::new(GridWorldConfig::default()).unwrap();
    let steps = run(&mut env, &[2, 1, 2, 2, 2]);
    // (0,0) → (1,0) → (1,1) → (2,1) → (3,1) is a pit
    assert_eq!(steps.len(), 4);
    assert_eq!(steps[3].reward, -1.0);
    assert!(steps[3].done);
    assert_eq!(env.step(0), Err(EnvError::EpisodeOver));
}

#[test]
fn chain_left_resets_to_start() {
    let mut env = ChainMdp::new(ChainConfig {
        length: 4,
        ..ChainConfig::default()
    })
    .unwrap();
    let steps = run(&mut env, &[1, 1, 0, 1, 1, 1, 1]);
    assert_eq!(steps[2].observation, vec![1.0, 0.0, 0.0, 0.0]);
    assert_eq!(steps.len(), 7);
    assert_eq!(steps[6].reward, 1.0);
    assert!(steps[6].done);
    assert!(steps[..6].iter().all(|s| s.reward == 0.0 && !s.done));
}

#[test]
fn bad_action_is_rejected() {
    let mut env = ChainMdp::new(ChainConfig::default()).unwrap();
    env.reset();
    assert_eq!(env.step(2), Err(EnvError::BadAction { action: 2, actions: 2 }));
}

#[test]
fn raster_planes() {
    let cfg = GridWorldConfig {
        observation: ObservationKind::Raster,
        ..Default::default()
    };
    let mut env = GridWorld::new(cfg).unwrap();
    assert_eq!(env.observation_shape(), vec![3, 5, 5]);
    let obs = env.reset();
    assert_eq!(obs.len(), 75);
    assert_eq!(obs[0], 1.0);
    assert_eq!(obs[25 + 24], 1.0);
    assert_eq!(obs[50 + 8], 1.0);
    assert_eq!(obs[50 + 16], 1.0);
    assert_eq!(obs.iter().sum::<f64>(), 4.0);
}

#[test]
fn invalid_layouts_rejected() {
    let bad = [
        GridWorldConfig {
            goal: [5, 0],
            ..Default::default()
        },
        GridWorldConfig {
            pits: vec![[0, 0]],
            ..Default::default()
        },
        GridWorldConfig {
            max_steps: 0,
            ..Default::default()
        },
        GridWorldConfig {
            step_reward: f64::NAN,
            ..Default::default()
        },
    ];
    for cfg in bad {
        assert!(GridWorld::new(cfg).is_err());
    }
    assert!(ChainMdp::new(ChainConfig {
        length: 0,
        ..Default::default()
    })
    .is_err());
}

#[test]
fn config_toml_round_trip_and_unknown_keys() {
    let text = "kind = \"chain\"\nlength = 6\n";
    let cfg: EnvConfig = toml::from_str(text).unwrap();
    assert_eq!(
        cfg,
        EnvConfig::Chain(ChainConfig {
            length: 6,
            ..ChainConfig::default()
        })
    );
    let again: EnvConfig = toml::from_str(&toml::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(again, cfg);
    let grid = EnvConfig::default();
    let again: EnvConfig = toml::from_str(&toml::to_string(&grid).unwrap()).unwrap();
    assert_eq!(again, grid);
    assert!(toml::from_str::<EnvConfig>("kind = \"chain\"\nlenght = 6\n").is_err());
    assert!(toml::from_str::<EnvConfig>("kind = \"maze\"\n").is_err());
}

fn scaled_pair() -> (Box<dyn Env>, Box<dyn Env>) {
    let base = GridWorldConfig::default();
    let scaled = GridWorldConfig {
        reward_scale: 10.0,
        ..base.clone()
    };
    (
        EnvConfig::Gridworld(base).build().unwrap(),
        EnvConfig::Gridworld(scaled).build().unwrap(),
    )
}

proptest! {
    #[test]
    fn identical_actions_identical_streams(actions in prop::collection::vec(0usize..4, 1..150)) {
        let mut a = GridWorld::new(GridWorldConfig::default()).unwrap();
        let mut b = GridWorld::new(GridWorldConfig::default()).unwrap();
        let sa = run(&mut a, &actions);
        let sb = run(&mut b, &actions);
        prop_assert_eq!(sa.len(), sb.len());
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert_eq!(x.reward.to_bits(), y.reward.to_bits());
            prop_assert_eq!(&x.observation, &y.observation);
            prop_assert_eq!(x.done, y.done);
        }
    }

    #[test]
    fn episodes_end_within_limit(actions in prop::collection::vec(0usize..2, 200)) {
        let mut env = ChainMdp::new(ChainConfig::default()).unwrap();
        let steps = run(&mut env, &actions);
        prop_assert!(steps.len() <= env.max_episode_steps());
        prop_assert!(steps.last().unwrap().done);
    }

    #[test]
    fn reward_scale_is_exact(actions in prop::collection::vec(0usize..4, 1..100)) {
        let (mut base, mut scaled) = scaled_pair();
        let sa = run(base.as_mut(), &actions);
        let sb = run(scaled.as_mut(), &actions);
        for (x, y) in sa.iter().zip(&sb) {
            prop_assert_eq!(y.reward, 10.0 * x.reward);
        }
    }
}

#[test]
fn scaled_oracle_scales() {
    let (base, scaled) = scaled_pair();
    let a = value_iteration_oracle(&base.tabular(), 0.99).unwrap().optimal_return;
    let b = value_iteration_oracle(&scaled.tabular(), 0.99).unwrap().optimal_return;
    assert!((b - 10.0 * a).abs() < 1e-9);
}
