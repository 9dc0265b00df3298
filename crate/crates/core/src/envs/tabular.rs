use super::EnvError;

/// Sup-norm accuracy of [`value_iteration_oracle`].
pub const VALUE_ITERATION_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition {
    pub next: usize,
    pub reward: f64,
    pub terminal: bool,
}

/// Deterministic finite MDP: `transitions[s][a]`. Terminal states have no
/// outgoing transitions of interest; entering one ends the episode.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub start: usize,
    pub transitions: Vec<Vec<Transition>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleSolution {
    pub values: Vec<f64>,
    pub optimal_return: f64,
    pub iterations: usize,
}

/// Optimal values by value iteration, accurate to [`VALUE_ITERATION_TOL`].
///
/// Episode time limits are ignored; the envs here allow far more steps than
/// the optimal path needs.
pub fn value_iteration_oracle(mdp: &TabularMdp, gamma: f64) -> Result<OracleSolution, EnvError> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(EnvError::NonFinite(format!("discount {gamma} outside [0, 1)")));
    }
    if mdp.transitions.len() != mdp.n_states || mdp.start >= mdp.n_states || mdp.n_actions == 0 {
        return Err(EnvError::Config("malformed transition table".into()));
    }
    for row in &mdp.transitions {
        if row.len() != mdp.n_actions {
            return Err(EnvError::Config("malformed transition table".into()));
        }
        for t in row {
            if !t.reward.is_finite() {
                return Err(EnvError::NonFinite(format!("reward {}", t.reward)));
            }
            if t.next >= mdp.n_states {
                return Err(EnvError::Config(format!("transition to unknown state {}", t.next)));
            }
        }
    }

    // ‖V_k − V*‖ ≤ γ/(1−γ) ‖V_k − V_{k−1}‖
    let stop = if gamma == 0.0 {
        f64::INFINITY
    } else {
        VALUE_ITERATION_TOL * (1.0 - gamma) / gamma
    };
    let mut values = vec![0.0; mdp.n_states];
    let mut iterations = 0;
    loop {
        iterations += 1;
        let mut next = vec![0.0; mdp.n_states];
        let mut change: f64 = 0.0;
        for (s, row) in mdp.transitions.iter().enumerate() {
            let best = row
                .iter()
                .map(|t| t.reward + if t.terminal { 0.0 } else { gamma * values[t.next] })
                .fold(f64::NEG_INFINITY, f64::max);
            change = change.max((best - values[s]).abs());
            next[s] = best;
        }
        values = next;
        if change <= stop {
            break;
        }
    }
    Ok(OracleSolution {
        optimal_return: values[mdp.start],
        values,
        iterations,
    })
}
