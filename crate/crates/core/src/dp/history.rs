use crate::skeleton::SkeletonPath;
use std::sync::Arc;

/// The history `𝐨_j ∈ ℍ^{k,j}` seen at step `j`: actions `a_0..a_{j−1}`,
/// skeleton steps `1..=j`, and the induced states `X(T_0)..X(T_j)`.
/// Accessors refuse to look past step `j`.
#[derive(Debug, Clone, Copy)]
pub struct HistoryView<'a> {
    step: usize,
    state_dim: usize,
    action_dim: usize,
    states: &'a [f64],
    actions: &'a [f64],
    skeleton: &'a SkeletonPath,
}

impl<'a> HistoryView<'a> {
    /// `states` must hold at least `j + 1` rows and `actions` at least `j`.
    pub fn new(
        step: usize,
        skeleton: &'a SkeletonPath,
        state_dim: usize,
        states: &'a [f64],
        action_dim: usize,
        actions: &'a [f64],
    ) -> Self {
        Self {
            step,
            state_dim,
            action_dim,
            states: &states[..(step + 1) * state_dim],
            actions: &actions[..step * action_dim],
            skeleton,
        }
    }

    pub fn step(&self) -> usize {
        self.step
    }

    /// `T_j`.
    pub fn time(&self) -> f64 {
        self.skeleton.times()[self.step]
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn noise_dim(&self) -> usize {
        self.skeleton.dimension()
    }

    pub fn state(&self) -> &'a [f64] {
        self.state_at(self.step)
    }

    pub fn state_at(&self, i: usize) -> &'a [f64] {
        &self.states[i * self.state_dim..(i + 1) * self.state_dim]
    }

    /// `a_i` for `i < j`.
    pub fn action(&self, i: usize) -> &'a [f64] {
        &self.actions[i * self.action_dim..(i + 1) * self.action_dim]
    }

    pub fn last_action(&self) -> Option<&'a [f64]> {
        self.step.checked_sub(1).map(|i| self.action(i))
    }

    /// `ΔT_n` for `1 ≤ n ≤ j`.
    pub fn delta_time(&self, n: usize) -> f64 {
        assert!(
            n >= 1 && n <= self.step,
            "skeleton step {n} is not in the history at step {}",
            self.step
        );
        self.skeleton.delta_time(n)
    }

    /// `η_n` for `1 ≤ n ≤ j`.
    pub fn increment(&self, n: usize) -> &'a [f64] {
        assert!(
            n >= 1 && n <= self.step,
            "skeleton step {n} is not in the history at step {}",
            self.step
        );
        self.skeleton.increment(n)
    }

    /// Owned copy of the `(action, waiting time, increment)` records.
    pub fn to_history(&self) -> History {
        History {
            records: (1..=self.step)
                .map(|n| {
                    (
                        self.action(n - 1).to_vec(),
                        self.delta_time(n),
                        self.increment(n).to_vec(),
                    )
                })
                .collect(),
        }
    }
}

/// Owned history records `(a_{n−1}, ΔT_n, η_n)`, `n = 1..=j`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct History {
    pub records: Vec<(Vec<f64>, f64, Vec<f64>)>,
}

impl History {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

/// Finite-dimensional summary of a history used as regression input.
pub trait FeatureMap: Send + Sync {
    /// Registry name, written into serialized policies.
    fn name(&self) -> &str;

    /// Feature count; `joint` is true when a candidate action is supplied.
    fn dim(&self, state_dim: usize, action_dim: usize, joint: bool) -> usize;

    /// Overwrite `out` with the features of `view`, or of the pair
    /// `(view, candidate)` when a candidate action is given.
    fn features(&self, view: &HistoryView<'_>, candidate: Option<&[f64]>, out: &mut Vec<f64>);
}

/// Which inputs a polynomial feature map reads. A candidate action, when
/// given, always takes the action slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Inputs {
    /// Current state and time.
    StateTime,
    /// Current state, time and the most recent action (zero at step 0).
    StateTimeAction,
}

/// All monomials of degree ≤ `degree` (1 or 2) in the selected inputs.
#[derive(Debug, Clone)]
pub struct Polynomial {
    name: String,
    pub degree: usize,
    pub inputs: Inputs,
}

impl Polynomial {
    pub fn new(name: &str, degree: usize, inputs: Inputs) -> Self {
        assert!(degree == 1 || degree == 2, "degree must be 1 or 2");
        Self {
            name: name.to_string(),
            degree,
            inputs,
        }
    }

    fn n_inputs(&self, state_dim: usize, action_dim: usize, joint: bool) -> usize {
        if joint || self.inputs == Inputs::StateTimeAction {
            state_dim + 1 + action_dim
        } else {
            state_dim + 1
        }
    }
}

impl FeatureMap for Polynomial {
    fn name(&self) -> &str {
        &self.name
    }

    fn dim(&self, state_dim: usize, action_dim: usize, joint: bool) -> usize {
        let p = self.n_inputs(state_dim, action_dim, joint);
        if self.degree == 1 {
            1 + p
        } else {
            1 + p + p * (p + 1) / 2
        }
    }

    fn features(&self, view: &HistoryView<'_>, candidate: Option<&[f64]>, out: &mut Vec<f64>) {
        out.clear();
        out.push(1.0);
        out.extend_from_slice(view.state());
        out.push(view.time());
        match (candidate, self.inputs) {
            (Some(a), _) => out.extend_from_slice(a),
            (None, Inputs::StateTimeAction) => match view.last_action() {
                Some(a) => out.extend_from_slice(a),
                None => out.extend(std::iter::repeat_n(0.0, view.action_dim())),
            },
            (None, Inputs::StateTime) => {}
        }
        if self.degree == 2 {
            let p = out.len() - 1;
            for i in 1..=p {
                for l in i..=p {
                    let v = out[i] * out[l];
                    out.push(v);
                }
            }
        }
    }
}

/// Names: `quadratic` (default: degree 2 in state, time, last action),
/// `linear`, `quadratic-state` (degree 2 in state and time only), `hedge`
/// (see [`crate::hedging::HedgeFeatures`]).
pub fn feature_registry(name: &str) -> crate::Result<Arc<dyn FeatureMap>> {
    Ok(match name {
        "quadratic" => Arc::new(Polynomial::new(name, 2, Inputs::StateTimeAction)),
        "linear" => Arc::new(Polynomial::new(name, 1, Inputs::StateTimeAction)),
        "quadratic-state" => Arc::new(Polynomial::new(name, 2, Inputs::StateTime)),
        "linear-state" => Arc::new(Polynomial::new(name, 1, Inputs::StateTime)),
        "hedge" => Arc::new(crate::hedging::HedgeFeatures),
        other => {
            return Err(crate::Error::UnknownName {
                kind: "feature map",
                name: other.to_string(),
            })
        }
    })
}
