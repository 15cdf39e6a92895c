use super::history::{feature_registry, HistoryView};
use super::regression::CellFit;
use super::{ActionGrid, ValueFunctions};
use crate::error::{Error, Result};
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Per-step decision rules `C_j : ℍ^{k,j} → 𝔸`.
pub trait Policy: Send + Sync {
    fn steps(&self) -> usize;

    fn action_dim(&self) -> usize;

    /// Action at step `view.step()`; reads nothing beyond that history.
    fn act(&self, view: &HistoryView<'_>) -> Vec<f64>;
}

/// Always the same action.
#[derive(Debug, Clone)]
pub struct ConstantPolicy {
    pub action: Vec<f64>,
    pub steps: usize,
}

impl Policy for ConstantPolicy {
    fn steps(&self) -> usize {
        self.steps
    }
    fn action_dim(&self) -> usize {
        self.action.len()
    }
    fn act(&self, _: &HistoryView<'_>) -> Vec<f64> {
        self.action.clone()
    }
}

type Rule = dyn Fn(&HistoryView<'_>) -> Vec<f64> + Send + Sync;

/// Analytic rule given as a closure.
pub struct FnPolicy {
    pub steps: usize,
    pub action_dim: usize,
    pub rule: Box<Rule>,
}

impl Policy for FnPolicy {
    fn steps(&self) -> usize {
        self.steps
    }
    fn action_dim(&self) -> usize {
        self.action_dim
    }
    fn act(&self, view: &HistoryView<'_>) -> Vec<f64> {
        (self.rule)(view)
    }
}

/// Per-step tie tolerance `ε / e(k,T)`.
pub fn tie_tolerance(epsilon: f64, steps: usize) -> f64 {
    if steps == 0 {
        0.0
    } else {
        epsilon / steps as f64
    }
}

/// Index of the lexicographically largest action whose value is within
/// `tolerance` of the maximum (actions are stored in ascending order).
pub fn choose_action(values: &[f64], tolerance: f64) -> usize {
    let best = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    values
        .iter()
        .rposition(|&u| u >= best - tolerance)
        .expect("at least one action")
}

/// Argmax rule over the fitted state-action values with the `ε`-budget tie
/// rule.
#[derive(Debug, Clone)]
pub struct GridPolicy {
    values: Arc<ValueFunctions>,
    epsilon: f64,
    tolerance: f64,
}

pub fn extract_epsilon_policy(values: &Arc<ValueFunctions>, epsilon: f64) -> Result<GridPolicy> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid("epsilon", "must be non-negative"));
    }
    Ok(GridPolicy {
        values: values.clone(),
        epsilon,
        tolerance: tie_tolerance(epsilon, values.steps()),
    })
}

const MAGIC: &str = "skeleton-control policy v1";

impl GridPolicy {
    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn value_functions(&self) -> &Arc<ValueFunctions> {
        &self.values
    }

    pub fn action_index(&self, view: &HistoryView<'_>) -> usize {
        choose_action(&self.values.state_action_values(view), self.tolerance)
    }

    /// Versioned plain-text form: header lines, the action grid, then one
    /// `fit` line per (step, action).
    pub fn write_text<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let v = &self.values;
        let grid = v.actions();
        writeln!(w, "{MAGIC}")?;
        writeln!(w, "feature_map {}", v.feature_map().name())?;
        writeln!(w, "joint {}", u8::from(v.joint()))?;
        writeln!(w, "state_dim {}", v.state_dim())?;
        writeln!(w, "action_dim {}", grid.dim())?;
        writeln!(w, "a_bar {}", grid.a_bar())?;
        writeln!(w, "steps {}", v.steps())?;
        writeln!(w, "epsilon {}", self.epsilon)?;
        writeln!(w, "actions {}", grid.len())?;
        for a in grid.points() {
            let coords: Vec<String> = a.iter().map(f64::to_string).collect();
            writeln!(w, "action {}", coords.join(" "))?;
        }
        for j in 0..v.steps() {
            for (g, fit) in v.fits(j).iter().enumerate() {
                write!(
                    w,
                    "fit {j} {g} {} {} {} {}",
                    fit.n, fit.lambda, fit.residual_std, fit.intercept
                )?;
                for x in &fit.weights {
                    write!(w, " {x}")?;
                }
                writeln!(w)?;
            }
        }
        Ok(())
    }

    pub fn read_text<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
        let mut next = |expect: &str| -> Result<(usize, Vec<String>)> {
            let (no, line) = lines.next().ok_or(Error::Parse {
                line: 0,
                reason: format!("unexpected end of input, expected `{expect}`"),
            })?;
            let line = line?;
            Ok((no, line.split_whitespace().map(str::to_string).collect()))
        };
        let parse_err = |line: usize, reason: String| Error::Parse { line, reason };
        let (no, magic) = next(MAGIC)?;
        if magic.join(" ") != MAGIC {
            return Err(parse_err(no, format!("expected header `{MAGIC}`")));
        }
        let mut field = |key: &str| -> Result<(usize, String)> {
            let (no, parts) = next(key)?;
            if parts.len() != 2 || parts[0] != key {
                return Err(parse_err(no, format!("expected `{key} <value>`")));
            }
            Ok((no, parts[1].clone()))
        };
        fn num<T: std::str::FromStr>(no: usize, s: &str) -> Result<T> {
            s.parse().map_err(|_| Error::Parse {
                line: no,
                reason: format!("cannot parse `{s}`"),
            })
        }
        let (_, fmap_name) = field("feature_map")?;
        let (no, s) = field("joint")?;
        let joint = match s.as_str() {
            "0" => false,
            "1" => true,
            _ => return Err(parse_err(no, "joint must be 0 or 1".into())),
        };
        let (no, s) = field("state_dim")?;
        let state_dim: usize = num(no, &s)?;
        let (no, s) = field("action_dim")?;
        let action_dim: usize = num(no, &s)?;
        let (no, s) = field("a_bar")?;
        let a_bar: f64 = num(no, &s)?;
        let (no, s) = field("steps")?;
        let steps: usize = num(no, &s)?;
        let (no, s) = field("epsilon")?;
        let epsilon: f64 = num(no, &s)?;
        let (no, s) = field("actions")?;
        let n_actions: usize = num(no, &s)?;
        drop(field);

        let feature_map = feature_registry(&fmap_name)?;
        let f = feature_map.dim(state_dim, action_dim, joint);
        let per_step = if joint { 1 } else { n_actions };
        let mut points = Vec::with_capacity(n_actions);
        for _ in 0..n_actions {
            let (no, parts) = next("action")?;
            if parts.len() != action_dim + 1 || parts[0] != "action" {
                return Err(parse_err(
                    no,
                    format!("expected `action` with {action_dim} coordinates"),
                ));
            }
            points.push(
                parts[1..]
                    .iter()
                    .map(|s| num(no, s))
                    .collect::<Result<Vec<f64>>>()?,
            );
        }
        let grid = ActionGrid::from_points(a_bar, points)?;
        if grid.len() != n_actions {
            return Err(parse_err(0, "duplicate actions".into()));
        }
        let mut fits = vec![Vec::with_capacity(per_step); steps];
        for j in 0..steps {
            for g in 0..per_step {
                let (no, parts) = next("fit")?;
                if parts.len() != 7 + f || parts[0] != "fit" {
                    return Err(parse_err(
                        no,
                        format!("expected `fit` line with {f} weights"),
                    ));
                }
                let (pj, pg): (usize, usize) = (num(no, &parts[1])?, num(no, &parts[2])?);
                if (pj, pg) != (j, g) {
                    return Err(parse_err(
                        no,
                        format!("expected fit {j} {g}, found fit {pj} {pg}"),
                    ));
                }
                fits[j].push(CellFit {
                    n: num(no, &parts[3])?,
                    lambda: num(no, &parts[4])?,
                    residual_std: num(no, &parts[5])?,
                    intercept: num(no, &parts[6])?,
                    weights: parts[7..]
                        .iter()
                        .map(|s| num(no, s))
                        .collect::<Result<_>>()?,
                });
            }
        }
        let values = Arc::new(ValueFunctions::from_parts(
            feature_map,
            grid,
            state_dim,
            joint,
            fits,
        )?);
        extract_epsilon_policy(&values, epsilon)
    }
}

impl Policy for GridPolicy {
    fn steps(&self) -> usize {
        self.values.steps()
    }

    fn action_dim(&self) -> usize {
        self.values.actions().dim()
    }

    fn act(&self, view: &HistoryView<'_>) -> Vec<f64> {
        self.values.actions().get(self.action_index(view)).to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tolerance_is_budget_over_steps() {
        assert_eq!(tie_tolerance(0.3, 3), 0.3 / 3.0);
        assert_eq!(tie_tolerance(1.0, 8), 0.125);
        assert_eq!(tie_tolerance(0.0, 5), 0.0);
    }

    #[test]
    fn ties_go_to_the_largest_index() {
        assert_eq!(choose_action(&[1.0, 3.0, 2.0], 0.0), 1);
        assert_eq!(choose_action(&[1.0, 3.0, 2.5], 0.5), 2);
        assert_eq!(choose_action(&[2.0, 2.0, 2.0], 0.0), 2);
        assert_eq!(choose_action(&[5.0, 1.0, 1.0], 4.0), 2);
        assert_eq!(choose_action(&[5.0, 1.0, 1.0], 3.9), 0);
    }
}
