use crate::error::{Error, Result};
use crate::skeleton::SkeletonPath;
use crate::structures::{ControlledStructure, Driver, StatePath, StepContext};

/// Two-period toy problem on a quantized outcome tree: scalar actions in
/// `{−ā, +ā}`, and each skeleton step reduced to the sign of its (single,
/// `d = 1`) increment. The state records `(sign a₀, s₁, sign a₁, s₂)` and the
/// payoff is read from a 16-entry table indexed by those signs, most
/// significant first, with `+` as bit 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SignTree {
    pub table: [f64; 16],
}

impl Default for SignTree {
    fn default() -> Self {
        // reward for guessing the sign of step 1 after seeing nothing, then
        // following it; second action is rewarded for matching s₁
        let mut table = [0.0; 16];
        for (idx, v) in table.iter_mut().enumerate() {
            let bit = |k: usize| if idx >> (3 - k) & 1 == 1 { 1.0 } else { -1.0 };
            let (a0, s1, a1, s2) = (bit(0), bit(1), bit(2), bit(3));
            *v = 0.3 * a0 + a1 * s1 + 0.2 * a1 * s2 + 0.5 * a0 * s1 + 0.4 * s2 + 0.25 * a0 * a1;
        }
        Self { table }
    }
}

impl SignTree {
    pub fn new(table: [f64; 16]) -> Result<Self> {
        if !table.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("table", "payoffs must be finite"));
        }
        Ok(Self { table })
    }

    fn entry(&self, a0: bool, s1: bool, a1: bool, s2: bool) -> f64 {
        self.table[(a0 as usize) << 3 | (s1 as usize) << 2 | (a1 as usize) << 1 | s2 as usize]
    }

    /// Optimal value by exhaustive enumeration; each sign is ± with
    /// probability 1/2.
    pub fn enumerate(&self) -> f64 {
        let b = [false, true];
        b.iter()
            .map(|&a0| {
                b.iter()
                    .map(|&s1| {
                        b.iter()
                            .map(|&a1| {
                                b.iter()
                                    .map(|&s2| 0.5 * self.entry(a0, s1, a1, s2))
                                    .sum::<f64>()
                            })
                            .fold(f64::NEG_INFINITY, f64::max)
                            * 0.5
                    })
                    .sum::<f64>()
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn payoff(&self, path: &StatePath) -> f64 {
        let x = path.terminal();
        self.entry(x[0] > 0.0, x[1] > 0.0, x[2] > 0.0, x[3] > 0.0)
    }
}

impl ControlledStructure for SignTree {
    fn state_dim(&self) -> usize {
        4
    }

    fn noise_dim(&self) -> usize {
        1
    }

    fn initial_state(&self) -> Vec<f64> {
        vec![0.0; 4]
    }

    fn step(
        &self,
        q: usize,
        skeleton: &SkeletonPath,
        _driver: &Driver,
        ctx: &StepContext<'_>,
        action: &[f64],
        out: &mut [f64],
    ) {
        out.copy_from_slice(ctx.current());
        if q <= 2 {
            out[2 * (q - 1)] = action[0].signum();
            out[2 * (q - 1) + 1] = skeleton.increment(q)[0].signum();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_tree_optimum() {
        // a1 = s1 earns 1 + 0.25·a0·s1 on average; a0 = +1 then gives
        // 0.3 + 1 + 0.25·E[s1] = 1.3
        assert!((SignTree::default().enumerate() - 1.3).abs() < 1e-12);
    }
}
