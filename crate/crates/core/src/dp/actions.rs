use crate::error::{Error, Result};

/// The box `𝔸 = {a ∈ ℝ^r : max |a_i| ≤ ā}` with a uniform optimization grid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ActionSpace {
    pub r: usize,
    pub a_bar: f64,
    pub grid_points_per_axis: usize,
}

impl ActionSpace {
    pub fn new(r: usize, a_bar: f64, grid_points_per_axis: usize) -> Result<Self> {
        if r == 0 {
            return Err(Error::invalid("r", "action dimension must be at least 1"));
        }
        if !(a_bar > 0.0 && a_bar.is_finite()) {
            return Err(Error::invalid("a_bar", "must be positive"));
        }
        if grid_points_per_axis < 2 {
            return Err(Error::invalid("grid_points_per_axis", "must be at least 2"));
        }
        Ok(Self {
            r,
            a_bar,
            grid_points_per_axis,
        })
    }

    pub fn contains(&self, a: &[f64]) -> bool {
        a.len() == self.r && a.iter().all(|x| x.abs() <= self.a_bar)
    }

    /// Componentwise projection onto the box.
    pub fn clamp(&self, a: &mut [f64]) {
        a.iter_mut()
            .for_each(|x| *x = x.clamp(-self.a_bar, self.a_bar));
    }

    pub fn grid(&self) -> ActionGrid {
        let g = self.grid_points_per_axis;
        let axis: Vec<f64> = (0..g)
            .map(|i| -self.a_bar + 2.0 * self.a_bar * i as f64 / (g - 1) as f64)
            .collect();
        let total = g.pow(self.r as u32);
        let points = (0..total)
            .map(|mut idx| {
                let mut a = vec![0.0; self.r];
                for slot in a.iter_mut().rev() {
                    *slot = axis[idx % g];
                    idx /= g;
                }
                a
            })
            .collect();
        ActionGrid {
            r: self.r,
            a_bar: self.a_bar,
            points,
        }
    }
}

/// Finite action set in ascending lexicographic order, so "lexicographically
/// largest" means "largest index".
#[derive(Debug, Clone, PartialEq)]
pub struct ActionGrid {
    r: usize,
    a_bar: f64,
    points: Vec<Vec<f64>>,
}

impl ActionGrid {
    /// Arbitrary points inside the box; sorted and deduplicated.
    pub fn from_points(a_bar: f64, mut points: Vec<Vec<f64>>) -> Result<Self> {
        let r = points.first().map(Vec::len).unwrap_or(0);
        if r == 0 {
            return Err(Error::invalid(
                "actions",
                "need at least one non-empty action",
            ));
        }
        for p in &points {
            if p.len() != r {
                return Err(Error::invalid(
                    "actions",
                    "all actions must have the same dimension",
                ));
            }
            if !p.iter().all(|x| x.is_finite() && x.abs() <= a_bar) {
                return Err(Error::invalid(
                    "actions",
                    format!("{p:?} lies outside the box of half-width {a_bar}"),
                ));
            }
        }
        points.sort_by(|a, b| a.partial_cmp(b).expect("finite actions"));
        points.dedup();
        Ok(Self { r, a_bar, points })
    }

    pub fn dim(&self) -> usize {
        self.r
    }

    pub fn a_bar(&self) -> f64 {
        self.a_bar
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn get(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }
}
