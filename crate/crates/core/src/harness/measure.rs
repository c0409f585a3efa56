use serde::{Deserialize, Serialize};

use crate::dictionary::Dictionary;
use crate::error::{Error, Result};
use crate::operators::fractional_part;
use crate::sensing::WeightedDensity;
use crate::tv::CompositeSolution;

/// Where the atoms of a measure live.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Domain {
    Line,
    /// The unit circle `ℝ/ℤ`, represented by `[0, 1)`.
    Circle,
}

/// A weighted point mass.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub location: f64,
    pub weight: f64,
}

/// Finite sum of Dirac masses, kept sorted with distinct locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AtomicMeasure {
    domain: Domain,
    atoms: Vec<Atom>,
}

impl AtomicMeasure {
    /// Builds a measure, wrapping circle locations into `[0, 1)` and merging
    /// atoms at identical locations.
    pub fn new(domain: Domain, atoms: impl IntoIterator<Item = (f64, f64)>) -> Result<Self> {
        let mut list = Vec::new();
        for (location, weight) in atoms {
            if !location.is_finite() || !weight.is_finite() {
                return Err(Error::Validation(format!(
                    "atom ({location}, {weight}) is not finite"
                )));
            }
            let location = match domain {
                Domain::Line => location,
                Domain::Circle => fractional_part(location),
            };
            list.push(Atom { location, weight });
        }
        list.sort_by(|a, b| a.location.total_cmp(&b.location));
        let mut merged: Vec<Atom> = Vec::with_capacity(list.len());
        for atom in list {
            match merged.last_mut() {
                Some(last) if last.location == atom.location => last.weight += atom.weight,
                _ => merged.push(atom),
            }
        }
        Ok(Self {
            domain,
            atoms: merged,
        })
    }

    pub fn zero(domain: Domain) -> Self {
        Self {
            domain,
            atoms: Vec::new(),
        }
    }

    pub fn domain(&self) -> Domain {
        self.domain
    }

    pub fn atoms(&self) -> &[Atom] {
        &self.atoms
    }

    /// `‖w‖_M = Σ |w_k|`.
    pub fn tv_norm(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight.abs()).sum()
    }

    pub fn total_mass(&self) -> f64 {
        self.atoms.iter().map(|a| a.weight).sum()
    }

    /// `⟨w, φ⟩ = Σ w_k φ(x_k)`.
    pub fn pair(&self, phi: impl Fn(f64) -> f64) -> f64 {
        self.atoms.iter().map(|a| a.weight * phi(a.location)).sum()
    }

    /// Drops atoms whose weight is exactly zero.
    pub fn pruned(mut self) -> Self {
        self.atoms.retain(|a| a.weight != 0.0);
        self
    }
}

/// `L_T f_T` of a discretized solution: the trend weights placed on the knots.
pub fn trend_innovation(dict: &Dictionary, sol: &CompositeSolution) -> Result<AtomicMeasure> {
    dict.check_solution_shape(sol)?;
    AtomicMeasure::new(
        Domain::Line,
        dict.trend_knots()
            .iter()
            .copied()
            .zip(sol.a.iter().copied()),
    )
}

/// `L_S f_S` of a discretized solution on the circle. The constant offset
/// `-Σ b` of the periodic Green's function vanishes under the zero-sum
/// convention, and the seasonal constant lies in the null space.
pub fn seasonal_innovation(dict: &Dictionary, sol: &CompositeSolution) -> Result<AtomicMeasure> {
    dict.check_solution_shape(sol)?;
    AtomicMeasure::new(
        Domain::Circle,
        dict.seasonal_knots()
            .iter()
            .copied()
            .zip(sol.b.iter().copied()),
    )
}

/// Index of the cell `[k h, (k+1) h)` containing `x`, robust to rounding in `x / h`.
fn cell_index(x: f64, h: f64) -> i64 {
    let mut k = (x / h).floor();
    if k * h > x {
        k -= 1.0;
    } else if (k + 1.0) * h <= x {
        k += 1.0;
    }
    k as i64
}

fn circle_cells(h: f64) -> Result<i64> {
    let n = (1.0 / h).round();
    if n < 1.0 || (1.0 / h - n).abs() > 1e-9 * n {
        return Err(Error::Validation(format!(
            "circle discretization needs 1/h to be an integer, got 1/h = {}",
            1.0 / h
        )));
    }
    Ok(n as i64)
}

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0) || !h.is_finite() {
        return Err(Error::Validation(format!(
            "discretization step must be positive, got {h}"
        )));
    }
    Ok(())
}

/// Moves the mass of every cell `[k h, (k+1) h)` onto its left endpoint.
///
/// The total-variation norm can only decrease, strictly so when atoms of
/// opposite signs share a cell.
pub fn discretize_measure(w: &AtomicMeasure, h: f64) -> Result<AtomicMeasure> {
    check_step(h)?;
    let atoms: Vec<(f64, f64)> = match w.domain {
        Domain::Line => w
            .atoms
            .iter()
            .map(|a| (cell_index(a.location, h) as f64 * h, a.weight))
            .collect(),
        Domain::Circle => {
            let n = circle_cells(h)?;
            w.atoms
                .iter()
                .map(|a| {
                    let k = cell_index(a.location, h).rem_euclid(n);
                    (k as f64 / n as f64, a.weight)
                })
                .collect()
        }
    };
    AtomicMeasure::new(w.domain, atoms)
}

/// `∫_lo^hi` of the linear function through `(x0, v0)`, `(x1, v1)`.
fn linear_integral(x0: f64, v0: f64, x1: f64, v1: f64, lo: f64, hi: f64) -> f64 {
    let at = |x: f64| v0 + (v1 - v0) * (x - x0) / (x1 - x0);
    0.5 * (at(lo) + at(hi)) * (hi - lo)
}

/// Binning of an absolutely continuous measure `w(t) dt` given by a tabulated
/// piecewise-linear density on the line.
pub fn discretize_density(w: &WeightedDensity, h: f64) -> Result<AtomicMeasure> {
    check_step(h)?;
    let mut cells: Vec<(i64, f64)> = Vec::new();
    for (i, pair) in w.values.windows(2).enumerate() {
        let x0 = w.start + i as f64 * w.step;
        let x1 = x0 + w.step;
        let mut lo = x0;
        while lo < x1 {
            let k = cell_index(lo, h);
            let hi = ((k + 1) as f64 * h).min(x1);
            let mass = linear_integral(x0, pair[0], x1, pair[1], lo, hi);
            match cells.last_mut() {
                Some((last, m)) if *last == k => *m += mass,
                _ => cells.push((k, mass)),
            }
            if hi <= lo {
                break;
            }
            lo = hi;
        }
    }
    AtomicMeasure::new(
        Domain::Line,
        cells.into_iter().map(|(k, m)| (k as f64 * h, m)),
    )
}

/// `∫ |w(t)| dt` of a tabulated piecewise-linear density, exact across sign changes.
pub fn density_tv_norm(w: &WeightedDensity) -> f64 {
    w.values
        .windows(2)
        .map(|p| {
            let (a, b) = (p[0], p[1]);
            if a * b >= 0.0 {
                0.5 * (a.abs() + b.abs()) * w.step
            } else {
                0.5 * (a * a + b * b) / (a.abs() + b.abs()) * w.step
            }
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sensing::Decay;

    #[test]
    fn single_atom_moves_to_left_endpoint() {
        let w = AtomicMeasure::new(Domain::Line, [(0.3, 1.0)]).unwrap();
        let d = discretize_measure(&w, 0.5).unwrap();
        assert_eq!(
            d.atoms(),
            &[Atom {
                location: 0.0,
                weight: 1.0
            }]
        );
    }

    #[test]
    fn opposite_atoms_cancel() {
        let w = AtomicMeasure::new(Domain::Line, [(0.1, 1.0), (0.2, -1.0)]).unwrap();
        let d = discretize_measure(&w, 0.5).unwrap();
        assert_eq!(
            d.atoms(),
            &[Atom {
                location: 0.0,
                weight: 0.0
            }]
        );
        assert_eq!(w.tv_norm(), 2.0);
        assert_eq!(d.tv_norm(), 0.0);
    }

    #[test]
    fn atoms_land_in_their_own_cell() {
        for (x, h) in [
            (0.3, 0.1),
            (0.7, 0.1),
            (-0.25, 0.05),
            (0.375, 0.125),
            (2.0, 0.2),
        ] {
            let w = AtomicMeasure::new(Domain::Line, [(x, 1.0)]).unwrap();
            let loc = discretize_measure(&w, h).unwrap().atoms()[0].location;
            let k = (loc / h).round();
            assert!(k * h <= x && x < (k + 1.0) * h, "x={x} h={h} loc={loc}");
        }
    }

    #[test]
    fn circle_wraps_and_needs_integer_cells() {
        let w = AtomicMeasure::new(Domain::Circle, [(1.95, 1.0), (-0.01, 1.0)]).unwrap();
        let d = discretize_measure(&w, 0.25).unwrap();
        assert_eq!(
            d.atoms(),
            &[Atom {
                location: 0.75,
                weight: 2.0
            }]
        );
        assert!(matches!(
            discretize_measure(&w, 0.3),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn merging_adds_weights() {
        let w = AtomicMeasure::new(Domain::Line, [(1.0, 2.0), (0.0, 1.0), (1.0, -0.5)]).unwrap();
        assert_eq!(w.atoms().len(), 2);
        assert_eq!(w.tv_norm(), 2.5);
    }

    #[test]
    fn density_binning_preserves_mass() {
        let d =
            WeightedDensity::tabulate(|t| (3.0 * t).sin(), -1.0, 16, 49, Decay { c: 1.0, p: 2.0 });
        let binned = discretize_density(&d, 0.3).unwrap();
        assert!((binned.total_mass() - d.mass()).abs() < 1e-14);
        assert!(binned.tv_norm() <= density_tv_norm(&d) + 1e-14);
    }

    #[test]
    fn density_tv_across_a_sign_change() {
        let d = WeightedDensity {
            start: 0.0,
            step: 1.0,
            values: vec![1.0, -1.0],
            decay: Decay { c: 1.0, p: 2.0 },
        };
        assert!((density_tv_norm(&d) - 0.5).abs() < 1e-15);
    }
}
