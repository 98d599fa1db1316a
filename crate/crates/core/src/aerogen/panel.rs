//! Linear-strength vortex panel method with a Kutta condition at the
//! trailing edge.
//!
//! The vortex strength varies linearly along each panel and is continuous
//! between panels, giving `M + 1` unknown node strengths for `M` panels. The
//! `M` flow-tangency equations at the control points are closed by
//! `γ₁ + γ_{M+1} = 0` at the trailing edge.
//!
//! The influence matrix depends only on the geometry while the right-hand
//! side is `sin(θᵢ − α) = sin θᵢ cos α − cos θᵢ sin α`. [`PanelSolver`]
//! therefore factors the matrix once and keeps the two unit solutions; any
//! angle of attack is then a linear combination of them.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};

use super::geometry::AirfoilGeometry;
use crate::error::{Error, Result};

/// Pivot ratio below which the influence matrix is treated as singular.
const SINGULARITY_THRESHOLD: f64 = 1e-13;

#[derive(Debug, Clone)]
pub struct PanelSolution {
    /// Pressure coefficient at each panel control point, in loop order.
    pub cp: Vec<f64>,
    /// Lift coefficient from the total circulation.
    pub cl: f64,
}

#[derive(Debug, Clone)]
struct Panel {
    mid: (f64, f64),
    length: f64,
    theta: f64,
}

/// Pre-factored panel system for one geometry.
#[derive(Debug, Clone)]
pub struct PanelSolver {
    panels: Vec<Panel>,
    gamma_cos: Vec<f64>,
    gamma_sin: Vec<f64>,
    tangent_cos: Vec<f64>,
    tangent_sin: Vec<f64>,
}

impl PanelSolver {
    pub fn new(geometry: &AirfoilGeometry) -> Result<Self> {
        let nodes = geometry.points();
        let m = nodes.len() - 1;
        let mut panels = Vec::with_capacity(m);
        for j in 0..m {
            let (x0, y0) = nodes[j];
            let (x1, y1) = nodes[j + 1];
            let length = ((x1 - x0).powi(2) + (y1 - y0).powi(2)).sqrt();
            if !(length > 0.0) {
                return Err(Error::numerical(format!(
                    "degenerate geometry `{}`: panel {j} from ({x0}, {y0}) to ({x1}, {y1}) has zero length",
                    geometry.name
                )));
            }
            panels.push(Panel {
                mid: (0.5 * (x0 + x1), 0.5 * (y0 + y1)),
                length,
                theta: (y1 - y0).atan2(x1 - x0),
            });
        }

        let mut normal = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut tangent = DMatrix::<f64>::zeros(m, m + 1);
        for i in 0..m {
            let pi = &panels[i];
            let (mut cn2_prev, mut ct2_prev) = (0.0, 0.0);
            for j in 0..m {
                let (cn1, cn2, ct1, ct2) = if i == j {
                    (-1.0, 1.0, 0.5 * PI, 0.5 * PI)
                } else {
                    influence(pi, &panels[j], nodes[j])
                };
                if j == 0 {
                    normal[(i, 0)] = cn1;
                    tangent[(i, 0)] = ct1;
                } else {
                    normal[(i, j)] = cn1 + cn2_prev;
                    tangent[(i, j)] = ct1 + ct2_prev;
                }
                if j == m - 1 {
                    normal[(i, m)] = cn2;
                    tangent[(i, m)] = ct2;
                }
                (cn2_prev, ct2_prev) = (cn2, ct2);
            }
        }
        normal[(m, 0)] = 1.0;
        normal[(m, m)] = 1.0;

        let lu = normal.lu();
        let u = lu.u();
        let diag: Vec<f64> = u.diagonal().iter().map(|v| v.abs()).collect();
        let largest = diag.iter().cloned().fold(0.0, f64::max);
        let (argmin, smallest) = diag
            .iter()
            .cloned()
            .enumerate()
            .fold((0, f64::INFINITY), |acc, (k, v)| if v < acc.1 { (k, v) } else { acc });
        if !(largest.is_finite() && smallest / largest > SINGULARITY_THRESHOLD) {
            return Err(Error::numerical(format!(
                "singular influence matrix for `{}` ({m} panels): smallest pivot {smallest:e} at row {argmin}, largest {largest:e}",
                geometry.name
            )));
        }

        let mut rhs_cos = DVector::<f64>::zeros(m + 1);
        let mut rhs_sin = DVector::<f64>::zeros(m + 1);
        for (i, p) in panels.iter().enumerate() {
            rhs_cos[i] = p.theta.sin();
            rhs_sin[i] = -p.theta.cos();
        }
        let gamma_cos = lu
            .solve(&rhs_cos)
            .ok_or_else(|| Error::numerical("influence matrix could not be inverted"))?;
        let gamma_sin = lu
            .solve(&rhs_sin)
            .ok_or_else(|| Error::numerical("influence matrix could not be inverted"))?;

        let induced_cos = &tangent * &gamma_cos;
        let induced_sin = &tangent * &gamma_sin;
        let tangent_cos = panels
            .iter()
            .zip(induced_cos.iter())
            .map(|(p, v)| p.theta.cos() + v)
            .collect();
        let tangent_sin = panels
            .iter()
            .zip(induced_sin.iter())
            .map(|(p, v)| p.theta.sin() + v)
            .collect();

        let solver = PanelSolver {
            panels,
            gamma_cos: gamma_cos.iter().cloned().collect(),
            gamma_sin: gamma_sin.iter().cloned().collect(),
            tangent_cos,
            tangent_sin,
        };
        if solver.gamma_cos.iter().chain(&solver.gamma_sin).any(|g| !g.is_finite()) {
            return Err(Error::numerical(format!("non-finite vortex strengths for `{}`", geometry.name)));
        }
        Ok(solver)
    }

    pub fn panel_count(&self) -> usize {
        self.panels.len()
    }

    /// Control-point coordinates, in loop order.
    pub fn control_points(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.panels.iter().map(|p| p.mid)
    }

    /// Solution at `alpha_deg`; requires |α| < 90°.
    pub fn solve(&self, alpha_deg: f64) -> Result<PanelSolution> {
        if !(alpha_deg.abs() < 90.0) {
            return Err(Error::invalid(format!("|alpha| must be below 90 deg, got {alpha_deg}")));
        }
        let a = alpha_deg.to_radians();
        let (s, c) = a.sin_cos();
        let cp = self
            .tangent_cos
            .iter()
            .zip(&self.tangent_sin)
            .map(|(tc, ts)| {
                let v = c * tc + s * ts;
                1.0 - v * v
            })
            .collect();
        // Strengths are stored divided by 2πV∞: cl = 2Γ/(V∞c) = 4π Σ γ̄ⱼ sⱼ.
        let circulation: f64 = self
            .panels
            .iter()
            .enumerate()
            .map(|(j, p)| {
                let g0 = c * self.gamma_cos[j] + s * self.gamma_sin[j];
                let g1 = c * self.gamma_cos[j + 1] + s * self.gamma_sin[j + 1];
                0.5 * (g0 + g1) * p.length
            })
            .sum();
        let cl = 4.0 * PI * circulation;
        Ok(PanelSolution { cp, cl })
    }
}

/// Normal and tangential influence coefficients of panel `j` (with start node
/// `node_j`) on the control point of panel `i`, split into the parts carried
/// by the start and end node strengths.
fn influence(pi: &Panel, pj: &Panel, node_j: (f64, f64)) -> (f64, f64, f64, f64) {
    let dx = pi.mid.0 - node_j.0;
    let dy = pi.mid.1 - node_j.1;
    let (sin_j, cos_j) = pj.theta.sin_cos();
    let sj = pj.length;
    let a = -dx * cos_j - dy * sin_j;
    let b = dx * dx + dy * dy;
    let (c, d) = (pi.theta - pj.theta).sin_cos();
    let e = dx * sin_j - dy * cos_j;
    let f = (1.0 + sj * (sj + 2.0 * a) / b).ln();
    let g = (e * sj).atan2(b + a * sj);
    let (sin2, cos2) = (pi.theta - 2.0 * pj.theta).sin_cos();
    let p = dx * sin2 + dy * cos2;
    let q = dx * cos2 - dy * sin2;
    let cn2 = d + 0.5 * q * f / sj - (a * c + d * e) * g / sj;
    let cn1 = 0.5 * d * f + c * g - cn2;
    let ct2 = c + 0.5 * p * f / sj + (a * d - c * e) * g / sj;
    let ct1 = 0.5 * c * f - d * g - ct2;
    (cn1, cn2, ct1, ct2)
}

/// One-off solve: factors the system for `geometry` and evaluates `alpha_deg`.
pub fn panel_solve(geometry: &AirfoilGeometry, alpha_deg: f64) -> Result<PanelSolution> {
    if !(alpha_deg.abs() < 90.0) {
        return Err(Error::invalid(format!("|alpha| must be below 90 deg, got {alpha_deg}")));
    }
    PanelSolver::new(geometry)?.solve(alpha_deg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::aerogen::geometry::parametric_airfoil;

    /// Lift from integrating the surface pressure, independent of the
    /// circulation route.
    fn cl_from_pressure(solver: &PanelSolver, sol: &PanelSolution, alpha_deg: f64) -> f64 {
        let (mut fx, mut fy) = (0.0, 0.0);
        for (p, cp) in solver.panels.iter().zip(&sol.cp) {
            // Outward normal of a clockwise loop is the tangent rotated by +90°.
            let (s, c) = p.theta.sin_cos();
            let (nx, ny) = (-s, c);
            fx -= cp * p.length * nx;
            fy -= cp * p.length * ny;
        }
        let a = alpha_deg.to_radians();
        fy * a.cos() - fx * a.sin()
    }

    #[test]
    fn symmetric_section_has_no_lift_at_zero_incidence() {
        let g = parametric_airfoil(0.0, 0.4, 0.12, 200).unwrap();
        let sol = panel_solve(&g, 0.0).unwrap();
        assert!(sol.cl.abs() < 1e-3, "cl = {}", sol.cl);
    }

    #[test]
    fn thin_section_follows_thin_airfoil_slope() {
        let g = parametric_airfoil(0.0, 0.4, 0.06, 200).unwrap();
        let sol = panel_solve(&g, 3.0).unwrap();
        let thin = 2.0 * PI * 3f64.to_radians();
        assert!((sol.cl - thin).abs() / thin < 0.05, "cl = {} vs {thin}", sol.cl);
    }

    #[test]
    fn lift_is_odd_in_alpha_for_symmetric_section() {
        let g = parametric_airfoil(0.0, 0.4, 0.12, 160).unwrap();
        let solver = PanelSolver::new(&g).unwrap();
        for a in [1.0, 4.5, 9.0, 15.0] {
            let up = solver.solve(a).unwrap().cl;
            let down = solver.solve(-a).unwrap().cl;
            assert!((up + down).abs() < 1e-6, "alpha {a}: {up} vs {down}");
        }
    }

    #[test]
    fn circulation_and_pressure_lift_agree() {
        let g = parametric_airfoil(0.02, 0.4, 0.16, 300).unwrap();
        let solver = PanelSolver::new(&g).unwrap();
        for a in [-10.0, -2.0, 0.0, 5.0, 12.0] {
            let sol = solver.solve(a).unwrap();
            let cl_p = cl_from_pressure(&solver, &sol, a);
            assert!((sol.cl - cl_p).abs() < 0.02 * sol.cl.abs().max(0.1), "alpha {a}: {} vs {cl_p}", sol.cl);
        }
    }

    #[test]
    fn prefactored_solution_matches_direct_solve() {
        // Direct assembly with the full right-hand side at one angle.
        let g = parametric_airfoil(0.02, 0.4, 0.12, 80).unwrap();
        let solver = PanelSolver::new(&g).unwrap();
        let alpha: f64 = 7.0;
        let nodes = g.points();
        let m = solver.panels.len();
        let mut an = DMatrix::<f64>::zeros(m + 1, m + 1);
        let mut at = DMatrix::<f64>::zeros(m, m + 1);
        for i in 0..m {
            for j in 0..m {
                let (cn1, cn2, ct1, ct2) = if i == j {
                    (-1.0, 1.0, 0.5 * PI, 0.5 * PI)
                } else {
                    influence(&solver.panels[i], &solver.panels[j], nodes[j])
                };
                an[(i, j)] += cn1;
                an[(i, j + 1)] += cn2;
                at[(i, j)] += ct1;
                at[(i, j + 1)] += ct2;
            }
        }
        an[(m, 0)] = 1.0;
        an[(m, m)] = 1.0;
        let a = alpha.to_radians();
        let rhs = DVector::from_iterator(
            m + 1,
            solver.panels.iter().map(|p| (p.theta - a).sin()).chain(std::iter::once(0.0)),
        );
        let gamma = an.lu().solve(&rhs).unwrap();
        let vt = &at * &gamma;
        let sol = solver.solve(alpha).unwrap();
        for i in 0..m {
            let v = (solver.panels[i].theta - a).cos() + vt[i];
            assert!((sol.cp[i] - (1.0 - v * v)).abs() < 1e-9);
        }
    }

    #[test]
    fn kutta_condition_closes_trailing_edge_pressure() {
        let g = crate::aerogen::geometry::default_airfoil();
        let solver = PanelSolver::new(&g).unwrap();
        let m = solver.panel_count();
        let mut a = -15.0;
        while a <= 17.0 {
            let sol = solver.solve(a).unwrap();
            assert!((sol.cp[0] - sol.cp[m - 1]).abs() < 0.05, "alpha {a}: {} vs {}", sol.cp[0], sol.cp[m - 1]);
            a += 0.5;
        }
    }

    #[test]
    fn collapsed_geometry_is_reported() {
        let mut pts: Vec<(f64, f64)> = Vec::new();
        for i in 0..=20 {
            pts.push((1.0 - i as f64 / 20.0, 0.0));
        }
        for i in 1..=20 {
            pts.push((i as f64 / 20.0, 0.0));
        }
        let g = AirfoilGeometry::new("flat", pts).unwrap();
        assert!(matches!(PanelSolver::new(&g), Err(Error::Numerical(_))));

        let mut dup = crate::aerogen::geometry::parametric_airfoil(0.0, 0.4, 0.12, 60).unwrap().points().to_vec();
        dup[5] = dup[4];
        let g = AirfoilGeometry::new("dup", dup).unwrap();
        match PanelSolver::new(&g) {
            Err(Error::Numerical(msg)) => assert!(msg.contains("panel 4")),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rejects_extreme_incidence() {
        let g = parametric_airfoil(0.0, 0.4, 0.12, 60).unwrap();
        assert!(panel_solve(&g, 90.0).is_err());
    }
}
