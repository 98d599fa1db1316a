use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fsutil;
use crate::quasirandom::parse_finite;

pub const MIN_SURFACE_POINTS: usize = 40;

/// Closed loop of chord-normalized surface coordinates.
///
/// The loop starts at the trailing edge, runs along the lower surface to the
/// leading edge and returns along the upper surface, so the first and last
/// points coincide. Each consecutive pair of points is one panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirfoilGeometry {
    pub name: String,
    points: Vec<(f64, f64)>,
}

impl AirfoilGeometry {
    pub fn new(name: impl Into<String>, points: Vec<(f64, f64)>) -> Result<Self> {
        if points.len() < MIN_SURFACE_POINTS {
            return Err(Error::invalid(format!(
                "airfoil needs at least {MIN_SURFACE_POINTS} surface points, got {}",
                points.len()
            )));
        }
        if points.iter().any(|(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(Error::invalid("airfoil coordinates must be finite"));
        }
        if points.first() != points.last() {
            return Err(Error::invalid("airfoil loop must be closed: first and last points differ"));
        }
        if let Some((x, _)) = points.iter().find(|(x, _)| !(0.0..=1.0).contains(x)) {
            return Err(Error::invalid(format!("x = {x} lies outside the chord [0, 1]")));
        }
        Ok(AirfoilGeometry {
            name: name.into(),
            points,
        })
    }

    pub fn points(&self) -> &[(f64, f64)] {
        &self.points
    }

    /// Number of panels, which is also the number of pressure values per sample.
    pub fn panel_count(&self) -> usize {
        self.points.len() - 1
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,y\n");
        for (x, y) in &self.points {
            out.push_str(&format!("{x:?},{y:?}\n"));
        }
        out
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        fsutil::write_atomic_str(path, &self.to_csv())
    }

    /// Reads `x,y` rows in loop order. The name is the file stem.
    pub fn read(path: &Path) -> Result<Self> {
        let text = fsutil::read_to_string(path)?;
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "airfoil".to_string());
        Self::parse(&name, &text, Some(path))
    }

    pub fn parse(name: &str, text: &str, path: Option<&Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(text.as_bytes());
        let headers = reader
            .headers()
            .map_err(|e| Error::parse(path, Some(1), e.to_string()))?
            .clone();
        if headers.len() != 2 || &headers[0] != "x" || &headers[1] != "y" {
            return Err(Error::parse(path, Some(1), "expected header `x,y`"));
        }
        let mut points = Vec::new();
        for record in reader.records() {
            let record = record.map_err(|e| Error::parse(path, e.position().map(|p| p.line()), e.to_string()))?;
            let line = record.position().map(|p| p.line());
            let x = parse_finite(&record[0], path, line)?;
            let y = parse_finite(&record[1], path, line)?;
            points.push((x, y));
        }
        AirfoilGeometry::new(name, points).map_err(|e| Error::parse(path, None, e.to_string()))
    }
}

/// Four-digit-style airfoil: parabolic camber line with its maximum at
/// `camber_pos`, standard thickness distribution with a closed trailing
/// edge, cosine-spaced stations.
///
/// `n_points` is the number of panels (half per surface); the returned loop
/// holds `n_points + 1` coordinates because the trailing edge is repeated.
pub fn parametric_airfoil(camber: f64, camber_pos: f64, thickness: f64, n_points: usize) -> Result<AirfoilGeometry> {
    if !(0.0..=0.1).contains(&camber) {
        return Err(Error::invalid(format!("camber {camber} outside [0, 0.1]")));
    }
    if !(0.2..=0.6).contains(&camber_pos) {
        return Err(Error::invalid(format!("camber position {camber_pos} outside [0.2, 0.6]")));
    }
    if !(0.05..=0.25).contains(&thickness) {
        return Err(Error::invalid(format!("thickness {thickness} outside [0.05, 0.25]")));
    }
    if n_points < MIN_SURFACE_POINTS || n_points % 2 != 0 {
        return Err(Error::invalid(format!(
            "n_points must be even and at least {MIN_SURFACE_POINTS}, got {n_points}"
        )));
    }

    let half = n_points / 2;
    let stations: Vec<f64> = (0..=half)
        .map(|i| 0.5 * (1.0 - (std::f64::consts::PI * i as f64 / half as f64).cos()))
        .collect();

    let surface = |x: f64| -> ((f64, f64), (f64, f64)) {
        let yt = 5.0
            * thickness
            * (0.2969 * x.sqrt() - 0.1260 * x - 0.3516 * x * x + 0.2843 * x.powi(3) - 0.1036 * x.powi(4));
        let (yc, slope) = if camber == 0.0 {
            (0.0, 0.0)
        } else if x < camber_pos {
            let p = camber_pos;
            (camber / (p * p) * (2.0 * p * x - x * x), 2.0 * camber / (p * p) * (p - x))
        } else {
            let q = 1.0 - camber_pos;
            (
                camber / (q * q) * (1.0 - 2.0 * camber_pos + 2.0 * camber_pos * x - x * x),
                2.0 * camber / (q * q) * (camber_pos - x),
            )
        };
        let theta = slope.atan();
        let upper = (x - yt * theta.sin(), yc + yt * theta.cos());
        let lower = (x + yt * theta.sin(), yc - yt * theta.cos());
        (upper, lower)
    };

    let mut points = Vec::with_capacity(n_points + 1);
    // Lower surface, trailing edge to leading edge.
    for &x in stations.iter().rev() {
        points.push(surface(x).1);
    }
    // Upper surface, leading edge (already emitted) back to trailing edge.
    for &x in stations.iter().skip(1) {
        points.push(surface(x).0);
    }

    // The thickness offset pushes a few nose points slightly past x = 0;
    // rescale so the chord spans exactly [0, 1].
    let x_min = points.iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
    let x_max = points.iter().map(|p| p.0).fold(f64::NEG_INFINITY, f64::max);
    let chord = x_max - x_min;
    for p in &mut points {
        *p = (((p.0 - x_min) / chord).clamp(0.0, 1.0), p.1 / chord);
    }
    let te = points[0];
    *points.last_mut().expect("non-empty loop") = te;

    let name = format!(
        "param-m{:.0}-p{:.0}-t{:.0}",
        camber * 100.0,
        camber_pos * 10.0,
        thickness * 100.0
    );
    AirfoilGeometry::new(name, points)
}

/// Cambered 16%-thick section with 600 panels, the built-in stand-in geometry.
pub fn default_airfoil() -> AirfoilGeometry {
    parametric_airfoil(0.02, 0.4, 0.16, 600).expect("default airfoil parameters are valid")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symmetric_section_mirrors_about_chord() {
        let g = parametric_airfoil(0.0, 0.4, 0.12, 100).unwrap();
        let pts = g.points();
        let n = g.panel_count();
        for i in 0..=n {
            let (x1, y1) = pts[i];
            let (x2, y2) = pts[n - i];
            assert!((x1 - x2).abs() < 1e-12);
            assert!((y1 + y2).abs() < 1e-12);
        }
    }

    #[test]
    fn max_thickness_matches_request() {
        let g = parametric_airfoil(0.02, 0.4, 0.12, 200).unwrap();
        let pts = g.points();
        let n = g.panel_count();
        // Lower point i and upper point n - i sit on the same station.
        let t = (0..=n / 2)
            .map(|i| {
                let (xl, yl) = pts[i];
                let (xu, yu) = pts[n - i];
                ((xu - xl).powi(2) + (yu - yl).powi(2)).sqrt()
            })
            .fold(0.0, f64::max);
        assert!((t - 0.12).abs() / 0.12 < 0.01, "max thickness {t}");
    }

    #[test]
    fn loop_is_closed_and_chord_normalized() {
        let g = default_airfoil();
        assert_eq!(g.points().len(), 601);
        assert_eq!(g.panel_count(), 600);
        assert_eq!(g.points()[0], *g.points().last().unwrap());
        assert_eq!(g.points()[0].0, 1.0);
        let x_min = g.points().iter().map(|p| p.0).fold(f64::INFINITY, f64::min);
        assert_eq!(x_min, 0.0);
        // Lower surface comes first.
        assert!(g.points()[10].1 < 0.0);
        assert!(g.points()[590].1 > 0.0);
    }

    #[test]
    fn bad_parameters_are_rejected() {
        assert!(matches!(parametric_airfoil(0.02, 0.4, 0.12, 41), Err(Error::InvalidArgument(_))));
        assert!(parametric_airfoil(0.02, 0.4, 0.12, 38).is_err());
        assert!(parametric_airfoil(0.2, 0.4, 0.12, 100).is_err());
        assert!(parametric_airfoil(0.02, 0.7, 0.12, 100).is_err());
        assert!(parametric_airfoil(0.02, 0.4, 0.3, 100).is_err());
    }

    #[test]
    fn open_loop_is_rejected() {
        let mut pts: Vec<(f64, f64)> = (0..50).map(|i| (i as f64 / 49.0, 0.01 * i as f64)).collect();
        pts[0] = (1.0, 0.0);
        assert!(AirfoilGeometry::new("open", pts).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let g = parametric_airfoil(0.02, 0.4, 0.12, 60).unwrap();
        let back = AirfoilGeometry::parse(&g.name, &g.to_csv(), None).unwrap();
        assert_eq!(back, g);
    }
}
