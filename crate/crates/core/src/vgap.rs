//! Vinnicombe nu-gap metric, per-plant maximum gap and central-plant search.
//!
//! The winding condition is evaluated on `det(I + P2~(s) P1(s))` where
//! `P2~(s) = P2(-s)^T`, which reduces to `P2(jw)^*` on the imaginary axis.
//! The contour runs up the imaginary axis from `-j inf` to `+j inf`, detours
//! to the right of imaginary-axis poles along small semicircles and closes at
//! infinity, where the determinant is constant for proper plants. The
//! reported winding number is `-(accumulated phase)/(2 pi)`, the sign under
//! which `wno + eta(P1) - eta(P2) - eta0(P2) = 0` is the gap condition.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::lti::{on_imaginary_axis, FrequencyGrid, PlantSet, StateSpacePlant};

/// Radius of the contour indentation relative to `max(1, |w0|)`.
const INDENT_RADIUS: f64 = 1e-6;
/// Axis points added on each side of an indentation.
const INDENT_DENSIFY: i32 = 16;
/// Points on each indentation semicircle, endpoints included.
const ARC_POINTS: usize = 17;
/// Maximum bisection depth per contour segment.
const MAX_BISECT: usize = 48;
const DET_TOL: f64 = 1e-9;

/// How unstable poles are counted for the winding condition.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoleCounting {
    /// Every eigenvalue of A counts.
    #[default]
    Eigenvalues,
    /// Only modes that are both controllable and observable (PBH test) count.
    Minimal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VgapResult {
    pub value: f64,
    pub condition_met: bool,
    pub wno: i64,
    pub peak_frequency: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CentralPlantResult {
    pub index: usize,
    pub epsilon: f64,
    pub max_gaps: Vec<f64>,
    pub gap_matrix: DMatrix<f64>,
}

/// `(eta, eta0)`: open right-half-plane and imaginary-axis pole counts.
pub fn pole_counts(plant: &StateSpacePlant) -> Result<(usize, usize)> {
    pole_counts_with(plant, PoleCounting::Eigenvalues)
}

pub fn pole_counts_with(plant: &StateSpacePlant, counting: PoleCounting) -> Result<(usize, usize)> {
    let mut eta = 0;
    let mut eta0 = 0;
    for p in plant.poles()? {
        if counting == PoleCounting::Minimal && !is_minimal_mode(plant, p) {
            continue;
        }
        if on_imaginary_axis(p) {
            eta0 += 1;
        } else if p.re > 0.0 {
            eta += 1;
        }
    }
    Ok((eta, eta0))
}

/// PBH test: the mode at `p` is controllable from B and observable from C.
fn is_minimal_mode(plant: &StateSpacePlant, p: Complex64) -> bool {
    let n = plant.states();
    let a = linalg::to_complex(&plant.a);
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= p;
    }
    let full_rank = |m: &CMat| {
        let sv = linalg::singular_values(m);
        let smax = sv.iter().copied().fold(0.0, f64::max).max(1.0);
        sv.iter().filter(|&&s| s > 1e-9 * smax).count() == n
    };
    let mut ctrb = CMat::zeros(n, n + plant.inputs());
    ctrb.view_mut((0, 0), (n, n)).copy_from(&shifted);
    ctrb.view_mut((0, n), (n, plant.inputs()))
        .copy_from(&linalg::to_complex(&plant.b));
    let mut obsv = CMat::zeros(n + plant.outputs(), n);
    obsv.view_mut((0, 0), (n, n)).copy_from(&shifted);
    obsv.view_mut((n, 0), (plant.outputs(), n))
        .copy_from(&linalg::to_complex(&plant.c));
    full_rank(&ctrb) && full_rank(&obsv)
}

#[derive(Debug, Clone, Copy)]
enum Knot {
    /// Point `j w` on the imaginary axis; `w = +-inf` closes the contour.
    Axis(f64),
    /// Point `j center + radius e^{j phi}` on an indentation.
    Arc { center: f64, radius: f64, phi: f64 },
}

impl Knot {
    fn point(&self) -> Option<Complex64> {
        match *self {
            Knot::Axis(w) if w.is_infinite() => None,
            Knot::Axis(w) => Some(Complex64::new(0.0, w)),
            Knot::Arc {
                center,
                radius,
                phi,
            } => Some(Complex64::new(0.0, center) + Complex64::from_polar(radius, phi)),
        }
    }

    fn as_axis(&self) -> Option<f64> {
        match *self {
            Knot::Axis(w) => Some(w),
            Knot::Arc {
                center,
                radius,
                phi,
            } if (phi.abs() - FRAC_PI_2).abs() < 1e-15 => Some(center + radius * phi.signum()),
            Knot::Arc { .. } => None,
        }
    }

    fn midpoint(&self, other: &Knot) -> Option<Knot> {
        match (*self, *other) {
            (
                Knot::Arc {
                    center,
                    radius,
                    phi,
                },
                Knot::Arc {
                    center: c2,
                    phi: p2,
                    ..
                },
            ) if center == c2 => Some(Knot::Arc {
                center,
                radius,
                phi: 0.5 * (phi + p2),
            }),
            _ => {
                let (a, b) = (self.as_axis()?, other.as_axis()?);
                Some(Knot::Axis((0.5 * (a.atan() + b.atan())).tan()))
            }
        }
    }
}

struct DetContour<'a> {
    p1: &'a StateSpacePlant,
    p2: &'a StateSpacePlant,
    at_infinity: Complex64,
}

impl<'a> DetContour<'a> {
    fn new(p1: &'a StateSpacePlant, p2: &'a StateSpacePlant) -> Self {
        let m = p1.inputs();
        let f_inf = DMatrix::<f64>::identity(m, m) + p2.d.transpose() * &p1.d;
        Self {
            p1,
            p2,
            at_infinity: linalg::cdet(&linalg::to_complex(&f_inf)),
        }
    }

    /// `det(I + P2(-s)^T P1(s))`, checking non-vanishing on axis points.
    fn eval(&self, knot: &Knot) -> Result<Complex64> {
        let Some(s) = knot.point() else {
            if self.at_infinity.norm() <= DET_TOL {
                return Err(Error::DetVanishesOnContour {
                    s: Complex64::new(0.0, f64::INFINITY),
                });
            }
            return Ok(self.at_infinity);
        };
        let g1 = self.p1.eval(s)?;
        let g2 = self.p2.eval(-s)?.transpose();
        let m = g1.ncols();
        let det = linalg::cdet(&(CMat::identity(m, m) + &g2 * &g1));
        if matches!(knot, Knot::Axis(_)) {
            let scale = 1.0 + linalg::sigma_max(&g1) * linalg::sigma_max(&g2);
            if !(det.norm() > DET_TOL * scale) {
                return Err(Error::DetVanishesOnContour { s });
            }
        }
        Ok(det)
    }

    fn accumulate(
        &self,
        a: Knot,
        fa: Complex64,
        b: Knot,
        fb: Complex64,
        depth: usize,
    ) -> Result<f64> {
        let step = (fb / fa).arg();
        if step.abs() < FRAC_PI_2 {
            return Ok(step);
        }
        let mid = match a.midpoint(&b) {
            Some(mid) if depth < MAX_BISECT => mid,
            _ => {
                return Err(Error::PhaseJumpTooLarge {
                    s: a.point().unwrap_or(Complex64::new(0.0, f64::INFINITY)),
                })
            }
        };
        let fm = self.eval(&mid)?;
        Ok(self.accumulate(a, fa, mid, fm, depth + 1)?
            + self.accumulate(mid, fm, b, fb, depth + 1)?)
    }
}

/// Imaginary parts of the indentation centres: imaginary-axis poles of
/// `P1(s)` and of `P2(-s)`.
fn indentation_centers(p1: &StateSpacePlant, p2: &StateSpacePlant) -> Result<Vec<f64>> {
    let mut centers: Vec<f64> = p1
        .poles()?
        .into_iter()
        .filter(|&p| on_imaginary_axis(p))
        .map(|p| p.im)
        .chain(
            p2.poles()?
                .into_iter()
                .filter(|&p| on_imaginary_axis(p))
                .map(|p| -p.im),
        )
        .collect();
    centers.sort_by(f64::total_cmp);
    centers.dedup_by(|a, b| (*a - *b).abs() <= 1e-9 * a.abs().max(1.0));
    Ok(centers)
}

fn build_contour(grid: &FrequencyGrid, centers: &[f64]) -> Vec<Knot> {
    let radius = |w0: f64| INDENT_RADIUS * w0.abs().max(1.0);
    let mut axis: Vec<f64> = std::iter::once(0.0)
        .chain(grid.points().iter().flat_map(|&w| [w, -w]))
        .collect();
    for &w0 in centers {
        let rho = radius(w0);
        for k in 1..=INDENT_DENSIFY {
            let off = rho * 2f64.powi(k);
            axis.push(w0 - off);
            axis.push(w0 + off);
        }
    }
    axis.retain(|&w| {
        centers
            .iter()
            .all(|&w0| (w - w0).abs() > radius(w0) * (1.0 + 1e-9))
    });
    axis.sort_by(f64::total_cmp);
    axis.dedup();

    let mut knots = vec![Knot::Axis(f64::NEG_INFINITY)];
    let mut ci = 0;
    for w in axis {
        while ci < centers.len() && centers[ci] < w {
            push_arc(&mut knots, centers[ci], radius(centers[ci]));
            ci += 1;
        }
        knots.push(Knot::Axis(w));
    }
    while ci < centers.len() {
        push_arc(&mut knots, centers[ci], radius(centers[ci]));
        ci += 1;
    }
    knots.push(Knot::Axis(f64::INFINITY));
    knots
}

fn push_arc(knots: &mut Vec<Knot>, center: f64, radius: f64) {
    for i in 0..ARC_POINTS {
        let phi = -FRAC_PI_2 + PI * i as f64 / (ARC_POINTS - 1) as f64;
        knots.push(Knot::Arc {
            center,
            radius,
            phi,
        });
    }
}

/// Winding number of `det(I + P2~ P1)` around the indented right-half-plane
/// contour.
pub fn winding_number_det(
    p1: &StateSpacePlant,
    p2: &StateSpacePlant,
    grid: &FrequencyGrid,
) -> Result<i64> {
    check_dims(p1, p2)?;
    let centers = indentation_centers(p1, p2)?;
    let knots = build_contour(grid, &centers);
    let contour = DetContour::new(p1, p2);
    let values = knots
        .iter()
        .map(|k| contour.eval(k))
        .collect::<Result<Vec<_>>>()?;
    let mut phase = 0.0;
    for i in 0..knots.len() - 1 {
        phase += contour.accumulate(knots[i], values[i], knots[i + 1], values[i + 1], 0)?;
    }
    Ok((-phase / (2.0 * PI)).round() as i64)
}

fn check_dims(p1: &StateSpacePlant, p2: &StateSpacePlant) -> Result<()> {
    if p1.inputs() != p2.inputs() || p1.outputs() != p2.outputs() {
        return Err(Error::DimensionMismatch(format!(
            "plants are {}x{} and {}x{}",
            p1.outputs(),
            p1.inputs(),
            p2.outputs(),
            p2.inputs()
        )));
    }
    Ok(())
}

/// Pointwise chordal distance `sigma_max(Psi(P1, P2))`.
pub fn chordal_distance(g1: &CMat, g2: &CMat) -> f64 {
    let (r, m) = g1.shape();
    let left = linalg::hermitian_inv_sqrt(&(CMat::identity(r, r) + g2 * g2.adjoint()));
    let right = linalg::hermitian_inv_sqrt(&(CMat::identity(m, m) + g1.adjoint() * g1));
    linalg::sigma_max(&(left * (g1 - g2) * right)).clamp(0.0, 1.0)
}

pub fn nu_gap(
    p1: &StateSpacePlant,
    p2: &StateSpacePlant,
    grid: &FrequencyGrid,
) -> Result<VgapResult> {
    nu_gap_with(p1, p2, grid, PoleCounting::Eigenvalues)
}

pub fn nu_gap_with(
    p1: &StateSpacePlant,
    p2: &StateSpacePlant,
    grid: &FrequencyGrid,
    counting: PoleCounting,
) -> Result<VgapResult> {
    check_dims(p1, p2)?;
    let failed = |wno| VgapResult {
        value: 1.0,
        condition_met: false,
        wno,
        peak_frequency: None,
    };
    let wno = match winding_number_det(p1, p2, grid) {
        Ok(w) => w,
        Err(Error::DimensionMismatch(msg)) => return Err(Error::DimensionMismatch(msg)),
        Err(_) => return Ok(failed(0)),
    };
    let (eta1, _) = pole_counts_with(p1, counting)?;
    let (eta2, eta02) = pole_counts_with(p2, counting)?;
    if wno + eta1 as i64 - eta2 as i64 - eta02 as i64 != 0 {
        return Ok(failed(wno));
    }

    let (mut value, mut at) = grid.peak(|w| {
        let g1 = p1.freq_response(w).ok()?;
        let g2 = p2.freq_response(w).ok()?;
        Some(chordal_distance(&g1, &g2))
    });
    let at_inf = chordal_distance(&linalg::to_complex(&p1.d), &linalg::to_complex(&p2.d));
    if at_inf > value {
        value = at_inf;
        at = f64::INFINITY;
    }
    if let (Ok(g1), Ok(g2)) = (p1.freq_response(0.0), p2.freq_response(0.0)) {
        let v0 = chordal_distance(&g1, &g2);
        if v0 > value {
            value = v0;
            at = 0.0;
        }
    }
    Ok(VgapResult {
        value: value.clamp(0.0, 1.0),
        condition_met: true,
        wno,
        peak_frequency: Some(at),
    })
}

/// Symmetric matrix of pairwise gaps (upper triangle computed, mirrored).
pub fn gap_matrix(set: &PlantSet, grid: &FrequencyGrid) -> Result<DMatrix<f64>> {
    gap_matrix_with(set, grid, PoleCounting::Eigenvalues)
}

pub fn gap_matrix_with(
    set: &PlantSet,
    grid: &FrequencyGrid,
    counting: PoleCounting,
) -> Result<DMatrix<f64>> {
    let n = set.len();
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let values = pairs
        .par_iter()
        .map(|&(i, j)| {
            nu_gap_with(&set.plants()[i], &set.plants()[j], grid, counting).map(|r| r.value)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut g = DMatrix::zeros(n, n);
    for (&(i, j), v) in pairs.iter().zip(values) {
        g[(i, j)] = v;
        g[(j, i)] = v;
    }
    Ok(g)
}

pub fn max_vgap(index: usize, set: &PlantSet, grid: &FrequencyGrid) -> Result<f64> {
    let target = set
        .get(index)
        .ok_or_else(|| Error::InvalidConfig(format!("plant index {index} out of range")))?;
    let gaps = set
        .plants()
        .par_iter()
        .enumerate()
        .filter(|(f, _)| *f != index)
        .map(|(_, p)| nu_gap(target, p, grid).map(|r| r.value))
        .collect::<Result<Vec<_>>>()?;
    Ok(gaps.into_iter().fold(0.0, f64::max))
}

/// Member with the smallest maximum gap; ties go to the lowest index.
pub fn central_plant(set: &PlantSet, grid: &FrequencyGrid) -> Result<CentralPlantResult> {
    central_plant_with(set, grid, PoleCounting::Eigenvalues)
}

pub fn central_plant_with(
    set: &PlantSet,
    grid: &FrequencyGrid,
    counting: PoleCounting,
) -> Result<CentralPlantResult> {
    let gap = gap_matrix_with(set, grid, counting)?;
    let max_gaps: Vec<f64> = (0..set.len())
        .map(|i| gap.row(i).iter().copied().fold(0.0, f64::max))
        .collect();
    let mut index = 0;
    for (i, &v) in max_gaps.iter().enumerate() {
        if v < max_gaps[index] {
            index = i;
        }
    }
    Ok(CentralPlantResult {
        index,
        epsilon: max_gaps[index],
        max_gaps,
        gap_matrix: gap,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use approx::assert_relative_eq;

    fn gain(k: f64) -> StateSpacePlant {
        StateSpacePlant::static_gain(Mat::from_element(1, 1, k))
    }

    fn first_order(pole: f64, k: f64) -> StateSpacePlant {
        StateSpacePlant::strictly_proper(
            Mat::from_element(1, 1, pole),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, k),
        )
        .unwrap()
    }

    fn closed_form(k1: f64, k2: f64) -> f64 {
        (k1 - k2).abs() / ((1.0 + k1 * k1) * (1.0 + k2 * k2)).sqrt()
    }

    #[test]
    fn pole_count_examples() {
        assert_eq!(pole_counts(&first_order(0.0, 1.0)).unwrap(), (0, 1));
        assert_eq!(pole_counts(&first_order(-1.0, 1.0)).unwrap(), (0, 0));
        let p = StateSpacePlant::strictly_proper(
            Mat::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 2.0]),
            Mat::from_row_slice(2, 1, &[1.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, -1.0]),
        )
        .unwrap();
        assert_eq!(pole_counts(&p).unwrap(), (2, 0));
    }

    #[test]
    fn minimal_counting_skips_hidden_modes() {
        // unstable mode at 3 is unobservable
        let p = StateSpacePlant::strictly_proper(
            Mat::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, 3.0]),
            Mat::from_row_slice(2, 1, &[1.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        assert_eq!(pole_counts(&p).unwrap(), (1, 0));
        assert_eq!(pole_counts_with(&p, PoleCounting::Minimal).unwrap(), (0, 0));
    }

    #[test]
    fn static_gain_gaps() {
        let g = FrequencyGrid::default();
        let r = nu_gap(&gain(1.0), &gain(0.0), &g).unwrap();
        assert!(r.condition_met);
        assert_relative_eq!(r.value, 0.5f64.sqrt(), epsilon = 1e-12);
        let r = nu_gap(&gain(0.5), &gain(2.0), &g).unwrap();
        assert_relative_eq!(r.value, 0.6, epsilon = 1e-12);
        let r = nu_gap(&gain(1.0), &gain(-1.0), &g).unwrap();
        assert!(!r.condition_met);
        assert_eq!(r.value, 1.0);
        assert_eq!(r.peak_frequency, None);
    }

    #[test]
    fn self_gap_is_zero() {
        let g = FrequencyGrid::default();
        for p in [
            first_order(-1.0, 1.0),
            first_order(2.0, 3.0),
            first_order(0.0, 1.0),
        ] {
            let r = nu_gap(&p, &p, &g).unwrap();
            assert!(r.condition_met, "{p:?}");
            assert!(r.value < 1e-12);
        }
    }

    #[test]
    fn winding_examples() {
        let g = FrequencyGrid::default();
        let p = first_order(-1.0, 1.0);
        assert_eq!(winding_number_det(&p, &p, &g).unwrap(), 0);
        assert_eq!(winding_number_det(&gain(1.0), &gain(1.0), &g).unwrap(), 0);
        // the integrator pair needs wno = eta0 = 1
        let i = first_order(0.0, 1.0);
        assert_eq!(winding_number_det(&i, &i, &g).unwrap(), 1);
        assert_eq!(winding_number_det(&p, &i, &g).unwrap(), 1);
        assert_eq!(winding_number_det(&i, &p, &g).unwrap(), 0);
    }

    #[test]
    fn vanishing_det_is_an_error() {
        let g = FrequencyGrid::default();
        let err = winding_number_det(&gain(1.0), &gain(-1.0), &g).unwrap_err();
        assert!(matches!(err, Error::DetVanishesOnContour { .. }));
    }

    #[test]
    fn central_plant_of_gain_trio() {
        let set = PlantSet::new(vec![gain(0.5), gain(1.0), gain(2.0)]).unwrap();
        let g = FrequencyGrid::default();
        let cp = central_plant(&set, &g).unwrap();
        assert_eq!(cp.index, 1);
        let expected = closed_form(1.0, 0.5).max(closed_form(1.0, 2.0));
        assert_relative_eq!(cp.epsilon, expected, epsilon = 1e-12);
        assert_relative_eq!(max_vgap(0, &set, &g).unwrap(), 0.6, epsilon = 1e-12);
        for i in 0..3 {
            assert_eq!(cp.gap_matrix[(i, i)], 0.0);
        }
        let single = PlantSet::new(vec![gain(3.0)]).unwrap();
        assert_eq!(max_vgap(0, &single, &g).unwrap(), 0.0);
        assert_eq!(central_plant(&single, &g).unwrap().epsilon, 0.0);
    }

    #[test]
    fn dimension_mismatch() {
        let g = FrequencyGrid::default();
        let wide = StateSpacePlant::static_gain(Mat::zeros(1, 2));
        assert!(matches!(
            nu_gap(&gain(1.0), &wide, &g),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
