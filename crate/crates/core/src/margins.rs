//! Closed-loop norms under the positive-feedback convention `u = K y`:
//! generalized stability margin, sensitivity and uncertainty-tolerance
//! curves, and balanced disk margins.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat};
use crate::lti::{eigenvalues, on_imaginary_axis, FrequencyGrid, StateSpacePlant};

/// Plant, static gain and the realization of the four-block operator
/// `[P; I] (I - K P)^{-1} [-I, K]` (inputs: `[v1; v2]`, outputs: `[y; u]`).
#[derive(Debug, Clone)]
pub struct ClosedLoop {
    pub plant: StateSpacePlant,
    pub gain: Mat,
    pub four_block: StateSpacePlant,
    pub stable: bool,
}

impl ClosedLoop {
    pub fn new(plant: &StateSpacePlant, gain: &Mat) -> Result<Self> {
        let (n, m, r) = (plant.states(), plant.inputs(), plant.outputs());
        if gain.shape() != (m, r) {
            return Err(Error::DimensionMismatch(format!(
                "K is {}x{}, plant needs {m}x{r}",
                gain.nrows(),
                gain.ncols()
            )));
        }
        if !linalg::all_finite(gain) {
            return Err(Error::NonFinite("gain".into()));
        }
        let e = linalg::solve(
            &(Mat::identity(m, m) - gain * &plant.d),
            &Mat::identity(m, m),
            1e-12,
        )
        .ok_or(Error::IllPosedLoop)?;
        let ek = &e * gain;
        let acl = &plant.a + &plant.b * &ek * &plant.c;

        // u = E (-v1 + K v2 + K C x)
        let mut neg_i_k = Mat::zeros(m, m + r);
        neg_i_k
            .view_mut((0, 0), (m, m))
            .copy_from(&(-Mat::identity(m, m)));
        neg_i_k.view_mut((0, m), (m, r)).copy_from(gain);
        let u_in = &e * &neg_i_k;
        let u_state = &ek * &plant.c;

        let bcl = &plant.b * &u_in;
        let mut ccl = Mat::zeros(r + m, n);
        ccl.view_mut((0, 0), (r, n))
            .copy_from(&(&plant.c + &plant.d * &u_state));
        ccl.view_mut((r, 0), (m, n)).copy_from(&u_state);
        let mut dcl = Mat::zeros(r + m, m + r);
        dcl.view_mut((0, 0), (r, m + r))
            .copy_from(&(&plant.d * &u_in));
        dcl.view_mut((r, 0), (m, m + r)).copy_from(&u_in);

        let four_block = StateSpacePlant::new(acl, bcl, ccl, dcl)?;
        let stable = eigenvalues(&four_block.a)?.iter().all(|z| z.re < 0.0);
        Ok(Self {
            plant: plant.clone(),
            gain: gain.clone(),
            four_block,
            stable,
        })
    }

    /// Closed-loop state matrix `A + B (I - K D)^{-1} K C`.
    pub fn state_matrix(&self) -> &Mat {
        &self.four_block.a
    }

    fn require_stable(&self) -> Result<()> {
        if self.stable {
            Ok(())
        } else {
            Err(Error::UnstableLoop)
        }
    }

    /// `S_o = (I - P K)^{-1}` at `j omega`.
    pub fn output_sensitivity(&self, omega: f64) -> Result<CMat> {
        let p = self.plant.freq_response(omega)?;
        let r = p.nrows();
        let l = &p * linalg::to_complex(&self.gain);
        inverse(&(CMat::identity(r, r) - l), omega)
    }

    /// `S_I = (I - K P)^{-1}` at `j omega`.
    pub fn input_sensitivity(&self, omega: f64) -> Result<CMat> {
        let p = self.plant.freq_response(omega)?;
        let m = p.ncols();
        let l = linalg::to_complex(&self.gain) * &p;
        inverse(&(CMat::identity(m, m) - l), omega)
    }
}

fn inverse(m: &CMat, omega: f64) -> Result<CMat> {
    let n = m.nrows();
    linalg::csolve(m, &CMat::identity(n, n), 1e-13).ok_or(Error::SingularAtFrequency {
        s: num_complex::Complex64::new(0.0, omega),
    })
}

/// `(norm, omega)` of `sup sigma_max(sys(j omega))`, including `omega = 0`
/// and the `omega -> inf` limit. Imaginary-axis poles give `+inf` at the
/// offending frequency.
pub fn linf_norm(sys: &StateSpacePlant, grid: &FrequencyGrid) -> Result<(f64, f64)> {
    if let Some(p) = eigenvalues(&sys.a)?
        .into_iter()
        .find(|&p| on_imaginary_axis(p))
    {
        return Ok((f64::INFINITY, p.im.abs()));
    }
    let (mut best, mut at) =
        grid.peak(|w| sys.freq_response(w).ok().map(|g| linalg::sigma_max(&g)));
    let dc = linalg::sigma_max(&sys.freq_response(0.0)?);
    if dc >= best {
        best = dc;
        at = 0.0;
    }
    let hf = linalg::sigma_max(&linalg::to_complex(&sys.d));
    if hf > best {
        best = hf;
        at = f64::INFINITY;
    }
    Ok((best, at))
}

/// Generalized stability margin: `0` for an unstable loop, otherwise the
/// inverse peak gain of the four-block operator.
pub fn gsm(plant: &StateSpacePlant, gain: &Mat, grid: &FrequencyGrid) -> Result<f64> {
    let cl = ClosedLoop::new(plant, gain)?;
    gsm_of(&cl, grid)
}

pub fn gsm_of(cl: &ClosedLoop, grid: &FrequencyGrid) -> Result<f64> {
    if !cl.stable {
        return Ok(0.0);
    }
    let (norm, _) = linf_norm(&cl.four_block, grid)?;
    Ok((1.0 / norm).min(1.0))
}

/// Largest and smallest singular value per grid frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SigmaCurve {
    pub omega: Vec<f64>,
    pub max: Vec<f64>,
    pub min: Vec<f64>,
}

impl SigmaCurve {
    fn sample<F>(grid: &FrequencyGrid, f: F) -> Result<Self>
    where
        F: Fn(f64) -> Result<CMat>,
    {
        let mut c = SigmaCurve {
            omega: Vec::with_capacity(grid.len()),
            max: Vec::with_capacity(grid.len()),
            min: Vec::with_capacity(grid.len()),
        };
        for &w in grid.points() {
            let m = f(w)?;
            let sv = linalg::singular_values(&m);
            c.omega.push(w);
            c.max.push(sv.iter().copied().fold(0.0, f64::max));
            c.min.push(sv.iter().copied().fold(f64::INFINITY, f64::min));
        }
        Ok(c)
    }

    /// Smallest value of `max` with its frequency.
    pub fn peak(&self) -> (f64, f64) {
        self.max
            .iter()
            .zip(&self.omega)
            .fold((f64::NEG_INFINITY, f64::NAN), |b, (&v, &w)| {
                if v > b.0 {
                    (v, w)
                } else {
                    b
                }
            })
    }
}

/// Singular values of the open-loop plant.
pub fn plant_sigma(plant: &StateSpacePlant, grid: &FrequencyGrid) -> Result<SigmaCurve> {
    SigmaCurve::sample(grid, |w| plant.freq_response(w))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityCurves {
    pub output: SigmaCurve,
    pub input: SigmaCurve,
    /// `K S_o`
    pub control: SigmaCurve,
}

pub fn sensitivity_curves(
    plant: &StateSpacePlant,
    gain: &Mat,
    grid: &FrequencyGrid,
) -> Result<SensitivityCurves> {
    let cl = ClosedLoop::new(plant, gain)?;
    cl.require_stable()?;
    let k = linalg::to_complex(gain);
    Ok(SensitivityCurves {
        output: SigmaCurve::sample(grid, |w| cl.output_sensitivity(w))?,
        input: SigmaCurve::sample(grid, |w| cl.input_sensitivity(w))?,
        control: SigmaCurve::sample(grid, |w| Ok(&k * cl.output_sensitivity(w)?))?,
    })
}

/// Tolerated multiplicative uncertainty per frequency.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyBounds {
    pub omega: Vec<f64>,
    /// `1 / sigma_max(P K (I - P K)^{-1})`
    pub output_multiplicative: Vec<f64>,
    /// `1 / sigma_max((I - K P)^{-1})`
    pub inverse_input_multiplicative: Vec<f64>,
}

impl UncertaintyBounds {
    /// `(value, omega)` minima of the two curves.
    pub fn minima(&self) -> [(f64, f64); 2] {
        let min_of = |v: &[f64]| {
            v.iter()
                .zip(&self.omega)
                .fold(
                    (f64::INFINITY, f64::NAN),
                    |b, (&x, &w)| if x < b.0 { (x, w) } else { b },
                )
        };
        [
            min_of(&self.output_multiplicative),
            min_of(&self.inverse_input_multiplicative),
        ]
    }
}

pub fn uncertainty_bounds(
    plant: &StateSpacePlant,
    gain: &Mat,
    grid: &FrequencyGrid,
) -> Result<UncertaintyBounds> {
    let cl = ClosedLoop::new(plant, gain)?;
    cl.require_stable()?;
    let k = linalg::to_complex(gain);
    let mut out = UncertaintyBounds {
        omega: Vec::new(),
        output_multiplicative: Vec::new(),
        inverse_input_multiplicative: Vec::new(),
    };
    for &w in grid.points() {
        let p = plant.freq_response(w)?;
        let so = cl.output_sensitivity(w)?;
        let t = &p * &k * &so;
        out.omega.push(w);
        out.output_multiplicative.push(1.0 / linalg::sigma_max(&t));
        out.inverse_input_multiplicative
            .push(1.0 / linalg::sigma_max(&cl.input_sensitivity(w)?));
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LoopBreak {
    Input,
    Output,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    pub gsm: f64,
    pub disk_alpha: f64,
    /// Symmetric gain margin `+-mdgm_db`; infinite when `disk_alpha >= 2`.
    pub mdgm_db: f64,
    pub mdpm_deg: f64,
    /// Loop break point that produced the reported (smaller) disk margin.
    pub worst_break: LoopBreak,
    pub worst_omega: f64,
    pub gsm_omega: f64,
    /// Set when `K = 0`: the disk margin then measures no feedback at all.
    pub degenerate: bool,
}

pub fn disk_gain_margin_db(alpha: f64) -> f64 {
    if alpha >= 2.0 {
        f64::INFINITY
    } else {
        20.0 * ((2.0 + alpha) / (2.0 - alpha)).log10()
    }
}

pub fn disk_phase_margin_deg(alpha: f64) -> f64 {
    (2.0 * (alpha / 2.0).atan()).to_degrees()
}

/// Balanced disk margin `alpha = 1 / ||S - I/2||` with the loop broken at
/// the plant input and at the plant output; the smaller one is reported.
pub fn disk_margin(
    plant: &StateSpacePlant,
    gain: &Mat,
    grid: &FrequencyGrid,
) -> Result<MarginReport> {
    let cl = ClosedLoop::new(plant, gain)?;
    cl.require_stable()?;
    let peak_of = |sens: &dyn Fn(f64) -> Result<CMat>| -> (f64, f64) {
        let f = |w: f64| {
            sens(w).ok().map(|s| {
                let k = s.nrows();
                linalg::sigma_max(&(s - CMat::identity(k, k).scale(0.5)))
            })
        };
        let (mut best, mut at) = grid.peak(f);
        if let Some(v) = f(0.0) {
            if v >= best {
                best = v;
                at = 0.0;
            }
        }
        (best, at)
    };
    let (pin, win) = peak_of(&|w| cl.input_sensitivity(w));
    let (pout, wout) = peak_of(&|w| cl.output_sensitivity(w));
    // the high-frequency limit: S -> (I - K D)^{-1}
    let m = plant.inputs();
    let r = plant.outputs();
    let s_in_inf = linalg::solve(
        &(Mat::identity(m, m) - gain * &plant.d),
        &Mat::identity(m, m),
        1e-12,
    )
    .ok_or(Error::IllPosedLoop)?;
    let s_out_inf = linalg::solve(
        &(Mat::identity(r, r) - &plant.d * gain),
        &Mat::identity(r, r),
        1e-12,
    )
    .ok_or(Error::IllPosedLoop)?;
    let half = |s: Mat| {
        let k = s.nrows();
        linalg::real_singular_values(&(s - Mat::identity(k, k) * 0.5))
            .into_iter()
            .fold(0.0, f64::max)
    };
    let (pin, win) = max_with(pin, win, half(s_in_inf));
    let (pout, wout) = max_with(pout, wout, half(s_out_inf));

    let (peak, worst_break, worst_omega) = if pin >= pout {
        (pin, LoopBreak::Input, win)
    } else {
        (pout, LoopBreak::Output, wout)
    };
    let alpha = 1.0 / peak;
    let (norm, gsm_omega) = linf_norm(&cl.four_block, grid)?;
    Ok(MarginReport {
        gsm: (1.0 / norm).min(1.0),
        disk_alpha: alpha,
        mdgm_db: disk_gain_margin_db(alpha),
        mdpm_deg: disk_phase_margin_deg(alpha),
        worst_break,
        worst_omega,
        gsm_omega,
        degenerate: gain.iter().all(|&k| k == 0.0),
    })
}

fn max_with(v: f64, w: f64, at_inf: f64) -> (f64, f64) {
    if at_inf > v {
        (at_inf, f64::INFINITY)
    } else {
        (v, w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn siso(a: f64, b: f64, c: f64) -> StateSpacePlant {
        StateSpacePlant::strictly_proper(
            Mat::from_element(1, 1, a),
            Mat::from_element(1, 1, b),
            Mat::from_element(1, 1, c),
        )
        .unwrap()
    }

    fn k(v: f64) -> Mat {
        Mat::from_element(1, 1, v)
    }

    #[test]
    fn linf_examples() {
        let g = FrequencyGrid::default();
        let gain = StateSpacePlant::static_gain(Mat::from_row_slice(2, 2, &[3.0, 0.0, 0.0, 1.0]));
        assert_relative_eq!(linf_norm(&gain, &g).unwrap().0, 3.0, epsilon = 1e-12);
        let (v, w) = linf_norm(&siso(-1.0, 1.0, 1.0), &g).unwrap();
        assert_relative_eq!(v, 1.0, epsilon = 1e-12);
        assert_eq!(w, 0.0);
        let res = StateSpacePlant::strictly_proper(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -0.2]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[1.0, 0.0]),
        )
        .unwrap();
        let (v, w) = linf_norm(&res, &g).unwrap();
        let zeta: f64 = 0.1;
        assert_relative_eq!(
            v,
            1.0 / (2.0 * zeta * (1.0 - zeta * zeta).sqrt()),
            max_relative = 1e-6
        );
        assert!((w - 0.99).abs() < 0.01);
        assert_eq!(
            linf_norm(&siso(0.0, 1.0, 1.0), &g).unwrap().0,
            f64::INFINITY
        );
    }

    #[test]
    fn gsm_examples() {
        let g = FrequencyGrid::default();
        let zero = StateSpacePlant::static_gain(Mat::zeros(1, 1));
        assert_relative_eq!(gsm(&zero, &k(0.0), &g).unwrap(), 1.0, epsilon = 1e-12);
        assert_relative_eq!(
            gsm(&siso(0.0, 1.0, 1.0), &k(-1.0), &g).unwrap(),
            0.5f64.sqrt(),
            epsilon = 1e-9
        );
        assert_eq!(gsm(&siso(1.0, 1.0, 1.0), &k(0.0), &g).unwrap(), 0.0);
    }

    #[test]
    fn ill_posed_loop() {
        let p = StateSpacePlant::static_gain(Mat::from_element(1, 1, 1.0));
        assert!(matches!(
            ClosedLoop::new(&p, &k(1.0)),
            Err(Error::IllPosedLoop)
        ));
    }

    #[test]
    fn sensitivity_examples() {
        let g = FrequencyGrid::default();
        let p = siso(-1.0, 1.0, 1.0);
        let s = sensitivity_curves(&p, &k(0.0), &g).unwrap();
        assert!(s.output.max.iter().all(|&v| (v - 1.0).abs() < 1e-12));
        let cl = ClosedLoop::new(&p, &k(-1.0)).unwrap();
        assert_relative_eq!(
            cl.output_sensitivity(0.0).unwrap()[(0, 0)].re,
            0.5,
            epsilon = 1e-12
        );
        assert!(matches!(
            sensitivity_curves(&siso(1.0, 1.0, 1.0), &k(0.0), &g),
            Err(Error::UnstableLoop)
        ));
    }

    #[test]
    fn sensitivity_identity() {
        // S_o - T_o = I under u = K y
        let p = siso(-1.0, 1.0, 1.0);
        let cl = ClosedLoop::new(&p, &k(-3.0)).unwrap();
        for w in [0.0, 0.3, 7.0] {
            let so = cl.output_sensitivity(w).unwrap();
            let t = p.freq_response(w).unwrap() * linalg::to_complex(&k(-3.0)) * &so;
            assert!((so - t - CMat::identity(1, 1)).norm() < 1e-12);
        }
    }

    #[test]
    fn uncertainty_examples() {
        let g = FrequencyGrid::from_points(vec![0.0, 1.0]).unwrap();
        let p = siso(-1.0, 1.0, 1.0);
        let u = uncertainty_bounds(&p, &k(-1.0), &g).unwrap();
        assert_relative_eq!(u.output_multiplicative[0], 2.0, epsilon = 1e-12);
        let u = uncertainty_bounds(&p, &k(0.0), &g).unwrap();
        assert!(u.output_multiplicative.iter().all(|v| v.is_infinite()));
        assert!(u
            .inverse_input_multiplicative
            .iter()
            .all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn disk_margin_of_integrator_loop() {
        let g = FrequencyGrid::default();
        let r = disk_margin(&siso(0.0, 1.0, 1.0), &k(-1.0), &g).unwrap();
        assert_relative_eq!(r.disk_alpha, 2.0, epsilon = 1e-9);
        assert_relative_eq!(r.mdpm_deg, 90.0, epsilon = 1e-6);
        assert!(r.mdgm_db > 100.0 || r.mdgm_db.is_infinite());
        assert!(!r.degenerate);
        let r = disk_margin(&siso(-1.0, 1.0, 1.0), &k(0.0), &g).unwrap();
        assert!(r.degenerate);
        assert_relative_eq!(r.disk_alpha, 2.0, epsilon = 1e-12);
    }
}
