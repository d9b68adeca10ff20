//! Static output-feedback eigenstructure assignment.
//!
//! For each desired eigenvalue the admissible `(eigenvector, input
//! direction)` pairs span the null space of `[A - lambda I, B]`. Complex
//! eigenvalues use the real form over `[x; y; u; v]` with `v = x + j y`,
//! `w = u + j v`, so both pair members enter `R` and `W` as real columns and
//! `K = W (C R)^{-1}` is real.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::compensator::Interval;
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::{eigenvalues, EigenInfo};

/// Rank tolerance of the allowable-subspace SVD, relative to `sigma_max`.
pub const SUBSPACE_RANK_TOL: f64 = 1e-10;
/// Largest accepted `kappa(C R)`.
pub const KAPPA_LIMIT: f64 = 1e5;

/// Box on one eigenvector entry. `im` is ignored for real modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntryBound {
    pub state: usize,
    pub re: Interval,
    #[serde(default = "zero_interval")]
    pub im: Interval,
}

fn zero_interval() -> Interval {
    [0.0, 0.0]
}

/// Search ranges for one desired mode: a real eigenvalue when `omega` is
/// `None`, otherwise the conjugate pair `sigma +- j omega`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSpec {
    pub sigma: Interval,
    #[serde(default)]
    pub omega: Option<Interval>,
    #[serde(default)]
    pub entries: Vec<EntryBound>,
}

impl ModeSpec {
    pub fn is_complex(&self) -> bool {
        self.omega.is_some()
    }

    /// Output slots consumed: 2 for a conjugate pair.
    pub fn slots(&self) -> usize {
        if self.is_complex() {
            2
        } else {
            1
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigTarget {
    pub modes: Vec<ModeSpec>,
    pub zeta_min: f64,
    #[serde(default)]
    pub sigma_max: Option<f64>,
}

impl EigTarget {
    pub fn slots(&self) -> usize {
        self.modes.iter().map(ModeSpec::slots).sum()
    }

    pub fn validate(&self, states: usize, outputs: usize) -> Result<()> {
        if self.slots() != outputs {
            return Err(Error::InvalidConfig(format!(
                "{} eigenvalue slots for {outputs} measured outputs",
                self.slots()
            )));
        }
        if !(self.zeta_min > 0.0 && self.zeta_min < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "zeta_min = {}",
                self.zeta_min
            )));
        }
        let ok = |[lo, hi]: Interval| lo.is_finite() && hi.is_finite() && lo <= hi;
        for (i, m) in self.modes.iter().enumerate() {
            if !ok(m.sigma) || m.sigma[1] >= 0.0 {
                return Err(Error::InvalidConfig(format!(
                    "mode {i}: real-part range {:?} must lie in the open left half-plane",
                    m.sigma
                )));
            }
            if let Some(w) = m.omega {
                if !ok(w) || w[0] <= 0.0 {
                    return Err(Error::InvalidConfig(format!(
                        "mode {i}: frequency range {w:?}"
                    )));
                }
            }
            for e in &m.entries {
                if e.state >= states || !ok(e.re) || !ok(e.im) {
                    return Err(Error::InvalidConfig(format!(
                        "mode {i}: bad entry bound on state {}",
                        e.state
                    )));
                }
            }
        }
        Ok(())
    }
}

/// Null-space basis of `[A - lambda I, B]`; rows `[x; u]` for real
/// `lambda`, `[x; y; u; v]` for complex `lambda`.
#[derive(Debug, Clone, PartialEq)]
pub struct SubspaceBasis {
    pub eigenvalue: Complex64,
    pub basis: Mat,
    pub states: usize,
    pub inputs: usize,
}

impl SubspaceBasis {
    pub fn is_complex(&self) -> bool {
        self.eigenvalue.im != 0.0
    }

    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }

    /// Largest residual norm of the basis columns in the defining equation.
    pub fn residual(&self, a: &Mat, b: &Mat) -> f64 {
        let m = real_form(a, b, self.eigenvalue);
        (&m * &self.basis)
            .column_iter()
            .map(|c| c.norm())
            .fold(0.0, f64::max)
    }
}

fn real_form(a: &Mat, b: &Mat, lambda: Complex64) -> Mat {
    let (n, m) = (a.nrows(), b.ncols());
    let mut shifted = a.clone();
    for i in 0..n {
        shifted[(i, i)] -= lambda.re;
    }
    if lambda.im == 0.0 {
        let mut out = Mat::zeros(n, n + m);
        out.view_mut((0, 0), (n, n)).copy_from(&shifted);
        out.view_mut((0, n), (n, m)).copy_from(b);
        return out;
    }
    let w = lambda.im;
    let mut out = Mat::zeros(2 * n, 2 * n + 2 * m);
    let wi = Mat::identity(n, n) * w;
    out.view_mut((0, 0), (n, n)).copy_from(&shifted);
    out.view_mut((0, n), (n, n)).copy_from(&wi);
    out.view_mut((0, 2 * n), (n, m)).copy_from(b);
    out.view_mut((n, 0), (n, n)).copy_from(&(-wi));
    out.view_mut((n, n), (n, n)).copy_from(&shifted);
    out.view_mut((n, 2 * n + m), (n, m)).copy_from(b);
    out
}

pub fn allowable_subspace(a: &Mat, b: &Mat, lambda: Complex64) -> Result<SubspaceBasis> {
    let n = a.nrows();
    if a.ncols() != n || b.nrows() != n {
        return Err(Error::DimensionMismatch(format!(
            "A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    let basis = linalg::null_space(&real_form(a, b, lambda), SUBSPACE_RANK_TOL);
    if basis.ncols() == 0 {
        return Err(Error::EmptySubspace { eigenvalue: lambda });
    }
    Ok(SubspaceBasis {
        eigenvalue: lambda,
        basis,
        states: n,
        inputs: b.ncols(),
    })
}

/// Requested value for one eigenvector entry together with its box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntryConstraint {
    pub bound: EntryBound,
    pub value: Complex64,
}

/// Member of an allowable subspace matching the requested entries in the
/// least-squares sense; the minimum-norm correction is taken along the first
/// basis direction. Without constraints the first basis vector is returned
/// at unit norm with its first nonzero entry real and positive.
pub fn select_vector(
    sub: &SubspaceBasis,
    constraints: &[EntryConstraint],
    mode: usize,
) -> Result<Mat> {
    let n = sub.states;
    let complex = sub.is_complex();
    let k = sub.dim();
    let mut rows = Vec::new();
    let mut target = Vec::new();
    for c in constraints {
        rows.push(c.bound.state);
        target.push(c.value.re);
        if complex {
            rows.push(n + c.bound.state);
            target.push(c.value.im);
        }
    }
    let mut e1 = nalgebra::DVector::zeros(k);
    e1[0] = 1.0;
    let coeff = if rows.is_empty() {
        e1
    } else {
        let en = Mat::from_fn(rows.len(), k, |i, j| sub.basis[(rows[i], j)]);
        let pinv = en
            .clone()
            .pseudo_inverse(
                1e-12
                    * linalg::real_singular_values(&en)
                        .into_iter()
                        .fold(0.0, f64::max),
            )
            .map_err(|e| Error::ComputationFailed(e.into()))?;
        let t = nalgebra::DVector::from_vec(target);
        let proj = Mat::identity(k, k) - &pinv * &en;
        &pinv * t + proj * e1
    };
    let mut v = &sub.basis * coeff;

    if constraints.is_empty() {
        normalize(&mut v, n, complex);
    }
    for c in constraints {
        let achieved = if complex {
            Complex64::new(v[c.bound.state], v[n + c.bound.state])
        } else {
            Complex64::new(v[c.bound.state], 0.0)
        };
        let parts: &[(f64, Interval)] = if complex {
            &[(achieved.re, c.bound.re), (achieved.im, c.bound.im)]
        } else {
            &[(achieved.re, c.bound.re)]
        };
        for &(x, [lo, hi]) in parts {
            let slack = ((hi - lo) * 1e-2).max(1e-9 * lo.abs().max(hi.abs()).max(1.0));
            if x < lo - slack || x > hi + slack {
                return Err(Error::BoundViolation {
                    mode,
                    state_index: c.bound.state,
                    achieved: x,
                    lo,
                    hi,
                });
            }
        }
    }
    Ok(Mat::from_column_slice(v.len(), 1, v.as_slice()))
}

fn normalize(v: &mut nalgebra::DVector<f64>, n: usize, complex: bool) {
    let norm = v.norm();
    if norm == 0.0 {
        return;
    }
    *v /= norm;
    let tol = 1e-12;
    if !complex {
        if let Some(&first) = v.iter().find(|x| x.abs() > tol) {
            if first < 0.0 {
                *v *= -1.0;
            }
        }
        return;
    }
    // rotate the complex vector so its first nonzero entry is real positive
    let half = v.len() / 2;
    let m = half - n;
    let get = |v: &nalgebra::DVector<f64>, i: usize| -> Complex64 {
        if i < n {
            Complex64::new(v[i], v[n + i])
        } else {
            Complex64::new(v[2 * n + (i - n)], v[2 * n + m + (i - n)])
        }
    };
    let Some(first) = (0..half).map(|i| get(v, i)).find(|z| z.norm() > tol) else {
        return;
    };
    let rot = first.conj() / first.norm();
    let rotated: Vec<Complex64> = (0..half).map(|i| get(v, i) * rot).collect();
    for (i, z) in rotated.into_iter().enumerate() {
        if i < n {
            v[i] = z.re;
            v[n + i] = z.im;
        } else {
            v[2 * n + (i - n)] = z.re;
            v[2 * n + m + (i - n)] = z.im;
        }
    }
}

/// One desired eigenvalue (upper member for pairs) with its entry requests.
#[derive(Debug, Clone, PartialEq)]
pub struct AssignedMode {
    pub value: Complex64,
    pub constraints: Vec<EntryConstraint>,
}

/// Stack the selected vectors into `(W, R)`; a complex mode contributes its
/// real and imaginary columns.
pub fn select_vectors(subspaces: &[SubspaceBasis], modes: &[AssignedMode]) -> Result<(Mat, Mat)> {
    if subspaces.len() != modes.len() || subspaces.is_empty() {
        return Err(Error::DimensionMismatch(format!(
            "{} subspaces for {} modes",
            subspaces.len(),
            modes.len()
        )));
    }
    let n = subspaces[0].states;
    let m = subspaces[0].inputs;
    let cols: usize = subspaces
        .iter()
        .map(|s| if s.is_complex() { 2 } else { 1 })
        .sum();
    let mut r = Mat::zeros(n, cols);
    let mut w = Mat::zeros(m, cols);
    let mut j = 0;
    for (i, (sub, mode)) in subspaces.iter().zip(modes).enumerate() {
        let v = select_vector(sub, &mode.constraints, i)?;
        if sub.is_complex() {
            for part in 0..2 {
                for s in 0..n {
                    r[(s, j + part)] = v[(part * n + s, 0)];
                }
                for s in 0..m {
                    w[(s, j + part)] = v[(2 * n + part * m + s, 0)];
                }
            }
            j += 2;
        } else {
            for s in 0..n {
                r[(s, j)] = v[(s, 0)];
            }
            for s in 0..m {
                w[(s, j)] = v[(n + s, 0)];
            }
            j += 1;
        }
    }
    Ok((w, r))
}

/// `K = W (C R)^{-1}`, refused when `kappa(C R) >= KAPPA_LIMIT`.
pub fn compute_gain(w: &Mat, r: &Mat, c: &Mat) -> Result<Mat> {
    compute_gain_with_kappa(w, r, c).map(|(k, _)| k)
}

pub fn compute_gain_with_kappa(w: &Mat, r: &Mat, c: &Mat) -> Result<(Mat, f64)> {
    let cr = c * r;
    if cr.nrows() != cr.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "C R is {}x{}, must be square",
            cr.nrows(),
            cr.ncols()
        )));
    }
    let kappa = linalg::condition_number(&cr);
    if !(kappa.is_finite() && kappa < KAPPA_LIMIT) {
        return Err(Error::IllConditioned { kappa });
    }
    let kt = linalg::solve(&cr.transpose(), &w.transpose(), 1e-15)
        .ok_or(Error::IllConditioned { kappa })?;
    Ok((kt.transpose(), kappa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCheck {
    pub pass: bool,
    pub offending: Vec<Complex64>,
}

/// Every eigenvalue must have `Re < 0`, damping `>= zeta_min` and, when set,
/// `Re <= sigma_max`.
pub fn check_region(spectrum: &[EigenInfo], zeta_min: f64, sigma_max: Option<f64>) -> RegionCheck {
    let offending: Vec<Complex64> = spectrum
        .iter()
        .filter(|e| {
            !(e.value.re < 0.0
                && e.damping >= zeta_min
                && sigma_max.is_none_or(|s| e.value.re <= s))
        })
        .map(|e| e.value)
        .collect();
    RegionCheck {
        pass: offending.is_empty(),
        offending,
    }
}

pub fn check_region_target(spectrum: &[EigenInfo], target: &EigTarget) -> RegionCheck {
    check_region(spectrum, target.zeta_min, target.sigma_max)
}

#[derive(Debug, Clone)]
pub struct Assignment {
    pub gain: Mat,
    pub r: Mat,
    pub w: Mat,
    pub kappa: f64,
}

/// Subspaces, vector selection and gain in one step.
pub fn assign(a: &Mat, b: &Mat, c: &Mat, modes: &[AssignedMode]) -> Result<Assignment> {
    let subspaces = modes
        .iter()
        .map(|md| allowable_subspace(a, b, md.value))
        .collect::<Result<Vec<_>>>()?;
    let (w, r) = select_vectors(&subspaces, modes)?;
    let (gain, kappa) = compute_gain_with_kappa(&w, &r, c)?;
    Ok(Assignment { gain, r, w, kappa })
}

/// Distance from each desired eigenvalue (and its conjugate) to the nearest
/// closed-loop eigenvalue of `A + B K C`.
pub fn assignment_error(a: &Mat, b: &Mat, c: &Mat, k: &Mat, desired: &[Complex64]) -> Result<f64> {
    let eig = eigenvalues(&(a + b * k * c))?;
    let mut worst: f64 = 0.0;
    for &d in desired {
        for z in [d, d.conj()] {
            let nearest = eig
                .iter()
                .map(|e| (e - z).norm())
                .fold(f64::INFINITY, f64::min);
            worst = worst.max(nearest);
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lti::spectrum_of;
    use approx::assert_relative_eq;

    fn double_integrator() -> (Mat, Mat) {
        (
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
        )
    }

    fn real_mode(v: f64) -> AssignedMode {
        AssignedMode {
            value: Complex64::new(v, 0.0),
            constraints: Vec::new(),
        }
    }

    #[test]
    fn double_integrator_subspaces() {
        let (a, b) = double_integrator();
        for (lam, expected) in [(-1.0, [1.0, -1.0, 1.0]), (-2.0, [1.0, -2.0, 4.0])] {
            let s = allowable_subspace(&a, &b, Complex64::new(lam, 0.0)).unwrap();
            assert_eq!(s.dim(), 1);
            let v = s.basis.column(0);
            for i in 0..3 {
                assert_relative_eq!(v[i] / v[0], expected[i], epsilon = 1e-12);
            }
            assert!(s.residual(&a, &b) < 1e-12);
        }
    }

    #[test]
    fn default_normalization() {
        let (a, b) = double_integrator();
        let s = allowable_subspace(&a, &b, Complex64::new(-1.0, 0.0)).unwrap();
        let v = select_vector(&s, &[], 0).unwrap();
        let scale = 3f64.sqrt();
        assert_relative_eq!(v[(0, 0)], 1.0 / scale, epsilon = 1e-12);
        assert_relative_eq!(v[(1, 0)], -1.0 / scale, epsilon = 1e-12);
        assert_relative_eq!(v[(2, 0)], 1.0 / scale, epsilon = 1e-12);
    }

    #[test]
    fn double_integrator_gain() {
        let (a, b) = double_integrator();
        let c = Mat::identity(2, 2);
        let asg = assign(&a, &b, &c, &[real_mode(-1.0), real_mode(-2.0)]).unwrap();
        assert_relative_eq!(asg.gain[(0, 0)], -2.0, epsilon = 1e-9);
        assert_relative_eq!(asg.gain[(0, 1)], -3.0, epsilon = 1e-9);
        let err = assignment_error(
            &a,
            &b,
            &c,
            &asg.gain,
            &[Complex64::new(-1.0, 0.0), Complex64::new(-2.0, 0.0)],
        )
        .unwrap();
        assert!(err < 1e-9);
    }

    #[test]
    fn complex_pair_gives_real_gain() {
        let (a, b) = double_integrator();
        let c = Mat::identity(2, 2);
        let modes = [AssignedMode {
            value: Complex64::new(-1.0, 2.0),
            constraints: Vec::new(),
        }];
        let asg = assign(&a, &b, &c, &modes).unwrap();
        // s^2 + 2 s + 5
        assert_relative_eq!(asg.gain[(0, 0)], -5.0, epsilon = 1e-9);
        assert_relative_eq!(asg.gain[(0, 1)], -2.0, epsilon = 1e-9);
    }

    #[test]
    fn singular_cr_is_ill_conditioned() {
        let r = Mat::from_row_slice(2, 2, &[1.0, 1.0, -1.0, -1.0]);
        let w = Mat::from_row_slice(1, 2, &[1.0, 1.0]);
        let err = compute_gain(&w, &r, &Mat::identity(2, 2)).unwrap_err();
        assert!(matches!(err, Error::IllConditioned { .. }));
    }

    #[test]
    fn exact_constraint_is_met() {
        // 3-state, 2-input system: subspace dim 2, one entry pinned
        let a = Mat::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 0.0, 0.0, 1.0, -1.0, -2.0, -3.0]);
        let b = Mat::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
        let s = allowable_subspace(&a, &b, Complex64::new(-2.0, 0.0)).unwrap();
        assert_eq!(s.dim(), 2);
        let bound = EntryBound {
            state: 1,
            re: [0.25, 0.25],
            im: [0.0, 0.0],
        };
        let v = select_vector(
            &s,
            &[EntryConstraint {
                bound,
                value: Complex64::new(0.25, 0.0),
            }],
            0,
        )
        .unwrap();
        assert_relative_eq!(v[(1, 0)], 0.25, epsilon = 1e-12);
        let resid = real_form(&a, &b, Complex64::new(-2.0, 0.0)) * &v;
        assert!(resid.norm() < 1e-12);
    }

    #[test]
    fn unreachable_entry_is_a_bound_violation() {
        let (a, b) = double_integrator();
        let s = allowable_subspace(&a, &b, Complex64::new(-1.0, 0.0)).unwrap();
        // x = t [1, -1], so x0 = 0 forces x1 = 0 too; request x1 = 1 with x0 = 0
        let cs = [
            EntryConstraint {
                bound: EntryBound {
                    state: 0,
                    re: [0.0, 0.0],
                    im: [0.0, 0.0],
                },
                value: Complex64::new(0.0, 0.0),
            },
            EntryConstraint {
                bound: EntryBound {
                    state: 1,
                    re: [1.0, 1.0],
                    im: [0.0, 0.0],
                },
                value: Complex64::new(1.0, 0.0),
            },
        ];
        assert!(matches!(
            select_vector(&s, &cs, 3),
            Err(Error::BoundViolation { mode: 3, .. })
        ));
    }

    #[test]
    fn s1_examples() {
        let spec = |a: Mat| spectrum_of(&a).unwrap();
        assert!(check_region(&spec(Mat::from_element(1, 1, -1.0)), 0.3, None).pass);
        let bad = check_region(&spec(Mat::from_element(1, 1, 0.951)), 0.3, None);
        assert!(!bad.pass);
        assert_eq!(bad.offending.len(), 1);
        let wd: f64 = 3.18;
        let pair = spec(Mat::from_row_slice(
            2,
            2,
            &[0.0, 1.0, -(1.0 + wd * wd), -2.0],
        ));
        // damping 1/sqrt(1 + 3.18^2) = 0.29998, just under 0.3
        assert!(!check_region(&pair, 0.3, None).pass);
        assert!(check_region(&pair, 0.2999, None).pass);
        assert!(!check_region(&spec(Mat::from_element(1, 1, -1.0)), 0.3, Some(-2.0)).pass);
    }
}
