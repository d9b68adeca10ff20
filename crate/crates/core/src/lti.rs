//! State-space LTI plants, frequency grids, spectra and series augmentation.

use nalgebra::Schur;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::compensator::{CompensatorBank, Section};
use crate::error::{Error, Result};
use crate::linalg::{self, CMat, Mat};

/// Pivot threshold used when inverting (sI - A).
const RESOLVENT_TOL: f64 = 1e-13;

/// Relative real-part threshold below which an eigenvalue sits on the
/// imaginary axis.
pub const IMAG_AXIS_TOL: f64 = 1e-9;

pub fn on_imaginary_axis(z: Complex64) -> bool {
    z.re.abs() <= IMAG_AXIS_TOL * z.norm().max(1.0)
}

/// Continuous-time plant `x' = A x + B u`, `y = C x + D u`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpacePlant {
    pub a: Mat,
    pub b: Mat,
    pub c: Mat,
    pub d: Mat,
    pub label: String,
}

impl StateSpacePlant {
    pub fn new(a: Mat, b: Mat, c: Mat, d: Mat) -> Result<Self> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "A is {}x{}, expected square",
                a.nrows(),
                a.ncols()
            )));
        }
        let (m, r) = (b.ncols(), c.nrows());
        if b.nrows() != n {
            return Err(Error::DimensionMismatch(format!(
                "B has {} rows, A has {n}",
                b.nrows()
            )));
        }
        if c.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "C has {} columns, A has {n}",
                c.ncols()
            )));
        }
        if d.nrows() != r || d.ncols() != m {
            return Err(Error::DimensionMismatch(format!(
                "D is {}x{}, expected {r}x{m}",
                d.nrows(),
                d.ncols()
            )));
        }
        for (name, mat) in [("A", &a), ("B", &b), ("C", &c), ("D", &d)] {
            if !linalg::all_finite(mat) {
                return Err(Error::NonFinite(name.into()));
            }
        }
        Ok(Self {
            a,
            b,
            c,
            d,
            label: String::new(),
        })
    }

    /// Plant with zero feedthrough.
    pub fn strictly_proper(a: Mat, b: Mat, c: Mat) -> Result<Self> {
        let d = Mat::zeros(c.nrows(), b.ncols());
        Self::new(a, b, c, d)
    }

    /// Memoryless plant `y = G u`.
    pub fn static_gain(g: Mat) -> Self {
        let (r, m) = g.shape();
        Self {
            a: Mat::zeros(0, 0),
            b: Mat::zeros(0, m),
            c: Mat::zeros(r, 0),
            d: g,
            label: String::new(),
        }
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn states(&self) -> usize {
        self.a.nrows()
    }

    pub fn inputs(&self) -> usize {
        self.b.ncols()
    }

    pub fn outputs(&self) -> usize {
        self.c.nrows()
    }

    /// Transfer matrix `C (sI - A)^{-1} B + D` at an arbitrary complex point.
    pub fn eval(&self, s: Complex64) -> Result<CMat> {
        let n = self.states();
        let d = linalg::to_complex(&self.d);
        if n == 0 {
            return Ok(d);
        }
        let mut resolvent = linalg::to_complex(&self.a).map(|z| -z);
        for i in 0..n {
            resolvent[(i, i)] += s;
        }
        let x = linalg::csolve(&resolvent, &linalg::to_complex(&self.b), RESOLVENT_TOL)
            .ok_or(Error::SingularAtFrequency { s })?;
        Ok(linalg::to_complex(&self.c) * x + d)
    }

    pub fn freq_response(&self, omega: f64) -> Result<CMat> {
        self.eval(Complex64::new(0.0, omega))
    }

    /// Eigenvalues of A.
    pub fn poles(&self) -> Result<Vec<Complex64>> {
        eigenvalues(&self.a)
    }

    pub fn spectrum(&self) -> Result<Vec<EigenInfo>> {
        spectrum_of(&self.a)
    }

    /// Finite transmission zeros: points where the system pencil
    /// `[[A - sI, B], [C, D]]` drops below its normal rank.
    pub fn transmission_zeros(&self) -> Result<Vec<Complex64>> {
        transmission_zeros(self)
    }
}

/// Ordered plant collection sharing input and output dimensions.
#[derive(Debug, Clone)]
pub struct PlantSet {
    plants: Vec<StateSpacePlant>,
}

impl PlantSet {
    pub fn new(plants: Vec<StateSpacePlant>) -> Result<Self> {
        let first = plants
            .first()
            .ok_or_else(|| Error::InvalidConfig("plant set is empty".into()))?;
        let (m, r) = (first.inputs(), first.outputs());
        for (i, p) in plants.iter().enumerate() {
            if p.inputs() != m || p.outputs() != r {
                return Err(Error::DimensionMismatch(format!(
                    "plant {i} ('{}') is {}x{}, set is {r}x{m}",
                    p.label,
                    p.outputs(),
                    p.inputs()
                )));
            }
        }
        Ok(Self { plants })
    }

    pub fn plants(&self) -> &[StateSpacePlant] {
        &self.plants
    }

    pub fn len(&self) -> usize {
        self.plants.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plants.is_empty()
    }

    pub fn inputs(&self) -> usize {
        self.plants[0].inputs()
    }

    pub fn outputs(&self) -> usize {
        self.plants[0].outputs()
    }

    pub fn get(&self, i: usize) -> Option<&StateSpacePlant> {
        self.plants.get(i)
    }
}

/// Strictly increasing set of non-negative frequencies plus the settings for
/// golden-section refinement around local maxima.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrequencyGrid {
    points: Vec<f64>,
    pub refine_depth: usize,
    pub rel_tol: f64,
}

impl Default for FrequencyGrid {
    fn default() -> Self {
        Self::logspace(1e-3, 1e5, 400).expect("default grid is valid")
    }
}

impl FrequencyGrid {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::InvalidGrid("need at least 2 points".into()));
        }
        if points.iter().any(|w| !w.is_finite() || *w < 0.0) {
            return Err(Error::InvalidGrid("points must be finite and >= 0".into()));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "points must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            points,
            refine_depth: 40,
            rel_tol: 1e-4,
        })
    }

    pub fn logspace(lo: f64, hi: f64, count: usize) -> Result<Self> {
        if !(lo > 0.0 && hi > lo && count >= 2) {
            return Err(Error::InvalidGrid(format!("logspace({lo}, {hi}, {count})")));
        }
        let (l0, l1) = (lo.log10(), hi.log10());
        let pts = (0..count)
            .map(|i| 10f64.powf(l0 + (l1 - l0) * i as f64 / (count - 1) as f64))
            .collect();
        Self::from_points(pts)
    }

    pub fn with_refinement(mut self, depth: usize, rel_tol: f64) -> Self {
        self.refine_depth = depth;
        self.rel_tol = rel_tol;
        self
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Maximum of `f` over the grid, refined by golden-section search inside
    /// the bracket of every grid-local maximum. Points where `f` is `None`
    /// are skipped. Returns `(value, omega)`; `(-inf, nan)` if nothing could
    /// be evaluated.
    pub fn peak<F>(&self, f: F) -> (f64, f64)
    where
        F: Fn(f64) -> Option<f64>,
    {
        let vals: Vec<f64> = self
            .points
            .iter()
            .map(|&w| f(w).filter(|v| !v.is_nan()).unwrap_or(f64::NEG_INFINITY))
            .collect();
        let mut best = (f64::NEG_INFINITY, f64::NAN);
        for (i, &v) in vals.iter().enumerate() {
            if v > best.0 {
                best = (v, self.points[i]);
            }
        }
        let n = vals.len();
        for i in 0..n {
            let left = if i > 0 {
                vals[i - 1]
            } else {
                f64::NEG_INFINITY
            };
            let right = if i + 1 < n {
                vals[i + 1]
            } else {
                f64::NEG_INFINITY
            };
            if !(vals[i] > f64::NEG_INFINITY && vals[i] >= left && vals[i] >= right) {
                continue;
            }
            let lo = self.points[i.saturating_sub(1)];
            let hi = self.points[(i + 1).min(n - 1)];
            if hi <= lo {
                continue;
            }
            let (v, w) = golden_max(&f, lo, hi, self.refine_depth, self.rel_tol);
            if v > best.0 {
                best = (v, w);
            }
        }
        best
    }
}

/// Golden-section maximization on `[lo, hi]`, in log-frequency when `lo > 0`.
fn golden_max<F>(f: &F, lo: f64, hi: f64, depth: usize, rel_tol: f64) -> (f64, f64)
where
    F: Fn(f64) -> Option<f64>,
{
    let log = lo > 0.0;
    let (to, from): (fn(f64) -> f64, fn(f64) -> f64) = if log {
        (f64::ln, f64::exp)
    } else {
        (|x| x, |x| x)
    };
    let eval = |x: f64| {
        f(from(x))
            .filter(|v| !v.is_nan())
            .unwrap_or(f64::NEG_INFINITY)
    };
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (to(lo), to(hi));
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (eval(c), eval(d));
    for _ in 0..depth {
        let (wa, wb) = (from(a), from(b));
        if (wb - wa).abs() <= rel_tol * 0.5 * (wa + wb).abs().max(f64::MIN_POSITIVE) {
            break;
        }
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = eval(d);
        }
    }
    if fc >= fd {
        (fc, from(c))
    } else {
        (fd, from(d))
    }
}

/// Eigenvalue with its damping ratio and natural frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenInfo {
    pub value: Complex64,
    pub damping: f64,
    pub natural_frequency: f64,
}

impl EigenInfo {
    pub fn new(value: Complex64) -> Self {
        let wn = value.norm();
        if wn == 0.0 {
            // marginal pole at the origin: damping declared 1 by convention
            return Self {
                value,
                damping: 1.0,
                natural_frequency: 0.0,
            };
        }
        Self {
            value,
            damping: (-value.re / wn).clamp(-1.0, 1.0),
            natural_frequency: wn,
        }
    }

    pub fn is_marginal(&self) -> bool {
        self.natural_frequency == 0.0
    }
}

pub fn eigenvalues(a: &Mat) -> Result<Vec<Complex64>> {
    let n = a.nrows();
    if n == 0 {
        return Ok(Vec::new());
    }
    if !linalg::all_finite(a) {
        return Err(Error::NonFinite("state matrix".into()));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::ComputationFailed("Schur iteration did not converge".into()))?;
    Ok(pair_conjugates(
        schur.complex_eigenvalues().iter().copied().collect(),
    ))
}

/// Snap near-real eigenvalues to the real axis and order conjugate pairs so
/// that `(+im, -im)` members are adjacent and exact conjugates. Sorted by
/// decreasing real part.
fn pair_conjugates(mut eigs: Vec<Complex64>) -> Vec<Complex64> {
    let tol = 1e-12;
    let mut real = Vec::new();
    let mut upper = Vec::new();
    let mut lower = Vec::new();
    for z in eigs.drain(..) {
        if z.im.abs() <= tol * z.norm().max(1.0) {
            real.push(Complex64::new(z.re, 0.0));
        } else if z.im > 0.0 {
            upper.push(z);
        } else {
            lower.push(z);
        }
    }
    let mut pairs = Vec::with_capacity(upper.len());
    for u in upper {
        let idx = lower
            .iter()
            .enumerate()
            .min_by(|(_, x), (_, y)| (*x - u.conj()).norm().total_cmp(&(*y - u.conj()).norm()))
            .map(|(i, _)| i);
        let rep = match idx {
            Some(i) => {
                let l = lower.swap_remove(i);
                Complex64::new(0.5 * (u.re + l.re), 0.5 * (u.im - l.im))
            }
            None => u,
        };
        pairs.push(rep);
    }
    // unmatched lower members (should not happen for real A)
    pairs.extend(lower.into_iter().map(|l| l.conj()));

    let mut out: Vec<(Complex64, bool)> = real.into_iter().map(|z| (z, false)).collect();
    out.extend(pairs.into_iter().map(|z| (z, true)));
    out.sort_by(|(x, _), (y, _)| y.re.total_cmp(&x.re).then(x.im.total_cmp(&y.im)));
    let mut result = Vec::new();
    for (z, is_pair) in out {
        result.push(z);
        if is_pair {
            result.push(z.conj());
        }
    }
    result
}

pub fn spectrum_of(a: &Mat) -> Result<Vec<EigenInfo>> {
    Ok(eigenvalues(a)?.into_iter().map(EigenInfo::new).collect())
}

/// Diagonal realization of a compensator bank: one state per dynamic section.
pub fn realize_bank(bank: &CompensatorBank) -> Result<StateSpacePlant> {
    let k = bank.len();
    let n = bank.states();
    let mut a = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, k);
    let mut c = Mat::zeros(k, n);
    let mut d = Mat::zeros(k, k);
    let mut state = 0;
    for (ch, sec) in bank.sections().iter().enumerate() {
        match *sec {
            Section::Static { gain } => d[(ch, ch)] = gain,
            Section::FirstOrder {
                a: na,
                b: nb,
                c: dc,
                d: dd,
            } => {
                if dc == 0.0 {
                    return Err(Error::ImproperSection { index: ch });
                }
                // (a s + b)/(c s + d) = a/c + ((b c - a d)/c^2) / (s + d/c)
                a[(state, state)] = -dd / dc;
                b[(state, ch)] = 1.0;
                c[(ch, state)] = (nb * dc - na * dd) / (dc * dc);
                d[(ch, ch)] = na / dc;
                state += 1;
            }
        }
    }
    Ok(StateSpacePlant::new(a, b, c, d)?.with_label(format!("{:?} bank", bank.side())))
}

/// Series connection `W_out * P * W_in` with states ordered
/// `[plant, w_in, w_out]`, so plant state indices are preserved.
pub fn augment_plant(
    w_out: &CompensatorBank,
    plant: &StateSpacePlant,
    w_in: &CompensatorBank,
) -> Result<StateSpacePlant> {
    if w_in.len() != plant.inputs() {
        return Err(Error::DimensionMismatch(format!(
            "W_in has {} channels, plant has {} inputs",
            w_in.len(),
            plant.inputs()
        )));
    }
    if w_out.len() != plant.outputs() {
        return Err(Error::DimensionMismatch(format!(
            "W_out has {} channels, plant has {} outputs",
            w_out.len(),
            plant.outputs()
        )));
    }
    let wi = realize_bank(w_in)?;
    let wo = realize_bank(w_out)?;
    let out = series3(plant, &wi, &wo)?;
    Ok(out.with_label(plant.label.clone()))
}

/// `wo * p * wi` with state order `[p, wi, wo]`.
pub(crate) fn series3(
    p: &StateSpacePlant,
    wi: &StateSpacePlant,
    wo: &StateSpacePlant,
) -> Result<StateSpacePlant> {
    let (np, ni, no) = (p.states(), wi.states(), wo.states());
    let n = np + ni + no;
    let m = wi.inputs();
    let r = wo.outputs();
    let mut a = Mat::zeros(n, n);
    let mut b = Mat::zeros(n, m);
    let mut c = Mat::zeros(r, n);

    a.view_mut((0, 0), (np, np)).copy_from(&p.a);
    a.view_mut((0, np), (np, ni)).copy_from(&(&p.b * &wi.c));
    a.view_mut((np, np), (ni, ni)).copy_from(&wi.a);
    a.view_mut((np + ni, 0), (no, np))
        .copy_from(&(&wo.b * &p.c));
    a.view_mut((np + ni, np), (no, ni))
        .copy_from(&(&wo.b * &p.d * &wi.c));
    a.view_mut((np + ni, np + ni), (no, no)).copy_from(&wo.a);

    b.view_mut((0, 0), (np, m)).copy_from(&(&p.b * &wi.d));
    b.view_mut((np, 0), (ni, m)).copy_from(&wi.b);
    b.view_mut((np + ni, 0), (no, m))
        .copy_from(&(&wo.b * &p.d * &wi.d));

    c.view_mut((0, 0), (r, np)).copy_from(&(&wo.d * &p.c));
    c.view_mut((0, np), (r, ni))
        .copy_from(&(&wo.d * &p.d * &wi.c));
    c.view_mut((0, np + ni), (r, no)).copy_from(&wo.c);

    let d = &wo.d * &p.d * &wi.d;
    StateSpacePlant::new(a, b, c, d)
}

/// System pencil `[[A - sI, B], [C, D]]` evaluated at `s`.
fn pencil(sys: &StateSpacePlant, s: Complex64) -> CMat {
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    let mut p = CMat::zeros(n + r, n + m);
    for i in 0..n {
        for j in 0..n {
            p[(i, j)] = Complex64::new(sys.a[(i, j)], 0.0);
        }
        p[(i, i)] -= s;
        for j in 0..m {
            p[(i, n + j)] = Complex64::new(sys.b[(i, j)], 0.0);
        }
    }
    for i in 0..r {
        for j in 0..n {
            p[(n + i, j)] = Complex64::new(sys.c[(i, j)], 0.0);
        }
        for j in 0..m {
            p[(n + i, n + j)] = Complex64::new(sys.d[(i, j)], 0.0);
        }
    }
    p
}

fn pencil_rank_gap(sys: &StateSpacePlant, s: Complex64, rank: usize) -> f64 {
    let mut sv = linalg::singular_values(&pencil(sys, s));
    sv.sort_by(|x, y| y.total_cmp(x));
    if rank == 0 || sv.is_empty() {
        return 0.0;
    }
    sv[rank - 1] / sv[0].max(f64::MIN_POSITIVE)
}

fn transmission_zeros(sys: &StateSpacePlant) -> Result<Vec<Complex64>> {
    let (n, m, r) = (sys.states(), sys.inputs(), sys.outputs());
    if n == 0 {
        return Ok(Vec::new());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_2e70);
    let normal_rank = (0..3)
        .map(|_| {
            let s = Complex64::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
            let sv = linalg::singular_values(&pencil(sys, s));
            let smax = sv.iter().copied().fold(0.0, f64::max);
            sv.iter().filter(|&&x| x > 1e-10 * smax).count()
        })
        .max()
        .unwrap_or(0);
    let q = m.min(r);
    if normal_rank < n + q {
        // rank-deficient transfer matrix: every point is a zero, report none
        return Ok(Vec::new());
    }

    // square the pencil down with random projections if needed
    let (b_sq, c_sq, d_sq) = if r > m {
        let l = Mat::from_fn(q, r, |_, _| rng.random_range(-1.0..1.0));
        (sys.b.clone(), &l * &sys.c, &l * &sys.d)
    } else if m > r {
        let rt = Mat::from_fn(m, q, |_, _| rng.random_range(-1.0..1.0));
        (&sys.b * &rt, sys.c.clone(), &sys.d * &rt)
    } else {
        (sys.b.clone(), sys.c.clone(), sys.d.clone())
    };
    let dim = n + q;
    let mut m0 = Mat::zeros(dim, dim);
    m0.view_mut((0, 0), (n, n)).copy_from(&sys.a);
    m0.view_mut((0, n), (n, q)).copy_from(&b_sq);
    m0.view_mut((n, 0), (q, n)).copy_from(&c_sq);
    m0.view_mut((n, n), (q, q)).copy_from(&d_sq);
    let mut nn = Mat::zeros(dim, dim);
    for i in 0..n {
        nn[(i, i)] = 1.0;
    }

    // det(M0 - s N) = 0  <=>  1/(s - sigma) is an eigenvalue of (M0 - sigma N)^{-1} N
    let shifts = [0.7318, -1.3917, 2.4471, -0.2113];
    let mut best: Option<(f64, f64, Mat)> = None;
    for &sigma in &shifts {
        let shifted = &m0 - &nn * sigma;
        let kappa = linalg::condition_number(&shifted);
        if best.as_ref().is_none_or(|(k, _, _)| kappa < *k) {
            if let Some(op) = linalg::solve(&shifted, &nn, 1e-14) {
                best = Some((kappa, sigma, op));
            }
        }
        if kappa < 1e8 {
            break;
        }
    }
    let (_, sigma, op) =
        best.ok_or_else(|| Error::ComputationFailed("zero pencil is singular".into()))?;
    // infinite eigenvalues of the pencil show up as a cluster of tiny mu
    // (perturbed Jordan blocks); the degree of det(M0 - s N) says how many
    // of the largest |mu| are finite zeros
    let mut mu = eigenvalues(&op)?;
    mu.sort_by(|x, y| y.norm().total_cmp(&x.norm()));
    let m0c = linalg::to_complex(&m0);
    let nnc = linalg::to_complex(&nn);
    let log_det = |radius: f64| {
        let s = Complex64::from_polar(radius, 0.7);
        linalg::cdet(&(&m0c - &nnc * s)).norm().log10()
    };
    let big = 1e3 * m0.norm().max(1.0);
    let finite = (log_det(10.0 * big) - log_det(big))
        .round()
        .clamp(0.0, n as f64) as usize;
    let squared = r != m;
    let zeros = mu
        .into_iter()
        .take(finite)
        .filter(|z| z.norm() > 0.0)
        .map(|z| Complex64::new(sigma, 0.0) + z.inv())
        .filter(|&z| !squared || pencil_rank_gap(sys, z, normal_rank) < 1e-7)
        .collect();
    Ok(pair_conjugates(zeros))
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

    #[test]
    fn integrator_at_unit_frequency() {
        let g = siso(0.0, 1.0, 1.0).freq_response(1.0).unwrap();
        assert_relative_eq!(g[(0, 0)].re, 0.0, epsilon = 1e-15);
        assert_relative_eq!(g[(0, 0)].im, -1.0, epsilon = 1e-15);
    }

    #[test]
    fn pure_gain_and_first_order_dc() {
        let g = StateSpacePlant::static_gain(Mat::from_row_slice(1, 2, &[2.0, -3.0]));
        let h = g.freq_response(123.0).unwrap();
        assert_eq!(h[(0, 1)].re, -3.0);
        let p = siso(-1.0, 1.0, 1.0).freq_response(0.0).unwrap();
        assert_relative_eq!(p[(0, 0)].re, 1.0, epsilon = 1e-15);
    }

    #[test]
    fn singular_on_pole() {
        let err = siso(0.0, 1.0, 1.0).freq_response(0.0).unwrap_err();
        assert!(matches!(err, Error::SingularAtFrequency { .. }));
    }

    #[test]
    fn rejects_bad_dimensions() {
        let r = StateSpacePlant::new(
            Mat::zeros(2, 2),
            Mat::zeros(3, 1),
            Mat::zeros(1, 2),
            Mat::zeros(1, 1),
        );
        assert!(matches!(r, Err(Error::DimensionMismatch(_))));
        let r = StateSpacePlant::strictly_proper(
            Mat::from_element(1, 1, f64::NAN),
            Mat::zeros(1, 1),
            Mat::zeros(1, 1),
        );
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn damping_conventions() {
        let s = siso(-1.0, 1.0, 1.0).spectrum().unwrap();
        assert_eq!(s[0].damping, 1.0);
        assert_eq!(s[0].natural_frequency, 1.0);

        let s = siso(0.951, 1.0, 1.0).spectrum().unwrap();
        assert_eq!(s[0].damping, -1.0);

        let s = siso(0.0, 1.0, 1.0).spectrum().unwrap();
        assert!(s[0].is_marginal());
        assert_eq!(s[0].damping, 1.0);

        // companion form with eigenvalues -1 +/- 3.18j
        let wd: f64 = 3.18;
        let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, -(1.0 + wd * wd), -2.0]);
        let s = spectrum_of(&a).unwrap();
        let expected = 1.0 / (1.0 + wd * wd).sqrt();
        assert_relative_eq!(s[0].damping, expected, epsilon = 1e-12);
        assert_eq!(s[0].damping, s[1].damping);
        assert_eq!(s[0].value, s[1].value.conj());
        assert!(s[0].value.im > 0.0);
    }

    #[test]
    fn grid_validation() {
        assert!(FrequencyGrid::from_points(vec![1.0]).is_err());
        assert!(FrequencyGrid::from_points(vec![1.0, 1.0]).is_err());
        assert!(FrequencyGrid::from_points(vec![-1.0, 1.0]).is_err());
        let g = FrequencyGrid::default();
        assert_eq!(g.len(), 400);
        assert_relative_eq!(g.points()[0], 1e-3, max_relative = 1e-12);
        assert_relative_eq!(g.points()[399], 1e5, max_relative = 1e-12);
    }

    #[test]
    fn peak_refines_between_grid_points() {
        let g = FrequencyGrid::logspace(0.1, 10.0, 9).unwrap();
        let (v, w) = g.peak(|w| Some(-(w.ln() - 0.3f64.exp().ln()).powi(2)));
        assert!(v > -1e-8);
        assert_relative_eq!(w, 0.3f64.exp(), max_relative = 1e-3);
    }

    #[test]
    fn zeros_of_siso_and_tall_plants() {
        // (s + 2) / ((s + 1)(s + 3)) in controllable canonical form
        let p = StateSpacePlant::strictly_proper(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, -3.0, -4.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::from_row_slice(1, 2, &[2.0, 1.0]),
        )
        .unwrap();
        let z = p.transmission_zeros().unwrap();
        assert_eq!(z.len(), 1);
        assert_relative_eq!(z[0].re, -2.0, epsilon = 1e-9);

        // stacking a second output that shares the zero keeps it; a different
        // one removes it
        let tall_shared = StateSpacePlant::strictly_proper(
            p.a.clone(),
            p.b.clone(),
            Mat::from_row_slice(2, 2, &[2.0, 1.0, 4.0, 2.0]),
        )
        .unwrap();
        let z = tall_shared.transmission_zeros().unwrap();
        assert_eq!(z.len(), 1);
        assert_relative_eq!(z[0].re, -2.0, epsilon = 1e-7);

        let tall = StateSpacePlant::strictly_proper(
            p.a.clone(),
            p.b.clone(),
            Mat::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 0.0]),
        )
        .unwrap();
        assert!(tall.transmission_zeros().unwrap().is_empty());
    }
}
