//! Fixed-step RK4 simulation of the compensated closed loop.
//!
//! The controller sees `u = K (y_meas - r)` on the augmented plant
//! `W_out P W_in`, which keeps the closed-loop state matrix `A + B K C` and
//! makes the tracking error `r - y` equal to `S_o r`. Output disturbances add
//! to `y_meas`; an optional first-order weight `G` enters as the
//! output-multiplicative perturbation `(I + delta G e e^T)` on one channel.

use serde::{Deserialize, Serialize};

use crate::compensator::{CompensatorBank, Interval, Section};
use crate::error::{Error, Result};
use crate::linalg::{self, Mat};
use crate::lti::{augment_plant, eigenvalues, realize_bank, FrequencyGrid, StateSpacePlant};

/// States beyond this magnitude mark the trace as divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SignalSpec {
    Zero,
    Step {
        amplitude: f64,
        #[serde(default)]
        start: f64,
    },
    /// `+amplitude` on `[start, start + width)`, `-amplitude` on
    /// `[start + width, start + 2 width)`, zero elsewhere.
    Doublet {
        amplitude: f64,
        width: f64,
        #[serde(default)]
        start: f64,
    },
    Sine {
        amplitude: f64,
        omega: f64,
        #[serde(default)]
        phase: f64,
        #[serde(default)]
        start: f64,
    },
    Sum {
        terms: Vec<SignalSpec>,
    },
}

impl SignalSpec {
    pub fn value(&self, t: f64) -> f64 {
        match self {
            SignalSpec::Zero => 0.0,
            SignalSpec::Step { amplitude, start } => {
                if t >= *start {
                    *amplitude
                } else {
                    0.0
                }
            }
            SignalSpec::Doublet {
                amplitude,
                width,
                start,
            } => {
                if t >= *start && t < start + width {
                    *amplitude
                } else if t >= start + width && t < start + 2.0 * width {
                    -amplitude
                } else {
                    0.0
                }
            }
            SignalSpec::Sine {
                amplitude,
                omega,
                phase,
                start,
            } => {
                if t >= *start {
                    amplitude * (omega * (t - start) + phase).sin()
                } else {
                    0.0
                }
            }
            SignalSpec::Sum { terms } => terms.iter().map(|s| s.value(t)).sum(),
        }
    }

    fn validate(&self, dt: f64) -> Result<()> {
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        let ok = match self {
            SignalSpec::Zero => true,
            SignalSpec::Step { amplitude, start } => finite(&[*amplitude, *start]),
            SignalSpec::Doublet {
                amplitude,
                width,
                start,
            } => finite(&[*amplitude, *width, *start]) && *width > dt,
            SignalSpec::Sine {
                amplitude,
                omega,
                phase,
                start,
            } => finite(&[*amplitude, *omega, *phase, *start]),
            SignalSpec::Sum { terms } => {
                for t in terms {
                    t.validate(dt)?;
                }
                true
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidConfig(format!("bad signal {self:?}")))
        }
    }
}

/// Output-multiplicative weight on channel `channel`, run with
/// `delta = sign * scale`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertaintyInjection {
    pub weight: Section,
    pub channel: usize,
    #[serde(default = "one")]
    pub sign: f64,
    #[serde(default = "one")]
    pub scale: f64,
}

fn one() -> f64 {
    1.0
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    /// One signal per output channel; empty means all zero.
    #[serde(default)]
    pub reference: Vec<SignalSpec>,
    #[serde(default)]
    pub disturbance: Vec<SignalSpec>,
    #[serde(default)]
    pub uncertainty: Option<UncertaintyInjection>,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub duration: f64,
    /// Initial augmented-plant state; zero when absent.
    #[serde(default)]
    pub initial_state: Option<Vec<f64>>,
}

impl Scenario {
    pub fn validate(&self, outputs: usize) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::InvalidConfig(format!("dt = {}", self.dt)));
        }
        if !(self.duration >= 10.0 * self.dt && self.duration.is_finite()) {
            return Err(Error::InvalidConfig(
                "duration must be at least 10 dt".into(),
            ));
        }
        for (what, sigs) in [
            ("reference", &self.reference),
            ("disturbance", &self.disturbance),
        ] {
            if !sigs.is_empty() && sigs.len() != outputs {
                return Err(Error::InvalidConfig(format!(
                    "{} {what} signals for {outputs} outputs",
                    sigs.len()
                )));
            }
            for s in sigs {
                s.validate(self.dt)?;
            }
        }
        if let Some(u) = &self.uncertainty {
            if u.channel >= outputs {
                return Err(Error::InvalidConfig(format!(
                    "uncertainty channel {}",
                    u.channel
                )));
            }
            if !matches!(u.weight, Section::FirstOrder { c, .. } if c != 0.0)
                && !matches!(u.weight, Section::Static { .. })
            {
                return Err(Error::InvalidConfig(
                    "uncertainty weight must be proper".into(),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceSet {
    pub time: Vec<f64>,
    /// Per output channel.
    pub reference: Vec<Vec<f64>>,
    /// Measured augmented outputs.
    pub outputs: Vec<Vec<f64>>,
    /// Physical plant inputs (after the input bank).
    pub actuators: Vec<Vec<f64>>,
    /// `r - y_meas` per output channel.
    pub errors: Vec<Vec<f64>>,
    /// First time a state exceeded the divergence limit; traces stop there.
    pub divergence: Option<f64>,
}

/// Closed loop as one LTI system `z' = Az z + Bz v` with `v = [r; d]`.
struct LoopSystem {
    az: Mat,
    bz: Mat,
    y_z: Mat,
    y_v: Mat,
    act_z: Mat,
    act_v: Mat,
}

fn build_loop(
    aug: &StateSpacePlant,
    w_in: &StateSpacePlant,
    plant_states: usize,
    gain: &Mat,
    unc: Option<&UncertaintyInjection>,
) -> Result<LoopSystem> {
    let (n, m, r) = (aug.states(), aug.inputs(), aug.outputs());
    let (ag, bg, cg, dg, ch, delta) = match unc {
        None => (0.0, 0.0, 0.0, 0.0, 0, 0.0),
        Some(u) => {
            let delta = u.sign * u.scale;
            match u.weight {
                Section::Static { gain } => (0.0, 0.0, 0.0, gain, u.channel, delta),
                Section::FirstOrder { a, b, c, d } => (
                    -d / c,
                    1.0,
                    (b * c - a * d) / (c * c),
                    a / c,
                    u.channel,
                    delta,
                ),
            }
        }
    };
    let ng = usize::from(matches!(unc, Some(u) if matches!(u.weight, Section::FirstOrder { .. })));
    let nz = n + ng;

    let mut mmat = Mat::identity(r, r);
    mmat[(ch, ch)] += delta * dg;
    let f = linalg::solve(
        &(Mat::identity(m, m) - gain * &mmat * &aug.d),
        &Mat::identity(m, m),
        1e-12,
    )
    .ok_or(Error::IllPosedLoop)?;
    let fk = &f * gain;

    // u = Ux z + Uv v
    let mut ux = Mat::zeros(m, nz);
    ux.view_mut((0, 0), (m, n))
        .copy_from(&(&fk * &mmat * &aug.c));
    if ng == 1 {
        for i in 0..m {
            ux[(i, n)] = delta * cg * fk[(i, ch)];
        }
    }
    let mut uv = Mat::zeros(m, 2 * r);
    uv.view_mut((0, 0), (m, r)).copy_from(&(-&fk));
    uv.view_mut((0, r), (m, r)).copy_from(&fk);

    // unperturbed output y = Yz z + Yv v
    let mut yz = Mat::zeros(r, nz);
    yz.view_mut((0, 0), (r, n)).copy_from(&aug.c);
    let yz = yz + &aug.d * &ux;
    let yv = &aug.d * &uv;

    // measured output
    let mut ymz = &mmat * &yz;
    if ng == 1 {
        ymz[(ch, n)] += delta * cg;
    }
    let mut ymv = &mmat * &yv;
    for i in 0..r {
        ymv[(i, r + i)] += 1.0;
    }

    let mut az = Mat::zeros(nz, nz);
    az.view_mut((0, 0), (n, n)).copy_from(&aug.a);
    let bu = &aug.b * &ux;
    let mut top = az.view_mut((0, 0), (n, nz));
    top += &bu;
    let mut bz = Mat::zeros(nz, 2 * r);
    bz.view_mut((0, 0), (n, 2 * r)).copy_from(&(&aug.b * &uv));
    if ng == 1 {
        az[(n, n)] += ag;
        for j in 0..nz {
            az[(n, j)] += bg * yz[(ch, j)];
        }
        for j in 0..2 * r {
            bz[(n, j)] = bg * yv[(ch, j)];
        }
    }

    // physical input u_p = Ci x_i + Di u
    let ni = w_in.states();
    let mut act_z = &w_in.d * &ux;
    let mut block = act_z.view_mut((0, plant_states), (m, ni));
    block += &w_in.c;
    let act_v = &w_in.d * &uv;
    Ok(LoopSystem {
        az,
        bz,
        y_z: ymz,
        y_v: ymv,
        act_z,
        act_v,
    })
}

/// Amplification factor of one RK4 step on `z' = lambda z` with `z = h lambda`.
fn rk4_amplification(z: num_complex::Complex64) -> f64 {
    (1.0 + z + z * z / 2.0 + z * z * z / 6.0 + z * z * z * z / 24.0).norm()
}

/// A decaying mode the integrator would amplify makes every trace a
/// numerical artifact, so such step sizes are rejected up front.
fn check_step_size(az: &Mat, h: f64) -> Result<()> {
    for lam in eigenvalues(az)? {
        if lam.re < 0.0 && rk4_amplification(lam * h) > 1.0 {
            return Err(Error::InvalidConfig(format!(
                "dt = {h} is beyond the RK4 stability limit for closed-loop mode {lam}"
            )));
        }
    }
    Ok(())
}

pub fn simulate(
    plant: &StateSpacePlant,
    gain: &Mat,
    w_in: &CompensatorBank,
    w_out: &CompensatorBank,
    scenario: &Scenario,
) -> Result<TraceSet> {
    let aug = augment_plant(w_out, plant, w_in)?;
    let r = aug.outputs();
    if gain.shape() != (aug.inputs(), r) {
        return Err(Error::DimensionMismatch(format!(
            "K is {}x{}, loop needs {}x{r}",
            gain.nrows(),
            gain.ncols(),
            aug.inputs()
        )));
    }
    scenario.validate(r)?;
    let wi = realize_bank(w_in)?;
    let sys = build_loop(
        &aug,
        &wi,
        plant.states(),
        gain,
        scenario.uncertainty.as_ref(),
    )?;
    let nz = sys.az.nrows();
    check_step_size(&sys.az, scenario.dt)?;

    let signal = |sigs: &[SignalSpec], i: usize, t: f64| sigs.get(i).map_or(0.0, |s| s.value(t));
    let input = |t: f64| {
        let mut v = nalgebra::DVector::zeros(2 * r);
        for i in 0..r {
            v[i] = signal(&scenario.reference, i, t);
            v[r + i] = signal(&scenario.disturbance, i, t);
        }
        v
    };

    let mut z = nalgebra::DVector::zeros(nz);
    if let Some(x0) = &scenario.initial_state {
        if x0.len() != aug.states() {
            return Err(Error::DimensionMismatch(format!(
                "initial state has {} entries, loop has {} plant states",
                x0.len(),
                aug.states()
            )));
        }
        for (i, &v) in x0.iter().enumerate() {
            z[i] = v;
        }
    }

    let h = scenario.dt;
    let steps = (scenario.duration / h).round() as usize;
    let m = aug.inputs();
    let mut tr = TraceSet {
        time: Vec::with_capacity(steps + 1),
        reference: vec![Vec::with_capacity(steps + 1); r],
        outputs: vec![Vec::with_capacity(steps + 1); r],
        actuators: vec![Vec::with_capacity(steps + 1); m],
        errors: vec![Vec::with_capacity(steps + 1); r],
        divergence: None,
    };
    let deriv = |z: &nalgebra::DVector<f64>, v: &nalgebra::DVector<f64>| &sys.az * z + &sys.bz * v;
    for k in 0..=steps {
        let t = k as f64 * h;
        let v = input(t);
        let y = &sys.y_z * &z + &sys.y_v * &v;
        let u = &sys.act_z * &z + &sys.act_v * &v;
        tr.time.push(t);
        for i in 0..r {
            tr.reference[i].push(v[i]);
            tr.outputs[i].push(y[i]);
            tr.errors[i].push(v[i] - y[i]);
        }
        for i in 0..m {
            tr.actuators[i].push(u[i]);
        }
        if k == steps {
            break;
        }
        let vm = input(t + 0.5 * h);
        let ve = input(t + h);
        let k1 = deriv(&z, &v);
        let k2 = deriv(&(&z + &k1 * (0.5 * h)), &vm);
        let k3 = deriv(&(&z + &k2 * (0.5 * h)), &vm);
        let k4 = deriv(&(&z + &k3 * h), &ve);
        z += (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0);
        if z.iter().any(|x| !(x.abs() <= DIVERGENCE_LIMIT)) {
            tr.divergence = Some(t + h);
            break;
        }
    }
    Ok(tr)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    pub channel: usize,
    /// Allowed `|r - y|` over the window.
    #[serde(default)]
    pub band: Option<f64>,
    #[serde(default)]
    pub rms_ceiling: Option<f64>,
    /// Evaluation window in seconds; whole trace when absent.
    #[serde(default)]
    pub window: Option<Interval>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelMetrics {
    pub channel: usize,
    pub max_error: f64,
    pub rms_error: f64,
    pub pass: bool,
}

pub fn tracking_metrics(traces: &TraceSet, specs: &[ChannelSpec]) -> Result<Vec<ChannelMetrics>> {
    if let Some(time) = traces.divergence {
        return Err(Error::DivergentTrace { time });
    }
    specs
        .iter()
        .map(|s| {
            let err = traces
                .errors
                .get(s.channel)
                .ok_or_else(|| Error::InvalidConfig(format!("no tracked channel {}", s.channel)))?;
            let [t0, t1] = s.window.unwrap_or([f64::NEG_INFINITY, f64::INFINITY]);
            let sel: Vec<f64> = traces
                .time
                .iter()
                .zip(err)
                .filter(|(&t, _)| t >= t0 && t <= t1)
                .map(|(_, &e)| e)
                .collect();
            if sel.iter().any(|e| !e.is_finite()) {
                return Err(Error::DivergentTrace { time: f64::NAN });
            }
            let max_error = sel.iter().fold(0.0f64, |a, e| a.max(e.abs()));
            let rms_error = if sel.is_empty() {
                0.0
            } else {
                (sel.iter().map(|e| e * e).sum::<f64>() / sel.len() as f64).sqrt()
            };
            let pass = s.band.is_none_or(|b| max_error <= b)
                && s.rms_ceiling.is_none_or(|c| rms_error <= c);
            Ok(ChannelMetrics {
                channel: s.channel,
                max_error,
                rms_error,
                pass,
            })
        })
        .collect()
}

/// `(omega, |G(j omega)|)` over the grid.
pub fn weight_gain_curve(g: &Section, grid: &FrequencyGrid) -> Vec<(f64, f64)> {
    grid.points()
        .iter()
        .map(|&w| (w, g.eval(num_complex::Complex64::new(0.0, w)).norm()))
        .collect()
}

/// Exponential decay rate of a free response: slope of a least-squares line
/// through the log of the running-maximum envelope `max_{s >= t} |x(s)|`,
/// fitted for `t >= t_start` while the envelope lies between `1e-8` and
/// `1e-1` of its value at `t_start`. Returns `None` when too few points
/// qualify.
pub fn envelope_decay_rate(time: &[f64], values: &[f64], t_start: f64) -> Option<f64> {
    let mut env = vec![0.0; values.len()];
    let mut run: f64 = 0.0;
    for i in (0..values.len()).rev() {
        run = run.max(values[i].abs());
        env[i] = run;
    }
    let i0 = time.iter().position(|&t| t >= t_start)?;
    let e0 = env[i0];
    if !(e0 > 0.0) {
        return None;
    }
    let (mut n, mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0, 0.0);
    for i in i0..values.len() {
        let rel = env[i] / e0;
        if !(1e-8..=1e-1).contains(&rel) {
            continue;
        }
        let (x, y) = (time[i], env[i].ln());
        n += 1.0;
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    if n < 10.0 {
        return None;
    }
    let denom = n * sxx - sx * sx;
    (denom > 0.0).then(|| (n * sxy - sx * sy) / denom)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::compensator::BankSide;
    use approx::assert_relative_eq;

    fn first_order() -> StateSpacePlant {
        StateSpacePlant::strictly_proper(
            Mat::from_element(1, 1, -1.0),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn ids() -> (CompensatorBank, CompensatorBank) {
        (
            CompensatorBank::identity(BankSide::Input, 1),
            CompensatorBank::identity(BankSide::Output, 1),
        )
    }

    fn scenario(reference: Vec<SignalSpec>, duration: f64) -> Scenario {
        Scenario {
            name: String::new(),
            reference,
            disturbance: Vec::new(),
            uncertainty: None,
            dt: 1e-3,
            duration,
            initial_state: None,
        }
    }

    #[test]
    fn zero_scenario_is_all_zero() {
        let (wi, wo) = ids();
        let tr = simulate(
            &first_order(),
            &Mat::from_element(1, 1, -1.0),
            &wi,
            &wo,
            &scenario(vec![], 1.0),
        )
        .unwrap();
        assert_eq!(tr.time.len(), 1001);
        assert!(tr.outputs[0]
            .iter()
            .chain(&tr.actuators[0])
            .all(|&v| v == 0.0));
    }

    #[test]
    fn step_settles_to_half() {
        let (wi, wo) = ids();
        let sc = scenario(
            vec![SignalSpec::Step {
                amplitude: 1.0,
                start: 0.0,
            }],
            10.0,
        );
        let tr = simulate(
            &first_order(),
            &Mat::from_element(1, 1, -1.0),
            &wi,
            &wo,
            &sc,
        )
        .unwrap();
        let y = *tr.outputs[0].last().unwrap();
        assert!((y - 0.5).abs() < 0.005, "{y}");
        assert!((tr.errors[0].last().unwrap() - 0.5).abs() < 0.005);
    }

    #[test]
    fn doublet_shape() {
        let s = SignalSpec::Doublet {
            amplitude: 0.0873,
            width: 2.0,
            start: 1.0,
        };
        assert_eq!(s.value(0.5), 0.0);
        assert_eq!(s.value(1.0), 0.0873);
        assert_eq!(s.value(2.999), 0.0873);
        assert_eq!(s.value(3.0), -0.0873);
        assert_eq!(s.value(5.0), 0.0);
    }

    #[test]
    fn unstable_loop_diverges() {
        let (wi, wo) = ids();
        let p = StateSpacePlant::strictly_proper(
            Mat::from_element(1, 1, 5.0),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap();
        let mut sc = scenario(vec![], 10.0);
        sc.initial_state = Some(vec![1.0]);
        let tr = simulate(&p, &Mat::from_element(1, 1, 0.0), &wi, &wo, &sc).unwrap();
        let t = tr.divergence.unwrap();
        assert_eq!(*tr.time.last().unwrap(), t - 1e-3);
        assert!(t > 3.0 && t < 5.0);
        assert!(matches!(
            tracking_metrics(&tr, &[]),
            Err(Error::DivergentTrace { .. })
        ));
    }

    #[test]
    fn metrics_examples() {
        let time: Vec<f64> = (0..=10000)
            .map(|i| i as f64 * 1e-3 * 2.0 * std::f64::consts::PI)
            .collect();
        let mk = |errors: Vec<f64>| TraceSet {
            time: time.clone(),
            reference: vec![vec![0.0; time.len()]],
            outputs: vec![vec![0.0; time.len()]],
            actuators: vec![],
            errors: vec![errors],
            divergence: None,
        };
        let spec = [ChannelSpec {
            channel: 0,
            band: Some(0.0087),
            rms_ceiling: Some(0.0873),
            window: None,
        }];
        let perfect = tracking_metrics(&mk(vec![0.0; time.len()]), &spec).unwrap();
        assert!(perfect[0].pass && perfect[0].max_error == 0.0);
        let offset = tracking_metrics(&mk(vec![0.01; time.len()]), &spec).unwrap();
        assert!(!offset[0].pass);
        let sine: Vec<f64> = time.iter().map(|t| 0.05 * t.sin()).collect();
        let rms_only = [ChannelSpec {
            band: None,
            ..spec[0].clone()
        }];
        let m = tracking_metrics(&mk(sine), &rms_only).unwrap();
        assert_relative_eq!(m[0].rms_error, 0.05 / 2f64.sqrt(), max_relative = 1e-3);
        assert!(m[0].pass);
    }

    #[test]
    fn weight_curve_points() {
        let g = Section::first_order(3.0, 923.9, 1.0, 9239.0);
        let grid = FrequencyGrid::from_points(vec![0.0, 60.0, 3250.0, 1e9]).unwrap();
        let c = weight_gain_curve(&g, &grid);
        assert_relative_eq!(c[0].1, 0.1, epsilon = 1e-12);
        assert!((c[1].1 - 0.102).abs() < 1e-3);
        assert!((c[2].1 - 1.0).abs() < 0.01);
        assert!((c[3].1 - 3.0).abs() < 1e-4);
    }

    #[test]
    fn decay_rate_of_first_order_loop() {
        let (wi, wo) = ids();
        // closed-loop pole at -2
        let sc = scenario(
            vec![SignalSpec::Doublet {
                amplitude: 1.0,
                width: 0.5,
                start: 0.0,
            }],
            10.0,
        );
        let tr = simulate(
            &first_order(),
            &Mat::from_element(1, 1, -1.0),
            &wi,
            &wo,
            &sc,
        )
        .unwrap();
        let rate = envelope_decay_rate(&tr.time, &tr.outputs[0], 1.0).unwrap();
        assert!((rate + 2.0).abs() < 0.05 * 2.0, "{rate}");
    }

    #[test]
    fn uncertainty_weight_shifts_static_loop() {
        // static weight 1 with delta = +1 doubles the measured output
        let (wi, wo) = ids();
        let mut sc = scenario(
            vec![SignalSpec::Step {
                amplitude: 1.0,
                start: 0.0,
            }],
            10.0,
        );
        sc.uncertainty = Some(UncertaintyInjection {
            weight: Section::Static { gain: 1.0 },
            channel: 0,
            sign: 1.0,
            scale: 1.0,
        });
        let tr = simulate(
            &first_order(),
            &Mat::from_element(1, 1, -1.0),
            &wi,
            &wo,
            &sc,
        )
        .unwrap();
        // y_meas = 2 y, y' = -y - (2 y - 1) -> y = 1/3, y_meas = 2/3
        assert!((tr.outputs[0].last().unwrap() - 2.0 / 3.0).abs() < 1e-3);
    }
}
