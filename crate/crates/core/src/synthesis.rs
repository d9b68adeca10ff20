//! Two-level synthesis driver.
//!
//! The outer search tunes the compensator banks to shrink the central
//! plant's maximum gap. Each time a feasible compensator pair beats the
//! current gap bound, the bound drops to that value and the inner search
//! tunes desired eigenvalues and eigenvector entries of the augmented central
//! plant, minimizing the four-block peak gain. The run succeeds as soon as
//! an inner candidate has `peak_gain < 1 / gap_bound` and survives
//! independent re-verification of every robust-stabilization condition.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::compensator::{CompensatorBank, CompensatorProblem, Interval};
use crate::eigassign::{
    allowable_subspace, check_region_target, compute_gain_with_kappa, select_vectors, AssignedMode,
    EigTarget, EntryConstraint, KAPPA_LIMIT,
};
use crate::error::{Error, Result};
use crate::ga::{GaConfig, GeneticSearch};
use crate::io::MatrixRecord;
use crate::linalg::Mat;
use crate::lti::{augment_plant, spectrum_of, EigenInfo, FrequencyGrid, PlantSet, StateSpacePlant};
use crate::margins::{disk_margin, gsm_of, linf_norm, ClosedLoop, MarginReport};
use crate::vgap::central_plant;

/// Penalty returned for genomes rejected by any assignment guard.
pub const PEAK_GAIN_PENALTY: f64 = f64::MAX;
/// Floor applied to the gap bound in the test `peak_gain < 1 / gap_bound`.
pub const GAP_BOUND_FLOOR: f64 = 1e-3;
/// Tolerance on assigned eigenvalues during re-verification.
pub const ASSIGN_TOL: f64 = 1e-6;

/// Gene layout of the inner search: per mode the real part, the imaginary
/// part for pairs, then each constrained entry (real part, and imaginary
/// part for pairs).
#[derive(Debug, Clone)]
pub struct GainGenome {
    target: EigTarget,
}

impl GainGenome {
    pub fn new(target: EigTarget) -> Self {
        Self { target }
    }

    pub fn target(&self) -> &EigTarget {
        &self.target
    }

    pub fn boxes(&self) -> Vec<Interval> {
        let mut out = Vec::new();
        for m in &self.target.modes {
            out.push(m.sigma);
            if let Some(w) = m.omega {
                out.push(w);
            }
            for e in &m.entries {
                out.push(e.re);
                if m.is_complex() {
                    out.push(e.im);
                }
            }
        }
        out
    }

    pub fn decode(&self, genes: &[f64]) -> Result<Vec<AssignedMode>> {
        let boxes = self.boxes();
        if genes.len() != boxes.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} genes, layout needs {}",
                genes.len(),
                boxes.len()
            )));
        }
        for (index, (&value, [lo, hi])) in genes.iter().zip(&boxes).enumerate() {
            if !(value >= *lo && value <= *hi) {
                return Err(Error::OutOfBox {
                    index,
                    value,
                    lo: *lo,
                    hi: *hi,
                });
            }
        }
        let mut it = genes.iter().copied();
        let mut next = || it.next().expect("length checked");
        let modes = self
            .target
            .modes
            .iter()
            .map(|m| {
                let sigma = next();
                let omega = if m.is_complex() { next() } else { 0.0 };
                let constraints = m
                    .entries
                    .iter()
                    .map(|&bound| {
                        let re = next();
                        let im = if m.is_complex() { next() } else { 0.0 };
                        EntryConstraint {
                            bound,
                            value: Complex64::new(re, im),
                        }
                    })
                    .collect();
                AssignedMode {
                    value: Complex64::new(sigma, omega),
                    constraints,
                }
            })
            .collect();
        Ok(modes)
    }

    /// Genes reproducing the given modes (inverse of [`decode`](Self::decode)).
    pub fn encode(&self, modes: &[AssignedMode]) -> Vec<f64> {
        let mut out = Vec::new();
        for (spec, m) in self.target.modes.iter().zip(modes) {
            out.push(m.value.re);
            if spec.is_complex() {
                out.push(m.value.im);
            }
            for c in &m.constraints {
                out.push(c.value.re);
                if spec.is_complex() {
                    out.push(c.value.im);
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct LoopGainEvaluation {
    /// Peak gain of the four-block operator, or [`PEAK_GAIN_PENALTY`].
    pub peak_gain: f64,
    pub gain: Option<Mat>,
    pub kappa: f64,
    pub modes: Vec<AssignedMode>,
    pub rejection: Option<String>,
}

impl LoopGainEvaluation {
    fn rejected(reason: impl Into<String>, modes: Vec<AssignedMode>) -> Self {
        Self {
            peak_gain: PEAK_GAIN_PENALTY,
            gain: None,
            kappa: f64::INFINITY,
            modes,
            rejection: Some(reason.into()),
        }
    }
}

/// Subspaces, vector selection, conditioned gain, damping-region test on the
/// full closed-loop spectrum, then the four-block peak gain.
pub fn loop_gain_fitness(
    p_cp: &StateSpacePlant,
    layout: &GainGenome,
    genes: &[f64],
    grid: &FrequencyGrid,
) -> LoopGainEvaluation {
    let modes = match layout.decode(genes) {
        Ok(m) => m,
        Err(e) => return LoopGainEvaluation::rejected(e.to_string(), Vec::new()),
    };
    let subspaces = match modes
        .iter()
        .map(|m| allowable_subspace(&p_cp.a, &p_cp.b, m.value))
        .collect::<Result<Vec<_>>>()
    {
        Ok(s) => s,
        Err(e) => return LoopGainEvaluation::rejected(e.to_string(), modes),
    };
    let (w, r) = match select_vectors(&subspaces, &modes) {
        Ok(x) => x,
        Err(e) => return LoopGainEvaluation::rejected(e.to_string(), modes),
    };
    let (gain, kappa) = match compute_gain_with_kappa(&w, &r, &p_cp.c) {
        Ok(x) => x,
        Err(e) => return LoopGainEvaluation::rejected(e.to_string(), modes),
    };
    let cl = match ClosedLoop::new(p_cp, &gain) {
        Ok(cl) => cl,
        Err(e) => return LoopGainEvaluation::rejected(e.to_string(), modes),
    };
    let spectrum = match spectrum_of(cl.state_matrix()) {
        Ok(s) => s,
        Err(e) => return LoopGainEvaluation::rejected(e.to_string(), modes),
    };
    if !check_region_target(&spectrum, layout.target()).pass {
        return LoopGainEvaluation::rejected(
            "closed-loop spectrum leaves the damping region",
            modes,
        );
    }
    match linf_norm(&cl.four_block, grid) {
        Ok((norm, _)) if norm.is_finite() => LoopGainEvaluation {
            peak_gain: norm,
            gain: Some(gain),
            kappa,
            modes,
            rejection: None,
        },
        Ok(_) => LoopGainEvaluation::rejected("unbounded four-block gain", modes),
        Err(e) => LoopGainEvaluation::rejected(e.to_string(), modes),
    }
}

/// Independent re-check of a candidate controller.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateCheck {
    /// Largest distance from a desired eigenvalue to the closed-loop spectrum.
    pub assignment_error: f64,
    pub assigned: bool,
    pub all_in_region: bool,
    /// Generalized stability margin of the central loop on a denser grid.
    pub gsm_cp: f64,
    pub margin_exceeds_bound: bool,
    pub all_plants_stable: bool,
    pub kappa: f64,
    pub well_conditioned: bool,
}

impl CertificateCheck {
    pub fn passed(&self) -> bool {
        self.assigned
            && self.all_in_region
            && self.margin_exceeds_bound
            && self.all_plants_stable
            && self.well_conditioned
    }
}

/// Grid with four times the points over the same span, for re-verification.
fn dense_grid(grid: &FrequencyGrid) -> FrequencyGrid {
    let pts = grid.points();
    let lo = pts.iter().copied().find(|&w| w > 0.0).unwrap_or(1e-3);
    let hi = pts[pts.len() - 1].max(lo * 10.0);
    FrequencyGrid::logspace(lo, hi, 4 * pts.len())
        .map(|g| g.with_refinement(grid.refine_depth, grid.rel_tol))
        .unwrap_or_else(|_| grid.clone())
}

pub fn verify_certificate(
    augmented: &PlantSet,
    cp_index: usize,
    gain: &Mat,
    desired: &[Complex64],
    target: &EigTarget,
    kappa: f64,
    gap_bound: f64,
    grid: &FrequencyGrid,
) -> Result<CertificateCheck> {
    let cp = &augmented.plants()[cp_index];
    let cl = ClosedLoop::new(cp, gain)?;
    let spectrum = spectrum_of(cl.state_matrix())?;
    let mut err: f64 = 0.0;
    for &d in desired {
        for z in [d, d.conj()] {
            let nearest = spectrum
                .iter()
                .map(|e| (e.value - z).norm())
                .fold(f64::INFINITY, f64::min);
            err = err.max(nearest);
        }
    }
    let gsm_cp = gsm_of(&cl, &dense_grid(grid))?;
    let mut all_stable = true;
    for p in augmented.plants() {
        let ok = ClosedLoop::new(p, gain).map(|c| c.stable).unwrap_or(false);
        all_stable &= ok;
    }
    Ok(CertificateCheck {
        assignment_error: err,
        assigned: err <= ASSIGN_TOL,
        all_in_region: check_region_target(&spectrum, target).pass,
        gsm_cp,
        margin_exceeds_bound: gsm_cp > gap_bound,
        all_plants_stable: all_stable,
        kappa,
        well_conditioned: kappa < KAPPA_LIMIT,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Trigger the inner search at most once per outer generation (for its
    /// best individual) instead of after every qualifying evaluation.
    #[serde(default)]
    pub per_generation: bool,
    #[serde(default = "default_floor")]
    pub gap_bound_floor: f64,
}

fn default_floor() -> f64 {
    GAP_BOUND_FLOOR
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        Self {
            per_generation: false,
            gap_bound_floor: GAP_BOUND_FLOOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantLoopReport {
    pub label: String,
    pub stable: bool,
    pub spectrum: Vec<EigenInfo>,
    pub margins: Option<MarginReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnerRun {
    pub gap_bound: f64,
    pub cp_index: usize,
    pub generations: usize,
    pub best_peak_gain: f64,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthesisReport {
    pub feasible: bool,
    pub gain: Option<MatrixRecord>,
    pub w_in: Option<CompensatorBank>,
    pub w_out: Option<CompensatorBank>,
    /// Central-plant maximum gap of the unaugmented set.
    pub initial_epsilon: f64,
    pub initial_central_index: usize,
    /// Gap bound at each inner-search invocation; strictly decreasing.
    pub gap_bound_history: Vec<f64>,
    pub inner_runs: Vec<InnerRun>,
    pub gap_bound: f64,
    pub peak_gain: Option<f64>,
    pub cp_index: Option<usize>,
    pub desired: Vec<Complex64>,
    pub certificate: Option<CertificateCheck>,
    pub plants: Vec<PlantLoopReport>,
    pub outer_generations: usize,
    pub outer_seed: u64,
    pub inner_seed: u64,
}

fn inner_seed(base: u64, invocation: usize) -> u64 {
    base ^ (invocation as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15)
}

struct InnerOutcome {
    run: InnerRun,
    found: Option<(LoopGainEvaluation, CertificateCheck)>,
}

#[allow(clippy::too_many_arguments)]
fn run_inner(
    augmented: &PlantSet,
    cp_index: usize,
    layout: &GainGenome,
    cfg: &GaConfig,
    seed: u64,
    gap_bound: f64,
    floor: f64,
    grid: &FrequencyGrid,
) -> Result<InnerOutcome> {
    let cp = &augmented.plants()[cp_index];
    let threshold = 1.0 / gap_bound.max(floor);
    let mut run = InnerRun {
        gap_bound,
        cp_index,
        generations: 0,
        best_peak_gain: f64::INFINITY,
        success: false,
    };
    if cfg.generations == 0 {
        return Ok(InnerOutcome { run, found: None });
    }
    let mut ga = GeneticSearch::new(
        GaConfig {
            seed,
            ..cfg.clone()
        },
        layout.boxes(),
    )?;
    for _ in 0..cfg.generations {
        let evals: Vec<LoopGainEvaluation> = ga
            .ask()
            .par_iter()
            .map(|g| loop_gain_fitness(cp, layout, g, grid))
            .collect();
        run.generations += 1;
        for e in &evals {
            run.best_peak_gain = run.best_peak_gain.min(e.peak_gain);
            if !(e.peak_gain < threshold) {
                continue;
            }
            let Some(gain) = &e.gain else { continue };
            let desired: Vec<Complex64> = e.modes.iter().map(|m| m.value).collect();
            let check = verify_certificate(
                augmented,
                cp_index,
                gain,
                &desired,
                layout.target(),
                e.kappa,
                gap_bound,
                grid,
            )?;
            if check.passed() {
                run.success = true;
                return Ok(InnerOutcome {
                    run,
                    found: Some((e.clone(), check)),
                });
            }
        }
        let fitness: Vec<f64> = evals.iter().map(|e| e.peak_gain).collect();
        ga.tell(&fitness)?;
    }
    Ok(InnerOutcome { run, found: None })
}

fn loop_reports(
    augmented: &PlantSet,
    gain: &Mat,
    grid: &FrequencyGrid,
) -> Result<Vec<PlantLoopReport>> {
    augmented
        .plants()
        .iter()
        .map(|p| {
            let cl = ClosedLoop::new(p, gain)?;
            let spectrum = spectrum_of(cl.state_matrix())?;
            let margins = if cl.stable {
                Some(disk_margin(p, gain, grid)?)
            } else {
                None
            };
            Ok(PlantLoopReport {
                label: p.label.clone(),
                stable: cl.stable,
                spectrum,
                margins,
            })
        })
        .collect()
}

/// Run the two-level search. Infeasibility is a report state, not an error.
pub fn synthesize(
    problem: &CompensatorProblem,
    target: &EigTarget,
    outer_cfg: &GaConfig,
    inner_cfg: &GaConfig,
    opts: &SynthesisOptions,
) -> Result<SynthesisReport> {
    let set = &problem.set;
    let min_states = set.plants().iter().map(|p| p.states()).min().unwrap_or(0);
    target.validate(min_states, set.outputs())?;
    outer_cfg.validate()?;
    inner_cfg.validate()?;
    let grid = &problem.grid;
    let layout = GainGenome::new(target.clone());

    let initial = central_plant(set, grid)?;
    let mut report = SynthesisReport {
        feasible: false,
        gain: None,
        w_in: None,
        w_out: None,
        initial_epsilon: initial.epsilon,
        initial_central_index: initial.index,
        gap_bound_history: Vec::new(),
        inner_runs: Vec::new(),
        gap_bound: initial.epsilon.max(opts.gap_bound_floor),
        peak_gain: None,
        cp_index: None,
        desired: Vec::new(),
        certificate: None,
        plants: Vec::new(),
        outer_generations: 0,
        outer_seed: outer_cfg.seed,
        inner_seed: inner_cfg.seed,
    };
    if outer_cfg.generations == 0 {
        return Ok(report);
    }

    let mut ga = GeneticSearch::new(outer_cfg.clone(), problem.boxes())?;
    for _ in 0..outer_cfg.generations {
        let evals: Vec<_> = ga.ask().par_iter().map(|g| problem.evaluate(g)).collect();
        report.outer_generations += 1;

        let mut qualifying: Vec<usize> = (0..evals.len())
            .filter(|&i| evals[i].gap.is_some())
            .collect();
        if opts.per_generation {
            qualifying.sort_by(|&a, &b| {
                evals[a]
                    .fitness
                    .total_cmp(&evals[b].fitness)
                    .then(a.cmp(&b))
            });
            qualifying.truncate(1);
        }
        for i in qualifying {
            let e = &evals[i];
            if !(e.fitness < report.gap_bound) {
                continue;
            }
            let gap = e.gap.as_ref().expect("filtered");
            let (w_in, w_out) = e.banks.clone().expect("feasible genomes carry banks");
            report.gap_bound = gap.max_gap;
            report.gap_bound_history.push(gap.max_gap);

            let augmented = PlantSet::new(
                set.plants()
                    .iter()
                    .map(|p| augment_plant(&w_out, p, &w_in))
                    .collect::<Result<Vec<_>>>()?,
            )?;
            let seed = inner_seed(inner_cfg.seed, report.inner_runs.len());
            let outcome = run_inner(
                &augmented,
                gap.cp_index,
                &layout,
                inner_cfg,
                seed,
                gap.max_gap,
                opts.gap_bound_floor,
                grid,
            )?;
            report.inner_runs.push(outcome.run);
            if let Some((found, check)) = outcome.found {
                let gain = found.gain.expect("successful candidates carry a gain");
                report.feasible = true;
                report.plants = loop_reports(&augmented, &gain, grid)?;
                report.gain = Some(MatrixRecord::from_mat(&gain));
                report.w_in = Some(w_in);
                report.w_out = Some(w_out);
                report.peak_gain = Some(found.peak_gain);
                report.cp_index = Some(gap.cp_index);
                report.desired = found.modes.iter().map(|m| m.value).collect();
                report.certificate = Some(check);
                return Ok(report);
            }
        }
        let fitness: Vec<f64> = evals.iter().map(|e| e.fitness).collect();
        ga.tell(&fitness)?;
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::eigassign::ModeSpec;
    use approx::assert_relative_eq;

    fn integrator() -> StateSpacePlant {
        StateSpacePlant::strictly_proper(
            Mat::from_element(1, 1, 0.0),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap()
    }

    fn real_target(lo: f64, hi: f64) -> EigTarget {
        EigTarget {
            modes: vec![ModeSpec {
                sigma: [lo, hi],
                omega: None,
                entries: Vec::new(),
            }],
            zeta_min: 0.3,
            sigma_max: None,
        }
    }

    #[test]
    fn j2_of_integrator_loop() {
        let layout = GainGenome::new(real_target(-5.0, -0.1));
        let e = loop_gain_fitness(&integrator(), &layout, &[-1.0], &FrequencyGrid::default());
        assert!(e.rejection.is_none(), "{:?}", e.rejection);
        assert_relative_eq!(e.gain.unwrap()[(0, 0)], -1.0, epsilon = 1e-12);
        assert_relative_eq!(e.peak_gain, 2f64.sqrt(), epsilon = 1e-9);
    }

    #[test]
    fn out_of_box_and_duplicate_modes_are_penalized() {
        let layout = GainGenome::new(real_target(-5.0, -0.1));
        let e = loop_gain_fitness(&integrator(), &layout, &[0.5], &FrequencyGrid::default());
        assert_eq!(e.peak_gain, PEAK_GAIN_PENALTY);

        // two identical real eigenvalues on a 2-output double integrator
        let di = StateSpacePlant::strictly_proper(
            Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]),
            Mat::from_row_slice(2, 1, &[0.0, 1.0]),
            Mat::identity(2, 2),
        )
        .unwrap();
        let mut t = real_target(-5.0, -0.1);
        t.modes.push(t.modes[0].clone());
        let layout = GainGenome::new(t);
        let e = loop_gain_fitness(&di, &layout, &[-1.0, -1.0], &FrequencyGrid::default());
        assert_eq!(e.peak_gain, PEAK_GAIN_PENALTY);
        assert!(e.rejection.unwrap().contains("ill-conditioned"));
    }

    #[test]
    fn genome_round_trip() {
        let t = EigTarget {
            modes: vec![
                ModeSpec {
                    sigma: [-3.0, -1.0],
                    omega: Some([0.5, 2.0]),
                    entries: vec![crate::eigassign::EntryBound {
                        state: 0,
                        re: [-0.1, 0.1],
                        im: [-0.2, 0.2],
                    }],
                },
                ModeSpec {
                    sigma: [-9.0, -4.0],
                    omega: None,
                    entries: Vec::new(),
                },
            ],
            zeta_min: 0.3,
            sigma_max: None,
        };
        let layout = GainGenome::new(t);
        assert_eq!(layout.boxes().len(), 5);
        let genes = vec![-2.0, 1.0, 0.05, -0.1, -5.0];
        let modes = layout.decode(&genes).unwrap();
        assert_eq!(modes[0].value, Complex64::new(-2.0, 1.0));
        assert_eq!(modes[0].constraints[0].value, Complex64::new(0.05, -0.1));
        assert_eq!(layout.encode(&modes), genes);
    }
}
