//! Diagonal pre/post compensators, their loop-shaping constraints and the
//! central-plant gap objective of the augmented plant set.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMat};
use crate::lti::{augment_plant, FrequencyGrid, PlantSet, StateSpacePlant};
use crate::vgap::{central_plant, CentralPlantResult};

/// One diagonal channel: a pure gain or `(a s + b) / (c s + d)` with `c != 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Section {
    Static { gain: f64 },
    FirstOrder { a: f64, b: f64, c: f64, d: f64 },
}

impl Section {
    pub fn first_order(a: f64, b: f64, c: f64, d: f64) -> Self {
        Section::FirstOrder { a, b, c, d }
    }

    pub fn eval(&self, s: Complex64) -> Complex64 {
        match *self {
            Section::Static { gain } => Complex64::new(gain, 0.0),
            Section::FirstOrder { a, b, c, d } => (s * a + b) / (s * c + d),
        }
    }

    pub fn dc_gain(&self) -> f64 {
        match *self {
            Section::Static { gain } => gain,
            Section::FirstOrder { b, d, .. } => b / d,
        }
    }

    pub fn hf_gain(&self) -> f64 {
        match *self {
            Section::Static { gain } => gain,
            Section::FirstOrder { a, c, .. } => a / c,
        }
    }

    pub fn pole(&self) -> Option<f64> {
        match *self {
            Section::FirstOrder { c, d, .. } if c != 0.0 => Some(-d / c),
            _ => None,
        }
    }

    pub fn zero(&self) -> Option<f64> {
        match *self {
            Section::FirstOrder { a, b, .. } if a != 0.0 => Some(-b / a),
            _ => None,
        }
    }

    /// `[a, b, c, d]`; a static gain `g` reads as `(0 s + g) / (0 s + 1)`.
    pub fn coefficients(&self) -> [f64; 4] {
        match *self {
            Section::Static { gain } => [0.0, gain, 0.0, 1.0],
            Section::FirstOrder { a, b, c, d } => [a, b, c, d],
        }
    }

    fn validate(&self, index: usize) -> Result<()> {
        if !self.coefficients().iter().all(|x| x.is_finite()) {
            return Err(Error::NonFinite(format!("section {index}")));
        }
        if let Section::FirstOrder { c, d, .. } = *self {
            if c == 0.0 {
                return Err(Error::ImproperSection { index });
            }
            let pole = -d / c;
            if !(pole < 0.0) {
                return Err(Error::UnstableSection { index, pole });
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BankSide {
    Input,
    Output,
}

/// Diagonal bank of stable sections, one per plant input or output channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBank")]
pub struct CompensatorBank {
    side: BankSide,
    sections: Vec<Section>,
}

#[derive(Deserialize)]
struct RawBank {
    side: BankSide,
    sections: Vec<Section>,
}

impl TryFrom<RawBank> for CompensatorBank {
    type Error = Error;

    fn try_from(raw: RawBank) -> Result<Self> {
        Self::new(raw.side, raw.sections)
    }
}

impl CompensatorBank {
    pub fn new(side: BankSide, sections: Vec<Section>) -> Result<Self> {
        for (i, s) in sections.iter().enumerate() {
            s.validate(i)?;
        }
        Ok(Self { side, sections })
    }

    pub fn identity(side: BankSide, channels: usize) -> Self {
        Self {
            side,
            sections: vec![Section::Static { gain: 1.0 }; channels],
        }
    }

    pub fn len(&self) -> usize {
        self.sections.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sections.is_empty()
    }

    /// Number of dynamic sections, i.e. realization states.
    pub fn states(&self) -> usize {
        self.sections
            .iter()
            .filter(|s| matches!(s, Section::FirstOrder { .. }))
            .count()
    }

    pub fn sections(&self) -> &[Section] {
        &self.sections
    }

    pub fn side(&self) -> BankSide {
        self.side
    }

    pub fn eval(&self, s: Complex64) -> CMat {
        let k = self.len();
        let mut m = CMat::zeros(k, k);
        for (i, sec) in self.sections.iter().enumerate() {
            m[(i, i)] = sec.eval(s);
        }
        m
    }

    pub fn freq_response(&self, omega: f64) -> CMat {
        self.eval(Complex64::new(0.0, omega))
    }
}

pub type Interval = [f64; 2];

/// Search box for the four coefficients of one section. A section whose `a`
/// and `c` boxes are both `[0, 0]` decodes as the static gain `b / d`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SectionBox {
    pub a: Interval,
    pub b: Interval,
    pub c: Interval,
    pub d: Interval,
}

impl SectionBox {
    pub fn is_static(&self) -> bool {
        self.a == [0.0, 0.0] && self.c == [0.0, 0.0]
    }

    pub fn intervals(&self) -> [Interval; 4] {
        [self.a, self.b, self.c, self.d]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BankTemplate {
    pub side: BankSide,
    pub sections: Vec<SectionBox>,
}

impl BankTemplate {
    pub fn gene_count(&self) -> usize {
        4 * self.sections.len()
    }

    pub fn boxes(&self) -> Vec<Interval> {
        self.sections.iter().flat_map(|s| s.intervals()).collect()
    }
}

/// Genome layout: four genes `(a, b, c, d)` per section, in channel order.
pub fn decode_bank(genes: &[f64], template: &BankTemplate) -> Result<CompensatorBank> {
    if genes.len() != template.gene_count() {
        return Err(Error::DimensionMismatch(format!(
            "{} genes for {} sections",
            genes.len(),
            template.sections.len()
        )));
    }
    for (index, (&value, [lo, hi])) in genes.iter().zip(template.boxes()).enumerate() {
        if !(value >= lo && value <= hi) {
            return Err(Error::OutOfBox {
                index,
                value,
                lo,
                hi,
            });
        }
    }
    let sections = template
        .sections
        .iter()
        .zip(genes.chunks(4))
        .enumerate()
        .map(|(i, (bx, g))| {
            if g[3] == 0.0 {
                return Err(Error::UnstableSection {
                    index: i,
                    pole: if bx.is_static() { f64::INFINITY } else { 0.0 },
                });
            }
            Ok(if bx.is_static() {
                Section::Static { gain: g[1] / g[3] }
            } else {
                Section::first_order(g[0], g[1], g[2], g[3])
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CompensatorBank::new(template.side, sections)
}

/// Crossover band over which `sigma_min` of every augmented plant must
/// exceed 0 dB.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum BandSpec {
    Shared { lo: f64, hi: f64 },
    PerPlant { edges: Vec<Interval> },
}

impl BandSpec {
    fn for_plant(&self, i: usize) -> Option<Interval> {
        match self {
            BandSpec::Shared { lo, hi } => Some([*lo, *hi]),
            BandSpec::PerPlant { edges } => edges.get(i).copied(),
        }
    }

    pub fn validate(&self, plants: usize) -> Result<()> {
        let bands: Vec<Interval> = match self {
            BandSpec::Shared { lo, hi } => vec![[*lo, *hi]],
            BandSpec::PerPlant { edges } => {
                if edges.len() != plants {
                    return Err(Error::InvalidConfig(format!(
                        "{} band edges for {plants} plants",
                        edges.len()
                    )));
                }
                edges.clone()
            }
        };
        for [lo, hi] in bands {
            if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi) {
                return Err(Error::InvalidConfig(format!("band [{lo}, {hi}]")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoopShapeConstraints {
    /// Floor on `sigma_min` of every augmented plant at DC, in dB.
    #[serde(default)]
    pub dc_floor_db: Option<f64>,
    #[serde(default)]
    pub band: Option<BandSpec>,
    /// Relative distance below which a compensator root is taken to cancel
    /// a plant pole or zero.
    #[serde(default = "default_cancellation_tol")]
    pub cancellation_tol: f64,
}

fn default_cancellation_tol() -> f64 {
    1e-4
}

impl Default for LoopShapeConstraints {
    fn default() -> Self {
        Self {
            dc_floor_db: None,
            band: None,
            cancellation_tol: default_cancellation_tol(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintViolation {
    DcFloor {
        plant: usize,
        sigma_min_db: f64,
        floor_db: f64,
    },
    Band {
        plant: usize,
        omega: f64,
        sigma_min_db: f64,
    },
    Cancellation {
        plant: usize,
        compensator_root: f64,
        plant_root: Complex64,
    },
}

fn db(x: f64) -> f64 {
    20.0 * x.log10()
}

/// `sigma_min` of `plant(j omega)`; at an imaginary-axis pole the response
/// is unbounded in every direction that reaches it, so nudge off the axis.
fn sigma_min_at(plant: &StateSpacePlant, omega: f64) -> Result<f64> {
    match plant.freq_response(omega) {
        Ok(g) => Ok(linalg::sigma_min(&g)),
        Err(Error::SingularAtFrequency { .. }) => {
            let nudged = omega + 1e-8 * omega.abs().max(1.0);
            Ok(linalg::sigma_min(&plant.freq_response(nudged)?))
        }
        Err(e) => Err(e),
    }
}

/// Poles and transmission zeros of each plant, cached for cancellation checks.
#[derive(Debug, Clone)]
pub struct PlantRoots {
    pub roots: Vec<Vec<Complex64>>,
}

impl PlantRoots {
    pub fn of(set: &PlantSet) -> Result<Self> {
        let roots = set
            .plants()
            .iter()
            .map(|p| {
                let mut r = p.poles()?;
                r.extend(p.transmission_zeros()?);
                Ok(r)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { roots })
    }
}

pub fn check_constraints(
    w_in: &CompensatorBank,
    w_out: &CompensatorBank,
    set: &PlantSet,
    constraints: &LoopShapeConstraints,
    grid: &FrequencyGrid,
) -> Result<Vec<ConstraintViolation>> {
    check_constraints_cached(w_in, w_out, set, &PlantRoots::of(set)?, constraints, grid)
}

pub fn check_constraints_cached(
    w_in: &CompensatorBank,
    w_out: &CompensatorBank,
    set: &PlantSet,
    roots: &PlantRoots,
    constraints: &LoopShapeConstraints,
    grid: &FrequencyGrid,
) -> Result<Vec<ConstraintViolation>> {
    let mut out = Vec::new();
    let comp_roots: Vec<f64> = w_in
        .sections()
        .iter()
        .chain(w_out.sections())
        .flat_map(|s| [s.pole(), s.zero()])
        .flatten()
        .collect();
    for (i, plant) in set.plants().iter().enumerate() {
        for &cr in &comp_roots {
            for &pr in &roots.roots[i] {
                let dist = (Complex64::new(cr, 0.0) - pr).norm();
                if dist <= constraints.cancellation_tol * pr.norm().max(1.0) {
                    out.push(ConstraintViolation::Cancellation {
                        plant: i,
                        compensator_root: cr,
                        plant_root: pr,
                    });
                }
            }
        }
        if constraints.dc_floor_db.is_none() && constraints.band.is_none() {
            continue;
        }
        let aug = augment_plant(w_out, plant, w_in)?;
        if let Some(floor_db) = constraints.dc_floor_db {
            let s = db(sigma_min_at(&aug, 0.0)?);
            if !(s > floor_db) {
                out.push(ConstraintViolation::DcFloor {
                    plant: i,
                    sigma_min_db: s,
                    floor_db,
                });
            }
        }
        if let Some([lo, hi]) = constraints.band.as_ref().and_then(|b| b.for_plant(i)) {
            let pts = std::iter::once(lo)
                .chain(grid.points().iter().copied().filter(|&w| w > lo && w < hi))
                .chain(std::iter::once(hi));
            for w in pts {
                let s = db(sigma_min_at(&aug, w)?);
                if !(s > 0.0) {
                    out.push(ConstraintViolation::Band {
                        plant: i,
                        omega: w,
                        sigma_min_db: s,
                    });
                    break;
                }
            }
        }
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct GapEvaluation {
    pub max_gap: f64,
    pub cp_index: usize,
    pub augmented_cp: StateSpacePlant,
    pub central: CentralPlantResult,
}

/// Maximum gap of the central plant of `{W_out P_i W_in}`.
pub fn gap_fitness(
    w_in: &CompensatorBank,
    w_out: &CompensatorBank,
    set: &PlantSet,
    grid: &FrequencyGrid,
) -> Result<GapEvaluation> {
    let augmented = PlantSet::new(
        set.plants()
            .iter()
            .map(|p| augment_plant(w_out, p, w_in))
            .collect::<Result<Vec<_>>>()?,
    )?;
    let central = central_plant(&augmented, grid)?;
    Ok(GapEvaluation {
        max_gap: central.epsilon,
        cp_index: central.index,
        augmented_cp: augmented.plants()[central.index].clone(),
        central,
    })
}

/// Compensator search problem: genome = input-bank genes then output-bank
/// genes.
#[derive(Debug, Clone)]
pub struct CompensatorProblem {
    pub set: PlantSet,
    pub constraints: LoopShapeConstraints,
    pub input: BankTemplate,
    pub output: BankTemplate,
    pub grid: FrequencyGrid,
    roots: PlantRoots,
}

#[derive(Debug, Clone)]
pub struct CompensatorEvaluation {
    /// Maximum central-plant gap when feasible, else `1 + number of violations`.
    pub fitness: f64,
    pub banks: Option<(CompensatorBank, CompensatorBank)>,
    pub violations: Vec<ConstraintViolation>,
    pub gap: Option<GapEvaluation>,
}

impl CompensatorProblem {
    pub fn new(
        set: PlantSet,
        constraints: LoopShapeConstraints,
        input: BankTemplate,
        output: BankTemplate,
        grid: FrequencyGrid,
    ) -> Result<Self> {
        if input.sections.len() != set.inputs() || input.side != BankSide::Input {
            return Err(Error::InvalidConfig(format!(
                "input template needs {} input sections",
                set.inputs()
            )));
        }
        if output.sections.len() != set.outputs() || output.side != BankSide::Output {
            return Err(Error::InvalidConfig(format!(
                "output template needs {} output sections",
                set.outputs()
            )));
        }
        for [lo, hi] in input.boxes().into_iter().chain(output.boxes()) {
            if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
                return Err(Error::InvalidConfig(format!(
                    "coefficient box [{lo}, {hi}]"
                )));
            }
        }
        if let Some(band) = &constraints.band {
            band.validate(set.len())?;
        }
        let roots = PlantRoots::of(&set)?;
        Ok(Self {
            set,
            constraints,
            input,
            output,
            grid,
            roots,
        })
    }

    pub fn boxes(&self) -> Vec<Interval> {
        let mut b = self.input.boxes();
        b.extend(self.output.boxes());
        b
    }

    pub fn decode(&self, genes: &[f64]) -> Result<(CompensatorBank, CompensatorBank)> {
        let k = self.input.gene_count();
        if genes.len() != k + self.output.gene_count() {
            return Err(Error::DimensionMismatch(format!(
                "{} compensator genes",
                genes.len()
            )));
        }
        Ok((
            decode_bank(&genes[..k], &self.input)?,
            decode_bank(&genes[k..], &self.output)?,
        ))
    }

    pub fn evaluate(&self, genes: &[f64]) -> CompensatorEvaluation {
        let infeasible = |count: usize, violations| CompensatorEvaluation {
            fitness: 1.0 + count as f64,
            banks: None,
            violations,
            gap: None,
        };
        let Ok((w_in, w_out)) = self.decode(genes) else {
            return infeasible(1, Vec::new());
        };
        let violations = match check_constraints_cached(
            &w_in,
            &w_out,
            &self.set,
            &self.roots,
            &self.constraints,
            &self.grid,
        ) {
            Ok(v) => v,
            Err(_) => return infeasible(1, Vec::new()),
        };
        if !violations.is_empty() {
            let mut e = infeasible(violations.len(), violations);
            e.banks = Some((w_in, w_out));
            return e;
        }
        match gap_fitness(&w_in, &w_out, &self.set, &self.grid) {
            Ok(gap) => CompensatorEvaluation {
                fitness: gap.max_gap,
                banks: Some((w_in, w_out)),
                violations,
                gap: Some(gap),
            },
            Err(_) => infeasible(1, Vec::new()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::lti::realize_bank;
    use approx::assert_relative_eq;

    fn gain(k: f64) -> StateSpacePlant {
        StateSpacePlant::static_gain(Mat::from_element(1, 1, k))
    }

    fn bx(a: Interval, b: Interval, c: Interval, d: Interval) -> SectionBox {
        SectionBox { a, b, c, d }
    }

    #[test]
    fn realize_first_order_section() {
        let bank = CompensatorBank::new(
            BankSide::Input,
            vec![Section::first_order(1.0, 7.36, 0.007, 10.1)],
        )
        .unwrap();
        let ss = realize_bank(&bank).unwrap();
        assert_eq!(ss.states(), 1);
        let dc = ss.freq_response(0.0).unwrap()[(0, 0)].re;
        assert_relative_eq!(dc, 7.36 / 10.1, epsilon = 1e-12);
        assert_relative_eq!(ss.d[(0, 0)], 1.0 / 0.007, epsilon = 1e-9);
        let w = 37.0;
        let direct = bank.freq_response(w)[(0, 0)];
        let realized = ss.freq_response(w).unwrap()[(0, 0)];
        assert!((direct - realized).norm() < 1e-10 * direct.norm());
    }

    #[test]
    fn improper_and_unstable_sections_rejected() {
        let r = CompensatorBank::new(
            BankSide::Input,
            vec![Section::first_order(0.0, 1.0, 0.0, 1.0)],
        );
        assert!(matches!(r, Err(Error::ImproperSection { index: 0 })));
        let r = CompensatorBank::new(
            BankSide::Input,
            vec![Section::first_order(1.0, 1.0, -1.0, 1.0)],
        );
        assert!(matches!(r, Err(Error::UnstableSection { .. })));
    }

    #[test]
    fn static_gain_section_has_no_state() {
        let bank =
            CompensatorBank::new(BankSide::Output, vec![Section::Static { gain: 5.0 }]).unwrap();
        let ss = realize_bank(&bank).unwrap();
        assert_eq!(ss.states(), 0);
        assert_eq!(ss.d[(0, 0)], 5.0);
    }

    #[test]
    fn decode_examples() {
        let t = BankTemplate {
            side: BankSide::Input,
            sections: vec![bx([0.0, 2.0], [0.0, 10.0], [-1.0, 1.0], [-20.0, 20.0])],
        };
        let bank = decode_bank(&[1.0, 7.36, 0.007, 10.1], &t).unwrap();
        assert_eq!(
            bank.sections()[0],
            Section::first_order(1.0, 7.36, 0.007, 10.1)
        );
        assert!(decode_bank(&[1.0, 7.36, 0.007, 0.0], &t).is_err());
        assert!(matches!(
            decode_bank(&[1.0, 7.36, -0.5, 10.0], &t),
            Err(Error::UnstableSection { .. })
        ));
        assert!(matches!(
            decode_bank(&[3.0, 7.36, 0.5, 10.0], &t),
            Err(Error::OutOfBox { index: 0, .. })
        ));
        let st = BankTemplate {
            side: BankSide::Input,
            sections: vec![bx([0.0, 0.0], [0.0, 10.0], [0.0, 0.0], [0.5, 2.0])],
        };
        let bank = decode_bank(&[0.0, 5.0, 0.0, 1.0], &st).unwrap();
        assert_eq!(bank.sections()[0], Section::Static { gain: 5.0 });
    }

    #[test]
    fn cancellation_detected() {
        // plant pole at 1 + 1e-9, compensator zero at exactly 1
        let plant = StateSpacePlant::strictly_proper(
            Mat::from_element(1, 1, 1.0 + 1e-9),
            Mat::from_element(1, 1, 1.0),
            Mat::from_element(1, 1, 1.0),
        )
        .unwrap();
        let set = PlantSet::new(vec![plant]).unwrap();
        let w_in = CompensatorBank::new(
            BankSide::Input,
            vec![Section::first_order(1.0, -1.0, 1.0, 2.0)],
        )
        .unwrap();
        let w_out = CompensatorBank::identity(BankSide::Output, 1);
        let cons = LoopShapeConstraints {
            cancellation_tol: 1e-6,
            ..Default::default()
        };
        let v = check_constraints(&w_in, &w_out, &set, &cons, &FrequencyGrid::default()).unwrap();
        assert_eq!(v.len(), 1);
        assert!(matches!(v[0], ConstraintViolation::Cancellation { .. }));
    }

    #[test]
    fn identity_banks_pass_when_plant_meets_specs() {
        let set = PlantSet::new(vec![gain(10.0), gain(4.0)]).unwrap();
        let id_in = CompensatorBank::identity(BankSide::Input, 1);
        let id_out = CompensatorBank::identity(BankSide::Output, 1);
        let cons = LoopShapeConstraints {
            dc_floor_db: Some(6.0),
            band: Some(BandSpec::Shared { lo: 0.1, hi: 50.0 }),
            ..Default::default()
        };
        let g = FrequencyGrid::default();
        assert!(check_constraints(&id_in, &id_out, &set, &cons, &g)
            .unwrap()
            .is_empty());
        let low = PlantSet::new(vec![gain(1.5)]).unwrap();
        let v = check_constraints(&id_in, &id_out, &low, &cons, &g).unwrap();
        assert!(matches!(v[0], ConstraintViolation::DcFloor { .. }));
    }

    #[test]
    fn j1_of_gain_trio_and_singleton() {
        let g = FrequencyGrid::default();
        let set = PlantSet::new(vec![gain(0.5), gain(1.0), gain(2.0)]).unwrap();
        let id_in = CompensatorBank::identity(BankSide::Input, 1);
        let id_out = CompensatorBank::identity(BankSide::Output, 1);
        let e = gap_fitness(&id_in, &id_out, &set, &g).unwrap();
        assert_eq!(e.cp_index, 1);
        assert_relative_eq!(e.max_gap, 0.1f64.sqrt(), epsilon = 1e-9);

        let single = PlantSet::new(vec![gain(3.0)]).unwrap();
        let w = CompensatorBank::new(
            BankSide::Input,
            vec![Section::first_order(1.0, 2.0, 1.0, 3.0)],
        )
        .unwrap();
        assert_eq!(gap_fitness(&w, &id_out, &single, &g).unwrap().max_gap, 0.0);
    }

    #[test]
    fn bank_json_validates() {
        let ok = r#"{"side":"input","sections":[{"kind":"static","gain":2.0}]}"#;
        let bank: CompensatorBank = serde_json::from_str(ok).unwrap();
        assert_eq!(bank.len(), 1);
        let bad = r#"{"side":"input","sections":[{"kind":"first_order","a":0,"b":1,"c":0,"d":1}]}"#;
        assert!(serde_json::from_str::<CompensatorBank>(bad).is_err());
    }
}
