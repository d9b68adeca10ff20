//! Pairwise nu-gap distances and the central plant of a small plant family.

use rssd::vgap::{central_plant, nu_gap};
use rssd::{FrequencyGrid, Mat, PlantSet, StateSpacePlant};

fn siso(pole: f64, gain: f64, label: &str) -> rssd::Result<StateSpacePlant> {
    Ok(StateSpacePlant::strictly_proper(
        Mat::from_element(1, 1, pole),
        Mat::from_element(1, 1, gain),
        Mat::from_element(1, 1, 1.0),
    )?
    .with_label(label))
}

fn main() -> rssd::Result<()> {
    let grid = FrequencyGrid::logspace(1e-3, 1e3, 300)?;

    let k = |g: f64| {
        StateSpacePlant::static_gain(Mat::from_element(1, 1, g)).with_label(format!("k{g}"))
    };
    let statics = PlantSet::new(vec![k(0.5), k(1.0), k(2.0)])?;
    let cp = central_plant(&statics, &grid)?;
    println!(
        "static gains: central = {}, epsilon = {:.6}",
        statics.plants()[cp.index].label,
        cp.epsilon
    );

    let trio = PlantSet::new(vec![
        siso(1.0, 1.0, "p1")?,
        siso(0.9, 1.2, "p2")?,
        siso(1.1, 0.9, "p3")?,
    ])?;
    for (i, p) in trio.plants().iter().enumerate() {
        for q in &trio.plants()[i + 1..] {
            let r = nu_gap(p, q, &grid)?;
            println!(
                "delta({}, {}) = {:.6} (winding condition met: {})",
                p.label, q.label, r.value, r.condition_met
            );
        }
    }
    let cp = central_plant(&trio, &grid)?;
    println!(
        "unstable trio: central = {}, epsilon = {:.6}",
        trio.plants()[cp.index].label,
        cp.epsilon
    );
    Ok(())
}
