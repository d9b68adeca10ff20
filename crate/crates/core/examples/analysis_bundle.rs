//! Sensitivity, uncertainty-bound and eigenvalue summaries for a controller.

use rssd::compensator::{BankSide, CompensatorBank, Section};
use rssd::eigassign::check_region;
use rssd::lti::augment_plant;
use rssd::margins::{disk_margin, uncertainty_bounds, ClosedLoop};
use rssd::{FrequencyGrid, Mat, StateSpacePlant};

fn main() -> rssd::Result<()> {
    let grid = FrequencyGrid::logspace(1e-3, 1e3, 300)?;
    let plant = StateSpacePlant::strictly_proper(
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
    )?;
    let w_in = CompensatorBank::new(BankSide::Input, vec![Section::Static { gain: 2.0 }])?;
    let w_out = CompensatorBank::new(
        BankSide::Output,
        vec![Section::first_order(1.0, 4.0, 1.0, 2.0)],
    )?;
    let aug = augment_plant(&w_out, &plant, &w_in)?;
    let k = Mat::from_element(1, 1, -1.5);

    let cl = ClosedLoop::new(&aug, &k)?;
    let spec = rssd::lti::spectrum_of(cl.state_matrix())?;
    for e in &spec {
        println!(
            "lambda = {:.4}, damping {:.3}, wn {:.3}",
            e.value, e.damping, e.natural_frequency
        );
    }
    println!(
        "all modes in damping region 0.3: {}",
        check_region(&spec, 0.3, None).pass
    );

    let u = uncertainty_bounds(&aug, &k, &grid)?;
    let [(out_min, w1), (inp_min, w2)] = u.minima();
    println!("tolerable output-multiplicative size >= {out_min:.4} (at {w1:.3} rad/s)");
    println!("tolerable inverse input-multiplicative size >= {inp_min:.4} (at {w2:.3} rad/s)");
    let m = disk_margin(&aug, &k, &grid)?;
    println!(
        "disk margins: +-{:.2} dB, +-{:.2} deg",
        m.mdgm_db, m.mdpm_deg
    );
    Ok(())
}
