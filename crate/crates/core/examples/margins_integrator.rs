//! Generalized stability margin and disk margins of simple loops.

use rssd::margins::{disk_margin, gsm, sensitivity_curves};
use rssd::{FrequencyGrid, Mat, StateSpacePlant};

fn main() -> rssd::Result<()> {
    let grid = FrequencyGrid::logspace(1e-4, 1e4, 400)?;
    let integrator = StateSpacePlant::strictly_proper(
        Mat::zeros(1, 1),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
    )?;
    // positive feedback: u = K y, so K = -1 closes 1/s into 1/(s+1)
    let k = Mat::from_element(1, 1, -1.0);
    println!(
        "b(1/s, -1) = {:.6} (1/sqrt 2 = {:.6})",
        gsm(&integrator, &k, &grid)?,
        0.5f64.sqrt()
    );

    let m = disk_margin(&integrator, &k, &grid)?;
    println!(
        "disk alpha = {:.4}, gain margin = {:.2} dB, phase margin = +-{:.2} deg",
        m.disk_alpha, m.mdgm_db, m.mdpm_deg
    );

    let s = sensitivity_curves(&integrator, &k, &grid)?;
    let (peak, at) = s.output.peak();
    println!("peak |S_o| = {:.4} at {:.3e} rad/s", peak, at);
    Ok(())
}
