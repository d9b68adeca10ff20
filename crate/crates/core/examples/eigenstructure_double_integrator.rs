//! Output-feedback eigenstructure assignment on a double integrator, with
//! and without an eigenvector entry constraint.

use num_complex::Complex64;
use rssd::eigassign::{assign, assignment_error, AssignedMode, EntryBound, EntryConstraint};
use rssd::Mat;

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn main() -> rssd::Result<()> {
    let a = Mat::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0]);
    let b = Mat::from_row_slice(2, 1, &[0.0, 1.0]);
    let c = Mat::identity(2, 2);

    let modes = vec![
        AssignedMode {
            value: Complex64::new(-1.0, 0.0),
            constraints: vec![],
        },
        AssignedMode {
            value: Complex64::new(-2.0, 0.0),
            constraints: vec![],
        },
    ];
    let res = assign(&a, &b, &c, &modes)?;
    let desired: Vec<Complex64> = modes.iter().map(|m| m.value).collect();
    println!("K = {:?}", rows(&res.gain));
    println!(
        "kappa(CR) = {:.3}, eigenvalue error = {:.2e}",
        res.kappa,
        assignment_error(&a, &b, &c, &res.gain, &desired)?
    );

    // a complex pair whose eigenvector has first entry pinned to 0.5
    let pair = vec![AssignedMode {
        value: Complex64::new(-1.0, 2.0),
        constraints: vec![EntryConstraint {
            bound: EntryBound {
                state: 0,
                re: [0.0, 1.0],
                im: [-1.0, 1.0],
            },
            value: Complex64::new(0.5, 0.0),
        }],
    }];
    let res = assign(&a, &b, &c, &pair)?;
    println!("complex pair K = {:?}", rows(&res.gain));
    println!("eigenvector columns R = {:?}", rows(&res.r));
    Ok(())
}
