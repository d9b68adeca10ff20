//! Linear closed-loop step response, checked against the closed-loop
//! eigenvalue and the steady-state formula.

use rssd::compensator::{BankSide, CompensatorBank};
use rssd::sim::{envelope_decay_rate, simulate, Scenario, SignalSpec};
use rssd::{Mat, StateSpacePlant};

fn main() -> rssd::Result<()> {
    let plant = StateSpacePlant::strictly_proper(
        Mat::from_element(1, 1, -1.0),
        Mat::from_element(1, 1, 1.0),
        Mat::from_element(1, 1, 1.0),
    )?;
    let k = Mat::from_element(1, 1, -1.0);
    let id_in = CompensatorBank::identity(BankSide::Input, 1);
    let id_out = CompensatorBank::identity(BankSide::Output, 1);
    let scenario = Scenario {
        name: "step".into(),
        reference: vec![SignalSpec::Step {
            amplitude: 1.0,
            start: 0.0,
        }],
        disturbance: vec![],
        uncertainty: None,
        dt: 1e-3,
        duration: 10.0,
        initial_state: None,
    };
    let tr = simulate(&plant, &k, &id_in, &id_out, &scenario)?;
    let y = &tr.outputs[0];
    println!("y(10) = {:.6} (expected 0.5 from S_o(0))", y[y.len() - 1]);

    let free = Scenario {
        reference: vec![],
        initial_state: Some(vec![1.0]),
        ..scenario
    };
    let tr = simulate(&plant, &k, &id_in, &id_out, &free)?;
    let rate = envelope_decay_rate(&tr.time, &tr.outputs[0], 0.0);
    println!(
        "free-response decay rate {:?} (closed-loop eigenvalue -2)",
        rate
    );
    Ok(())
}
