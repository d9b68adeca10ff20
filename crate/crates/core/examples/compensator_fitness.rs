//! Evaluate compensator candidates against loop-shaping constraints and
//! report the resulting central-plant gap.

use rssd::compensator::CompensatorProblem;
use rssd::io::{read_json, PlantSetFile, RunConfig};

fn main() -> rssd::Result<()> {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("data");
    let set = read_json::<PlantSetFile>(&dir.join("trio_plants.json"))?.to_set()?;
    let cfg: RunConfig = read_json(&dir.join("trio_synth.json"))?;
    let problem = CompensatorProblem::new(
        set,
        cfg.constraints.clone(),
        cfg.input_bank.clone().expect("template"),
        cfg.output_bank.clone().expect("template"),
        cfg.grid.build()?,
    )?;
    // genes: input gain (a, b, c, d), output first-order section (a, b, c, d)
    for genes in [
        [0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 1.0],
        [0.0, 2.0, 0.0, 1.0, 1.0, 5.0, 1.0, 2.0],
        [0.0, 0.5, 0.0, 1.0, 0.5, 0.5, 2.0, 5.0],
    ] {
        let e = problem.evaluate(&genes);
        match &e.gap {
            Some(j) => println!(
                "genes {genes:?}: max gap = {:.6}, central plant {}",
                j.max_gap, j.cp_index
            ),
            None => println!("genes {genes:?}: infeasible, violations {:?}", e.violations),
        }
    }
    Ok(())
}
