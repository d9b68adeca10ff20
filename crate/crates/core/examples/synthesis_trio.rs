//! End-to-end two-level synthesis on three unstable first-order plants.

use rssd::compensator::CompensatorProblem;
use rssd::io::{read_json, PlantSetFile, RunConfig};
use rssd::synthesis::synthesize;

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
    let seed = cfg.seed.unwrap_or(7);
    let scp = rssd::ga::GaConfig {
        seed,
        ..cfg.outer.clone()
    };
    let inner = rssd::ga::GaConfig {
        seed: seed + 1,
        ..cfg.inner.clone()
    };
    let target = cfg.target.clone().expect("target");
    let report = synthesize(&problem, &target, &scp, &inner, &cfg.options)?;

    println!(
        "initial epsilon {:.6}, gap bound history {:?}",
        report.initial_epsilon, report.gap_bound_history
    );
    println!("feasible: {}", report.feasible);
    if let Some(k) = &report.gain {
        println!("K = {:?}", k.data);
    }
    for p in &report.plants {
        let gsm = p.margins.as_ref().map_or(0.0, |m| m.gsm);
        println!("{}: stable {}, gsm {:.4}", p.label, p.stable, gsm);
    }
    Ok(())
}
