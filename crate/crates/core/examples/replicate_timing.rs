//! Wall time of fitting all five reference models to one simulated replicate.
//!
//! Usage: cargo run --release --example replicate_timing [scenario] [fast]

use bibasket::datagen::generate_trial;
use bibasket::mcmc::{max_split_rhat, run_posterior, McmcConfig};
use bibasket::models::{ModelKind, ModelSpec};
use bibasket::scenario::find_builtin;
use std::time::Instant;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let name = args.first().map_or("Global Null", String::as_str);
    let cfg = if args.iter().any(|a| a == "fast") { McmcConfig::fast() } else { McmcConfig::default() };
    let scenario = find_builtin(name).ok_or("unknown scenario")?;
    let data = generate_trial(&scenario, 1, 0)?;
    let total = Instant::now();
    for kind in ModelKind::ALL {
        let spec = ModelSpec::reference(kind, scenario.n_subtrials());
        let t = Instant::now();
        let draws = run_posterior(&data, &spec, &cfg)?;
        println!("{:<10} {:>7.3} s  max R-hat {:.3}", kind.name(), t.elapsed().as_secs_f64(), max_split_rhat(&draws));
    }
    println!("total      {:>7.3} s", total.elapsed().as_secs_f64());
    Ok(())
}
