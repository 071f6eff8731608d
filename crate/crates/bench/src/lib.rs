//! Fixtures shared by the benchmarks.

use packplan::catalog::{generate_synthetic, make_scenario, PreparedCatalog, SynthSpec};
use packplan::harness::{packing_step, EnvConfig, PackingEpisode};
use packplan::heuristics::Dbl;
use packplan::net::{step_input, StepInput};
use packplan::container::ContainerState;

pub fn catalog() -> PreparedCatalog {
    generate_synthetic(&SynthSpec::default(), 7).unwrap().prepare().unwrap()
}

/// A default-size container after `steps` deepest-bottom-left placements,
/// with the remaining buffer.
pub fn half_packed(cat: &PreparedCatalog, steps: usize) -> (ContainerState, StepInput) {
    let raw = generate_synthetic(&SynthSpec::default(), 7).unwrap();
    let scenario = make_scenario(&raw, 100, 10, 11).unwrap();
    let env = EnvConfig::default();
    let mut ep = PackingEpisode::new(cat, &scenario, &env).unwrap();
    let mut dbl = Dbl;
    for _ in 0..steps {
        if packing_step(&mut ep, &mut dbl).unwrap().is_none() {
            break;
        }
    }
    let step = step_input(ep.state(), ep.buffer(), cat.avoidance());
    (ep.state().clone(), step)
}
