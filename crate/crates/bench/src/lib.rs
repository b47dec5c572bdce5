//! Fixtures shared by the benchmarks.

use randadj::rng::{stream, Purpose};
use randadj::simulation::gen_scenario;
use randadj::{ExperimentData, PotentialPopulation, Scenario};

/// A scenario population of size `n` under a fixed seed.
pub fn population(scenario: Scenario, n: usize) -> PotentialPopulation {
    gen_scenario(scenario, n, 42).expect("valid scenario size")
}

/// One observed experiment drawn from `population(scenario, n)`.
pub fn observed(scenario: Scenario, n: usize) -> ExperimentData {
    let pop = population(scenario, n);
    let z = pop.draw_assignment(&mut stream(42, Purpose::Assignment, 0));
    pop.observe(&z).expect("valid assignment")
}
