use std::collections::BTreeMap;

use strategist_core::{Normalizer, SearchSpace};
use strategist_harness::Benchmark;

/// A catalog objective as seen by a session: evaluated on `[-1, 1]^p` and mapped
/// affinely onto the benchmark's native box.
#[derive(Debug, Clone)]
pub struct Objective {
    benchmark: Benchmark,
    map: Normalizer,
}

impl Objective {
    pub fn new(benchmark: Benchmark) -> Self {
        let native = SearchSpace::new(benchmark.lower.clone(), benchmark.upper.clone()).expect("benchmark box is valid");
        let map = Normalizer::new(&native).expect("benchmark box is valid");
        Self { benchmark, map }
    }

    pub fn dim(&self) -> usize {
        self.benchmark.dim()
    }

    pub fn space(&self) -> SearchSpace {
        SearchSpace::unit(self.dim())
    }

    /// Score of a point given in normalized coordinates.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.benchmark.eval(&self.map.from_unit(x))
    }
}

/// Objectives sessions may be created on, by name.
#[derive(Debug, Clone, Default)]
pub struct Catalog {
    entries: BTreeMap<String, Objective>,
}

impl Catalog {
    /// `rosenbrock2d` on `[-2, 2]²`, `rastrigin2d` on `[-5.12, 5.12]²` and `branin`.
    pub fn standard() -> Self {
        Self::default()
            .with("rosenbrock2d", Benchmark::rosenbrock(2, 2.0))
            .with("rastrigin2d", Benchmark::rastrigin(2))
            .with("branin", Benchmark::branin())
    }

    pub fn with(mut self, name: &str, benchmark: Benchmark) -> Self {
        self.entries.insert(name.to_string(), Objective::new(benchmark));
        self
    }

    pub fn get(&self, name: &str) -> Option<&Objective> {
        self.entries.get(name)
    }

    pub fn names(&self) -> Vec<String> {
        self.entries.keys().cloned().collect()
    }
}
