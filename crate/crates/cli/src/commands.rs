pub mod bench;
pub mod cost;
pub mod enumerate;
pub mod pareto;
pub mod search;
