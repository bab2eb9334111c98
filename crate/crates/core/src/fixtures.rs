//! Bundled fixtures: the 61 cached answers to AIME 2024 II problem 8 (the
//! torus/sphere tangency question) and the question itself.

use std::path::Path;

use crate::bench::dataset::parse_dataset;
use crate::solvers::pool::parse_pools;
use crate::solvers::{ProblemSpec, SamplePool};

pub const TORUS_ID: &str = "aime2024-ii-8";

const TORUS_POOL_JSONL: &str = include_str!("../fixtures/aime2024_ii_8_pool.jsonl");
const TORUS_DATASET_JSONL: &str = include_str!("../fixtures/aime2024_ii_8_dataset.jsonl");

/// Answer counts: 127 ×9; 19, 55, 13 ×6; 23, 17 ×5; 31 ×4; 29, 61 ×3;
/// 7, 24 ×2; ten singletons. "19" is seen before "55" and "13".
pub fn torus_pool() -> SamplePool {
    parse_pools(TORUS_POOL_JSONL, Path::new("aime2024_ii_8_pool.jsonl"))
        .expect("bundled pool parses")
        .remove(0)
}

pub fn torus_problem() -> ProblemSpec {
    parse_dataset(
        TORUS_DATASET_JSONL,
        Path::new("aime2024_ii_8_dataset.jsonl"),
    )
    .expect("bundled dataset parses")
    .problems
    .remove(0)
}
