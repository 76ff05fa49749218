use nambu_core::statmech::{ChunkRunner, ChunkStats};
use rayon::prelude::*;

/// Runs Monte Carlo chunks on the rayon pool. Results come back in chunk
/// order, so estimates match the sequential runner bit for bit.
#[derive(Debug, Clone, Copy, Default)]
pub struct Rayon;

impl ChunkRunner for Rayon {
    fn run(&self, chunks: usize, job: &(dyn Fn(usize) -> ChunkStats + Sync)) -> Vec<ChunkStats> {
        (0..chunks).into_par_iter().map(job).collect()
    }
}
