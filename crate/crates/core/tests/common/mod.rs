#![allow(dead_code)]

use std::io::Write;
use std::time::Instant;

use adrmtl::embeddings::EmbeddingTable;
use adrmtl::features::{max_length, Featurizer};
use adrmtl::synth::{synthetic_embeddings, SynthConfig, SynthCorpus};
use adrmtl::text::Vocabulary;

/// Vocabulary over the corpus and pool, embeddings from the generator.
pub fn featurizer(cfg: &SynthConfig, corpus: &SynthCorpus, extra_pool: &[String], dim: usize, seed: u64) -> Featurizer {
    let mut table = EmbeddingTable::empty(dim, seed);
    for (w, v) in synthetic_embeddings(cfg, dim, seed) {
        table.insert(&w, v).unwrap();
    }
    let mut surfaces: Vec<Vec<&str>> = corpus.adr.iter().map(|s| s.surfaces()).collect();
    surfaces.extend(corpus.ade.iter().map(|e| e.surfaces()));
    surfaces.extend(corpus.pool.iter().chain(extra_pool).map(|p| p.split(' ').collect()));
    let vocab = Vocabulary::build(surfaces.iter().map(Vec::as_slice), usize::MAX);
    let pad = max_length(surfaces.iter().map(Vec::len));
    Featurizer::new(vocab, table, pad)
}

/// Prints one result line outside the test harness's output capture.
pub fn report(id: u32, name: &str, start: Instant, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "[acceptance] {verdict} criterion {id:>2} {name}: {detail} ({:.1}s)",
        start.elapsed().as_secs_f64()
    );
}
