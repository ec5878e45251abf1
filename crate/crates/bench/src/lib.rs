//! Synthetic inputs shared by the criterion benches.

use morph_audit_core::manifest::{DatasetManifest, LabelDescriptor, RecordDescriptor, SERIES_LEN};
use morph_audit_core::{AttributeSet, EmbeddingMatrix};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn random_vector(rng: &mut impl Rng, dims: usize) -> Vec<f64> {
    (0..dims).map(|_| rng.gen_range(-1.0..1.0)).collect()
}

/// `series` morph series of random `dims`-dimensional images, plus two
/// labels `minority` and `majority` stored in a separate matrix.
pub fn morph_dataset(series: usize, dims: usize, seed: u64) -> (EmbeddingMatrix, EmbeddingMatrix, DatasetManifest) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let images: Vec<Vec<f64>> = (0..series * SERIES_LEN).map(|_| random_vector(&mut rng, dims)).collect();
    let labels = vec![random_vector(&mut rng, dims), random_vector(&mut rng, dims)];
    let mut man = DatasetManifest::default();
    for s in 0..series {
        for k in 0..SERIES_LEN {
            man.records.push(RecordDescriptor {
                row: s * SERIES_LEN + k,
                series_id: format!("s{s:05}"),
                morph_index: k,
                gender: "female".into(),
                source_group: "minority".into(),
                target_group: "majority".into(),
                source_id: None,
                target_id: None,
            });
        }
    }
    for (row, name) in ["minority", "majority"].iter().enumerate() {
        man.labels.push(LabelDescriptor {
            row,
            name: name.to_string(),
            prompt: format!("a photo of a {name} person"),
        });
    }
    (
        EmbeddingMatrix::from_f64_rows(&images).unwrap(),
        EmbeddingMatrix::from_f64_rows(&labels).unwrap(),
        man,
    )
}

pub fn attribute_set(name: &str, size: usize, dims: usize, seed: u64) -> AttributeSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let stimuli = (0..size)
        .map(|i| (format!("{name}{i}"), random_vector(&mut rng, dims)))
        .collect();
    AttributeSet::new(name, name, stimuli).unwrap()
}
