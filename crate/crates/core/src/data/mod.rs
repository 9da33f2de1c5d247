//! Dataset ingestion and the transformations between raw tracks and the
//! flow's relative-displacement coordinates.

mod augment;
mod dataset;
mod window;

pub use augment::{augment_window, sample_scale, scale_about_mean, scale_augment, AugmentConfig};
pub use dataset::{
    load_dataset, load_dataset_scaled, parse_dataset, write_dataset, DatasetFormat, DroppedAgent,
    LoadedDataset, Trajectory,
};
pub use window::{
    decode_prediction, read_windows, rotate_back, rotation_normalize, window_trajectories,
    write_windows, TrajectoryWindow,
};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Seeded shuffle, then the first `round(fraction · N)` items go to
/// validation. Disjoint and exhaustive.
pub fn split_train_val<T>(items: Vec<T>, fraction: f64, seed: u64) -> (Vec<T>, Vec<T>) {
    let n = items.len();
    let n_val = ((fraction.clamp(0.0, 1.0) * n as f64).round() as usize).min(n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut slots: Vec<Option<T>> = items.into_iter().map(Some).collect();
    let val = order[..n_val]
        .iter()
        .map(|&i| slots[i].take().expect("index used once"))
        .collect();
    let train = order[n_val..]
        .iter()
        .map(|&i| slots[i].take().expect("index used once"))
        .collect();
    (train, val)
}
