use ndarray::Array4;

use crate::datasets::LabeledImageSet;

/// Small digit-like corpus: class `c` lights a bar at row `2c`, plus a per-sample column.
pub(crate) fn toy_corpus(per_class: usize, classes: usize, size: usize, channels: usize) -> LabeledImageSet {
    let n = per_class * classes;
    let labels: Vec<usize> = (0..n).map(|i| i % classes).collect();
    let images = Array4::from_shape_fn((n, size, size, channels), |(i, y, x, _)| {
        let c = labels[i];
        let on = y == (2 * c) % size || x == (i * 3) % size;
        if on {
            0.9
        } else {
            0.1
        }
    });
    LabeledImageSet::new(images, labels, classes).unwrap()
}
