use serde::{Deserialize, Serialize};

use crate::finetune::MetricKind;

/// Static description of a downstream dataset and its fine-tuning preset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetDescriptor {
    pub name: String,
    pub paradigm: String,
    pub sampling_rate: f64,
    pub channels: usize,
    pub subjects: usize,
    /// Subjects reserved as a fixed test set evaluated by every fold.
    pub held_out_subjects: usize,
    pub targets: usize,
    pub folds: usize,
    pub trial_start_s: f64,
    pub trial_length_s: f64,
    pub metric: MetricKind,
    pub batch_size: usize,
    pub epochs: usize,
    pub learning_rate: f64,
}

#[allow(clippy::too_many_arguments)]
fn row(
    name: &str,
    paradigm: &str,
    sampling_rate: f64,
    channels: usize,
    subjects: usize,
    held_out_subjects: usize,
    targets: usize,
    folds: usize,
    window: (f64, f64),
    metric: MetricKind,
    hyper: (usize, usize, f64),
) -> DatasetDescriptor {
    DatasetDescriptor {
        name: name.into(),
        paradigm: paradigm.into(),
        sampling_rate,
        channels,
        subjects,
        held_out_subjects,
        targets,
        folds,
        trial_start_s: window.0,
        trial_length_s: window.1,
        metric,
        batch_size: hyper.0,
        epochs: hyper.1,
        learning_rate: hyper.2,
    }
}

/// The five downstream datasets with their evaluation windows and
/// fine-tuning hyperparameters.
pub fn presets() -> Vec<DatasetDescriptor> {
    use MetricKind::*;
    vec![
        row(
            "MMI",
            "MI (L/R)",
            160.0,
            64,
            105,
            0,
            2,
            5,
            (0.0, 6.0),
            Bac,
            (4, 7, 1e-5),
        ),
        row(
            "BCIC",
            "MI (L/R/F/T)",
            250.0,
            22,
            9,
            0,
            4,
            9,
            (-2.0, 6.0),
            Accuracy,
            (60, 15, 5e-5),
        ),
        row(
            "ERN",
            "Error Related Negativity",
            200.0,
            56,
            26,
            10,
            2,
            4,
            (-0.7, 2.0),
            Auroc,
            (32, 15, 1e-5),
        ),
        row(
            "P300",
            "Donchin Speller",
            2048.0,
            64,
            9,
            0,
            2,
            9,
            (-0.7, 2.0),
            Auroc,
            (80, 20, 1e-5),
        ),
        row(
            "SSC",
            "Sleep Staging",
            100.0,
            2,
            83,
            0,
            5,
            10,
            (0.0, 30.0),
            Bac,
            (64, 40, 5e-5),
        ),
    ]
}

pub fn preset(name: &str) -> Option<DatasetDescriptor> {
    presets()
        .into_iter()
        .find(|d| d.name.eq_ignore_ascii_case(name))
}
