//! Raw sessions to standardized 20-channel, 256 Hz sequences.

mod channels;
mod filter;
mod manifest;
mod pipeline;
mod resample;
mod scale;

pub use channels::{map_channels, map_labels, normalize_label, ChannelMap, TARGET_CHANNELS};
pub use filter::{filtfilt, lowpass, lowpass_with, FirDesign};
pub use manifest::{Manifest, RecordingEntry, MISSING};
pub use pipeline::{
    build_dataset, harmonize, trial_sequences, window_sequences, PreprocessConfig, RecordingInput,
    TargetRecording, TrialWindow,
};
pub use resample::{
    integer_stage, resample, resample_with, IntegerStage, ResampleOptions, TARGET_RATE,
};
pub use scale::{
    scale_sequence, ScaleMode, SequenceSource, StandardizedSequence, AMPLITUDE_ROW,
    STANDARD_CHANNELS,
};
