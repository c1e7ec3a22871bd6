//! Encoding stage: mel targets, loudness and F0 extraction, content-feature
//! files, the trainable conditioning encoder, and a synthetic dataset.

mod cond;
mod content;
mod matrix_file;
mod mel;
mod pitch;
mod synth;
mod wav;

pub use cond::{
    build_cond, build_cond_on, init_encoder_params, CondInput, EncoderConfig, FeatureSet,
    SingerTable,
};
pub use content::{load_content_features, reconcile_frames, save_content_features};
pub use matrix_file::{read_matrix, write_matrix, CONTENT_MAGIC, MEL_MAGIC};
pub use mel::{hz_to_mel, mel_center_frequencies, mel_to_hz, mel_spectrogram, MelConfig, MelSpec};
pub use pitch::{estimate_f0, loudness, F0Config};
pub use synth::{column_slope, render_mel, synth_dataset, DataItem, SynthSpec};
pub use wav::{read_wav, write_wav, Wave};
