//! Per-frame audio and lyric conditioning aligned to the motion frame rate.

mod align;
pub mod audio;
pub mod lyrics;
mod track;

pub use align::{align_conditioning, MAX_AUDIO_PAD};
pub use audio::{extract_audio_features, load_wav, save_wav, AudioFeatureFrame, Waveform};
pub use lyrics::{
    embed_lyrics, format_timing, load_timing, normalize_text, parse_timing, text_hash, EmbeddedWindow, HashEmbedder, LyricEmbedder,
    LyricWindow, PrecomputedEmbeddings,
};
pub use track::{ConditioningTrack, TRACK_MAGIC, TRACK_VERSION};

/// Onset envelope, 20 MFCC, 12 chroma, peak flag, beat flag.
pub const AUDIO_DIM: usize = 35;
pub const LYRIC_DIM: usize = 768;
