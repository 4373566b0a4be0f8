//! Decoder back end: parameter analysis, the synthesis network and the LPC
//! vocoder.

mod analysis;
pub mod lpc;
mod net;
mod vocoder;

pub use analysis::{
    extract_speech_params, gain_floor, lpc_analysis, FrameParams, SpeechParams, LPC_ORDER, N_PARAMS, N_STATIC,
    POWER_FLOOR,
};
pub use net::{synth_forward, train_synthesis, SynthesisNet, SYNTH_CONTEXT};
pub use vocoder::{pulse_positions, vocode, VocoderConfig, OUTPUT_PEAK};
