//! File formats, run manifests and the batch commands.

mod binary;
mod checkpoint;
mod commands;
mod frames;
mod manifest;
mod tables;
mod volume;

pub use checkpoint::{read_checkpoint, write_checkpoint};
pub use commands::{
    cmd_bench, cmd_evaluate, cmd_reconstruct, cmd_simulate, exit_code, rerun, ReconstructInputs,
    BACKGROUNDS_FILE, DIAGNOSTICS_FILE, FLUOROPHORES_FILE, FRAMES_FILE, REPORT_FILE, TRACE_FILE, VOLUME_FILE,
};
pub use frames::{
    attach_backgrounds, decode_frame_file, decode_frames, encode_backgrounds, encode_frames, FrameFile,
    FRAMES_MAGIC,
};
pub use manifest::{sha256_hex, CommandSpec, FileHash, OutputDir, RunManifest, MANIFEST_FILE, PROGRESS_FILE};
pub use tables::{decode_fluorophores, decode_trace, encode_fluorophores, encode_trace};
pub use volume::{decode_volume, decode_volume_data, encode_field, encode_volume, VolumeData, VOLUME_MAGIC};
