//! Training-data synthesis: line art, hint maps, scene cuts, sample pairs.

pub mod canny;
pub mod hints;
pub mod manifest;
pub mod samples;
pub mod scenes;
pub mod synthetic;

pub use canny::{canny_edges, CannyParams, EdgeMap};
pub use hints::{cell_means, make_hint_map, paint_cells, rasterize_placements, HintParams, HintPlacement};
pub use manifest::{DatasetManifest, FrameEntry};
pub use samples::{
    build_samples, read_samples, samples_from_frames, structure_input, synthesize_line_art, write_samples,
    SampleIndex, SampleRecord, SequenceSample,
};
pub use scenes::{detect_scene_cuts, scene_ids, DEFAULT_CUT_THRESHOLD};
pub use synthetic::synthetic_scene;
