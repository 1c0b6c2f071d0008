use crate::inpaint::InpaintConfig;
use crate::pipeline::{
    DEFAULT_MIN_OBJECTS, DEFAULT_PATCH_COUNT, DEFAULT_PATCH_SIZE, DEFAULT_SCALE_RANGE,
};
use crate::schedule::{DEFAULT_BASE_LR, DEFAULT_BETA, DEFAULT_FINAL_LR, DEFAULT_WARMUP_STEPS};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.5;

/// Version, build information and the table of defaults. Contains nothing
/// that varies between runs of the same build.
pub fn version_and_provenance() -> String {
    let profile = if cfg!(debug_assertions) {
        "debug"
    } else {
        "release"
    };
    let defaults: [(&str, String); 11] = [
        ("beta", DEFAULT_BETA.to_string()),
        ("radius", InpaintConfig::default().radius.to_string()),
        ("iou_threshold", DEFAULT_IOU_THRESHOLD.to_string()),
        ("min_objects", DEFAULT_MIN_OBJECTS.to_string()),
        ("patch_size", DEFAULT_PATCH_SIZE.to_string()),
        ("count", DEFAULT_PATCH_COUNT.to_string()),
        (
            "scale_range",
            format!("[{}, {}]", DEFAULT_SCALE_RANGE.0, DEFAULT_SCALE_RANGE.1),
        ),
        ("connectivity", "8".to_string()),
        ("base_lr", DEFAULT_BASE_LR.to_string()),
        ("final_lr", DEFAULT_FINAL_LR.to_string()),
        ("warmup_steps", DEFAULT_WARMUP_STEPS.to_string()),
    ];
    let mut text = format!(
        "nucleitk {}\nbuild: {profile}, {}-{}\ndefaults:\n",
        env!("CARGO_PKG_VERSION"),
        std::env::consts::ARCH,
        std::env::consts::OS
    );
    for (k, v) in defaults {
        text.push_str(&format!("  {k} = {v}\n"));
    }
    text
}
