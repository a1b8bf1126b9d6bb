use std::fmt::Write;

use crate::descriptors::FirmwareDescriptor;

const PREAMBLES: [&str; 3] = [
    "You are the configuration interpreter of a three-layer firmware risk assessment. \
You receive configuration signals extracted from a firmware descriptor (no binary code) \
and estimate how strongly they indicate a latent zero-day vulnerability.",
    "You are the structural analyzer of a three-layer firmware risk assessment. \
You receive abstract structural statistics extracted from a firmware descriptor (no binary code) \
and estimate how strongly they indicate a latent zero-day vulnerability.",
    "You are the fusion reasoner of a three-layer firmware risk assessment. \
You receive both the configuration signals and the structural statistics of a firmware descriptor \
(no binary code), reconcile them and estimate the likelihood of a latent zero-day vulnerability.",
];

pub const OUTPUT_CONTRACT: &str = "Respond with a single JSON object and nothing else, using exactly these keys:\n\
{\"risk\": <number from 0 to 100>, \"uncertainty\": <number from 0 to 1>, \"reasoning_depth\": <non-negative integer>}";

pub const STRICT_REMINDER: &str = "Your previous reply could not be parsed. Reply with exactly one JSON object \
containing the numeric keys \"risk\" (0-100), \"uncertainty\" (0-1) and \"reasoning_depth\" (integer). \
Do not add any other text.";

pub fn system_message(layer: u8) -> &'static str {
    PREAMBLES[usize::from(layer.clamp(1, 3)) - 1]
}

/// Deterministic user prompt for `layer` (1 = configuration, 2 = structure,
/// 3 = fusion).
pub fn serialize_prompt(f: &FirmwareDescriptor, layer: u8) -> String {
    let mut s = String::new();
    let m = &f.metadata;
    let _ = writeln!(s, "{}", system_message(layer));
    let _ = writeln!(s);
    let _ = writeln!(s, "Descriptor");
    let _ = writeln!(s, "id: {}", f.id);
    let _ = writeln!(s, "arch: {}", m.arch);
    let _ = writeln!(s, "version_id: {}", m.version_id);
    let _ = writeln!(s, "device_class: {}", m.device_class);
    let _ = writeln!(s, "product_family: {}", m.product_family);
    if layer != 2 {
        let _ = writeln!(s);
        let _ = writeln!(s, "Configuration features ({}):", f.k_c());
        for (i, v) in f.config.iter().enumerate() {
            let _ = writeln!(s, "config[{i}] = {v}");
        }
    }
    if layer != 1 {
        let _ = writeln!(s);
        let _ = writeln!(s, "Structural features ({}):", f.k_o());
        for (i, v) in f.structure.iter().enumerate() {
            let _ = writeln!(s, "structure[{i}] = {v}");
        }
    }
    let _ = writeln!(s);
    s.push_str(OUTPUT_CONTRACT);
    s.push('\n');
    s
}
