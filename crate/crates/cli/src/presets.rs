use nc_toolkit::channel::Scenario;

use crate::CliError;

/// Named per-layer byte sizes for a layered video stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamPreset {
    pub name: &'static str,
    pub layer_kbytes: &'static [f64],
}

pub const STREAM_A: StreamPreset = StreamPreset {
    name: "stream-a",
    layer_kbytes: &[702.0, 4841.0, 20584.0],
};

pub const STREAM_B: StreamPreset = StreamPreset {
    name: "stream-b",
    layer_kbytes: &[702.0, 2138.0, 6001.0, 19384.0],
};

pub const PRESETS: [StreamPreset; 2] = [STREAM_A, STREAM_B];

pub fn find(name: &str) -> Option<StreamPreset> {
    PRESETS.iter().copied().find(|p| p.name == name)
}

impl StreamPreset {
    /// Replaces the scenario's layer sizes. Layer count must match.
    pub fn apply(&self, scenario: &mut Scenario) -> Result<(), CliError> {
        if scenario.layers.len() != self.layer_kbytes.len() {
            return Err(CliError::Usage(format!(
                "preset {} has {} layers, scenario has {}",
                self.name,
                self.layer_kbytes.len(),
                scenario.layers.len()
            )));
        }
        for (layer, &kb) in scenario.layers.iter_mut().zip(self.layer_kbytes) {
            layer.size_bits = None;
            layer.size_kbytes = Some(kb);
        }
        Ok(())
    }
}
