//! Named desk-scale batches for the reference figures.

use crate::detector::DetectorKind::{self, *};
use crate::model::SceneConfig;

use super::ExperimentSpec;

pub const PRESET_NAMES: &[&str] = &[
    "paper-fig4",
    "paper-fig5a",
    "paper-fig5b",
    "paper-fig6",
    "paper-fig6-m4",
    "paper-fig7",
    "paper-fig8a",
    "paper-fig8b",
    "paper-fig9",
    "paper-fig10",
];

fn base(four: bool, detectors: Vec<DetectorKind>) -> ExperimentSpec {
    let scene = if four { SceneConfig::reference_four_channel() } else { SceneConfig::reference() };
    let mut s = ExperimentSpec::new(scene, 100, 100, 20240601);
    s.detectors = detectors;
    s
}

/// The preset called `name`, if any.
pub fn preset(name: &str) -> Option<ExperimentSpec> {
    let s = match name {
        "paper-fig4" => base(false, vec![Proposed, Clairvoyant, Conventional]),
        "paper-fig5a" => base(false, vec![Proposed, SingleChannel(0), SingleChannel(1), Clairvoyant]),
        "paper-fig5b" => base(true, vec![Proposed, Clairvoyant]),
        "paper-fig6" | "paper-fig6-m4" => {
            let mut s = base(name.ends_with("m4"), vec![Proposed, SingleChannel(0), Conventional, Clairvoyant]);
            s.h0_runs = 100;
            s
        }
        "paper-fig7" => base(false, vec![Proposed]),
        "paper-fig8a" => base(false, vec![Proposed, Clairvoyant, Conventional, SingleChannel(0), SingleChannel(1)]),
        "paper-fig8b" => base(true, vec![Proposed, Clairvoyant]),
        "paper-fig9" => {
            let mut s = base(false, vec![Proposed]);
            s.runs = 1;
            s
        }
        "paper-fig10" => base(false, vec![Proposed]),
        _ => return None,
    };
    Some(s)
}
