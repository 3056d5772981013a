//! Per-run metric reports and the per-method aggregate table.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::directional::directional_frames;
use super::embed::Embedder;
use super::quality::{QualityBackend, QualityRequest, QualityScores};
use super::ssim::masked_ssim_frames;
use crate::error::{Error, Result};
use crate::tensor::{PixelMask, VideoClip};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub method: String,
    pub scene: String,
    pub masked_ssim: f64,
    pub directional: f64,
    pub vlm: QualityScores,
    #[serde(default)]
    pub ssim_per_frame: Vec<f64>,
    #[serde(default)]
    pub directional_per_frame: Vec<f64>,
}

impl MetricsReport {
    /// Range and NaN checks.
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("masked_ssim", self.masked_ssim), ("directional", self.directional)]
            .into_iter()
            .chain(self.ssim_per_frame.iter().map(|&v| ("masked_ssim", v)))
            .chain(self.directional_per_frame.iter().map(|&v| ("directional", v)))
        {
            if !(-1.0 - 1e-9..=1.0 + 1e-9).contains(&v) {
                return Err(Error::InvalidValue(format!("{name} = {v} outside [-1, 1]")));
            }
        }
        self.vlm.validate()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.validate()?;
        let path = path.as_ref();
        let text = toml::to_string_pretty(self).map_err(|e| Error::Config(format!("report: {e}")))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("report {}: {e}", path.display())))
    }
}

/// Inputs for scoring one edited video against its source.
pub struct EvalInputs<'a> {
    pub original: &'a VideoClip,
    pub edited: &'a VideoClip,
    pub source_prompt: &'a str,
    pub edit_prompt: &'a str,
    pub edit_object: &'a str,
    /// Region left out of the masked SSIM.
    pub exclusion: &'a PixelMask,
    pub reference_mask: Option<&'a PixelMask>,
}

/// Computes every metric for one run.
pub fn evaluate(
    method: &str,
    scene: &str,
    inputs: &EvalInputs<'_>,
    embedder: &dyn Embedder,
    quality: &dyn QualityBackend,
) -> Result<MetricsReport> {
    let ssim_per_frame: Vec<f64> = masked_ssim_frames(inputs.edited, inputs.original, inputs.exclusion)?
        .into_iter()
        .flatten()
        .collect();
    if ssim_per_frame.is_empty() {
        return Err(Error::EmptyRegion("no window lies fully outside the excluded region".into()));
    }
    let directional_per_frame = directional_frames(
        inputs.original,
        inputs.edited,
        inputs.source_prompt,
        inputs.edit_prompt,
        embedder,
    )?;
    let vlm = quality.evaluate(&QualityRequest {
        original: inputs.original,
        edited: inputs.edited,
        edit_prompt: inputs.edit_prompt,
        edit_object: inputs.edit_object,
        reference_mask: inputs.reference_mask,
    })?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let report = MetricsReport {
        method: method.to_string(),
        scene: scene.to_string(),
        masked_ssim: mean(&ssim_per_frame),
        directional: mean(&directional_per_frame),
        vlm,
        ssim_per_frame,
        directional_per_frame,
    };
    report.validate()?;
    Ok(report)
}

/// Mean of every column per method, in order of first appearance.
pub fn aggregate(reports: &[MetricsReport]) -> Vec<(String, usize, [f64; 6])> {
    let mut order: Vec<String> = Vec::new();
    let mut sums: BTreeMap<String, (usize, [f64; 6])> = BTreeMap::new();
    for r in reports {
        if !order.contains(&r.method) {
            order.push(r.method.clone());
        }
        let e = sums.entry(r.method.clone()).or_insert((0, [0.0; 6]));
        e.0 += 1;
        let row = [r.directional, r.masked_ssim, r.vlm.text_alignment, r.vlm.visual_quality, r.vlm.edit_harmonization, r.vlm.dynamics];
        for (acc, v) in e.1.iter_mut().zip(row) {
            *acc += v;
        }
    }
    order
        .into_iter()
        .map(|m| {
            let (n, s) = sums[&m];
            (m, n, s.map(|v| v / n as f64))
        })
        .collect()
}

/// Markdown table: method, directional, masked SSIM, then the four quality
/// scores.
pub fn aggregate_table(reports: &[MetricsReport]) -> String {
    let mut out = String::from(
        "| Method | Runs | Directional | Masked SSIM | Text Alignment | Visual Quality | Edit Harmonization | Dynamics Score |\n\
         |---|---|---|---|---|---|---|---|\n",
    );
    for (m, n, v) in aggregate(reports) {
        out.push_str(&format!(
            "| {m} | {n} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} | {:.3} |\n",
            v[0], v[1], v[2], v[3], v[4], v[5]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn report(method: &str, ssim: f64) -> MetricsReport {
        MetricsReport {
            method: method.into(),
            scene: "s".into(),
            masked_ssim: ssim,
            directional: 0.1,
            vlm: QualityScores {
                text_alignment: 1.0,
                visual_quality: 0.5,
                edit_harmonization: 0.5,
                dynamics: 0.5,
            },
            ssim_per_frame: vec![ssim],
            directional_per_frame: vec![0.1],
        }
    }

    #[test]
    fn aggregates_in_first_seen_order() {
        let rows = aggregate(&[report("B", 0.5), report("A", 1.0), report("B", 0.7)]);
        assert_eq!(rows[0].0, "B");
        assert_eq!(rows[0].1, 2);
        assert!((rows[0].2[1] - 0.6).abs() < 1e-12);
        let t = aggregate_table(&[report("Full method", 1.0)]);
        assert!(t.contains("| Full method | 1 | 0.100 | 1.000 |"));
    }

    #[test]
    fn rejects_out_of_range_and_round_trips() {
        let mut r = report("x", 0.9);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.toml");
        r.save(&p).unwrap();
        assert_eq!(MetricsReport::load(&p).unwrap(), r);
        r.masked_ssim = f64::NAN;
        assert!(r.validate().is_err());
    }

    #[test]
    fn evaluate_identical_videos() {
        use crate::metrics::{HistogramEmbedder, StubQuality};
        let v = VideoClip::new(2, 16, 16, 3, (0..2 * 16 * 16 * 3).map(|i| (i % 7) as f32 / 7.0).collect()).unwrap();
        let none = PixelMask::zeros(2, 16, 16);
        let inputs = EvalInputs {
            original: &v,
            edited: &v,
            source_prompt: "a blue square",
            edit_prompt: "a blue square and a new red ball",
            edit_object: "red ball",
            exclusion: &none,
            reference_mask: None,
        };
        let r = evaluate("Full method", "s", &inputs, &HistogramEmbedder, &StubQuality).unwrap();
        assert_eq!(r.masked_ssim, 1.0);
        assert_eq!(r.directional, 0.0);
        assert_eq!(r.ssim_per_frame.len(), 2);
        let all = PixelMask::ones(2, 16, 16);
        let inputs = EvalInputs { exclusion: &all, ..inputs };
        assert!(matches!(
            evaluate("m", "s", &inputs, &HistogramEmbedder, &StubQuality),
            Err(Error::EmptyRegion(_))
        ));
    }
}
