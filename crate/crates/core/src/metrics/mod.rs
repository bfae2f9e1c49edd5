//! Evaluation metrics and the sequential evaluation harness.

mod fid;
mod quality;

pub use fid::{fid, pooled_features, FID_EPS};
pub use quality::{gaussian_window, mse_8bit, psnr, ssim, PEAK, PSNR_CAP, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::SequenceSample;
use crate::error::{Error, Result};
use crate::image::ImageTensor;
use crate::inference::{blank_frame, FrameModel};
use crate::losses::FeatureExtractor;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameMetrics {
    pub frame_index: usize,
    pub ssim: f64,
    pub psnr: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateMetrics {
    pub ssim_mean: f64,
    pub psnr_mean: f64,
    /// Absent with fewer than two frames.
    pub fid: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_frame: Vec<FrameMetrics>,
    pub aggregate: AggregateMetrics,
}

impl fmt::Display for MetricReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = &self.aggregate;
        let fid = a.fid.map_or("n/a".to_string(), |v| format!("{v:.2}"));
        writeln!(f, "{:>8} | {:>6} | {:>8}", "FID", "SSIM", "PSNR")?;
        writeln!(f, "{:->8}-+-{:->6}-+-{:->8}", "", "", "")?;
        write!(f, "{fid:>8} | {:>6.3} | {:>8.2}", a.ssim_mean, a.psnr_mean)
    }
}

/// Feature source for FID.
pub struct FidFeatures<'a, T> {
    pub extractor: &'a dyn FeatureExtractor<T>,
    pub layer: &'a str,
}

/// Consecutive samples of one scene: a new run opens at every sequence
/// start, scene change or gap in frame indices.
fn runs<T>(samples: &[SequenceSample<T>]) -> Vec<&[SequenceSample<T>]> {
    let mut out = Vec::new();
    let mut start = 0;
    for i in 1..samples.len() {
        let (p, c) = (&samples[i - 1], &samples[i]);
        if c.is_sequence_start || c.scene != p.scene || c.frame_index != p.frame_index + 1 {
            out.push(&samples[start..i]);
            start = i;
        }
    }
    if !samples.is_empty() {
        out.push(&samples[start..]);
    }
    out
}

/// Predictions for every sample, carrying each prediction into the next
/// frame of its run and starting every run from the blank frame.
pub fn predict_sequence<T: Scalar>(model: &dyn FrameModel<T>, samples: &[SequenceSample<T>]) -> Result<Vec<ImageTensor<T>>> {
    let per_run: Vec<Vec<ImageTensor<T>>> = runs(samples)
        .into_par_iter()
        .map(|run| {
            let mut prev = blank_frame(run[0].height(), run[0].width())?;
            run.iter()
                .map(|s| {
                    let out = model.predict(s, &prev)?;
                    prev = out.clone();
                    Ok(out)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<_>>()?;
    Ok(per_run.into_iter().flatten().collect())
}

/// Sequential inference over `samples`, scored against `gt_curr`.
pub fn evaluate_sequence<T: Scalar>(
    model: &dyn FrameModel<T>,
    samples: &[SequenceSample<T>],
    features: &FidFeatures<'_, T>,
) -> Result<MetricReport> {
    if samples.is_empty() {
        return Err(Error::InvalidInput("no samples to evaluate".into()));
    }
    let preds = predict_sequence(model, samples)?;
    let per_frame = samples
        .par_iter()
        .zip(&preds)
        .map(|(s, p)| {
            Ok(FrameMetrics { frame_index: s.frame_index, ssim: ssim(p, &s.gt_curr)?, psnr: psnr(p, &s.gt_curr)? })
        })
        .collect::<Result<Vec<_>>>()?;
    let n = per_frame.len() as f64;
    let fid = if samples.len() >= 2 {
        let gts: Vec<ImageTensor<T>> = samples.iter().map(|s| s.gt_curr.clone()).collect();
        let fa = pooled_features(features.extractor, &preds, features.layer)?;
        let fb = pooled_features(features.extractor, &gts, features.layer)?;
        Some(fid(&fa, &fb)?)
    } else {
        None
    };
    Ok(MetricReport {
        aggregate: AggregateMetrics {
            ssim_mean: per_frame.iter().map(|m| m.ssim).sum::<f64>() / n,
            psnr_mean: per_frame.iter().map(|m| m.psnr).sum::<f64>() / n,
            fid,
        },
        per_frame,
    })
}
