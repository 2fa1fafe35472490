//! Score perturbed predictions against sampled ground truth.

use roadlayout::grid::GridSpec;
use roadlayout::metrics::evaluate_scenes;
use roadlayout::scene::{sample, ContinuousAttr, SampleRanges};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let ranges = SampleRanges::default();
    let gts = (0..40).map(|s| sample(s, &ranges)).collect::<Result<Vec<_>, _>>()?;
    let preds: Vec<_> = gts
        .iter()
        .enumerate()
        .map(|(i, gt)| {
            let mut p = *gt;
            if i % 4 == 0 {
                p.binary[0] = !p.binary[0];
            }
            let (lo, hi) = ContinuousAttr::LaneWidth.range();
            p[ContinuousAttr::LaneWidth] = (p[ContinuousAttr::LaneWidth] + 0.3).min(hi).max(lo);
            p
        })
        .collect();
    let report = evaluate_scenes(&preds, &gts, None, &GridSpec::default())?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(())
}
