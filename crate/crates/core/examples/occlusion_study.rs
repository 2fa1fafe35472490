//! Per-image IoU binned by the number of occluding objects.

use roadlayout::grid::GridSpec;
use roadlayout::metrics::{occlusion_binned_iou, per_image_iou};
use roadlayout::render::render;
use roadlayout::scene::{sample, SampleRanges};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GridSpec::default();
    let ranges = SampleRanges::default();
    let mut ious = Vec::new();
    let mut counts = Vec::new();
    for seed in 0..60 {
        let gt = render(&sample(seed, &ranges)?, &spec)?;
        // Pretend heavier occlusion makes predictions drift toward an unrelated scene.
        let objects = (seed % 11) as usize;
        let pred = if seed % 3 == 0 && objects > 4 {
            render(&sample(seed + 1000, &ranges)?, &spec)?
        } else {
            gt.clone()
        };
        if let Some(iou) = per_image_iou(&pred, &gt)? {
            ious.push(iou);
            counts.push(objects);
        }
    }
    let table = occlusion_binned_iou(&ious, &counts)?;
    println!("{}", table.to_table_string());
    Ok(())
}
