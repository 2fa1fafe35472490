//! Project to the image and back: agreement with the original top view,
//! broken down by depth band.

use roadlayout::camera::{bev_to_perspective, perspective_to_bev, CameraModel};
use roadlayout::grid::{GridSpec, SemanticClass};
use roadlayout::render::render;
use roadlayout::scene::{sample, SampleRanges};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GridSpec::default();
    let cam = CameraModel::new(721.5, 721.5, 609.6, 172.9, 1242, 375, 1.65, 0.0)?;
    let bands = 6;
    let mut agree = vec![0usize; bands];
    let mut total = vec![0usize; bands];
    for seed in 0..20 {
        let bev = render(&sample(seed, &SampleRanges::default())?, &spec)?;
        let back = perspective_to_bev(&bev_to_perspective(&bev, &spec, &cam)?, &cam, &spec)?;
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                let b = back.get(r, c);
                if b == SemanticClass::Unknown || !bev.is_uniform_3x3(r, c) {
                    continue;
                }
                let (_, z) = spec.cell_center(r, c);
                let band = ((z / spec.depth_extent) * bands as f64).min(bands as f64 - 1.0) as usize;
                total[band] += 1;
                agree[band] += (b == bev.get(r, c)) as usize;
            }
        }
    }
    let step = spec.depth_extent / bands as f64;
    for k in 0..bands {
        println!(
            "{:4.0}-{:<4.0} m  {:.4}  ({} cells)",
            k as f64 * step,
            (k + 1) as f64 * step,
            agree[k] as f64 / total[k].max(1) as f64,
            total[k]
        );
    }
    let rate = agree.iter().sum::<usize>() as f64 / total.iter().sum::<usize>() as f64;
    println!("overall {rate:.4}");
    Ok(())
}
