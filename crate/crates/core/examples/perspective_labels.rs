//! Project a rendered top view into a camera image (perspective label map).
//!
//! cargo run --example perspective_labels -- [out.png]

use roadlayout::camera::{bev_to_perspective, CameraModel};
use roadlayout::grid::{GridSpec, SemanticClass};
use roadlayout::io::grid_file::{export_grid, GridFormat};
use roadlayout::render::render;
use roadlayout::scene::{sample, SampleRanges};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("perspective.png"));
    let spec = GridSpec::default();
    let cam = CameraModel::new(721.5, 721.5, 609.6, 172.9, 1242, 375, 1.65, 0.0)?;
    let theta = sample(42, &SampleRanges::default())?;
    let bev = render(&theta, &spec)?;
    let persp = bev_to_perspective(&bev, &spec, &cam)?;
    export_grid(&persp, GridFormat::Png, &out)?;
    let total = persp.labels().len() as f64;
    for class in SemanticClass::ALL {
        println!("{:14} {:6.2}%", class.name(), 100.0 * persp.count(class) as f64 / total);
    }
    println!("wrote {}", out.display());
    Ok(())
}
