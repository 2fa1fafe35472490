//! Read a KITTI calibration file into a camera model.
//!
//! cargo run --example kitti_calib -- [calib.txt]

use std::path::PathBuf;

use roadlayout::io::calib::{load_kitti_calib, CameraMount};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| {
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/kitti_000000.txt")
    });
    let cam = load_kitti_calib(&path, CameraMount::default())?;
    println!("{cam:#?}");
    for z in [5.0, 10.0, 20.0, 40.0] {
        let (u, v) = cam.ground_to_image(0.0, z)?;
        println!("ground point 0 m left, {z:>4} m ahead -> pixel ({u:.1}, {v:.1})");
    }
    if let Err(e) = roadlayout::io::calib::parse_kitti_calib("P2: 1 2 x\n", CameraMount::default()) {
        println!("malformed input reports: {e}");
    }
    Ok(())
}
