//! Render a few parametric scenes to top-view PNGs and print class histograms.
//!
//! cargo run --example render_scene -- [out_dir]

use roadlayout::grid::{GridSpec, SemanticClass};
use roadlayout::io::grid_file::{export_grid, GridFormat};
use roadlayout::render::render;
use roadlayout::scene::{BinaryAttr, ContinuousAttr, MulticlassAttr, SceneAttributes};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out_dir = std::env::args().nth(1).map(Into::into).unwrap_or_else(std::env::temp_dir);
    let spec = GridSpec::default();

    let straight = SceneAttributes::default();
    let mut crossing = straight;
    crossing[MulticlassAttr::LanesLeft] = 2;
    crossing[MulticlassAttr::LanesRight] = 2;
    crossing[BinaryAttr::LeftSideRoadExists] = true;
    crossing[ContinuousAttr::LeftSideRoadDistance] = 25.0;
    crossing[ContinuousAttr::LeftSideRoadWidth] = 8.0;
    crossing[BinaryAttr::CrosswalkNearExists] = true;
    crossing[ContinuousAttr::CrosswalkNearDistance] = 12.0;
    crossing[BinaryAttr::SidewalkLeftExists] = true;
    crossing[BinaryAttr::SidewalkRightExists] = true;
    let mut curve = straight;
    curve[BinaryAttr::MainRoadCurves] = true;
    curve[BinaryAttr::CurveDirectionLeft] = true;
    curve[ContinuousAttr::CurveRadius] = 80.0;

    for (name, theta) in [("straight", straight), ("crossing", crossing), ("curve", curve)] {
        let grid = render(&theta, &spec)?;
        let path = out_dir.join(format!("{name}.png"));
        export_grid(&grid, GridFormat::Png, &path)?;
        let hist: Vec<String> = SemanticClass::ALL
            .iter()
            .map(|c| format!("{}={}", c.name(), grid.count(*c)))
            .collect();
        println!("{name:9} {}  -> {}", hist.join(" "), path.display());
    }
    Ok(())
}
