//! Mirroring the attributes mirrors the rendering: check it on random scenes.

use roadlayout::grid::GridSpec;
use roadlayout::render::render;
use roadlayout::scene::{mirror, sample, SampleRanges};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let spec = GridSpec::default();
    let ranges = SampleRanges::default();
    let mut mismatched = 0;
    for seed in 0..100 {
        let theta = sample(seed, &ranges)?;
        let flipped = render(&theta, &spec)?.flip_horizontal();
        if render(&mirror(&theta), &spec)? != flipped {
            mismatched += 1;
            println!("seed {seed}: mirror mismatch");
        }
        assert_eq!(mirror(&mirror(&theta)), theta);
    }
    println!("{mismatched} of 100 scenes broke mirror equivariance");
    Ok(())
}
