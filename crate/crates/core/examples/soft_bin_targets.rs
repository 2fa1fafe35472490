//! Encode a scene's continuous attributes as soft bins and decode them back.

use roadlayout::scene::{sample, ContinuousAttr, SampleRanges};
use roadlayout::supervision::{decode_targets, encode_targets, DEFAULT_SIGMA_BINS};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let theta = sample(7, &SampleRanges::default())?;
    let targets = encode_targets(&theta, DEFAULT_SIGMA_BINS)?;
    let decoded = decode_targets(&targets)?;
    println!("{:26} {:>10} {:>10} {:>6} {:>7}", "attribute", "value", "decoded", "peak", "active");
    for attr in ContinuousAttr::ALL {
        let dist = &targets.regression[attr.index()];
        println!(
            "{:26} {:10.3} {:10.3} {:6} {:>7}",
            attr.name(),
            theta[attr],
            decoded[attr],
            dist.argmax(),
            targets.mask.continuous(attr)
        );
    }
    Ok(())
}
