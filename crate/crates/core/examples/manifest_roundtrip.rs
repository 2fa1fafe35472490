//! Write a frame manifest, annotate one frame and read it back.

use roadlayout::io::manifest::{load_manifest, save_manifest, FrameRecord, FrameStatus};
use roadlayout::scene::{sample, SampleRanges};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("manifest.jsonl");
    let mut records: Vec<FrameRecord> = (0..3)
        .map(|i| FrameRecord::new(format!("{i:06}"), format!("{i:06}.png"), "kitti"))
        .collect();
    save_manifest(&records, &path)?;

    records[1].attributes = Some(sample(1, &SampleRanges::default())?);
    records[1].annotation_seconds = Some(41.5);
    records[1].status = Some(FrameStatus::Done);
    records[1].revision = Some(1);
    save_manifest(&records, &path)?;

    let loaded = load_manifest(&path)?;
    assert_eq!(loaded, records);
    for r in &loaded {
        println!("{} {:?} rev {}", r.frame_id, r.effective_status(), r.revision.unwrap_or(0));
    }
    print!("{}", std::fs::read_to_string(&path)?);
    Ok(())
}
