//! Start the annotation service on a throwaway manifest.
//!
//! cargo run --example annotation_server -- [addr]
//! then: curl localhost:8080/api/frames

use roadlayout::io::manifest::{save_manifest, FrameRecord};
use roadlayout::service::{serve, ServiceConfig};

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let addr = std::env::args().nth(1).unwrap_or_else(|| "127.0.0.1:8080".into());
    let dir = tempfile::tempdir()?;
    let manifest = dir.path().join("manifest.jsonl");
    let records: Vec<FrameRecord> = (0..5)
        .map(|i| FrameRecord::new(format!("{i:06}"), format!("{i:06}.png"), "default"))
        .collect();
    save_manifest(&records, &manifest)?;
    serve(ServiceConfig::new(manifest, dir.path().to_path_buf()), &addr).await?;
    Ok(())
}
