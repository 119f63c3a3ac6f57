//! Regenerates the bundled sample pair under `assets/`: two noise-free faces
//! from the sample world, their landmarks, and marker rasters that put a
//! bright dot on every landmark.
//!
//! cargo run -p otb-morph --example sample_pair

use std::path::Path;

use otb_morph::experiment::ExperimentConfig;
use otb_morph::world::SyntheticWorld;

fn main() -> otb_morph::Result<()> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("assets");
    std::fs::create_dir_all(&dir).map_err(|e| otb_morph::Error::io(&dir, e))?;
    let world = SyntheticWorld::new(ExperimentConfig::sample().world_config())?;
    for (name, id) in [("a", 0), ("b", 1)] {
        let subject = world.subject(id)?;
        subject.canonical_image().write_pnm(&dir.join(format!("face_{name}.pgm")))?;
        world
            .renderer()
            .render_markers(&subject.landmarks)
            .write_pnm(&dir.join(format!("markers_{name}.pgm")))?;
        subject.landmarks.write(&dir.join(format!("face_{name}.lm")))?;
    }
    println!("wrote {}", dir.display());
    Ok(())
}
