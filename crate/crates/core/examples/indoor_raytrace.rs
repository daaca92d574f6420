//! RSS maps of the two-room/corridor office at 28 GHz.
//!
//! `cargo run --release --example indoor_raytrace -- [mode] [tessellation] [models] [out]`
//!
//! `mode` is `flat`, `attenuation-only` or `with-diffuse`. Without a models
//! file the partitions are smooth plasterboard slabs.

use std::fs;
use std::path::Path;
use std::time::Instant;

use slabscat::sbr::{rss_map, GridSpec, RayScene, RssMode, Surface};
use slabscat::scatmodel::ModelSet;

fn main() -> slabscat::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let mode: RssMode = args.first().map(String::as_str).unwrap_or("flat").parse()?;
    let level: u32 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let partition = match args.get(2) {
        Some(p) => Surface::RoughSlab {
            thickness: 0.1,
            models: ModelSet::from_text(&fs::read_to_string(p)?)?,
        },
        None => Surface::SmoothSlab { thickness: 0.1 },
    };
    let mut scene = RayScene::reference(partition)?;
    scene.limits.tessellation = level;
    let grid = GridSpec::covering([0.0, 17.0], [0.0, 10.0], 0.25, 1.5)?;

    let t0 = Instant::now();
    let map = rss_map(&scene, &grid, mode)?;
    eprintln!(
        "{} tubes ({} culled) in {:.1?}",
        map.stats.tubes,
        map.stats.culled,
        t0.elapsed()
    );

    let regions = [
        ("corridor behind Tx", [0.25, 3.75], [7.25, 9.75]),
        ("west room", [0.25, 6.75], [0.25, 6.75]),
        ("east room", [7.25, 13.75], [0.25, 6.75]),
        ("east corridor", [14.25, 16.75], [0.25, 9.75]),
    ];
    for (name, x, y) in regions {
        if let Some(m) = map.mean_dbm(x, y) {
            println!("{name:>20}: {m:7.2} dBm");
        }
    }
    let covered = map.rss_dbm.iter().filter(|v| v.is_finite()).count();
    println!("{covered}/{} receivers reached", grid.len());

    if let Some(out) = args.get(3) {
        fs::write(Path::new(out), map.to_text(None))?;
    }
    Ok(())
}
