// Patch centers tracked through a rotating flow, with coverage audit.

use tranquil::datagen::{simulate_flow, BASE_SPACING};
use tranquil::patchpipe::{centers_at, coverage, track_centers, PatchLayout};
use tranquil::{Result, RngStream};

pub fn run_example() -> Result<()> {
    let layout = PatchLayout::desk_2d();
    let mut rng = RngStream::new(5, 0);
    let frames = simulate_flow("rigid-rotation", 400, 10, 1.0, &mut rng)?;
    let centers = track_centers(&frames, &layout, BASE_SPACING, &mut rng)?;
    for (f, frame) in frames.iter().enumerate() {
        let alive = centers_at(&centers, f);
        let cov = coverage(frame, &alive, layout.low_radius);
        println!("frame {f}: {} centers, coverage {:.3}", alive.len(), cov);
        assert_eq!(cov, 1.0);
    }
    let born_later = centers.iter().filter(|c| c.birth_frame > 0).count();
    println!("{} centers in total, {born_later} inserted after frame 0", centers.len());
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
