// Synthetic flows, low-resolution sampling and training triplets, with a
// dataset file round trip.

use tranquil::datagen::{build_triplets, make_scene, DatasetConfig, FlowConfig};
use tranquil::io::{read_dataset, write_dataset, DatasetHeader};
use tranquil::patchpipe::PatchLayout;
use tranquil::{Result, RngStream};

pub fn run_example() -> Result<()> {
    let layout = PatchLayout::desk_2d();
    let data = DatasetConfig::for_layout(&layout, 2, 40);
    let mut rng = RngStream::new(4, 0);
    let flow = FlowConfig::new("taylor-green-vortex".parse()?, 300, 8);
    let scene = make_scene(&flow, &data, &mut rng)?;
    println!(
        "high-res {} points, low-res {} points (spacing {:.3}), {} frames",
        scene.high[0].len(),
        scene.low.frames[0].len(),
        data.low_spacing,
        scene.high.len()
    );

    let triplets = build_triplets(&scene.high, &scene.low.frames, &layout, data.triplets, &mut rng)?;
    let mean_k = triplets.iter().map(|t| t.k()).sum::<usize>() as f64 / triplets.len() as f64;
    let mean_n = triplets.iter().map(|t| t.n()).sum::<usize>() as f64 / triplets.len() as f64;
    println!("{} triplets, mean k {mean_k:.1}, mean n {mean_n:.1}", triplets.len());

    let header = DatasetHeader { dim: 2, r: layout.r, k_max: layout.k_max, n_max: layout.n_max };
    let mut bytes = Vec::new();
    write_dataset(&mut bytes, header, &triplets)?;
    let (_, back) = read_dataset(&mut bytes.as_slice())?;
    println!("dataset file: {} bytes, {} triplets read back", bytes.len(), back.len());
    assert_eq!(back.len(), triplets.len());
    assert!(back.iter().zip(&triplets).all(|(a, b)| a.k() == b.k() && a.n() == b.n()));
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
