// Temporal frequency content of the latent space along patch sequences,
// for frames in order and shuffled.

use tranquil::datagen::{build_patch_sequences, simulate_flow};
use tranquil::evaluation::{latent_frequency_score, latent_series};
use tranquil::network::ModelParams;
use tranquil::patchpipe::PatchLayout;
use tranquil::trainer::TrainConfig;
use tranquil::{Result, RngStream};

pub fn run_example() -> Result<()> {
    let layout = PatchLayout::desk_2d();
    let mut rng = RngStream::new(8, 0);
    let frames = simulate_flow("shear", 200, 20, 1.0, &mut rng)?;
    let sequences = build_patch_sequences(&frames, &layout, 6, 16, &mut rng)?;
    let params = ModelParams::init(TrainConfig::desk_2d().arch()?, &mut RngStream::new(8, 1));

    let ordered = latent_frequency_score(&latent_series(&params, &sequences, None)?)?;
    let shuffled = latent_frequency_score(&latent_series(&params, &sequences, Some(&mut RngStream::new(8, 2)))?)?;
    println!("frequency score: ordered {:.3}, shuffled {:.3}", ordered.score, shuffled.score);
    print!("{}", ordered.to_csv());
    // A smooth flow seen in order has less high-frequency latent content.
    assert!(ordered.score < shuffled.score);
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
