// Nearest-neighbor density and derivative errors of an upsampled sequence
// against its high-resolution reference.

use tranquil::datagen::{make_scene, DatasetConfig, FlowConfig};
use tranquil::evaluation::{derivative_errors, nn_track, track_csv, DerivativeErrors};
use tranquil::network::ModelParams;
use tranquil::patchpipe::PatchLayout;
use tranquil::trainer::TrainConfig;
use tranquil::cli::upsample_sequence;
use tranquil::{Result, RngStream};

pub fn run_example() -> Result<()> {
    let layout = PatchLayout::desk_2d();
    let data = DatasetConfig::for_layout(&layout, 2, 0);
    let scene = make_scene(&FlowConfig::new("shear".parse()?, 250, 8), &data, &mut RngStream::new(9, 0))?;

    // Untrained weights with a silent head: every input point is repeated r times.
    let mut params = ModelParams::init(TrainConfig::desk_2d().arch()?, &mut RngStream::new(9, 1));
    params.zero_head_output();
    let gen = upsample_sequence(&params, &scene.low.frames, &layout, data.low_spacing, &mut RngStream::new(9, 2))?;

    let track = nn_track(&gen, &scene.high)?;
    print!("{}", track_csv(&track));
    let e = derivative_errors(&track, &scene.high)?;
    println!("{}\n{}", DerivativeErrors::CSV_HEADER, e.csv_row("repeat-inputs"));
    for (g, l) in gen.iter().zip(&scene.low.frames) {
        assert_eq!(g.len(), layout.r * l.len());
    }
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
