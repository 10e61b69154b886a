// Forward pass, latent features and parameter gradients of the generator.

use tranquil::network::{backward, forward, generate, latent, ArchSpec, ModelParams};
use tranquil::{pad, PointCloud, Result, RngStream};

pub fn run_example() -> Result<()> {
    let arch = ArchSpec::new(2, 24, 4, 0.25)?;
    let mut rng = RngStream::new(3, 0);
    let params = ModelParams::init(arch, &mut rng);
    println!("parameters: {}", params.n_params());

    let k = 10;
    let pos = (0..2 * k).map(|_| rng.range(-0.9, 0.9)).collect();
    let vel = (0..2 * k).map(|_| rng.range(-0.1, 0.1)).collect();
    let input = pad(&PointCloud::new(2, pos)?.with_velocity(vel)?, 24)?;

    let (raw, trace) = forward(&params, &input)?;
    let out = generate(&params, &input)?;
    println!("raw slots {} -> {} generated points for {k} inputs", raw.len(), out.len());
    assert_eq!(out.len(), 4 * k);

    let feats = latent(&trace);
    println!("latent: {} rows of width {}", feats.len(), trace.latent_width());

    // Gradient of the mean x coordinate of the generated points.
    let mut seed = vec![0.0; out.len() * 2];
    seed.iter_mut().step_by(2).for_each(|g| *g = 1.0 / out.len() as f64);
    let grad = backward(&params, &trace, &seed)?;
    let norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    println!("|d mean_x / d params| = {norm:.4}");
    assert_eq!(grad.len(), params.n_params());
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
