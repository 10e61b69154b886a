// Spatial and temporal loss terms on a three-frame toy sample.

use tranquil::losses::{loss_final, LossWeights, SiameseInputs, SiameseTerms, SpatialFrames};
use tranquil::transport::solve;
use tranquil::{PointCloud, Result, RngStream};

pub fn run_example() -> Result<()> {
    let mut rng = RngStream::new(2, 0);
    let n = 12;
    let base: Vec<f64> = (0..2 * n).map(|_| rng.range(-0.8, 0.8)).collect();
    // Targets drift to the right; one generator follows, one jitters in place.
    let frame = |shift: f64, jitter: f64, rng: &mut RngStream| {
        let pos = base
            .iter()
            .enumerate()
            .map(|(k, x)| x + if k % 2 == 0 { shift } else { 0.0 } + jitter * rng.range(-1.0, 1.0))
            .collect();
        PointCloud::new(2, pos)
    };
    let targets = [frame(0.0, 0.0, &mut rng)?, frame(0.05, 0.0, &mut rng)?, frame(0.1, 0.0, &mut rng)?];
    let following = [frame(0.0, 0.01, &mut rng)?, frame(0.05, 0.01, &mut rng)?, frame(0.1, 0.01, &mut rng)?];
    let jittering = [frame(0.0, 0.05, &mut rng)?, frame(0.0, 0.05, &mut rng)?, frame(0.0, 0.05, &mut rng)?];

    let mut totals = Vec::new();
    for (name, gen) in [("following", &following), ("jittering", &jittering)] {
        let plans = [solve(&gen[0], &targets[0])?, solve(&gen[1], &targets[1])?, solve(&gen[2], &targets[2])?];
        let inputs = SiameseInputs {
            gen: [&gen[0], &gen[1], &gen[2]],
            targets: [&targets[0], &targets[1], &targets[2]],
            plans: [&plans[0], &plans[1], &plans[2]],
            group_size: 3,
            spatial_frames: SpatialFrames::AllThree,
        };
        let t = SiameseTerms::compute(&inputs)?;
        let total = loss_final(&inputs, &LossWeights::BASE_2D)?;
        println!(
            "{name:>9}: L_S {:.4} L_2V {:.4} L_2A {:.4} L_EV {:.4} L_EA {:.4} L_M {:.3} final {:.4}",
            t.spatial.value,
            t.l2_velocity.value,
            t.l2_acceleration.value,
            t.emd_velocity.value,
            t.emd_acceleration.value,
            t.mingling.value,
            total.value
        );
        totals.push((t.emd_velocity.value, total.value));
    }
    // Matching the target motion is rewarded by the temporal terms.
    assert!(totals[0].0 < totals[1].0 && totals[0].1 < totals[1].1);
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
