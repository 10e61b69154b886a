// Fixed-capacity inputs: padding, mask recovery and output truncation.

use tranquil::{infer_mask, pad, truncate_output, PointCloud, Result, PAD_VALUE};

pub fn run_example() -> Result<()> {
    let cloud = PointCloud::from_points(2, &[[0.1, 0.2], [-0.5, 0.9], [1.0, -1.0]])?
        .with_velocity(vec![0.0, 0.1, 0.2, 0.0, -0.1, 0.0])?;
    let padded = pad(&cloud, 8)?;
    let mask = infer_mask(&padded);
    println!("capacity {} count {} mask {:?}", padded.capacity(), padded.count(), mask.bits());
    assert!(mask.is_prefix() && mask.ones() == 3);
    assert_eq!(padded.data().point(7), &[PAD_VALUE, PAD_VALUE]);
    assert_eq!(padded.unpad(), cloud);

    // A network with upsampling factor r keeps the first r * k raw outputs.
    let r = 4;
    let raw = PointCloud::new(2, (0..8 * r * 2).map(|i| i as f64).collect())?;
    let kept = truncate_output(&raw, r * padded.count())?;
    println!("raw outputs {} -> kept {}", raw.len(), kept.len());
    assert_eq!(kept.len(), 12);

    // Coordinates outside the patch range are refused.
    assert!(pad(&PointCloud::from_points(2, &[[1.5, 0.0]])?, 4).is_err());
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
