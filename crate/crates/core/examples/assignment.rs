// Optimal point matching: exact, approximate and unbalanced solves.

use tranquil::transport::{solve, solve_approx, solve_exact, solve_unbalanced};
use tranquil::{PointCloud, Result, RngStream};

pub fn run_example() -> Result<()> {
    let mut rng = RngStream::new(1, 0);
    let cloud = |rng: &mut RngStream, n: usize| PointCloud::new(2, (0..2 * n).map(|_| rng.range(-1.0, 1.0)).collect());
    let a = cloud(&mut rng, 64)?;
    let b = cloud(&mut rng, 64)?;

    let exact = solve_exact(&a, &b)?;
    let approx = solve_approx(&a, &b, 1e-4)?;
    println!("exact cost  {:.6}", exact.cost());
    println!("auction     {:.6} (eps 1e-4)", approx.cost());
    assert!(approx.cost() >= exact.cost() - 1e-9);
    assert!(approx.cost() <= exact.cost() + 64.0 * 1e-4 + 1e-9);

    // Relabelling the targets does not change the optimum.
    let perm = rng.permutation(64);
    let relabelled = solve(&a, &b.select(&perm))?;
    println!("relabelled  {:.6}", relabelled.cost());
    assert!((relabelled.cost() - exact.cost()).abs() < 1e-9);

    // More targets than sources: every target is still matched.
    let big = cloud(&mut rng, 150)?;
    let plan = solve_unbalanced(&a, &big)?;
    println!("unbalanced  {} pairs for {} -> {}", plan.pairs().len(), plan.n_source(), plan.n_target());
    assert_eq!(plan.pairs().len(), 150);
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
