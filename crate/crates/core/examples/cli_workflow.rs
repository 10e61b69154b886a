// The command-line workflow driven from code: generate, train, resume,
// simulate, infer and evaluate, all through files in a scratch directory.

use tranquil::cli::{cmd_eval, cmd_gen, cmd_infer, cmd_simulate, cmd_train};
use tranquil::config::RunConfig;
use tranquil::io::load_checkpoint;
use tranquil::Result;

pub fn run_example() -> Result<()> {
    let dir = std::env::temp_dir().join(format!("tranquil-cli-workflow-{}", std::process::id()));
    std::fs::create_dir_all(&dir)?;
    let cfg = RunConfig::parse(
        "triplets = 80\nheld_out = 20\nscenes_per_field = 1\nn_points = 200\nframes = 8\nepochs = 2\nseed = 3\n",
    )?;

    let data = dir.join("data.tqd");
    let hist = cmd_gen(&cfg, &data)?;
    println!("k/n histogram rows: {}", hist.lines().count() - 1);

    // One epoch, then resume to the configured two.
    let mut one = cfg.clone();
    one.train.epochs = 1;
    let model = dir.join("model.tqm");
    cmd_train(&one, &data, None, &model)?;
    let steps_one = load_checkpoint(&model)?.step;
    let report = cmd_train(&cfg, &data, Some(&model), &model)?;
    let ck = load_checkpoint(&model)?;
    println!("resumed from step {steps_one} to step {} (epoch {})", ck.step, ck.epoch);
    assert_eq!(ck.step, 2 * steps_one);
    println!("{}", report.lines().last().unwrap_or_default());

    let (high, low, up) = (dir.join("high.tqc"), dir.join("low.tqc"), dir.join("up.tqc"));
    cmd_simulate(&cfg, "translation+deformation-mix", &high, &low)?;
    print!("{}", cmd_infer(&cfg, &model, &low, &up)?);
    print!("{}", cmd_eval(&cfg, &[model], Some(&data), Some((&low, &high)))?);
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}

fn main() -> Result<()> {
    run_example()
}
