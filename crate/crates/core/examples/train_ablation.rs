// Loss-variant ablation on the synthetic desk corpus.
//
// `run_example` uses a small corpus so it finishes in seconds. Pass `desk`
// on the command line for the full-size run (2000 training triplets,
// 10 epochs per variant, several minutes each on one core):
//
// ```text
// cargo run --release --example train_ablation -- desk
// ```

use tranquil::datagen::desk_corpus;
use tranquil::patchpipe::PatchLayout;
use tranquil::trainer::{train, LossVariant, MetricsRecord, TrainConfig};
use tranquil::{Result, RngStream};

pub fn ablation(triplets: usize, held_out: usize, epochs: usize) -> Result<Vec<MetricsRecord>> {
    let layout = PatchLayout::desk_2d();
    let (_, mut set) = desk_corpus(2, &layout, 500, 24, 2, triplets + held_out, &mut RngStream::new(7, 0))?;
    let held = set.split_off(triplets);
    println!("{}", MetricsRecord::CSV_HEADER);
    let mut rows = Vec::new();
    for variant in LossVariant::ALL {
        let cfg = TrainConfig { loss_variant: variant, epochs, ..TrainConfig::desk_2d() };
        let (_, report) = train(&set, Some(&held), &cfg)?;
        let m = report.final_metrics.expect("held-out set given");
        println!("{}", m.csv_row());
        rows.push(m);
    }
    Ok(rows)
}

pub fn run_example() -> Result<()> {
    let rows = ablation(64, 16, 1)?;
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|m| m.ls.is_finite() && m.samples == 16));
    Ok(())
}

fn main() -> Result<()> {
    if std::env::args().nth(1).as_deref() == Some("desk") {
        ablation(2000, 400, TrainConfig::desk_2d().epochs).map(|_| ())
    } else {
        run_example()
    }
}
