//! Trains the sparse autoencoder on a synthetic factor-model embedding and
//! prints the epoch log plus summary statistics.
//!
//! ```text
//! cargo run --release -p embcomp --example desk_train -- [epochs] [batch] [seed]
//! ```

use embcomp::codec::compute_alpha;
use embcomp::eval::cosine;
use embcomp::synth::factor_embedding;
use embcomp::wta::{EpochLog, TrainConfig, Trainer};

fn main() -> embcomp::Result<()> {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let epochs = args.first().copied().unwrap_or(2000);
    let batch_size = args.get(1).copied().unwrap_or(256);
    let seed = args.get(2).copied().unwrap_or(0) as u64;

    let e = factor_embedding(2048, 32, 10, seed);
    let cfg = TrainConfig {
        k: 128,
        alpha: compute_alpha(96, 128),
        batch_size,
        epochs,
        seed,
        ..TrainConfig::default()
    };
    let alpha = cfg.alpha;
    let mut trainer = Trainer::new(e.dim(), cfg)?;
    println!("{}", EpochLog::HEADER);
    trainer.fit(&e, |entry| {
        if entry.epoch % 50 == 0 {
            println!("{entry}");
        }
    })?;
    let (enc, recon) = trainer.encode(&e)?;
    let mut cos = (0..e.len())
        .map(|i| {
            cosine(
                e.row(i).as_slice().unwrap(),
                recon.row(i).as_slice().unwrap(),
            )
        })
        .collect::<embcomp::Result<Vec<f64>>>()?;
    cos.sort_by(f64::total_cmp);
    let best = trainer
        .log()
        .iter()
        .map(|l| l.mean_error)
        .fold(f64::INFINITY, f64::min);
    println!(
        "alpha {alpha:.4} nonzero {:.4} median_cos {:.4} best_epoch_mse {best:.5} sigma {:.2}",
        enc.nonzero_fraction(),
        cos[cos.len() / 2],
        trainer.schedule().sigma
    );
    Ok(())
}
