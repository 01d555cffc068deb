//! Masked-language-model pretraining of the encoder on the seed corpus.
//! Pass an epoch count to shorten or extend the schedule (default 60).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlfuzz::campaign::{pretrain, save_pretrained, load_pretrained, embedded_target, CampaignConfig};
use rlfuzz::encoder::{masked_accuracy, PretrainSchedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let epochs = std::env::args().nth(1).map(|a| a.parse()).transpose()?.unwrap_or(60);
    let cfg = CampaignConfig { pretraining: PretrainSchedule { epochs, ..Default::default() }, ..Default::default() };
    let (bank, _, _) = embedded_target(&cfg, &[])?;
    let corpus = bank.corpus_ids();
    println!("{} seeds, vocabulary {}, {epochs} epochs", corpus.len(), bank.vocab.len());

    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let pretrained = pretrain(&bank, &cfg)?;
    if let Some(r) = &pretrained.report {
        for (e, l) in r.epoch_losses.iter().enumerate().filter(|(e, _)| e % (epochs / 10).max(1) == 0) {
            println!("epoch {e:>4}  loss {l:.4}");
        }
    }
    println!("masked-token accuracy: {:.3}", masked_accuracy(&pretrained.model, &corpus, 0.15, &mut rng)?);

    let dir = std::env::temp_dir().join("rlfuzz-example.ckpt");
    save_pretrained(&dir, &pretrained)?;
    let back = load_pretrained(&dir)?;
    println!("checkpoint {} round-trips: {}", dir.display(), back.vocab == pretrained.vocab);
    Ok(())
}
