//! Tokenizes the built-in seeds, checks them against the fragment grammar,
//! and shows where a broken edit fails.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlfuzz::corpus::{build_vocab, DEFAULT_NGRAM_THRESHOLD};
use rlfuzz::corpus::builtin::{sqli_seeds, xss_seeds};
use rlfuzz::grammar::{check, generate, Dialect};
use rlfuzz::mutation::{apply, MutationAction};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let sqli = sqli_seeds();
    let xss = xss_seeds();
    let all: Vec<&String> = sqli.iter().chain(&xss).collect();
    let vocab = build_vocab(&all, Some(DEFAULT_NGRAM_THRESHOLD))?;
    println!("vocabulary: {} tokens, {} n-grams", vocab.len(), vocab.ngram_ids().count());

    for (dialect, seeds) in [(Dialect::SqlFragment, &sqli), (Dialect::MarkupScript, &xss)] {
        let ok = seeds.iter().filter(|s| check(&vocab.canonicalize(&vocab.tokenize(s).unwrap()), dialect).well_formed).count();
        println!("{dialect}: {ok}/{} seeds well formed", seeds.len());
    }

    let seq = vocab.canonicalize(&vocab.tokenize("' OR 1 = 1 ; --")?);
    println!("\n{:?}", seq.surfaces());
    for pos in 0..seq.len() {
        let edited = apply(&vocab, &seq, MutationAction::delete(pos), 64)?;
        let verdict = check(&edited, Dialect::SqlFragment);
        println!("delete {pos}: {:<20} well formed {:<5} failure at {:?}", edited.detokenize(), verdict.well_formed, verdict.failure_position);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    println!("\ngrammar samples:");
    for dialect in Dialect::ALL {
        for _ in 0..3 {
            let s = generate(&vocab, dialect, &mut rng, 4);
            println!("  {dialect}: {}  (well formed {})", s.detokenize(), check(&s, dialect).well_formed);
        }
    }
    Ok(())
}
