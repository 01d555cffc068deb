use proptest::prelude::*;
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rlfuzz::corpus::{build_vocab, builtin, split_pieces, Origin, DEFAULT_NGRAM_THRESHOLD};
use rlfuzz::grammar::{check, check_pieces, generate, generate_surfaces, Dialect};

fn pieces_of(text: &str) -> Vec<String> {
    split_pieces(text).into_iter().map(|p| p.surface).collect()
}

#[test]
fn shipped_seeds_are_well_formed() {
    for s in builtin::sqli_seeds() {
        let p = pieces_of(&s);
        let refs: Vec<&str> = p.iter().map(String::as_str).collect();
        let v = check_pieces(&refs, Dialect::SqlFragment);
        assert!(v.well_formed, "{s} fails at {:?}", v.failure_position);
    }
    for s in builtin::xss_seeds() {
        let p = pieces_of(&s);
        let refs: Vec<&str> = p.iter().map(String::as_str).collect();
        let v = check_pieces(&refs, Dialect::MarkupScript);
        assert!(v.well_formed, "{s} fails at {:?}", v.failure_position);
    }
}

#[test]
fn generated_sentences_always_validate() {
    let vocab = build_vocab(&builtin::all_seeds(), Some(DEFAULT_NGRAM_THRESHOLD)).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    for dialect in Dialect::ALL {
        for i in 0..1000 {
            let depth = 1 + i % 5;
            let seq = generate(&vocab, dialect, &mut rng, depth);
            let v = check(&seq, dialect);
            assert!(v.well_formed, "{dialect}: {} (depth {depth})", seq.detokenize());
            // the merged (state) form validates too
            assert!(check(&vocab.merge_ngrams(&seq), dialect).well_formed);
        }
    }
}

#[test]
fn random_token_noise_is_rejected() {
    let vocab = build_vocab(&builtin::all_seeds(), Some(DEFAULT_NGRAM_THRESHOLD)).unwrap();
    let ids: Vec<u32> = (5..vocab.len() as u32).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for dialect in Dialect::ALL {
        let mut accepted = 0;
        for _ in 0..10_000 {
            let surfaces: Vec<&str> = (0..8).map(|_| vocab.surface(*ids.choose(&mut rng).unwrap())).collect();
            let seq = vocab.from_surfaces(&surfaces, Origin::Mutated).unwrap();
            if check(&seq, dialect).well_formed {
                accepted += 1;
            }
        }
        let rate = accepted as f64 / 10_000.0;
        assert!(rate < 0.05, "{dialect}: noise acceptance {rate}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn generated_text_round_trips(seed in any::<u64>(), depth in 1usize..6, markup in any::<bool>()) {
        let dialect = if markup { Dialect::MarkupScript } else { Dialect::SqlFragment };
        let vocab = build_vocab(&["x"], None).unwrap();
        let surfaces = generate_surfaces(dialect, &mut ChaCha8Rng::seed_from_u64(seed), depth);
        let seq = vocab.from_surfaces(&surfaces, Origin::Seed).unwrap();
        let text = seq.detokenize();
        let once = pieces_of(&text);
        prop_assert_eq!(&once, &surfaces);
        let again = pieces_of(&rlfuzz::corpus::join_pieces(split_pieces(&text).iter().map(|p| (p.surface.as_str(), p.spaced))));
        prop_assert_eq!(once, again);
    }

    #[test]
    fn check_is_total(words in proptest::collection::vec("[ -~]{0,6}", 1..64)) {
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        for d in Dialect::ALL {
            let v = check_pieces(&refs, d);
            prop_assert_eq!(v.well_formed, v.failure_position.is_none());
            if let Some(p) = v.failure_position {
                prop_assert!(p < refs.len());
            }
        }
    }
}
