use proptest::prelude::*;
use rlfuzz::corpus::{build_vocab, Origin, TokenSequence, Vocab};
use rlfuzz::mutation::{apply, enumerate_actions, MutationAction, MutationError, MutationOp};

fn alphabet() -> (Vocab, Vec<u32>) {
    let vocab = build_vocab(&["a b c d"], None).unwrap();
    let ids = ["a", "b", "c", "d"].iter().map(|s| vocab.id_of(s).unwrap()).collect();
    (vocab, ids)
}

fn sequence(vocab: &Vocab, ids: &[u32]) -> TokenSequence {
    let surfaces: Vec<&str> = ids.iter().map(|&i| vocab.surface(i)).collect();
    vocab.from_surfaces(&surfaces, Origin::Seed).unwrap()
}

fn all_sequences(alpha: &[u32], max: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::new();
    let mut layer = vec![Vec::new()];
    for _ in 0..max {
        layer = layer
            .iter()
            .flat_map(|s: &Vec<u32>| alpha.iter().map(move |&t| [s.as_slice(), &[t]].concat()))
            .collect();
        out.extend(layer.clone());
    }
    out
}

/// Reference edit built from slices.
fn expected(s: &[u32], op: MutationOp, pos: usize, tok: u32, max_len: usize) -> Option<Vec<u32>> {
    match op {
        MutationOp::Insert if pos <= s.len() && s.len() < max_len => Some([&s[..pos], &[tok], &s[pos..]].concat()),
        MutationOp::Delete if pos < s.len() && s.len() > 1 => Some([&s[..pos], &s[pos + 1..]].concat()),
        MutationOp::Replace if pos < s.len() => Some([&s[..pos], &[tok], &s[pos + 1..]].concat()),
        _ => None,
    }
}

#[test]
fn apply_matches_brute_force_on_short_sequences() {
    let (vocab, alpha) = alphabet();
    let mut checked = 0;
    for max_len in [3, 4] {
        for s in all_sequences(&alpha, 3) {
            let seq = sequence(&vocab, &s);
            for op in MutationOp::ALL {
                for pos in 0..=s.len() + 1 {
                    let toks: &[u32] = if op == MutationOp::Delete { &[0] } else { &alpha };
                    for &tok in toks {
                        let action = MutationAction { op, position: pos, token: tok };
                        let got = apply(&vocab, &seq, action, max_len).ok().map(|t| t.ids().iter().map(|&i| i as u32).collect::<Vec<_>>());
                        assert_eq!(got, expected(&s, op, pos, tok, max_len), "{s:?} {action:?} max {max_len}");
                        checked += 1;
                    }
                }
            }
        }
    }
    // 84 sequences, two length caps
    assert_eq!(all_sequences(&alpha, 3).len(), 84);
    assert!(checked > 2000);
}

#[test]
fn enumeration_lists_exactly_the_legal_actions() {
    let (vocab, alpha) = alphabet();
    let vocab_size = vocab.len();
    for s in all_sequences(&alpha, 3) {
        let seq = sequence(&vocab, &s);
        let listed = enumerate_actions(s.len(), vocab_size, 3);
        let mut legal = Vec::new();
        for op in MutationOp::ALL {
            for pos in 0..=s.len() {
                for tok in 0..vocab_size as u32 {
                    let a = MutationAction { op, position: pos, token: if op == MutationOp::Delete { 0 } else { tok } };
                    if !legal.contains(&a) && apply(&vocab, &seq, a, 3).is_ok() {
                        legal.push(a);
                    }
                }
            }
        }
        let mut listed_sorted = listed.clone();
        listed_sorted.sort_by_key(|a| (a.op, a.position, a.token));
        legal.sort_by_key(|a| (a.op, a.position, a.token));
        assert_eq!(listed_sorted, legal, "{s:?}");
    }
}

#[test]
fn errors_name_the_violation() {
    let (vocab, alpha) = alphabet();
    let one = sequence(&vocab, &alpha[..1]);
    let three = sequence(&vocab, &alpha[..3]);
    assert_eq!(apply(&vocab, &one, MutationAction::delete(0), 4), Err(MutationError::WouldBeEmpty));
    assert_eq!(apply(&vocab, &three, MutationAction::insert(0, alpha[0]), 3), Err(MutationError::TooLong { max: 3 }));
    assert!(matches!(apply(&vocab, &one, MutationAction::replace(1, alpha[0]), 4), Err(MutationError::OutOfBounds { .. })));
    let unknown = vocab.len() as u32;
    assert_eq!(apply(&vocab, &one, MutationAction::replace(0, unknown), 4), Err(MutationError::UnknownToken(unknown)));
}

proptest! {
    #[test]
    fn insert_then_delete_restores_ids(ids in proptest::collection::vec(0usize..4, 1..8), pos in 0usize..9, tok in 0usize..4) {
        let (vocab, alpha) = alphabet();
        let s: Vec<u32> = ids.iter().map(|&i| alpha[i]).collect();
        let seq = sequence(&vocab, &s);
        let pos = pos % (s.len() + 1);
        let grown = apply(&vocab, &seq, MutationAction::insert(pos, alpha[tok]), 16).unwrap();
        prop_assert_eq!(grown.len(), s.len() + 1);
        let back = apply(&vocab, &grown, MutationAction::delete(pos), 16).unwrap();
        prop_assert_eq!(back.ids(), seq.ids());
    }

    #[test]
    fn replace_changes_one_slot(ids in proptest::collection::vec(0usize..4, 1..8), pos in 0usize..8, tok in 0usize..4) {
        let (vocab, alpha) = alphabet();
        let s: Vec<u32> = ids.iter().map(|&i| alpha[i]).collect();
        let seq = sequence(&vocab, &s);
        let pos = pos % s.len();
        let out = apply(&vocab, &seq, MutationAction::replace(pos, alpha[tok]), 16).unwrap();
        let before = seq.ids();
        let after = out.ids();
        prop_assert_eq!(after.len(), before.len());
        for i in 0..before.len() {
            if i == pos {
                prop_assert_eq!(after[i], alpha[tok] as usize);
            } else {
                prop_assert_eq!(after[i], before[i]);
            }
        }
    }
}
