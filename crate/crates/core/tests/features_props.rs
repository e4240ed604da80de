use legal_sbd::features::{
    extract, extract_all, FeatureValue, LENGTH_WINDOW, LOWERCASE_WINDOW, MAX_WINDOW, SHAPE_WINDOW,
    SIGN_WINDOW,
};
use legal_sbd::tokenizer::{tokenize, Token, TokenKind, TokenSequence};
use proptest::prelude::*;

/// Keys contributed by the neighbour at distance `d`.
fn neighbour_keys(d: usize) -> usize {
    2 + 2 * usize::from(d <= 7) + usize::from(d <= 5) + 4 * usize::from(d <= 3)
}

fn expected_keys(i: usize, len: usize) -> usize {
    let before = (1..=10)
        .filter(|&d| d <= i)
        .map(neighbour_keys)
        .sum::<usize>();
    let after = (1..=10)
        .filter(|&d| i + d < len)
        .map(neighbour_keys)
        .sum::<usize>();
    10 + before + after
}

fn words(n: usize) -> TokenSequence {
    let text: Vec<String> = (0..n)
        .map(|i| "abcdefghijklmnopqrstuvwxyz"[i % 26..=i % 26].repeat(1 + i / 26))
        .collect();
    tokenize(&text.join(" "))
}

#[test]
fn window_sizes() {
    assert_eq!(
        (
            MAX_WINDOW,
            LOWERCASE_WINDOW,
            LENGTH_WINDOW,
            SIGN_WINDOW,
            SHAPE_WINDOW
        ),
        (10, 7, 7, 5, 3)
    );
}

#[test]
fn first_of_thirty_tokens() {
    let seq = words(15);
    assert_eq!(seq.len(), 29);
    let seq = tokenize(&(seq.detokenize() + " "));
    assert_eq!(seq.len(), 30);
    let f = extract(&seq, 0).unwrap();
    assert_eq!(f.len(), expected_keys(0, 30));
    assert_eq!(f.len(), 61);
    assert!(f.iter().all(|(k, _)| !k.starts_with('-')));
    assert!(f.get("+10:special").is_some());
    assert!(f.get("+11:special").is_none());
    assert!(f.get("+8:lowercase").is_none());
    assert!(f.get("+7:lowercase").is_some());
    assert_eq!(f.get("0:BOS"), Some(&FeatureValue::Bool(true)));
}

#[test]
fn key_counts_everywhere() {
    for n in [1, 2, 5, 11, 21, 40] {
        let seq = tokenize(&"ab ".repeat(n)[..n]);
        let all = extract_all(&seq);
        for (i, f) in all.iter().enumerate() {
            assert_eq!(
                f.len(),
                expected_keys(i, seq.len()),
                "position {i} of {}",
                seq.len()
            );
            assert_eq!(f, &extract(&seq, i).unwrap());
        }
    }
}

#[test]
fn out_of_range_position() {
    assert!(extract(&words(2), 3).is_err());
}

proptest! {
    #[test]
    fn locality(n in 12usize..40, i in 0usize..40, far in 0usize..40) {
        let seq = words(n);
        let i = i % seq.len();
        let far = far % seq.len();
        prop_assume!(far.abs_diff(i) > MAX_WINDOW);
        let mut changed = seq.clone();
        let t = &changed.tokens[far];
        changed.tokens[far] = Token { text: "Z".repeat(t.char_len()), start: t.start, end: t.end, kind: TokenKind::Word };
        prop_assert_eq!(extract(&seq, i).unwrap(), extract(&changed, i).unwrap());
    }

    #[test]
    fn offsets_stay_in_window(s in "[A-Za-z0-9 .,'\n]{1,60}") {
        let seq = tokenize(&s);
        for f in extract_all(&seq) {
            for (k, _) in f.iter() {
                if k == "bias" {
                    continue;
                }
                let offset: i64 = k.split(':').next().unwrap().parse().unwrap();
                prop_assert!(offset.unsigned_abs() as usize <= MAX_WINDOW);
            }
        }
    }
}
