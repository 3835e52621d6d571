//! Property tests for segmentation and selection invariants.

use ctxsel::embed::HashedBow;
use ctxsel::segment::{cut_count, select_boundaries, split_sentences, Chunk, SegmentationConfig, Segmenter};
use ctxsel::select::{keep_count, select, ScoredChunk};
use ctxsel::synth::{long_document, messy_text, Lexicon};
use ctxsel::tokenize::count_tokens;
use proptest::prelude::*;

/// Indices of the `k` largest distances by full sort, smaller index first on ties.
fn sort_oracle(distances: &[f64], alpha: f64) -> Vec<usize> {
    let k = ((1.0 - alpha) * distances.len() as f64 - 1e-9).ceil().max(0.0) as usize;
    let mut order: Vec<usize> = (0..distances.len()).collect();
    order.sort_by(|&a, &b| distances[b].partial_cmp(&distances[a]).unwrap().then(a.cmp(&b)));
    let mut top: Vec<usize> = order.into_iter().take(k.min(distances.len())).collect();
    top.sort_unstable();
    top
}

fn segment(text: &str, chunk_len: usize, alpha: f64) -> Vec<Chunk> {
    let embedder = HashedBow::new(64);
    let config = SegmentationConfig { chunk_len, alpha, ..Default::default() };
    Segmenter::new(config, &embedder).unwrap().chunk_context(text).unwrap().0
}

/// Distances drawn from a small grid so ties are common.
fn distances() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec((0u8..20).prop_map(|x| x as f64 / 10.0), 0..200)
}

fn any_text() -> impl Strategy<Value = String> {
    prop_oneof![
        (0usize..60, any::<u64>()).prop_map(|(n, seed)| messy_text(n, seed)),
        "\\PC{0,300}",
        "[a-z .!?\n]{0,400}",
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn chunks_rebuild_the_context(text in any_text(), len in 4usize..64, alpha in 0.05f64..0.95) {
        let chunks = segment(&text, len, alpha);
        let rebuilt: String = chunks.iter().map(|c| c.text.as_str()).collect();
        prop_assert_eq!(&rebuilt, &text);
        for c in &chunks {
            prop_assert_eq!(&text[c.byte_start..c.byte_end], c.text.as_str());
        }
    }

    #[test]
    fn chunks_fit_the_budget(text in any_text(), len in 1usize..48) {
        for c in segment(&text, len, 0.6) {
            prop_assert!(c.token_len <= len, "{} > {len}", c.token_len);
            prop_assert_eq!(c.token_len, count_tokens(&c.text));
        }
    }

    #[test]
    fn chunk_ranges_cover_sentences_in_order(text in any_text(), len in 4usize..64) {
        let sentences = split_sentences(&text);
        let n = sentences.len();
        let chunks = segment(&text, len, 0.6);
        if n == 0 {
            prop_assert!(chunks.is_empty());
        } else {
            prop_assert_eq!(chunks[0].sentence_range.0, 0);
            prop_assert_eq!(chunks.last().unwrap().sentence_range.1, n - 1);
            for w in chunks.windows(2) {
                let (a, b) = (w[0].sentence_range, w[1].sentence_range);
                // Neighbours share an index only across a hard-split sentence.
                prop_assert!(b.0 == a.1 + 1 || (b.0 == a.1 && count_tokens(&sentences[b.0].text) > len));
                prop_assert_eq!(w[0].byte_end, w[1].byte_start);
            }
        }
    }

    #[test]
    fn merged_chunks_are_maximal(text in any_text(), len in 4usize..64) {
        let chunks = segment(&text, len, 0.6);
        for w in chunks.windows(2) {
            prop_assert!(w[0].token_len + w[1].token_len > len);
        }
    }

    #[test]
    fn segmentation_is_deterministic(text in any_text(), len in 4usize..64) {
        prop_assert_eq!(segment(&text, len, 0.6), segment(&text, len, 0.6));
    }

    #[test]
    fn boundaries_match_sort_oracle(d in distances(), alpha in 0.01f64..0.99) {
        let got = select_boundaries(&d, alpha).unwrap();
        prop_assert_eq!(got.len(), cut_count(alpha, d.len()));
        prop_assert_eq!(got, sort_oracle(&d, alpha));
    }

    #[test]
    fn larger_alpha_cuts_a_subset(d in distances(), a in 0.01f64..0.99, b in 0.01f64..0.99) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let many = select_boundaries(&d, lo).unwrap();
        let few = select_boundaries(&d, hi).unwrap();
        prop_assert!(few.iter().all(|i| many.contains(i)));
    }
}

fn scored_chunks(lens: &[usize], scores: &[f64]) -> Vec<ScoredChunk> {
    let mut pos = 0;
    lens.iter()
        .zip(scores)
        .enumerate()
        .map(|(i, (&len, &s))| {
            let text = format!("w{i} ");
            let chunk = Chunk { sentence_range: (i, i), byte_start: pos, byte_end: pos + text.len(), token_len: len, text };
            pos = chunk.byte_end;
            ScoredChunk { chunk, score_t: s, score_f: 1.0 - s, original_index: i }
        })
        .collect()
}

fn selection_case() -> impl Strategy<Value = (Vec<usize>, Vec<f64>, usize)> {
    (1usize..60).prop_flat_map(|n| {
        (
            prop::collection::vec(1usize..600, n),
            prop::collection::vec((0u8..=50).prop_map(|x| x as f64 / 50.0), n),
            1usize..4000,
        )
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn selection_keeps_order_and_budget((lens, scores, target) in selection_case()) {
        let chunks = scored_chunks(&lens, &scores);
        let total: usize = lens.iter().sum();
        let alpha_c = total as f64 / target as f64;
        let r = select(&chunks, alpha_c, target);
        let idx = r.selected_indices();
        prop_assert!(idx.windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(r.total_tokens, idx.iter().map(|&i| lens[i]).sum::<usize>());
        if alpha_c > 1.0 {
            prop_assert!(r.total_tokens <= target);
        } else {
            prop_assert_eq!(idx.len(), lens.len());
        }
        let mut all = idx.clone();
        all.extend(&r.dropped);
        all.sort_unstable();
        prop_assert_eq!(all, (0..lens.len()).collect::<Vec<_>>());
    }

    #[test]
    fn dropped_chunks_never_outrank_kept_ones((lens, scores, target) in selection_case()) {
        let chunks = scored_chunks(&lens, &scores);
        let alpha_c = lens.iter().sum::<usize>() as f64 / target as f64;
        let r = select(&chunks, alpha_c, target);
        let keep = keep_count(lens.len(), alpha_c);
        let mut order: Vec<usize> = (0..lens.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap().then(a.cmp(&b)));
        let shortlist = &order[..keep];
        let floor = r.selected.iter().map(|s| s.score_t).fold(f64::INFINITY, f64::min);
        for d in &r.dropped {
            // Only the budget trim may drop a shortlisted chunk.
            prop_assert!(shortlist.contains(d) || scores[*d] <= floor);
        }
        for s in &r.selected {
            prop_assert!(shortlist.contains(&s.original_index));
        }
    }

    #[test]
    fn positive_rescaling_keeps_the_selection((lens, scores, target) in selection_case(), k in 0.01f64..100.0) {
        let alpha_c = lens.iter().sum::<usize>() as f64 / target as f64;
        let base = select(&scored_chunks(&lens, &scores), alpha_c, target);
        let scaled: Vec<f64> = scores.iter().map(|s| s * k).collect();
        let other = select(&scored_chunks(&lens, &scaled), alpha_c, target);
        prop_assert_eq!(base.selected_indices(), other.selected_indices());
    }
}

#[test]
fn shorter_chunk_len_gives_more_chunks_on_average() {
    let lex = Lexicon::standard();
    let (mut short, mut long) = (0, 0);
    for seed in 0..8 {
        let doc = long_document(&lex, 6000, seed);
        short += segment(&doc.context, 256, 0.6).len();
        long += segment(&doc.context, 512, 0.6).len();
    }
    assert!(short >= long, "{short} < {long}");
}
