//! Property tests for the canonicalization, parsing, and encoding layers.

use std::collections::BTreeMap;

use proptest::prelude::*;

use relbridge::bridge::decode_checkpoint;
use relbridge::datasets::fixed_split;
use relbridge::graph::{parse_coo, SparseMatrix};
use relbridge::llm::{parse_cache_text, render_template, CacheEntry};
use relbridge::table::{encode_features, Column, ColumnKind, EncodeOptions, Table};
use relbridge::tensor::{softmax_cross_entropy, Tensor};

fn entry_strategy() -> impl Strategy<Value = Vec<(usize, usize, f64)>> {
    prop::collection::vec((0..8usize, 0..8usize, -3.0..3.0f64), 0..40)
}

proptest! {
    #[test]
    fn coo_canonical_form_is_sorted_merged_and_zero_free(entries in entry_strategy()) {
        let m = SparseMatrix::from_coo(8, 8, entries).unwrap();
        let e = m.entries();
        for w in e.windows(2) {
            prop_assert!((w[0].0, w[0].1) < (w[1].0, w[1].1), "strictly sorted");
        }
        prop_assert!(e.iter().all(|&(_, _, v)| v != 0.0));
    }

    #[test]
    fn coo_canonicalization_is_order_independent(entries in entry_strategy(), seed in 0u64..1000) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let mut shuffled = entries.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = SparseMatrix::from_coo(8, 8, entries).unwrap();
        let b = SparseMatrix::from_coo(8, 8, shuffled).unwrap();
        prop_assert_eq!(a.entries(), b.entries());
    }

    #[test]
    fn normalization_keeps_symmetry_and_its_fixed_point(
        pairs in prop::collection::vec((0..7usize, 0..7usize, 0.1..4.0f64), 0..20),
    ) {
        let mut entries = Vec::new();
        for (i, j, w) in pairs {
            if i != j {
                entries.push((i, j, w));
                entries.push((j, i, w));
            }
        }
        let adj = SparseMatrix::from_coo(7, 7, entries).unwrap();
        let normalized = adj.gcn_normalize(true).unwrap();
        prop_assert!(normalized.is_symmetric());
        // D^{1/2} 1 (degrees of A + I) is fixed under the normalized operator.
        let n = 7;
        let dense = adj.to_dense();
        let mut v = vec![0.0; n];
        for i in 0..n {
            let d: f64 = (0..n).map(|j| dense[i * n + j]).sum::<f64>() + 1.0;
            v[i] = d.sqrt();
        }
        let out = normalized.to_dense();
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                acc += out[i * n + j] * v[j];
            }
            prop_assert!((acc - v[i]).abs() < 1e-10, "row {}: {} vs {}", i, acc, v[i]);
        }
    }

    #[test]
    fn coo_text_round_trips(entries in entry_strategy()) {
        let m = SparseMatrix::from_coo(8, 8, entries).unwrap();
        prop_assert_eq!(parse_coo(&m.to_coo_string()).unwrap(), m);
    }

    #[test]
    fn cross_entropy_is_shift_invariant(
        logits in prop::collection::vec(-30.0..30.0f64, 6),
        labels in prop::collection::vec(0..3usize, 2),
        shift in -100.0..100.0f64,
    ) {
        let base = Tensor::new(&[2, 3], logits.clone()).unwrap();
        let shifted = Tensor::new(&[2, 3], logits.iter().map(|v| v + shift).collect()).unwrap();
        let mask = [0usize, 1];
        let a = softmax_cross_entropy(&base, &labels, &mask).unwrap().item();
        let b = softmax_cross_entropy(&shifted, &labels, &mask).unwrap().item();
        prop_assert!((a - b).abs() < 1e-10, "{} vs {}", a, b);
    }

    #[test]
    fn z_scores_standardize_fully_present_columns(
        values in prop::collection::vec(-1e4..1e4f64, 3..40),
    ) {
        let cells: Vec<Option<String>> = values.iter().map(|v| Some(v.to_string())).collect();
        let col = Column::new("x", ColumnKind::Numerical, cells);
        let table = Table::new("t", vec![col], None).unwrap();
        let enc = encode_features(&table, &EncodeOptions::default()).unwrap();
        let out = &enc.numerical[0].values;
        let n = out.len() as f64;
        let mean: f64 = out.iter().sum::<f64>() / n;
        let var: f64 = out.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        prop_assert!(mean.abs() < 1e-9);
        // Degenerate (constant) columns scale to exactly zero instead.
        let spread = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
            - values.iter().cloned().fold(f64::INFINITY, f64::min);
        if spread > 0.0 {
            prop_assert!((var - 1.0).abs() < 1e-9, "var {}", var);
        }
    }

    #[test]
    fn encoding_is_deterministic_for_random_tables(
        cells in prop::collection::vec(prop::option::of("[a-d]{1,3}"), 1..30),
    ) {
        let col = Column::new("c", ColumnKind::Categorical, cells);
        let table = Table::new("t", vec![col], None).unwrap();
        let a = encode_features(&table, &EncodeOptions::default()).unwrap();
        let b = encode_features(&table, &EncodeOptions::default()).unwrap();
        prop_assert_eq!(a, b);
        }

    #[test]
    fn cache_parse_recovers_the_valid_prefix(
        entries in prop::collection::vec(("[a-z]{1,6}", "[ -~]{0,30}"), 0..6),
        garbage in "[^\n]{1,40}",
    ) {
        prop_assume!(serde_json::from_str::<CacheEntry>(&garbage).is_err());
        let mut text = String::new();
        for (id, r) in &entries {
            let entry = CacheEntry {
                id: id.clone(),
                h: relbridge::llm::prompt_hash(r),
                p: r.clone(),
                r: r.clone(),
            };
            text.push_str(&serde_json::to_string(&entry).unwrap());
            text.push('\n');
        }
        let clean_len = text.len();
        text.push_str(&garbage);
        text.push('\n');
        let (parsed, valid_len, recovery) = parse_cache_text(&text);
        prop_assert_eq!(parsed.len(), entries.len());
        prop_assert_eq!(valid_len, clean_len);
        let rec = recovery.expect("garbage must be reported");
        prop_assert_eq!(rec.line, entries.len() + 1);
    }

    #[test]
    fn templates_substitute_every_placeholder(
        values in prop::collection::vec("[ -~&&[^{}]]{0,12}", 2..4),
    ) {
        let mut fields = BTreeMap::new();
        for (i, v) in values.iter().enumerate() {
            fields.insert(format!("f{i}"), v.clone());
        }
        let template = "a {f0} b {f1} c";
        let out = render_template(template, &fields).unwrap();
        prop_assert_eq!(out, format!("a {} b {} c", values[0], values[1]));
    }

    #[test]
    fn checkpoint_decoder_never_panics_on_arbitrary_bytes(bytes in prop::collection::vec(any::<u8>(), 0..200)) {
        let _ = decode_checkpoint(&bytes);
    }

    #[test]
    fn coo_parser_never_panics_on_arbitrary_text(text in "[ -~\n]{0,200}") {
        let _ = parse_coo(&text);
    }

    #[test]
    fn balanced_split_holds_its_invariants(
        per_class in 25usize..60,
        classes in 2usize..5,
        seed in 0u64..500,
    ) {
        let keys: Vec<String> = (0..per_class * classes).map(|i| format!("{i}")).collect();
        let labels: Vec<Option<String>> =
            (0..per_class * classes).map(|i| Some(format!("c{}", i % classes))).collect();
        let class_names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
        let n_val = 2;
        let n_test = 3;
        let split = fixed_split(&keys, &labels, &class_names, 20, n_val, n_test, seed).unwrap();
        prop_assert_eq!(split.train.len(), 20 * classes);
        prop_assert_eq!(split.val.len(), n_val);
        prop_assert_eq!(split.test.len(), n_test);
        let mut seen = std::collections::HashSet::new();
        for &i in split.train.iter().chain(&split.val).chain(&split.test) {
            prop_assert!(i < keys.len());
            prop_assert!(seen.insert(i), "disjoint parts");
        }
    }
}
