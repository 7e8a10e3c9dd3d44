mod common;

use std::collections::BTreeSet;

use common::{oracle_disclosures, oracle_join, oracle_k, oracle_l, oracle_matches, oracle_t, random_table, table};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use riskcal_core::join::{detect_disclosures, execute_join, suggest_features, JoinSpec};
use riskcal_core::metrics::{k_anonymity, l_diversity, partition, t_closeness};
use riskcal_core::workflow::{parallel_sets_model, OTHER_BUCKET};
use riskcal_core::{QuasiIdentifierDictionary, RecordTable};

const HEADER: [&str; 6] = ["age", "sex", "race", "zip", "offense", "disposition"];

fn strings(v: &[&str]) -> Vec<String> {
    v.iter().map(|s| s.to_string()).collect()
}

fn random_key(rng: &mut ChaCha8Rng, pool: &[&str], max: usize) -> Vec<String> {
    let n = rng.gen_range(1..=max.min(pool.len()));
    let mut attrs: Vec<&str> = pool.to_vec();
    attrs.shuffle(rng);
    strings(&attrs[..n])
}

fn random_pair(rng: &mut ChaCha8Rng) -> (RecordTable, RecordTable, Vec<String>) {
    let width = rng.gen_range(3..=6);
    let header = &HEADER[..width];
    let alphabet = rng.gen_range(2..6);
    let rows = rng.gen_range(1..=100);
    let a = random_table(rng, header, rows, alphabet, true);
    // The right side drops one trailing column so some attrs are one-sided.
    let right_width = rng.gen_range(3..=width);
    let rows = rng.gen_range(1..=100);
    let b = random_table(rng, &header[..right_width], rows, alphabet, true);
    let key = random_key(rng, &header[..3], 3);
    (a, b, key)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn privacy_metrics_match_pairwise_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let width = rng.gen_range(2..=6);
        let header = &HEADER[..width];
        let (rows, alphabet) = (rng.gen_range(1..=60), rng.gen_range(1..5));
        let t = random_table(&mut rng, header, rows, alphabet, false);
        let key = random_key(&mut rng, &header[..width - 1], 4);
        let sensitive = header[width - 1];
        let p = partition(&t, &key).unwrap();
        prop_assert_eq!(k_anonymity(&p).unwrap(), oracle_k(&t, &key));
        prop_assert_eq!(l_diversity(&p, &t, sensitive).unwrap(), oracle_l(&t, &key, sensitive));
        let got = t_closeness(&p, &t, sensitive).unwrap();
        prop_assert!((got - oracle_t(&t, &key, sensitive)).abs() <= 1e-9);
    }

    #[test]
    fn join_and_disclosures_match_nested_loop(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, key) = random_pair(&mut rng);
        let dict = QuasiIdentifierDictionary::builtin();
        let spec = JoinSpec::new("a", "b", &key, &a, &b).unwrap();
        let result = execute_join(&a, &b, &spec, usize::MAX).unwrap();
        let mut got = result.joined_rows.clone();
        let mut want = oracle_join(&a, &b, &key);
        got.sort();
        want.sort();
        prop_assert_eq!(result.total_joined, want.len() as u64);
        prop_assert_eq!(got, want);
        prop_assert!(!result.truncated);
        prop_assert_eq!(result.matches.len(), oracle_matches(&a, &b, &key).len());
        prop_assert_eq!(
            detect_disclosures(&result, &a, &b, &dict),
            oracle_disclosures(&a, &b, &key, &dict)
        );
    }

    #[test]
    fn truncated_join_keeps_full_counts(seed in any::<u64>(), cap in 0usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, key) = random_pair(&mut rng);
        let spec = JoinSpec::new("a", "b", &key, &a, &b).unwrap();
        let full = execute_join(&a, &b, &spec, usize::MAX).unwrap();
        let capped = execute_join(&a, &b, &spec, cap).unwrap();
        prop_assert_eq!(capped.total_joined, full.total_joined);
        prop_assert_eq!(&capped.matches, &full.matches);
        prop_assert_eq!(capped.joined_rows.len() as u64, full.total_joined.min(cap as u64));
        prop_assert_eq!(capped.truncated, full.total_joined > cap as u64);
        prop_assert_eq!(&capped.joined_rows[..], &full.joined_rows[..capped.joined_rows.len()]);
    }

    #[test]
    fn feature_gain_matches_oracle(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, key) = random_pair(&mut rng);
        let spec = JoinSpec::new("a", "b", &key, &a, &b).unwrap();
        let result = execute_join(&a, &b, &spec, usize::MAX).unwrap();
        let shared: Vec<String> = b
            .attributes()
            .iter()
            .map(|x| x.normalized_name.clone())
            .filter(|n| !key.contains(n))
            .collect();
        let suggestions = suggest_features(&result, &shared, &a, &b).unwrap();
        if result.is_empty() {
            prop_assert!(suggestions.is_empty());
            return Ok(());
        }
        let mean = |k: &[String]| {
            let m = oracle_matches(&a, &b, k);
            let joined: usize = m.values().map(|(l, r)| l.len() * r.len()).sum();
            (m.len(), joined as f64 / m.len().max(1) as f64)
        };
        let (_, before) = mean(&key);
        prop_assert_eq!(suggestions.len(), shared.len());
        let mut seen_overconstraining = false;
        for s in &suggestions {
            let mut k = key.clone();
            k.push(s.attr.clone());
            let (matches, after) = mean(&k);
            prop_assert_eq!(s.matches_after, matches);
            prop_assert_eq!(s.overconstraining, matches == 0);
            if matches > 0 {
                prop_assert!(!seen_overconstraining);
                let want = ((before - after) / before).clamp(0.0, 1.0);
                prop_assert!((s.separation_gain - want).abs() <= 1e-12);
            } else {
                seen_overconstraining = true;
                prop_assert_eq!(s.separation_gain, 0.0);
            }
        }
    }

    #[test]
    fn parallel_sets_conserve_joined_rows(seed in any::<u64>(), max_categories in 1usize..6) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (a, b, key) = random_pair(&mut rng);
        let spec = JoinSpec::new("a", "b", &key, &a, &b).unwrap();
        let result = execute_join(&a, &b, &spec, usize::MAX).unwrap();
        prop_assume!(!result.joined_rows.is_empty());
        let mut pool: Vec<String> = a.attributes().iter().map(|x| x.normalized_name.clone()).collect();
        pool.push(format!("right.{}", b.attributes()[0].normalized_name));
        pool.push(format!("left.{}", a.attributes()[1].normalized_name));
        pool.shuffle(&mut rng);
        let axes = &pool[..rng.gen_range(1..=pool.len().min(4))];
        let model = parallel_sets_model(&result, &a, &b, axes, max_categories).unwrap();
        prop_assert!(model.is_conserved());
        prop_assert_eq!(model.total, oracle_join(&a, &b, &key).len() as u64);
        prop_assert_eq!(model.axes.len(), axes.len());
        prop_assert_eq!(model.ribbons.len(), axes.len() - 1);
        for axis in &model.axes {
            let named = axis.categories.iter().filter(|c| c.value != OTHER_BUCKET).count();
            prop_assert!(named <= max_categories);
            let distinct: BTreeSet<&str> = axis.categories.iter().map(|c| c.value.as_str()).collect();
            prop_assert_eq!(distinct.len(), axis.categories.len());
        }
    }
}

#[test]
fn single_surviving_match_ranks_first() {
    // One left row against ten right rows on the same key; `disposition`
    // keeps exactly one of the ten.
    let a = table(
        &["age", "sex", "disposition", "zip"],
        vec![strings(&["17", "F", "OPEN", "70001"])],
    );
    let right: Vec<Vec<String>> = (0..10)
        .map(|i| {
            let disposition = if i == 3 { "OPEN" } else { "CLOSED" };
            strings(&["17", "F", disposition, "70001"])
        })
        .chain(std::iter::once(strings(&["40", "M", "OPEN", "70001"])))
        .collect();
    let b = table(&["age", "sex", "disposition", "zip"], right);
    let spec = JoinSpec::new("a", "b", &["age", "sex"], &a, &b).unwrap();
    let result = execute_join(&a, &b, &spec, usize::MAX).unwrap();
    assert_eq!(result.total_joined, 10);
    let got = suggest_features(&result, &["zip", "disposition"], &a, &b).unwrap();
    assert_eq!(got[0].attr, "disposition");
    assert!((got[0].separation_gain - 0.9).abs() < 1e-12);
    assert_eq!((got[0].matches_after, got[0].joined_after), (1, 1));
    assert_eq!(got[1].attr, "zip");
    assert_eq!(got[1].separation_gain, 0.0);
}
