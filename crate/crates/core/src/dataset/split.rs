use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::DatasetManifest;
use crate::error::{Error, Result};
use crate::rng;

/// Apportions `n` items over fractions by largest remainder. Remainder ties
/// go to the split that sorts first.
fn apportion(n: usize, ratios: &[(String, f64)]) -> Vec<usize> {
    let quotas: Vec<f64> = ratios.iter().map(|(_, r)| r * n as f64).collect();
    let mut counts: Vec<usize> = quotas.iter().map(|q| (q + 1e-9).floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..ratios.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = quotas[a] - counts[a] as f64;
        let rb = quotas[b] - counts[b] as f64;
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Assigns every sample to exactly one split.
///
/// Samples are shuffled per group with a seeded stream and cut by
/// largest-remainder quotas, so ratios hold within each group up to rounding.
/// Without `stratify_by` the whole sample set is one group.
pub fn make_splits(
    manifest: &DatasetManifest,
    ratios: &BTreeMap<String, f64>,
    stratify_by: Option<&str>,
    seed: u64,
) -> Result<DatasetManifest> {
    if ratios.is_empty() {
        return Err(Error::InvalidArgument("no split ratios given".into()));
    }
    if let Some((name, r)) = ratios.iter().find(|(_, r)| !(**r >= 0.0)) {
        return Err(Error::InvalidArgument(format!("ratio for `{name}` is {r}")));
    }
    let total: f64 = ratios.values().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidArgument(format!("ratios sum to {total}, not 1")));
    }
    let ratios: Vec<(String, f64)> = ratios.iter().map(|(k, v)| (k.clone(), *v)).collect();
    let ids: Vec<String> = manifest.samples.keys().cloned().collect();

    let mut groups: BTreeMap<String, Vec<String>> = BTreeMap::new();
    match stratify_by {
        Some(key) => {
            let values = manifest.group_values(key, &ids)?;
            for (id, v) in ids.into_iter().zip(values) {
                groups.entry(v).or_default().push(id);
            }
        }
        None => {
            groups.insert(String::new(), ids);
        }
    }

    let mut splits: BTreeMap<String, Vec<String>> = ratios.iter().map(|(k, _)| (k.clone(), Vec::new())).collect();
    for (g, (_, mut members)) in groups.into_iter().enumerate() {
        members.shuffle(&mut rng::stream(seed, "split", g as u64));
        let counts = apportion(members.len(), &ratios);
        let mut it = members.into_iter();
        for ((name, _), c) in ratios.iter().zip(counts) {
            splits.get_mut(name).expect("split exists").extend(it.by_ref().take(c));
        }
    }
    for ids in splits.values_mut() {
        ids.sort();
    }
    let mut out = manifest.clone();
    out.splits = splits;
    out.validate()?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn orchards() -> DatasetManifest {
        let mut m = DatasetManifest::new("cos", &["trunk", "branch"], vec![1]);
        let mut orchard = BTreeMap::new();
        for i in 0..98 {
            let id = format!("tree_{i:03}");
            m.add_sample(&id, format!("clouds/{id}"));
            orchard.insert(id, if i % 2 == 0 { "north" } else { "south" }.to_string());
        }
        m.groups.insert("orchard".into(), orchard);
        m
    }

    fn ratios(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    #[test]
    fn stratified_cos_split() {
        let m = orchards();
        let out = make_splits(
            &m,
            &ratios(&[("train", 72.0 / 98.0), ("test", 26.0 / 98.0)]),
            Some("orchard"),
            1,
        )
        .unwrap();
        assert_eq!(out.splits["train"].len(), 72);
        assert_eq!(out.splits["test"].len(), 26);
        let train_orchards = m.group_values("orchard", &out.splits["train"]).unwrap();
        assert_eq!(train_orchards.iter().filter(|o| *o == "north").count(), 36);
        assert_eq!(train_orchards.iter().filter(|o| *o == "south").count(), 36);
    }

    #[test]
    fn degenerate_single_split() {
        let m = orchards();
        let out = make_splits(&m, &ratios(&[("train", 1.0)]), None, 3).unwrap();
        assert_eq!(out.splits["train"].len(), 98);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let m = orchards();
        let r = ratios(&[("train", 0.5), ("val", 0.2), ("test", 0.3)]);
        let a = make_splits(&m, &r, None, 5).unwrap();
        let b = make_splits(&m, &r, None, 5).unwrap();
        let c = make_splits(&m, &r, None, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.splits, c.splits);
    }

    #[test]
    fn partition_is_exhaustive_and_disjoint() {
        let m = orchards();
        let out = make_splits(
            &m,
            &ratios(&[("a", 0.33), ("b", 0.33), ("c", 0.34)]),
            Some("orchard"),
            9,
        )
        .unwrap();
        let mut all: Vec<String> = out.splits.values().flatten().cloned().collect();
        all.sort();
        let expect: Vec<String> = m.samples.keys().cloned().collect();
        assert_eq!(all, expect);
    }

    #[test]
    fn errors() {
        let m = orchards();
        assert!(matches!(
            make_splits(&m, &ratios(&[("train", 1.0)]), Some("farm"), 0),
            Err(Error::Schema(_))
        ));
        assert!(matches!(
            make_splits(&m, &ratios(&[("train", 0.5), ("test", 0.4)]), None, 0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn apportion_sums_to_total() {
        let r = vec![
            ("a".to_string(), 1.0 / 3.0),
            ("b".to_string(), 1.0 / 3.0),
            ("c".to_string(), 1.0 / 3.0),
        ];
        for n in 0..50 {
            assert_eq!(apportion(n, &r).iter().sum::<usize>(), n);
        }
    }
}
