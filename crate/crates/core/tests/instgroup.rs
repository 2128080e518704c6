mod common;

use common::{labeled_scene, params};

use std::collections::BTreeMap;

use plantforge::dataset::{cloud_stats, DatasetStats};
use plantforge::geom::{LabeledCloud, Vec3};
use plantforge::instgroup::{
    group, infer_params, oracle_output, read_predictions, write_predictions, GroupingMode, GroupingParams, ModelOutput,
};
use plantforge::metrics::instance_eval;
use plantforge::Error;
use rand::Rng;

fn one_hot(labels: &[i32], n_classes: usize) -> Vec<f32> {
    let mut s = vec![0.0; labels.len() * n_classes];
    for (i, &c) in labels.iter().enumerate() {
        s[i * n_classes + c as usize] = 1.0;
    }
    s
}

#[test]
fn blobs_collapse_to_two_instances() {
    let mut r = common::rng(1);
    let mut pts = Vec::new();
    let mut offsets = Vec::new();
    let centers = [[0.0f32, 0.0, 0.0], [10.0, 0.0, 0.0]];
    for c in centers {
        for _ in 0..50 {
            let p = [
                c[0] + r.random_range(-2.0..2.0),
                c[1] + r.random_range(-2.0..2.0),
                r.random_range(0.0..3.0),
            ];
            offsets.push([c[0] - p[0], c[1] - p[1], c[2] - p[2]]);
            pts.push(p);
        }
    }
    let cloud = LabeledCloud::unlabeled(pts);
    let out = ModelOutput {
        n_classes: 1,
        scores: vec![1.0; 100],
        offsets,
    };
    let preds = group(&cloud, &out, &params(1.0, &[(0, 2)])).unwrap();
    assert_eq!(preds.len(), 2);
    let mut parts: Vec<Vec<usize>> = preds.iter().map(|p| p.point_indices.clone()).collect();
    parts.sort();
    assert_eq!(parts, vec![(0..50).collect::<Vec<_>>(), (50..100).collect()]);
    assert!(preds.iter().all(|p| p.confidence == 1.0));
}

#[test]
fn lone_candidate_is_filtered() {
    let cloud = LabeledCloud::unlabeled(vec![[0.0; 3], [5.0, 0.0, 0.0]]);
    let out = ModelOutput {
        n_classes: 2,
        scores: vec![1.0, 0.0, 0.0, 1.0],
        offsets: vec![[0.0; 3]; 2],
    };
    let preds = group(&cloud, &out, &params(1.0, &[(0, 2), (1, 1)])).unwrap();
    assert_eq!(preds.len(), 1);
    assert_eq!(preds[0].class_id, 1);
    assert!(matches!(
        group(&cloud, &out, &params(1.0, &[(0, 2)])),
        Err(Error::MissingThreshold(1))
    ));
}

#[test]
fn chain_becomes_one_cluster() {
    let pts: Vec<[f32; 3]> = (0..40).map(|i| [i as f32 * 0.9, 0.0, 0.0]).collect();
    let cloud = LabeledCloud::unlabeled(pts);
    let out = ModelOutput {
        n_classes: 1,
        scores: vec![1.0; 40],
        offsets: vec![[0.0; 3]; 40],
    };
    let preds = group(&cloud, &out, &params(1.0, &[(0, 1)])).unwrap();
    assert_eq!(preds.len(), 1);
    assert_eq!(preds[0].point_indices, (0..40).collect::<Vec<_>>());
    assert_eq!(preds[0].confidence, 1.0);
}

#[test]
fn grouping_matches_brute_force_union_find() {
    let mut r = common::rng(2);
    for trial in 0..30 {
        let (cloud, out, p) = common::random_grouping_case(&mut r, 2000);
        let k = out.n_classes;
        let preds = group(&cloud, &out, &p).unwrap();
        for c in 0..k {
            let mut got: Vec<Vec<usize>> = preds
                .iter()
                .filter(|q| q.class_id == c as i32)
                .map(|q| q.point_indices.clone())
                .collect();
            got.sort();
            assert_eq!(
                got,
                common::brute_force_groups(&cloud, &out, c, &p),
                "trial {trial} class {c}"
            );
            for q in preds.iter().filter(|q| q.class_id == c as i32) {
                let mean =
                    q.point_indices.iter().map(|&i| out.score(i, c) as f64).sum::<f64>() / q.point_indices.len() as f64;
                assert!((q.confidence - mean).abs() < 1e-12);
            }
        }
        // class, then confidence descending, then smallest index
        for w in preds.windows(2) {
            let (a, b) = (&w[0], &w[1]);
            assert!(
                a.class_id < b.class_id
                    || (a.class_id == b.class_id
                        && (a.confidence > b.confidence
                            || (a.confidence == b.confidence && a.point_indices[0] < b.point_indices[0])))
            );
        }
    }
}

#[test]
fn dual_mode_adds_original_space_clusters() {
    // two points far apart in shifted space but adjacent in original space
    let cloud = LabeledCloud::unlabeled(vec![[0.0; 3], [0.5, 0.0, 0.0]]);
    let out = ModelOutput {
        n_classes: 1,
        scores: vec![1.0, 1.0],
        offsets: vec![[-5.0, 0.0, 0.0], [5.0, 0.0, 0.0]],
    };
    let mut p = params(1.0, &[(0, 1)]);
    assert_eq!(group(&cloud, &out, &p).unwrap().len(), 2);
    p.mode = GroupingMode::Dual;
    let preds = group(&cloud, &out, &p).unwrap();
    let sets: Vec<Vec<usize>> = preds.iter().map(|q| q.point_indices.clone()).collect();
    assert_eq!(preds.len(), 3);
    assert!(sets.contains(&vec![0, 1]) && sets.contains(&vec![0]) && sets.contains(&vec![1]));
}

#[test]
fn oracle_outputs_reproduce_ground_truth() {
    let cloud = labeled_scene(3);
    let out = oracle_output(&cloud, 2, 0.0, 1).unwrap();
    // shifted points land on their instance centroid
    for k in 0..6 {
        let idx: Vec<usize> = (0..cloud.len()).filter(|&i| cloud.instance[i] == k).collect();
        let c = idx.iter().map(|&i| cloud.point(i)).sum::<Vec3>() / idx.len() as f64;
        for &i in &idx {
            let s = cloud.point(i)
                + Vec3::new(
                    out.offsets[i][0] as f64,
                    out.offsets[i][1] as f64,
                    out.offsets[i][2] as f64,
                );
            assert!((s - c).norm() < 1e-5);
        }
    }
    let p = params(0.05, &[(0, 5), (1, 5)]);
    let preds = group(&cloud, &out, &p).unwrap();
    let m = instance_eval(&cloud, &preds, &[0, 1]).unwrap();
    assert_eq!((m.ap25, m.ap50, m.ap), (Some(1.0), Some(1.0), Some(1.0)));

    let noisy = oracle_output(&cloud, 2, 5.0, 1).unwrap();
    let preds = group(&cloud, &noisy, &p).unwrap();
    let m2 = instance_eval(&cloud, &preds, &[0, 1]).unwrap();
    assert!(m2.ap.unwrap() < 1.0);

    let mut unlabeled = cloud.clone();
    unlabeled.instance[3] = -1;
    assert!(matches!(
        oracle_output(&unlabeled, 2, 0.0, 1),
        Err(Error::InvalidInput(_))
    ));
}

#[test]
fn grouping_is_thread_count_independent() {
    let cloud = labeled_scene(4);
    let out = oracle_output(&cloud, 2, 0.3, 9).unwrap();
    let p = params(0.2, &[(0, 3), (1, 3)]);
    let a = group(&cloud, &out, &p).unwrap();
    let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    assert_eq!(pool.install(|| group(&cloud, &out, &p).unwrap()), a);
}

#[test]
fn infer_params_scales_by_instance_size() {
    let reference = {
        let mut s = DatasetStats::default();
        s.samples.insert("a".into(), cloud_stats(&labeled_scene(5)));
        s
    };
    let mut p = params(0.5, &[(0, 100), (1, 40)]);
    p.instance_classes = Some(vec![0, 1]);
    assert_eq!(infer_params(&reference, &reference, &p).unwrap(), p);

    // the same scene scaled by two, and with every other point dropped
    let scene = labeled_scene(5);
    let mut doubled = scene.clone();
    for q in &mut doubled.points {
        *q = q.map(|v| v * 2.0);
    }
    let keep: Vec<usize> = (0..scene.len()).step_by(2).collect();
    let halved = doubled.select(&keep);
    let mut target = DatasetStats::default();
    target.samples.insert("b".into(), cloud_stats(&halved));
    let ext = |s: &DatasetStats| s.mean_instance_extent(Some(&[0, 1])).unwrap();
    let out = infer_params(&target, &reference, &p).unwrap();
    assert!((out.radius - 0.5 * ext(&target) / ext(&reference)).abs() < 1e-12);
    assert_eq!(out.min_points[&0], 50);
    assert_eq!(out.min_points[&1], 20);
    assert_eq!(out.score_threshold, p.score_threshold);

    let mut flat = DatasetStats::default();
    flat.samples.insert(
        "z".into(),
        cloud_stats(&LabeledCloud::new(vec![[1.0; 3]; 4], vec![0, 0, 1, 1], vec![0, 0, 1, 1]).unwrap()),
    );
    assert!(matches!(
        infer_params(&target, &flat, &p),
        Err(Error::DegenerateStats(_))
    ));
}

#[test]
fn files_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let cloud = labeled_scene(6);
    let out = oracle_output(&cloud, 2, 0.1, 2).unwrap();
    out.write(dir.path(), "s1").unwrap();
    assert_eq!(ModelOutput::read(dir.path(), "s1").unwrap(), out);
    let preds = group(&cloud, &out, &params(0.2, &[(0, 3), (1, 3)])).unwrap();
    let path = dir.path().join("pred.json");
    write_predictions(&preds, &path).unwrap();
    assert_eq!(read_predictions(&path).unwrap(), preds);

    let json = r#"{"radius": 0.3, "min_points": {"0": 10, "1": 20}}"#;
    let p: GroupingParams = serde_json::from_str(json).unwrap();
    assert_eq!(p.score_threshold, 0.2);
    assert_eq!(p.min_points, BTreeMap::from([(0, 10), (1, 20)]));
    assert_eq!(p.mode, GroupingMode::Shifted);
}

#[test]
fn one_hot_helper_matches_oracle_scores() {
    let cloud = labeled_scene(7);
    let out = oracle_output(&cloud, 2, 0.0, 0).unwrap();
    assert_eq!(out.scores, one_hot(&cloud.semantic, 2));
}
