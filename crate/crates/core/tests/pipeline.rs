mod common;

use nomad::affinity::build_affinity;
use nomad::ann::{build_index, IndexParams};
use nomad::io::load_layout;
use nomad::metrics::{neighborhood_preservation, NpMode};
use nomad::optimizer::{fit_with, pca_init, FitOptions, NegativeMode, TrainConfig, UpdateMode};
use nomad::{fit, NomadError};

use common::reference::ReferenceSgd;

fn small_config() -> TrainConfig {
    TrainConfig {
        epochs: 20,
        seed: 3,
        ..TrainConfig::default()
    }
}

#[test]
fn zero_epochs_returns_pca_init() {
    let data = common::gaussian_blobs(500, 8, 3, 4.0, 1);
    let config = TrainConfig {
        epochs: 0,
        ..small_config()
    };
    let layout = fit(&data, &config).unwrap();
    assert_eq!(layout, pca_init(&data, config.seed).unwrap());
}

#[test]
fn repeated_fit_is_bit_identical() {
    let data = common::gaussian_blobs(1500, 12, 4, 4.0, 2);
    for workers in [1, 3] {
        let config = TrainConfig {
            workers,
            n_clusters: Some(4),
            ..small_config()
        };
        let a = fit(&data, &config).unwrap();
        let b = fit(&data, &config).unwrap();
        assert_eq!(a, b, "workers {workers}");
    }
}

#[test]
fn different_seeds_differ() {
    let data = common::gaussian_blobs(800, 8, 3, 4.0, 2);
    let a = fit(&data, &small_config()).unwrap();
    let b = fit(&data, &TrainConfig { seed: 4, ..small_config() }).unwrap();
    assert_ne!(a, b);
}

#[test]
fn fit_improves_on_pca_for_isotropic_blobs() {
    let data = common::gaussian_blobs(3000, 32, 5, 3.0, 5);
    let config = TrainConfig {
        epochs: 100,
        ..small_config()
    };
    let init = pca_init(&data, config.seed).unwrap();
    let layout = fit(&data, &config).unwrap();
    let np_init = neighborhood_preservation(&data, &init, 10, NpMode::Exact, 0).unwrap();
    let np_fit = neighborhood_preservation(&data, &layout, 10, NpMode::Exact, 0).unwrap();
    assert!(np_fit.value > np_init.value, "fit {} init {}", np_fit.value, np_init.value);
}

#[test]
fn single_worker_matches_reference() {
    let data = common::gaussian_blobs(600, 10, 3, 4.0, 9);
    let config = TrainConfig {
        epochs: 5,
        n_clusters: Some(3),
        batch_size: 128,
        ..small_config()
    };
    let result = fit_with(&data, &config, &FitOptions::default()).unwrap();
    let index = build_index(
        &data,
        &IndexParams {
            n_clusters: 3,
            k: config.k,
            seed: config.seed,
            max_iters: config.kmeans_max_iters,
            tol_factor: config.kmeans_tol_factor,
        },
    )
    .unwrap();
    let init = pca_init(&data, config.seed).unwrap();
    let reference = ReferenceSgd {
        epochs: config.epochs,
        negatives: config.n_negatives,
        batch_size: config.batch_size,
        lr0: data.n() as f64 / 10.0,
        seed: config.seed,
    }
    .run(&build_affinity(&index.graph), &init.positions);
    assert_eq!(result.layout.positions, reference);
}

#[test]
fn traffic_is_one_message_per_worker_per_epoch() {
    let data = common::gaussian_blobs(2000, 8, 6, 4.0, 4);
    let config = TrainConfig {
        epochs: 4,
        workers: 3,
        n_clusters: Some(6),
        ..small_config()
    };
    let r = fit_with(&data, &config, &FitOptions::default()).unwrap();
    assert_eq!(r.traffic.len(), 4);
    for (e, t) in r.traffic.iter().enumerate() {
        assert_eq!(t.epoch, e + 1);
        assert_eq!(t.messages, 3);
        assert_eq!(t.payload_values, 3 * 3 * 6);
    }
    assert_eq!(r.plan.worker_clusters.iter().map(Vec::len).sum::<usize>(), 6);
}

#[test]
fn all_edges_stay_inside_clusters() {
    let data = common::gaussian_blobs(2000, 8, 4, 2.0, 6);
    let r = fit_with(
        &data,
        &TrainConfig {
            epochs: 2,
            workers: 2,
            n_clusters: Some(7),
            ..small_config()
        },
        &FitOptions::default(),
    )
    .unwrap();
    assert!(r.index.graph.n_edges() > 0);
    assert_eq!(r.index.graph.cross_cluster_edges(&r.index.clusters), 0);
}

#[test]
fn alternative_modes_stay_finite() {
    let data = common::gaussian_blobs(1200, 8, 4, 4.0, 8);
    for (negative_mode, update_mode) in [
        (NegativeMode::AllButOwnCluster, UpdateMode::All),
        (NegativeMode::RemoteClusters, UpdateMode::HeadOnly),
        (NegativeMode::AllButOwnCluster, UpdateMode::HeadOnly),
    ] {
        let config = TrainConfig {
            workers: 2,
            n_clusters: Some(4),
            negative_mode,
            update_mode,
            ..small_config()
        };
        let layout = fit(&data, &config).unwrap();
        assert!(layout.is_finite());
        assert_eq!(layout.epoch, config.epochs);
    }
}

#[test]
fn huge_learning_rate_diverges() {
    let data = common::gaussian_blobs(500, 8, 3, 4.0, 1);
    let config = TrainConfig {
        lr0: Some(1e40),
        ..small_config()
    };
    assert!(matches!(fit(&data, &config), Err(NomadError::Divergence { epoch: 0, .. })));
}

#[test]
fn checkpoints_are_written() {
    let dir = tempfile::tempdir().unwrap();
    let data = common::gaussian_blobs(400, 8, 3, 4.0, 1);
    let options = FitOptions {
        checkpoint_every: Some(2),
        checkpoint_dir: Some(dir.path().to_path_buf()),
        ..FitOptions::default()
    };
    let config = TrainConfig {
        epochs: 5,
        ..small_config()
    };
    fit_with(&data, &config, &options).unwrap();
    let mut names: Vec<String> = std::fs::read_dir(dir.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["layout_epoch_00002.csv", "layout_epoch_00004.csv"]);
    let loaded = load_layout(dir.path().join(&names[1])).unwrap();
    assert_eq!(loaded.layout.n(), 400);
    assert_eq!(loaded.ids[0], "0");
}

#[test]
fn too_few_clusters_for_workers_is_rejected() {
    let data = common::gaussian_blobs(400, 8, 3, 4.0, 1);
    let config = TrainConfig {
        workers: 4,
        n_clusters: Some(2),
        ..small_config()
    };
    let err = fit(&data, &config).unwrap_err();
    assert!(matches!(err, NomadError::Parameter(_)), "{err}");
    assert!(err.to_string().contains("clusters must be ≥ workers"));
}
