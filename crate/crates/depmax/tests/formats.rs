use depmax::checkpoint;
use depmax::config::{KdeBandwidth, RunConfig, KEYS};
use depmax::csvio::{load_labeled_csv, load_paired_csv, write_labeled_csv, write_paired_csv};
use depmax::error::{CliError, EXIT_INPUT, EXIT_USAGE};
use depmax_core::data::{gen_gaussian_pair, gen_two_moons};
use depmax_core::drn::DepMeasure;
use depmax_core::lsmi::{BandwidthRule, GradMode};
use depmax_core::net::{Architecture, NetworkParams};
use depmax_core::{Matrix, SplitMix64};
use tempfile::TempDir;

#[test]
fn paired_csv_round_trips_bitwise() {
    let dir = TempDir::new().unwrap();
    let mut rng = SplitMix64::new(3);
    let s = Matrix::from_fn(25, 3, |_, _| rng.normal() * 1e-7 + rng.uniform());
    let t = Matrix::from_fn(25, 3, |_, _| rng.normal() * 1e9);
    let p = dir.path().join("p.csv");
    write_paired_csv(&p, &s, &t).unwrap();
    let (s2, t2) = load_paired_csv(&p).unwrap();
    assert_eq!(s2.matrix(), &s);
    assert_eq!(t2.matrix(), &t);
    let header = std::fs::read_to_string(&p).unwrap();
    assert!(header.starts_with("s_0,s_1,s_2,t_0,t_1,t_2\n"));
}

#[test]
fn paired_writer_rejects_shape_mismatch() {
    let dir = TempDir::new().unwrap();
    let (x, _) = gen_gaussian_pair(5, 0.1, 0).unwrap();
    let (y, _) = gen_gaussian_pair(6, 0.1, 0).unwrap();
    assert!(write_paired_csv(&dir.path().join("x.csv"), x.matrix(), y.matrix()).is_err());
}

#[test]
fn labeled_csv_round_trips() {
    let dir = TempDir::new().unwrap();
    let set = gen_two_moons(50, 0.2, 4).unwrap();
    let p = dir.path().join("l.csv");
    write_labeled_csv(&p, &set).unwrap();
    let back = load_labeled_csv(&p).unwrap();
    assert_eq!(back.features, set.features);
    assert_eq!(back.labels, set.labels);
    assert_eq!(back.classes, 2);
}

#[test]
fn labeled_csv_errors() {
    let dir = TempDir::new().unwrap();
    let p = dir.path().join("l.csv");
    std::fs::write(&p, "x_0,label\n0.5,1\n0.2,-1\n").unwrap();
    let err = load_labeled_csv(&p).unwrap_err();
    assert!(matches!(err, CliError::Row { row: 2, .. }), "{err}");
    assert_eq!(err.exit_code(), EXIT_INPUT);

    std::fs::write(&p, "x_0,label\n").unwrap();
    assert!(matches!(load_labeled_csv(&p).unwrap_err(), CliError::Input { .. }));

    std::fs::write(&p, "x_0,label\ninf,0\n").unwrap();
    assert!(matches!(load_labeled_csv(&p).unwrap_err(), CliError::Row { row: 1, .. }));
}

#[test]
fn checkpoint_round_trips_bitwise() {
    let dir = TempDir::new().unwrap();
    let p = NetworkParams::init(&Architecture::new(3, &[7, 5], 4, 6), 21).unwrap();
    let path = dir.path().join("ck.txt");
    checkpoint::save(&path, &p).unwrap();
    assert_eq!(checkpoint::load(&path).unwrap(), p);
}

#[test]
fn checkpoint_rejects_damage() {
    let dir = TempDir::new().unwrap();
    let p = NetworkParams::init(&Architecture::new(2, &[3], 2, 2), 0).unwrap();
    let text = checkpoint::to_string(&p);
    let path = dir.path().join("ck.txt");
    for bad in [
        text.replacen("DEPMAX1", "DEPMAX0", 1),
        text.lines().take(4).collect::<Vec<_>>().join("\n"),
        text.replacen(" 2 3\n", " 2 4\n", 1),
    ] {
        assert!(checkpoint::parse(&path, &bad).is_err(), "{bad}");
    }
}

#[test]
fn empty_config_gives_defaults() {
    let cfg = RunConfig::parse("# nothing\n\n   \n").unwrap();
    assert_eq!(cfg, RunConfig::default());
    assert_eq!(cfg.data.train_seed(3), 103);
    assert_eq!(cfg.data.val_seed(3), 203);
}

#[test]
fn config_values_parse() {
    let text = "\
lsmi.sigma_s = grid 0.25, 0.5,1   # trailing comment
lsmi.sigma_t = 1.5
lsmi.delta = 1e-3
lsmi.folds = 3
lsmi.grad_mode = frozen_alpha
ksg.k = 7
kde.bw_y = 0.4
train.dep_measure = jsd
train.hidden = 16,8
aug.smooth_radius = 2
data.train_seed = 9
";
    let cfg = RunConfig::parse(text).unwrap();
    let l = cfg.lsmi();
    assert_eq!(l.sigma_s, BandwidthRule::MedianGrid(vec![0.25, 0.5, 1.0]));
    assert!(matches!(l.sigma_t, BandwidthRule::Fixed(b) if b.get() == 1.5));
    assert_eq!(l.deltas, vec![1e-3]);
    assert_eq!(l.folds, 3);
    assert_eq!(l.grad_mode, GradMode::FrozenAlpha);
    assert_eq!(cfg.ksg_k, 7);
    assert_eq!(cfg.kde_bw_x, KdeBandwidth::Silverman);
    assert_eq!(cfg.kde_bw_y, KdeBandwidth::Fixed(0.4));
    assert_eq!(cfg.train.dep_measure, DepMeasure::Jsd);
    assert_eq!(cfg.train.hidden, vec![16, 8]);
    assert_eq!(cfg.train.aug.smooth_radius, 2);
    assert_eq!(cfg.data.train_seed(0), 9);
}

#[test]
fn every_key_is_settable() {
    let sample = |key: &str| match key {
        "lsmi.sigma_s" | "lsmi.sigma_t" => "median",
        "lsmi.grad_mode" => "full",
        "kde.bw_x" | "kde.bw_y" => "silverman",
        "train.dep_measure" => "kl",
        "train.hidden" => "4",
        "train.eta" | "train.label_eps" | "aug.zoom_range" => "0.5",
        "train.epochs" => "10",
        "lsmi.folds" | "train.warmup_epochs" | "aug.smooth_radius" => "2",
        _ => "1",
    };
    let text: String = KEYS.iter().map(|k| format!("{k} = {}\n", sample(k))).collect();
    RunConfig::parse(&text).unwrap();
}

#[test]
fn config_errors_carry_line_and_key() {
    match RunConfig::parse("train.eta = 0.5\n\nmodel.depth = 3\n").unwrap_err() {
        CliError::UnknownKey { line, key } => assert_eq!((line, key.as_str()), (3, "model.depth")),
        e => panic!("{e}"),
    }
    for text in [
        "lsmi.sigma_s = grid\n",
        "lsmi.sigma_s = -1\n",
        "lsmi.delta = 1e-3,,1e-2\n",
        "kde.bw_x = 0\n",
        "train.dep_measure = hsic\n",
        "train.batch_size = -3\n",
        "lsmi.delta = 0\n",
    ] {
        let err = RunConfig::parse(text).unwrap_err();
        assert_eq!(err.exit_code(), EXIT_USAGE, "{text}: {err}");
    }
}
