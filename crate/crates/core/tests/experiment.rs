mod common;

use common::ols_slope;
use sdewms::chain::GeneratorMatrix;
use sdewms::coupling::CoupledSample;
use sdewms::experiment::{
    entries, evaluate_path, evaluate_sample, fit_order, run_experiment, ErrorNorm, ErrorRow, ErrorTable,
    ExperimentConfig, REFERENCE_SCHEME,
};
use sdewms::models::{make_builtin, BuiltinModel, ScalarFamily};
use sdewms::rng::PathStream;
use sdewms::schemes::SchemeKind;

fn small_config(which: BuiltinModel) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(make_builtin(which));
    cfg.schemes = vec![SchemeKind::Euler, SchemeKind::RandMilstein, SchemeKind::ModifiedNonRand];
    cfg.level_min = 2;
    cfg.level_max = 5;
    cfg.level_ref = 7;
    cfg.n_paths = 200;
    cfg.seed = 3;
    cfg.threads = Some(1);
    cfg
}

#[test]
fn zero_coefficients_give_zero_error() {
    let family = ScalarFamily::Gbm {
        mu: vec![0.0, 0.0],
        nu: vec![0.0, 0.0],
    };
    let model = family
        .into_model(1.0, 1, 1.0, GeneratorMatrix::symmetric_two_state(0.5).unwrap())
        .unwrap();
    let mut cfg = ExperimentConfig::new(model);
    cfg.schemes = SchemeKind::ALL.to_vec();
    cfg.level_min = 1;
    cfg.level_max = 4;
    cfg.level_ref = 6;
    cfg.n_paths = 2;
    let table = run_experiment(&cfg).unwrap();
    assert_eq!(table.rows().len(), 9 * 4);
    for row in table.rows() {
        assert_eq!(row.l2_error, 0.0, "{row:?}");
        assert_eq!(row.stderr, 0.0);
    }
    assert!(table.orders().iter().all(|o| o.1.is_none()));
    assert!(table.to_csv().contains("# order,euler,nan\n"));
}

#[test]
fn errors_do_not_depend_on_thread_count() {
    let mut cfg = small_config(BuiltinModel::Ex1);
    let serial = run_experiment(&cfg).unwrap();
    cfg.threads = Some(3);
    let parallel = run_experiment(&cfg).unwrap();
    let again = run_experiment(&cfg).unwrap();
    for ((a, b), c) in serial.rows().iter().zip(parallel.rows()).zip(again.rows()) {
        assert_eq!(a.l2_error.to_bits(), b.l2_error.to_bits());
        assert_eq!(a.stderr.to_bits(), b.stderr.to_bits());
        assert_eq!(b.l2_error.to_bits(), c.l2_error.to_bits());
    }
    cfg.seed += 1;
    let other = run_experiment(&cfg).unwrap();
    assert_ne!(serial.rows()[0].l2_error, other.rows()[0].l2_error);
}

#[test]
fn squared_errors_come_from_one_shared_sample() {
    let cfg = small_config(BuiltinModel::MeanReverting);
    let entries = entries(&cfg);
    for p in 0..5 {
        let sample =
            CoupledSample::generate(&cfg.model, cfg.level_min, cfg.level_ref, &mut PathStream::new(cfg.seed, p)).unwrap();
        let outcome = evaluate_sample(&cfg, &entries, &sample).unwrap();
        assert_eq!(outcome.squared_errors, evaluate_path(&cfg, &entries, p).unwrap().squared_errors);
        let reference = sample.integrate(REFERENCE_SCHEME, &cfg.model, cfg.level_ref).unwrap();
        for (&(kind, level), &sq) in entries.iter().zip(&outcome.squared_errors) {
            let x = sample.integrate(kind, &cfg.model, level).unwrap();
            let expected = (reference.terminal()[0] - x.terminal()[0]).powi(2);
            assert_eq!(sq.to_bits(), expected.to_bits(), "{kind} level {level}");
        }
    }
}

#[test]
fn entries_are_scheme_major_and_deduplicated() {
    let mut cfg = small_config(BuiltinModel::Ex1);
    cfg.schemes = vec![SchemeKind::Euler, SchemeKind::Milstein, SchemeKind::Euler];
    let e = entries(&cfg);
    assert_eq!(e.len(), 2 * 4);
    assert_eq!(e[0], (SchemeKind::Euler, 2));
    assert_eq!(e[3], (SchemeKind::Euler, 5));
    assert_eq!(e[4], (SchemeKind::Milstein, 2));
}

#[test]
fn max_norm_dominates_terminal_norm() {
    let cfg = small_config(BuiltinModel::Gbm);
    let terminal = run_experiment(&cfg).unwrap();
    let mut cfg = cfg;
    cfg.norm = ErrorNorm::MaxOverGrid;
    let sup = run_experiment(&cfg).unwrap();
    for (t, s) in terminal.rows().iter().zip(sup.rows()) {
        assert!(s.l2_error >= t.l2_error, "{t:?} vs {s:?}");
    }
}

#[test]
fn fitted_order_of_near_first_order_column() {
    let errors = [
        0.00019280, 0.00049020, 0.00108269, 0.00230352, 0.00455661, 0.00920727, 0.01868714, 0.03726680,
        0.07402992, 0.14663204, 0.27959858, 0.51513882, 0.91186019, 1.49448935,
    ];
    let points: Vec<(f64, f64)> = errors
        .iter()
        .enumerate()
        .map(|(k, &e)| (2f64.powi(k as i32 - 14), e))
        .collect();
    let xs: Vec<f64> = points.iter().map(|p| p.0.log2()).collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1.log2()).collect();
    let oracle = ols_slope(&xs, &ys);
    let fitted = fit_order(&points).unwrap();
    assert!((fitted - oracle).abs() < 1e-12);
    assert!((fitted - 0.99).abs() < 0.01, "order {fitted}");
}

#[test]
fn fit_order_recovers_exact_power_laws() {
    for p in [0.5, 1.0, 1.5] {
        let points: Vec<(f64, f64)> = (3..10).map(|l| (2f64.powi(-l), 3.0 * 2f64.powi(-l).powf(p))).collect();
        assert!((fit_order(&points).unwrap() - p).abs() < 1e-12);
    }
    assert!(fit_order(&[(0.5, 1.0), (0.25, 0.5)]).is_err());
    assert!(fit_order(&[(0.5, 1.0), (0.25, 0.0), (0.125, 0.1)]).is_err());
}

fn hand_built_table() -> ErrorTable {
    let row = |scheme, level: i32, l2_error, cpu_seconds, stderr| ErrorRow {
        scheme,
        level: level as u32,
        h: 2f64.powi(-level),
        n_paths: 100,
        l2_error,
        cpu_seconds,
        stderr,
    };
    ErrorTable::from_rows(vec![
        row(SchemeKind::RandMilstein, 5, 0.03125, 0.75, 0.002),
        row(SchemeKind::Euler, 4, 0.5, 2.0, 0.01),
        row(SchemeKind::Euler, 6, 0.123456789012, 0.5, 0.0012345),
        row(SchemeKind::Euler, 5, 0.25, 1.25e-5, 0.0),
    ])
}

#[test]
fn csv_matches_golden_file() {
    let golden = include_str!("golden/table.csv");
    assert_eq!(hand_built_table().to_csv(), golden);
}

#[test]
fn csv_round_trips_through_a_csv_reader() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_config(BuiltinModel::Ex1);
    cfg.output_path = Some(dir.path().join("errors.csv"));
    let table = run_experiment(&cfg).unwrap();

    let text = std::fs::read_to_string(dir.path().join("errors.csv")).unwrap();
    assert_eq!(text, table.to_csv());
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes());
    let header: Vec<String> = reader.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["scheme", "level", "h", "n_paths", "l2_error", "cpu_seconds", "stderr"]);
    let records: Vec<csv::StringRecord> = reader.records().map(Result::unwrap).collect();
    assert_eq!(records.len(), table.rows().len());
    for (rec, row) in records.iter().zip(table.rows()) {
        assert_eq!(rec[0].parse::<SchemeKind>().unwrap(), row.scheme);
        assert_eq!(rec[1].parse::<u32>().unwrap(), row.level);
        assert_eq!(rec[2].parse::<f64>().unwrap(), row.h);
        let l2: f64 = rec[4].parse().unwrap();
        assert!((l2 - row.l2_error).abs() <= 1e-9 * row.l2_error);
    }
    let orders: Vec<(&str, f64)> = text
        .lines()
        .filter_map(|l| l.strip_prefix("# order,"))
        .map(|l| {
            let (s, v) = l.split_once(',').unwrap();
            (s, v.parse().unwrap())
        })
        .collect();
    assert_eq!(orders.len(), 3);
    for (name, value) in orders {
        let fitted = table.order(name.parse().unwrap()).unwrap();
        assert!((value - fitted).abs() < 1e-8);
    }
}

#[test]
fn refinement_by_two_levels_reduces_error() {
    let mut cfg = ExperimentConfig::new(make_builtin(BuiltinModel::Gbm));
    cfg.schemes = vec![SchemeKind::Euler, SchemeKind::RandMilstein, SchemeKind::ReducedNonRand];
    cfg.level_min = 3;
    cfg.level_max = 7;
    cfg.level_ref = 9;
    cfg.n_paths = 10_000;
    cfg.seed = 8;
    let table = run_experiment(&cfg).unwrap();
    for scheme in cfg.schemes.iter().copied() {
        for level in 3..=5 {
            let coarse = table.row(scheme, level).unwrap().l2_error;
            let fine = table.row(scheme, level + 2).unwrap().l2_error;
            assert!(fine < coarse, "{scheme}: level {} error {fine} >= level {level} error {coarse}", level + 2);
        }
    }
}

#[test]
fn second_moments_stay_bounded_across_levels() {
    let model = make_builtin(BuiltinModel::Ex1);
    let n = 10_000;
    let levels = 4..=10u32;
    let kinds = [SchemeKind::Euler, SchemeKind::RandMilstein, SchemeKind::ReducedRand];
    // sums[kind][level][grid point] of |X_n|^2
    let mut sums: Vec<Vec<Vec<f64>>> = kinds
        .iter()
        .map(|_| levels.clone().map(|l| vec![0.0; (1 << l) + 1]).collect())
        .collect();
    for p in 0..n {
        let s = CoupledSample::generate(&model, *levels.start(), *levels.end(), &mut PathStream::new(9, p)).unwrap();
        for (k, &kind) in kinds.iter().enumerate() {
            for (li, level) in levels.clone().enumerate() {
                let tr = s.integrate(kind, &model, level).unwrap();
                for (acc, x) in sums[k][li].iter_mut().zip(tr.iter()) {
                    *acc += x[0] * x[0];
                }
            }
        }
    }
    for (k, kind) in kinds.iter().enumerate() {
        let maxima: Vec<f64> = sums[k]
            .iter()
            .map(|per_point| per_point.iter().fold(0.0f64, |m, &v| m.max(v / n as f64)))
            .collect();
        let lo = maxima.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = maxima.iter().copied().fold(0.0, f64::max);
        assert!(hi < 1.5 * lo, "{kind}: max second moments {maxima:?}");
    }
}

#[test]
fn config_file_round_trip_and_validation() {
    let cfg = ExperimentConfig::parse(
        "# experiment\nmodel = gbm\nschemes = euler, rand-milstein\nL_min = 3\nL_max = 6\nL_ref = 8\n\
         n_paths = 50\nseed = 12\nthreads = 1\nmu = 0.1, 0.2\nnu = 0.3,0.4\n",
    )
    .unwrap();
    assert_eq!(cfg.schemes, [SchemeKind::Euler, SchemeKind::RandMilstein]);
    assert_eq!((cfg.level_min, cfg.level_max, cfg.level_ref), (3, 6, 8));
    assert_eq!(cfg.n_paths, 50);
    assert_eq!(cfg.seed, 12);
    assert_eq!(cfg.model.drift(0.0, &[2.0], 1), vec![0.4]);
    cfg.validate().unwrap();

    let bad = ExperimentConfig::parse("L_max = 10\nL_ref = 10\n").unwrap();
    let err = bad.validate().unwrap_err();
    assert!(err.is_config());
    assert!(err.to_string().contains("L_ref"));

    assert!(ExperimentConfig::parse("colour = blue\n").unwrap_err().is_config());
    assert!(ExperimentConfig::parse("model = ex1\nmu = 1,2\n").is_err());
    assert!(ExperimentConfig::parse("n_paths = many\n").is_err());
}
