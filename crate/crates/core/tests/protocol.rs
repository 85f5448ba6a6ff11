use gosdpca::dgp::{generate, DgpConfig};
use gosdpca::evaluation::{monte_carlo_study, rolling_forecast, Forecaster};
use gosdpca::methods::MethodConfig;
use gosdpca::series::SeriesMatrix;

fn panel() -> SeriesMatrix {
    generate(&DgpConfig { dgp_id: 1, n: 140, p: 40, r_dgp: 2, s: 12, seed: 77 }).unwrap().series
}

fn methods() -> Vec<gosdpca::GridMethod> {
    vec![
        MethodConfig::go_sdpca(10).at(2, 3),
        MethodConfig::Sw { label: None }.at(2, 3),
        MethodConfig::Lyb { label: None }.at(2, 3),
        MethodConfig::Lasso { label: None, path_len: 30 }.at(2, 3),
    ]
}

/// Forecasts made at an origin must not move when anything after the origin
/// changes.
#[test]
fn forecasts_ignore_data_after_the_origin() {
    let series = panel();
    let (n, cols) = (series.n_obs(), series.n_cols());
    let cut = n - 10;
    let mut scrambled = series.data().clone();
    for t in cut + 1..n {
        for j in 0..cols {
            scrambled[(t, j)] = 1e3 * ((t * 31 + j * 7) % 13) as f64;
        }
    }
    let scrambled = SeriesMatrix::new(series.names().to_vec(), scrambled).unwrap();
    for m in methods() {
        let clean = rolling_forecast(&series, 0, &m, 100, 1, 30).unwrap();
        let dirty = rolling_forecast(&scrambled, 0, &m, 100, 1, 30).unwrap();
        for (a, b) in clean.iter().zip(&dirty) {
            if a.origin <= cut {
                assert_eq!(a.predicted.to_bits(), b.predicted.to_bits(), "{} leaked at origin {}", m.label(), a.origin);
            }
            if a.origin < cut {
                assert_eq!(a.realized, b.realized);
            }
        }
    }
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let series = panel();
    let ms = methods();
    let rolling = |m: &gosdpca::GridMethod| serde_json::to_string(&rolling_forecast(&series, 0, m, 100, 1, 20).unwrap()).unwrap();
    for m in &ms {
        assert_eq!(in_pool(1, || rolling(m)), in_pool(4, || rolling(m)), "{}", m.label());
    }

    let template = DgpConfig { dgp_id: 1, n: 120, p: 300, r_dgp: 3, s: 30, seed: 0 };
    let dyn_methods: Vec<&dyn Forecaster> = ms.iter().map(|m| m as &dyn Forecaster).collect();
    let study = || serde_json::to_string(&monte_carlo_study(&template, &dyn_methods, 6, 40).unwrap()).unwrap();
    assert_eq!(in_pool(1, study), in_pool(3, study));
}

#[test]
fn rolling_origins_cover_the_test_period() {
    let series = panel();
    let m = MethodConfig::Ar { label: None }.at(2, 1);
    let records = rolling_forecast(&series, 0, &m, 60, 3, 15).unwrap();
    let n = series.n_obs();
    let origins: Vec<usize> = records.iter().map(|r| r.origin).collect();
    assert_eq!(origins, (n - 3 - 15..n - 3).collect::<Vec<_>>());
    for r in &records {
        assert_eq!(r.realized, series.column(0)[r.origin + 3]);
    }
}
