use chrono::Datelike;
use phenoflow_core::data::{aggregate_weather_weekly, generate_synthetic_dataset, SyntheticConfig};
use phenoflow_core::neural::{
    build_features, AIR_OFFSET, IRR_OFFSET, N_FEATURES, PRECIP_OFFSET, SOIL_INDEX,
};

#[test]
fn features_match_brute_force_daily_windows() {
    let cfg = SyntheticConfig {
        n_plots: 10,
        first_year: 2015,
        last_year: 2016,
        ..SyntheticConfig::default()
    };
    let ds = generate_synthetic_dataset(&cfg).unwrap();
    let weekly = aggregate_weather_weekly(&ds.weather).unwrap();
    let keys: Vec<(String, i32)> = ds
        .soil
        .iter()
        .map(|s| (s.plot_id.clone(), s.year))
        .collect();
    let feats = build_features(&weekly, &ds.soil, &keys).unwrap();
    assert_eq!(feats.len(), keys.len());
    for (fv, (plot, year)) in feats.iter().zip(&keys) {
        assert_eq!((&fv.plot_id, fv.year), (plot, *year));
        assert_eq!(fv.values.len(), N_FEATURES);
        for w in 1..=26u32 {
            let (lo, hi) = (7 * (w - 1) + 1, 7 * w);
            let days: Vec<_> = ds
                .weather
                .iter()
                .filter(|d| d.date.year() == *year && (lo..=hi).contains(&d.date.ordinal()))
                .collect();
            assert_eq!(days.len(), 7);
            let mean = |f: &dyn Fn(&phenoflow_core::data::DailyWeather) -> f64| {
                days.iter().map(|d| f(d)).sum::<f64>() / days.len() as f64
            };
            let i = (w - 1) as usize;
            assert!((fv.values[AIR_OFFSET + i] - mean(&|d| d.air_temp)).abs() < 1e-12);
            assert!((fv.values[PRECIP_OFFSET + i] - mean(&|d| d.precipitation)).abs() < 1e-12);
            assert!((fv.values[IRR_OFFSET + i] - mean(&|d| d.irradiance)).abs() < 1e-12);
        }
        let series = ds
            .soil
            .iter()
            .find(|s| &s.plot_id == plot && s.year == *year)
            .unwrap();
        let soil = series.readings.iter().map(|r| r.1).sum::<f64>() / series.readings.len() as f64;
        assert!((fv.values[SOIL_INDEX] - soil).abs() < 1e-12);
    }
}
