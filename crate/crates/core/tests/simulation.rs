use stratvar::config::preset;
use stratvar::montecarlo::{run_study, Metric};

#[test]
fn coverage_is_consistent_across_seeds() {
    // two independent runs of the same study agree within 4 combined MC-SEs
    let mut cfg = preset("table4").unwrap();
    cfg.simulation.replications = 4000;
    let first = cfg.studies().unwrap();
    cfg.simulation.seed += 1;
    let second = cfg.studies().unwrap();
    for (a, b) in first.iter().zip(&second) {
        let mut b_cfg = b.config.clone();
        b_cfg.population = a.config.population.clone();
        let ra = run_study(&a.config).unwrap();
        let rb = run_study(&b_cfg).unwrap();
        for est in ["collapsed", "two_per_stratum"] {
            let x = ra.find(est, None, Metric::Cp).unwrap();
            let y = rb.find(est, None, Metric::Cp).unwrap();
            let se = x.mc_se.unwrap().hypot(y.mc_se.unwrap());
            assert!(
                (x.value - y.value).abs() < 4.0 * se,
                "{} {est}: {} vs {}",
                a.config.name,
                x.value,
                y.value
            );
        }
    }
}

#[test]
fn rmse_sweep_uses_paired_samples() {
    // collapsed appears once and the EB/CEB arms cover the grid
    let mut cfg = preset("figure1").unwrap();
    cfg.simulation.replications = 200;
    cfg.estimators.truncation_margins = vec![0.5, 1.0];
    let study = &cfg.studies().unwrap()[1];
    let r = run_study(&study.config).unwrap();
    let names: Vec<(String, Option<f64>)> = r.rows.iter().map(|x| (x.estimator.clone(), x.e)).collect();
    assert_eq!(
        names,
        vec![
            ("collapsed".to_string(), None),
            ("eb".to_string(), Some(0.5)),
            ("eb".to_string(), Some(1.0)),
            ("ceb".to_string(), Some(0.5)),
            ("ceb".to_string(), Some(1.0)),
        ]
    );
}

#[test]
fn probability_and_length_bounds() {
    let mut cfg = preset("table4").unwrap();
    cfg.simulation.replications = 300;
    for s in cfg.studies().unwrap() {
        let r = run_study(&s.config).unwrap();
        for row in &r.rows {
            match row.metric {
                Metric::Cp => assert!((0.0..=1.0).contains(&row.value)),
                Metric::Al => assert!(row.value >= 0.0),
                _ => unreachable!(),
            }
        }
    }
}
