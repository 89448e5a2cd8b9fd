use torus_rds::runner::{execute, exit_code, parse_config, Experiment};
use torus_rds::Error;

fn config(experiment: Experiment, threads: usize) -> String {
    let body = match experiment {
        Experiment::Spectrum => {
            r#""family": {"type": "CoupledStandard", "N": 2, "L": 50}, "noise": {"type": "Shift", "epsilon": 0.01}, "n_steps": 400, "burn_in": 20, "trials": 5"#
        }
        Experiment::Sweep => {
            r#""family": {"type": "CoupledStandard", "N": 1, "L": 10}, "noise": {"type": "Shift", "epsilon": 0.01}, "n_steps": 400, "burn_in": 20, "l_values": [10, 100]"#
        }
        Experiment::F2 => {
            r#""family": {"type": "CoupledStandard", "N": 1, "L": 10}, "samples": 5000, "l_values": [10, 100, 1000]"#
        }
        Experiment::ConeEscape => {
            r#""family": {"type": "CoupledStandard", "N": 1, "L": 1000}, "noise": {"type": "Shift", "epsilon": 0.01}, "n_steps": 2, "trials": 300, "beta": 0.5"#
        }
        Experiment::NoiseCheck => {
            r#""family": {"type": "CoupledStandard", "N": 1, "L": 10}, "noise": {"type": "Rotational", "c": 0.01, "centers": {"light_grid": 3}}, "trials": 300, "samples": 1000"#
        }
        Experiment::Transversality => {
            r#""family": {"type": "StrongCoupling2", "L": 10}, "grid": 24, "refine_iters": 3, "system_grid": 32"#
        }
        Experiment::MetricCheck => {
            r#""family": {"type": "CoupledStandard", "N": 2, "L": 10}, "trials": 100"#
        }
        Experiment::Uniformity => {
            r#""family": {"type": "CoupledStandard", "N": 1, "L": 10}, "noise": {"type": "Shift", "epsilon": 0.05}, "n_steps": 2, "samples": 1000"#
        }
    };
    format!(
        r#"{{"experiment": "{}", {body}, "seed": 77, "threads": {threads}}}"#,
        experiment.name()
    )
}

#[test]
fn every_experiment_is_independent_of_thread_count() {
    for experiment in Experiment::ALL {
        let run = |threads| {
            let cfg = parse_config(&config(experiment, threads)).unwrap();
            execute(&cfg).unwrap()
        };
        let one = run(1);
        let many = run(8);
        let bits = |o: &torus_rds::runner::RunOutput| -> Vec<(String, u64)> {
            o.metric_values()
                .into_iter()
                .map(|(k, v)| (k, v.to_bits()))
                .collect()
        };
        assert!(!one.rows.is_empty(), "{}", experiment.name());
        assert_eq!(bits(&one), bits(&many), "{}", experiment.name());
        assert_eq!(
            one.summary.keys().collect::<Vec<_>>(),
            many.summary.keys().collect::<Vec<_>>()
        );
    }
}

#[test]
fn entropy_seed_is_realized_and_reproducible() {
    let text = config(Experiment::Spectrum, 1).replace("\"seed\": 77", "\"seed\": 0");
    let out = execute(&parse_config(&text).unwrap()).unwrap();
    assert_ne!(out.config.seed, 0);
    let again = execute(&out.config).unwrap();
    assert_eq!(out.metric_values(), again.metric_values());
}

#[test]
fn error_classes_map_to_exit_codes() {
    assert_eq!(exit_code(&Error::Config("x".into())), 1);
    assert_eq!(exit_code(&Error::Invariant("x".into())), 2);
    let err = parse_config(r#"{"family": {"type": "StrongCoupling2", "L": 0.5}}"#)
        .and_then(|c| c.validate());
    assert_eq!(exit_code(&err.unwrap_err()), 1);
}
