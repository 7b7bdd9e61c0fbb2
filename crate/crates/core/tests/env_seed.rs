//! Kept in its own binary: it mutates the process environment.

use skysim::experiments::{RunConfig, SEED_ENV};

#[test]
fn environment_seed_overrides_config() {
    let mut cfg = RunConfig::from_toml_str("seed = 5\n").unwrap();
    std::env::remove_var(SEED_ENV);
    cfg.apply_env().unwrap();
    assert_eq!(cfg.seed, 5);

    std::env::set_var(SEED_ENV, " 42 ");
    cfg.apply_env().unwrap();
    assert_eq!(cfg.seed, 42);

    std::env::set_var(SEED_ENV, "forty-two");
    let err = cfg.apply_env().unwrap_err().to_string();
    assert!(err.contains(SEED_ENV), "{err}");
    assert_eq!(cfg.seed, 42);
    std::env::remove_var(SEED_ENV);
}
