use polvote::config::StudyConfig;

#[test]
fn shipped_default_config_matches_builtin_defaults() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/../../configs/default.toml");
    assert_eq!(StudyConfig::load(path.as_ref()).unwrap(), StudyConfig::default());
}

#[test]
fn toml_round_trip_is_lossless() {
    let cfg = StudyConfig::default();
    assert_eq!(StudyConfig::from_toml_str(&cfg.to_toml_string()).unwrap(), cfg);
}
