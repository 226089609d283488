//! Fuzz the study-configuration JSON decoder: arbitrary bytes must either
//! deserialize into a config that serializes back, or fail cleanly.

#![no_main]

use libfuzzer_sys::fuzz_target;
use panelsub::sim::StudyConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else { return };
    if let Ok(config) = serde_json::from_str::<StudyConfig>(text) {
        // Decoded configs must survive a serialize/deserialize round trip.
        let json = serde_json::to_string(&config).unwrap();
        let again: StudyConfig = serde_json::from_str(&json).unwrap();
        assert_eq!(config.n_reps, again.n_reps);
        assert_eq!(config.master_seed, again.master_seed);
        assert_eq!(config.cells.len(), again.cells.len());
    }
});
