//! Fuzz the long-format CSV ingestion path: arbitrary bytes must either
//! parse into a balanced panel or produce a structured error, never panic.

#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(panel) = panelsub::read_panel_csv(data) {
        // A successful parse must uphold the balanced-panel invariants.
        assert!(panel.n_units() >= 1 && panel.n_periods() >= 1 && panel.dim() >= 1);
        assert!(panel.values().iter().all(|v| v.is_finite()));
        // Round trip through the row representation preserves the panel.
        let back = panelsub::validate_panel(&panel.to_rows()).unwrap();
        assert_eq!(panel, back);
    }
});
