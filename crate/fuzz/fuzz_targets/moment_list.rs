#![no_main]

use libfuzzer_sys::fuzz_target;
use polygame::cli::parse_moment_list;
use polygame::recover::{recover_measure, DEFAULT_RANK_TOL};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(m) = parse_moment_list(text) {
        assert!(!m.is_empty());
        assert!(m.values().iter().all(|v| v.is_finite()));
        if m.len() <= 12 {
            // recovery either fails cleanly or yields a valid measure
            if let Ok(d) = recover_measure(&m, DEFAULT_RANK_TOL) {
                assert!(d.atoms().iter().all(|a| (0.0..=1.0).contains(a)));
                assert!(d.weights().iter().all(|w| w.is_finite() && *w >= 0.0));
            }
        }
    }
});
