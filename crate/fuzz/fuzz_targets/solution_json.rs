#![no_main]

use libfuzzer_sys::fuzz_target;
use polygame::cli::parse_solution_json;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(eq) = parse_solution_json(text) {
        assert_eq!(eq.player1.len(), eq.value.len());
        assert_eq!(eq.player2.len(), eq.value.len());
        for m in eq.player1.iter().chain(&eq.player2) {
            assert!(m.atoms().windows(2).all(|w| w[0] < w[1]));
            assert!(m.atoms().iter().all(|a| (0.0..=1.0).contains(a)));
            assert!(m.weights().iter().all(|w| *w >= 0.0));
        }
    }
});
