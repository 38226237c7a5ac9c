#![no_main]

use libfuzzer_sys::fuzz_target;
use polygame::stochgame::{game_from_json, game_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(g) = game_from_json(text) {
        // whatever parses must survive a round trip unchanged
        let out = game_to_json(&g);
        let back = game_from_json(&out).expect("serialized game parses");
        assert_eq!(game_to_json(&back), out);
        assert_eq!(g.payoffs().len(), g.num_states());
    }
});
