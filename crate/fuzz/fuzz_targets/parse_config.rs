#![no_main]

use libfuzzer_sys::fuzz_target;
use mipt_xeb_cli::config::Config;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        if let Ok(cfg) = Config::parse(s) {
            let back = Config::parse(&cfg.canonical()).expect("canonical form parses");
            assert_eq!(back.hash(), cfg.hash());
        }
    }
});
