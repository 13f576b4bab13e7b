#![cfg_attr(fuzzing, no_main)]

use hydrovar::scenario::{parse_scenarios, scenarios_to_string};

fn run(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(set) = parse_scenarios(text) {
        let again = scenarios_to_string(&set);
        let reparsed = parse_scenarios(&again).expect("written scenario sets parse");
        assert_eq!(scenarios_to_string(&reparsed), again);
    }
}

#[cfg(fuzzing)]
libfuzzer_sys::fuzz_target!(|data: &[u8]| run(data));

#[cfg(not(fuzzing))]
fn main() {
    for path in std::env::args().skip(1) {
        run(&std::fs::read(path).expect("readable input"));
    }
}
