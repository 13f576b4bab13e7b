#![cfg_attr(fuzzing, no_main)]

use hydrovar::units::{parse_units, units_to_string};

fn run(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(units) = parse_units(text) {
        let again = units_to_string(&units);
        let reparsed = parse_units(&again).expect("written units parse");
        assert_eq!(reparsed, units);
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
