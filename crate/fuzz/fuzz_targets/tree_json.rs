#![cfg_attr(fuzzing, no_main)]

use hydrovar::scenario::{parse_tree, tree_to_string};

fn run(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(tree) = parse_tree(text) {
        let again = tree_to_string(&tree);
        let reparsed = parse_tree(&again).expect("written trees parse");
        assert_eq!(tree_to_string(&reparsed), again);
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
