#![cfg_attr(fuzzing, no_main)]

use std::sync::OnceLock;

use hydrovar::dual::{lambda_to_string, parse_lambda};
use hydrovar::scenario::{parse_tree, ScenarioTree};

fn tree() -> &'static ScenarioTree {
    static TREE: OnceLock<ScenarioTree> = OnceLock::new();
    TREE.get_or_init(|| {
        parse_tree(include_str!("../corpus/tree_json/tiny.json")).expect("seed tree parses")
    })
}

fn run(data: &[u8]) {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(table) = parse_lambda(text) {
        if let Ok(v) = table.to_vector(tree()) {
            let again = lambda_to_string(tree(), &v);
            let back = parse_lambda(&again)
                .expect("written prices parse")
                .to_vector(tree())
                .expect("same tree");
            assert_eq!(
                back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
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
