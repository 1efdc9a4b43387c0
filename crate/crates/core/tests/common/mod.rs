#![allow(dead_code)]

use std::path::PathBuf;

use irqscope::hardware::parse_hw_spec;
use irqscope::pipeline::{prepare, Prepared};

pub fn corpus(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus").join(name)
}

pub fn source(name: &str) -> String {
    std::fs::read_to_string(corpus(name)).unwrap_or_else(|e| panic!("{}: {}", name, e))
}

pub fn avr() -> irqscope::hardware::HardwareSpec {
    parse_hw_spec(&source("avr8.hw")).expect("avr8.hw parses")
}

pub fn prep(name: &str) -> Prepared {
    prepare(&source(name), Some(avr()), &[]).unwrap_or_else(|e| panic!("{}: {}", name, e))
}

/// Programs small enough for exhaustive enumeration, with the handler
/// firing bound used for each.
pub const SMALL: &[(&str, usize)] = &[
    ("small/uart4.c", 6),
    ("small/counter.c", 3),
    ("small/torn16.c", 3),
    ("small/handshake.c", 3),
    ("small/two_writers.c", 3),
    ("small/pointer.c", 3),
    ("small/table.c", 3),
    ("small/pre_inc.c", 3),
    ("small/shared_call.c", 3),
    ("small/adc_filter.c", 3),
    ("small/self_disable.c", 3),
    ("small/signed.c", 3),
];
