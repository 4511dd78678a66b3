//! Byte-level format stability against checked-in golden files.
//!
//! Regenerate with `OCCFLOW_BLESS=1 cargo test -p occflow --test golden_formats`
//! and update the pinned hashes.

mod common;

use std::fs;

use common::golden;
use common::sha256_hex;
use occflow::flow::{read_flow, write_flow};
use occflow::fusion::{read_feature, write_feature};
use occflow::grid::{read_grid, read_sequence, write_grid, write_sequence, DEFAULT_NUM_CLASSES};

pub const GOLDEN: [(&str, &str); 4] = [
    (
        "grid.occv",
        "4f24b8bc497696268a7223c32717ec1b8a31280f9e22b1e4f12813535d7252f2",
    ),
    (
        "sequence.occs",
        "7b7a64997fbaae67b86f5d1855ed4523b571aa8b747c92fabef2265ba6d7f41f",
    ),
    (
        "field.flo",
        "c3093308bc3eeb99e1de8fdba7d01a5a3dc2ffc7a9260f9961d729a6776bb0dd",
    ),
    (
        "probs.feat",
        "25362b1142f5e6bc9137dd5c5da2ee4d6fa2997fa1e6ec6ec648630049cc2ac0",
    ),
];

fn encode(name: &str) -> Vec<u8> {
    let mut out = Vec::new();
    match name {
        "grid.occv" => write_grid(&golden::grid(0), &mut out),
        "sequence.occs" => write_sequence(&golden::sequence(), &mut out),
        "field.flo" => write_flow(&golden::flow(), &mut out),
        "probs.feat" => write_feature(&golden::feature(), &mut out),
        _ => unreachable!(),
    }
    out
}

fn reencode(name: &str, bytes: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    match name {
        "grid.occv" => write_grid(&read_grid(bytes, DEFAULT_NUM_CLASSES).unwrap(), &mut out),
        "sequence.occs" => write_sequence(
            &read_sequence(bytes, DEFAULT_NUM_CLASSES).unwrap(),
            &mut out,
        ),
        "field.flo" => write_flow(&read_flow(bytes).unwrap(), &mut out),
        "probs.feat" => write_feature(&read_feature(bytes).unwrap(), &mut out),
        _ => unreachable!(),
    }
    out
}

#[test]
fn golden_files_match_encoders_and_hashes() {
    let bless = std::env::var_os("OCCFLOW_BLESS").is_some();
    for (name, hash) in GOLDEN {
        let path = golden::dir().join(name);
        let fresh = encode(name);
        if bless {
            fs::write(&path, &fresh).unwrap();
            println!("{name} {}", sha256_hex(&fresh));
            continue;
        }
        let stored = fs::read(&path).unwrap();
        assert_eq!(sha256_hex(&stored), hash, "{name} hash");
        assert_eq!(stored, fresh, "{name} encoder output drifted");
        assert_eq!(reencode(name, &stored), stored, "{name} round trip");
    }
}

#[test]
fn golden_values_decode_as_built() {
    let dir = golden::dir();
    let g = read_grid(
        &fs::read(dir.join("grid.occv")).unwrap(),
        DEFAULT_NUM_CLASSES,
    )
    .unwrap();
    assert_eq!(g, golden::grid(0));
    assert_eq!(g.get(4, 3, 2), ((4 + 6 + 6) % 18) as u8);
    let f = read_flow(&fs::read(dir.join("field.flo")).unwrap()).unwrap();
    assert_eq!(f.get(2, 3), [1.75, -0.75]);
    let p = read_feature(&fs::read(dir.join("probs.feat")).unwrap()).unwrap();
    // f32 payload: 0.1 does not survive exactly.
    assert_eq!(p.voxel(0)[0], 0.1f32 as f64);
}
