mod common;

use std::panic::catch_unwind;
use std::path::Path;

use async_admm::io::*;
use async_admm::opf::{fixtures, OpfCase, Partition};
use common::fuzz_corpus;
use proptest::prelude::*;

fn fixture_dir() -> &'static Path {
    Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../fixtures"))
}

fn builtin() -> Vec<(&'static str, OpfCase, Option<Vec<Vec<u32>>>)> {
    vec![
        ("case9", fixtures::case9(), Some(fixtures::case9_regions())),
        ("three_bus", fixtures::three_bus_chain(), Some(fixtures::three_bus_regions())),
        ("two_bus", fixtures::two_bus(), None),
    ]
}

#[test]
fn fixture_files_match_builtin_cases_and_round_trip() {
    for (name, case, regions) in builtin() {
        let parsed = read_case(&fixture_dir().join(format!("{name}.case"))).unwrap();
        assert_eq!(parsed, case, "{name}");
        assert_eq!(parse_case(&write_case(&parsed)).unwrap(), parsed);
        if let Some(regions) = regions {
            let part = read_partition(&fixture_dir().join(format!("{name}.part")), &case).unwrap();
            assert_eq!(part, Partition::new(&case, regions).unwrap());
            assert_eq!(parse_partition(&write_partition(&part), &case).unwrap(), part);
        }
    }
}

#[test]
fn parsers_survive_ten_thousand_mutations() {
    let cases: Vec<String> = builtin().iter().map(|(_, c, _)| write_case(c)).collect();
    let case9 = fixtures::case9();
    let parts = vec![
        write_partition(&Partition::new(&case9, fixtures::case9_regions()).unwrap()),
        "1: 1 2 3\n2: 4 5 6 7 8 9\n".to_string(),
    ];
    let mut crashes = 0;
    let mut accepted = 0;
    for bytes in fuzz_corpus(&cases, 10_000, 1) {
        match catch_unwind(|| parse_case_bytes(&bytes).is_ok()) {
            Ok(ok) => accepted += ok as usize,
            Err(_) => crashes += 1,
        }
    }
    for bytes in fuzz_corpus(&parts, 10_000, 2) {
        if catch_unwind(|| parse_partition_bytes(&bytes, &case9).is_ok()).is_err() {
            crashes += 1;
        }
    }
    assert_eq!(crashes, 0);
    assert!(accepted > 0 && accepted < 10_000);
}

#[test]
fn case_errors_carry_positions() {
    let text = write_case(&fixtures::three_bus_chain()).replace("0.02 0.12", "0.02 x12");
    let e = parse_case(&text).unwrap_err();
    let loc = e.location.expect("located");
    let line = text.lines().nth(loc.line - 1).unwrap();
    assert_eq!(&line[loc.column - 1..loc.column + 2], "x12");
}

proptest! {
    #[test]
    fn arbitrary_bytes_never_panic(bytes in prop::collection::vec(any::<u8>(), 0..400)) {
        let _ = parse_case_bytes(&bytes);
        let _ = parse_partition_bytes(&bytes, &fixtures::case9());
        let _ = read_trace_str(&String::from_utf8_lossy(&bytes));
    }

    #[test]
    fn scaled_loads_round_trip(scale in 0.0f64..3.0, shift in -5.0f64..5.0) {
        let mut case = fixtures::case9();
        for b in case.buses.iter_mut() {
            b.pd *= scale;
            b.qd += shift;
        }
        prop_assert_eq!(parse_case(&write_case(&case)).unwrap(), case);
    }

    #[test]
    fn partition_order_does_not_matter(perm in Just((0..3usize).collect::<Vec<_>>()).prop_shuffle()) {
        let case = fixtures::case9();
        let regions = fixtures::case9_regions();
        let text: String = perm.iter().map(|&k| {
            let ids: Vec<String> = regions[k].iter().map(u32::to_string).collect();
            format!("{}: {}\n", k + 1, ids.join(" "))
        }).collect();
        prop_assert_eq!(parse_partition(&text, &case).unwrap(), Partition::new(&case, regions).unwrap());
    }
}
