//! The bundled eight-instance fixture: four schema pairs.

use winoprobe_core::schema::Dataset;

use crate::dataset::parse_dataset;

pub const FIXTURE: &str = include_str!("../resources/fixture.jsonl");

pub fn dataset() -> Dataset {
    parse_dataset(FIXTURE.as_bytes(), "fixture").expect("bundled fixture is valid")
}

