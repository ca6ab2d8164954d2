#![no_main]

use artl::data::{parse_benchmark, BenchmarkSpec, NonNumeric};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Some((&policy, body)) = data.split_first() else {
        return;
    };
    let spec = BenchmarkSpec {
        drop_columns: vec!["id".into()],
        target: "y".into(),
        non_numeric: if policy & 1 == 0 { NonNumeric::DropRows } else { NonNumeric::DropColumns },
    };
    if let Ok(ds) = parse_benchmark(body, &spec) {
        assert!(!ds.is_empty());
        assert_eq!(ds.y().len(), ds.len());
        assert!(ds.y().iter().all(|v| v.is_finite()));
        assert!(ds.x().iter().all(|v| v.is_finite()));
    }
});
