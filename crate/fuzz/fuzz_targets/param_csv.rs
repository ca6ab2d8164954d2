#![no_main]

use artl::model::ParamVector;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(p) = ParamVector::read_csv(data) {
        let mut out = Vec::new();
        p.write_csv(&mut out).expect("write to memory");
        let again = ParamVector::read_csv(out.as_slice()).expect("round trip");
        assert_eq!(p.layout(), again.layout());
        assert_eq!(p.len(), again.len());
        for (a, b) in p.as_slice().iter().zip(again.as_slice()) {
            assert!(a == b || (a.is_nan() && b.is_nan()));
        }
    }
});
