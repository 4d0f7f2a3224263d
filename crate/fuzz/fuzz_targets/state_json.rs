#![no_main]

use bnmf::io::{read_state, write_state};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(saved) = read_state(data) else {
        return;
    };
    let mut out = Vec::new();
    write_state(&mut out, &saved).unwrap();
    assert_eq!(read_state(out.as_slice()).unwrap(), saved);
});
