#![no_main]

use bnmf::io::{read_csv, write_masked_csv, CsvOptions};
use libfuzzer_sys::fuzz_target;

// First byte picks the options, the rest is the file.
fuzz_target!(|data: &[u8]| {
    let Some((&flags, body)) = data.split_first() else {
        return;
    };
    let opts = CsvOptions {
        missing: if flags & 1 == 0 { String::new() } else { "NA".into() },
        header: flags & 2 != 0,
    };
    let Ok(m) = read_csv(body, &opts) else {
        return;
    };
    let mut out = Vec::new();
    write_masked_csv(&mut out, &m, "NA").unwrap();
    let back = read_csv(
        out.as_slice(),
        &CsvOptions {
            missing: "NA".into(),
            header: false,
        },
    )
    .unwrap();
    assert_eq!(back, m);
});
