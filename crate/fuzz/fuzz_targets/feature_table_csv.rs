#![no_main]

use emprobe::dataio::{read_feature_table, write_feature_table};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(table) = read_feature_table(data, "fuzz") else {
        return;
    };
    // Anything that parses must survive a write/read round trip unchanged.
    let mut buf = Vec::new();
    write_feature_table(&table, &mut buf).expect("writing a parsed table");
    let back = read_feature_table(buf.as_slice(), "fuzz").expect("re-reading a written table");
    assert_eq!(back, table);
});
