#![no_main]

use emprobe::probe::{read_category_map, write_category_map};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(map) = read_category_map(data) else {
        return;
    };
    let mut buf = Vec::new();
    write_category_map(&map, &mut buf).expect("writing a parsed map");
    let back = read_category_map(buf.as_slice()).expect("re-reading a written map");
    assert_eq!(back, map);
});
