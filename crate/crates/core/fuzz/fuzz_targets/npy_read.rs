#![no_main]

use libfuzzer_sys::fuzz_target;
use synthscope::io::{npy_bytes, read_npy};

fuzz_target!(|data: &[u8]| {
    if let Ok(array) = read_npy(data) {
        // re-encoding is canonical: it decodes to the same array
        let bytes = npy_bytes(&array);
        let back = read_npy(&bytes).expect("own encoding decodes");
        assert_eq!(npy_bytes(&back), bytes);
    }
});
