#![no_main]

use libfuzzer_sys::fuzz_target;
use synthscope::io::{frame_stats, import_image_limited, read_png16};

fuzz_target!(|data: &[u8]| {
    let _ = read_png16(data);
    if let Ok(frame) = import_image_limited(data, 1 << 20) {
        let stats = frame_stats(frame.view());
        assert_eq!((stats.height, stats.width), frame.dim());
    }
});
