#![no_main]

use libfuzzer_sys::fuzz_target;
use synthscope::pipeline::Expr;

fuzz_target!(|data: &[u8]| {
    if let Ok(text) = std::str::from_utf8(data) {
        if let Ok(expr) = Expr::parse(text) {
            let _ = expr.references();
            let _ = expr.eval(&mut |_| Ok::<f64, ()>(1.5));
        }
    }
});
