#![no_main]

use adiabat_core::exprlang::parse;
use libfuzzer_sys::fuzz_target;
use num_complex::Complex64;

fuzz_target!(|data: &[u8]| {
    let Ok(src) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(e) = parse(src) {
        // whatever parses must evaluate and differentiate without panicking
        let _ = e.eval(Complex64::new(0.3, -0.2));
        let _ = e.derivative().eval(Complex64::new(-1.1, 0.4));
    }
});
