#![no_main]
use kamred::harness::KamReport;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(r) = KamReport::from_json(s) {
        // a report that passes the size checks must be usable by the dynamics loader
        let n = r.problem.dim();
        assert_eq!(r.run.u_total.dim, n);
        assert_eq!(r.run.lambdas_inf.len(), n);
    }
});
