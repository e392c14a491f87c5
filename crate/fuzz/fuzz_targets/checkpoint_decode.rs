#![no_main]

use libfuzzer_sys::fuzz_target;
use semcom::checkpoint::Checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(ck) = Checkpoint::from_bytes(data) {
        let again = Checkpoint::from_bytes(&ck.to_bytes()).expect("re-encoded checkpoint decodes");
        assert_eq!(again, ck);
    }
});
