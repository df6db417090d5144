#![no_main]

use djscc_core::kernels::tensor_file;
use djscc_core::kernels::KernelWeights;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = tensor_file::decode(data) {
        let bytes = tensor_file::encode(&map);
        assert_eq!(tensor_file::encode(&tensor_file::decode(&bytes).unwrap()), bytes);
    }
    if let Ok(w) = KernelWeights::decode(data) {
        let bytes = w.encode();
        assert_eq!(KernelWeights::decode(&bytes).unwrap().encode(), bytes);
    }
});
