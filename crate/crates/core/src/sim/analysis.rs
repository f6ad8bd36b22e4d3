//! Stand-in analysis pass run over raw sensor bytes at execution time.
//!
//! Treats the byte stream as three interleaved channels and emits
//! min/max/mean/variance per channel. Any deterministic function works
//! for protocol testing; this one at least resembles a summary pass.

const CHANNELS: usize = 3;

/// Summarize a raw series into a fixed-size analysis blob.
pub fn analyze(raw: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(CHANNELS * (2 + 16));
    for channel in 0..CHANNELS {
        let mut min = u8::MAX;
        let mut max = u8::MIN;
        let mut count = 0u64;
        let mut sum = 0.0f64;
        let mut sum_sq = 0.0f64;
        let mut i = channel;
        while i < raw.len() {
            let v = raw[i];
            min = min.min(v);
            max = max.max(v);
            let x = v as f64;
            sum += x;
            sum_sq += x * x;
            count += 1;
            i += CHANNELS;
        }
        let (mean, variance) = if count > 0 {
            let mean = sum / count as f64;
            (mean, (sum_sq / count as f64 - mean * mean).max(0.0))
        } else {
            (0.0, 0.0)
        };
        out.push(if count > 0 { min } else { 0 });
        out.push(if count > 0 { max } else { 0 });
        out.extend_from_slice(&mean.to_bits().to_be_bytes());
        out.extend_from_slice(&variance.to_bits().to_be_bytes());
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_fixed_size() {
        let raw = vec![1u8, 2, 3, 4, 5, 6, 7];
        assert_eq!(analyze(&raw), analyze(&raw));
        assert_eq!(analyze(&raw).len(), CHANNELS * 18);
        assert_eq!(analyze(&[]).len(), CHANNELS * 18);
    }

    #[test]
    fn constant_series_has_zero_variance() {
        let raw = vec![42u8; 99];
        let blob = analyze(&raw);
        // channel 0: min and max both 42
        assert_eq!(blob[0], 42);
        assert_eq!(blob[1], 42);
        let mean = f64::from_bits(u64::from_be_bytes(blob[2..10].try_into().unwrap()));
        let var = f64::from_bits(u64::from_be_bytes(blob[10..18].try_into().unwrap()));
        assert_eq!(mean, 42.0);
        assert_eq!(var, 0.0);
    }
}
