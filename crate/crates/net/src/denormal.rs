//! Scoped flush-to-zero. Once the classifier is confident, cross-entropy
//! gradients underflow into subnormal floats, which x86 handles in microcode
//! at several times the normal cost. Flushing them changes no value above
//! the smallest normal number and stays deterministic.

pub(crate) struct FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    saved: u32,
}

impl FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    #[allow(deprecated)]
    pub(crate) fn new() -> Self {
        use std::arch::x86_64::{_mm_getcsr, _mm_setcsr};
        // FTZ (bit 15) and DAZ (bit 6).
        const FLAGS: u32 = 0x8040;
        // SAFETY: SSE is part of the x86_64 baseline; only rounding-mode
        // style control bits are changed, and they are restored on drop.
        let saved = unsafe { _mm_getcsr() };
        unsafe { _mm_setcsr(saved | FLAGS) };
        FlushDenormals { saved }
    }

    #[cfg(not(target_arch = "x86_64"))]
    pub(crate) fn new() -> Self {
        FlushDenormals {}
    }
}

impl Drop for FlushDenormals {
    #[cfg(target_arch = "x86_64")]
    #[allow(deprecated)]
    fn drop(&mut self) {
        // SAFETY: restores the control word read in `new`.
        unsafe { std::arch::x86_64::_mm_setcsr(self.saved) };
    }

    #[cfg(not(target_arch = "x86_64"))]
    fn drop(&mut self) {}
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn subnormals_flush_inside_the_scope_only() {
        let tiny = std::hint::black_box(f32::MIN_POSITIVE);
        let half = |x: f32| std::hint::black_box(x) * std::hint::black_box(0.5f32);
        assert!(half(tiny) > 0.0);
        {
            let _guard = FlushDenormals::new();
            if cfg!(target_arch = "x86_64") {
                assert_eq!(half(tiny), 0.0);
            }
        }
        assert!(half(tiny) > 0.0);
    }
}
