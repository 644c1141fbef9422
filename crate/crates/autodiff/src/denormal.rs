//! Scoped flush-to-zero for subnormal floats.

#[cfg(target_arch = "x86_64")]
mod imp {
    use std::arch::asm;

    const FTZ: u32 = 1 << 15;
    const DAZ: u32 = 1 << 6;

    pub fn read() -> u32 {
        let mut csr: u32 = 0;
        // SAFETY: stmxcsr stores the 32-bit MXCSR to a valid stack slot.
        unsafe { asm!("stmxcsr [{}]", in(reg) &mut csr, options(nostack, preserves_flags)) };
        csr
    }

    pub fn write(csr: u32) {
        // SAFETY: ldmxcsr loads control bits we obtained from stmxcsr with
        // only the FTZ/DAZ bits changed, both defined on every x86_64 CPU.
        unsafe { asm!("ldmxcsr [{}]", in(reg) &csr, options(nostack, readonly, preserves_flags)) };
    }

    pub fn enable(csr: u32) -> u32 {
        csr | FTZ | DAZ
    }
}

/// Runs `f` with subnormal inputs and results treated as zero on this
/// thread, restoring the previous floating-point control state afterwards.
pub fn flush_subnormals<T>(f: impl FnOnce() -> T) -> T {
    #[cfg(target_arch = "x86_64")]
    {
        struct Restore(u32);
        impl Drop for Restore {
            fn drop(&mut self) {
                imp::write(self.0);
            }
        }
        let saved = imp::read();
        imp::write(imp::enable(saved));
        let _restore = Restore(saved);
        f()
    }
    #[cfg(not(target_arch = "x86_64"))]
    {
        f()
    }
}
