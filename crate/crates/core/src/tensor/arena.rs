//! Tensor-payload allocation accounting.
//!
//! Every tensor buffer (values, gradients, optimizer moments) is a
//! [`Buffer`], which registers its byte size with a per-thread arena counter
//! on creation and releases it on drop. Kernel scratch space is not tracked.
//!
//! Peak tracking uses watermarks. A [`Watermark`] records the live byte
//! count when it is opened and the highest live count seen while it stays
//! open. Any number of watermarks may be open at once; only one may be an
//! exclusive measurement scope (see [`ScopeGuard`]).

use std::cell::{Cell, RefCell};
use std::ops::{Deref, DerefMut};

use crate::error::{Error, Result};

pub const ELEM_BYTES: u64 = std::mem::size_of::<f64>() as u64;

#[derive(Debug, Clone, Copy)]
struct Mark {
    base: u64,
    peak: u64,
}

thread_local! {
    static LIVE: Cell<u64> = const { Cell::new(0) };
    static PEAK: Cell<u64> = const { Cell::new(0) };
    static MARKS: RefCell<Vec<Option<Mark>>> = const { RefCell::new(Vec::new()) };
    static SCOPE_OPEN: Cell<bool> = const { Cell::new(false) };
}

fn on_alloc(bytes: u64) {
    if bytes == 0 {
        return;
    }
    let live = LIVE.with(|l| {
        let v = l.get() + bytes;
        l.set(v);
        v
    });
    PEAK.with(|p| p.set(p.get().max(live)));
    MARKS.with(|m| {
        for mark in m.borrow_mut().iter_mut().flatten() {
            mark.peak = mark.peak.max(live);
        }
    });
}

fn on_free(bytes: u64) {
    LIVE.with(|l| l.set(l.get().saturating_sub(bytes)));
}

/// Bytes of tensor payload currently alive on this thread.
pub fn live_bytes() -> u64 {
    LIVE.with(|l| l.get())
}

/// Thread-lifetime high-water mark.
pub fn peak_bytes() -> u64 {
    PEAK.with(|p| p.get())
}

/// Tracked `f64` storage.
#[derive(Debug, Default)]
pub struct Buffer {
    data: Vec<f64>,
}

impl Buffer {
    pub fn from_vec(data: Vec<f64>) -> Self {
        on_alloc(data.len() as u64 * ELEM_BYTES);
        Self { data }
    }

    pub fn zeros(len: usize) -> Self {
        Self::from_vec(vec![0.0; len])
    }

    pub fn filled(len: usize, value: f64) -> Self {
        Self::from_vec(vec![value; len])
    }

    pub fn bytes(&self) -> u64 {
        self.data.len() as u64 * ELEM_BYTES
    }

    pub fn into_vec(mut self) -> Vec<f64> {
        on_free(self.bytes());
        std::mem::take(&mut self.data)
    }
}

impl Clone for Buffer {
    fn clone(&self) -> Self {
        Self::from_vec(self.data.clone())
    }
}

impl Drop for Buffer {
    fn drop(&mut self) {
        on_free(self.bytes());
    }
}

impl Deref for Buffer {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.data
    }
}

impl DerefMut for Buffer {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl AsMut<[f64]> for Buffer {
    fn as_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }
}

impl PartialEq for Buffer {
    fn eq(&self, other: &Self) -> bool {
        self.data == other.data
    }
}

/// A non-exclusive high-water mark over live tensor bytes.
#[derive(Debug)]
pub struct Watermark {
    slot: usize,
}

impl Watermark {
    pub fn open() -> Self {
        let live = live_bytes();
        let mark = Mark {
            base: live,
            peak: live,
        };
        let slot = MARKS.with(|m| {
            let mut marks = m.borrow_mut();
            if let Some(i) = marks.iter().position(Option::is_none) {
                marks[i] = Some(mark);
                i
            } else {
                marks.push(Some(mark));
                marks.len() - 1
            }
        });
        Self { slot }
    }

    fn mark(&self) -> Mark {
        MARKS.with(|m| m.borrow()[self.slot].expect("watermark slot in use"))
    }

    /// Live bytes when the watermark was opened.
    pub fn base(&self) -> u64 {
        self.mark().base
    }

    /// Highest live byte count observed while open.
    pub fn peak(&self) -> u64 {
        self.mark().peak
    }

    /// Peak bytes allocated above the opening level.
    pub fn delta(&self) -> u64 {
        let m = self.mark();
        m.peak - m.base
    }
}

impl Drop for Watermark {
    fn drop(&mut self) {
        MARKS.with(|m| {
            let mut marks = m.borrow_mut();
            marks[self.slot] = None;
            while matches!(marks.last(), Some(None)) {
                marks.pop();
            }
        });
    }
}

/// Exclusive measurement scope: at most one per thread.
#[derive(Debug)]
pub struct ScopeGuard {
    mark: Watermark,
}

impl ScopeGuard {
    pub fn enter() -> Result<Self> {
        if SCOPE_OPEN.with(|s| s.replace(true)) {
            return Err(Error::NestedScope);
        }
        Ok(Self {
            mark: Watermark::open(),
        })
    }

    pub fn delta(&self) -> u64 {
        self.mark.delta()
    }

    pub fn watermark(&self) -> &Watermark {
        &self.mark
    }
}

impl Drop for ScopeGuard {
    fn drop(&mut self) {
        SCOPE_OPEN.with(|s| s.set(false));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alloc_and_free_balance() {
        let before = live_bytes();
        {
            let a = Buffer::zeros(100);
            assert_eq!(live_bytes(), before + 800);
            let b = a.clone();
            assert_eq!(live_bytes(), before + 1600);
            drop(b);
        }
        assert_eq!(live_bytes(), before);
    }

    #[test]
    fn watermark_sees_transient_peak() {
        let w = Watermark::open();
        {
            let _a = Buffer::zeros(10);
            let _b = Buffer::zeros(20);
        }
        let _c = Buffer::zeros(5);
        assert_eq!(w.delta(), 240);
    }

    #[test]
    fn nested_watermarks_are_independent() {
        let outer = Watermark::open();
        let _a = Buffer::zeros(10);
        let inner = Watermark::open();
        let _b = Buffer::zeros(10);
        assert_eq!(outer.delta(), 160);
        assert_eq!(inner.delta(), 80);
    }

    #[test]
    fn nested_scope_rejected() {
        let g = ScopeGuard::enter().unwrap();
        assert!(matches!(ScopeGuard::enter(), Err(Error::NestedScope)));
        drop(g);
        assert!(ScopeGuard::enter().is_ok());
    }
}
