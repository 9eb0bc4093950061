//! Node-wise maps, optionally spread over scoped threads.

use alloc::vec::Vec;

/// `(0..len).map(f)`, in index order whatever the thread count.
pub(crate) fn map_indices<T, G>(len: usize, threads: usize, f: G) -> Vec<T>
where
    T: Send,
    G: Fn(usize) -> T + Sync,
{
    #[cfg(feature = "std")]
    if threads > 1 && len > 1 {
        let chunk = len.div_ceil(threads.min(len));
        let f = &f;
        return std::thread::scope(|scope| {
            let handles: Vec<_> = (0..len)
                .step_by(chunk)
                .map(|start| {
                    let end = (start + chunk).min(len);
                    scope.spawn(move || (start..end).map(f).collect::<Vec<T>>())
                })
                .collect();
            handles
                .into_iter()
                .flat_map(|h| h.join().expect("worker thread panicked"))
                .collect()
        });
    }
    #[cfg(not(feature = "std"))]
    let _ = threads;
    (0..len).map(f).collect()
}
