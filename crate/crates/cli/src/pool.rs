/// Maps `f` over `items` on up to `threads` scoped workers. Results come back
/// in input order whatever the thread count.
pub fn par_map<T: Sync, R: Send>(threads: usize, items: &[T], f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    if threads <= 1 || items.len() < 2 {
        return items.iter().map(f).collect();
    }
    let chunk = items.len().div_ceil(threads.min(items.len()));
    let mut slots: Vec<Option<R>> = items.iter().map(|_| None).collect();
    let f = &f;
    std::thread::scope(|s| {
        for (out, inp) in slots.chunks_mut(chunk).zip(items.chunks(chunk)) {
            s.spawn(move || {
                for (o, i) in out.iter_mut().zip(inp) {
                    *o = Some(f(i));
                }
            });
        }
    });
    slots.into_iter().map(|o| o.expect("every slot filled")).collect()
}
