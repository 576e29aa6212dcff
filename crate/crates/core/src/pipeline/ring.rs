use crate::events::SimilFrame;

/// Fixed-capacity buffer holding the most recent frames.
#[derive(Debug, Clone)]
pub struct FrameRing {
    slots: Vec<Option<SimilFrame>>,
    cursor: usize,
    len: usize,
}

impl FrameRing {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity > 0, "ring capacity must be positive");
        Self {
            slots: vec![None; capacity],
            cursor: 0,
            len: 0,
        }
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.slots.len()
    }

    /// Stores `frame`, returning the evicted oldest frame when full.
    pub fn push(&mut self, frame: SimilFrame) -> Option<SimilFrame> {
        let old = self.slots[self.cursor].replace(frame);
        self.cursor = (self.cursor + 1) % self.slots.len();
        self.len = (self.len + 1).min(self.slots.len());
        old
    }

    /// Oldest to newest.
    pub fn iter(&self) -> impl Iterator<Item = &SimilFrame> + '_ {
        let cap = self.slots.len();
        let first = (self.cursor + cap - self.len) % cap;
        (0..self.len).map(move |i| {
            self.slots[(first + i) % cap]
                .as_ref()
                .expect("occupied slot")
        })
    }

    pub fn newest(&self) -> Option<&SimilFrame> {
        self.iter().last()
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
        self.cursor = 0;
        self.len = 0;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn frame(k: u64) -> SimilFrame {
        SimilFrame::empty(2, 2, k * 10, 10)
    }

    #[test]
    fn fills_then_slides() {
        let mut r = FrameRing::new(3);
        assert!(r.is_empty());
        assert!(r.push(frame(0)).is_none());
        r.push(frame(1));
        assert!(!r.is_full());
        r.push(frame(2));
        assert!(r.is_full());
        assert_eq!(r.push(frame(3)).unwrap().t_start, 0);
        let starts: Vec<u64> = r.iter().map(|f| f.t_start).collect();
        assert_eq!(starts, [10, 20, 30]);
        assert_eq!(r.newest().unwrap().t_start, 30);
        r.clear();
        assert_eq!(r.iter().count(), 0);
    }

    proptest! {
        #[test]
        fn matches_list_model(cap in 1usize..12, k in 0usize..60) {
            let mut r = FrameRing::new(cap);
            let mut model: Vec<u64> = Vec::new();
            for i in 0..k as u64 {
                r.push(frame(i));
                model.push(i * 10);
                if model.len() > cap {
                    model.remove(0);
                }
            }
            let got: Vec<u64> = r.iter().map(|f| f.t_start).collect();
            prop_assert_eq!(got, model);
            prop_assert_eq!(r.capacity(), cap);
        }
    }
}
