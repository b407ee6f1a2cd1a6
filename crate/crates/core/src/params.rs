use crate::tape::{Tape, Var};

/// A named, shaped window into a [`ParamStore`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Slot {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl Slot {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Flat parameter array with contiguous, disjoint slots appended in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore {
    data: Vec<f64>,
    slots: Vec<Slot>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Appends a zero-filled `rows x cols` slot and returns its index.
    pub fn add_slot(&mut self, name: impl Into<String>, rows: usize, cols: usize) -> usize {
        let offset = self.data.len();
        self.data.resize(offset + rows * cols, 0.0);
        self.slots.push(Slot {
            name: name.into(),
            offset,
            rows,
            cols,
        });
        self.slots.len() - 1
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn slot(&self, index: usize) -> &Slot {
        &self.slots[index]
    }

    pub fn find(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    pub fn get(&self, index: usize) -> &[f64] {
        &self.data[self.slots[index].range()]
    }

    pub fn get_mut(&mut self, index: usize) -> &mut [f64] {
        let r = self.slots[index].range();
        &mut self.data[r]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// Records every parameter as a leaf on `tape`, in storage order.
    pub fn to_vars<'t>(&self, tape: &'t Tape) -> Vec<Var<'t>> {
        self.data.iter().map(|&v| tape.var(v)).collect()
    }
}
