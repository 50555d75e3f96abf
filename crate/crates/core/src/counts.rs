//! Weighted class-conditional frequency tables.
//!
//! A [`CountStore`] of order `n` holds, for every size-`n` attribute subset
//! `s`, every value combination `x_s` and class `y`:
//!
//! - the *parent* count `c(y, x_s)`;
//! - the *child* counts `c(y, x_s, x_i)` for every attribute `i` outside `s`.
//!
//! These are the sufficient statistics of an AnDE model of order `n`. Weights
//! are real so that exponential decay can be applied; with no decay and unit
//! increments they stay exactly integral.
//!
//! Decay is lazy. Each cell remembers the step of its last write, and its
//! effective weight at step `now` is `weight * exp(-D * (now - last))`.
//! Exponential decay is multiplicative, so this gives the same value as
//! multiplying the whole table by `exp(-D)` once per step.
//!
//! Cells are addressed by a flat index computed from the subset rank, the
//! mixed-radix value combination, the class and the child attribute. Small key
//! spaces are backed by a dense vector; larger ones by a hash map holding only
//! the observed combinations.

use std::fmt;
use std::io::Write;
use std::ops::Range;

use rustc_hash::FxHashMap;

use crate::error::{Error, Result};
use crate::schema::{Instance, Schema, Step};

/// Effective weights may dip this far below zero from rounding before a
/// decrement is treated as a discipline violation.
pub const NEGATIVE_TOLERANCE: f64 = 1e-9;

const DECAY_TABLE_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Add,
    Remove,
}

impl Sign {
    fn value(self) -> f64 {
        match self {
            Sign::Add => 1.0,
            Sign::Remove => -1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StoreConfig {
    /// Per-step decay rate `D`; zero disables decay.
    pub decay_rate: f64,
    /// A subset value combination "exists" when its summed effective count
    /// across classes exceeds this threshold.
    pub delta_threshold: f64,
    /// Key spaces up to this many cells use dense storage.
    pub dense_limit: usize,
}

impl Default for StoreConfig {
    fn default() -> Self {
        Self {
            decay_rate: 0.0,
            delta_threshold: 0.0,
            dense_limit: 1 << 22,
        }
    }
}

/// Addresses one count: `c(y, x_s)` or, with a child, `c(y, x_s, x_i)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SubsetKey {
    pub attributes: Vec<usize>,
    pub values: Vec<usize>,
    pub class: usize,
    pub child: Option<(usize, usize)>,
}

impl SubsetKey {
    pub fn parent(attributes: Vec<usize>, values: Vec<usize>, class: usize) -> Self {
        Self {
            attributes,
            values,
            class,
            child: None,
        }
    }

    pub fn child(
        attributes: Vec<usize>,
        values: Vec<usize>,
        class: usize,
        attribute: usize,
        value: usize,
    ) -> Self {
        Self {
            attributes,
            values,
            class,
            child: Some((attribute, value)),
        }
    }
}

impl fmt::Display for SubsetKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(y={}", self.class)?;
        for (a, v) in self.attributes.iter().zip(&self.values) {
            write!(f, ", x{a}={v}")?;
        }
        if let Some((a, v)) = self.child {
            write!(f, " | x{a}={v}")?;
        }
        write!(f, ")")
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Cell {
    weight: f64,
    last: Step,
}

#[derive(Debug, Clone)]
struct SubsetLayout {
    attrs: [usize; 2],
    len: usize,
    parent_base: usize,
}

impl SubsetLayout {
    fn attrs(&self) -> &[usize] {
        &self.attrs[..self.len]
    }

    /// Attribute index ranges of the children, i.e. `0..a` minus the subset.
    #[inline]
    fn child_ranges(&self, a: usize) -> [Range<usize>; 3] {
        match self.len {
            0 => [0..a, a..a, a..a],
            1 => [0..self.attrs[0], self.attrs[0] + 1..a, a..a],
            _ => [
                0..self.attrs[0],
                self.attrs[0] + 1..self.attrs[1],
                self.attrs[1] + 1..a,
            ],
        }
    }
}

#[derive(Debug, Clone)]
struct Layout {
    arities: Vec<usize>,
    num_classes: usize,
    subsets: Vec<SubsetLayout>,
    /// Offset of each attribute's values inside a child block.
    attr_offset: Vec<usize>,
    arity_sum: usize,
    parent_cells: usize,
    total_cells: usize,
}

impl Layout {
    fn new(schema: &Schema, order: usize) -> Result<Self> {
        let a = schema.num_attributes();
        if order > 2 {
            return Err(Error::Config(format!(
                "order {order} not supported (0, 1 or 2)"
            )));
        }
        if order > a {
            return Err(Error::Config(format!(
                "order {order} exceeds attribute count {a}"
            )));
        }
        let arities = schema.arities().to_vec();
        let num_classes = schema.num_classes();
        let overflow = || Error::Config("count table key space overflows usize".into());

        let mut subsets = Vec::new();
        let mut base = 0usize;
        let mut push = |attrs: [usize; 2], len: usize| -> Result<()> {
            let combos = attrs[..len].iter().map(|&i| arities[i]).product::<usize>();
            subsets.push(SubsetLayout {
                attrs,
                len,
                parent_base: base,
            });
            base = combos
                .checked_mul(num_classes)
                .and_then(|c| base.checked_add(c))
                .ok_or_else(overflow)?;
            Ok(())
        };
        match order {
            0 => push([0, 0], 0)?,
            1 => {
                for i in 0..a {
                    push([i, 0], 1)?;
                }
            }
            _ => {
                for i in 0..a {
                    for j in i + 1..a {
                        push([i, j], 2)?;
                    }
                }
            }
        }
        let parent_cells = base;

        let mut attr_offset = Vec::with_capacity(a);
        let mut arity_sum = 0;
        for &ar in &arities {
            attr_offset.push(arity_sum);
            arity_sum += ar;
        }
        let total_cells = parent_cells
            .checked_mul(arity_sum + 1)
            .ok_or_else(overflow)?;

        Ok(Self {
            arities,
            num_classes,
            subsets,
            attr_offset,
            arity_sum,
            parent_cells,
            total_cells,
        })
    }

    fn order(&self) -> usize {
        self.subsets[0].len
    }

    #[inline]
    fn combo(&self, s: &SubsetLayout, values: &[usize]) -> usize {
        match s.len {
            0 => 0,
            1 => values[s.attrs[0]],
            _ => values[s.attrs[0]] * self.arities[s.attrs[1]] + values[s.attrs[1]],
        }
    }

    #[inline]
    fn parent_cell(&self, rank: usize, values: &[usize], class: usize) -> usize {
        let s = &self.subsets[rank];
        s.parent_base + self.combo(s, values) * self.num_classes + class
    }

    #[inline]
    fn child_cell(&self, parent: usize, attribute: usize, value: usize) -> usize {
        self.parent_cells + parent * self.arity_sum + self.attr_offset[attribute] + value
    }

    /// Position of each observed value inside a child block.
    fn value_offsets(&self, values: &[usize]) -> Vec<usize> {
        self.attr_offset
            .iter()
            .zip(values)
            .map(|(o, v)| o + v)
            .collect()
    }

    #[inline]
    fn child_base(&self, parent: usize) -> usize {
        self.parent_cells + parent * self.arity_sum
    }

    /// Visits every cell an instance touches: one parent and `a - n` children
    /// per subset.
    #[inline]
    fn for_each_touched(&self, values: &[usize], class: usize, mut f: impl FnMut(usize)) {
        let offsets = self.value_offsets(values);
        let a = values.len();
        for (rank, s) in self.subsets.iter().enumerate() {
            let parent = self.parent_cell(rank, values, class);
            f(parent);
            let base = self.child_base(parent);
            for range in s.child_ranges(a) {
                for &off in &offsets[range] {
                    f(base + off);
                }
            }
        }
    }

    fn rank_of(&self, attributes: &[usize]) -> usize {
        let a = self.arities.len();
        match attributes {
            [] => 0,
            [i] => *i,
            [i, j] => i * (2 * a - i - 1) / 2 + (j - i - 1),
            _ => unreachable!("validated key"),
        }
    }

    fn validate(&self, key: &SubsetKey) -> Result<()> {
        let a = self.arities.len();
        let bad = |msg: String| Err(Error::SchemaViolation(format!("key {key}: {msg}")));
        if key.attributes.len() != self.order() {
            return bad(format!(
                "subset size {} != store order {}",
                key.attributes.len(),
                self.order()
            ));
        }
        if key.values.len() != key.attributes.len() {
            return bad("attribute/value length mismatch".into());
        }
        if key.attributes.windows(2).any(|w| w[0] >= w[1]) {
            return bad("attribute indices must be strictly increasing".into());
        }
        for (&i, &v) in key.attributes.iter().zip(&key.values) {
            if i >= a || v >= self.arities[i] {
                return bad(format!("attribute {i} value {v} out of range"));
            }
        }
        if key.class >= self.num_classes {
            return bad("class out of range".into());
        }
        if let Some((i, v)) = key.child {
            if i >= a || v >= self.arities[i] {
                return bad(format!("child attribute {i} value {v} out of range"));
            }
            if key.attributes.contains(&i) {
                return bad("child attribute belongs to the subset".into());
            }
        }
        Ok(())
    }

    fn index_of(&self, key: &SubsetKey) -> usize {
        let rank = self.rank_of(&key.attributes);
        let s = &self.subsets[rank];
        let combo = key
            .values
            .iter()
            .zip(s.attrs())
            .fold(0, |acc, (&v, &i)| acc * self.arities[i] + v);
        let parent = s.parent_base + combo * self.num_classes + key.class;
        match key.child {
            None => parent,
            Some((i, v)) => self.child_cell(parent, i, v),
        }
    }

    fn decode(&self, index: usize) -> SubsetKey {
        let (parent, child) = if index < self.parent_cells {
            (index, None)
        } else {
            let rel = index - self.parent_cells;
            let off = rel % self.arity_sum;
            let attr = self.attr_offset.partition_point(|&o| o <= off) - 1;
            (
                rel / self.arity_sum,
                Some((attr, off - self.attr_offset[attr])),
            )
        };
        let rank = self.subsets.partition_point(|s| s.parent_base <= parent) - 1;
        let s = &self.subsets[rank];
        let rem = parent - s.parent_base;
        let class = rem % self.num_classes;
        let mut combo = rem / self.num_classes;
        let mut values = vec![0; s.len];
        for (slot, &i) in values.iter_mut().zip(s.attrs()).rev() {
            *slot = combo % self.arities[i];
            combo /= self.arities[i];
        }
        SubsetKey {
            attributes: s.attrs().to_vec(),
            values,
            class,
            child,
        }
    }
}

#[derive(Debug, Clone)]
enum Table {
    Dense(DenseCells),
    Sparse(FxHashMap<usize, Cell>),
}

impl Table {
    #[inline]
    fn get(&self, index: usize) -> Option<Cell> {
        match self {
            Table::Dense(cells) => Some(cells.get(index)),
            Table::Sparse(map) => map.get(&index).copied(),
        }
    }
}

/// Weights and timestamps in separate arrays, so that undecayed reads touch
/// only the weights.
#[derive(Debug, Clone)]
struct DenseCells {
    weights: Vec<f64>,
    lasts: Vec<Step>,
}

impl DenseCells {
    fn new(len: usize) -> Self {
        Self {
            weights: vec![0.0; len],
            lasts: vec![0; len],
        }
    }

    #[inline]
    fn get(&self, index: usize) -> Cell {
        Cell {
            weight: self.weights[index],
            last: self.lasts[index],
        }
    }

    #[inline]
    fn bump(
        &mut self,
        index: usize,
        decay: &DecayClock,
        delta: f64,
        now: Step,
    ) -> std::result::Result<(), f64> {
        let w = &mut self.weights[index];
        let last = &mut self.lasts[index];
        let mut updated = *w;
        if decay.rate != 0.0 {
            updated *= decay.factor(now.saturating_sub(*last));
        }
        updated += delta;
        if updated < -NEGATIVE_TOLERANCE {
            return Err(updated);
        }
        *w = updated.max(0.0);
        *last = now;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct DecayClock {
    rate: f64,
    powers: Vec<f64>,
}

impl DecayClock {
    fn new(rate: f64) -> Self {
        let powers = (0..DECAY_TABLE_LEN)
            .map(|k| (-rate * k as f64).exp())
            .collect();
        Self { rate, powers }
    }

    #[inline]
    fn factor(&self, elapsed: u64) -> f64 {
        match self.powers.get(elapsed as usize) {
            Some(&p) => p,
            None => (-self.rate * elapsed as f64).exp(),
        }
    }

    #[inline]
    fn effective(&self, cell: Cell, now: Step) -> f64 {
        cell.weight * self.factor(now.saturating_sub(cell.last))
    }
}

/// Weighted counts of one AnDE order.
#[derive(Debug, Clone)]
pub struct CountStore {
    schema: Schema,
    config: StoreConfig,
    layout: Layout,
    decay: DecayClock,
    table: Table,
    total: Cell,
    clock: Option<Step>,
}

impl CountStore {
    pub fn new(schema: &Schema, order: usize, config: StoreConfig) -> Result<Self> {
        if !(config.decay_rate >= 0.0 && config.decay_rate.is_finite()) {
            return Err(Error::Config(format!(
                "decay rate must be finite and non-negative, got {}",
                config.decay_rate
            )));
        }
        if config.delta_threshold.is_nan() || config.delta_threshold < 0.0 {
            return Err(Error::Config("delta threshold must be non-negative".into()));
        }
        let layout = Layout::new(schema, order)?;
        let table = if layout.total_cells <= config.dense_limit {
            Table::Dense(DenseCells::new(layout.total_cells))
        } else {
            Table::Sparse(FxHashMap::default())
        };
        Ok(Self {
            schema: schema.clone(),
            decay: DecayClock::new(config.decay_rate),
            config,
            layout,
            table,
            total: Cell::default(),
            clock: None,
        })
    }

    pub fn order(&self) -> usize {
        self.layout.order()
    }

    pub fn schema(&self) -> &Schema {
        &self.schema
    }

    pub fn config(&self) -> &StoreConfig {
        &self.config
    }

    pub fn decay_rate(&self) -> f64 {
        self.decay.rate
    }

    pub fn is_dense(&self) -> bool {
        matches!(self.table, Table::Dense(_))
    }

    /// Step of the most recent update, if any.
    pub fn clock(&self) -> Option<Step> {
        self.clock
    }

    /// Size of the full key space (parent plus child cells).
    pub fn key_space(&self) -> usize {
        self.layout.total_cells
    }

    /// Adds `x` at its own step.
    pub fn add(&mut self, x: &Instance) -> Result<()> {
        self.update(x, Sign::Add, x.step)
    }

    /// Removes a previously added `x`, synchronising decay to `now`.
    pub fn remove(&mut self, x: &Instance, now: Step) -> Result<()> {
        self.update(x, Sign::Remove, now)
    }

    /// Changes every count touched by `x` by one unit after decaying it to `now`.
    ///
    /// Removals are validated before anything is written, so a rejected
    /// decrement leaves the store untouched.
    pub fn update(&mut self, x: &Instance, sign: Sign, now: Step) -> Result<()> {
        self.schema.check(x)?;
        if let Some(last) = self.clock {
            if now < last {
                return Err(Error::TimeTravel {
                    requested: now,
                    last,
                });
            }
        }

        let delta = sign.value();
        if sign == Sign::Remove {
            let w = self.decay.effective(self.total, now) - 1.0;
            if w < -NEGATIVE_TOLERANCE {
                return Err(Error::WindowDiscipline {
                    key: "total".into(),
                    weight: w,
                });
            }
        }

        // Apply in one pass; a rejected decrement stops further writes and the
        // cells already changed are restored before reporting.
        let decay = &self.decay;
        let mut applied = 0usize;
        let mut violation = None;
        match &mut self.table {
            Table::Dense(cells) => self.layout.for_each_touched(&x.values, x.class, |idx| {
                if violation.is_none() {
                    match cells.bump(idx, decay, delta, now) {
                        Ok(()) => applied += 1,
                        Err(w) => violation = Some((idx, w)),
                    }
                }
            }),
            Table::Sparse(map) => self.layout.for_each_touched(&x.values, x.class, |idx| {
                if violation.is_none() {
                    let cell = map.entry(idx).or_insert(Cell {
                        weight: 0.0,
                        last: now,
                    });
                    match bump(cell, decay, delta, now) {
                        Ok(()) => applied += 1,
                        Err(w) => violation = Some((idx, w)),
                    }
                    if cell.weight == 0.0 {
                        map.remove(&idx);
                    }
                }
            }),
        }
        if let Some((idx, weight)) = violation {
            self.rollback(x, applied, -delta, now);
            return Err(Error::WindowDiscipline {
                key: self.layout.decode(idx).to_string(),
                weight,
            });
        }
        bump(&mut self.total, &self.decay, delta, now).expect("total pre-validated");
        self.clock = Some(now);
        Ok(())
    }

    /// Undoes the first `applied` cell changes of a partial update.
    fn rollback(&mut self, x: &Instance, applied: usize, delta: f64, now: Step) {
        let decay = &self.decay;
        let mut seen = 0usize;
        match &mut self.table {
            Table::Dense(cells) => self.layout.for_each_touched(&x.values, x.class, |idx| {
                if seen < applied {
                    let _ = cells.bump(idx, decay, delta, now);
                }
                seen += 1;
            }),
            Table::Sparse(map) => self.layout.for_each_touched(&x.values, x.class, |idx| {
                if seen < applied {
                    let cell = map.entry(idx).or_default();
                    let _ = bump(cell, decay, delta, now);
                    if cell.weight == 0.0 {
                        map.remove(&idx);
                    }
                }
                seen += 1;
            }),
        }
    }

    /// Effective weight of `key` at step `now`.
    pub fn effective_count(&self, key: &SubsetKey, now: Step) -> Result<f64> {
        self.layout.validate(key)?;
        match self.table.get(self.layout.index_of(key)) {
            Some(cell) => self.read(cell, now),
            None => Ok(0.0),
        }
    }

    /// Decayed sum of all updates, i.e. the effective number of instances.
    pub fn total_weight(&self, now: Step) -> Result<f64> {
        self.read(self.total, now)
    }

    fn read(&self, cell: Cell, now: Step) -> Result<f64> {
        if now < cell.last {
            return Err(Error::TimeTravel {
                requested: now,
                last: cell.last,
            });
        }
        Ok(self.decay.effective(cell, now))
    }

    /// Whether the subset value combination has been observed, i.e. its
    /// effective count summed over classes exceeds the delta threshold.
    pub fn exists(&self, attributes: &[usize], values: &[usize], now: Step) -> Result<bool> {
        let mut sum = 0.0;
        for class in 0..self.layout.num_classes {
            sum += self.effective_count(
                &SubsetKey::parent(attributes.to_vec(), values.to_vec(), class),
                now,
            )?;
        }
        Ok(sum > self.config.delta_threshold)
    }

    /// All keys with a non-zero stored weight and their effective weights at
    /// `now`, in flat-index order.
    pub fn effective_entries(&self, now: Step) -> Result<Vec<(SubsetKey, f64)>> {
        let mut out = Vec::new();
        for (idx, cell) in self.stored_cells() {
            out.push((self.layout.decode(idx), self.read(cell, now)?));
        }
        Ok(out)
    }

    fn stored_cells(&self) -> Vec<(usize, Cell)> {
        match &self.table {
            Table::Dense(cells) => (0..cells.weights.len())
                .filter(|&i| cells.weights[i] != 0.0)
                .map(|i| (i, cells.get(i)))
                .collect(),
            Table::Sparse(map) => {
                let mut v: Vec<_> = map
                    .iter()
                    .filter(|(_, c)| c.weight != 0.0)
                    .map(|(&i, &c)| (i, c))
                    .collect();
                v.sort_unstable_by_key(|&(i, _)| i);
                v
            }
        }
    }

    /// Writes stored weights as CSV:
    /// `class,subset_attrs,subset_vals,child_attr,child_val,weight,last_step`.
    ///
    /// Weights are raw (not decayed to any step); subset fields are
    /// `;`-separated.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "class",
            "subset_attrs",
            "subset_vals",
            "child_attr",
            "child_val",
            "weight",
            "last_step",
        ])?;
        let join = |xs: &[usize]| {
            xs.iter()
                .map(|x| x.to_string())
                .collect::<Vec<_>>()
                .join(";")
        };
        for (idx, cell) in self.stored_cells() {
            let key = self.layout.decode(idx);
            let (ca, cv) = match key.child {
                Some((a, v)) => (a.to_string(), v.to_string()),
                None => (String::new(), String::new()),
            };
            w.write_record([
                key.class.to_string(),
                join(&key.attributes),
                join(&key.values),
                ca,
                cv,
                cell.weight.to_string(),
                cell.last.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    // Index-level accessors for the estimator's inner loops. Callers guarantee
    // `now` is not earlier than the store clock.

    pub(crate) fn num_subsets(&self) -> usize {
        self.layout.subsets.len()
    }

    pub(crate) fn subset_attributes(&self, rank: usize) -> &[usize] {
        self.layout.subsets[rank].attrs()
    }

    #[inline]
    pub(crate) fn parent_cell(&self, rank: usize, values: &[usize], class: usize) -> usize {
        self.layout.parent_cell(rank, values, class)
    }

    pub(crate) fn value_offsets(&self, values: &[usize]) -> Vec<usize> {
        self.layout.value_offsets(values)
    }

    #[inline]
    pub(crate) fn child_base(&self, parent: usize) -> usize {
        self.layout.child_base(parent)
    }

    #[inline]
    pub(crate) fn child_ranges(&self, rank: usize) -> [Range<usize>; 3] {
        self.layout.subsets[rank].child_ranges(self.layout.arities.len())
    }

    /// Hands `visitor` a reader specialised to this store's representation.
    pub(crate) fn read_with<V: CellVisitor>(&self, now: Step, visitor: V) -> V::Output {
        match &self.table {
            Table::Dense(cells) if self.decay.rate == 0.0 => {
                visitor.visit(&Undecayed(&cells.weights))
            }
            Table::Dense(cells) => visitor.visit(&Decayed {
                cells,
                clock: &self.decay,
                now,
            }),
            Table::Sparse(map) => visitor.visit(&SparseCells {
                map,
                clock: &self.decay,
                now,
            }),
        }
    }

    #[inline]
    pub(crate) fn total_at(&self, now: Step) -> f64 {
        self.decay.effective(self.total, now)
    }
}

/// Decays `cell` to `now` and adds `delta`. A result below the negative
/// tolerance is rejected without writing; smaller negatives are rounding and
/// clamp to zero.
/// Effective weights by flat index at a fixed step.
pub(crate) trait Cells {
    fn weight(&self, index: usize) -> f64;
}

pub(crate) trait CellVisitor {
    type Output;
    fn visit<C: Cells>(self, cells: &C) -> Self::Output;
}

struct Undecayed<'a>(&'a [f64]);

impl Cells for Undecayed<'_> {
    #[inline(always)]
    fn weight(&self, index: usize) -> f64 {
        self.0[index]
    }
}

struct Decayed<'a> {
    cells: &'a DenseCells,
    clock: &'a DecayClock,
    now: Step,
}

impl Cells for Decayed<'_> {
    #[inline(always)]
    fn weight(&self, index: usize) -> f64 {
        self.clock.effective(self.cells.get(index), self.now)
    }
}

struct SparseCells<'a> {
    map: &'a FxHashMap<usize, Cell>,
    clock: &'a DecayClock,
    now: Step,
}

impl Cells for SparseCells<'_> {
    #[inline]
    fn weight(&self, index: usize) -> f64 {
        self.map
            .get(&index)
            .map_or(0.0, |&c| self.clock.effective(c, self.now))
    }
}

#[inline]
fn bump(
    cell: &mut Cell,
    decay: &DecayClock,
    delta: f64,
    now: Step,
) -> std::result::Result<(), f64> {
    let w = decay.effective(*cell, now) + delta;
    if w < -NEGATIVE_TOLERANCE {
        return Err(w);
    }
    cell.weight = w.max(0.0);
    cell.last = now;
    Ok(())
}
