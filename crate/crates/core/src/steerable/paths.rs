use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::o3::{triangle, IrrepsLayout};

/// Deliberate defects used to confirm that the verification harness can
/// detect them. Never enabled by configuration files.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Fault {
    /// Admit paths that violate the parity rule.
    IgnoreParity,
    /// Flip the sign of one coefficient in every multi-entry CG table.
    FlipCgSign,
    /// Scale weight gradients of tensor products by a wrong factor.
    CorruptAdjoint,
}

/// One admissible coupling of an input copy with an attribute copy into an
/// output copy. Slot indices refer to [`IrrepsLayout::slots`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Path {
    pub in_slot: usize,
    pub attr_slot: usize,
    pub out_slot: usize,
    pub l1: u32,
    pub l2: u32,
    pub l: u32,
    pub weight: usize,
}

impl Path {
    pub fn weight_range(&self) -> Range<usize> {
        self.weight..self.weight + 1
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TensorProductSpec {
    pub in_layout: IrrepsLayout,
    pub attr_layout: IrrepsLayout,
    pub out_layout: IrrepsLayout,
    pub paths: Vec<Path>,
    pub weight_count: usize,
    pub fault: Option<Fault>,
}

impl TensorProductSpec {
    /// Number of paths feeding each output slot.
    pub fn fan_in(&self) -> Vec<usize> {
        let mut fan = vec![0; self.out_layout.num_slots()];
        for p in &self.paths {
            fan[p.out_slot] += 1;
        }
        fan
    }
}

impl fmt::Display for TensorProductSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} x {} -> {} ({} paths)",
            self.in_layout,
            self.attr_layout,
            self.out_layout,
            self.paths.len()
        )
    }
}

pub fn enumerate_paths(
    in_layout: &IrrepsLayout,
    attr_layout: &IrrepsLayout,
    out_layout: &IrrepsLayout,
) -> Result<TensorProductSpec> {
    enumerate_paths_with(in_layout, attr_layout, out_layout, None)
}

/// Paths ordered by output slot, then input slot, then attribute slot. Every
/// output slot must be reachable.
pub fn enumerate_paths_with(
    in_layout: &IrrepsLayout,
    attr_layout: &IrrepsLayout,
    out_layout: &IrrepsLayout,
    fault: Option<Fault>,
) -> Result<TensorProductSpec> {
    enumerate(in_layout, attr_layout, out_layout, fault, false)
}

/// Like [`enumerate_paths_with`], but output slots no path reaches are
/// accepted and stay identically zero.
pub fn enumerate_paths_partial(
    in_layout: &IrrepsLayout,
    attr_layout: &IrrepsLayout,
    out_layout: &IrrepsLayout,
    fault: Option<Fault>,
) -> Result<TensorProductSpec> {
    enumerate(in_layout, attr_layout, out_layout, fault, true)
}

fn enumerate(
    in_layout: &IrrepsLayout,
    attr_layout: &IrrepsLayout,
    out_layout: &IrrepsLayout,
    fault: Option<Fault>,
    partial: bool,
) -> Result<TensorProductSpec> {
    let ignore_parity = fault == Some(Fault::IgnoreParity);
    let in_slots = in_layout.slots();
    let attr_slots = attr_layout.slots();
    let mut paths = Vec::new();
    let mut unreachable = Vec::new();
    for (o, os) in out_layout.slots().iter().enumerate() {
        let before = paths.len();
        for (i, is) in in_slots.iter().enumerate() {
            for (a, as_) in attr_slots.iter().enumerate() {
                let admissible = if ignore_parity {
                    triangle(is.irrep.l, as_.irrep.l, os.irrep.l)
                } else {
                    is.irrep.couples_to(as_.irrep, os.irrep)
                };
                if admissible {
                    paths.push(Path {
                        in_slot: i,
                        attr_slot: a,
                        out_slot: o,
                        l1: is.irrep.l,
                        l2: as_.irrep.l,
                        l: os.irrep.l,
                        weight: paths.len(),
                    });
                }
            }
        }
        if paths.len() == before {
            unreachable.push(format!("{o}:{}", os.irrep));
        }
    }
    if !partial && !unreachable.is_empty() {
        return Err(Error::UnreachableOutputs(format!(
            "{in_layout} x {attr_layout} -> {out_layout}: no path reaches slots [{}]",
            unreachable.join(", ")
        )));
    }
    let weight_count = paths.len();
    Ok(TensorProductSpec {
        in_layout: in_layout.clone(),
        attr_layout: attr_layout.clone(),
        out_layout: out_layout.clone(),
        paths,
        weight_count,
        fault,
    })
}
