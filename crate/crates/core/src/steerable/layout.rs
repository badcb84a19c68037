use serde::{Deserialize, Serialize};

use super::paths::enumerate_paths;
use crate::error::{Error, Result};
use crate::o3::{Irrep, IrrepsLayout, Parity};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayoutMode {
    /// Roughly equal dimension per degree.
    Balanced,
    /// `n` copies of every degree, sized by weight count.
    Copies,
}

fn parities(l: u32, include_odd: bool, mode: LayoutMode) -> Vec<Parity> {
    match (include_odd, mode) {
        (true, _) => vec![Parity::Even, Parity::Odd],
        (false, LayoutMode::Balanced) => vec![Parity::Even],
        (false, LayoutMode::Copies) => vec![Parity::of_harmonic(l)],
    }
}

/// Hidden layout of degrees `0..=lmax` sized by `target_dim`.
///
/// `Balanced` gives each degree `⌊target/(lmax+1)⌋` dimensions (remainder to
/// `l = 0`). `Copies` picks the number of copies `n` whose self-map weight
/// count, conditioned on harmonics up to `attr_lmax`, is closest to
/// `target²` without exceeding `2·target²`. With `include_odd` each degree
/// appears with both parities and the multiplicity is split between them.
pub fn balanced_layout(
    target_dim: usize,
    lmax: u32,
    include_odd: bool,
    mode: LayoutMode,
    attr_lmax: u32,
) -> Result<IrrepsLayout> {
    if target_dim < lmax as usize + 1 {
        return Err(Error::InfeasibleLayout(format!(
            "target {target_dim} cannot hold degrees 0..={lmax}"
        )));
    }
    match mode {
        LayoutMode::Balanced => {
            let per = target_dim / (lmax as usize + 1);
            let mut mults: Vec<usize> = (0..=lmax).map(|l| per / (2 * l as usize + 1)).collect();
            let used: usize = (1..=lmax).map(|l| mults[l as usize] * (2 * l as usize + 1)).sum();
            mults[0] = target_dim - used;
            let mut terms = Vec::new();
            for (l, &m) in mults.iter().enumerate() {
                let l = l as u32;
                if m == 0 {
                    return Err(Error::InfeasibleLayout(format!(
                        "target {target_dim} leaves no room for degree {l}"
                    )));
                }
                let ps = parities(l, include_odd, mode);
                let k = ps.len();
                for (i, p) in ps.into_iter().enumerate() {
                    let share = m / k + usize::from(i < m % k);
                    if share > 0 {
                        terms.push((share, Irrep::new(l, p)));
                    }
                }
            }
            IrrepsLayout::new(terms)
        }
        LayoutMode::Copies => {
            let unit = copies(1, lmax, include_odd);
            let attr = IrrepsLayout::spherical_harmonics(attr_lmax);
            let per_copy = enumerate_paths(&unit, &attr, &unit)?.weight_count;
            let target = (target_dim * target_dim) as f64;
            let best = (1..=target_dim)
                .map(|n| (n, (n * n * per_copy) as f64))
                .filter(|&(_, w)| w <= 2.0 * target)
                .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
                .map(|(n, _)| n)
                .ok_or_else(|| {
                    Error::InfeasibleLayout(format!(
                        "a single copy of degrees 0..={lmax} already needs {per_copy} weights > 2·{target_dim}²"
                    ))
                })?;
            Ok(copies(best, lmax, include_odd))
        }
    }
}

fn copies(n: usize, lmax: u32, include_odd: bool) -> IrrepsLayout {
    let terms = (0..=lmax)
        .flat_map(|l| parities(l, include_odd, LayoutMode::Copies).into_iter().map(move |p| (n, Irrep::new(l, p))))
        .collect();
    IrrepsLayout::new(terms).expect("n > 0")
}
