//! Finite Cayley trees truncated at a given depth.
//!
//! Sites are numbered breadth-first from the center, so shell `a` occupies a
//! contiguous index range and the children of any site are contiguous too.

use std::io::{self, Write};

use crate::{Error, Result};

pub const DEFAULT_SITE_CAP: usize = 10_000_000;

const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Debug)]
pub struct TruncatedTree {
    xi: u32,
    depth: u32,
    parent: Vec<u32>,
    shell_of: Vec<u32>,
    shell_start: Vec<usize>,
    first_child: Vec<usize>,
    offsets: Vec<usize>,
    neighbors: Vec<u32>,
}

/// Number of sites at distance `a` from a site of the infinite tree.
pub fn shell_size(xi: u32, a: u32) -> Result<u64> {
    if xi < 2 {
        return Err(Error::Coordination(xi));
    }
    if a == 0 {
        return Ok(1);
    }
    u64::from(xi - 1)
        .checked_pow(a - 1)
        .and_then(|p| p.checked_mul(u64::from(xi)))
        .ok_or(Error::ShellOverflow { xi, a })
}

/// [`shell_size`] as a float, finite for any shell a double can count.
pub fn shell_size_f64(xi: u32, a: u32) -> f64 {
    if a == 0 {
        1.0
    } else {
        xi as f64 * (xi as f64 - 1.0).powi(a as i32 - 1)
    }
}

/// Total number of sites of a tree truncated at `depth`.
pub fn site_count(xi: u32, depth: u32) -> Result<u128> {
    if xi < 2 {
        return Err(Error::Coordination(xi));
    }
    let mut total: u128 = 1;
    let mut shell: u128 = 1;
    for a in 1..=depth {
        shell = shell
            .checked_mul(if a == 1 { xi } else { xi - 1 } as u128)
            .ok_or(Error::ShellOverflow { xi, a })?;
        total = total
            .checked_add(shell)
            .ok_or(Error::ShellOverflow { xi, a })?;
    }
    Ok(total)
}

/// Builds the tree with the default cap of ten million sites.
pub fn build_tree(xi: u32, depth: u32) -> Result<TruncatedTree> {
    TruncatedTree::with_cap(xi, depth, DEFAULT_SITE_CAP)
}

impl TruncatedTree {
    pub fn with_cap(xi: u32, depth: u32, cap: usize) -> Result<TruncatedTree> {
        let total = site_count(xi, depth)?;
        if total > cap as u128 || total > u32::MAX as u128 {
            return Err(Error::TreeTooLarge {
                xi,
                depth,
                sites: total,
                cap,
            });
        }
        let n = total as usize;
        let mut parent = Vec::with_capacity(n);
        let mut shell_of = Vec::with_capacity(n);
        let mut first_child = vec![n; n];
        let mut shell_start = vec![0usize; depth as usize + 2];
        parent.push(NO_PARENT);
        shell_of.push(0);
        shell_start[1] = 1;
        for a in 0..depth {
            let (lo, hi) = (shell_start[a as usize], shell_start[a as usize + 1]);
            let per = if a == 0 { xi } else { xi - 1 };
            for p in lo..hi {
                first_child[p] = parent.len();
                for _ in 0..per {
                    parent.push(p as u32);
                    shell_of.push(a + 1);
                }
            }
            shell_start[a as usize + 2] = parent.len();
        }
        debug_assert_eq!(parent.len(), n);

        let mut offsets = Vec::with_capacity(n + 1);
        let mut neighbors = Vec::with_capacity(2 * n.saturating_sub(1));
        offsets.push(0);
        for i in 0..n {
            if parent[i] != NO_PARENT {
                neighbors.push(parent[i]);
            }
            if shell_of[i] < depth {
                let per = if i == 0 { xi } else { xi - 1 } as usize;
                neighbors.extend((first_child[i]..first_child[i] + per).map(|c| c as u32));
            }
            offsets.push(neighbors.len());
        }
        Ok(TruncatedTree {
            xi,
            depth,
            parent,
            shell_of,
            shell_start,
            first_child,
            offsets,
            neighbors,
        })
    }

    pub fn xi(&self) -> u32 {
        self.xi
    }

    pub fn depth(&self) -> u32 {
        self.depth
    }

    pub fn sites(&self) -> usize {
        self.parent.len()
    }

    pub fn shell_of(&self, site: usize) -> u32 {
        self.shell_of[site]
    }

    pub fn shells(&self) -> &[u32] {
        &self.shell_of
    }

    /// Index range of shell `a`.
    pub fn shell_range(&self, a: u32) -> std::ops::Range<usize> {
        let a = a as usize;
        self.shell_start[a]..self.shell_start[a + 1]
    }

    pub fn parent(&self, site: usize) -> Option<usize> {
        match self.parent[site] {
            NO_PARENT => None,
            p => Some(p as usize),
        }
    }

    pub fn neighbors(&self, site: usize) -> &[u32] {
        &self.neighbors[self.offsets[site]..self.offsets[site + 1]]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.offsets[site + 1] - self.offsets[site]
    }

    pub fn children(&self, site: usize) -> std::ops::Range<usize> {
        if self.shell_of[site] >= self.depth {
            return 0..0;
        }
        let per = if site == 0 { self.xi } else { self.xi - 1 } as usize;
        self.first_child[site]..self.first_child[site] + per
    }

    /// Links as `(parent, child)`; link `c - 1` ends at child `c`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (1..self.sites()).map(|c| (self.parent[c] as usize, c))
    }

    pub fn edge_count(&self) -> usize {
        self.sites() - 1
    }

    fn check(&self, site: usize) -> Result<()> {
        if site >= self.sites() {
            return Err(Error::SiteOutOfRange {
                site,
                sites: self.sites(),
            });
        }
        Ok(())
    }

    /// Graph distance between two sites, found by climbing to the common
    /// ancestor.
    pub fn distance(&self, i: usize, j: usize) -> Result<u32> {
        self.check(i)?;
        self.check(j)?;
        let (mut i, mut j) = (i, j);
        let mut d = 0;
        while self.shell_of[i] > self.shell_of[j] {
            i = self.parent[i] as usize;
            d += 1;
        }
        while self.shell_of[j] > self.shell_of[i] {
            j = self.parent[j] as usize;
            d += 1;
        }
        while i != j {
            i = self.parent[i] as usize;
            j = self.parent[j] as usize;
            d += 2;
        }
        Ok(d)
    }

    /// Writes the links as `site_a,site_b` lines.
    pub fn write_edge_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        writeln!(w, "site_a,site_b")?;
        for (a, b) in self.edges() {
            writeln!(w, "{a},{b}")?;
        }
        Ok(())
    }
}
