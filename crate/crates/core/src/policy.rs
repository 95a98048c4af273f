//! Mixed routing policies, their uniform grid, and publicness structures.

use std::collections::HashMap;
use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::FlowProfile;
use crate::util::fmt_num;

const SIMPLEX_TOL: f64 = 1e-12;

/// Default cap on the number of grid policies.
pub const DEFAULT_GRID_CAP: u128 = 1_000_000;

/// A probability vector over routes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Policy(pub Vec<f64>);

impl Policy {
    pub fn new(y: Vec<f64>) -> Result<Self> {
        if y.is_empty() {
            return Err(Error::validation("policy is empty"));
        }
        if y.iter().any(|&v| !(v >= 0.0)) {
            return Err(Error::validation("policy has a negative entry"));
        }
        let total: f64 = y.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::validation(format!("policy sums to {}", fmt_num(total))));
        }
        Ok(Self(y))
    }

    /// The vertex of the simplex that puts all mass on `route`.
    pub fn pure(num_routes: usize, route: usize) -> Self {
        let mut y = vec![0.0; num_routes];
        y[route] = 1.0;
        Self(y)
    }
}

impl Deref for Policy {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Every policy whose entries are integer multiples of `1/m`, in descending
/// lexicographic order of the count vectors, so `(m, 0, …, 0)` comes first.
#[derive(Clone, Debug)]
pub struct PolicyGrid {
    num_routes: usize,
    resolution: u32,
    counts: Vec<Vec<u32>>,
    values: Vec<Vec<f64>>,
    index: HashMap<Vec<u32>, usize>,
}

/// Number of points in the grid: `C(m + |R| - 1, |R| - 1)`.
pub fn grid_size(num_routes: usize, m: u32) -> Option<u128> {
    let k = num_routes.checked_sub(1)? as u128;
    let n = m as u128 + k;
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc.checked_mul(n - i)? / (i + 1);
    }
    Some(acc)
}

pub fn enumerate_policy_grid(num_routes: usize, m: u32) -> Result<PolicyGrid> {
    enumerate_policy_grid_capped(num_routes, m, DEFAULT_GRID_CAP)
}

pub fn enumerate_policy_grid_capped(num_routes: usize, m: u32, cap: u128) -> Result<PolicyGrid> {
    if num_routes == 0 {
        return Err(Error::validation("grid needs at least one route"));
    }
    if m == 0 {
        return Err(Error::validation("grid resolution must be at least 1"));
    }
    let size = grid_size(num_routes, m).unwrap_or(u128::MAX);
    if size > cap {
        return Err(Error::CapExceeded {
            what: "policy grid",
            needed: size,
            cap,
        });
    }

    let mut counts = Vec::with_capacity(size as usize);
    let mut current = vec![0u32; num_routes];
    fill(&mut current, 0, m, &mut counts);

    let values = counts
        .iter()
        .map(|c| c.iter().map(|&v| v as f64 / m as f64).collect())
        .collect();
    let index = counts.iter().cloned().enumerate().map(|(i, c)| (c, i)).collect();
    Ok(PolicyGrid {
        num_routes,
        resolution: m,
        counts,
        values,
        index,
    })
}

fn fill(current: &mut [u32], pos: usize, remaining: u32, out: &mut Vec<Vec<u32>>) {
    if pos + 1 == current.len() {
        current[pos] = remaining;
        out.push(current.to_vec());
        return;
    }
    for c in (0..=remaining).rev() {
        current[pos] = c;
        fill(current, pos + 1, remaining - c, out);
    }
}

impl PolicyGrid {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn num_routes(&self) -> usize {
        self.num_routes
    }

    pub fn resolution(&self) -> u32 {
        self.resolution
    }

    pub fn policy(&self, i: usize) -> &[f64] {
        &self.values[i]
    }

    pub fn counts(&self, i: usize) -> &[u32] {
        &self.counts[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> {
        self.values.iter().map(Vec::as_slice)
    }

    pub fn index_of_counts(&self, counts: &[u32]) -> Option<usize> {
        self.index.get(counts).copied()
    }

    /// Grid index of the pure policy on `route`.
    pub fn pure_index(&self, route: usize) -> usize {
        let mut c = vec![0u32; self.num_routes];
        c[route] = self.resolution;
        self.index[&c]
    }

    /// Index of the grid policy exactly equal to `y` up to `1e-12`, if any.
    pub fn find(&self, y: &[f64]) -> Option<usize> {
        if y.len() != self.num_routes {
            return None;
        }
        let m = self.resolution as f64;
        let mut c = Vec::with_capacity(y.len());
        for &v in y {
            let scaled = v * m;
            let r = scaled.round();
            if (scaled - r).abs() > 1e-12 * m.max(1.0) || r < 0.0 {
                return None;
            }
            c.push(r as u32);
        }
        self.index_of_counts(&c)
    }

    /// Nearest grid policy by largest-remainder rounding of `m·y`.
    pub fn round(&self, y: &[f64]) -> usize {
        let m = self.resolution;
        let scaled: Vec<f64> = y.iter().map(|v| v * m as f64).collect();
        let mut c: Vec<u32> = scaled.iter().map(|v| v.floor().max(0.0) as u32).collect();
        let assigned: u32 = c.iter().sum();
        let mut order: Vec<usize> = (0..y.len()).collect();
        order.sort_by(|&a, &b| {
            let ra = scaled[a] - scaled[a].floor();
            let rb = scaled[b] - scaled[b].floor();
            rb.total_cmp(&ra).then(a.cmp(&b))
        });
        for &r in order.iter().take(m.saturating_sub(assigned) as usize) {
            c[r] += 1;
        }
        self.index[&c]
    }
}

/// Fractions of the population in each group.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PartitionProfile(pub Vec<f64>);

impl PartitionProfile {
    pub fn new(x: Vec<f64>) -> Result<Self> {
        if x.is_empty() {
            return Err(Error::validation("partition profile is empty"));
        }
        if x.iter().any(|&v| !(v > 0.0)) {
            return Err(Error::validation("partition factors must be positive"));
        }
        let total: f64 = x.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::validation(format!(
                "partition factors sum to {}",
                fmt_num(total)
            )));
        }
        Ok(Self(x))
    }

    /// Every group the same size.
    pub fn equal(k: usize) -> Self {
        Self(vec![1.0 / k as f64; k])
    }

    pub fn num_groups(&self) -> usize {
        self.0.len()
    }
}

impl Deref for PartitionProfile {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Finite population with per-traveler weights and group membership.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AtomicPublicness {
    pub n: usize,
    pub weights: Vec<f64>,
    pub group_of: Vec<usize>,
}

impl AtomicPublicness {
    pub fn new(weights: Vec<f64>, group_of: Vec<usize>, num_groups: usize) -> Result<Self> {
        let out = Self {
            n: weights.len(),
            weights,
            group_of,
        };
        out.validate(num_groups)?;
        Ok(out)
    }

    /// `n` travelers of weight `demand / n`, groups in contiguous blocks of the
    /// given sizes.
    pub fn equal_weights(group_sizes: &[usize], demand: f64) -> Result<Self> {
        let n: usize = group_sizes.iter().sum();
        let w = demand / n as f64;
        let group_of = group_sizes
            .iter()
            .enumerate()
            .flat_map(|(k, &size)| std::iter::repeat_n(k, size))
            .collect();
        Self::new(vec![w; n], group_of, group_sizes.len())
    }

    pub fn validate(&self, num_groups: usize) -> Result<()> {
        let mut problems = Vec::new();
        if self.n == 0 {
            problems.push("atomic population is empty".to_string());
        }
        if self.weights.len() != self.n || self.group_of.len() != self.n {
            problems.push(format!(
                "atomic population of {} has {} weights and {} group labels",
                self.n,
                self.weights.len(),
                self.group_of.len()
            ));
        }
        if self.weights.iter().any(|&w| !(w > 0.0) || !w.is_finite()) {
            problems.push("traveler weights must be positive".to_string());
        }
        if let Some(&g) = self.group_of.iter().find(|&&g| g >= num_groups) {
            problems.push(format!("traveler assigned to group {g}, only {num_groups} groups"));
        }
        for k in 0..num_groups {
            if !self.group_of.contains(&k) {
                problems.push(format!("group {k} has no travelers"));
            }
        }
        if problems.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(problems))
        }
    }

    pub fn demand(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn members(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        self.group_of
            .iter()
            .enumerate()
            .filter(move |(_, &g)| g == k)
            .map(|(i, _)| i)
    }

    /// Total weight of each group.
    pub fn group_weights(&self, num_groups: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_groups];
        for (w, &g) in self.weights.iter().zip(&self.group_of) {
            out[g] += w;
        }
        out
    }

    /// `x^k = |N^k| / n`.
    pub fn derived_partition(&self, num_groups: usize) -> PartitionProfile {
        let mut counts = vec![0usize; num_groups];
        for &g in &self.group_of {
            counts[g] += 1;
        }
        PartitionProfile(counts.iter().map(|&c| c as f64 / self.n as f64).collect())
    }
}

/// `f_r = Σ_k y^k_r x^k D`.
pub fn flow_from_recommendation(
    y_profile: &[&[f64]],
    x: &PartitionProfile,
    demand: f64,
) -> Result<FlowProfile> {
    if y_profile.len() != x.num_groups() {
        return Err(Error::Dimension(format!(
            "{} recommendations for {} groups",
            y_profile.len(),
            x.num_groups()
        )));
    }
    let routes = y_profile.first().map_or(0, |y| y.len());
    if y_profile.iter().any(|y| y.len() != routes) {
        return Err(Error::Dimension("recommendations differ in length".into()));
    }
    let mut f = vec![0.0; routes];
    for (y, &xk) in y_profile.iter().zip(x.iter()) {
        for (fr, &yr) in f.iter_mut().zip(y.iter()) {
            *fr += yr * xk * demand;
        }
    }
    Ok(FlowProfile(f))
}

/// Flow when every traveler splits its weight according to its group's
/// recommendation, except an optional deviant who uses its own policy.
pub fn atomic_flow(
    y_profile: &[&[f64]],
    publicness: &AtomicPublicness,
    deviant: Option<(usize, &[f64])>,
) -> Result<FlowProfile> {
    let routes = y_profile.first().map_or(0, |y| y.len());
    if y_profile.iter().any(|y| y.len() != routes) {
        return Err(Error::Dimension("recommendations differ in length".into()));
    }
    if let Some(&g) = publicness.group_of.iter().find(|&&g| g >= y_profile.len()) {
        return Err(Error::Dimension(format!(
            "traveler in group {g} but only {} recommendations",
            y_profile.len()
        )));
    }
    if let Some((i, y_hat)) = deviant {
        if i >= publicness.n {
            return Err(Error::UnknownTraveler(i));
        }
        if y_hat.len() != routes {
            return Err(Error::Dimension("deviation policy has wrong length".into()));
        }
    }
    let mut f = vec![0.0; routes];
    for (i, (&w, &g)) in publicness.weights.iter().zip(&publicness.group_of).enumerate() {
        let y = match deviant {
            Some((d, y_hat)) if d == i => y_hat,
            _ => y_profile[g],
        };
        for (fr, &yr) in f.iter_mut().zip(y) {
            *fr += yr * w;
        }
    }
    Ok(FlowProfile(f))
}
