use std::collections::{BTreeMap, BTreeSet, VecDeque};

use thiserror::Error;

use super::case::OpfCase;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PartitionError {
    #[error("bus {0} unassigned")]
    Unassigned(u32),
    #[error("bus {bus} assigned to both region {first} and region {second}")]
    DuplicateAssignment { bus: u32, first: usize, second: usize },
    #[error("bus {0} does not exist in the case")]
    UnknownBus(u32),
    #[error("region {0} is empty")]
    EmptyRegion(usize),
    #[error("region {region} is disconnected: bus {bus} is unreachable inside it")]
    DisconnectedRegion { region: usize, bus: u32 },
    #[error("partition has no regions")]
    NoRegions,
}

/// Assignment of every bus to one of `K` regions, indexed `0..K`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    region_of: BTreeMap<u32, usize>,
    regions: Vec<Vec<u32>>,
}

impl Partition {
    /// Regions are given as lists of bus ids; region `r` receives index `r`.
    pub fn new(case: &OpfCase, regions: Vec<Vec<u32>>) -> Result<Self, PartitionError> {
        if regions.is_empty() {
            return Err(PartitionError::NoRegions);
        }
        let index = case.bus_index();
        let mut region_of = BTreeMap::new();
        for (r, members) in regions.iter().enumerate() {
            if members.is_empty() {
                return Err(PartitionError::EmptyRegion(r));
            }
            for &bus in members {
                if !index.contains_key(&bus) {
                    return Err(PartitionError::UnknownBus(bus));
                }
                if let Some(first) = region_of.insert(bus, r) {
                    return Err(PartitionError::DuplicateAssignment {
                        bus,
                        first,
                        second: r,
                    });
                }
            }
        }
        if let Some(bus) = case.buses.iter().find(|b| !region_of.contains_key(&b.id)) {
            return Err(PartitionError::Unassigned(bus.id));
        }
        let partition = Self { region_of, regions };
        partition.check_connected(case)?;
        Ok(partition)
    }

    /// Every bus in one region.
    pub fn single_region(case: &OpfCase) -> Self {
        let members: Vec<u32> = case.buses.iter().map(|b| b.id).collect();
        Self {
            region_of: members.iter().map(|&b| (b, 0)).collect(),
            regions: vec![members],
        }
    }

    fn check_connected(&self, case: &OpfCase) -> Result<(), PartitionError> {
        for (r, members) in self.regions.iter().enumerate() {
            let set: BTreeSet<u32> = members.iter().copied().collect();
            let mut adj: BTreeMap<u32, Vec<u32>> = BTreeMap::new();
            for br in &case.branches {
                if set.contains(&br.from) && set.contains(&br.to) {
                    adj.entry(br.from).or_default().push(br.to);
                    adj.entry(br.to).or_default().push(br.from);
                }
            }
            let mut seen = BTreeSet::from([members[0]]);
            let mut queue = VecDeque::from([members[0]]);
            while let Some(b) = queue.pop_front() {
                for &n in adj.get(&b).map(Vec::as_slice).unwrap_or(&[]) {
                    if seen.insert(n) {
                        queue.push_back(n);
                    }
                }
            }
            if let Some(&bus) = members.iter().find(|b| !seen.contains(b)) {
                return Err(PartitionError::DisconnectedRegion { region: r, bus });
            }
        }
        Ok(())
    }

    pub fn num_regions(&self) -> usize {
        self.regions.len()
    }

    pub fn region_of(&self, bus: u32) -> Option<usize> {
        self.region_of.get(&bus).copied()
    }

    pub fn members(&self, region: usize) -> &[u32] {
        &self.regions[region]
    }

    pub fn regions(&self) -> &[Vec<u32>] {
        &self.regions
    }

    /// Positions of branches whose endpoints lie in different regions.
    pub fn tie_lines(&self, case: &OpfCase) -> Vec<usize> {
        case.branches
            .iter()
            .enumerate()
            .filter(|(_, br)| self.region_of(br.from) != self.region_of(br.to))
            .map(|(n, _)| n)
            .collect()
    }
}
