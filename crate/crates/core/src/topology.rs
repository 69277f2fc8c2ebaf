//! Thread to NUMA node mapping.
//!
//! `OsQuery` asks the kernel which CPU the caller is running on at the
//! moment of the call and maps it through the sysfs node listing. Threads
//! are not pinned, so the answer can change between acquisitions.
//! `Synthetic` assigns `thread_index % nodes`, which makes NUMA-aware
//! behaviour reproducible on single-socket hosts.

use std::fs;
use std::path::Path;

use thiserror::Error;

/// Environment variable that forces synthetic mode with the given node count.
pub const SYNTHETIC_NODES_ENV: &str = "FISSILE_SYNTHETIC_NODES";

const SYSFS_NODES: &str = "/sys/devices/system/node";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TopologyError {
    #[error("synthetic topology needs at least one node")]
    ZeroNodes,
    #[error("malformed cpu list {0:?}")]
    BadCpuList(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologyMode {
    OsQuery,
    Synthetic,
}

#[derive(Debug, Clone)]
pub struct TopologyMap {
    mode: TopologyMode,
    node_count: u32,
    cpu_to_node: Vec<u32>,
    warnings: Vec<String>,
}

impl TopologyMap {
    pub fn synthetic(nodes: u32) -> Result<Self, TopologyError> {
        if nodes == 0 {
            return Err(TopologyError::ZeroNodes);
        }
        Ok(Self {
            mode: TopologyMode::Synthetic,
            node_count: nodes,
            cpu_to_node: Vec::new(),
            warnings: Vec::new(),
        })
    }

    /// Reads the host topology. Falls back to a single synthetic node (with
    /// a recorded warning) when the OS does not expose one.
    pub fn os_query() -> Self {
        match read_sysfs(Path::new(SYSFS_NODES)) {
            Ok((cpu_to_node, nodes)) if nodes > 0 && os_cpu_supported() => Self {
                mode: TopologyMode::OsQuery,
                node_count: nodes,
                cpu_to_node,
                warnings: Vec::new(),
            },
            other => {
                let why = match other {
                    Err(e) => e,
                    Ok(_) => "no NUMA nodes or no current-cpu query".to_owned(),
                };
                let warning = format!("NUMA topology unavailable ({why}); using 1 synthetic node");
                log::warn!("{warning}");
                Self {
                    mode: TopologyMode::Synthetic,
                    node_count: 1,
                    cpu_to_node: Vec::new(),
                    warnings: vec![warning],
                }
            }
        }
    }

    /// Honors [`SYNTHETIC_NODES_ENV`] when set, otherwise queries the OS.
    pub fn from_env() -> Result<Self, TopologyError> {
        match std::env::var(SYNTHETIC_NODES_ENV) {
            Ok(v) => {
                let n = v
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| TopologyError::ZeroNodes)?;
                Self::synthetic(n)
            }
            Err(_) => Ok(Self::os_query()),
        }
    }

    pub fn mode(&self) -> TopologyMode {
        self.mode
    }

    pub fn node_count(&self) -> u32 {
        self.node_count
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Node of the calling thread. Always in `[0, node_count)`.
    pub fn resolve(&self, thread_index: u32) -> u32 {
        match self.mode {
            TopologyMode::Synthetic => thread_index % self.node_count,
            TopologyMode::OsQuery => current_cpu()
                .and_then(|cpu| self.cpu_to_node.get(cpu).copied())
                .unwrap_or(0),
        }
    }
}

#[cfg(target_os = "linux")]
fn current_cpu() -> Option<usize> {
    // SAFETY: sched_getcpu has no preconditions.
    let cpu = unsafe { libc::sched_getcpu() };
    usize::try_from(cpu).ok()
}

#[cfg(not(target_os = "linux"))]
fn current_cpu() -> Option<usize> {
    None
}

fn os_cpu_supported() -> bool {
    current_cpu().is_some()
}

fn read_sysfs(root: &Path) -> Result<(Vec<u32>, u32), String> {
    let entries = fs::read_dir(root).map_err(|e| e.to_string())?;
    let mut cpu_to_node = Vec::new();
    let mut nodes = 0;
    for entry in entries.flatten() {
        let name = entry.file_name();
        let Some(id) = name
            .to_str()
            .and_then(|s| s.strip_prefix("node"))
            .and_then(|s| s.parse::<u32>().ok())
        else {
            continue;
        };
        let list = fs::read_to_string(entry.path().join("cpulist")).map_err(|e| e.to_string())?;
        for cpu in parse_cpulist(&list).map_err(|e| e.to_string())? {
            if cpu_to_node.len() <= cpu {
                cpu_to_node.resize(cpu + 1, 0);
            }
            cpu_to_node[cpu] = id;
        }
        nodes = nodes.max(id + 1);
    }
    Ok((cpu_to_node, nodes))
}

/// Parses the kernel's cpu list syntax, e.g. `0-3,8,10-11`.
pub fn parse_cpulist(s: &str) -> Result<Vec<usize>, TopologyError> {
    let bad = || TopologyError::BadCpuList(s.to_owned());
    let mut out = Vec::new();
    for part in s.trim().split(',').filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: usize = a.parse().map_err(|_| bad())?;
                let b: usize = b.parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                out.extend(a..=b);
            }
            None => out.push(part.parse().map_err(|_| bad())?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_is_modulus() {
        let t = TopologyMap::synthetic(2).unwrap();
        assert_eq!(t.resolve(5), 1);
        assert_eq!(t.resolve(4), 0);
        let one = TopologyMap::synthetic(1).unwrap();
        assert!((0..100).all(|i| one.resolve(i) == 0));
    }

    #[test]
    fn synthetic_rejects_zero_nodes() {
        assert_eq!(
            TopologyMap::synthetic(0).unwrap_err(),
            TopologyError::ZeroNodes
        );
    }

    #[test]
    fn cpulist_parsing() {
        assert_eq!(
            parse_cpulist("0-3,8,10-11\n").unwrap(),
            vec![0, 1, 2, 3, 8, 10, 11]
        );
        assert_eq!(parse_cpulist("").unwrap(), Vec::<usize>::new());
        assert!(parse_cpulist("3-1").is_err());
        assert!(parse_cpulist("x").is_err());
    }

    #[test]
    fn os_query_ids_within_listing() {
        let t = TopologyMap::os_query();
        let listed = fs::read_dir(SYSFS_NODES)
            .map(|d| {
                d.flatten()
                    .filter(|e| {
                        e.file_name()
                            .to_str()
                            .and_then(|s| s.strip_prefix("node"))
                            .is_some_and(|s| s.parse::<u32>().is_ok())
                    })
                    .count() as u32
            })
            .unwrap_or(0);
        if t.mode() == TopologyMode::OsQuery {
            assert_eq!(t.node_count(), listed);
        } else {
            assert_eq!(t.node_count(), 1);
            assert!(!t.warnings().is_empty());
        }
        for i in 0..16 {
            assert!(t.resolve(i) < t.node_count());
        }
    }
}
