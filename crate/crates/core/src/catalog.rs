//! VNF types, capacities and overload thresholds.

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

/// Where a VNF sits: one of the two fixed control-plane roles, or a
/// 1-based data-plane stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum VnfRole {
    Pcscf,
    Scscf,
    Stage(u8),
}

impl VnfRole {
    pub fn stage(self) -> Option<u8> {
        match self {
            VnfRole::Stage(s) => Some(s),
            _ => None,
        }
    }

    pub fn is_control_plane(self) -> bool {
        !matches!(self, VnfRole::Stage(_))
    }
}

impl fmt::Display for VnfRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            VnfRole::Pcscf => f.write_str("p-cscf"),
            VnfRole::Scscf => f.write_str("s-cscf"),
            VnfRole::Stage(s) => write!(f, "stage{s}"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub cpu_pct: f64,
    pub mem_pct: f64,
    pub input_pps: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VnfType {
    pub name: String,
    pub role: VnfRole,
    /// Units per second: transactions for control plane, packets for data plane.
    pub capacity: f64,
    pub thresholds: Thresholds,
    /// Boot delay of a freshly created instance, milliseconds.
    pub boot_delay_ms: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CatalogError {
    #[error("vnf `{0}`: capacity must be > 0")]
    Capacity(String),
    #[error("vnf `{0}`: percentage thresholds must lie in (0, 100]")]
    Threshold(String),
    #[error("duplicate role {0}")]
    DuplicateRole(VnfRole),
    #[error("data-plane stages must be numbered 1..=m without gaps")]
    StageGap,
    #[error("missing {0}")]
    Missing(VnfRole),
}

pub const DEFAULT_BOOT_DELAY_MS: u64 = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    types: Vec<VnfType>,
}

impl Catalog {
    pub fn new(types: Vec<VnfType>) -> Result<Self, CatalogError> {
        let mut stages = Vec::new();
        for (i, t) in types.iter().enumerate() {
            if !(t.capacity > 0.0) || !t.capacity.is_finite() {
                return Err(CatalogError::Capacity(t.name.clone()));
            }
            let pct_ok = |v: f64| v > 0.0 && v <= 100.0;
            if !pct_ok(t.thresholds.cpu_pct) || !pct_ok(t.thresholds.mem_pct) || !(t.thresholds.input_pps > 0.0) {
                return Err(CatalogError::Threshold(t.name.clone()));
            }
            if types[..i].iter().any(|o| o.role == t.role) {
                return Err(CatalogError::DuplicateRole(t.role));
            }
            if let VnfRole::Stage(s) = t.role {
                stages.push(s);
            }
        }
        stages.sort_unstable();
        if stages.iter().enumerate().any(|(i, &s)| s as usize != i + 1) {
            return Err(CatalogError::StageGap);
        }
        for r in [VnfRole::Pcscf, VnfRole::Scscf] {
            if !types.iter().any(|t| t.role == r) {
                return Err(CatalogError::Missing(r));
            }
        }
        if stages.is_empty() {
            return Err(CatalogError::Missing(VnfRole::Stage(1)));
        }
        Ok(Catalog { types })
    }

    /// Capacities and thresholds measured on the reference deployment:
    /// P-CSCF, S-CSCF, firewall, IDS, transcoder.
    ///
    /// The IDS input threshold is set to its capacity (20000 pkt/s); the
    /// published table lists 2000, which is inconsistent with every other row.
    pub fn reference() -> Self {
        let t = |name: &str, role, capacity, cpu, mem, pps| VnfType {
            name: name.into(),
            role,
            capacity,
            thresholds: Thresholds { cpu_pct: cpu, mem_pct: mem, input_pps: pps },
            boot_delay_ms: DEFAULT_BOOT_DELAY_MS,
        };
        Catalog::new(alloc::vec![
            t("p-cscf", VnfRole::Pcscf, 500.0, 70.0, 50.0, 1000.0),
            t("s-cscf", VnfRole::Scscf, 200.0, 70.0, 50.0, 400.0),
            t("firewall", VnfRole::Stage(1), 35000.0, 90.0, 50.0, 35000.0),
            t("ids", VnfRole::Stage(2), 20000.0, 90.0, 50.0, 20000.0),
            t("transcoder", VnfRole::Stage(3), 15000.0, 90.0, 50.0, 15000.0),
        ])
        .expect("reference catalog is valid")
    }

    pub fn get(&self, role: VnfRole) -> Option<&VnfType> {
        self.types.iter().find(|t| t.role == role)
    }

    /// Panicking lookup for roles known to exist after validation.
    pub fn vnf(&self, role: VnfRole) -> &VnfType {
        self.get(role).unwrap_or_else(|| panic!("catalog has no {role}"))
    }

    pub fn stage_count(&self) -> usize {
        self.types.iter().filter(|t| matches!(t.role, VnfRole::Stage(_))).count()
    }

    pub fn stage_capacity(&self, stage: u8) -> f64 {
        self.vnf(VnfRole::Stage(stage)).capacity
    }

    pub fn stages(&self) -> impl Iterator<Item = u8> {
        1..=self.stage_count() as u8
    }

    pub fn roles(&self) -> impl Iterator<Item = VnfRole> + '_ {
        self.types.iter().map(|t| t.role)
    }

    pub fn types(&self) -> &[VnfType] {
        &self.types
    }

    pub fn types_mut(&mut self) -> &mut [VnfType] {
        &mut self.types
    }
}
