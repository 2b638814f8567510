//! Core discovery and thread pinning.
//!
//! Workers get one physical core each: hyperthread siblings are dropped,
//! and by default only the package of the first allowed CPU is used.

use std::collections::BTreeSet;
use std::fs;
use std::mem;

use log::warn;

use crate::CalibrateError;

/// Comma-separated CPU ids that replace the discovered pinning map.
pub const PIN_ENV: &str = "MCSPERF_PIN_CORES";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CpuInfo {
    pub cpu: usize,
    pub core_id: Option<usize>,
    pub package: Option<usize>,
}

pub fn parse_core_list(s: &str) -> Result<Vec<usize>, CalibrateError> {
    let cores: Vec<usize> = s
        .split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| CalibrateError::Config(format!("{PIN_ENV}: bad core id {t:?}")))
        })
        .collect::<Result<_, _>>()?;
    if cores.is_empty() {
        return Err(CalibrateError::Config(format!("{PIN_ENV} is set but lists no cores")));
    }
    let unique: BTreeSet<_> = cores.iter().collect();
    if unique.len() != cores.len() {
        return Err(CalibrateError::Config(format!("{PIN_ENV} lists a core twice: {s}")));
    }
    Ok(cores)
}

/// CPUs this process may run on.
pub fn allowed_cpus() -> Vec<usize> {
    // SAFETY: cpu_set_t is plain data; sched_getaffinity fills it for pid 0.
    unsafe {
        let mut set: libc::cpu_set_t = mem::zeroed();
        if libc::sched_getaffinity(0, mem::size_of::<libc::cpu_set_t>(), &mut set) == 0 {
            let cpus: Vec<usize> =
                (0..libc::CPU_SETSIZE as usize).filter(|&c| libc::CPU_ISSET(c, &set)).collect();
            if !cpus.is_empty() {
                return cpus;
            }
        }
    }
    let n = std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1);
    (0..n).collect()
}

fn read_topology(cpu: usize, field: &str) -> Option<usize> {
    fs::read_to_string(format!("/sys/devices/system/cpu/cpu{cpu}/topology/{field}"))
        .ok()?
        .trim()
        .parse()
        .ok()
}

pub fn cpu_info(cpu: usize) -> CpuInfo {
    CpuInfo {
        cpu,
        core_id: read_topology(cpu, "core_id"),
        package: read_topology(cpu, "physical_package_id"),
    }
}

/// One CPU per physical core, restricted to one package unless
/// `allow_cross_socket` is set.
pub fn physical_core_plan(cpus: &[CpuInfo], allow_cross_socket: bool) -> Vec<usize> {
    let home = cpus.first().and_then(|c| c.package);
    let mut seen = BTreeSet::new();
    let mut plan = Vec::new();
    let mut packages = BTreeSet::new();
    for info in cpus {
        if !allow_cross_socket && info.package != home {
            continue;
        }
        let key = (info.package, info.core_id.unwrap_or(info.cpu));
        if seen.insert(key) {
            plan.push(info.cpu);
            packages.insert(info.package);
        }
    }
    if packages.len() > 1 {
        warn!("pinning spans {} sockets; same-socket cost constants will not hold", packages.len());
    }
    plan
}

/// CPUs to pin workers to, in assignment order.
pub fn pin_plan(allow_cross_socket: bool) -> Result<Vec<usize>, CalibrateError> {
    if let Ok(s) = std::env::var(PIN_ENV) {
        return parse_core_list(&s);
    }
    let infos: Vec<CpuInfo> = allowed_cpus().into_iter().map(cpu_info).collect();
    Ok(physical_core_plan(&infos, allow_cross_socket))
}

pub fn require_cores(plan: &[usize], needed: usize) -> Result<&[usize], CalibrateError> {
    if needed > plan.len() {
        return Err(CalibrateError::InsufficientCores { needed, available: plan.len() });
    }
    Ok(&plan[..needed])
}

/// Pins the calling thread. Failure is logged and the thread runs unpinned.
pub fn pin_current_thread(cpu: usize) -> bool {
    // SAFETY: the set is zero-initialised and only touched through libc macros.
    let rc = unsafe {
        let mut set: libc::cpu_set_t = mem::zeroed();
        libc::CPU_ZERO(&mut set);
        libc::CPU_SET(cpu, &mut set);
        libc::sched_setaffinity(0, mem::size_of::<libc::cpu_set_t>(), &set)
    };
    if rc != 0 {
        warn!("failed to pin to cpu {cpu}: {}", std::io::Error::last_os_error());
    }
    rc == 0
}
