//! C ABI over the fogtree core. Every call returns an [`FtStatus`]; on
//! failure [`ft_last_error`] describes what went wrong on this thread.
//! Objects cross the boundary as opaque pointers and must be released with
//! their matching `_free` function. Strings handed out by the library are
//! released with [`ft_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};

use fogtree::allocator::{solve_exact, solve_oracle, AllocError, AllocationInstance, SolutionDoc};
use fogtree::cli::{DShell, ShellError};
use fogtree::dsl::{parse_program, validate_program};
use fogtree::experiments::{run_experiment, ExperimentError};
use fogtree::topology::Topology;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FtStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Infeasible = 4,
    Runtime = 5,
    ResourceViolation = 6,
    Panic = 7,
}

pub struct FtInstance(AllocationInstance);

pub struct FtSolution(SolutionDoc);

pub struct FtShell(DShell);

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn fail(status: FtStatus, msg: impl ToString) -> FtStatus {
    let text = CString::new(msg.to_string().replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = text);
    status
}

fn guard(f: impl FnOnce() -> FtStatus) -> FtStatus {
    match std::panic::catch_unwind(std::panic::AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(FtStatus::Panic, "internal panic"),
    }
}

unsafe fn str_arg<'a>(p: *const c_char) -> Result<&'a str, FtStatus> {
    if p.is_null() {
        return Err(fail(FtStatus::NullArgument, "null string argument"));
    }
    CStr::from_ptr(p).to_str().map_err(|e| fail(FtStatus::InvalidUtf8, e))
}

fn give_string(s: String, out: *mut *mut c_char) -> FtStatus {
    match CString::new(s) {
        Ok(c) => {
            unsafe { *out = c.into_raw() };
            FtStatus::Ok
        }
        Err(e) => fail(FtStatus::Runtime, e),
    }
}

fn alloc_status(e: &AllocError) -> FtStatus {
    match e {
        AllocError::Infeasible { .. } => FtStatus::Infeasible,
        AllocError::Document(_) => FtStatus::Parse,
        _ => FtStatus::Runtime,
    }
}

fn shell_status(e: &ShellError) -> FtStatus {
    match e {
        ShellError::ResourceViolation(_) => FtStatus::ResourceViolation,
        ShellError::Parse(_) => FtStatus::Parse,
        _ => FtStatus::Runtime,
    }
}

/// Message for the most recent failure on the calling thread. The pointer is
/// valid until the next failing call on this thread.
#[no_mangle]
pub extern "C" fn ft_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ft_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads an allocation instance from JSON.
///
/// # Safety
/// `json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_instance_from_json(json: *const c_char, out: *mut *mut FtInstance) -> FtStatus {
    guard(|| {
        if out.is_null() {
            return fail(FtStatus::NullArgument, "null out pointer");
        }
        let text = match str_arg(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match AllocationInstance::from_json(text) {
            Ok(inst) => {
                *out = Box::into_raw(Box::new(FtInstance(inst)));
                FtStatus::Ok
            }
            Err(e) => fail(alloc_status(&e), e),
        }
    })
}

/// # Safety
/// `inst` must come from [`ft_instance_from_json`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ft_instance_free(inst: *mut FtInstance) {
    if !inst.is_null() {
        drop(Box::from_raw(inst));
    }
}

/// Solves an instance exactly; `oracle` selects the exhaustive solver.
///
/// # Safety
/// `inst` must be a live instance handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_solve(inst: *const FtInstance, oracle: bool, out: *mut *mut FtSolution) -> FtStatus {
    guard(|| {
        if inst.is_null() || out.is_null() {
            return fail(FtStatus::NullArgument, "null argument");
        }
        let inst = &(*inst).0;
        let solved = if oracle { solve_oracle(inst) } else { solve_exact(inst) };
        match solved {
            Ok((alloc, stats)) => {
                *out = Box::into_raw(Box::new(FtSolution(SolutionDoc::new(inst, &alloc, stats))));
                FtStatus::Ok
            }
            Err(e) => fail(alloc_status(&e), e),
        }
    })
}

/// # Safety
/// `sol` must be a live solution handle; `z` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_solution_z(sol: *const FtSolution, z: *mut f64) -> FtStatus {
    if sol.is_null() || z.is_null() {
        return fail(FtStatus::NullArgument, "null argument");
    }
    *z = (*sol).0.z;
    FtStatus::Ok
}

/// The solution as JSON; free the result with [`ft_string_free`].
///
/// # Safety
/// `sol` must be a live solution handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_solution_to_json(sol: *const FtSolution, out: *mut *mut c_char) -> FtStatus {
    if sol.is_null() || out.is_null() {
        return fail(FtStatus::NullArgument, "null argument");
    }
    give_string(serde_json::to_string(&(*sol).0).expect("solution serializes"), out)
}

/// # Safety
/// `sol` must come from [`ft_solve`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ft_solution_free(sol: *mut FtSolution) {
    if !sol.is_null() {
        drop(Box::from_raw(sol));
    }
}

/// Parses and validates DSL source. Returns `FT_STATUS_PARSE` on a syntax
/// error or when validation finds problems; `diagnostics` receives the count.
///
/// # Safety
/// `src` must be a NUL-terminated string; `diagnostics` may be null.
#[no_mangle]
pub unsafe extern "C" fn ft_dsl_check(src: *const c_char, diagnostics: *mut usize) -> FtStatus {
    guard(|| {
        let text = match str_arg(src) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let (count, first) = match parse_program(text) {
            Ok(p) => {
                let d = validate_program(&p);
                (d.len(), d.first().map(ToString::to_string))
            }
            Err(e) => (1, Some(e.to_string())),
        };
        if !diagnostics.is_null() {
            *diagnostics = count;
        }
        match first {
            Some(msg) => fail(FtStatus::Parse, msg),
            None => FtStatus::Ok,
        }
    })
}

/// Runs a named experiment and returns one JSON summary per result.
///
/// # Safety
/// `name` must be a NUL-terminated string, `config_json` NUL-terminated or
/// null; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_experiment_run(
    name: *const c_char,
    config_json: *const c_char,
    seed: u64,
    use_seed: bool,
    out: *mut *mut c_char,
) -> FtStatus {
    guard(|| {
        if out.is_null() {
            return fail(FtStatus::NullArgument, "null out pointer");
        }
        let name = match str_arg(name) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let config = if config_json.is_null() {
            None
        } else {
            match str_arg(config_json) {
                Ok(t) => Some(t),
                Err(s) => return s,
            }
        };
        match run_experiment(name, config, use_seed.then_some(seed)) {
            Ok(results) => give_string(serde_json::to_string(&results).expect("results serialize"), out),
            Err(e @ (ExperimentError::UnknownScenario(_) | ExperimentError::InvalidConfig(_))) => fail(FtStatus::Parse, e),
            Err(e) => fail(FtStatus::Runtime, e),
        }
    })
}

/// Opens a job shell holding every node of a JSON topology.
///
/// # Safety
/// `topology_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ft_shell_new(topology_json: *const c_char, out: *mut *mut FtShell) -> FtStatus {
    guard(|| {
        if out.is_null() {
            return fail(FtStatus::NullArgument, "null out pointer");
        }
        let text = match str_arg(topology_json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let topo = match Topology::from_json(text) {
            Ok(t) => t,
            Err(e) => return fail(FtStatus::Parse, e),
        };
        match DShell::new(topo) {
            Ok(sh) => {
                *out = Box::into_raw(Box::new(FtShell(sh)));
                FtStatus::Ok
            }
            Err(e) => fail(shell_status(&e), e),
        }
    })
}

/// Executes one shell command line; `out` receives its output, which is
/// empty after `quit`.
///
/// # Safety
/// `shell` must be a live shell handle, `line` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn ft_shell_exec(shell: *mut FtShell, line: *const c_char, out: *mut *mut c_char) -> FtStatus {
    guard(|| {
        if shell.is_null() || out.is_null() {
            return fail(FtStatus::NullArgument, "null argument");
        }
        let line = match str_arg(line) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match (*shell).0.exec_line(line) {
            Ok(text) => give_string(text.unwrap_or_default(), out),
            Err(e) => fail(shell_status(&e), e),
        }
    })
}

/// # Safety
/// `shell` must come from [`ft_shell_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn ft_shell_free(shell: *mut FtShell) {
    if !shell.is_null() {
        drop(Box::from_raw(shell));
    }
}
