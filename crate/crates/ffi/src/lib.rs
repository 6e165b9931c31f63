//! C ABI over the `afgame` library.
//!
//! Games and AF solutions are opaque handles owned by the caller and freed
//! with their `_free` function. Every fallible call returns an
//! [`AfgStatus`]; on failure the message is available from
//! [`afg_last_error`] until the next failing call on the same thread.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use afgame::afcontrol::AFSolution;
use afgame::config::ExperimentConfig;
use afgame::experiments::{play_gains, scenario, Play};
use afgame::scenario::{Coefficients, Scenario, Variance};
use afgame::validate::{run_validate, ValidationOptions};
use afgame::GameError;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Numerical = 4,
    Io = 5,
    BufferTooSmall = 6,
    Panic = 7,
}

/// Which sensitivities and which model of player B enter a variance.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AfgKind {
    /// B's actual control with the true sensitivities.
    True = 0,
    /// A's model of B with the proxy sensitivities.
    Proxy = 1,
}

/// A configured game with its belief-averaged coefficients.
pub struct AfgGame {
    cfg: ExperimentConfig,
    sc: Scenario,
    coeffs: Coefficients,
}

/// Result of the alignment-faking optimization on one game.
pub struct AfgSolution {
    sol: AFSolution,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn status_of(e: &GameError) -> AfgStatus {
    match e.root() {
        GameError::NonFinite { .. }
        | GameError::SingularBlock { .. }
        | GameError::NoConvergence { .. }
        | GameError::RankDeficient { .. } => AfgStatus::Numerical,
        GameError::Config(_) => AfgStatus::Config,
        GameError::Io(_) => AfgStatus::Io,
        _ => AfgStatus::InvalidArgument,
    }
}

struct Fail(AfgStatus, String);

impl From<GameError> for Fail {
    fn from(e: GameError) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(AfgStatus::NullPointer, format!("`{what}` is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> AfgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => AfgStatus::Ok,
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            AfgStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Fail> {
    p.as_ref().ok_or_else(|| null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Fail> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn afg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failing call on this thread; empty if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn afg_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Builds a game from a JSON config; `config_json` may be null for the
/// defaults.
///
/// # Safety
/// `config_json` must be null or a valid NUL-terminated string; `out_game` must
/// be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn afg_game_new(config_json: *const c_char, out_game: *mut *mut AfgGame) -> AfgStatus {
    guard(|| {
        let slot = out(out_game, "out_game")?;
        *slot = ptr::null_mut();
        let text = if config_json.is_null() {
            ""
        } else {
            CStr::from_ptr(config_json)
                .to_str()
                .map_err(|_| Fail(AfgStatus::InvalidArgument, "config is not UTF-8".into()))?
        };
        let cfg = ExperimentConfig::from_json(text, None)?;
        let sc = scenario(&cfg)?;
        let coeffs = sc.view().coefficients()?;
        *slot = Box::into_raw(Box::new(AfgGame { cfg, sc, coeffs }));
        Ok(())
    })
}

/// # Safety
/// `game` must be null or a handle from [`afg_game_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn afg_game_free(game: *mut AfgGame) {
    if !game.is_null() {
        drop(Box::from_raw(game));
    }
}

/// Number of grid intervals.
///
/// # Safety
/// `game` must be a live handle and `steps` writable.
#[no_mangle]
pub unsafe extern "C" fn afg_game_steps(game: *const AfgGame, steps: *mut usize) -> AfgStatus {
    guard(|| {
        *out(steps, "steps")? = deref(game, "game")?.sc.grid.steps();
        Ok(())
    })
}

/// Full-information `theta_A`, `theta_B` at the grid nodes, each node as a
/// row-major 2x2 block. Both buffers need `4 * (steps + 1)` entries.
///
/// # Safety
/// `game` must be a live handle; `theta_a` and `theta_b` must point to `len`
/// writable doubles each.
#[no_mangle]
pub unsafe extern "C" fn afg_game_riccati(game: *const AfgGame, theta_a: *mut f64, theta_b: *mut f64, len: usize) -> AfgStatus {
    guard(|| {
        let g = deref(game, "game")?;
        if theta_a.is_null() || theta_b.is_null() {
            return Err(null("theta_a/theta_b"));
        }
        let n = g.sc.grid.steps() + 1;
        if len < 4 * n {
            return Err(Fail(AfgStatus::BufferTooSmall, format!("need {} entries, got {len}", 4 * n)));
        }
        let p = &g.sc.params;
        let sol = afgame::riccati::solve_riccati(p, p.m_a, p.m_b, &g.sc.grid)?;
        let a = std::slice::from_raw_parts_mut(theta_a, 4 * n);
        let b = std::slice::from_raw_parts_mut(theta_b, 4 * n);
        for k in 0..n {
            let (ta, tb) = (sol.theta_a.node(k), sol.theta_b.node(k));
            for (i, (r, c)) in [(0, 0), (0, 1), (1, 0), (1, 1)].into_iter().enumerate() {
                a[4 * k + i] = ta[(r, c)];
                b[4 * k + i] = tb[(r, c)];
            }
        }
        Ok(())
    })
}

fn variance(g: &AfgGame, sol: Option<&AFSolution>, kind: AfgKind) -> Result<Variance, Fail> {
    let view = g.sc.view();
    let true_b = kind == AfgKind::True;
    let play = if sol.is_some() { Play::Af } else { Play::Baseline };
    let gains = play_gains(&g.coeffs, sol, &view, play, true_b)?;
    let sens = if true_b { &g.coeffs.truth } else { &g.coeffs.proxy };
    Ok(Variance::of(&view.fisher(sens, &gains, g.cfg.moment_scheme)?)?)
}

/// Asymptotic variance of `m_B` under baseline play. `ridged` may be null.
///
/// # Safety
/// `game` must be a live handle; `value` writable; `ridged` null or writable.
#[no_mangle]
pub unsafe extern "C" fn afg_game_baseline_variance(
    game: *const AfgGame,
    kind: AfgKind,
    value: *mut f64,
    ridged: *mut bool,
) -> AfgStatus {
    guard(|| {
        let v = variance(deref(game, "game")?, None, kind)?;
        *out(value, "value")? = v.value;
        if let Some(r) = ridged.as_mut() {
            *r = v.ridged;
        }
        Ok(())
    })
}

/// Runs the alignment-faking optimization with the game's configuration.
///
/// # Safety
/// `game` must be a live handle and `out_solution` writable.
#[no_mangle]
pub unsafe extern "C" fn afg_optimize(game: *const AfgGame, out_solution: *mut *mut AfgSolution) -> AfgStatus {
    guard(|| {
        let slot = out(out_solution, "out_solution")?;
        *slot = ptr::null_mut();
        let g = deref(game, "game")?;
        let sol = g.sc.view().optimize(&g.coeffs, &g.cfg.af)?;
        *slot = Box::into_raw(Box::new(AfgSolution { sol }));
        Ok(())
    })
}

/// # Safety
/// `solution` must be null or a handle from [`afg_optimize`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn afg_solution_free(solution: *mut AfgSolution) {
    if !solution.is_null() {
        drop(Box::from_raw(solution));
    }
}

/// Final `z`, iteration count and convergence flag. Any output may be null.
///
/// # Safety
/// `solution` must be a live handle; `z` null or two writable doubles.
#[no_mangle]
pub unsafe extern "C" fn afg_solution_summary(
    solution: *const AfgSolution,
    z: *mut f64,
    iterations: *mut usize,
    converged: *mut bool,
    value: *mut f64,
) -> AfgStatus {
    guard(|| {
        let s = &deref(solution, "solution")?.sol;
        if !z.is_null() {
            *z = s.z_star[0];
            *z.add(1) = s.z_star[1];
        }
        if let Some(i) = iterations.as_mut() {
            *i = s.iterations();
        }
        if let Some(c) = converged.as_mut() {
            *c = s.converged;
        }
        if let Some(v) = value.as_mut() {
            *v = s.value.total;
        }
        Ok(())
    })
}

/// Asymptotic variance of `m_B` with A playing the AF control.
///
/// # Safety
/// `game` and `solution` must be live handles with `solution` obtained from
/// `game`; `value` writable; `ridged` null or writable.
#[no_mangle]
pub unsafe extern "C" fn afg_solution_variance(
    game: *const AfgGame,
    solution: *const AfgSolution,
    kind: AfgKind,
    value: *mut f64,
    ridged: *mut bool,
) -> AfgStatus {
    guard(|| {
        let g = deref(game, "game")?;
        let s = deref(solution, "solution")?;
        let v = variance(g, Some(&s.sol), kind)?;
        *out(value, "value")? = v.value;
        if let Some(r) = ridged.as_mut() {
            *r = v.ridged;
        }
        Ok(())
    })
}

/// Runs the validation suite at default sizes.
///
/// # Safety
/// `passed` must be writable; `failed_checks` null or writable.
#[no_mangle]
pub unsafe extern "C" fn afg_validate(seed: u64, passed: *mut bool, failed_checks: *mut usize) -> AfgStatus {
    guard(|| {
        let report = run_validate(&ValidationOptions {
            seed,
            ..ValidationOptions::default()
        })?;
        *out(passed, "passed")? = report.passed();
        if let Some(f) = failed_checks.as_mut() {
            *f = report.checks.iter().filter(|c| !c.passed).count();
        }
        Ok(())
    })
}
