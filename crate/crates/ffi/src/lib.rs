//! C ABI over `labelprob`.
//!
//! Models and taxonomies are opaque handles created and freed through this
//! interface. Every fallible call returns an [`LpStatus`]; on failure a
//! message is available from [`lp_last_error_message`] on the same thread.
//! Score outputs are written to caller-owned buffers in taxonomy order.
//! Prompts are token texts joined by U+001F, UTF-8 encoded.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use labelprob::estimators::{conditional_scores, joint_scores, marginal_scores, DecodeConfig};
use labelprob::model::{load_table_model, tokenize_prompt, CachedModel, RemoteModel, Token};
use labelprob::oracle::exact_marginal;
use labelprob::{Error, ExplorationStats, LanguageModel, MarginalConfig, MatchMode, ScoreMap, Taxonomy};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Parse = 3,
    Validation = 4,
    Config = 5,
    InvalidContext = 6,
    ProviderUnavailable = 7,
    MalformedDistribution = 8,
    BudgetExceeded = 9,
    StateExplosion = 10,
    BufferTooSmall = 11,
    Panic = 12,
    Other = 13,
}

impl From<&Error> for LpStatus {
    fn from(e: &Error) -> Self {
        match e {
            Error::Parse { .. } => LpStatus::Parse,
            Error::Validation { .. } => LpStatus::Validation,
            Error::Config(_) => LpStatus::Config,
            Error::InvalidContext(_) => LpStatus::InvalidContext,
            Error::ProviderUnavailable(_) => LpStatus::ProviderUnavailable,
            Error::MalformedDistribution(_) => LpStatus::MalformedDistribution,
            Error::BudgetExceeded { .. } => LpStatus::BudgetExceeded,
            Error::StateExplosion { .. } => LpStatus::StateExplosion,
            _ => LpStatus::Other,
        }
    }
}

/// A language model handle.
pub struct LpModel {
    inner: Box<dyn LanguageModel>,
}

/// A label taxonomy handle.
pub struct LpTaxonomy {
    inner: Taxonomy,
    codes: Vec<CString>,
}

/// Marginal search settings. `boundary_safe` selects boundary-safe label
/// matching instead of literal suffix matching.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct LpMarginalConfig {
    pub top_p: f64,
    pub prune_threshold: f64,
    pub max_new_tokens: usize,
    pub eos_break_prob: f64,
    pub third_token_eos_break: bool,
    pub boundary_safe: bool,
    pub node_budget: usize,
    pub parallel: bool,
}

impl From<MarginalConfig> for LpMarginalConfig {
    fn from(c: MarginalConfig) -> Self {
        Self {
            top_p: c.top_p,
            prune_threshold: c.prune_threshold,
            max_new_tokens: c.max_new_tokens,
            eos_break_prob: c.eos_break_prob,
            third_token_eos_break: c.third_token_eos_break,
            boundary_safe: c.match_mode == MatchMode::BoundarySafe,
            node_budget: c.node_budget,
            parallel: c.parallel,
        }
    }
}

impl From<LpMarginalConfig> for MarginalConfig {
    fn from(c: LpMarginalConfig) -> Self {
        Self {
            top_p: c.top_p,
            prune_threshold: c.prune_threshold,
            max_new_tokens: c.max_new_tokens,
            eos_break_prob: c.eos_break_prob,
            third_token_eos_break: c.third_token_eos_break,
            match_mode: if c.boundary_safe {
                MatchMode::BoundarySafe
            } else {
                MatchMode::LiteralSuffix
            },
            node_budget: c.node_budget,
            parallel: c.parallel,
        }
    }
}

/// Cost counters of one marginal computation.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct LpStats {
    pub nodes_expanded: u64,
    pub model_calls: u64,
    pub paths_terminated: u64,
    pub mass_pruned: f64,
}

impl From<ExplorationStats> for LpStats {
    fn from(s: ExplorationStats) -> Self {
        Self {
            nodes_expanded: s.nodes_expanded,
            model_calls: s.model_calls,
            paths_terminated: s.paths_terminated,
            mass_pruned: s.mass_pruned,
        }
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let message = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(message));
}

struct Failure(LpStatus);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = LpStatus::from(&e);
        set_last_error(e.to_string());
        Failure(status)
    }
}

fn fail(status: LpStatus, message: &str) -> Failure {
    set_last_error(message.to_owned());
    Failure(status)
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LpStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            LpStatus::Ok
        }
        Ok(Err(Failure(status))) => status,
        Err(_) => {
            set_last_error("internal panic".to_owned());
            LpStatus::Panic
        }
    }
}

unsafe fn borrow<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(LpStatus::NullPointer, &format!("{what} is null")))
}

unsafe fn read_str<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(fail(LpStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(LpStatus::InvalidUtf8, &format!("{what} is not UTF-8")))
}

unsafe fn write_scores(scores: &ScoreMap, out: *mut f64, out_len: usize) -> Result<(), Failure> {
    let values = scores.values();
    if out.is_null() {
        return Err(fail(LpStatus::NullPointer, "output buffer is null"));
    }
    if out_len < values.len() {
        return Err(fail(
            LpStatus::BufferTooSmall,
            &format!("output buffer holds {out_len}, need {}", values.len()),
        ));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), out, values.len());
    Ok(())
}

unsafe fn inputs<'a>(
    model: *const LpModel,
    prompt: *const c_char,
    taxonomy: *const LpTaxonomy,
) -> Result<(&'a LpModel, Vec<Token>, &'a LpTaxonomy), Failure> {
    let model = borrow(model, "model")?;
    let prompt = tokenize_prompt(read_str(prompt, "prompt")?)?;
    let taxonomy = borrow(taxonomy, "taxonomy")?;
    Ok((model, prompt, taxonomy))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn lp_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread, or null. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn lp_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |m| m.as_ptr()))
}

/// Loads a table model from its JSON document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_model_from_json(json: *const c_char, out: *mut *mut LpModel) -> LpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(LpStatus::NullPointer, "out is null"));
        }
        let model = load_table_model(read_str(json, "json")?)?;
        *out = Box::into_raw(Box::new(LpModel { inner: Box::new(model) }));
        Ok(())
    })
}

/// Connects to a distribution server at `base_url`. Responses are cached
/// per context for the lifetime of the handle.
///
/// # Safety
/// `base_url` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn lp_model_open_remote(base_url: *const c_char, out: *mut *mut LpModel) -> LpStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(LpStatus::NullPointer, "out is null"));
        }
        let remote = RemoteModel::new(read_str(base_url, "base_url")?);
        *out = Box::into_raw(Box::new(LpModel {
            inner: Box::new(CachedModel::new(remote)),
        }));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_model_free(model: *mut LpModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

fn taxonomy_handle(inner: Taxonomy) -> *mut LpTaxonomy {
    let codes = inner
        .codes()
        .iter()
        .map(|c| CString::new(*c).unwrap_or_default())
        .collect();
    Box::into_raw(Box::new(LpTaxonomy { inner, codes }))
}

/// Builds a taxonomy from `len` label codes.
///
/// # Safety
/// `codes` must point to `len` NUL-terminated strings and `out` be valid.
#[no_mangle]
pub unsafe extern "C" fn lp_taxonomy_new(
    codes: *const *const c_char,
    len: usize,
    out: *mut *mut LpTaxonomy,
) -> LpStatus {
    guard(|| {
        if out.is_null() || (codes.is_null() && len > 0) {
            return Err(fail(LpStatus::NullPointer, "null argument"));
        }
        let mut owned = Vec::with_capacity(len);
        for i in 0..len {
            owned.push(read_str(*codes.add(i), "label code")?);
        }
        *out = taxonomy_handle(Taxonomy::new(&owned)?);
        Ok(())
    })
}

/// The fourteen-category default taxonomy `S1` through `S14`.
#[no_mangle]
pub extern "C" fn lp_taxonomy_default() -> *mut LpTaxonomy {
    taxonomy_handle(Taxonomy::guard_default())
}

/// Number of labels, or 0 for a null handle.
///
/// # Safety
/// `taxonomy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_taxonomy_len(taxonomy: *const LpTaxonomy) -> usize {
    taxonomy.as_ref().map_or(0, |t| t.inner.len())
}

/// Code of label `index`, or null when out of range. Owned by the handle.
///
/// # Safety
/// `taxonomy` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn lp_taxonomy_code(taxonomy: *const LpTaxonomy, index: usize) -> *const c_char {
    taxonomy
        .as_ref()
        .and_then(|t| t.codes.get(index))
        .map_or(ptr::null(), |c| c.as_ptr())
}

/// # Safety
/// `taxonomy` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn lp_taxonomy_free(taxonomy: *mut LpTaxonomy) {
    if !taxonomy.is_null() {
        drop(Box::from_raw(taxonomy));
    }
}

#[no_mangle]
pub extern "C" fn lp_marginal_config_default() -> LpMarginalConfig {
    MarginalConfig::default().into()
}

/// Settings with every cut and early stop disabled.
#[no_mangle]
pub extern "C" fn lp_marginal_config_exhaustive(max_new_tokens: usize) -> LpMarginalConfig {
    MarginalConfig::exhaustive(max_new_tokens).into()
}

/// Marginal label probabilities by pruned search.
///
/// # Safety
/// Handles must be live, `prompt` NUL-terminated, `config` valid or null for
/// defaults, `out` writable for `out_len` doubles, `stats` null or writable.
#[no_mangle]
pub unsafe extern "C" fn lp_marginal(
    model: *const LpModel,
    prompt: *const c_char,
    taxonomy: *const LpTaxonomy,
    config: *const LpMarginalConfig,
    out: *mut f64,
    out_len: usize,
    stats: *mut LpStats,
) -> LpStatus {
    guard(|| {
        let (model, prompt, taxonomy) = inputs(model, prompt, taxonomy)?;
        let config = config.as_ref().map_or_else(MarginalConfig::default, |c| (*c).into());
        let (scores, s) = marginal_scores(model.inner.as_ref(), &prompt, &taxonomy.inner, &config)?;
        write_scores(&scores, out, out_len)?;
        if let Some(slot) = stats.as_mut() {
            *slot = s.into();
        }
        Ok(())
    })
}

unsafe fn greedy_entry(
    model: *const LpModel,
    prompt: *const c_char,
    taxonomy: *const LpTaxonomy,
    max_new_tokens: usize,
    out: *mut f64,
    out_len: usize,
    score: fn(&dyn LanguageModel, &[Token], &Taxonomy, &DecodeConfig) -> labelprob::Result<ScoreMap>,
) -> LpStatus {
    guard(|| {
        let (model, prompt, taxonomy) = inputs(model, prompt, taxonomy)?;
        let decode = DecodeConfig {
            max_new_tokens,
            ..DecodeConfig::default()
        };
        let scores = score(model.inner.as_ref(), &prompt, &taxonomy.inner, &decode)?;
        write_scores(&scores, out, out_len)
    })
}

/// Probability of each label's final token on the greedy path.
///
/// # Safety
/// As for [`lp_marginal`].
#[no_mangle]
pub unsafe extern "C" fn lp_conditional(
    model: *const LpModel,
    prompt: *const c_char,
    taxonomy: *const LpTaxonomy,
    max_new_tokens: usize,
    out: *mut f64,
    out_len: usize,
) -> LpStatus {
    greedy_entry(model, prompt, taxonomy, max_new_tokens, out, out_len, |m, p, t, d| {
        conditional_scores(m, p, t, d)
    })
}

/// Greedy-path probability up to and including each label.
///
/// # Safety
/// As for [`lp_marginal`].
#[no_mangle]
pub unsafe extern "C" fn lp_joint(
    model: *const LpModel,
    prompt: *const c_char,
    taxonomy: *const LpTaxonomy,
    max_new_tokens: usize,
    out: *mut f64,
    out_len: usize,
) -> LpStatus {
    greedy_entry(model, prompt, taxonomy, max_new_tokens, out, out_len, |m, p, t, d| {
        joint_scores(m, p, t, d)
    })
}

/// Exact marginals by full enumeration up to `horizon` tokens.
///
/// # Safety
/// As for [`lp_marginal`].
#[no_mangle]
pub unsafe extern "C" fn lp_exact_marginal(
    model: *const LpModel,
    prompt: *const c_char,
    taxonomy: *const LpTaxonomy,
    horizon: usize,
    out: *mut f64,
    out_len: usize,
) -> LpStatus {
    guard(|| {
        let (model, prompt, taxonomy) = inputs(model, prompt, taxonomy)?;
        let scores = exact_marginal(model.inner.as_ref(), &prompt, &taxonomy.inner, horizon)?;
        write_scores(&scores, out, out_len)
    })
}
