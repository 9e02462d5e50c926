use std::collections::HashSet;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use super::backend::{Backend, ChatMessage, HttpBackend, JudgeRequest, MockBackend, Task};
use super::prompt::{build_prompt, Template, SYSTEM_PROMPT};
use super::{parse_assessment, AssessError, AssessmentStore, JudgeConfig, RiskAssessment, StoreEntry};
use crate::corpus::ClinicalCase;

/// A configured judge bound to its backend, with an upstream call counter.
pub struct Judge {
    pub config: JudgeConfig,
    backend: Arc<dyn Backend>,
    calls: AtomicUsize,
}

impl std::fmt::Debug for Judge {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Judge")
            .field("config", &self.config)
            .field("calls", &self.upstream_calls())
            .finish()
    }
}

impl Judge {
    pub fn from_config(config: JudgeConfig) -> Result<Self, AssessError> {
        config.validate()?;
        let backend: Arc<dyn Backend> = if config.is_mock() {
            Arc::new(MockBackend::new(config.mock.clone().unwrap_or_default()))
        } else {
            Arc::new(HttpBackend::from_config(&config)?)
        };
        Ok(Self::with_backend(config, backend))
    }

    pub fn with_backend(config: JudgeConfig, backend: Arc<dyn Backend>) -> Self {
        Self {
            config,
            backend,
            calls: AtomicUsize::new(0),
        }
    }

    pub fn id(&self) -> &str {
        &self.config.judge_id
    }

    pub fn upstream_calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub(crate) fn request_text(&self, request: &JudgeRequest<'_>) -> Result<String, String> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.backend.complete(request).map_err(|e| e.to_string())
    }

    /// Runs `attempt` up to `1 + max_retries` times with exponential backoff on
    /// remote backends. Returns the last failure reason when all attempts fail.
    pub(crate) fn with_retries<T>(&self, mut attempt: impl FnMut() -> Result<T, String>) -> Result<T, String> {
        let attempts = self.config.max_retries + 1;
        let mut last = String::new();
        for i in 0..attempts {
            match attempt() {
                Ok(v) => return Ok(v),
                Err(e) => last = e,
            }
            if i + 1 < attempts && self.backend.is_remote() && self.config.backoff_ms > 0 {
                let delay = self.config.backoff_ms.saturating_mul(1 << i.min(16));
                std::thread::sleep(Duration::from_millis(delay));
            }
        }
        Err(format!("{attempts} attempts failed; last error: {last}"))
    }

    fn assess_messages(case: &ClinicalCase) -> Vec<ChatMessage> {
        let prompt = build_prompt(case, Template::ChainOfThought.id()).expect("built-in template");
        vec![ChatMessage::system(SYSTEM_PROMPT), ChatMessage::user(prompt)]
    }

    /// One validated assessment under `identity`, retrying on transport or
    /// parse failures.
    pub(crate) fn assess_as(&self, case: &ClinicalCase, identity: &str, run: u32) -> Result<RiskAssessment, String> {
        let request = JudgeRequest {
            judge: &self.config,
            identity,
            run,
            messages: Self::assess_messages(case),
            task: Task::Assess { case },
        };
        self.with_retries(|| {
            let raw = self.request_text(&request)?;
            let mut a = parse_assessment(&raw, self.id(), &case.case_id).map_err(|e| e.to_string())?;
            a.judge_id = self.id().to_string();
            Ok(a)
        })
    }

    /// Uncached assessment for reliability runs.
    pub fn assess(&self, case: &ClinicalCase, run: u32) -> StoreEntry {
        match self.assess_as(case, &self.config.judge_id, run) {
            Ok(a) => StoreEntry::Ok(a),
            Err(reason) => StoreEntry::Missing { reason },
        }
    }
}

/// Assesses one case, answering from `cache` when the pair is already stored.
pub fn assess_case(judge: &Judge, case: &ClinicalCase, cache: Option<&AssessmentStore>) -> StoreEntry {
    if let Some(hit) = cache.and_then(|s| s.get(&case.case_id, judge.id())) {
        return hit.clone();
    }
    judge.assess(case, 0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssessOptions {
    pub max_in_flight: usize,
}

impl Default for AssessOptions {
    fn default() -> Self {
        Self { max_in_flight: 8 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AssessStats {
    pub pairs: usize,
    pub cached: usize,
    pub new_ok: usize,
    pub new_missing: usize,
    pub upstream_calls: usize,
}

/// Fills `store` with an entry for every `(case, judge)` pair not already
/// present. At most `max_in_flight` requests are outstanding at once. New
/// entries are inserted in key order after all workers finish, so the final
/// store does not depend on completion order.
pub fn assess_corpus(
    judges: &[Judge],
    cases: &[ClinicalCase],
    options: AssessOptions,
    store: &mut AssessmentStore,
) -> Result<AssessStats, AssessError> {
    if options.max_in_flight == 0 {
        return Err(AssessError::Precondition("max_in_flight must be at least 1".into()));
    }
    let mut ids = HashSet::new();
    for j in judges {
        if !ids.insert(j.id()) {
            return Err(AssessError::Precondition(format!("duplicate judge id {}", j.id())));
        }
    }
    let calls_before: usize = judges.iter().map(Judge::upstream_calls).sum();
    let mut pending = Vec::new();
    let mut stats = AssessStats::default();
    for case in cases {
        for judge in judges {
            stats.pairs += 1;
            if store.contains(&case.case_id, judge.id()) {
                stats.cached += 1;
            } else {
                pending.push((case, judge));
            }
        }
    }

    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<(usize, StoreEntry)>> = Mutex::new(Vec::with_capacity(pending.len()));
    let workers = options.max_in_flight.min(pending.len());
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((case, judge)) = pending.get(i) else { break };
                let entry = judge.assess(case, 0);
                results.lock().expect("result lock").push((i, entry));
            });
        }
    });
    let mut results = results.into_inner().expect("result lock");
    results.sort_by_key(|(i, _)| *i);
    for (i, entry) in results {
        let (case, judge) = pending[i];
        match entry {
            StoreEntry::Ok(_) => stats.new_ok += 1,
            StoreEntry::Missing { .. } => stats.new_missing += 1,
        }
        store.insert(&case.case_id, judge.id(), entry)?;
    }
    stats.upstream_calls = judges.iter().map(Judge::upstream_calls).sum::<usize>() - calls_before;
    Ok(stats)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assess::backend::TransportError;
    use crate::assess::MockParams;
    use crate::corpus::{generate_synthetic_corpus, SyntheticCorpusConfig};

    fn cases(n: usize) -> Vec<ClinicalCase> {
        generate_synthetic_corpus(&SyntheticCorpusConfig {
            n_rare: n / 2,
            n_nonrare: n - n / 2,
            ..Default::default()
        })
        .unwrap()
    }

    fn mock_judge(id: &str, seed: u64) -> Judge {
        Judge::from_config(JudgeConfig::mock(
            id,
            MockParams {
                label_leak: 0.6,
                noise_sd: 10.0,
                seed,
                ..Default::default()
            },
        ))
        .unwrap()
    }

    struct Garbage;
    impl Backend for Garbage {
        fn complete(&self, _: &JudgeRequest<'_>) -> Result<String, TransportError> {
            Ok("<html>502</html>".into())
        }
    }

    /// Tracks the number of requests in flight.
    struct Gauge {
        inner: MockBackend,
        current: AtomicUsize,
        peak: AtomicUsize,
    }
    impl Backend for Gauge {
        fn complete(&self, r: &JudgeRequest<'_>) -> Result<String, TransportError> {
            let now = self.current.fetch_add(1, Ordering::SeqCst) + 1;
            self.peak.fetch_max(now, Ordering::SeqCst);
            std::thread::sleep(Duration::from_millis(2));
            let out = self.inner.complete(r);
            self.current.fetch_sub(1, Ordering::SeqCst);
            out
        }
    }

    #[test]
    fn mock_case_is_deterministic() {
        let c = &cases(2)[0];
        assert_eq!(assess_case(&mock_judge("j", 3), c, None), assess_case(&mock_judge("j", 3), c, None));
    }

    #[test]
    fn garbage_exhausts_retries() {
        let mut cfg = JudgeConfig::mock("g", MockParams::default());
        cfg.max_retries = 2;
        cfg.backoff_ms = 0;
        let judge = Judge::with_backend(cfg, Arc::new(Garbage));
        let entry = assess_case(&judge, &cases(2)[0], None);
        assert!(matches!(entry, StoreEntry::Missing { .. }));
        assert_eq!(judge.upstream_calls(), 3);
    }

    #[test]
    fn cache_hit_skips_backend() {
        let judge = mock_judge("j", 1);
        let cs = cases(2);
        let mut store = AssessmentStore::new();
        assess_corpus(std::slice::from_ref(&judge), &cs, AssessOptions::default(), &mut store).unwrap();
        let calls = judge.upstream_calls();
        let hit = assess_case(&judge, &cs[0], Some(&store));
        assert!(hit.assessment().is_some());
        assert_eq!(judge.upstream_calls(), calls);
    }

    #[test]
    fn corpus_cardinality_and_warm_cache() {
        let judges: Vec<Judge> = (0..3).map(|i| mock_judge(&format!("j{i}"), i)).collect();
        let cs = cases(10);
        let mut store = AssessmentStore::new();
        let stats = assess_corpus(&judges, &cs, AssessOptions { max_in_flight: 4 }, &mut store).unwrap();
        assert_eq!(store.len(), 30);
        assert_eq!(stats.upstream_calls, 30);
        let before = store.clone();
        let again = assess_corpus(&judges, &cs, AssessOptions { max_in_flight: 4 }, &mut store).unwrap();
        assert_eq!(again.upstream_calls, 0);
        assert_eq!(again.cached, 30);
        assert_eq!(store, before);
    }

    #[test]
    fn one_failing_pair_recorded_missing() {
        let cs = cases(10);
        let target = cs[6].case_id.clone();
        let mut judges: Vec<Judge> = (0..2).map(|i| mock_judge(&format!("j{i}"), i)).collect();
        let mut cfg = JudgeConfig::mock(
            "j2",
            MockParams {
                label_leak: 0.5,
                fail_cases: vec![target.clone()],
                ..Default::default()
            },
        );
        cfg.max_retries = 1;
        judges.push(Judge::from_config(cfg).unwrap());
        let mut store = AssessmentStore::new();
        let stats = assess_corpus(&judges, &cs, AssessOptions::default(), &mut store).unwrap();
        assert_eq!(stats.new_missing, 1);
        assert_eq!(stats.new_ok, 29);
        assert!(matches!(store.get(&target, "j2"), Some(StoreEntry::Missing { .. })));
    }

    #[test]
    fn independent_of_in_flight_limit() {
        let cs = cases(12);
        let run = |limit| {
            let judges: Vec<Judge> = (0..3).map(|i| mock_judge(&format!("j{i}"), i)).collect();
            let mut store = AssessmentStore::new();
            assess_corpus(&judges, &cs, AssessOptions { max_in_flight: limit }, &mut store).unwrap();
            let mut buf = Vec::new();
            store.write(&mut buf).unwrap();
            buf
        };
        assert_eq!(run(1), run(16));
    }

    #[test]
    fn in_flight_bound_respected() {
        let gauge = Arc::new(Gauge {
            inner: MockBackend::new(MockParams::default()),
            current: AtomicUsize::new(0),
            peak: AtomicUsize::new(0),
        });
        let judges: Vec<Judge> = (0..4)
            .map(|i| Judge::with_backend(JudgeConfig::mock(format!("j{i}"), MockParams::default()), gauge.clone()))
            .collect();
        let mut store = AssessmentStore::new();
        assess_corpus(&judges, &cases(10), AssessOptions { max_in_flight: 3 }, &mut store).unwrap();
        assert!(gauge.peak.load(Ordering::SeqCst) <= 3);
        assert_eq!(store.len(), 40);
    }

    #[test]
    fn zero_in_flight_rejected() {
        let mut store = AssessmentStore::new();
        assert!(assess_corpus(&[], &[], AssessOptions { max_in_flight: 0 }, &mut store).is_err());
    }
}
