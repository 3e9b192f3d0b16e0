//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero if any fails.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::panic;
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ctxmap::backend::{Backend, FixtureReply, LlmError, ReplayTransport, ScriptedBackend, WireBackend, WireConfig};
use ctxmap::config::{self, BackendSpec, RunConfig};
use ctxmap::core::chat::ChatRequest;
use ctxmap::core::cost::{cost_briefcontext, cost_vanilla, Money, Pricing, TokenCount};
use ctxmap::core::document::{Corpus, Document};
use ctxmap::core::metrics::{evaluate_preflight, percentile_to_index};
use ctxmap::core::partition::{partition_count, partition_ids};
use ctxmap::core::preflight::iou_at_n;
use ctxmap::core::prompt::Answer;
use ctxmap::core::ranking::{
    bm25_rank, build_dense_index, dense_retrieve, Bm25Params, EmbedError, EmbeddingProvider, HashingEmbedder, RankerSource,
    Ranking,
};
use ctxmap::core::text::tokenize;
use ctxmap::eval::{run_conflict_analysis, run_experiment, ExperimentContext, RunOutput};
use ctxmap::io::{ingest_corpus, ingest_qa, CorpusFormat};
use ctxmap::pipeline::{has_conflict, Condition, Indices, Mode, PartitionResult, Retriever};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn main() -> ExitCode {
    let criteria: [(u8, &str, Duration, Check); 10] = [
        (1, "preflight metric oracle", Duration::from_secs(1), preflight_metrics),
        (2, "cost-model identity", Duration::from_secs(1), cost_identity),
        (3, "partition laws", Duration::from_secs(5), partition_laws),
        (4, "IoU properties", Duration::from_secs(5), iou_properties),
        (5, "lost-in-the-middle reproduction", Duration::from_secs(30), lost_in_the_middle),
        (6, "call-count law", Duration::from_secs(30), call_count_law),
        (7, "conflict bookkeeping", Duration::from_secs(5), conflict_bookkeeping),
        (8, "retrieval oracles", Duration::from_secs(10), retrieval_oracles),
        (9, "determinism", Duration::from_secs(60), determinism),
        (10, "wire-client replay", Duration::from_secs(5), wire_replay),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, limit, check) in criteria {
        let start = Instant::now();
        let outcome = panic::catch_unwind(check).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail} [{took:.2?}]"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why} [{took:.2?}]");
            }
        }
    }
    let _ = panic::take_hook();
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion(s) failed");
        ExitCode::FAILURE
    }
}

fn preflight_metrics() -> Result<String, String> {
    let labels = std::iter::repeat_n((true, true), 426)
        .chain(std::iter::repeat_n((true, false), 423))
        .chain(std::iter::repeat_n((false, true), 34))
        .chain(std::iter::repeat_n((false, false), 235));
    let m = evaluate_preflight(labels);
    let pct = |r: f64| 100.0 * r;
    let checks = [
        ("precision", pct(m.precision.value), 50.18),
        ("recall", pct(m.recall.value), 92.61),
        ("f1", pct(m.f1.value), 65.09),
        ("negatives filtered", pct(m.negatives_filtered.value), 35.71),
    ];
    for (name, got, want) in checks {
        ensure((got - want).abs() <= 0.01, || format!("{name} {got:.4}% vs {want}%"))?;
    }
    Ok(format!(
        "precision {:.2}% recall {:.2}% f1 {:.2}% negatives filtered {:.2}%",
        checks[0].1, checks[1].1, checks[2].1, checks[3].1
    ))
}

fn cost_identity() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..1000 {
        let n_con = TokenCount(rng.gen_range(0..1_000_000));
        let n_ins = TokenCount(rng.gen_range(0..10_000));
        let n_out = TokenCount(rng.gen_range(0..10_000));
        let m: u64 = rng.gen_range(1..=64);
        let pricing = Pricing::new(Money(rng.gen_range(0..100_000_000)), Money(rng.gen_range(0..100_000_000)));
        let bc = cost_briefcontext(n_con, n_ins, n_out, m, pricing).map_err(|e| e.to_string())?.picos();
        let vanilla = cost_vanilla(n_con, n_ins, n_out, pricing).picos();
        let m = u128::from(m);
        let expected = (m - 1) * u128::from(n_ins.0) * pricing.p_input.picos() + m * u128::from(n_out.0) * pricing.p_output.picos();
        ensure(bc - vanilla == expected, || format!("m={m} n_ins={n_ins:?} n_out={n_out:?}: {} != {expected}", bc - vanilla))?;
    }
    Ok("1000 random tuples, exact in picounits".into())
}

fn partition_laws() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let cases = 10_000;
    for _ in 0..cases {
        let len: usize = rng.gen_range(0..=128);
        let batch = rng.gen_range(1..=32);
        let ids: Vec<String> = (0..len).map(|i| format!("d{i}")).collect();
        let parts = partition_ids(&ids, batch);
        ensure(parts.len() == len.div_ceil(batch) && parts.len() == partition_count(len, batch), || {
            format!("len {len} batch {batch}: {} partitions", parts.len())
        })?;
        let flat: Vec<String> = parts.iter().flat_map(|p| p.doc_ids.clone()).collect();
        ensure(flat == ids, || format!("len {len} batch {batch}: concatenation differs from input"))?;
        let distinct: BTreeSet<&String> = flat.iter().collect();
        ensure(distinct.len() == flat.len(), || "partitions overlap".into())?;
        for (i, p) in parts.iter().enumerate() {
            let full = i + 1 < parts.len();
            ensure(p.index == i && !p.doc_ids.is_empty() && (!full || p.doc_ids.len() == batch) && p.doc_ids.len() <= batch, || {
                format!("len {len} batch {batch}: partition {i} has {} ids", p.doc_ids.len())
            })?;
        }
    }
    Ok(format!("{cases} random cases"))
}

fn scored(ids: &[String]) -> Ranking {
    let n = ids.len();
    Ranking::from_scores(RankerSource::Dense, ids.iter().enumerate().map(|(i, id)| (id.clone(), (n - i) as f64)), n).unwrap()
}

fn iou_properties() -> Result<String, String> {
    let worked = iou_at_n(&scored(&ids(&["a", "b", "c"])), &scored(&ids(&["a", "d", "e"])), 3).map_err(|e| e.to_string())?;
    ensure(worked == 0.2, || format!("{{a,b,c}} vs {{a,d,e}} = {worked}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let pool: Vec<String> = (0..24).map(|i| format!("d{i:02}")).collect();
    let cases = 5000;
    for _ in 0..cases {
        let mut a = pool.clone();
        let mut b = pool.clone();
        a.shuffle(&mut rng);
        b.shuffle(&mut rng);
        a.truncate(rng.gen_range(1..=16));
        b.truncate(rng.gen_range(1..=16));
        let n = rng.gen_range(1..=8);
        let (ra, rb) = (scored(&a), scored(&b));
        let ab = iou_at_n(&ra, &rb, n).unwrap();
        ensure(ab == iou_at_n(&rb, &ra, n).unwrap(), || "asymmetric".into())?;
        ensure((0.0..=1.0).contains(&ab), || format!("out of range: {ab}"))?;
        ensure(iou_at_n(&ra, &ra, n).unwrap() == 1.0, || "self IoU is not 1".into())?;
        let top = n.min(a.len());
        let mut permuted = a.clone();
        permuted[..top].shuffle(&mut rng);
        ensure(iou_at_n(&scored(&permuted), &rb, n).unwrap() == ab, || "top-n permutation changed IoU".into())?;
    }
    Ok(format!("worked example 0.2, {cases} random pairs"))
}

fn ids(s: &[&str]) -> Vec<String> {
    s.iter().map(|s| s.to_string()).collect()
}

/// The fixture benchmark under a named experiment config, with the
/// scripted backend built the way the CLI builds it.
struct FixtureRun {
    cfg: RunConfig,
    corpus: Corpus,
    items: Vec<ctxmap::core::document::QaItem>,
}

impl FixtureRun {
    fn load(experiment: &str) -> Self {
        let dir = common::fixtures();
        let cfg = config::load(&[&dir.join("base.json"), &dir.join(experiment)]).unwrap();
        let corpus = ingest_corpus(cfg.corpus_path().unwrap(), CorpusFormat::Jsonl).unwrap();
        let items = ingest_qa(cfg.qa_path().unwrap()).unwrap();
        Self { cfg, corpus, items }
    }

    fn run(&self) -> RunOutput {
        let BackendSpec::Scripted(spec) = &self.cfg.backend else { panic!("fixture uses the scripted backend") };
        let mut model = spec.model.clone();
        model.seed = self.cfg.effective_seed();
        let backend = ScriptedBackend::for_items(model, &self.items).unwrap().with_pricing(spec.pricing);
        let embedder = HashingEmbedder::new(self.cfg.embedding_dimension);
        let indices = Indices::build(&self.corpus, &embedder).unwrap();
        let ctx = ExperimentContext {
            items: &self.items,
            retriever: Retriever::new(&self.corpus, &indices, &embedder),
            backend: &backend,
            pipeline: &self.cfg.pipeline,
            seed: self.cfg.effective_seed(),
        };
        run_experiment(&self.cfg.experiment, &ctx).unwrap()
    }
}

fn accuracy_at(out: &RunOutput, mode: Mode, p: f64) -> f64 {
    let cell: Vec<bool> =
        out.traces.iter().filter(|t| t.mode == mode && t.condition.percentile == Some(p)).map(|t| t.is_correct()).collect();
    100.0 * cell.iter().filter(|c| **c).count() as f64 / cell.len().max(1) as f64
}

fn lost_in_the_middle() -> Result<String, String> {
    let run = FixtureRun::load("position_sweep.json");
    let m = match &run.cfg.backend {
        BackendSpec::Scripted(s) => s.model.clone(),
        BackendSpec::Wire(_) => return Err("fixture must use the scripted backend".into()),
    };
    ensure(
        run.corpus.len() >= 64
            && run.items.len() == 40
            && m.spotlight_window == 1
            && m.p_spotlight == 1.0
            && m.p_middle == 0.1
            && run.cfg.pipeline.top_k == 16
            && run.cfg.pipeline.batch_size == 4
            && !run.cfg.pipeline.preflight_enabled,
        || "fixture configuration drifted".into(),
    )?;
    let out = run.run();
    ensure(out.failures.is_empty() && out.skipped.is_empty(), || format!("{} failures", out.failures.len()))?;
    let gaps: Vec<f64> =
        [25.0, 50.0, 75.0].iter().map(|&p| accuracy_at(&out, Mode::Briefcontext, p) - accuracy_at(&out, Mode::Rag, p)).collect();
    let mean_gap = gaps.iter().sum::<f64>() / gaps.len() as f64;
    let edges = [accuracy_at(&out, Mode::Rag, 0.0), accuracy_at(&out, Mode::Rag, 100.0)];
    ensure(mean_gap >= 30.0, || format!("mean middle gap {mean_gap:.1}pp"))?;
    ensure(edges.iter().all(|a| *a >= 90.0), || format!("rag at edges {edges:?}"))?;
    ensure(run.run() == out, || "second run differs".into())?;
    Ok(format!(
        "briefcontext - rag at 25/50/75 = {:.1}/{:.1}/{:.1}pp (mean {mean_gap:.1}), rag at 0/100 = {:.1}%/{:.1}%",
        gaps[0], gaps[1], gaps[2], edges[0], edges[1]
    ))
}

fn call_count_law() -> Result<String, String> {
    let run = FixtureRun::load("position_sweep.json");
    let out = run.run();
    let k = run.cfg.pipeline.top_k;
    let m = partition_count(k, run.cfg.pipeline.batch_size);
    let (mut bc, mut rag) = (0, 0);
    for t in &out.traces {
        let want = match t.mode {
            Mode::Briefcontext => {
                bc += 1;
                m + 1
            }
            _ => {
                rag += 1;
                1
            }
        };
        let p = t.condition.percentile.unwrap_or_default();
        ensure(t.backend_calls() == want, || {
            format!("{} {} at {p}: {} calls (key index {})", t.question_id, t.mode, t.backend_calls(), percentile_to_index(p, k))
        })?;
        let (i, o) = t.call_token_sums();
        ensure(i == t.cost.input_tokens && o == t.cost.output_tokens && t.cost.requests == want as u64, || {
            format!("{} {}: token sums differ from the cost tally", t.question_id, t.mode)
        })?;
    }
    Ok(format!("{bc} briefcontext traces with {} calls, {rag} rag traces with 1 call, token sums exact", m + 1))
}

fn result(i: usize, answer: Option<&str>) -> PartitionResult {
    PartitionResult {
        partition_index: i,
        extracted_info: String::new(),
        provisional_answer: answer.map_or(Answer::Abstain, |a| Answer::Label(a.into())),
        input_tokens: TokenCount(0),
        output_tokens: TokenCount(0),
    }
}

fn conflict_bookkeeping() -> Result<String, String> {
    // provisional answers per partition, with the hand-labelled flag
    let sets: [(&[Option<&str>], bool); 7] = [
        (&[None, None, None, None], false),
        (&[Some("A"), None, None, None], false),
        (&[Some("A"), Some("A"), None, Some("A")], false),
        (&[Some("A"), Some("B"), None, None], true),
        (&[None, None, Some("C"), Some("B")], true),
        (&[Some("A"), Some("B"), Some("C"), Some("A")], true),
        (&[], false),
    ];
    for (answers, want) in sets {
        let results: Vec<PartitionResult> = answers.iter().enumerate().map(|(i, a)| result(i, *a)).collect();
        ensure(has_conflict(&results) == want, || format!("{answers:?}: expected conflict={want}"))?;
    }

    // (conflict, bc correct, rag correct) for twelve questions
    let cases = [
        (true, true, false),
        (true, true, false),
        (true, true, false),
        (true, true, true),
        (true, true, true),
        (true, false, false),
        (true, false, true),
        (false, true, false),
        (false, false, true),
        (false, true, true),
        (true, false, false),
        (true, true, true),
    ];
    let cond = Condition { top_k: 16, ..Condition::default() };
    let mut traces = Vec::new();
    for (i, &(conflict, bc, rag)) in cases.iter().enumerate() {
        let q = format!("q{i:02}");
        traces.push(common::trace(&q, Mode::Briefcontext, cond.clone(), bc, conflict));
        traces.push(common::trace(&q, Mode::Rag, cond.clone(), rag, false));
    }
    let cells = run_conflict_analysis(&traces).map_err(|e| e.to_string())?;
    let s = cells[0].stats;
    // conflicts: 9; resolved 6; wins 3, ties 5 (3 both right, 2 both wrong), losses 1
    let got = (s.cases, s.conflicts, s.resolved, s.wins, s.ties, s.losses);
    ensure(got == (12, 9, 6, 3, 5, 1), || format!("counts {got:?}"))?;
    let pcts = (s.resolved_pct, s.win_pct, s.tie_pct, s.lose_pct);
    ensure(pcts == (66.67, 33.33, 55.56, 11.11), || format!("percentages {pcts:?}"))?;
    ensure(s.wins + s.ties + s.losses == s.conflicts, || "win+tie+lose != conflicts".into())?;
    let total = s.win_pct + s.tie_pct + s.lose_pct;
    ensure((total - 100.0).abs() <= 0.011, || format!("percentages sum to {total}"))?;

    let unpaired = &traces[..traces.len() - 1];
    ensure(run_conflict_analysis(unpaired).is_err(), || "unpaired trace accepted".into())?;
    Ok(format!(
        "7 flag fixtures; 9 conflicts, {} resolved, win/tie/lose {:.2}/{:.2}/{:.2}%",
        s.resolved, s.win_pct, s.tie_pct, s.lose_pct
    ))
}

/// Reads the vector straight out of the text: comma-separated numbers.
struct Literal(usize);

impl EmbeddingProvider for Literal {
    fn dimension(&self) -> usize {
        self.0
    }

    fn embed(&self, text: &str) -> Result<Vec<f64>, EmbedError> {
        text.split(',').map(|x| x.trim().parse().map_err(|_| EmbedError(format!("not a number: {x}")))).collect()
    }
}

fn brute_force(vectors: &[(String, Vec<f64>)], q: &[f64], k: usize) -> Vec<(String, f64)> {
    let mut scored: Vec<(String, f64)> =
        vectors.iter().map(|(id, v)| (id.clone(), v.iter().zip(q).map(|(a, b)| a * b).sum())).collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    scored.truncate(k);
    scored
}

fn dense_oracle() -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let dim = 8;
    let mut checked = 0;
    for round in 0..5 {
        // quarter steps make ties common
        let vec_of = |rng: &mut ChaCha8Rng| -> Vec<f64> { (0..dim).map(|_| f64::from(rng.gen_range(-4i8..=4)) / 4.0).collect() };
        let vectors: Vec<(String, Vec<f64>)> = (0..500).map(|i| (format!("r{round}-{i:03}"), vec_of(&mut rng))).collect();
        let text = |v: &[f64]| v.iter().map(f64::to_string).collect::<Vec<_>>().join(",");
        let mut docs: Vec<Document> = vectors.iter().map(|(id, v)| Document::new(id.clone(), "", text(v))).collect();
        docs.shuffle(&mut rng);
        let corpus = Corpus::from_documents(docs).unwrap();
        let provider = Literal(dim);
        let index = build_dense_index(&corpus, &provider).map_err(|e| e.to_string())?;
        for _ in 0..10 {
            let q = vec_of(&mut rng);
            let k = rng.gen_range(1..=500);
            let got = dense_retrieve(&index, &text(&q), &provider, k).map_err(|e| e.to_string())?;
            let got: Vec<(String, f64)> = got.entries.into_iter().map(|e| (e.id, e.score)).collect();
            ensure(got == brute_force(&vectors, &q, k), || format!("round {round}, k {k}: dense ranking differs from brute force"))?;
            checked += 1;
        }
    }
    Ok(checked)
}

fn bm25_oracle() -> Result<(), String> {
    let texts = [
        ("d1", "aspirin reduces stroke risk"),
        ("d2", "aspirin aspirin and bleeding"),
        ("d3", "statins lower cholesterol in adults"),
        ("d4", "stroke outcomes after stroke unit care in adults"),
        ("d5", "placebo"),
    ];
    let corpus = Corpus::from_documents(texts.iter().map(|(id, t)| Document::new(*id, "", *t))).unwrap();
    let query = "aspirin stroke adults aspirin";
    let (k1, b) = (1.2, 0.75);
    let docs: Vec<Vec<&str>> = texts.iter().map(|(_, t)| t.split(' ').collect()).collect();
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let mut expected: BTreeMap<&str, f64> = BTreeMap::new();
    for ((id, _), words) in texts.iter().zip(&docs) {
        let mut s = 0.0;
        for term in query.split(' ') {
            let df = docs.iter().filter(|d| d.contains(&term)).count() as f64;
            let idf = (1.0 + (n - df + 0.5) / (df + 0.5)).ln();
            let tf = words.iter().filter(|w| **w == term).count() as f64;
            s += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * words.len() as f64 / avgdl));
        }
        expected.insert(id, s);
    }
    ensure(tokenize(query).len() == 4, || "tokenizer disagrees with the hand split".into())?;
    let got = bm25_rank(&corpus, query, Bm25Params { k1, b }, None, 5).map_err(|e| e.to_string())?;
    ensure(got.len() == 5, || "expected all five documents".into())?;
    for e in &got.entries {
        let want = expected[e.id.as_str()];
        ensure((e.score - want).abs() <= 1e-9, || format!("{}: {} vs {want}", e.id, e.score))?;
    }
    let mut order: Vec<(&str, f64)> = expected.into_iter().collect();
    order.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ensure(got.ids().eq(order.iter().map(|(id, _)| *id)), || "bm25 order differs".into())
}

fn retrieval_oracles() -> Result<String, String> {
    let queries = dense_oracle()?;
    bm25_oracle()?;
    Ok(format!("{queries} dense queries over 500-doc corpora exact; 5-doc BM25 within 1e-9"))
}

fn determinism() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let base = common::fixtures().join("base.json");
    let mut files = 0;
    for experiment in ["position_sweep.json", "conflict.json", "attention_bias.json"] {
        let exp = common::fixtures().join(experiment);
        let run = |name: &str| -> Result<std::path::PathBuf, String> {
            let out = dir.path().join(format!("{experiment}-{name}"));
            let args = [
                "ctxmap".as_ref(),
                "--config".as_ref(),
                base.as_os_str(),
                "--output-dir".as_ref(),
                out.as_os_str(),
                "experiment".as_ref(),
                exp.as_os_str(),
            ];
            let mut err = Vec::new();
            let code = ctxmap::cli::run(args, &mut Vec::new(), &mut err);
            ensure(code == 0, || String::from_utf8_lossy(&err).into_owned())?;
            Ok(out)
        };
        let (a, b) = (run("a")?, run("b")?);
        for name in ["report.json", "report.csv", "traces.jsonl", "preflight.jsonl", "run.json"] {
            let read = |d: &Path| fs::read(d.join(name)).map_err(|e| e.to_string());
            ensure(read(&a)? == read(&b)?, || format!("{experiment}: {name} differs between runs"))?;
            files += 1;
        }
    }
    Ok(format!("3 experiments run twice, {files} output files byte-identical"))
}

fn wire_replay() -> Result<String, String> {
    let dir = common::fixtures().join("wire");
    let load = |name: &str| FixtureReply::load(&dir.join(name));
    let config = WireConfig { endpoint: "http://replay.invalid/v1".into(), initial_backoff_ms: 0, ..WireConfig::default() };
    let backend = |reply: FixtureReply| WireBackend::with_transport(config.clone(), None, ReplayTransport::new(vec![reply]));
    let request = ChatRequest::new("Answer.", "Question: does aspirin help?", 32);

    let ok = backend(load("ok.json")?);
    let r = ok.complete(&request).map_err(|e| e.to_string())?;
    ensure(r.text == "[doc 2] reports fewer strokes.\nANSWER: A", || format!("text {:?}", r.text))?;
    ensure((r.input_tokens, r.output_tokens) == (TokenCount(311), TokenCount(12)), || "usage not extracted".into())?;

    for (name, status) in [("malformed.json", 200), ("server_error.json", 500)] {
        let b = backend(load(name)?);
        match b.complete(&request) {
            Err(e @ LlmError::Wire { attempts: 3, .. }) if e.is_retryable() => {
                let LlmError::Wire { status: s, .. } = &e else { unreachable!() };
                ensure(*s == Some(status), || format!("{name}: status {s:?}"))?;
            }
            other => return Err(format!("{name}: {other:?}")),
        }
        ensure(b.transport().received().len() == 3, || format!("{name}: {} attempts sent", b.transport().received().len()))?;
    }
    Ok("text and usage extracted; malformed and HTTP 500 give a retryable wire error after 3 attempts".into())
}
