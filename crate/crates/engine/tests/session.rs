use stepwise_core::{
    segment_stream, synthetic_manifest, GroundTruthTurn, Progress, SegmentationConfig, Snippet,
    Step, TaskAnnotation,
};
use stepwise_engine::{
    extract_step_status, BackendError, MockConfig, MockOracleBackend, MockTextBackend,
    ScriptedBackend, Session, SessionConfig, SessionState, TransportKind, TurnError,
};

fn four_step() -> TaskAnnotation {
    TaskAnnotation::new(
        "make coffee",
        "traj-0",
        vec![
            Step::new("grind beans", 0.0, 7.0),
            Step::new("boil water", 9.0, 18.0),
            Step::new("brew", 18.0, 31.0),
            Step::new("pour", 33.0, 38.0),
        ],
    )
}

fn snippets(duration: f64) -> Vec<Snippet> {
    let cfg = SegmentationConfig::alfred();
    segment_stream(&synthetic_manifest(duration, cfg.fps, "f"), &cfg).unwrap()
}

/// Closed-form label: completed share plus the linear share of the running step.
fn label(a: &TaskAnnotation, t: f64) -> f64 {
    let n = a.steps.len() as f64;
    let mut v = 0.0;
    for s in &a.steps {
        if t >= s.t_end {
            v += 1.0;
        } else if t > s.t_start {
            v += (t - s.t_start) / (s.t_end - s.t_start);
        }
    }
    100.0 * v / n
}

fn valid(cot: &str, p: u8) -> String {
    format!("<think>{cot}</think><answer>{p}</answer>")
}

#[tokio::test]
async fn oracle_progress_equals_rounded_label() {
    let a = four_step();
    let backend = MockOracleBackend::new(Some(a.clone()), MockConfig::default());
    let mut s = Session::new(&a.task, SessionConfig::default()).unwrap();
    for v in snippets(40.0) {
        if s.is_finished() {
            break;
        }
        let rec = s.run_turn(&backend, &v, None).await.unwrap();
        let expected = (label(&a, v.last_timestamp()) + 0.5).floor();
        assert_eq!(rec.progress.value(), expected, "turn {}", rec.turn);
        assert!(rec.parse_ok);
        assert_eq!(rec.retries_used, 0);
    }
    assert_eq!(s.state, SessionState::Finished);
}

#[tokio::test]
async fn retries_then_success() {
    let b = ScriptedBackend::from_texts(["garbage".into(), "<think>x</think>".into(), valid("ok", 20)]);
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    let rec = s.run_turn(&b, &snippets(4.0)[0], None).await.unwrap();
    assert_eq!(rec.retries_used, 2);
    assert!(rec.parse_ok);
    assert_eq!(rec.progress.value(), 20.0);
    assert_eq!(s.state, SessionState::Active);
}

#[tokio::test]
async fn exhausted_retries_carry_forward() {
    let v = snippets(12.0);
    let b = ScriptedBackend::from_texts([valid("first", 30), "a".into(), "b".into(), "c".into(), valid("third", 40)]);
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    s.run_turn(&b, &v[0], None).await.unwrap();
    let rec = s.run_turn(&b, &v[1], None).await.unwrap();
    assert!(!rec.parse_ok);
    assert_eq!(rec.retries_used, 2);
    assert_eq!(rec.progress.value(), 30.0);
    assert_eq!(rec.cot_text, "first");
    assert_eq!(rec.parse_failure.unwrap().code(), "missing_think");
    assert_eq!(s.state, SessionState::DegradedActive);
    assert_eq!(s.turn, 2);

    // the next prompt threads the last surviving CoT
    let rec = s.run_turn(&b, &v[2], None).await.unwrap();
    assert!(rec.parse_ok);
    let reqs = b.requests();
    assert_eq!(reqs[0].history_cot, "None");
    assert_eq!(reqs[1].history_cot, "first");
    assert_eq!(reqs.last().unwrap().history_cot, "first");
    assert_eq!(s.state, SessionState::Active);
}

#[tokio::test]
async fn failure_on_first_turn_reports_zero() {
    let b = ScriptedBackend::from_texts(["x", "y", "z"]);
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    let rec = s.run_turn(&b, &snippets(4.0)[0], None).await.unwrap();
    assert_eq!(rec.progress, Progress::zero());
    assert_eq!(rec.cot_text, "");
}

#[tokio::test]
async fn cot_threads_between_turns() {
    let v = snippets(12.0);
    let b = ScriptedBackend::from_texts([valid("c1", 10), valid("c2", 20), valid("c3", 30)]);
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    let mut cots = Vec::new();
    for snip in &v {
        cots.push(s.run_turn(&b, snip, None).await.unwrap().cot_text);
    }
    let reqs = b.requests();
    for t in 1..reqs.len() {
        assert_eq!(reqs[t].history_cot, cots[t - 1]);
    }
}

#[tokio::test]
async fn transport_error_leaves_session_untouched() {
    let v = snippets(8.0);
    let b = ScriptedBackend::new([
        Ok(valid("c1", 10)),
        Err(BackendError::new(TransportKind::Timeout, "slow")),
        Ok(valid("c2", 20)),
    ]);
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    s.run_turn(&b, &v[0], None).await.unwrap();
    let err = s.run_turn(&b, &v[1], None).await.unwrap_err();
    assert!(matches!(err, TurnError::Transport(ref e) if e.kind == TransportKind::Timeout));
    assert_eq!(s.turn, 1);
    assert_eq!(s.history.len(), 1);
    let rec = s.run_turn(&b, &v[1], None).await.unwrap();
    assert_eq!(rec.turn, 2);
}

#[tokio::test]
async fn finished_session_refuses_turns() {
    let v = snippets(8.0);
    let b = ScriptedBackend::from_texts([valid("done", 100), valid("more", 100)]);
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    s.run_turn(&b, &v[0], None).await.unwrap();
    assert!(s.is_finished());
    assert!(matches!(s.run_turn(&b, &v[1], None).await, Err(TurnError::Finished)));
}

#[tokio::test]
async fn out_of_order_and_bad_frame_count() {
    let v = snippets(8.0);
    let b = ScriptedBackend::from_texts([valid("c", 10)]);
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    assert!(matches!(
        s.run_turn(&b, &v[1], None).await,
        Err(TurnError::OutOfOrder { expected: 1, got: 2 })
    ));
    let mut short = v[0].clone();
    short.frames.pop();
    assert!(matches!(s.run_turn(&b, &short, None).await, Err(TurnError::Snippet(_))));
    assert_eq!(s.turn, 0);
}

#[tokio::test]
async fn rewards_follow_ground_truth() {
    let v = snippets(8.0);
    let b = ScriptedBackend::from_texts([valid("a", 51), valid("b", 45)]);
    let gt = GroundTruthTurn::new(Progress::new(40.0).unwrap(), 3, 1).unwrap();
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    let first = s.run_turn(&b, &v[0], Some(gt)).await.unwrap();
    assert_eq!(first.rewards.unwrap().r_imp, 0.0);
    let second = s.run_turn(&b, &v[1], Some(gt)).await.unwrap();
    let r = second.rewards.unwrap();
    assert!((r.r_overall - 1.4).abs() < 1e-12, "{r:?}");
}

#[tokio::test]
async fn degraded_turn_scores_zero() {
    let b = ScriptedBackend::from_texts(["x", "y", "z"]);
    let gt = GroundTruthTurn::new(Progress::zero(), 2, 0).unwrap();
    let mut s = Session::new("t", SessionConfig::default()).unwrap();
    let rec = s.run_turn(&b, &snippets(4.0)[0], Some(gt)).await.unwrap();
    let r = rec.rewards.unwrap();
    assert_eq!(r.r_fmt, 0.0);
    assert_eq!(r.r_overall, 0.0);
}

#[tokio::test]
async fn oracle_session_is_deterministic() {
    let run = || async {
        let a = four_step();
        let cfg = MockConfig {
            seed: 11,
            ..MockConfig::default()
        };
        let backend = MockOracleBackend::new(Some(a.clone()), cfg);
        let mut s = Session::new(&a.task, SessionConfig::default()).unwrap();
        let mut out = Vec::new();
        for v in snippets(40.0) {
            if s.is_finished() {
                break;
            }
            let rec = s.run_turn(&backend, &v, None).await.unwrap();
            out.push(serde_json::to_string(&rec).unwrap());
        }
        out
    };
    assert_eq!(run().await, run().await);
}

#[tokio::test]
async fn step_status_from_oracle_cot() {
    let a = TaskAnnotation::new(
        "three",
        "v",
        vec![Step::new("a", 0.0, 4.0), Step::new("b", 4.0, 8.0), Step::new("c", 8.0, 12.0)],
    );
    let backend = MockOracleBackend::new(Some(a.clone()), MockConfig::default());
    let mut s = Session::new(&a.task, SessionConfig::default()).unwrap();
    let v = snippets(12.0);
    s.run_turn(&backend, &v[0], None).await.unwrap();
    let rec = s.run_turn(&backend, &v[1], None).await.unwrap();
    assert_eq!(rec.progress.value(), 67.0);
    assert_eq!(rec.step_status.completed, vec!["a", "b"]);
    assert!(rec.step_status.in_progress.is_empty());
    assert_eq!(rec.step_status.pending, vec!["c"]);

    let via_backend = extract_step_status(&rec.cot_text, Some(&MockTextBackend)).await.unwrap();
    assert_eq!(via_backend.completed, rec.step_status.completed);
    assert_eq!(via_backend.pending, rec.step_status.pending);
    let empty = extract_step_status("  ", None).await.unwrap();
    assert!(empty.is_empty() && empty.low_confidence);
}

#[test]
fn empty_task_is_rejected() {
    assert!(Session::new("  ", SessionConfig::default()).is_err());
}
