import statistics

import numpy as np
import pytest

from lscale.classifier import ClassifierModel
from lscale.harness import (ExperimentConfig, ExperimentReport, LabelOracle, Record, ReportError,
                            StateError, aggregate, check_budget_accounting, evaluate_accuracy,
                            format_table, load_state, read_report, resume, run_experiment,
                            summary_path, write_report)
from lscale.graph import make_split


def small(**kw):
    base = dict(budget=(10, 20), batch=5, init_pool=3, runs=3, splits=2, val_size=30,
                hidden_dim=16, max_epochs=60)
    base.update(kw)
    return ExperimentConfig(**base)


def test_single_checkpoint_single_step(sbm_data):
    rep = run_experiment(small(budget=(10,), batch=10, runs=1), data=sbm_data)
    assert [r.checkpoint for r in rep.records] == [10]
    assert len(rep.diagnostics[0]["novelty"]) == 1
    assert rep.diagnostics[0]["labelled_at"] == {"10": 13}


def test_batches_truncate_at_checkpoints(sbm_data):
    rep = run_experiment(small(budget=(7, 20), batch=5, runs=1, strategy="random"), data=sbm_data)
    # 0 -> 5 -> 7 -> 12 -> 17 -> 20
    assert len(rep.diagnostics[0]["novelty"]) == 5
    assert rep.diagnostics[0]["labelled_at"] == {"7": 10, "20": 23}


def test_deterministic_csv(sbm_data, tmp_path):
    cfg = small(strategy="lscale")
    a = write_report(run_experiment(cfg, data=sbm_data), tmp_path / "a.csv")
    b = write_report(run_experiment(cfg, data=sbm_data), tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()
    assert summary_path(a).read_bytes() == summary_path(b).read_bytes()


def test_random_beats_chance(sbm_data):
    rep = run_experiment(small(strategy="random", runs=2), data=sbm_data)
    assert rep.accuracies(20).mean() > 1 / 3


@pytest.mark.parametrize("strategy", ["lscale", "lscale-plain", "random", "uncertainty",
                                      "featprop", "featprop-u"])
def test_audit_clean_and_budget_accounted(sbm_data, strategy):
    cfg = small(strategy=strategy, runs=2)
    rep = run_experiment(cfg, data=sbm_data)
    assert set(rep.audit) == {"train_outside_labelled", "train_test_or_validation",
                              "test_outside_evaluation", "validation_outside_early_stop"}
    assert all(v == 0 for v in rep.audit.values())
    assert check_budget_accounting(rep, cfg)
    assert len(rep.records) == 2 * len(cfg.budget)


def test_count_initial_in_budget(sbm_data):
    cfg = small(count_initial_in_budget=True, budget=(5, 15), init_pool=3, runs=1)
    rep = run_experiment(cfg, data=sbm_data)
    assert rep.diagnostics[0]["labelled_at"] == {"5": 5, "15": 15}
    assert check_budget_accounting(rep, cfg)
    with pytest.raises(ValueError, match="unreachable"):
        small(count_initial_in_budget=True, budget=(2, 10), init_pool=3)


def test_infeasible_budget(sbm_data):
    with pytest.raises(ValueError, match="infeasible budget"):
        run_experiment(small(budget=(10, 500), runs=1), data=sbm_data)


def test_oracle_audit_flags_violations():
    labels = np.array([0, 1, 0, 1, 0, 1])
    split = make_split(6, None, test_fraction=0.34, validation_size=2, seed=0)
    oracle = LabelOracle(labels)
    oracle.reveal(split.pool[:1], "train")
    oracle.reveal(split.test, "train")
    oracle.reveal(split.validation, "evaluate")
    audit = oracle.audit(split, {0: set(split.pool[:1].tolist()), 1: set()})
    assert audit["train_outside_labelled"] == len(split.test)
    assert audit["train_test_or_validation"] == len(split.test)
    assert audit["test_outside_evaluation"] == len(split.test)
    assert audit["validation_outside_early_stop"] == 2


def test_evaluate_accuracy_examples():
    model = ClassifierModel(np.eye(1), np.array([[1.0], [-1.0]]))
    H = np.array([[1.0], [-1.0], [2.0], [-3.0]])
    assert evaluate_accuracy(model, H, [0, 1, 0, 1], [0, 1, 2, 3]) == 1.0
    assert evaluate_accuracy(model, H, [1, 1, 1, 1], [0, 1, 2, 3]) == 0.5
    assert evaluate_accuracy(model, H, [1, 0, 0, 0], [0, 1]) == 0.0
    with pytest.raises(ValueError):
        evaluate_accuracy(model, H, [0, 1, 0, 1], [])


def test_aggregate_examples():
    recs = [Record(0, 0, 10, 0.7), Record(1, 1, 10, 0.9), Record(0, 0, 30, 0.8)]
    a10, a30 = aggregate(recs)
    assert abs(a10.mean - 0.8) < 1e-15
    assert abs(a10.std - statistics.stdev([0.7, 0.9])) < 1e-15
    assert abs(a10.std - 0.14142136) < 1e-8
    assert not a10.single_record
    assert a30.std == 0.0 and a30.single_record and a30.runs == 1


def test_report_round_trip(tmp_path):
    recs = [Record(0, 3, 10, 0.123456789), Record(1, 4, 10, 1.0)]
    path = write_report(ExperimentReport(recs), tmp_path / "r.csv")
    assert path.read_text().splitlines()[0] == "run,seed,checkpoint,accuracy"
    assert read_report(path).records == recs
    summary = summary_path(path).read_text().splitlines()
    assert summary[0] == "checkpoint,mean,std,runs,single_record"


def test_report_errors(tmp_path):
    with pytest.raises(ReportError, match="nothing to report"):
        write_report(ExperimentReport([]), tmp_path / "x.csv")
    p = tmp_path / "bad.csv"
    p.write_text("run,seed,checkpoint,accuracy\n0,0,10,0.5\n1,1,ten,0.5\n")
    with pytest.raises(ReportError, match="bad.csv:3"):
        read_report(p)
    p.write_text("run,seed,checkpoint,accuracy\n")
    with pytest.raises(ReportError, match="nothing to report"):
        read_report(p)
    p.write_text("run,seed,checkpoint,accuracy\n0,0,10,1.5\n")
    with pytest.raises(ReportError, match=":2: accuracy"):
        read_report(p)


def test_table_format():
    recs = [Record(0, 0, 10, 0.7), Record(1, 1, 10, 0.9)]
    header, row = format_table(ExperimentReport(recs), "lscale")
    assert header == ["method", "10"] and row == ["lscale", "80.00±14.1"]


def test_resume_matches_uninterrupted(sbm_data, tmp_path):
    cfg = small(runs=2)
    full = run_experiment(cfg, data=sbm_data)
    state = tmp_path / "state.json"
    part = run_experiment(cfg, data=sbm_data, state_path=state, max_steps=1)
    assert not part.finished
    assert len(load_state(state)["current"]["state"]["labelled"]) == 3 + 5
    done = resume(state, cfg, data=sbm_data)
    assert done.finished and done.records == full.records
    assert done.diagnostics == full.diagnostics


def test_resume_in_several_pieces(sbm_data, tmp_path):
    cfg = small(runs=2)
    full = run_experiment(cfg, data=sbm_data)
    state = tmp_path / "state.json"
    rep = run_experiment(cfg, data=sbm_data, state_path=state, max_steps=3)
    while not rep.finished:
        rep = resume(state, cfg, data=sbm_data, max_steps=2)
    assert rep.records == full.records


def test_resume_guards(sbm_data, tmp_path):
    cfg = small(runs=1)
    state = tmp_path / "state.json"
    run_experiment(cfg, data=sbm_data, state_path=state, max_steps=1)
    with pytest.raises(StateError, match="config hash mismatch"):
        resume(state, small(runs=1, lam=0.9), data=sbm_data)
    finished = resume(state, cfg, data=sbm_data)
    before = state.read_bytes()
    again = resume(state, cfg, data=sbm_data)
    assert again.records == finished.records and state.read_bytes() == before
    state.write_text("{oops")
    with pytest.raises(StateError, match="unreadable"):
        resume(state, cfg, data=sbm_data)


def test_parallel_matches_serial(sbm_data):
    serial = run_experiment(small(runs=2), data=sbm_data)
    parallel = run_experiment(small(runs=2, jobs=2), data=sbm_data)
    assert serial.records == parallel.records


def test_hash_ignores_output_location():
    assert small(out="a").config_hash() == small(out="b", jobs=3).config_hash()
    assert small().config_hash() != small(seed=1).config_hash()


def test_config_validation():
    with pytest.raises(ValueError, match="ascending"):
        small(budget=(20, 10))
    with pytest.raises(ValueError):
        small(batch=0)
    with pytest.raises(ValueError, match="unknown"):
        small(strategy="nope")
