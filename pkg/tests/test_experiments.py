import csv
import json

import numpy as np
import pytest

from dispca.datasets import make_low_rank_plus_noise, make_regression
from dispca.exceptions import ParameterError
from dispca.experiments import (
    CSV_HEADER,
    ExperimentConfig,
    ResultRow,
    emit_results,
    load_task_data,
    read_results,
    run,
    run_kmeans,
    run_lowrank,
    run_pcr,
)


def small(task, **kw):
    base = dict(s=5, rank=3, projection_dims=[3, 6], repetitions=2, synthetic_rows=300, synthetic_cols=12,
                record_time=False)
    base.update(kw)
    return ExperimentConfig(task, **base)


def test_config_validation():
    with pytest.raises(ParameterError):
        ExperimentConfig("pca")
    with pytest.raises(ParameterError):
        ExperimentConfig("lowrank", projection_dims=[])
    with pytest.raises(ParameterError):
        ExperimentConfig("lowrank", repetitions=0)
    with pytest.raises(ParameterError):
        ExperimentConfig("lowrank", backend="gpu")
    assert ExperimentConfig("lowrank").rank == 10
    assert ExperimentConfig("kmeans").eps == 0.3


def test_dims_must_fit_data():
    with pytest.raises(ParameterError):
        run_lowrank(small("lowrank", projection_dims=[13]))
    with pytest.raises(ParameterError):
        run_lowrank(small("lowrank", projection_dims=[2]))  # below r


def test_lowrank_full_dimension_ratio_one():
    rows = run_lowrank(small("lowrank", projection_dims=[12]))
    assert rows[0].ratio == pytest.approx(1.0, abs=1e-8)


def test_lowrank_ratio_within_bound():
    cfg = small("lowrank", rank=1, eps=0.5, projection_dims=[1 + 8 - 1])  # r + ceil(4r/eps) - 1
    for row in run_lowrank(cfg):
        assert 1 - 1e-8 <= row.ratio <= 1.5


def test_comm_words_match_closed_form():
    rows = run_lowrank(small("lowrank"))
    for row in rows:
        assert row.comm_words == 5 * (row.projection_dim * 12 + row.projection_dim)


def test_kmeans_zero_radius_ratio_one():
    centers = np.array([[4.0, 0, 0], [-4.0, 0, 0], [0, 4.0, 0]])
    p = np.repeat(centers, 20, axis=0)
    rows = run_kmeans(small("kmeans", projection_dims=[2, 3], coreset_size=10), data=p - p.mean(axis=0))
    assert [r.ratio for r in rows] == [1.0, 1.0]


def test_kmeans_synthetic_ratio():
    cfg = ExperimentConfig("kmeans", s=8, rank=10, projection_dims=[30], synthetic_rows=2000, synthetic_cols=30,
                           record_time=False)
    assert run_kmeans(cfg)[0].ratio <= 1.2


def test_pcr_exact_when_blocks_fit():
    # one row per node: every block has rank 1 <= t, so nothing is lost locally
    x, y = make_regression(40, 10, rank=3, seed=0)
    cfg = ExperimentConfig("pcr", s=40, projection_dims=list(range(1, 11)), record_time=False)
    for row in run_pcr(cfg, data=(x, y)):
        assert row.ratio == pytest.approx(1.0, abs=1e-6)


def test_pcr_full_dimension_is_ols():
    x, y = make_regression(200, 8, rank=3, seed=1)
    rows = run_pcr(ExperimentConfig("pcr", s=5, projection_dims=[8], record_time=False), data=(x, y))
    assert rows[0].ratio == pytest.approx(1.0, abs=1e-8)


def test_pcr_fast_backend_near_one():
    x, y = make_regression(4000, 20, rank=5, noise=0.3, seed=2)
    cfg = ExperimentConfig("pcr", s=5, rank=5, projection_dims=[5, 10], backend="fast", ell=600, rsvd_q=3,
                           repetitions=5, record_time=False)
    for row in run_pcr(cfg, data=(x, y)):
        assert row.ratio <= 1.05


def test_repetitions_average_fast_backend():
    cfg = small("lowrank", backend="fast", ell=60, rsvd_q=1, repetitions=3)
    rows = run(cfg)
    assert len(rows) == 2 and all(r.ratio >= 1 - 1e-8 for r in rows)


def test_deterministic_output(tmp_path):
    cfg = small("lowrank", backend="fast", ell=60, rsvd_q=1)
    emit_results(run(cfg), tmp_path / "a", cfg)
    emit_results(run(cfg), tmp_path / "b", cfg)
    a = (tmp_path / "a.json").read_text().replace(str(tmp_path / "a"), "")
    b = (tmp_path / "b.json").read_text().replace(str(tmp_path / "b"), "")
    assert a == b
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


def test_threads_do_not_change_output(monkeypatch):
    cfg = small("lowrank", backend="fast", ell=60, rsvd_q=1, repetitions=4)
    serial = run(cfg)
    monkeypatch.setenv("DISPCA_THREADS", "4")
    assert run(cfg) == serial


def test_timeout_stops_sweep():
    assert run_lowrank(small("lowrank", timeout=-1.0)) == []


def test_emit_and_read(tmp_path):
    rows = [ResultRow(3, 1.25, 4.5, 100, 0), ResultRow(6, 1.0, 5.0, 200, 0)]
    json_path, csv_path = emit_results(rows, tmp_path / "out.json", baseline=2.0)
    assert read_results(json_path) == rows
    assert json.loads(open(json_path).read())["baseline"] == 2.0
    with open(csv_path) as fh:
        lines = list(csv.reader(fh))
    assert ",".join(lines[0]) == "projection_dim,ratio,wall_time_ms,comm_words" == ",".join(CSV_HEADER)
    assert lines[1] == ["3", "1.25", "4.5", "100"]


def test_emit_rejects_empty_and_reports_path(tmp_path):
    with pytest.raises(ParameterError):
        emit_results([], tmp_path / "x")
    with pytest.raises(OSError, match="missing"):
        emit_results([ResultRow(1, 1.0, 0.0, 1, 0)], tmp_path / "missing" / "x")


def test_load_task_data_from_files(tmp_path):
    x = make_low_rank_plus_noise(20, 3, 2, seed=0) + 5.0
    path = tmp_path / "d.csv"
    np.savetxt(path, x, delimiter=",")
    p, y = load_task_data(ExperimentConfig("lowrank", dataset_path=str(path)))
    assert y is None
    np.testing.assert_allclose(p.mean(axis=0), 0.0, atol=1e-12)
    feats, target = load_task_data(ExperimentConfig("pcr", dataset_path=str(path), target_column=0))
    assert feats.shape == (20, 2) and target.shape == (20,)
