import json

import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from petrolmfg import (
    ClusterParams,
    CoverageError,
    FormatError,
    MarketState,
    Population,
    PricePanel,
    ValidationError,
    contraction_bound,
    kmeans,
    simulate,
    solve_equilibrium,
)
from petrolmfg import dataio
from oracles import FIG3_COUNTS, FIG3_PARAMS


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


# -- price panels -------------------------------------------------------------

def test_read_panel_pivots(tmp_path):
    f = write(tmp_path / "p.csv", "station_id,date,price\n"
              "B,2023-01-02,1.9\nA,2023-01-01,1.8\nB,2023-01-01,1.7\n"
              "A,2023-01-03,1.85\nA,2023-01-02,1.81\nB,2023-01-03,1.95\n")
    p = dataio.read_price_panel(f)
    assert p.station_ids == ("B", "A")
    assert p.dates == ("2023-01-01", "2023-01-02", "2023-01-03")
    assert p.prices.tolist() == [[1.7, 1.9, 1.95], [1.8, 1.81, 1.85]]


def test_read_panel_coverage_error(tmp_path):
    f = write(tmp_path / "p.csv", "station_id,date,price\n"
              "A,2023-01-01,1.8\nB,2023-01-01,1.7\nB,2023-01-02,1.9\n")
    with pytest.raises(CoverageError) as info:
        dataio.read_price_panel(f)
    assert info.value.missing == [("A", "2023-01-02")]
    assert "(A, 2023-01-02)" in str(info.value)


@pytest.mark.parametrize("body, needle", [
    ("station,date,price\nA,2023-01-01,1\n", "station_id,date,price"),
    ("", "station_id,date,price"),
    ("station_id,date,price\nA,2023-01-01,abc\n", ":2:"),
    ("station_id,date,price\nA,2023-01-01,1\nA,01/02/2023,1\n", ":3:"),
    ("station_id,date,price\nA,2023-01-01,1,9\n", ":2:"),
    ("station_id,date,price\nA,2023-01-01,1\nA,2023-01-01,2\n", "duplicate"),
    ("station_id,date,price\nA,2023-01-01,nan\n", "finite"),
])
def test_read_panel_format_errors(tmp_path, body, needle):
    with pytest.raises(FormatError, match=needle):
        dataio.read_price_panel(write(tmp_path / "p.csv", body))


@settings(max_examples=30, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(st.integers(1, 5), st.integers(2, 6), st.integers(0, 10_000))
def test_panel_round_trip(tmp_path, m, t, seed):
    rng = np.random.default_rng(seed)
    p = PricePanel([f"st{i}" for i in range(m)], [f"2024-02-{d + 1:02d}" for d in range(t)],
                   rng.uniform(1.5, 2.2, (m, t)))
    dataio.write_price_panel(p, tmp_path / "rt.csv")
    assert dataio.read_price_panel(tmp_path / "rt.csv") == p


# -- initial state ------------------------------------------------------------

def test_initial_state_formats(tmp_path):
    assert dataio.read_initial_state(write(tmp_path / "a.csv", "price\n1.8\n1.9\n")) == \
        MarketState([1.8, 1.9])
    assert dataio.read_initial_state(write(tmp_path / "b.csv", "agent,price\n0,1.8\n1,2\n")) == \
        MarketState([1.8, 2.0])
    panel = write(tmp_path / "c.csv", "station_id,date,price\nA,2023-01-02,9\nA,2023-01-01,1.8\n"
                  "B,2023-01-01,1.6\nB,2023-01-02,9\n")
    assert dataio.read_initial_state(panel) == MarketState([1.8, 1.6])
    with pytest.raises(FormatError):
        dataio.read_initial_state(write(tmp_path / "d.csv", "value\n1\n"))
    with pytest.raises(FormatError, match=":3:"):
        dataio.read_initial_state(write(tmp_path / "e.csv", "price\n1\nx\n"))
    s = MarketState([1.0 / 3, 2.0])
    dataio.write_initial_state(s, tmp_path / "f.csv")
    assert dataio.read_initial_state(tmp_path / "f.csv") == s


# -- configuration ------------------------------------------------------------

def base_config(**extra):
    doc = {"clusters": [{"alpha": 3, "beta": 1, "gamma": 5, "delta": 1, "count": 4}],
           "sigmas": 0.027}
    doc.update(extra)
    return doc


def test_config_single_cluster():
    pop, st_ = dataio.parse_config(base_config())
    assert pop.m == 4 and pop.clusters[0] == ClusterParams(3, 1, 5, 1)
    assert np.all(pop.sigmas == 0.027)
    assert st_.root_tol == 1e-12 and st_.fixed_point_tol == 1e-10 and st_.days is None


def test_config_figure3(tmp_path):
    doc = {"clusters": [{"alpha": c.alpha, "beta": c.beta, "gamma": c.gamma, "delta": c.delta,
                         "count": n} for c, n in zip(FIG3_PARAMS, FIG3_COUNTS)],
           "sigmas": 0.027, "days": 77, "seed": 3,
           "tolerances": {"root_tol": 1e-13, "fixed_point_tol": 1e-9}}
    (tmp_path / "cfg.json").write_text(json.dumps(doc))
    pop, st_ = dataio.read_config(tmp_path / "cfg.json")
    assert pop.m == 194 and pop.counts == [19, 79, 96] and pop.k == 3
    assert (st_.days, st_.seed, st_.root_tol, st_.fixed_point_tol) == (77, 3, 1e-13, 1e-9)


@pytest.mark.parametrize("doc, field", [
    (base_config(extra=1), "extra"),
    ({"clusters": [{"alpha": 3, "beta": 1, "gamma": 5, "delta": 1, "count": 4, "x": 0}],
      "sigmas": 0.1}, "clusters[0]"),
    ({"clusters": [{"alpha": 3, "beta": 1, "gamma": 5, "delta": 0, "count": 4}],
      "sigmas": 0.1}, "delta"),
    ({"clusters": [{"alpha": 3, "beta": 1, "gamma": 0, "delta": 0, "count": 4}],
      "sigmas": 0.1}, "degenerate"),
    ({"clusters": [{"alpha": -3, "beta": 1, "gamma": 5, "delta": 1, "count": 4}],
      "sigmas": 0.1}, "alpha"),
    ({"clusters": [{"alpha": 3, "beta": 1, "gamma": 5, "delta": 1, "count": 1}],
      "sigmas": 0.1}, "counts"),
    ({"clusters": [{"alpha": 3, "beta": 1, "gamma": 5, "delta": 1}], "sigmas": 0.1}, "count"),
    (base_config(sigmas=[0.1, 0.1]), "sigmas"),
    (base_config(sigmas=-1), "sigmas"),
    (base_config(sigmas="0.1"), "sigmas"),
    (base_config(tolerances={"root": 1}), "tolerances"),
    (base_config(days=0), "days"),
    ({"sigmas": 0.1}, "clusters"),
    ([], "config"),
])
def test_config_rejections(doc, field):
    with pytest.raises(ValidationError, match=field.replace("[", r"\[").replace("]", r"\]")):
        dataio.parse_config(doc)


def test_config_degenerate_flag():
    doc = {"clusters": [{"alpha": 3, "beta": 1, "gamma": 0, "delta": 0, "count": 3}],
           "sigmas": [0.1, 0.2, 0.3], "degenerate": True}
    pop, _ = dataio.parse_config(doc)
    assert pop.degenerate and pop.sigmas.tolist() == [0.1, 0.2, 0.3]


def test_config_round_trip(tmp_path):
    pop = Population.from_counts(FIG3_PARAMS, (2, 3, 1), [0.01, 0.02, 0.03, 0.04, 0.05, 0.06])
    settings_ = dataio.SolverSettings(days=5, seed=2)
    dataio.write_config(pop, tmp_path / "c.json", settings_)
    pop2, s2 = dataio.read_config(tmp_path / "c.json")
    assert pop2 == pop and s2 == settings_
    with pytest.raises(FormatError):
        dataio.read_config(write(tmp_path / "bad.json", "{not json"))


# -- results ------------------------------------------------------------------

def small_pop():
    return Population.from_counts([ClusterParams(3, 1, 5, 1)], [2], 0.05)


def test_trajectory_csv_shape_and_round_trip(tmp_path):
    traj = simulate(small_pop(), MarketState([1.7, 2.1]), 2)
    dataio.write_results(traj, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "day,mean,p_1,p_2" and len(lines) == 4
    assert lines[1] == "0,1.900000,1.700000,2.100000"
    back = dataio.read_trajectory(tmp_path / "t.csv")
    assert np.max(np.abs(back.means - traj.means)) <= 1e-6


def test_json_results(tmp_path):
    pop = small_pop()
    res = solve_equilibrium(pop, MarketState([1.7, 2.1]))
    dataio.write_results(res, tmp_path / "e.json")
    doc = json.loads((tmp_path / "e.json").read_text())
    assert {"prices", "mean", "residual", "bound_L", "iterations"} <= set(doc)
    assert doc["bound_L"] == contraction_bound(pop).bound_L
    a = kmeans(np.arange(12.0).reshape(6, 2), 2, station_ids=list("abcdef"))
    dataio.write_results(a, tmp_path / "k.json")
    back = dataio.read_assignment(tmp_path / "k.json")
    assert np.array_equal(back.labels, a.labels) and back.station_ids == a.station_ids
    with pytest.raises(TypeError):
        dataio.write_results(object(), tmp_path / "x.json")


def test_writes_are_deterministic(tmp_path):
    pop = small_pop()
    res = solve_equilibrium(pop, MarketState([1.7, 2.1]))
    dataio.write_results(res, tmp_path / "a.json")
    dataio.write_results(solve_equilibrium(pop, MarketState([1.7, 2.1])), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_write_failure_names_path(tmp_path):
    target = tmp_path / "missing" / "t.csv"
    with pytest.raises(OSError, match="missing"):
        dataio.write_results(simulate(small_pop(), MarketState([1, 2]), 1), target)
    assert not target.parent.exists()


def test_sigmas_and_start_readers(tmp_path):
    write(tmp_path / "s.json", json.dumps({"fallback": 0.027, "sigmas": {"a": 0.1, "b": 0.2}}))
    ids, vals = dataio.read_sigmas(tmp_path / "s.json")
    assert ids == ["a", "b"] and vals.tolist() == [0.1, 0.2]
    write(tmp_path / "bad.json", json.dumps({"sigmas": {"a": -1}}))
    with pytest.raises(ValidationError):
        dataio.read_sigmas(tmp_path / "bad.json")
    write(tmp_path / "start.json", json.dumps({"params": [
        {"alpha": 1, "beta": 2, "gamma": 3, "delta": 4}]}))
    assert dataio.read_param_start(tmp_path / "start.json").tolist() == [1, 2, 3, 4]
    write(tmp_path / "cfg.json", json.dumps(base_config()))
    assert dataio.read_param_start(tmp_path / "cfg.json").tolist() == [3, 1, 5, 1]
    with pytest.raises(FormatError):
        dataio.read_param_start(write(tmp_path / "no.json", "{}"))
