import json

import pytest

from memcapneuron import ModelParams
from memcapneuron.experiments import (
    REGISTRY,
    ExperimentSpec,
    OverrideError,
    UnknownExperiment,
    list_experiments,
    match_table,
    run_experiment,
)
from memcapneuron.tables import TYPE_I_ROWS, TYPE_II_ROWS

EXPECTED = {
    "fig3-transients", "fig4-phase-diagram", "fig4-frequency-scan", "fig4-spectrum-scan", "fig5-sync",
    "fig6-bursting-kernel", "fig6-bursting-threshold", "figA7-switching", "tableA1-jacobians",
    "tableA2-jacobians", "figA9-locking",
}


def test_registry_complete():
    assert set(REGISTRY) == EXPECTED
    names = [n for n, _ in list_experiments()]
    assert names == list(REGISTRY)
    for e in REGISTRY.values():
        assert e.anchor and e.description and e.settings


def test_unknown_experiment():
    with pytest.raises(UnknownExperiment, match="registered"):
        run_experiment("fig99")


def test_unknown_override_lists_valid_keys():
    with pytest.raises(OverrideError, match="coord_tol"):
        run_experiment("tableA1-jacobians", overrides={"nope": 1})


def test_bad_override_value():
    with pytest.raises(OverrideError, match="rel_tol"):
        run_experiment("tableA1-jacobians", overrides={"rel_tol": "abc"})


def test_table_a1(tmp_path):
    rep = run_experiment("tableA1-jacobians", out_dir=tmp_path)
    assert rep.passed and len(rep.checks) == len(TYPE_I_ROWS) == 15
    assert all(c.anchor.startswith("tableA1-jacobians: ") for c in rep.checks)
    data = json.loads((tmp_path / "tableA1-jacobians" / "report.json").read_text())
    assert data["passed"] is True
    assert data["params"]["d"] == 8.0 and data["params"]["r"] == 1e-3
    assert sorted(rep.artifacts) == ["fixed_points.csv", "reference.csv", "report.json"]
    head = (tmp_path / "tableA1-jacobians" / "reference.csv").read_text().splitlines()[:3]
    assert head[0] == "V,x,q,det,Tr,Delta,Type"
    assert head[2].startswith("4.0,0.3253,0.5207,")


def test_table_a2():
    rep = run_experiment("tableA2-jacobians")
    assert rep.passed and len(rep.checks) == len(TYPE_II_ROWS)
    assert rep.artifacts == []


def test_string_overrides_are_coerced():
    rep = run_experiment("tableA1-jacobians", overrides={"rel_tol": "1e-12"})
    assert rep.settings["rel_tol"] == 1e-12
    # an impossible tolerance makes the embedded checks fail
    assert not rep.passed


def test_match_table_direct():
    matched, by_V = match_table(ModelParams(), TYPE_I_ROWS)
    assert len(matched) == 15
    assert sorted(by_V) == sorted({row[0] for row in TYPE_I_ROWS})
    worst = max(abs(f.det - row[3]) / abs(row[3]) for row, f, _ in matched)
    assert worst < 5e-3
    assert max(dist for *_, dist in matched) < 1e-3


def test_table_experiment_pins_memristance_kind():
    spec = ExperimentSpec("tableA2-jacobians", params=ModelParams(memristance="type1"))
    rep = run_experiment(spec)
    assert rep.params["memristance"] == "type2" and rep.passed


def test_switching(tmp_path):
    rep = run_experiment("figA7-switching", out_dir=tmp_path, formats=("csv", "json"))
    assert rep.passed
    seg = rep.metrics["spikes_per_segment"]
    assert seg[0] == 0 and seg[2] > 100 and seg[4] == 0
    files = sorted(p.name for p in (tmp_path / "figA7-switching").iterdir())
    assert files == ["report.json", "trace.csv"]


def test_transients_and_determinism(tmp_path):
    a = run_experiment("fig3-transients", out_dir=tmp_path / "a")
    b = run_experiment("fig3-transients", out_dir=tmp_path / "b")
    assert a.passed and b.passed
    da, db = tmp_path / "a" / "fig3-transients", tmp_path / "b" / "fig3-transients"
    names = sorted(p.name for p in da.iterdir())
    assert any(n.endswith(".svg") for n in names) and any(n.endswith(".csv") for n in names)
    for n in names:
        assert (da / n).read_bytes() == (db / n).read_bytes(), n


def test_kernel_bursting():
    rep = run_experiment("fig6-bursting-kernel")
    by = {c.name: c for c in rep.checks}
    assert by["bursts (>= min_spikes each)"].passed
    assert by["bursts (>= min_spikes each)"].measured >= 3
    assert by["quiescent gap / intra-burst interval (minimum)"].passed
    assert by["series resistance stays >= r_min"].passed
    # intra-burst intervals stretch towards the end of each burst; the median CV
    # sits near 0.15, above the 0.1 target (see notes)
    cv = by["intra-burst inter-spike CV (median over bursts)"]
    assert 0.1 < cv.measured < 0.2 and not cv.passed


def test_threshold_bursting_outcome():
    # documented outcome: the current settles onto the threshold and spiking stops
    rep = run_experiment("fig6-bursting-threshold")
    by = {c.name: c for c in rep.checks}
    assert by["bursts (>= min_spikes each)"].measured < 3
    assert rep.metrics["fraction_pinned_at_threshold"] > 0.5
    assert by["series resistance stays >= r_min"].passed
