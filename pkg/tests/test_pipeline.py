import json

import numpy as np
import pytest

from cosparse_nilm.analysis_train import Hyperparams
from cosparse_nilm.errors import InvalidArgument, ParseError, SchemaError
from cosparse_nilm.pipeline import (
    apply,
    artifacts_to_dict,
    fit,
    load_artifacts,
    read_estimate_csv,
    save_artifacts,
    write_estimate_csv,
    write_traces_csv,
)
from cosparse_nilm.synthesis import SynthControls


@pytest.fixture
def data(rng):
    return [np.abs(rng.normal(size=(8, 5))) for _ in range(2)]


@pytest.mark.parametrize("model", ["simple", "distinctive", "disaggregating", "synthesis"])
def test_artifact_roundtrip(model, data, tmp_path):
    h = Hyperparams(max_outer=5)
    art = fit(model, data, ["a", "b"], h, SynthControls(max_outer=3) if model == "synthesis" else None)
    path = save_artifacts(art, tmp_path / "art.json")
    back = load_artifacts(path)
    assert back.model == model and back.appliances == ["a", "b"] and back.hyper == h
    for p, q in zip(art.dicts, back.dicts):
        m1 = getattr(p, "op", getattr(p, "basis", None))
        m2 = getattr(q, "op", getattr(q, "basis", None))
        np.testing.assert_array_equal(m1, m2)
    x = sum(data)
    r1, r2 = apply(art, x), apply(back, x)
    for e1, e2 in zip(r1.estimates, r2.estimates):
        np.testing.assert_array_equal(e1, e2)
    write_traces_csv(art, tmp_path / "traces.csv")
    assert (tmp_path / "traces.csv").read_text().startswith("appliance,iteration")


def test_artifact_shape(data):
    doc = artifacts_to_dict(fit("simple", data, ["a", "b"], Hyperparams(max_outer=3)))
    assert [(d["rows"], d["cols"]) for d in doc["dictionaries"]] == [(3, 8), (3, 8)]
    assert doc["format"] == "cosparse-nilm/train-artifacts" and doc["version"] == 1


def test_unknown_model(data):
    with pytest.raises(InvalidArgument, match="valid models"):
        fit("ksvd", data, ["a", "b"])


def test_corrupt_artifacts(tmp_path):
    p = tmp_path / "a.json"
    p.write_text('{"format": "cosparse-nilm/train-artifacts",\n "version": 1,\n "model": ')
    with pytest.raises(ParseError) as info:
        load_artifacts(p)
    assert info.value.line == 3
    p.write_text(json.dumps({"format": "other"}))
    with pytest.raises(SchemaError):
        load_artifacts(p)


def test_estimate_csv_roundtrip(rng, tmp_path):
    v = rng.normal(size=(5, 2)) * 1e3
    write_estimate_csv(tmp_path / "e.csv", v, ["2020-01-01", "2020-01-02"])
    back, labels = read_estimate_csv(tmp_path / "e.csv")
    np.testing.assert_array_equal(back, v)
    assert labels == ["2020-01-01", "2020-01-02"]
    (tmp_path / "bad.csv").write_text("slot,a\n0,1\n1,x\n")
    with pytest.raises(ParseError):
        read_estimate_csv(tmp_path / "bad.csv")
