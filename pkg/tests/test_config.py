"""JSON run-configuration parsing and the procedure mini-language."""

import json

import pytest

from randomkit.config import (
    BRT_NORMALIZATIONS,
    DEFAULT_NSIM,
    METRIC_IDS,
    load_run_config,
    parse_proc,
    parse_run_config,
    parse_weights,
)
from randomkit.core import ConfigError, Kind


def minimal_doc(**overrides):
    doc = {"n": 12, "procedures": ["CRD", "PBD:b=2"]}
    doc.update(overrides)
    return doc


def test_minimal_config_defaults():
    rc = parse_run_config(minimal_doc())
    assert rc.n == 12
    assert rc.nsim == DEFAULT_NSIM
    assert rc.seed is None and rc.threads is None
    assert rc.metrics == METRIC_IDS
    assert rc.brt_normalization == "absolute"
    assert rc.output_dir is None and rc.emit_plots is False
    assert [p.kind for p in rc.procedures] == [Kind.CRD, Kind.PBD]
    # with no w given, procedures default to two arms 1:1
    assert rc.procedures[0].target.rho == (0.5, 0.5)
    # n is attached so fixed-allocation designs can be used directly
    assert parse_run_config(minimal_doc(procedures=["RAND"])).procedures[0].n == 12


def test_full_config_round():
    rc = parse_run_config(
        {
            "n": 40,
            "nsim": 500,
            "seed": 7,
            "threads": 2,
            "w": [4, 3, 2, 1],
            "metrics": ["fi", "brt", "fi"],
            "brt_normalization": "minmax",
            "output_dir": "out",
            "emit_plots": True,
            "procedures": ["CRD", {"kind": "DBCD", "params": {"gamma": 2}}],
        }
    )
    assert rc.nsim == 500 and rc.seed == 7 and rc.threads == 2
    assert rc.metrics == ("fi", "brt")  # deduplicated, order kept
    assert rc.brt_normalization == "minmax"
    assert rc.output_dir == "out" and rc.emit_plots is True
    assert rc.procedures[1].target.rho == (0.4, 0.3, 0.2, 0.1)


def test_procedure_mini_language():
    w11 = parse_weights([1, 1])
    p = parse_proc("BCDWIT:p=2/3,b=3", w11)
    assert p.kind is Kind.BCDWIT
    assert p.params["p"] == 2.0 / 3.0  # fraction strings parse exactly
    assert p.params["b"] == 3
    assert parse_proc("tbd", w11, n=8).kind is Kind.TMD  # alias, case-insensitive
    assert parse_proc({"proc": "EBCD:p=0.6"}, w11).params["p"] == 0.6


@pytest.mark.parametrize(
    "spec,fragment",
    [
        ("", "empty procedure kind"),
        ("XYZ", "unknown procedure kind"),
        ("EBCD:p", "malformed parameter"),
        ("EBCD:p=", "malformed parameter"),
        ("EBCD:p=2/3,p=0.7", "duplicate parameter"),
        ("EBCD:p=abc", "cannot parse number"),
        ("EBCD:p=1/0", "cannot parse number"),
        ({"kind": "EBCD", "params": {"p": True}}, "must be numbers"),
        ({"kind": "EBCD", "params": []}, "name: value"),
        ({"proc": "CRD", "kind": "CRD"}, "cannot be combined"),
        ({"w": [1, 1]}, "missing procedure kind"),
        ({"kind": "CRD", "extra": 1}, "unknown fields"),
        (42, "string or an object"),
    ],
)
def test_bad_procedure_specs(spec, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_proc(spec, parse_weights([1, 1]), n=8)


def test_parameter_domains_are_enforced_with_paths():
    with pytest.raises(ConfigError, match="proc"):
        parse_proc("EBCD:p=0.4", parse_weights([1, 1]))
    with pytest.raises(ConfigError, match=r"procedures\[1\]"):
        parse_run_config(minimal_doc(procedures=["CRD", "PBD:b=0"]))


def test_weights_validation():
    assert parse_weights([2, 1]).rho == (2 / 3, 1 / 3)
    for bad in ([], [1], [1, 0], [1, -2], "11"):
        with pytest.raises(ConfigError):
            parse_weights(bad)
    with pytest.raises(ConfigError, match=r"w\[1\]"):
        parse_weights([1, "x"])


def test_unknown_and_missing_fields():
    with pytest.raises(ConfigError, match="unknown fields"):
        parse_run_config(minimal_doc(simulations=10))
    with pytest.raises(ConfigError, match="n: required"):
        parse_run_config({"procedures": ["CRD"]})
    with pytest.raises(ConfigError, match="procedures: required"):
        parse_run_config({"n": 10})
    with pytest.raises(ConfigError, match="top level"):
        parse_run_config(["CRD"])


@pytest.mark.parametrize(
    "overrides,fragment",
    [
        ({"n": 0}, "n: must be"),
        ({"n": "40"}, "n: must be"),
        ({"nsim": 0}, "nsim"),
        ({"seed": -1}, "seed"),
        ({"threads": 0}, "threads"),
        ({"procedures": []}, "non-empty array"),
        ({"procedures": "CRD"}, "non-empty array"),
        ({"metrics": []}, "must not be empty"),
        ({"metrics": ["fi", "speed"]}, r"metrics\[1\]"),
        ({"metrics": "fi"}, "array of metric names"),
        ({"brt_normalization": "softmax"}, "brt_normalization"),
        ({"output_dir": ""}, "output_dir"),
        ({"emit_plots": "yes"}, "emit_plots"),
    ],
)
def test_invalid_scalar_fields(overrides, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_run_config(minimal_doc(**overrides))


def test_procedures_must_share_one_target():
    doc = minimal_doc(
        w=[1, 1],
        procedures=["CRD", {"kind": "CRD", "w": [2, 1]}],
    )
    with pytest.raises(ConfigError, match=r"procedures\[1\]\.w.*same allocation"):
        parse_run_config(doc)
    # equal targets spelled differently are fine
    ok = minimal_doc(w=[1, 1], procedures=["CRD", {"kind": "CRD", "w": [3, 3]}])
    assert parse_run_config(ok).procedures[1].target.rho == (0.5, 0.5)


def test_load_run_config_from_disk(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps(minimal_doc(seed=1)))
    rc = load_run_config(str(path))
    assert rc.seed == 1
    path.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_run_config(str(path))


def test_metric_ids_cover_brt_normalizations():
    assert "brt" in METRIC_IDS and "arp" in METRIC_IDS
    assert BRT_NORMALIZATIONS == ("absolute", "minmax")
