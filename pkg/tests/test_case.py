import json

import pytest

from mgsched import packaged_case
from mgsched.case import (
    ParseError, SchemaError, ValidationError, load_case, loads_case,
    dumps_case, per_unit_normalize, uncertainty_of, validate_case,
)


def _desk():
    return load_case(str(packaged_case()))


def test_desk_case_loads_and_shapes():
    case = _desk()
    assert len(case.nodes) == 33
    assert len(case.lines) == 32
    assert case.horizon.periods == 24
    assert len(case.active_dgs()) == 3
    assert len(case.active_batteries()) == 2
    assert len(case.active_renewables()) == 2
    # dense slots: one of each device per non-root node
    assert len(case.dgs) == len(case.non_root_nodes) == 32
    assert sorted(case.res_index().values()) == [0, 1]


def test_per_unit_conversion():
    case = _desk()
    doc = json.loads(open(str(packaged_case())).read())
    b = case.base_mva
    g0 = doc["dg"][0]
    g = next(d for d in case.dgs if d.node == g0["node"])
    assert g.gp_max == pytest.approx(g0["gp_max"] / b, rel=1e-12)
    assert g.c_energy == pytest.approx(g0["c_energy"] * b, rel=1e-12)
    assert case.exchange.price[0] == pytest.approx(
        doc["exchange"]["price"][0] * b, rel=1e-12)


def test_roundtrip_exact():
    case = _desk()
    again = loads_case(dumps_case(case))
    assert again == case
    assert uncertainty_of(again) == uncertainty_of(case)


def test_rebase_roundtrip():
    case = _desk()
    re2 = per_unit_normalize(case, 2.5)
    assert re2.base_mva == 2.5
    # MW quantities invariant under rebasing
    assert re2.dgs[3].gp_max * 2.5 == pytest.approx(
        case.dgs[3].gp_max * case.base_mva, rel=1e-12)
    back = per_unit_normalize(re2, case.base_mva)
    for a, b in zip(back.dgs, case.dgs):
        assert a.gp_max == pytest.approx(b.gp_max, rel=1e-12)
    assert back.exchange.price[5] == pytest.approx(
        case.exchange.price[5], rel=1e-12)
    assert back.lines[7].r == pytest.approx(case.lines[7].r, rel=1e-12)


def test_malformed_json_raises_parse_error():
    with pytest.raises(ParseError):
        loads_case("{not json")
    with pytest.raises(ParseError):
        load_case("/nonexistent/file.json")


def test_missing_section_raises_schema_error():
    doc = json.loads(dumps_case(_desk()))
    del doc["freq"]
    with pytest.raises(SchemaError):
        loads_case(json.dumps(doc))


def test_broken_radiality_is_diagnosed():
    doc = json.loads(dumps_case(_desk()))
    doc["lines"][5]["to"] = doc["lines"][4]["to"]  # create a cycle + orphan
    with pytest.raises(ValidationError) as exc:
        loads_case(json.dumps(doc))
    assert any("spanning tree" in m for m in exc.value.diagnostics)


def test_validation_collects_multiple_diagnostics():
    doc = json.loads(dumps_case(_desk()))
    doc["dg"][0]["gp_min"] = doc["dg"][0]["gp_max"] + 1.0
    doc["bess"][0]["e0"] = doc["bess"][0]["e_max"] * 10
    doc["uncertainty"]["eps_g"] = 0.9
    with pytest.raises(ValidationError) as exc:
        loads_case(json.dumps(doc))
    msgs = exc.value.diagnostics
    assert any("gp_min > gp_max" in m for m in msgs)
    assert any("E0 outside" in m for m in msgs)
    assert any("eps_g" in m for m in msgs)


def test_validate_case_clean_on_desk():
    case = _desk()
    assert validate_case(case, uncertainty_of(case)) == []
