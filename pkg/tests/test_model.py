import dataclasses
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from detpomdp.model import (
    ERROR,
    INF,
    PRESETS,
    WARNING,
    ModelError,
    ModelSyntaxError,
    ModelValidationError,
    ModelWarning,
    TankParams,
    gen_random,
    gen_tank,
    gen_tight_bound,
    load_model,
    parse_model,
    save_model,
    serialize_model,
    validate_model,
)


def _doc(model):
    return json.loads(serialize_model(model))


def _reparse(doc):
    return parse_model(json.dumps(doc))


def test_tight_bound_model_is_valid():
    report = validate_model(gen_tight_bound(3))
    assert report.ok and report.issues == []


def test_out_of_range_dynamics_index_reported_at_path():
    m = gen_tight_bound(3)
    dyn = ((3, 1),) + m.dynamics[0][1:]
    report = validate_model(dataclasses.replace(m, dynamics=(dyn,)))
    assert not report.ok
    assert [i[1] for i in report.errors] == ["dynamics[0][0][0]"]


def test_negative_denominator_cost_is_flagged():
    doc = _doc(gen_tight_bound(3))
    doc["cost"][0][1][0] = "1/-2"
    with pytest.raises(ModelValidationError) as exc:
        _reparse(doc)
    errors = exc.value.report.errors
    assert len(errors) == 1 and errors[0][1] == "cost[0][1][0]"


def test_round_trip_and_sizes():
    m = gen_tight_bound(3)
    back = parse_model(serialize_model(m))
    assert back == m
    assert (back.n_states, back.n_controls, back.n_observations) == (3, 2, 2)


def test_missing_field_is_named():
    doc = _doc(gen_tight_bound(3))
    del doc["horizon"]
    with pytest.raises(ModelError, match="horizon"):
        _reparse(doc)


def test_belief_rational_is_exact():
    doc = _doc(gen_tight_bound(3))
    doc["initial_belief"] = {"x1": "1/3", "x2": "1/3", "x3": "1/3"}
    b = _reparse(doc).initial_belief
    assert b[0] == Fraction(1, 3) and isinstance(b[0], Fraction)


def test_float_belief_rejected():
    doc = _doc(gen_tight_bound(3))
    doc["initial_belief"] = {"x1": 0.5, "x2": 0.5}
    with pytest.raises(ModelError, match="exact rational"):
        _reparse(doc)


def test_syntax_error_has_position():
    text = serialize_model(gen_tight_bound(3)).replace('"horizon": 6', '"horizon" 6')
    with pytest.raises(ModelSyntaxError) as exc:
        parse_model(text)
    assert exc.value.line > 1 and exc.value.column > 1


def test_stationary_flag_emitted_and_checked():
    doc = _doc(gen_tight_bound(3))
    assert doc["stationary"] is True and len(doc["dynamics"]) == 1
    doc["stationary"] = False
    with pytest.raises(ModelError, match="stationary"):
        _reparse(doc)


def test_infinite_cost_token():
    m = gen_tight_bound(3)
    cost = ((INF, Fraction(0)),) + m.cost[0][1:]
    m = dataclasses.replace(m, cost=(cost,))
    doc = _doc(m)
    assert doc["cost"][0][0][0] == "inf"
    assert parse_model(serialize_model(m)).cost[0][0][0] == INF


def test_minus_inf_cost_invalid():
    doc = _doc(gen_tight_bound(3))
    doc["final_cost"][0] = "-inf"
    with pytest.raises(ModelValidationError):
        _reparse(doc)


def test_empty_admissible_set_is_a_warning():
    m = gen_tight_bound(3)
    adm = ((),) + m.admissible[0][1:]
    report = validate_model(dataclasses.replace(m, admissible=(adm,)))
    assert report.ok
    assert [i[0] for i in report.issues] == [WARNING]


def test_wrong_slice_count():
    m = gen_tight_bound(3)
    report = validate_model(dataclasses.replace(m, obs=m.obs * 2))
    assert any(sev == ERROR and path == "obs" for sev, path, _ in report.issues)


def test_file_round_trip(tmp_path):
    m = gen_random(4, (3, 2, 2, 3), inf_cost_rate=0.2, stationary=False)
    path = tmp_path / "m.json"
    save_model(m, path)
    assert load_model(path) == m


def test_tight_bound_dynamics_and_observations():
    m = gen_tight_bound(3)
    assert [m.f(0, x, 1) for x in range(3)] == [1, 2, 0]
    assert [m.f(0, x, 0) for x in range(3)] == [0, 1, 2]
    emitting = [(y, u) for y in range(3) for u in range(2) if m.h(0, y, u) == 1]
    assert emitting == [(2, 0)]


def test_tight_bound_five_observes_at_last_state():
    m = gen_tight_bound(5)
    assert [(y, u) for y in range(5) for u in range(2) if m.h(0, y, u) == 1] == [(4, 0)]
    assert m.horizon == 10 and m.full_admissibility


@pytest.mark.parametrize("n", [3, 4, 7])
def test_rotation_is_a_single_cycle(n):
    m = gen_tight_bound(n)
    x, orbit = 0, set()
    while x not in orbit:
        orbit.add(x)
        x = m.f(0, x, 1)
    assert len(orbit) == n


def test_tight_bound_needs_three_states():
    with pytest.raises(ValueError):
        gen_tight_bound(2)


def test_tank_instance_one_sizes():
    m = gen_tank(PRESETS["paper-1"])
    assert (m.n_states, m.n_controls, m.n_observations, m.horizon) == (301, 10, 17, 100)
    assert m.observations[0] == "0"


def test_tank_instance_two_observation_of_290():
    with pytest.warns(ModelWarning):
        m = gen_tank(PRESETS["paper-2"])
    # Eight thresholds plus a floor for levels 0 (below the lowest threshold 1).
    assert m.n_observations == 9 and m.observations[-1] == "floor"
    x = m.state_index(290)
    assert m.observations[m.obs0[x]] == "251"
    assert m.observations[m.obs0[0]] == "floor"


def test_tank_dynamics_admissibility_and_cost():
    params = TankParams(states=tuple(range(21)), controls=(0, 1, 2), thresholds=(0, 10, 20),
                        horizon=4, prices=(1, 2, 3, 4))
    m = gen_tank(params)
    assert all(0 in m.admissible_at(0)[x] for x in range(21))
    assert m.admissible_at(0)[1] == (0, 1)
    assert m.f(0, 15, 2) == 13
    assert m.h(0, 15, 0) == 1 and m.obs0[9] == 0
    assert m.cost_at(2)[5][2] == -6
    assert validate_model(m).ok


def test_tank_rejects_degenerate_controls():
    with pytest.raises(ValueError):
        gen_tank(TankParams(states=(0, 1), controls=(5,), thresholds=(0,), horizon=2))


def test_random_is_deterministic():
    kw = dict(affine=True, inf_cost_rate=0.1)
    assert gen_random(1, (4, 2, 3, 3), **kw) == gen_random(1, (4, 2, 3, 3), **kw)
    assert serialize_model(gen_random(1, (4, 2, 3, 3))) == serialize_model(gen_random(1, (4, 2, 3, 3)))


def test_random_affine_uses_integer_labels_and_records_structure():
    m = gen_random(2, (5, 3, 2, 2), affine=True)
    assert m.states == tuple(str(i) for i in range(5))
    assert m.structure.kind == "affine"
    for x in range(5):
        for u in m.admissible_at(0)[x]:
            assert int(m.states[m.f(0, x, u)]) == x + m.structure.g[0][u]


def test_random_degenerate_sizes():
    m = gen_random(0, (1, 1, 1, 1))
    assert validate_model(m).ok and m.n_states == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 5), st.integers(1, 3), st.integers(1, 3), st.integers(1, 4),
       st.sampled_from(["plain", "affine", "product"]), st.booleans(), st.booleans())
def test_round_trip_random(seed, nx, nu, no, T, kind, stationary, full):
    m = gen_random(seed, (nx, nu, no, T), affine=kind == "affine", product=kind == "product",
                   stationary=stationary, full_admissibility=full, inf_cost_rate=0.2)
    assert validate_model(m).ok
    assert parse_model(serialize_model(m)) == m
