"""Rate-condition validators and the SpinModel invariants."""

import numpy as np
import pytest

from spinflux_cli.engines.builtins import leroux_model
from spinflux_cli.engines.model import (
    SpinModel,
    check_irreducibility,
    validate_all,
    validate_conservation,
    validate_rate_cycle,
    validate_reflection,
    validate_stationarity,
)
from spinflux_cli.errors import SchemaError, SizeExceeded
from spinflux_cli.model_io import model_document, parse_model


def _with_rates(document, extra=(), override=None):
    import json

    document = json.loads(json.dumps(document))
    for entry in document["rates"]:
        key = (tuple(entry["from"]), tuple(entry["to"]))
        if override and key in override:
            entry["rate"] = override[key]
    document["rates"].extend(extra)
    return parse_model(json.dumps(document))


class TestSpinModel:
    def test_base_measure_must_sum_to_one(self):
        with pytest.raises(SchemaError) as err:
            SpinModel(("a", "b", "c"), [[0], [1], [2]], [0.3, 0.3, 0.3], {})
        assert err.value.field == "base_measure"

    def test_negative_rate_rejected(self):
        with pytest.raises(SchemaError):
            SpinModel(("a", "b", "c"), [[0], [1], [2]], [0.2, 0.3, 0.5], {(0, 1): (((1, 0), -1.0),)})

    def test_xi_must_be_independent_of_constant(self):
        with pytest.raises(SchemaError) as err:
            SpinModel(("a", "b", "c"), [[1], [1], [1]], [0.2, 0.3, 0.5], {})
        assert err.value.field == "xi"

    def test_leroux_conserved_quantities_have_full_rank(self, leroux):
        augmented = np.column_stack([leroux.xi, np.ones(3)])
        assert np.linalg.matrix_rank(augmented) == 3

    def test_zero_rates_are_dropped(self):
        model = SpinModel(("a", "b", "c"), [[0], [1], [2]], [0.2, 0.3, 0.5], {(0, 1): (((1, 0), 0.0),)})
        assert model.rates == {}
        assert len(model.transitions["rate"]) == 0

    def test_total_rates(self, leroux_ab):
        R = leroux_ab.total_rates
        i = leroux_ab.index
        assert R[i("-1"), i("1")] == pytest.approx(3.0)
        assert R[i("1"), i("-1")] == pytest.approx(1.0)
        assert R[i("0"), i("0")] == 0.0


class TestConservation:
    def test_leroux_passes(self, leroux_ab):
        assert validate_conservation(leroux_ab).passed

    def test_bricklayer_passes(self, bricklayer_canonical):
        assert validate_conservation(bricklayer_canonical).passed

    def test_injected_transition_is_witnessed(self, leroux_ab):
        broken = _with_rates(model_document(leroux_ab),
                             extra=[{"from": ["1", "-1"], "to": ["0", "-1"], "rate": 1.0}])
        report = validate_conservation(broken)
        assert not report.passed
        assert len(report.witnesses) == 1
        source, target, rate, delta = report.witnesses[0]
        assert source == ["1", "-1"]
        assert target == ["0", "-1"]
        assert rate == 1.0
        assert delta == [-1, 1]


class TestStationarity:
    def test_leroux_uniform_measure(self, leroux_ab):
        assert validate_stationarity(leroux_ab).passed

    def test_bricklayer_r_not_s_fails(self, bricklayer):
        broken = _with_rates(model_document(bricklayer), override={(("0-", "1+"), ("1-", "0+")): 2.0})
        report = validate_stationarity(broken)
        assert not report.passed

    def test_single_law_merges_are_balanced(self, one_law):
        assert validate_stationarity(one_law).passed
        assert validate_conservation(one_law).passed

    def test_all_rates_zero(self):
        model = SpinModel(("a", "b", "c"), [[0], [1], [2]], [0.2, 0.3, 0.5], {})
        assert validate_stationarity(model).passed


class TestRateCycle:
    def test_leroux(self):
        model = leroux_model(1.0, 2.0)
        assert validate_rate_cycle(model).passed
        R = model.total_rates
        i = model.index
        lhs = R[i("1"), i("0")] + R[i("0"), i("-1")] + R[i("-1"), i("1")]
        rhs = R[i("1"), i("-1")] + R[i("-1"), i("0")] + R[i("0"), i("1")]
        assert lhs == pytest.approx(7.0)
        assert rhs == pytest.approx(7.0)

    def test_p_only_bricklayer_fails(self, broken_bricklayer):
        report = validate_rate_cycle(broken_bricklayer)
        assert not report.passed
        assert report.witnesses

    def test_symmetric_total_rates_pass(self, one_law):
        symmetric = SpinModel(one_law.states, one_law.xi, one_law.base_measure,
                              {(a, b): (((b, a), 1.0),) for a in range(3) for b in range(3) if a != b})
        assert np.allclose(symmetric.total_rates, symmetric.total_rates.T)
        assert validate_rate_cycle(symmetric).passed

    def test_asymmetric_swaps_pass(self, one_law, three_laws):
        assert validate_rate_cycle(one_law).passed
        assert validate_rate_cycle(three_laws).passed


class TestIrreducibility:
    @pytest.mark.parametrize("a", [0.0, 0.5, 1.0, 2.0])
    @pytest.mark.parametrize("b", [0.0, 0.5, 1.0, 2.0])
    @pytest.mark.parametrize("n_sites", [3, 4])
    def test_leroux_grid(self, a, b, n_sites):
        assert check_irreducibility(leroux_model(a, b), n_sites).passed

    def test_no_transitions_fails(self):
        report = check_irreducibility(leroux_model(0.0, 0.0, c=0.0), 3)
        assert not report.passed
        assert report.details["failing_classes"] > 0
        # all-equal configurations are singleton classes, trivially connected
        failing_totals = [w[0] for w in report.witnesses]
        assert [-3, 0] not in failing_totals
        assert [3, 0] not in failing_totals
        assert [0, 3] not in failing_totals

    def test_canonical_bricklayer_has_frozen_classes(self, bricklayer_canonical):
        assert not check_irreducibility(bricklayer_canonical, 4).passed

    def test_mixing_bricklayer_is_connected(self, bricklayer):
        assert check_irreducibility(bricklayer, 4).passed

    def test_three_laws(self, three_laws):
        report = check_irreducibility(three_laws, 4)
        assert report.passed
        assert report.details["n_sites"] == 4

    @pytest.mark.parametrize("n_sites", [3, 4, 5])
    def test_single_law_with_merges(self, one_law, n_sites):
        assert check_irreducibility(one_law, n_sites).passed

    def test_swaps_alone_split_equal_totals(self, one_law):
        swaps_only = SpinModel(one_law.states, one_law.xi, one_law.base_measure,
                               {(a, b): (((b, a), 1.0),) for a in range(3) for b in range(3) if a != b})
        report = check_irreducibility(swaps_only, 4)
        assert not report.passed
        assert report.details["failing_classes"] == 5
        # {a, c, b, b} and {b, b, b, b} share the total 4
        assert [4] in [w[0] for w in report.witnesses]

    def test_too_few_sites(self, leroux):
        with pytest.raises(SizeExceeded):
            check_irreducibility(leroux, 2)

    def test_enumeration_limit(self, bricklayer):
        with pytest.raises(SizeExceeded):
            check_irreducibility(bricklayer, 12)


class TestReflection:
    def test_builtins_are_reflection_symmetric(self, leroux_ab, bricklayer):
        assert validate_reflection(leroux_ab).passed
        assert validate_reflection(bricklayer).passed

    def test_undeclared_reflection_passes_with_note(self, three_laws):
        report = validate_reflection(three_laws)
        assert report.passed
        assert "note" in report.details


class TestOrderIndependence:
    def test_permuted_states_give_same_verdicts(self, leroux_ab, broken_bricklayer):
        for model, order in ((leroux_ab, [2, 0, 1]), (broken_bricklayer, [3, 1, 0, 2])):
            original = [r.passed for r in validate_all(model, n_sites=3)]
            permuted = [r.passed for r in validate_all(model.permuted(order), n_sites=3)]
            assert original == permuted

    def test_reports_serialise(self, leroux):
        for report in validate_all(leroux, n_sites=3):
            data = report.to_dict()
            assert data["passed"] is True
            assert data["condition"] in {"A", "B", "C", "D", "R"}
