import numpy as np
import pytest

from spinflux_cli.engines.builtins import (
    BRICKLAYER_CANONICAL,
    BRICKLAYER_MIXING,
    bricklayer_model,
    builtin_model,
    builtin_parameters,
    leroux_model,
)
from spinflux_cli.engines.model import (
    check_irreducibility,
    validate_all,
    validate_conservation,
    validate_rate_cycle,
    validate_stationarity,
)
from spinflux_cli.errors import ConstraintViolated, NegativeRate


def _rate(model, src, dst):
    i = model.index
    return model.rate(i(src[0]), i(src[1]), i(dst[0]), i(dst[1]))


class TestLeroux:
    def test_exchange_rates(self):
        assert _rate(leroux_model(1, 1), ("-1", "1"), ("1", "-1")) == pytest.approx(3.0)
        assert _rate(leroux_model(0, 0), ("0", "1"), ("1", "0")) == pytest.approx(1.0)

    def test_state_table(self, leroux):
        assert leroux.states == ("-1", "0", "1")
        # ξ(ω) = ω, η(ω) = 1 − |ω|
        for label, (xi, eta) in zip(leroux.states, leroux.xi):
            assert xi == int(label)
            assert eta == 1 - abs(int(label))
        assert np.allclose(leroux.base_measure, 1.0 / 3.0)

    @pytest.mark.parametrize("a,b", [(0, 0), (1, 1), (1, 2), (0.5, 3.0)])
    def test_rate_conditions_hold(self, a, b):
        model = leroux_model(a, b)
        assert validate_conservation(model).passed
        assert validate_stationarity(model).passed
        assert validate_rate_cycle(model).passed

    def test_negative_parameter(self):
        with pytest.raises(NegativeRate):
            leroux_model(-1.0, 0.0)


class TestBricklayer:
    def test_canonical_set_is_accepted(self, bricklayer_canonical):
        assert bricklayer_canonical.n_states == 4
        assert len(bricklayer_canonical.transitions["rate"]) == 4

    def test_turo_identity_enforced(self):
        with pytest.raises(ConstraintViolated) as err:
            bricklayer_model(p=1.0)
        assert err.value.identity == "c+f+p+y = d+e+q+x"
        assert err.value.lhs == 1.0
        assert err.value.rhs == 0.0

    def test_negative_parameter(self):
        with pytest.raises(NegativeRate):
            bricklayer_model(**dict(BRICKLAYER_CANONICAL, e=-1.0))

    def test_s_is_tied_to_r(self, bricklayer):
        assert _rate(bricklayer, ("0-", "1+"), ("1-", "0+")) == _rate(bricklayer, ("0+", "1-"), ("1+", "0-"))

    def test_twenty_rates_when_all_positive(self):
        model = bricklayer_model(a=1, b=1, c=1, d=1, e=1, f=1, p=1, q=1, r=1, x=1, y=1)
        assert len(model.transitions["rate"]) == 20

    def test_canonical_rate_conditions(self, bricklayer_canonical):
        assert validate_conservation(bricklayer_canonical).passed
        assert validate_stationarity(bricklayer_canonical).passed
        assert validate_rate_cycle(bricklayer_canonical).passed

    def test_mixing_set_passes_everything(self, bricklayer):
        assert all(report.passed for report in validate_all(bricklayer, n_sites=4))
        assert check_irreducibility(bricklayer, 5).passed


class TestRegistry:
    def test_builtin_defaults(self, leroux, bricklayer):
        assert builtin_model("leroux") == leroux
        assert builtin_model("bricklayer") == bricklayer
        assert builtin_parameters("bricklayer") == BRICKLAYER_MIXING

    def test_unknown_builtin(self):
        with pytest.raises(KeyError):
            builtin_model("asep")
