import pytest

from quarticity.config import parse_config
from quarticity.errors import ConfigError

MINIMAL = """
model: {volatility: {kind: constant, c: 1.0}}
sampling: {t: 1.0, n: 4096}
"""


def test_minimal_document_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg.k_n == 28
    assert cfg.seed == 0 and cfg.replications == 100
    assert cfg.sampling_spec().substeps == 1
    assert cfg.mc_config().target_span == "covered"


def test_heston_default_substeps():
    cfg = parse_config("""
model: {volatility: {kind: heston, kappa: 3, theta: 1, xi: 0.5, rho: -0.5, c0: 1}}
sampling: {t: 1.0, n: 100}
M: 7
""")
    assert cfg.sampling_spec().substeps == 10
    assert cfg.mc_config(seed=9).seed == 9
    assert cfg.replications == 7


def test_rate_condition_rejected():
    with pytest.raises(ConfigError, match="kn_rule.gamma.*rate condition"):
        parse_config(MINIMAL + "kn_rule: {gamma: 0.6}\n")


def test_missing_sections_listed():
    with pytest.raises(ConfigError) as exc:
        parse_config("")
    assert "model" in str(exc.value) and "sampling" in str(exc.value)


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="colour"):
        parse_config(MINIMAL + "colour: blue\n")


def test_unknown_estimator_rejected():
    with pytest.raises(ConfigError):
        parse_config(MINIMAL + "estimators: [RV, Foo]\n")


def test_model_invariant_reported():
    with pytest.raises(ConfigError, match="Feller"):
        parse_config("""
model: {volatility: {kind: heston, kappa: 0.1, theta: 0.1, xi: 1, rho: 0, c0: 1}}
sampling: {t: 1.0, n: 100}
""")


def test_not_a_mapping():
    with pytest.raises(ConfigError):
        parse_config("- 1\n- 2\n")
