import pytest

from gvcnet.config import GvcnetConfig, load_config, parse_config
from gvcnet.exceptions import ValidationError


def test_defaults():
    c = GvcnetConfig()
    assert (c.epochs, c.lr, c.beta, c.adam_beta1) == (600, 1e-4, 0.5, 0.9)
    assert (c.cheb_order, c.grid_B, c.demographics, c.adrf_grid) == (3, 10, "full", 65)


def test_parse_documented_keys(tmp_path):
    text = """# run settings
epochs = 20
lr = 0.001
beta = 0.25
spline_knots = 0.25, 0.5, 0.75
cheb_order = 2
grid_B = 8
demographics = age_sex
seed = 9
test_fraction = 0.2
"""
    p = tmp_path / "c.cfg"
    p.write_text(text)
    c = load_config(p)
    assert c.epochs == 20 and c.lr == 1e-3 and c.beta == 0.25
    assert c.spline_knots == (0.25, 0.5, 0.75)
    assert (c.cheb_order, c.grid_B, c.demographics, c.seed, c.test_fraction) == (2, 8, "age_sex", 9, 0.2)


def test_to_text_roundtrip():
    c = GvcnetConfig(epochs=3, spline_knots=(0.2, 0.7), cheb_hidden=(8, 4))
    assert parse_config(c.to_text()) == c


@pytest.mark.parametrize("text", ["bogus = 1", "epochs", "epochs = many", "demographics = some",
                                  "lr = 0", "grid_B = 1"])
def test_parse_errors(text):
    with pytest.raises(ValidationError):
        parse_config(text)


def test_overrides_skip_none():
    c = GvcnetConfig().with_overrides(epochs=None, lr=0.01)
    assert c.epochs == 600 and c.lr == 0.01
