import numpy as np
import pytest

from blockade_lab.config import ConfigError, ConfigFile, load_device
from blockade_lab.hamiltonian import TWO_PI

from conftest import SCENARIOS


def write(tmp_path, text, name="x.cfg"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_shipped_device(device):
    assert device.labels == ("2", "3", "4")
    assert device.chi_m[1] == pytest.approx(TWO_PI * -1.136e6)
    assert device.T1_q == pytest.approx(86e-6)
    assert device.T2_m == pytest.approx(tuple(2 * t for t in device.T1_m))
    ck = device.cross_kerr
    assert np.allclose(ck, ck.T) and np.all(np.diag(ck) == 0)
    assert ck[0, 1] == pytest.approx(TWO_PI * -19.71e3)


def test_every_shipped_scenario_parses():
    for path in SCENARIOS.glob("*.cfg"):
        cfg = ConfigFile(path)
        assert cfg.sections()


def test_typed_access(tmp_path):
    p = write(tmp_path, "[s]\nf_hz = 2e3\nn = 4\nxs = 1 2, 3\non = yes\nt_us = 5\nrel = data.csv\n")
    sec = ConfigFile(p).section("s")
    assert sec.angular("f") == pytest.approx(TWO_PI * 2e3)
    assert sec.integer("n") == 4
    assert sec.numbers("xs") == [1.0, 2.0, 3.0]
    assert sec.flag("on") and not sec.flag("off")
    assert sec.seconds("t") == pytest.approx(5e-6)
    assert sec.path_value("rel") == tmp_path / "data.csv"
    assert sec.number("missing", 1.5) == 1.5


@pytest.mark.parametrize("text,key", [
    ("[s]\nn = 2.5\n", "integer"),
    ("[s]\nn = abc\n", "number"),
    ("[s]\nn = maybe\n", "flag"),
])
def test_bad_values_name_the_key(tmp_path, text, key):
    sec = ConfigFile(write(tmp_path, text)).section("s")
    with pytest.raises(ConfigError, match=r"\[s\] n"):
        getattr(sec, key)("n")


def test_missing_key_and_section(tmp_path):
    cfg = ConfigFile(write(tmp_path, "[s]\na = 1\n"))
    with pytest.raises(ConfigError, match="missing required key"):
        cfg.section("s").text("b")
    with pytest.raises(ConfigError, match=r"missing section \[t\]"):
        cfg.section("t")
    assert cfg.section("t", required=False).raw == {}


@pytest.mark.parametrize("text,msg", [
    ("[s]\na = 1\nthis line has no separator\n", "line 3: cannot parse"),
    ("a = 1\n", "line 1: key outside"),
    ("[s]\na = 1\na = 2\n", "line 3: duplicate key 'a'"),
    ("[s]\n[t]\n[s]\n", r"line 3: duplicate section \[s\]"),
])
def test_syntax_error_reports_line(tmp_path, text, msg):
    with pytest.raises(ConfigError, match=msg):
        ConfigFile(write(tmp_path, text))


def test_missing_file(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        ConfigFile(tmp_path / "nope.cfg")


DEVICE = """[device]
modes = a b
omega_q_hz = 5e9
T1_q_us = 80
T2_q_us = 60
[mode a]
omega_hz = 6e9
chi_hz = -1e6
T1_us = 1000
[mode b]
omega_hz = 6.5e9
chi_hz = -0.8e6
T1_us = 1000
T2_us = 1500
"""


def test_device_defaults(tmp_path):
    p = load_device(write(tmp_path, DEVICE))
    assert p.kerr_m == (0.0, 0.0) and p.nth_q == 0.0
    assert np.all(p.cross_kerr == 0)
    assert p.T2_m[1] == pytest.approx(1.5e-3)


@pytest.mark.parametrize("extra,msg", [
    ("[cross_kerr]\na_c_hz = -1e3\n", "unknown mode pair"),
    ("[cross_kerr]\na_a_hz = -1e3\n", "unknown mode pair"),
    ("[cross_kerr]\nab = -1e3\n", "A_B_hz"),
])
def test_device_cross_kerr_errors(tmp_path, extra, msg):
    with pytest.raises(ConfigError, match=msg):
        load_device(write(tmp_path, DEVICE + extra))


def test_device_missing_mode_section(tmp_path):
    with pytest.raises(ConfigError, match=r"\[mode c\]"):
        load_device(write(tmp_path, DEVICE.replace("modes = a b", "modes = a b c")))


def test_device_invalid_coherence(tmp_path):
    with pytest.raises(ConfigError):
        load_device(write(tmp_path, DEVICE.replace("T2_q_us = 60", "T2_q_us = 200")))
